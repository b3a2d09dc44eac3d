# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled network simplex for the bipartite transportation problem.

Must stay in lock-step with ``_simplex_py.py``: same pivots, same floating
point operation order, so both backends return bit-identical flows.
"""

cimport cython
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs

cnp.import_array()

cdef double INF = 1e300

cdef enum:
    UP = 1
    DOWN = -1


@cython.final
cdef class _Tree:
    cdef public int n, m, root, nnodes, narcs, nreal
    cdef int[::1] asrc, atgt, parent, pred, pdir, depth, thr, rthr, buf, buf2, pos, path
    cdef double[::1] acost, flow, pi
    cdef char[::1] intree
    cdef int phase

    def __init__(self, int n, int m, int[::1] src, int[::1] dst, double[::1] cost):
        cdef int E = src.shape[0], e, v
        self.n = n
        self.m = m
        self.root = n + m
        self.nnodes = n + m + 1
        self.nreal = E
        self.narcs = E + n + m
        self.asrc = np.empty(self.narcs, dtype=np.int32)
        self.atgt = np.empty(self.narcs, dtype=np.int32)
        self.acost = np.zeros(self.narcs, dtype=np.float64)
        self.flow = np.zeros(self.narcs, dtype=np.float64)
        self.intree = np.zeros(self.narcs, dtype=np.int8)
        for e in range(E):
            self.asrc[e] = src[e]
            self.atgt[e] = n + dst[e]
            self.acost[e] = cost[e]
        for v in range(n + m):
            self.asrc[E + v] = v
            self.atgt[E + v] = self.root
        self.parent = np.full(self.nnodes, -1, dtype=np.int32)
        self.pred = np.full(self.nnodes, -1, dtype=np.int32)
        self.pdir = np.zeros(self.nnodes, dtype=np.int32)
        self.depth = np.zeros(self.nnodes, dtype=np.int32)
        self.thr = np.zeros(self.nnodes, dtype=np.int32)
        self.rthr = np.zeros(self.nnodes, dtype=np.int32)
        self.buf = np.zeros(self.nnodes, dtype=np.int32)
        self.buf2 = np.zeros(self.nnodes, dtype=np.int32)
        self.pos = np.zeros(self.nnodes, dtype=np.int32)
        self.path = np.zeros(self.nnodes, dtype=np.int32)
        self.pi = np.zeros(self.nnodes, dtype=np.float64)
        self.phase = 0

    cdef void init_greedy(self, double[::1] supply, double[::1] demand,
                          int[::1] order, double big):
        """Greedy start in ``order``; positive assignments form a forest."""
        cdef int n = self.n, m = self.m, E = self.nreal, R = self.root
        cdef int k, e, i, j, v, x, y, a, head, tail, cnt, anchor, prev
        cdef double f
        cdef double[::1] rem = np.empty(n + m, dtype=np.float64)
        for i in range(n):
            rem[i] = supply[i]
        for j in range(m):
            rem[n + j] = demand[j]
        cdef int nb = 0
        cdef int[::1] basic = np.empty(n + m, dtype=np.int32)
        for k in range(E):
            e = order[k]
            i = self.asrc[e]
            v = self.atgt[e]
            if rem[i] > 0.0 and rem[v] > 0.0:
                f = rem[i] if rem[i] < rem[v] else rem[v]
                self.flow[e] = f
                rem[i] -= f
                rem[v] -= f
                self.intree[e] = 1
                basic[nb] = e
                nb += 1
        # forest adjacency (CSR)
        cdef int[::1] deg = np.zeros(n + m + 1, dtype=np.int32)
        cdef int[::1] adj = np.empty(2 * nb + 1, dtype=np.int32)
        for k in range(nb):
            e = basic[k]
            deg[self.asrc[e] + 1] += 1
            deg[self.atgt[e] + 1] += 1
        for v in range(n + m):
            deg[v + 1] += deg[v]
        cdef int[::1] fill = np.empty(n + m, dtype=np.int32)
        for v in range(n + m):
            fill[v] = deg[v]
        for k in range(nb):
            e = basic[k]
            adj[fill[self.asrc[e]]] = e
            fill[self.asrc[e]] += 1
            adj[fill[self.atgt[e]]] = e
            fill[self.atgt[e]] += 1
        # component labelling, anchor = the single node with residual if any
        cdef int[::1] comp = np.full(n + m, -1, dtype=np.int32)
        cdef int[::1] stack = np.empty(n + m, dtype=np.int32)
        cdef int[::1] anchors = np.empty(n + m, dtype=np.int32)
        cdef int ncomp = 0
        for v in range(n + m):
            if comp[v] >= 0:
                continue
            anchor = -1
            cnt = 0
            stack[cnt] = v
            cnt += 1
            comp[v] = ncomp
            head = 0
            while head < cnt:
                x = stack[head]
                head += 1
                if rem[x] > 0.0:
                    anchor = x
                for k in range(deg[x], deg[x + 1]):
                    e = adj[k]
                    y = self.asrc[e] if self.asrc[e] != x else self.atgt[e]
                    if comp[y] < 0:
                        comp[y] = ncomp
                        stack[cnt] = y
                        cnt += 1
            if anchor < 0:
                # exhausted component: hang it from a sink so the zero-flow
                # artificial arc points away from the root
                anchor = v
                for k in range(cnt):
                    if stack[k] >= n:
                        anchor = stack[k]
                        break
            anchors[ncomp] = anchor
            ncomp += 1
        # artificial arcs: sources drain into the root, sinks draw from it
        for v in range(n + m):
            a = E + v
            self.acost[a] = big
            if v < n and rem[v] > 0.0:
                self.asrc[a] = v
                self.atgt[a] = R
                self.flow[a] = rem[v]
            else:
                self.asrc[a] = R
                self.atgt[a] = v
                self.flow[a] = rem[v] if rem[v] > 0.0 else 0.0
        # build tree structure: root, then each component in DFS preorder
        self.parent[R] = -1
        self.pred[R] = -1
        self.depth[R] = 0
        self.pi[R] = 0.0
        cdef char[::1] seen = np.zeros(n + m, dtype=np.int8)
        prev = R
        for k in range(ncomp):
            anchor = anchors[k]
            a = E + anchor
            self.intree[a] = 1
            self.parent[anchor] = R
            self.pred[anchor] = a
            self.pdir[anchor] = UP if self.asrc[a] == anchor else DOWN
            cnt = 0
            stack[cnt] = anchor
            cnt += 1
            seen[anchor] = 1
            while cnt > 0:
                cnt -= 1
                x = stack[cnt]
                self.depth[x] = self.depth[self.parent[x]] + 1
                self._set_pi(x)
                self.thr[prev] = x
                self.rthr[x] = prev
                prev = x
                for j in range(deg[x + 1] - 1, deg[x] - 1, -1):
                    e = adj[j]
                    y = self.asrc[e] if self.asrc[e] != x else self.atgt[e]
                    if not seen[y]:
                        seen[y] = 1
                        self.parent[y] = x
                        self.pred[y] = e
                        self.pdir[y] = UP if self.asrc[e] == y else DOWN
                        stack[cnt] = y
                        cnt += 1
        self.thr[prev] = R
        self.rthr[R] = prev

    cdef inline void _set_pi(self, int x):
        cdef int e = self.pred[x]
        if self.pdir[x] == UP:
            self.pi[x] = self.pi[self.parent[x]] - self.acost[e]
        else:
            self.pi[x] = self.pi[self.parent[x]] + self.acost[e]

    cdef void recompute_potentials(self):
        cdef int x = self.thr[self.root]
        while x != self.root:
            self._set_pi(x)
            x = self.thr[x]

    cdef inline double rc(self, int e):
        return self.acost[e] + self.pi[self.asrc[e]] - self.pi[self.atgt[e]]

    cdef int find_join(self, int u, int v):
        while u != v:
            if self.depth[u] > self.depth[v]:
                u = self.parent[u]
            elif self.depth[v] > self.depth[u]:
                v = self.parent[v]
            else:
                u = self.parent[u]
                v = self.parent[v]
        return u

    cdef inline double room(self, int x, int increase):
        # admissible change of the tree arc above x along the cycle
        cdef int e = self.pred[x]
        if e >= self.nreal and self.phase == 1:
            return 0.0
        if increase:
            return INF
        return self.flow[e]

    cdef int pivot(self, int e_in, double* out_delta):
        """One pivot on entering arc ``e_in``; returns 1 if degenerate."""
        cdef int first = self.asrc[e_in], second = self.atgt[e_in]
        cdef int join = self.find_join(first, second)
        cdef double delta = INF, d
        cdef int u_out = -1, side = 0, x
        x = first
        while x != join:
            d = self.room(x, self.pdir[x] == DOWN)
            if d < delta:
                delta = d
                u_out = x
                side = 1
            x = self.parent[x]
        x = second
        while x != join:
            d = self.room(x, self.pdir[x] == UP)
            if d <= delta:
                delta = d
                u_out = x
                side = 2
            x = self.parent[x]
        out_delta[0] = delta
        if u_out < 0:
            return -1
        if delta > 0.0:
            self.flow[e_in] += delta
            x = first
            while x != join:
                self.flow[self.pred[x]] -= self.pdir[x] * delta
                x = self.parent[x]
            x = second
            while x != join:
                self.flow[self.pred[x]] += self.pdir[x] * delta
                x = self.parent[x]
        if side == 1:
            self.update_tree(e_in, first, second, u_out)
        else:
            self.update_tree(e_in, second, first, u_out)
        return 1 if delta == 0.0 else 0

    cdef void update_tree(self, int e_in, int u_in, int v_in, int u_out):
        cdef int cnt = 0, x, dlim = self.depth[u_out], before, after
        cdef int k = 0, t, s, nxt, c2 = 0, w
        cdef int start_prev, end_prev, start_t, end_t
        cdef int prev_node, prev_arc, prev_dir, old_parent, old_arc, old_dir
        self.intree[e_in] = 1
        self.intree[self.pred[u_out]] = 0
        # old preorder of the detached subtree
        x = u_out
        while True:
            self.pos[x] = cnt
            self.buf[cnt] = x
            cnt += 1
            x = self.thr[x]
            if self.depth[x] <= dlim:
                break
        after = x
        before = self.rthr[u_out]
        # path u_in -> u_out
        x = u_in
        while True:
            self.path[k] = x
            k += 1
            if x == u_out:
                break
            x = self.parent[x]
        # new preorder: subtree(w0), then subtree(w_t) minus subtree(w_{t-1})
        start_t = self.pos[self.path[0]]
        end_t = start_t + 1
        while end_t < cnt and self.depth[self.buf[end_t]] > self.depth[self.path[0]]:
            end_t += 1
        for s in range(start_t, end_t):
            self.buf2[c2] = self.buf[s]
            c2 += 1
        for t in range(1, k):
            start_prev = start_t
            end_prev = end_t
            w = self.path[t]
            start_t = self.pos[w]
            end_t = end_prev
            while end_t < cnt and self.depth[self.buf[end_t]] > self.depth[w]:
                end_t += 1
            for s in range(start_t, start_prev):
                self.buf2[c2] = self.buf[s]
                c2 += 1
            for s in range(end_prev, end_t):
                self.buf2[c2] = self.buf[s]
                c2 += 1
        # reverse parent links along the path
        prev_node = v_in
        prev_arc = e_in
        prev_dir = UP if self.asrc[e_in] == u_in else DOWN
        for t in range(k):
            w = self.path[t]
            old_parent = self.parent[w]
            old_arc = self.pred[w]
            old_dir = self.pdir[w]
            self.parent[w] = prev_node
            self.pred[w] = prev_arc
            self.pdir[w] = prev_dir
            prev_node = w
            prev_arc = old_arc
            prev_dir = -old_dir
        # splice the thread
        self.thr[before] = after
        self.rthr[after] = before
        nxt = self.thr[v_in]
        self.thr[v_in] = self.buf2[0]
        self.rthr[self.buf2[0]] = v_in
        for s in range(c2 - 1):
            self.thr[self.buf2[s]] = self.buf2[s + 1]
            self.rthr[self.buf2[s + 1]] = self.buf2[s]
        self.thr[self.buf2[c2 - 1]] = nxt
        self.rthr[nxt] = self.buf2[c2 - 1]
        for s in range(c2):
            x = self.buf2[s]
            self.depth[x] = self.depth[self.parent[x]] + 1
            self._set_pi(x)

    cdef double artificial_flow(self):
        cdef double total = 0.0
        cdef int a
        for a in range(self.nreal, self.narcs):
            total += self.flow[a]
        return total


cdef long _run(_Tree T, int pricing, long block, long max_iter, long bland_after,
               double tol, long* n_iter, long* n_degen):
    """Pivot until no arc prices below ``-tol``. Returns 0 ok, 2 iteration cap, 3 unbounded."""
    cdef long E = T.nreal, scanned, left, next_arc = 0, consec = 0
    cdef int e, best, res
    cdef double r, best_rc, delta
    cdef int bland = 0
    if E == 0:
        return 0
    while True:
        best = -1
        best_rc = -tol
        if bland:
            for e in range(E):
                if not T.intree[e] and T.rc(e) < -tol:
                    best = e
                    break
        elif pricing == 1:
            for e in range(E):
                if not T.intree[e]:
                    r = T.rc(e)
                    if r < best_rc:
                        best_rc = r
                        best = e
        else:
            scanned = 0
            left = block
            e = next_arc
            while scanned < E:
                if not T.intree[e]:
                    r = T.rc(e)
                    if r < best_rc:
                        best_rc = r
                        best = e
                e += 1
                if e == E:
                    e = 0
                scanned += 1
                left -= 1
                if left == 0:
                    if best >= 0:
                        break
                    left = block
            next_arc = e
        if best < 0:
            return 0
        if n_iter[0] >= max_iter:
            return 2
        res = T.pivot(best, &delta)
        if res < 0:
            return 3
        n_iter[0] += 1
        if res == 1:
            n_degen[0] += 1
            consec += 1
            if bland_after > 0 and consec >= bland_after:
                bland = 1
        else:
            consec = 0
            bland = 0


def network_simplex(int n, int m, src, dst, cost, supply, demand, order,
                    int pricing=0, long block_size=0, long max_iter=10000000,
                    long bland_after=0, double tol=-1.0, double feas_tol=1e-11):
    """Solve min sum c*f over the arc list subject to exact marginals.

    Returns ``(flow, u, v, status, iterations, degenerate, residual)`` with
    status 0 optimal, 1 infeasible, 2 iteration limit, 3 unbounded.
    """
    cdef int[::1] s = np.ascontiguousarray(src, dtype=np.int32)
    cdef int[::1] d = np.ascontiguousarray(dst, dtype=np.int32)
    cdef double[::1] c = np.ascontiguousarray(cost, dtype=np.float64)
    cdef double[::1] a = np.ascontiguousarray(supply, dtype=np.float64)
    cdef double[::1] b = np.ascontiguousarray(demand, dtype=np.float64)
    cdef int[::1] o = np.ascontiguousarray(order, dtype=np.int32)
    cdef long E = s.shape[0], e
    cdef double cmax = 0.0, big, big_cap, resid
    cdef long n_iter = 0, n_degen = 0
    cdef int status, x
    for e in range(E):
        if fabs(c[e]) > cmax:
            cmax = fabs(c[e])
    if tol < 0:
        tol = 1e-12 * (cmax if cmax > 1.0 else 1.0)
    if block_size <= 0:
        block_size = <long>sqrt(<double>E)
        if block_size < 10:
            block_size = 10
    big = 10.0 * (cmax + 1.0)
    big_cap = (n + m + 2.0) * (cmax + 1.0)
    T = _Tree(n, m, s, d, c)
    T.init_greedy(a, b, o, big)
    while True:
        status = _run(T, pricing, block_size, max_iter, bland_after, tol, &n_iter, &n_degen)
        if status != 0:
            break
        resid = T.artificial_flow()
        if resid <= feas_tol:
            break
        if big >= big_cap:
            status = 1
            break
        big = big * 16.0
        if big > big_cap:
            big = big_cap
        for e in range(E, T.narcs):
            T.acost[e] = big
        T.recompute_potentials()
    if status == 0:
        # polish: pin artificial arcs at zero with zero cost for clean duals
        T.phase = 1
        for e in range(E, T.narcs):
            T.acost[e] = 0.0
            T.flow[e] = 0.0
        T.recompute_potentials()
        status = _run(T, pricing, block_size, max_iter, bland_after, tol, &n_iter, &n_degen)
    resid = T.artificial_flow() if status != 0 else resid
    flow = np.asarray(T.flow[:E]).copy()
    pi = np.asarray(T.pi)
    u = -pi[:n].copy()
    v = pi[n:n + m].copy()
    return flow, u, v, status, n_iter, n_degen, resid
