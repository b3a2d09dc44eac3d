"""Pure-Python network simplex, the fallback for ``_simplex_ext``.

Mirrors the compiled kernel statement for statement (same pricing order,
same tie breaks, same floating point operation order) so that either
backend produces bit-identical flows and potentials.
"""

import math

import numpy as np

INF = 1e300
UP = 1
DOWN = -1


class _Tree:
    def __init__(self, n, m, src, dst, cost):
        E = len(src)
        self.n = n
        self.m = m
        self.root = n + m
        self.nnodes = n + m + 1
        self.nreal = E
        self.narcs = E + n + m
        self.asrc = [int(s) for s in src] + list(range(n + m))
        self.atgt = [n + int(d) for d in dst] + [self.root] * (n + m)
        self.acost = [float(c) for c in cost] + [0.0] * (n + m)
        self.flow = [0.0] * self.narcs
        self.intree = [0] * self.narcs
        N = self.nnodes
        self.parent = [-1] * N
        self.pred = [-1] * N
        self.pdir = [0] * N
        self.depth = [0] * N
        self.thr = [0] * N
        self.rthr = [0] * N
        self.pos = [0] * N
        self.pi = [0.0] * N
        self.phase = 0

    def init_greedy(self, supply, demand, order, big):
        n, m, E, R = self.n, self.m, self.nreal, self.root
        asrc, atgt, flow = self.asrc, self.atgt, self.flow
        rem = [float(s) for s in supply] + [float(d) for d in demand]
        basic = []
        for e in order:
            i = asrc[e]
            v = atgt[e]
            if rem[i] > 0.0 and rem[v] > 0.0:
                f = rem[i] if rem[i] < rem[v] else rem[v]
                flow[e] = f
                rem[i] -= f
                rem[v] -= f
                self.intree[e] = 1
                basic.append(e)
        adj = [[] for _ in range(n + m)]
        for e in basic:
            adj[asrc[e]].append(e)
            adj[atgt[e]].append(e)
        comp = [-1] * (n + m)
        anchors = []
        for v in range(n + m):
            if comp[v] >= 0:
                continue
            anchor = -1
            stack = [v]
            comp[v] = len(anchors)
            head = 0
            while head < len(stack):
                x = stack[head]
                head += 1
                if rem[x] > 0.0:
                    anchor = x
                for e in adj[x]:
                    y = asrc[e] if asrc[e] != x else atgt[e]
                    if comp[y] < 0:
                        comp[y] = len(anchors)
                        stack.append(y)
            if anchor < 0:
                anchor = v
                for y in stack:
                    if y >= n:
                        anchor = y
                        break
            anchors.append(anchor)
        for v in range(n + m):
            a = E + v
            self.acost[a] = big
            if v < n and rem[v] > 0.0:
                asrc[a] = v
                atgt[a] = R
                flow[a] = rem[v]
            else:
                asrc[a] = R
                atgt[a] = v
                flow[a] = rem[v] if rem[v] > 0.0 else 0.0
        self.parent[R] = -1
        self.pred[R] = -1
        self.depth[R] = 0
        self.pi[R] = 0.0
        seen = [False] * (n + m)
        prev = R
        for anchor in anchors:
            a = E + anchor
            self.intree[a] = 1
            self.parent[anchor] = R
            self.pred[anchor] = a
            self.pdir[anchor] = UP if asrc[a] == anchor else DOWN
            stack = [anchor]
            seen[anchor] = True
            while stack:
                x = stack.pop()
                self.depth[x] = self.depth[self.parent[x]] + 1
                self._set_pi(x)
                self.thr[prev] = x
                self.rthr[x] = prev
                prev = x
                for e in reversed(adj[x]):
                    y = asrc[e] if asrc[e] != x else atgt[e]
                    if not seen[y]:
                        seen[y] = True
                        self.parent[y] = x
                        self.pred[y] = e
                        self.pdir[y] = UP if asrc[e] == y else DOWN
                        stack.append(y)
        self.thr[prev] = R
        self.rthr[R] = prev

    def _set_pi(self, x):
        e = self.pred[x]
        if self.pdir[x] == UP:
            self.pi[x] = self.pi[self.parent[x]] - self.acost[e]
        else:
            self.pi[x] = self.pi[self.parent[x]] + self.acost[e]

    def recompute_potentials(self):
        x = self.thr[self.root]
        while x != self.root:
            self._set_pi(x)
            x = self.thr[x]

    def rc(self, e):
        return self.acost[e] + self.pi[self.asrc[e]] - self.pi[self.atgt[e]]

    def find_join(self, u, v):
        depth, parent = self.depth, self.parent
        while u != v:
            if depth[u] > depth[v]:
                u = parent[u]
            elif depth[v] > depth[u]:
                v = parent[v]
            else:
                u = parent[u]
                v = parent[v]
        return u

    def room(self, x, increase):
        e = self.pred[x]
        if e >= self.nreal and self.phase == 1:
            return 0.0
        if increase:
            return INF
        return self.flow[e]

    def pivot(self, e_in):
        first, second = self.asrc[e_in], self.atgt[e_in]
        join = self.find_join(first, second)
        delta = INF
        u_out, side = -1, 0
        x = first
        while x != join:
            d = self.room(x, self.pdir[x] == DOWN)
            if d < delta:
                delta, u_out, side = d, x, 1
            x = self.parent[x]
        x = second
        while x != join:
            d = self.room(x, self.pdir[x] == UP)
            if d <= delta:
                delta, u_out, side = d, x, 2
            x = self.parent[x]
        if u_out < 0:
            return -1
        if delta > 0.0:
            flow, pred, pdir = self.flow, self.pred, self.pdir
            flow[e_in] += delta
            x = first
            while x != join:
                flow[pred[x]] -= pdir[x] * delta
                x = self.parent[x]
            x = second
            while x != join:
                flow[pred[x]] += pdir[x] * delta
                x = self.parent[x]
        if side == 1:
            self.update_tree(e_in, first, second, u_out)
        else:
            self.update_tree(e_in, second, first, u_out)
        return 1 if delta == 0.0 else 0

    def update_tree(self, e_in, u_in, v_in, u_out):
        depth, thr, rthr, parent = self.depth, self.thr, self.rthr, self.parent
        pos = self.pos
        self.intree[e_in] = 1
        self.intree[self.pred[u_out]] = 0
        dlim = depth[u_out]
        buf = []
        x = u_out
        while True:
            pos[x] = len(buf)
            buf.append(x)
            x = thr[x]
            if depth[x] <= dlim:
                break
        after = x
        before = rthr[u_out]
        cnt = len(buf)
        path = []
        x = u_in
        while True:
            path.append(x)
            if x == u_out:
                break
            x = parent[x]
        start_t = pos[path[0]]
        end_t = start_t + 1
        while end_t < cnt and depth[buf[end_t]] > depth[path[0]]:
            end_t += 1
        buf2 = buf[start_t:end_t]
        for w in path[1:]:
            start_prev, end_prev = start_t, end_t
            start_t = pos[w]
            end_t = end_prev
            while end_t < cnt and depth[buf[end_t]] > depth[w]:
                end_t += 1
            buf2.extend(buf[start_t:start_prev])
            buf2.extend(buf[end_prev:end_t])
        prev_node = v_in
        prev_arc = e_in
        prev_dir = UP if self.asrc[e_in] == u_in else DOWN
        for w in path:
            old_arc, old_dir = self.pred[w], self.pdir[w]
            parent[w] = prev_node
            self.pred[w] = prev_arc
            self.pdir[w] = prev_dir
            prev_node, prev_arc, prev_dir = w, old_arc, -old_dir
        thr[before] = after
        rthr[after] = before
        nxt = thr[v_in]
        thr[v_in] = buf2[0]
        rthr[buf2[0]] = v_in
        for s in range(len(buf2) - 1):
            thr[buf2[s]] = buf2[s + 1]
            rthr[buf2[s + 1]] = buf2[s]
        thr[buf2[-1]] = nxt
        rthr[nxt] = buf2[-1]
        for x in buf2:
            depth[x] = depth[parent[x]] + 1
            self._set_pi(x)

    def artificial_flow(self):
        total = 0.0
        for a in range(self.nreal, self.narcs):
            total += self.flow[a]
        return total


def _run(T, pricing, block, max_iter, bland_after, tol, counters):
    E = T.nreal
    next_arc = 0
    consec = 0
    bland = False
    if E == 0:
        return 0
    intree = T.intree
    while True:
        best = -1
        best_rc = -tol
        if bland:
            for e in range(E):
                if not intree[e] and T.rc(e) < -tol:
                    best = e
                    break
        elif pricing == 1:
            for e in range(E):
                if not intree[e]:
                    r = T.rc(e)
                    if r < best_rc:
                        best_rc, best = r, e
        else:
            scanned = 0
            left = block
            e = next_arc
            acost, asrc, atgt, pi = T.acost, T.asrc, T.atgt, T.pi
            while scanned < E:
                if not intree[e]:
                    r = acost[e] + pi[asrc[e]] - pi[atgt[e]]
                    if r < best_rc:
                        best_rc, best = r, e
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
        if counters[0] >= max_iter:
            return 2
        res = T.pivot(best)
        if res < 0:
            return 3
        counters[0] += 1
        if res == 1:
            counters[1] += 1
            consec += 1
            if bland_after > 0 and consec >= bland_after:
                bland = True
        else:
            consec = 0
            bland = False


def network_simplex(n, m, src, dst, cost, supply, demand, order,
                    pricing=0, block_size=0, max_iter=10000000,
                    bland_after=0, tol=-1.0, feas_tol=1e-11):
    """Solve min sum c*f over the arc list subject to exact marginals.

    Returns ``(flow, u, v, status, iterations, degenerate, residual)`` with
    status 0 optimal, 1 infeasible, 2 iteration limit, 3 unbounded.
    """
    E = len(src)
    cost = [float(c) for c in np.asarray(cost, dtype=np.float64)]
    cmax = 0.0
    for c in cost:
        if abs(c) > cmax:
            cmax = abs(c)
    if tol < 0:
        tol = 1e-12 * (cmax if cmax > 1.0 else 1.0)
    if block_size <= 0:
        block_size = max(int(math.sqrt(float(E))), 10)
    big = 10.0 * (cmax + 1.0)
    big_cap = (n + m + 2.0) * (cmax + 1.0)
    T = _Tree(n, m, np.asarray(src).tolist(), np.asarray(dst).tolist(), cost)
    T.init_greedy(np.asarray(supply, dtype=np.float64).tolist(),
                  np.asarray(demand, dtype=np.float64).tolist(),
                  np.asarray(order).tolist(), big)
    counters = [0, 0]
    resid = 0.0
    while True:
        status = _run(T, pricing, block_size, max_iter, bland_after, tol, counters)
        if status != 0:
            break
        resid = T.artificial_flow()
        if resid <= feas_tol:
            break
        if big >= big_cap:
            status = 1
            break
        big = min(big * 16.0, big_cap)
        for e in range(E, T.narcs):
            T.acost[e] = big
        T.recompute_potentials()
    if status == 0:
        T.phase = 1
        for e in range(E, T.narcs):
            T.acost[e] = 0.0
            T.flow[e] = 0.0
        T.recompute_potentials()
        status = _run(T, pricing, block_size, max_iter, bland_after, tol, counters)
    if status != 0:
        resid = T.artificial_flow()
    flow = np.array(T.flow[:E], dtype=np.float64)
    pi = np.array(T.pi, dtype=np.float64)
    return flow, -pi[:n], pi[n:n + m].copy(), status, counters[0], counters[1], resid
