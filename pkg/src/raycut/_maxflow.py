"""Numba kernels for max-flow/min-cut on a paired-arc CSR residual graph.

Arc storage: directed arcs come in pairs, forward arc 2i and its reverse
2i + 1, so rev(a) == a ^ 1. Arc a leaves arc_to[a ^ 1] and enters arc_to[a].
Capacities are float64; math.inf is the symbolic INF capacity (IEEE
saturation keeps inf - finite == inf, so INF arcs can never be saturated).
An augmenting path with infinite bottleneck means no finite cut exists.
"""

import numpy as np
from numba import njit

STATUS_OK = 0
STATUS_INFEASIBLE = 1

_FREE = 0
_TREE_S = 1
_TREE_T = 2
_PARENT_NONE = -1
_PARENT_ROOT = -2


def build_csr(tails, heads, caps, node_count):
    """Paired residual arcs + CSR adjacency. s = node_count, t = node_count + 1."""
    m = tails.size
    n = node_count + 2
    arc_to = np.empty(2 * m, dtype=np.int64)
    arc_to[0::2] = heads
    arc_to[1::2] = tails
    res = np.zeros(2 * m, dtype=np.float64)
    res[0::2] = caps
    arc_tail = np.empty(2 * m, dtype=np.int64)
    arc_tail[0::2] = tails
    arc_tail[1::2] = heads
    order = np.argsort(arc_tail, kind="stable").astype(np.int64)
    counts = np.bincount(arc_tail, minlength=n)
    adj_ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=adj_ptr[1:])
    return adj_ptr, order, arc_to, res


@njit(cache=True)
def bfs_maxflow(adj_ptr, adj_arc, arc_to, res, s, t):
    """Edmonds-Karp: shortest augmenting paths. Fallback / differential solver."""
    n = adj_ptr.size - 1
    parent_arc = np.full(n, -1, dtype=np.int64)
    visited = np.zeros(n, dtype=np.uint8)
    queue = np.empty(n, dtype=np.int64)
    flow = 0.0
    while True:
        for i in range(n):
            visited[i] = 0
        qh = 0
        qt = 0
        queue[qt] = s
        qt += 1
        visited[s] = 1
        found = False
        while qh < qt and not found:
            u = queue[qh]
            qh += 1
            for ii in range(adj_ptr[u], adj_ptr[u + 1]):
                a = adj_arc[ii]
                if res[a] > 0.0:
                    v = arc_to[a]
                    if visited[v] == 0:
                        visited[v] = 1
                        parent_arc[v] = a
                        if v == t:
                            found = True
                            break
                        queue[qt] = v
                        qt += 1
        if not found:
            return flow, STATUS_OK
        bott = np.inf
        v = t
        while v != s:
            a = parent_arc[v]
            if res[a] < bott:
                bott = res[a]
            v = arc_to[a ^ 1]
        if bott == np.inf:
            return flow, STATUS_INFEASIBLE
        v = t
        while v != s:
            a = parent_arc[v]
            res[a] -= bott
            res[a ^ 1] += bott
            v = arc_to[a ^ 1]
        flow += bott


@njit(cache=True, inline="always")
def _parent_node(parent_arc_v, tree_v, arc_to):
    # S-tree stores the arc (p -> v), T-tree stores (v -> p)
    if tree_v == _TREE_S:
        return arc_to[parent_arc_v ^ 1]
    return arc_to[parent_arc_v]


@njit(cache=True)
def _origin_valid(w, side, parent_arc, tree, arc_to, dist, ts, time):
    """Walk to the root; True iff w hangs off s/t. Caches dist/ts along the path."""
    cur = w
    steps = 0
    base = np.int64(0)
    while True:
        if ts[cur] == time:
            base = dist[cur]
            break
        pa = parent_arc[cur]
        if pa == _PARENT_ROOT:
            base = np.int64(0)
            break
        if pa == _PARENT_NONE:
            return False
        cur = _parent_node(pa, side, arc_to)
        steps += 1
    stop = cur
    cur = w
    d = base + steps
    while cur != stop:
        dist[cur] = d
        ts[cur] = time
        d -= 1
        cur = _parent_node(parent_arc[cur], side, arc_to)
    return True


@njit(cache=True)
def bk_maxflow(adj_ptr, adj_arc, arc_to, res, s, t):
    """Boykov-Kolmogorov augmenting trees: grow / augment / adopt."""
    n = adj_ptr.size - 1
    tree = np.zeros(n, dtype=np.int8)
    parent_arc = np.full(n, _PARENT_NONE, dtype=np.int64)
    dist = np.zeros(n, dtype=np.int64)
    ts = np.zeros(n, dtype=np.int64)

    cap_active = 64
    active = np.empty(cap_active, dtype=np.int64)
    a_head = 0
    a_tail = 0
    cap_orph = 64
    orphans = np.empty(cap_orph, dtype=np.int64)
    o_top = 0

    tree[s] = _TREE_S
    tree[t] = _TREE_T
    parent_arc[s] = _PARENT_ROOT
    parent_arc[t] = _PARENT_ROOT
    active[0] = s
    active[1] = t
    a_tail = 2

    flow = 0.0
    time = np.int64(1)
    ts[s] = time
    ts[t] = time

    while True:
        # -- grow --
        conn = np.int64(-1)
        while a_head < a_tail:
            u = active[a_head]
            if tree[u] == _FREE:
                a_head += 1
                continue
            side = tree[u]
            found = False
            for ii in range(adj_ptr[u], adj_ptr[u + 1]):
                a = adj_arc[ii]
                if side == _TREE_S:
                    if res[a] <= 0.0:
                        continue
                    v = arc_to[a]
                    if tree[v] == _FREE:
                        tree[v] = _TREE_S
                        parent_arc[v] = a
                        dist[v] = dist[u] + 1
                        ts[v] = ts[u]
                        if a_tail == cap_active:
                            active = np.concatenate(
                                (active[a_head:a_tail],
                                 np.empty(cap_active, dtype=np.int64)))
                            a_tail -= a_head
                            a_head = 0
                            cap_active = active.size
                        active[a_tail] = v
                        a_tail += 1
                    elif tree[v] == _TREE_T:
                        conn = a
                        found = True
                        break
                    elif ts[v] <= ts[u] and dist[v] > dist[u] + 1:
                        parent_arc[v] = a
                        dist[v] = dist[u] + 1
                        ts[v] = ts[u]
                else:
                    if res[a ^ 1] <= 0.0:
                        continue
                    v = arc_to[a]
                    if tree[v] == _FREE:
                        tree[v] = _TREE_T
                        parent_arc[v] = a ^ 1
                        dist[v] = dist[u] + 1
                        ts[v] = ts[u]
                        if a_tail == cap_active:
                            active = np.concatenate(
                                (active[a_head:a_tail],
                                 np.empty(cap_active, dtype=np.int64)))
                            a_tail -= a_head
                            a_head = 0
                            cap_active = active.size
                        active[a_tail] = v
                        a_tail += 1
                    elif tree[v] == _TREE_S:
                        conn = a ^ 1
                        found = True
                        break
                    elif ts[v] <= ts[u] and dist[v] > dist[u] + 1:
                        parent_arc[v] = a ^ 1
                        dist[v] = dist[u] + 1
                        ts[v] = ts[u]
            if found:
                break
            a_head += 1
        if conn < 0:
            return flow, STATUS_OK

        time += 1
        ts[s] = time
        ts[t] = time
        dist[s] = 0
        dist[t] = 0

        # -- augment along s ... conn ... t --
        bott = res[conn]
        u = arc_to[conn ^ 1]
        while parent_arc[u] != _PARENT_ROOT:
            a = parent_arc[u]
            if res[a] < bott:
                bott = res[a]
            u = arc_to[a ^ 1]
        v = arc_to[conn]
        while parent_arc[v] != _PARENT_ROOT:
            a = parent_arc[v]
            if res[a] < bott:
                bott = res[a]
            v = arc_to[a]
        if bott == np.inf:
            return flow, STATUS_INFEASIBLE

        res[conn] -= bott
        res[conn ^ 1] += bott
        u = arc_to[conn ^ 1]
        while parent_arc[u] != _PARENT_ROOT:
            a = parent_arc[u]
            res[a] -= bott
            res[a ^ 1] += bott
            nxt = arc_to[a ^ 1]
            if res[a] == 0.0:
                parent_arc[u] = _PARENT_NONE
                if o_top == cap_orph:
                    orphans = np.concatenate(
                        (orphans, np.empty(cap_orph, dtype=np.int64)))
                    cap_orph = orphans.size
                orphans[o_top] = u
                o_top += 1
            u = nxt
        v = arc_to[conn]
        while parent_arc[v] != _PARENT_ROOT:
            a = parent_arc[v]
            res[a] -= bott
            res[a ^ 1] += bott
            nxt = arc_to[a]
            if res[a] == 0.0:
                parent_arc[v] = _PARENT_NONE
                if o_top == cap_orph:
                    orphans = np.concatenate(
                        (orphans, np.empty(cap_orph, dtype=np.int64)))
                    cap_orph = orphans.size
                orphans[o_top] = v
                o_top += 1
            v = nxt
        flow += bott

        # -- adopt --
        while o_top > 0:
            o_top -= 1
            v = orphans[o_top]
            side = tree[v]
            best_arc = np.int64(-1)
            best_dist = np.int64(0x7FFFFFFFFFFFFFF)
            for ii in range(adj_ptr[v], adj_ptr[v + 1]):
                a = adj_arc[ii]
                w = arc_to[a]
                if tree[w] != side:
                    continue
                rescap = res[a ^ 1] if side == _TREE_S else res[a]
                if rescap <= 0.0:
                    continue
                if _origin_valid(w, side, parent_arc, tree, arc_to, dist, ts, time):
                    if dist[w] < best_dist:
                        best_dist = dist[w]
                        best_arc = a
            if best_arc >= 0:
                a = best_arc
                parent_arc[v] = (a ^ 1) if side == _TREE_S else a
                w = arc_to[a]
                dist[v] = dist[w] + 1
                ts[v] = time
            else:
                tree[v] = _FREE
                for ii in range(adj_ptr[v], adj_ptr[v + 1]):
                    a = adj_arc[ii]
                    w = arc_to[a]
                    if tree[w] != side:
                        continue
                    rescap = res[a ^ 1] if side == _TREE_S else res[a]
                    if rescap > 0.0:
                        if a_tail == cap_active:
                            active = np.concatenate(
                                (active[a_head:a_tail],
                                 np.empty(cap_active, dtype=np.int64)))
                            a_tail -= a_head
                            a_head = 0
                            cap_active = active.size
                        active[a_tail] = w
                        a_tail += 1
                    pw = parent_arc[w]
                    if pw >= 0 and _parent_node(pw, side, arc_to) == v:
                        parent_arc[w] = _PARENT_NONE
                        if o_top == cap_orph:
                            orphans = np.concatenate(
                                (orphans, np.empty(cap_orph, dtype=np.int64)))
                            cap_orph = orphans.size
                        orphans[o_top] = w
                        o_top += 1


@njit(cache=True)
def source_reachable(adj_ptr, adj_arc, arc_to, res, s):
    """Residual reachability from s: the canonical minimal source set."""
    n = adj_ptr.size - 1
    seen = np.zeros(n, dtype=np.bool_)
    queue = np.empty(n, dtype=np.int64)
    qh = 0
    qt = 0
    queue[qt] = s
    qt += 1
    seen[s] = True
    while qh < qt:
        u = queue[qh]
        qh += 1
        for ii in range(adj_ptr[u], adj_ptr[u + 1]):
            a = adj_arc[ii]
            if res[a] > 0.0:
                v = arc_to[a]
                if not seen[v]:
                    seen[v] = True
                    queue[qt] = v
                    qt += 1
    return seen
