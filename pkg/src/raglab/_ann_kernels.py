"""Numba kernels behind the vector indices.

Distances are negated inner products (smaller = closer). Traversal is fully
deterministic: heaps are plain binary heaps on distance, every candidate
set is drained in a fixed order, and the public wrappers re-sort final
hits by (score desc, id asc). Adjacency matrices are one column wider than
the degree cap: a reverse edge may briefly overflow the cap before the
pruning pass shrinks the list back.

Callers provide scratch buffers (``visited`` stamp array plus candidate
heap storage) so query paths can reuse thread-local allocations instead of
zeroing fresh arrays per search.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# node ids here are row indices into the vector matrix, not passage ids


@njit(cache=True, fastmath=True, inline="always")
def _neg_ip(vecs, i, q):
    acc = np.float32(0.0)
    for t in range(q.shape[0]):
        acc += vecs[i, t] * q[t]
    return -acc


@njit(cache=True, inline="always")
def _less(d1, i1, d2, i2):
    return d1 < d2 or (d1 == d2 and i1 < i2)


# -- binary heaps on parallel (dist, node) arrays, keyed by dist only --------

@njit(cache=True, inline="always")
def _push_min(hd, hi, size, d, i):
    hd[size] = d
    hi[size] = i
    c = size
    while c > 0:
        p = (c - 1) >> 1
        if hd[c] < hd[p]:
            hd[c], hd[p] = hd[p], hd[c]
            hi[c], hi[p] = hi[p], hi[c]
            c = p
        else:
            break
    return size + 1


@njit(cache=True, inline="always")
def _pop_min(hd, hi, size):
    size -= 1
    hd[0] = hd[size]
    hi[0] = hi[size]
    c = 0
    while True:
        l = 2 * c + 1
        r = l + 1
        best = c
        if l < size and hd[l] < hd[best]:
            best = l
        if r < size and hd[r] < hd[best]:
            best = r
        if best == c:
            break
        hd[c], hd[best] = hd[best], hd[c]
        hi[c], hi[best] = hi[best], hi[c]
        c = best
    return size


# -- layer traversal ---------------------------------------------------------

@njit(cache=True, fastmath=True)
def _greedy(vecs, adj, deg, q, entry, entry_dist):
    """Move to the strictly better (dist, id) neighbor until a local minimum."""
    cur = entry
    cur_d = entry_dist
    improved = True
    while improved:
        improved = False
        for j in range(deg[cur]):
            v = adj[cur, j]
            dv = _neg_ip(vecs, v, q)
            if _less(dv, v, cur_d, cur):
                cur_d = dv
                cur = v
                improved = True
    return cur, cur_d


@njit(cache=True, inline="always")
def _push_max(hd, hi, size, d, i):
    hd[size] = d
    hi[size] = i
    c = size
    while c > 0:
        p = (c - 1) >> 1
        if hd[c] > hd[p]:
            hd[c], hd[p] = hd[p], hd[c]
            hi[c], hi[p] = hi[p], hi[c]
            c = p
        else:
            break
    return size + 1


@njit(cache=True, inline="always")
def _pop_max(hd, hi, size):
    size -= 1
    hd[0] = hd[size]
    hi[0] = hi[size]
    c = 0
    while True:
        l = 2 * c + 1
        r = l + 1
        best = c
        if l < size and hd[l] > hd[best]:
            best = l
        if r < size and hd[r] > hd[best]:
            best = r
        if best == c:
            break
        hd[c], hd[best] = hd[best], hd[c]
        hi[c], hi[best] = hi[best], hi[c]
        c = best
    return size


@njit(cache=True, fastmath=True)
def beam_search(vecs, adj, deg, q, entry, entry_dist, ef, visited, stamp,
                cand_d, cand_i, out_d, out_i):
    """Best-first beam search on one layer.

    Fills out_d/out_i with up to ``ef`` candidates sorted ascending by
    distance and returns the count. Each expansion gathers the unvisited
    neighbors first and computes their distances in one tight loop so the
    dot products pipeline. Retained results live in a bounded max-heap
    (O(1) worst lookup) drained into sorted order at the end; the frontier
    is a binary min-heap.
    """
    d = q.shape[0]
    width = adj.shape[1]
    best_d = np.empty(ef + 1, np.float32)
    best_i = np.empty(ef + 1, np.int32)
    fresh_i = np.empty(width, np.int32)
    fresh_d = np.empty(width, np.float32)
    csz = _push_min(cand_d, cand_i, 0, entry_dist, entry)
    bsz = _push_max(best_d, best_i, 0, entry_dist, entry)
    visited[entry] = stamp
    while csz > 0:
        d0 = cand_d[0]
        i0 = cand_i[0]
        csz = _pop_min(cand_d, cand_i, csz)
        if bsz >= ef and d0 > best_d[0]:
            break
        nf = 0
        for j in range(deg[i0]):
            v = adj[i0, j]
            if visited[v] != stamp:
                visited[v] = stamp
                fresh_i[nf] = v
                nf += 1
        # distances in 4-row blocks so loads and FMAs pipeline
        t = 0
        while t + 4 <= nf:
            r0 = fresh_i[t]
            r1 = fresh_i[t + 1]
            r2 = fresh_i[t + 2]
            r3 = fresh_i[t + 3]
            a0 = np.float32(0.0)
            a1 = np.float32(0.0)
            a2 = np.float32(0.0)
            a3 = np.float32(0.0)
            for c in range(d):
                qc = q[c]
                a0 += vecs[r0, c] * qc
                a1 += vecs[r1, c] * qc
                a2 += vecs[r2, c] * qc
                a3 += vecs[r3, c] * qc
            fresh_d[t] = -a0
            fresh_d[t + 1] = -a1
            fresh_d[t + 2] = -a2
            fresh_d[t + 3] = -a3
            t += 4
        while t < nf:
            row = fresh_i[t]
            acc = np.float32(0.0)
            for c in range(d):
                acc += vecs[row, c] * q[c]
            fresh_d[t] = -acc
            t += 1
        for t in range(nf):
            dv = fresh_d[t]
            v = fresh_i[t]
            if bsz < ef or dv < best_d[0]:
                csz = _push_min(cand_d, cand_i, csz, dv, v)
                bsz = _push_max(best_d, best_i, bsz, dv, v)
                if bsz > ef:
                    bsz = _pop_max(best_d, best_i, bsz)
    # drain the max-heap into ascending distance order
    count = bsz
    for pos in range(count - 1, -1, -1):
        out_d[pos] = best_d[0]
        out_i[pos] = best_i[0]
        bsz = _pop_max(best_d, best_i, bsz)
    return count


@njit(cache=True, fastmath=True)
def _select_heuristic(vecs, cand_d, cand_i, count, m, out_i):
    """Diversity-aware neighbor selection (keeps pruned candidates as filler).

    Candidates must be sorted ascending by distance; a candidate is kept
    when it is closer to the query than to every already-selected node.
    """
    kept = 0
    disc_d = np.empty(count, np.float32)
    disc_i = np.empty(count, np.int32)
    n_disc = 0
    for c in range(count):
        if kept >= m:
            break
        e = cand_i[c]
        de = cand_d[c]
        ok = True
        for s in range(kept):
            d_es = _neg_ip(vecs, e, vecs[out_i[s]])
            if _less(d_es, out_i[s], de, e):
                ok = False
                break
        if ok:
            out_i[kept] = e
            kept += 1
        else:
            disc_d[n_disc] = de
            disc_i[n_disc] = e
            n_disc += 1
    f = 0
    while kept < m and f < n_disc:
        out_i[kept] = disc_i[f]
        kept += 1
        f += 1
    return kept


@njit(cache=True, fastmath=True)
def _prune_node(vecs, adj, deg, node, cap, scratch_d, scratch_i, out_i):
    """Re-select ``node``'s neighbor list down to ``cap`` with the heuristic."""
    cnt = deg[node]
    for j in range(cnt):
        v = adj[node, j]
        scratch_d[j] = _neg_ip(vecs, v, vecs[node])
        scratch_i[j] = v
    # insertion sort by (dist, id); neighbor lists are small
    for a in range(1, cnt):
        kd = scratch_d[a]
        ki = scratch_i[a]
        b = a - 1
        while b >= 0 and _less(kd, ki, scratch_d[b], scratch_i[b]):
            scratch_d[b + 1] = scratch_d[b]
            scratch_i[b + 1] = scratch_i[b]
            b -= 1
        scratch_d[b + 1] = kd
        scratch_i[b + 1] = ki
    kept = _select_heuristic(vecs, scratch_d, scratch_i, cnt, cap, out_i)
    for j in range(kept):
        adj[node, j] = out_i[j]
    deg[node] = kept


@njit(cache=True, fastmath=True)
def insert_node(vecs, levels, adj0, deg0, adj_u, deg_u, node, entry, max_level,
                m, ef_construction, visited, stamp, cand_d, cand_i, out_d, out_i):
    """Insert one node into the layered graph; returns (entry, max_level, stamp)."""
    level = levels[node]
    q = vecs[node]
    cur = entry
    cur_d = _neg_ip(vecs, cur, q)
    # descend through layers above the node's level greedily
    lc = max_level
    while lc > level:
        cur, cur_d = _greedy(vecs, adj_u[lc - 1], deg_u[lc - 1], q, cur, cur_d)
        lc -= 1
    scratch_d = np.empty(4 * m + 2, np.float32)
    scratch_i = np.empty(4 * m + 2, np.int32)
    sel = np.empty(2 * m + 1, np.int32)
    prune_sel = np.empty(2 * m + 1, np.int32)
    lc = min(level, max_level)
    while lc >= 0:
        if lc == 0:
            adj, deg, cap = adj0, deg0, 2 * m
        else:
            adj, deg, cap = adj_u[lc - 1], deg_u[lc - 1], m
        stamp += 1
        count = beam_search(vecs, adj, deg, q, cur, cur_d, ef_construction,
                            visited, stamp, cand_d, cand_i, out_d, out_i)
        kept = _select_heuristic(vecs, out_d, out_i, count, m, sel)
        for j in range(kept):
            w = int(sel[j])
            adj[node, deg[node]] = w
            deg[node] += 1
            adj[w, deg[w]] = node
            deg[w] += 1
            if deg[w] > cap:
                _prune_node(vecs, adj, deg, w, cap, scratch_d, scratch_i, prune_sel)
        if count > 0:
            cur = out_i[0]
            cur_d = out_d[0]
        lc -= 1
    if level > max_level:
        entry = node
        max_level = level
    return entry, max_level, stamp


@njit(cache=True, fastmath=True)
def search_graph(vecs, adj0, deg0, adj_u, deg_u, q, entry, max_level, ef,
                 visited, stamp, cand_d, cand_i, out_d, out_i):
    """Full HNSW search: greedy descent to layer 1, beam at layer 0."""
    cur = entry
    cur_d = _neg_ip(vecs, cur, q)
    lc = max_level
    while lc > 0:
        cur, cur_d = _greedy(vecs, adj_u[lc - 1], deg_u[lc - 1], q, cur, cur_d)
        lc -= 1
    return beam_search(vecs, adj0, deg0, q, cur, cur_d, ef, visited, stamp,
                       cand_d, cand_i, out_d, out_i)


@njit(cache=True, fastmath=True)
def search_graph_reranked(codes, vecs, scale, adj0, deg0, adj_u, deg_u, q, k,
                          entry, max_level, ef, visited, stamp, cand_d, cand_i,
                          out_d, out_i):
    """HNSW search that traverses int8 codes and reranks exactly.

    The query is folded with the per-dimension quantization scale so
    ranking by ``codes @ (scale * q)`` matches ranking by dequantized inner
    product. The beam's candidate list is rescored with full-precision
    vectors and the top-k of that list is selected by (distance, row), so
    out_d[:k] holds exact negated inner products in final order.
    """
    qq = scale * q
    cur = entry
    cur_d = _neg_ip(codes, cur, qq)
    lc = max_level
    while lc > 0:
        cur, cur_d = _greedy(codes, adj_u[lc - 1], deg_u[lc - 1], qq, cur, cur_d)
        lc -= 1
    count = beam_search(codes, adj0, deg0, qq, cur, cur_d, ef, visited, stamp,
                        cand_d, cand_i, out_d, out_i)
    for t in range(count):
        out_d[t] = _neg_ip(vecs, out_i[t], q)
    # partial selection sort: exact top-k by (distance, row)
    take = min(k, count)
    for a in range(take):
        best = a
        for b in range(a + 1, count):
            if _less(out_d[b], out_i[b], out_d[best], out_i[best]):
                best = b
        if best != a:
            out_d[a], out_d[best] = out_d[best], out_d[a]
            out_i[a], out_i[best] = out_i[best], out_i[a]
    return take


@njit(cache=True, fastmath=True)
def search_layer0(vecs, adj0, deg0, q, entry, ef, visited, stamp,
                  cand_d, cand_i, out_d, out_i):
    """Single-layer beam search (disk-tier traversal over quantized codes)."""
    entry_d = _neg_ip(vecs, entry, q)
    return beam_search(vecs, adj0, deg0, q, entry, entry_d, ef, visited, stamp,
                       cand_d, cand_i, out_d, out_i)


@njit(cache=True)
def bfs_reachable(adj0, deg0, entry, mask):
    """Mark nodes reachable from entry on layer 0 (connectivity check)."""
    n = deg0.shape[0]
    queue = np.empty(n, np.int32)
    head = 0
    tail = 0
    queue[tail] = entry
    tail += 1
    mask[entry] = True
    while head < tail:
        u = queue[head]
        head += 1
        for j in range(deg0[u]):
            v = adj0[u, j]
            if not mask[v]:
                mask[v] = True
                queue[tail] = v
                tail += 1
    return tail
