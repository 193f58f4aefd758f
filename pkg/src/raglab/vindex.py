"""Exact and approximate nearest-neighbor indices over unit-norm embeddings.

Three kinds share one metric (inner product over unit vectors) and one
tie-break rule (score descending, then id ascending):

* ``FlatIndex`` — exact brute force; the oracle the others are measured
  against.
* ``HnswIndex`` — layered proximity graph. Levels are sampled from the
  geometric distribution with multiplier 1/ln(m) using a seeded RNG, so a
  fixed seed and input order reproduce the exact same graph. Layer 0 keeps
  up to 2m links per node, upper layers m. After the build, layer 0 is
  checked for connectivity from the entry point and stray components are
  attached to their nearest reachable node.
* ``DiskTierIndex`` — DRAM-light tier: int8 scalar-quantized codes stay in
  RAM for graph traversal while the neighbor graph and full-precision
  vectors live on disk (memory-mapped); the top candidates are reranked
  with exact scores read from disk. Reported memory separates resident
  bytes (ids + codes + quantization params) from disk bytes (graph + full
  vectors).
"""

from __future__ import annotations

import json
import math
import shutil
import struct
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _ann_kernels as K
from .errors import BuildError, PersistenceError, VersionError
from .retrieval import RetrievalHit

DEFAULT_M = 32
DEFAULT_EF_CONSTRUCTION = 128
DEFAULT_EF_SEARCH = 128
DEFAULT_RERANK_MULTIPLIER = 4
NORM_TOLERANCE = 1e-4

MAGIC = b"RGLV"
FORMAT_VERSION = 1


def _validate_vectors(vectors, ids) -> tuple[np.ndarray, np.ndarray]:
    vecs = np.ascontiguousarray(vectors, dtype=np.float32)
    if vecs.ndim != 2 or vecs.shape[0] < 1:
        raise BuildError("vectors must be a non-empty 2-D array")
    ids_arr = np.asarray(list(ids), dtype=np.int64)
    if ids_arr.shape[0] != vecs.shape[0]:
        raise BuildError("ids must align with vectors")
    if len(set(ids_arr.tolist())) != len(ids_arr):
        raise BuildError("ids must be distinct")
    norms = np.linalg.norm(vecs, axis=1)
    if np.any(np.abs(norms - 1.0) > NORM_TOLERANCE):
        worst = float(np.abs(norms - 1.0).max())
        raise BuildError(f"vectors must be unit-norm (max deviation {worst:.2e})")
    return vecs, ids_arr


def _check_query(query, d: int) -> np.ndarray:
    q = np.ascontiguousarray(query, dtype=np.float32)
    if q.ndim != 1 or q.shape[0] != d:
        raise BuildError(f"query dimension {q.shape} does not match index dim {d}")
    return q


def _hits_from(ids: np.ndarray, rows: np.ndarray, scores: np.ndarray,
               k: int) -> list[RetrievalHit]:
    # final ordering: score descending, then passage id ascending
    order = np.lexsort((ids[rows], -scores))[:k]
    return [RetrievalHit(passage_id=int(ids[rows[i]]), score=float(scores[i]))
            for i in order]


class _SearchScratch(threading.local):
    """Per-thread reusable buffers: stamped visited array + candidate heap."""

    def prepared(self, n: int):
        if getattr(self, "n", None) != n or self.stamp >= 2**31 - 2:
            self.n = n
            self.visited = np.zeros(n, dtype=np.int32)
            self.cand_d = np.empty(n, dtype=np.float32)
            self.cand_i = np.empty(n, dtype=np.int32)
            self.stamp = 0
        self.stamp += 1
        return self.visited, self.stamp, self.cand_d, self.cand_i


class FlatIndex:
    kind = "flat"

    def __init__(self, vectors: np.ndarray, ids: np.ndarray):
        self.vectors = vectors
        self.ids = ids

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def d(self) -> int:
        return self.vectors.shape[1]

    def search(self, query, k: int, ef_search: int | None = None) -> list[RetrievalHit]:
        if k < 1:
            raise ValueError("k must be >= 1")
        q = _check_query(query, self.d)
        scores = self.vectors @ q
        k_eff = min(k, self.n)
        if k_eff < self.n:
            part = np.argpartition(-scores, k_eff - 1)[:k_eff]
            # widen to every row tied with the partition boundary so the
            # (score desc, id asc) order stays exact
            thresh = scores[part].min()
            rows = np.flatnonzero(scores >= thresh)
        else:
            rows = np.arange(self.n)
        return _hits_from(self.ids, rows, scores[rows], k_eff)

    def memory_bytes(self) -> dict[str, int]:
        resident = int(self.vectors.nbytes + self.ids.nbytes)
        return {"vectors": int(self.vectors.nbytes), "ids": int(self.ids.nbytes),
                "resident": resident, "disk": 0}


def build_flat(vectors, ids) -> FlatIndex:
    vecs, ids_arr = _validate_vectors(vectors, ids)
    return FlatIndex(vecs, ids_arr)


# ---------------------------------------------------------------------------
# HNSW

@dataclass
class _Graph:
    levels: np.ndarray          # int32[n]
    adj0: np.ndarray            # int32[n, 2m+1]
    deg0: np.ndarray            # int32[n]
    adj_u: np.ndarray           # int32[L, n, m+1]
    deg_u: np.ndarray           # int32[L, n]
    entry: int
    max_level: int


def _sample_levels(n: int, m: int, seed: int) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64(seed))
    ml = 1.0 / math.log(m) if m > 1 else 1.0
    u = 1.0 - rng.random(n)  # (0, 1]
    return np.floor(-np.log(u) * ml).astype(np.int32)


def _build_graph(vecs: np.ndarray, m: int, ef_construction: int, seed: int) -> _Graph:
    n = vecs.shape[0]
    levels = _sample_levels(n, m, seed)
    top = int(levels.max(initial=0))
    adj0 = np.zeros((n, 2 * m + 1), dtype=np.int32)
    deg0 = np.zeros(n, dtype=np.int32)
    adj_u = np.zeros((top, n, m + 1), dtype=np.int32)
    deg_u = np.zeros((top, n), dtype=np.int32)
    entry = 0
    max_level = int(levels[0])
    visited = np.zeros(n, dtype=np.int32)
    cand_d = np.empty(n, dtype=np.float32)
    cand_i = np.empty(n, dtype=np.int32)
    out_d = np.empty(ef_construction + 1, dtype=np.float32)
    out_i = np.empty(ef_construction + 1, dtype=np.int32)
    stamp = 0
    for node in range(1, n):
        entry, max_level, stamp = K.insert_node(
            vecs, levels, adj0, deg0, adj_u, deg_u, node, entry, max_level,
            m, ef_construction, visited, stamp, cand_d, cand_i, out_d, out_i)
    graph = _Graph(levels=levels, adj0=adj0, deg0=deg0, adj_u=adj_u,
                   deg_u=deg_u, entry=int(entry), max_level=int(max_level))
    _repair_connectivity(vecs, graph, m)
    return graph


def _repair_connectivity(vecs: np.ndarray, graph: _Graph, m: int) -> int:
    """Attach any layer-0 component unreachable from the entry point."""
    n = vecs.shape[0]
    cap = 2 * m
    repairs = 0
    while True:
        mask = np.zeros(n, dtype=np.bool_)
        K.bfs_reachable(graph.adj0, graph.deg0, graph.entry, mask)
        if mask.all():
            return repairs
        u = int(np.flatnonzero(~mask)[0])
        reached = np.flatnonzero(mask)
        sims = vecs[reached] @ vecs[u]
        w = int(reached[np.lexsort((reached, -sims))[0]])
        for node, other in ((u, w), (w, u)):
            row = graph.adj0[node]
            deg = int(graph.deg0[node])
            if deg >= cap:
                # evict the farthest current neighbor to stay within the cap
                dists = vecs[row[:deg]] @ vecs[node]
                worst = int(np.argmin(dists))
                row[worst] = other
            else:
                row[deg] = other
                graph.deg0[node] = deg + 1
        repairs += 1


class HnswIndex:
    kind = "hnsw"

    def __init__(self, vectors: np.ndarray, ids: np.ndarray, graph: _Graph,
                 m: int, ef_construction: int, ef_search: int, seed: int):
        self.vectors = vectors
        self.ids = ids
        self.graph = graph
        self.m = m
        self.ef_construction = ef_construction
        self.ef_search = ef_search
        self.seed = seed
        self._scratch = _SearchScratch()
        # traversal ranks neighbors by int8-quantized dots (cache-resident);
        # the candidate list is rescored with the full vectors before return
        self._codes, self._scale, _ = _quantize(vectors)

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def d(self) -> int:
        return self.vectors.shape[1]

    @property
    def entry_point(self) -> int:
        return self.graph.entry

    def neighbors(self, node: int, layer: int) -> list[int]:
        if layer == 0:
            return self.graph.adj0[node, :self.graph.deg0[node]].tolist()
        return self.graph.adj_u[layer - 1, node, :self.graph.deg_u[layer - 1, node]].tolist()

    def search(self, query, k: int, ef_search: int | None = None) -> list[RetrievalHit]:
        if k < 1:
            raise ValueError("k must be >= 1")
        q = _check_query(query, self.d)
        ef = max(self.ef_search if ef_search is None else ef_search, k)
        visited, stamp, cand_d, cand_i = self._scratch.prepared(self.n)
        out_d = np.empty(ef + 1, dtype=np.float32)
        out_i = np.empty(ef + 1, dtype=np.int32)
        take = K.search_graph_reranked(
            self._codes, self.vectors, self._scale, self.graph.adj0,
            self.graph.deg0, self.graph.adj_u, self.graph.deg_u, q, k,
            self.graph.entry, self.graph.max_level, ef, visited, stamp,
            cand_d, cand_i, out_d, out_i)
        # out_d[:take] holds exact scores already in (score desc, row asc)
        # order; rows map monotonically onto passage ids
        ids = self.ids
        hits = [RetrievalHit(passage_id=int(ids[out_i[i]]), score=float(-out_d[i]))
                for i in range(take)]
        hits.sort(key=lambda h: (-h.score, h.passage_id))
        return hits

    def memory_bytes(self) -> dict[str, int]:
        g = self.graph
        graph_bytes = int(g.adj0.nbytes + g.deg0.nbytes + g.adj_u.nbytes +
                          g.deg_u.nbytes + g.levels.nbytes)
        resident = int(self.vectors.nbytes + self.ids.nbytes) + graph_bytes
        return {"vectors": int(self.vectors.nbytes), "ids": int(self.ids.nbytes),
                "graph": graph_bytes, "resident": resident, "disk": 0}


def build_hnsw(vectors, ids, m: int = DEFAULT_M,
               ef_construction: int = DEFAULT_EF_CONSTRUCTION,
               seed: int = 0, ef_search: int = DEFAULT_EF_SEARCH) -> HnswIndex:
    vecs, ids_arr = _validate_vectors(vectors, ids)
    graph = _build_graph(vecs, m, ef_construction, seed)
    return HnswIndex(vecs, ids_arr, graph, m, ef_construction, ef_search, seed)


# ---------------------------------------------------------------------------
# Disk tier

class DiskTierIndex:
    """int8 codes resident in RAM; graph and full vectors memory-mapped."""

    kind = "disk"

    def __init__(self, path: str, ids: np.ndarray, scale: np.ndarray,
                 offset: np.ndarray, codes: np.ndarray, deg: np.ndarray,
                 adj: np.ndarray, full: np.ndarray, entry: int, m: int,
                 ef_search: int, rerank_multiplier: int, seed: int):
        self.path = str(path)
        self.ids = ids
        self.scale = scale
        self.offset = offset
        self.codes = codes
        self.deg = deg
        self.adj = adj
        self.full = full
        self.entry = entry
        self.m = m
        self.ef_search = ef_search
        self.rerank_multiplier = rerank_multiplier
        self.seed = seed
        self._scratch = _SearchScratch()

    @property
    def n(self) -> int:
        return self.codes.shape[0]

    @property
    def d(self) -> int:
        return self.codes.shape[1]

    def dequantize(self, row: int) -> np.ndarray:
        return (self.codes[row].astype(np.float32) + 128.0) * self.scale + self.offset

    def search(self, query, k: int, ef_search: int | None = None,
               rerank_depth: int | None = None) -> list[RetrievalHit]:
        if k < 1:
            raise ValueError("k must be >= 1")
        q = _check_query(query, self.d)
        depth = self.rerank_multiplier * k if rerank_depth is None else rerank_depth
        depth = max(min(depth, self.n), 1)
        ef = max(self.ef_search if ef_search is None else ef_search, depth, k)
        # affine quantization folds into the query: rank by codes @ (scale * q)
        qp = np.ascontiguousarray(self.scale * q, dtype=np.float32)
        visited, stamp, cand_d, cand_i = self._scratch.prepared(self.n)
        out_d = np.empty(ef + 1, dtype=np.float32)
        out_i = np.empty(ef + 1, dtype=np.int32)
        count = K.search_layer0(self.codes, self.adj, self.deg, qp, self.entry,
                                ef, visited, stamp, cand_d, cand_i, out_d, out_i)
        cand = out_i[:min(depth, count)].astype(np.int64)
        # rerank with exact vectors read from disk
        exact = np.asarray(self.full[cand], dtype=np.float32) @ q
        return _hits_from(self.ids, cand, exact.astype(np.float64), min(k, len(cand)))

    def memory_bytes(self) -> dict[str, int]:
        resident = int(self.codes.nbytes + self.ids.nbytes +
                       self.scale.nbytes + self.offset.nbytes)
        disk = int(self.adj.nbytes + self.deg.nbytes + self.full.nbytes)
        return {"codes": int(self.codes.nbytes), "ids": int(self.ids.nbytes),
                "quant_params": int(self.scale.nbytes + self.offset.nbytes),
                "resident": resident, "graph_disk": int(self.adj.nbytes + self.deg.nbytes),
                "vectors_disk": int(self.full.nbytes), "disk": disk}


def _quantize(vecs: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    vmin = vecs.min(axis=0)
    vmax = vecs.max(axis=0)
    scale = (vmax - vmin) / 255.0
    scale[scale == 0.0] = 1.0
    codes = np.rint((vecs - vmin) / scale) - 128.0
    codes = np.clip(codes, -128, 127).astype(np.int8)
    return codes, scale.astype(np.float32), vmin.astype(np.float32)


def build_disk_tier(vectors, ids, path, m: int = DEFAULT_M,
                    ef_construction: int = DEFAULT_EF_CONSTRUCTION,
                    seed: int = 0, ef_search: int = DEFAULT_EF_SEARCH,
                    rerank_multiplier: int = DEFAULT_RERANK_MULTIPLIER) -> DiskTierIndex:
    vecs, ids_arr = _validate_vectors(vectors, ids)
    codes, scale, offset = _quantize(vecs)
    # traverse what search will see: the graph is built over dequantized codes
    dequant = (codes.astype(np.float32) + 128.0) * scale + offset
    graph = _build_graph(np.ascontiguousarray(dequant), m, ef_construction, seed)
    params = {"m": m, "ef_construction": ef_construction, "ef_search": ef_search,
              "rerank_multiplier": rerank_multiplier, "entry": graph.entry,
              "seed": seed}
    with open(path, "wb") as f:
        _write_header(f, "disk", vecs.shape[0], vecs.shape[1], params)
        f.write(ids_arr.tobytes())
        f.write(scale.tobytes())
        f.write(offset.tobytes())
        f.write(codes.tobytes())
        f.write(graph.deg0.astype(np.int32).tobytes())
        f.write(graph.adj0.astype(np.int32).tobytes())
        f.write(vecs.tobytes())
    return _load_disk_tier(path)


def _load_disk_tier(path) -> DiskTierIndex:
    with open(path, "rb") as f:
        kind, n, d, params = _read_header(f)
        if kind != "disk":
            raise PersistenceError(f"expected a disk-tier index, found {kind!r}")
        base = f.tell()
        ids = np.fromfile(f, dtype=np.int64, count=n)
        scale = np.fromfile(f, dtype=np.float32, count=d)
        offset = np.fromfile(f, dtype=np.float32, count=d)
        codes = np.fromfile(f, dtype=np.int8, count=n * d)
        if codes.size != n * d or ids.size != n:
            raise PersistenceError(f"truncated index file: {path}")
        codes = codes.reshape(n, d)
        deg_off = f.tell()
    m = int(params["m"])
    width = 2 * m + 1
    adj_off = deg_off + 4 * n
    full_off = adj_off + 4 * n * width
    expected = full_off + 4 * n * d
    if Path(path).stat().st_size < expected:
        raise PersistenceError(f"truncated index file: {path}")
    deg = np.memmap(path, dtype=np.int32, mode="r", offset=deg_off, shape=(n,))
    adj = np.memmap(path, dtype=np.int32, mode="r", offset=adj_off, shape=(n, width))
    full = np.memmap(path, dtype=np.float32, mode="r", offset=full_off, shape=(n, d))
    return DiskTierIndex(path=str(path), ids=ids, scale=scale, offset=offset,
                         codes=codes, deg=deg, adj=adj, full=full,
                         entry=int(params["entry"]), m=m,
                         ef_search=int(params["ef_search"]),
                         rerank_multiplier=int(params["rerank_multiplier"]),
                         seed=int(params.get("seed", 0)))


# ---------------------------------------------------------------------------
# Shared operations

def ann_search(index, query, k: int, ef_search: int | None = None) -> list[RetrievalHit]:
    """Search any index kind; deterministic for a fixed index and ef_search."""
    return index.search(query, k, ef_search=ef_search)


def measure_recall(approx_index, flat_index, queries, k: int) -> float:
    """Mean fraction of the exact top-k recovered by the approximate index."""
    total = 0.0
    count = 0
    for q in queries:
        exact = {h.passage_id for h in flat_index.search(q, k)}
        got = {h.passage_id for h in approx_index.search(q, k)}
        total += len(exact & got) / k
        count += 1
    return total / count if count else 0.0


# ---------------------------------------------------------------------------
# Persistence

def _write_header(f, kind: str, n: int, d: int, params: dict) -> None:
    f.write(MAGIC)
    f.write(struct.pack("<I", FORMAT_VERSION))
    kb = kind.encode()
    f.write(struct.pack("<I", len(kb)))
    f.write(kb)
    f.write(struct.pack("<QI", n, d))
    pb = json.dumps(params, sort_keys=True).encode()
    f.write(struct.pack("<I", len(pb)))
    f.write(pb)


def _read_header(f) -> tuple[str, int, int, dict]:
    magic = f.read(4)
    if magic != MAGIC:
        raise PersistenceError("not a vector index file")
    (version,) = struct.unpack("<I", _read_exact(f, 4))
    if version > FORMAT_VERSION:
        raise VersionError(f"index format version {version} is newer than supported")
    (klen,) = struct.unpack("<I", _read_exact(f, 4))
    kind = _read_exact(f, klen).decode()
    n, d = struct.unpack("<QI", _read_exact(f, 12))
    (plen,) = struct.unpack("<I", _read_exact(f, 4))
    params = json.loads(_read_exact(f, plen).decode())
    return kind, n, d, params


def _read_exact(f, n: int) -> bytes:
    b = f.read(n)
    if len(b) != n:
        raise PersistenceError("truncated index file")
    return b


def _read_array(f, dtype, shape) -> np.ndarray:
    count = int(np.prod(shape))
    arr = np.fromfile(f, dtype=dtype, count=count)
    if arr.size != count:
        raise PersistenceError("truncated index file")
    return arr.reshape(shape)


def save_index(index, path) -> None:
    """Persist any index kind; restore is search-equivalent."""
    if isinstance(index, DiskTierIndex):
        if str(path) != index.path:
            shutil.copyfile(index.path, path)
        return
    with open(path, "wb") as f:
        if isinstance(index, FlatIndex):
            _write_header(f, "flat", index.n, index.d, {})
            f.write(index.ids.tobytes())
            f.write(index.vectors.tobytes())
            return
        g = index.graph
        params = {"m": index.m, "ef_construction": index.ef_construction,
                  "ef_search": index.ef_search, "seed": index.seed,
                  "entry": g.entry, "max_level": g.max_level,
                  "layers": int(g.adj_u.shape[0])}
        _write_header(f, "hnsw", index.n, index.d, params)
        f.write(index.ids.tobytes())
        f.write(index.vectors.tobytes())
        f.write(g.levels.tobytes())
        f.write(g.deg0.tobytes())
        f.write(g.adj0.tobytes())
        f.write(g.deg_u.tobytes())
        f.write(g.adj_u.tobytes())


def load_index(path):
    """Load a persisted index of any kind."""
    with open(path, "rb") as f:
        kind, n, d, params = _read_header(f)
        if kind == "disk":
            pass
        elif kind == "flat":
            ids = _read_array(f, np.int64, (n,))
            vectors = _read_array(f, np.float32, (n, d))
            return FlatIndex(vectors, ids)
        elif kind == "hnsw":
            m = int(params["m"])
            layers = int(params["layers"])
            ids = _read_array(f, np.int64, (n,))
            vectors = _read_array(f, np.float32, (n, d))
            levels = _read_array(f, np.int32, (n,))
            deg0 = _read_array(f, np.int32, (n,))
            adj0 = _read_array(f, np.int32, (n, 2 * m + 1))
            deg_u = _read_array(f, np.int32, (layers, n))
            adj_u = _read_array(f, np.int32, (layers, n, m + 1))
            graph = _Graph(levels=levels, adj0=adj0, deg0=deg0, adj_u=adj_u,
                           deg_u=deg_u, entry=int(params["entry"]),
                           max_level=int(params["max_level"]))
            return HnswIndex(vectors, ids, graph, m,
                             int(params["ef_construction"]),
                             int(params["ef_search"]), int(params["seed"]))
        else:
            raise PersistenceError(f"unknown index kind {kind!r}")
    return _load_disk_tier(path)
