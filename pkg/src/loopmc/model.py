"""Pairwise binary Markov random fields.

A model is a simple connected graph on vertices ``0..n-1`` with a 2-vector
factor per vertex and a 2x2 factor per edge. Edge ``e = (u, v)`` stores its
table as ``edge_factors[e][x_u, x_v]``.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import ModelFormatError, SizeGuardError

EXACT_MAX_VERTICES = 25


@dataclass(frozen=True, eq=False)
class PairwiseModel:
    """Immutable pairwise binary MRF.

    Parameters
    ----------
    vertex_factors : array_like, shape (n, 2)
        ``psi_v(x)`` for ``x in {0, 1}``.
    edges : sequence of (int, int)
        Endpoints of edge ``e``; the index in this sequence is the stable
        edge index.
    edge_factors : array_like, shape (m, 2, 2)
        ``psi_{u,v}(x_u, x_v)`` in the orientation given by ``edges``.

    Notes
    -----
    Construction checks simplicity, connectivity and factor entries. Whether
    some configuration has positive weight is only established when the
    partition function is evaluated.
    """

    vertex_factors: np.ndarray
    edges: tuple
    edge_factors: np.ndarray

    def __post_init__(self):
        vf = np.array(self.vertex_factors, dtype=np.float64)
        if vf.ndim != 2 or vf.shape[1] != 2:
            raise ValueError("vertex_factors must have shape (n, 2)")
        n = vf.shape[0]
        if n < 1:
            raise ValueError("model needs at least one vertex")
        edges = tuple((int(u), int(v)) for u, v in self.edges)
        ef = np.array(self.edge_factors, dtype=np.float64).reshape(len(edges), 2, 2)
        seen = set()
        for u, v in edges:
            if not (0 <= u < n and 0 <= v < n):
                raise ValueError(f"edge ({u}, {v}) out of range")
            if u == v:
                raise ValueError(f"self-loop at vertex {u}")
            key = (min(u, v), max(u, v))
            if key in seen:
                raise ValueError(f"duplicate edge {key}")
            seen.add(key)
        for arr, name in ((vf, "vertex"), (ef, "edge")):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} factors must be finite")
            if np.any(arr < 0):
                raise ValueError(f"{name} factors must be nonnegative")
        vf.flags.writeable = False
        ef.flags.writeable = False
        object.__setattr__(self, "vertex_factors", vf)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "edge_factors", ef)
        if not _is_connected(n, edges):
            raise ValueError("graph must be connected")

    @property
    def n(self) -> int:
        return self.vertex_factors.shape[0]

    @property
    def m(self) -> int:
        return len(self.edges)

    @cached_property
    def edge_array(self) -> np.ndarray:
        arr = np.array(self.edges, dtype=np.intc).reshape(-1, 2)
        arr.flags.writeable = False
        return arr

    @cached_property
    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=np.intc)
        for u, v in self.edges:
            deg[u] += 1
            deg[v] += 1
        return deg

    @property
    def max_degree(self) -> int:
        return int(self.degrees.max()) if self.m else 0

    @cached_property
    def adjacency(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """CSR adjacency ``(indptr, neighbor, incident_edge)``.

        Neighbors of each vertex are listed in increasing edge index.
        """
        n = self.n
        rows: list[list[tuple[int, int]]] = [[] for _ in range(n)]
        for e, (u, v) in enumerate(self.edges):
            rows[u].append((v, e))
            rows[v].append((u, e))
        indptr = np.zeros(n + 1, dtype=np.intc)
        nbr = np.zeros(2 * self.m, dtype=np.intc)
        nbr_edge = np.zeros(2 * self.m, dtype=np.intc)
        pos = 0
        for v in range(n):
            for w, e in rows[v]:
                nbr[pos] = w
                nbr_edge[pos] = e
                pos += 1
            indptr[v + 1] = pos
        for arr in (indptr, nbr, nbr_edge):
            arr.flags.writeable = False
        return indptr, nbr, nbr_edge

    def neighbors(self, v: int) -> list[tuple[int, int]]:
        """``[(neighbor, edge_index), ...]`` of vertex ``v``."""
        indptr, nbr, nbr_edge = self.adjacency
        lo, hi = indptr[v], indptr[v + 1]
        return list(zip(nbr[lo:hi].tolist(), nbr_edge[lo:hi].tolist()))

    @property
    def cyclomatic_number(self) -> int:
        return self.m - self.n + 1

    def relabeled(self, vertex_perm: Sequence[int], edge_perm: Sequence[int]) -> "PairwiseModel":
        """Model with vertex ``v`` renamed ``vertex_perm[v]`` and edge ``e``
        moved to position ``edge_perm[e]``."""
        vperm = list(vertex_perm)
        vf = np.empty_like(self.vertex_factors)
        vf[vperm] = self.vertex_factors
        edges = [None] * self.m
        ef = np.empty_like(self.edge_factors)
        for e, (u, v) in enumerate(self.edges):
            edges[edge_perm[e]] = (vperm[u], vperm[v])
            ef[edge_perm[e]] = self.edge_factors[e]
        return PairwiseModel(vf, tuple(edges), ef)


def _is_connected(n: int, edges) -> bool:
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    comps = n
    for u, v in edges:
        ru, rv = find(u), find(v)
        if ru != rv:
            parent[ru] = rv
            comps -= 1
    return comps == 1


# --------------------------------------------------------------------------
# degree reduction

DELTA_TABLE = np.array([[1.0, 0.0], [0.0, 1.0]])


@dataclass(frozen=True)
class VertexMap:
    """``replicas[v]`` lists the transformed-model vertices standing for ``v``.

    The first replica keeps the original vertex index and carries its factor.
    """

    replicas: tuple

    def __getitem__(self, v: int) -> tuple:
        return self.replicas[v]

    def __len__(self) -> int:
        return len(self.replicas)

    @property
    def is_identity(self) -> bool:
        return all(len(r) == 1 and r[0] == v for v, r in enumerate(self.replicas))


def degree3_transform(model: PairwiseModel, layout: str = "cycle") -> tuple[PairwiseModel, VertexMap]:
    """Equivalent model with maximum degree at most 3.

    Each vertex of degree ``d > 3`` becomes ``d`` replicas, one original edge
    attached to each replica, joined by equality factors. The partition
    function is unchanged. Original edges keep their indices; equality edges
    are appended after them.

    Parameters
    ----------
    layout : {"cycle", "path"}
        ``"cycle"`` closes the replicas into a ring of ``d`` equality edges.
        ``"path"`` chains them with ``d - 1`` edges; the replicas then form a
        tree, so BP on the result reproduces BP on the input. On a ring the
        BP messages keep re-counting the replicas' evidence and the fixed
        point degenerates unless that evidence is symmetric.
    """
    if layout not in ("cycle", "path"):
        raise ValueError(f"unknown layout {layout!r}")
    n = model.n
    deg = model.degrees
    if model.m == 0 or deg.max() <= 3:
        return model, VertexMap(tuple((v,) for v in range(n)))

    next_id = n
    replicas: list[tuple[int, ...]] = []
    # endpoint substitution per (edge, original vertex)
    slot: dict[tuple[int, int], int] = {}
    for v in range(n):
        if deg[v] <= 3:
            replicas.append((v,))
            continue
        inc = [e for _, e in model.neighbors(v)]
        reps = [v] + list(range(next_id, next_id + len(inc) - 1))
        next_id += len(inc) - 1
        for r, e in zip(reps, inc):
            slot[(e, v)] = r
        replicas.append(tuple(reps))

    vf = np.ones((next_id, 2))
    vf[:n] = model.vertex_factors
    new_edges = []
    tables = []
    for e, (u, v) in enumerate(model.edges):
        new_edges.append((slot.get((e, u), u), slot.get((e, v), v)))
        tables.append(model.edge_factors[e])
    for reps in replicas:
        if len(reps) == 1:
            continue
        k = len(reps)
        for i in range(k if layout == "cycle" else k - 1):
            new_edges.append((reps[i], reps[(i + 1) % k]))
            tables.append(DELTA_TABLE)
    out = PairwiseModel(vf, tuple(new_edges), np.array(tables))
    return out, VertexMap(tuple(replicas))


# --------------------------------------------------------------------------
# exhaustive inference

def _log_tables(model: PairwiseModel) -> tuple[np.ndarray, np.ndarray]:
    with np.errstate(divide="ignore"):
        return np.log(model.vertex_factors), np.log(model.edge_factors)


def exact_partition(model: PairwiseModel, chunk_bits: int = 16) -> float:
    """``log Z`` by summing all ``2**n`` configurations.

    Configurations are visited in increasing integer order with bit ``v``
    holding ``x_v``; per-configuration log weights accumulate vertices then
    edges in index order.
    """
    n = model.n
    if n > EXACT_MAX_VERTICES:
        raise SizeGuardError(f"exact_partition limited to n <= {EXACT_MAX_VERTICES}, got {n}")
    lvf, lef = _log_tables(model)
    eu = model.edge_array[:, 0]
    ev = model.edge_array[:, 1]
    chunk = 1 << min(n, chunk_bits)
    total = 1 << n
    partial_max = []
    partial_sum = []
    shifts = np.arange(n, dtype=np.int64)
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total), dtype=np.int64)
        x = ((idx[:, None] >> shifts) & 1).astype(np.intp)
        lw = np.zeros(len(idx))
        for v in range(n):
            lw += lvf[v, x[:, v]]
        for e in range(model.m):
            lw += lef[e, x[:, eu[e]], x[:, ev[e]]]
        mx = lw.max()
        if mx == -np.inf:
            continue
        partial_max.append(mx)
        partial_sum.append(np.exp(lw - mx).sum())
    if not partial_max:
        raise ValueError("all configurations have zero weight")
    top = max(partial_max)
    s = math.fsum(ps * math.exp(pm - top) for pm, ps in zip(partial_max, partial_sum))
    return float(top) + math.log(s)


def exact_marginals(model: PairwiseModel) -> tuple[np.ndarray, np.ndarray]:
    """Exact ``P[x_v = 1]`` per vertex and joint tables per edge (small n)."""
    n = model.n
    if n > 20:
        raise SizeGuardError("exact_marginals limited to n <= 20")
    lvf, lef = _log_tables(model)
    idx = np.arange(1 << n, dtype=np.int64)
    x = ((idx[:, None] >> np.arange(n)) & 1).astype(np.intp)
    lw = np.zeros(len(idx))
    for v in range(n):
        lw += lvf[v, x[:, v]]
    for e, (u, v) in enumerate(model.edges):
        lw += lef[e, x[:, u], x[:, v]]
    p = np.exp(lw - lw.max())
    p /= p.sum()
    tau_v = p @ x
    tau_uv = np.zeros((model.m, 2, 2))
    for e, (u, v) in enumerate(model.edges):
        for a in (0, 1):
            for b in (0, 1):
                tau_uv[e, a, b] = p[(x[:, u] == a) & (x[:, v] == b)].sum()
    return tau_v, tau_uv


# --------------------------------------------------------------------------
# generators

def grid_edges(side: int) -> list[tuple[int, int]]:
    """Edges of the ``side x side`` grid; vertex ``r*side + c``, right edge
    before down edge at each site."""
    edges = []
    for r in range(side):
        for c in range(side):
            v = r * side + c
            if c + 1 < side:
                edges.append((v, v + 1))
            if r + 1 < side:
                edges.append((v, v + side))
    return edges


def ising_tables(couplings, fields) -> tuple[np.ndarray, np.ndarray]:
    """Factor tables for spins ``sigma = 2x - 1``:
    ``psi_uv = exp(J sigma_u sigma_v)``, ``psi_v = exp(h sigma_v)``."""
    J = np.asarray(couplings, dtype=np.float64)
    h = np.asarray(fields, dtype=np.float64)
    ef = np.empty((len(J), 2, 2))
    ef[:, 0, 0] = ef[:, 1, 1] = np.exp(J)
    ef[:, 0, 1] = ef[:, 1, 0] = np.exp(-J)
    vf = np.stack([np.exp(-h), np.exp(h)], axis=1)
    return vf, ef


def ising_model(edges, couplings, fields) -> PairwiseModel:
    vf, ef = ising_tables(couplings, fields)
    return PairwiseModel(vf, tuple(edges), ef)


def gen_glassy_ising(side: int, mean_coupling: float, coupling_std: float,
                     field_std: float = 0.0, seed=None) -> PairwiseModel:
    """Grid Ising model with ``J ~ N(mean, std^2)`` and ``h ~ N(0, field_std^2)``.

    Couplings are drawn before fields, so ``field_std`` does not perturb the
    coupling stream.
    """
    if side < 2:
        raise ValueError("side must be >= 2")
    rng = np.random.default_rng(seed)
    edges = grid_edges(side)
    J = rng.normal(mean_coupling, coupling_std, size=len(edges)) if coupling_std > 0 \
        else np.full(len(edges), float(mean_coupling))
    if field_std > 0:
        h = rng.normal(0.0, field_std, size=side * side)
    else:
        h = np.zeros(side * side)
    return ising_model(edges, J, h)


def gen_hardcore(side: int, fugacity: float) -> PairwiseModel:
    """Hard-core (independent set) model on the grid with activity
    ``fugacity``."""
    if not fugacity > 0:
        raise ValueError("fugacity must be positive")
    if side < 1:
        raise ValueError("side must be >= 1")
    n = side * side
    edges = grid_edges(side)
    vf = np.tile([1.0, float(fugacity)], (n, 1))
    ef = np.tile(np.array([[1.0, 1.0], [1.0, 0.0]]), (len(edges), 1, 1))
    return PairwiseModel(vf, tuple(edges), ef)


# --------------------------------------------------------------------------
# text format

def dumps_model(model: PairwiseModel) -> str:
    buf = io.StringIO()
    buf.write("# loopmc pairwise binary model\n")
    buf.write(f"n {model.n}\n")
    buf.write(f"m {model.m}\n")
    buf.write("vertex_factors\n")
    for row in model.vertex_factors:
        buf.write(f"{float(row[0])!r} {float(row[1])!r}\n")
    buf.write("edges\n")
    for (u, v), t in zip(model.edges, model.edge_factors):
        vals = " ".join(repr(float(x)) for x in t.ravel())
        buf.write(f"{u} {v} {vals}\n")
    return buf.getvalue()


def loads_model(text: str) -> PairwiseModel:
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    header: dict[str, int] = {}
    pos = 0
    try:
        while pos < len(lines) and lines[pos] != "vertex_factors":
            key, val = lines[pos].split()
            header[key] = int(val)
            pos += 1
        n, m = header["n"], header["m"]
        if lines[pos] != "vertex_factors":
            raise ModelFormatError("missing vertex_factors section")
        vf = [_floats(lines[pos + 1 + i], 2) for i in range(n)]
        pos += 1 + n
        if lines[pos] != "edges":
            raise ModelFormatError("missing edges section")
        edges, ef = [], []
        for i in range(m):
            parts = lines[pos + 1 + i].split()
            if len(parts) != 6:
                raise ModelFormatError(f"edge row {i} needs 6 fields")
            edges.append((int(parts[0]), int(parts[1])))
            ef.append(_floats(" ".join(parts[2:]), 4))
        if pos + 1 + m != len(lines):
            raise ModelFormatError("trailing content after edges")
    except (KeyError, IndexError, ValueError) as exc:
        if isinstance(exc, ModelFormatError):
            raise
        raise ModelFormatError(f"malformed model file: {exc}") from exc
    try:
        return PairwiseModel(np.array(vf).reshape(n, 2), tuple(edges),
                             np.array(ef).reshape(m, 2, 2))
    except ValueError as exc:
        raise ModelFormatError(str(exc)) from exc


def _floats(line: str, k: int) -> list[float]:
    parts = line.split()
    if len(parts) != k:
        raise ModelFormatError(f"expected {k} values, got {line!r}")
    vals = [float(p) for p in parts]
    for x in vals:
        if math.isnan(x) or x < 0 or math.isinf(x):
            raise ModelFormatError(f"invalid factor entry {x!r}")
    return vals


def write_model(path, model: PairwiseModel) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_model(model))


def read_model(path) -> PairwiseModel:
    with open(path) as fh:
        return loads_model(fh.read())
