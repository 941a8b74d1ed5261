"""Loop-series weights, subgraph classes and exhaustive loop-series oracles.

Edge subsets are Python ``int`` bitmasks: bit ``e`` set means edge ``e`` is
in the subgraph. Signed quantities are carried as a log-magnitude plus sign
(``SignedLog``) since products over many edges underflow.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from .bp import BPFixedPoint, check_nondegenerate
from .errors import SizeGuardError
from .model import PairwiseModel

ENUM_MAX_EDGES = 22


class SignedLog(NamedTuple):
    """Real number ``sign * exp(log_abs)``; zero is ``(-inf, 0)``."""

    log_abs: float
    sign: int

    @property
    def value(self) -> float:
        return self.sign * math.exp(self.log_abs) if self.sign else 0.0


class LoopClass(enum.Enum):
    EMPTY = "empty"
    GENERALIZED_LOOP = "generalized_loop"
    TWO_REGULAR = "two_regular"
    TWO_ODD = "two_odd"
    OTHER = "other"


def degrees_of(mask: int, edges, n: int) -> tuple[int, ...]:
    deg = [0] * n
    e = 0
    while mask:
        if mask & 1:
            u, v = edges[e]
            deg[u] += 1
            deg[v] += 1
        mask >>= 1
        e += 1
    return tuple(deg)


def mask_of(edge_ids: Iterable[int]) -> int:
    mask = 0
    for e in edge_ids:
        mask |= 1 << int(e)
    return mask


def edges_of(mask: int) -> list[int]:
    out = []
    e = 0
    while mask:
        if mask & 1:
            out.append(e)
        mask >>= 1
        e += 1
    return out


@dataclass(frozen=True)
class EdgeSubgraph:
    """Edge subset with its per-vertex degree vector."""

    mask: int
    degrees: tuple

    @classmethod
    def from_mask(cls, model: PairwiseModel, mask: int) -> "EdgeSubgraph":
        return cls(int(mask), degrees_of(int(mask), model.edges, model.n))

    @classmethod
    def from_edges(cls, model: PairwiseModel, edge_ids: Iterable[int]) -> "EdgeSubgraph":
        return cls.from_mask(model, mask_of(edge_ids))

    @classmethod
    def empty(cls, model: PairwiseModel) -> "EdgeSubgraph":
        return cls(0, (0,) * model.n)

    def xor(self, model: PairwiseModel, mask: int) -> "EdgeSubgraph":
        return EdgeSubgraph.from_mask(model, self.mask ^ mask)

    @property
    def edge_ids(self) -> list[int]:
        return edges_of(self.mask)

    @property
    def size(self) -> int:
        return bin(self.mask).count("1")

    @property
    def odd_vertices(self) -> tuple[int, ...]:
        return tuple(v for v, d in enumerate(self.degrees) if d % 2)

    def is_coherent(self, model: PairwiseModel) -> bool:
        return self.degrees == degrees_of(self.mask, model.edges, model.n)


def classify_degrees(degrees) -> LoopClass:
    touched = [d for d in degrees if d > 0]
    if not touched:
        return LoopClass.EMPTY
    if all(d == 2 for d in touched):
        return LoopClass.TWO_REGULAR
    if all(d >= 2 for d in touched):
        return LoopClass.GENERALIZED_LOOP
    if sum(d % 2 for d in degrees) == 2:
        return LoopClass.TWO_ODD
    return LoopClass.OTHER


def classify_subgraph(F: EdgeSubgraph) -> LoopClass:
    """Most specific class of ``F``.

    Classes are exclusive with precedence Empty, TwoRegular,
    GeneralizedLoop, TwoOdd, Other. Use :func:`in_loops` and
    :func:`in_two_regular` for set membership, where the empty subgraph
    belongs to both.
    """
    return classify_degrees(F.degrees)


def in_loops(F: EdgeSubgraph) -> bool:
    return all(d != 1 for d in F.degrees)


def in_two_regular(F: EdgeSubgraph) -> bool:
    return all(d in (0, 2) for d in F.degrees)


# --------------------------------------------------------------------------
# weights

@dataclass(frozen=True, eq=False)
class WeightTables:
    """Per-edge and per-(vertex, degree) factors of the loop weight.

    ``edge_log[e]`` / ``edge_neg[e]``: ``log|tau_uv(1,1)/(tau_u tau_v) - 1|``
    and whether that factor is negative. ``vert_log[v, d]`` / ``vert_neg[v, d]``
    describe the vertex factor at subgraph degree ``d`` (column 0 is unused
    and set to the neutral value).
    """

    edge_log: np.ndarray
    edge_neg: np.ndarray
    vert_log: np.ndarray
    vert_neg: np.ndarray


def weight_tables(fp: BPFixedPoint, model: PairwiseModel) -> WeightTables:
    check_nondegenerate(fp)
    t = np.asarray(fp.tau_v, dtype=np.float64)
    eu = model.edge_array[:, 0]
    ev = model.edge_array[:, 1]
    eterm = fp.tau_uv[:, 1, 1] / (t[eu] * t[ev]) - 1.0
    with np.errstate(divide="ignore"):
        edge_log = np.log(np.abs(eterm))
    edge_neg = (eterm < 0).astype(np.uint8)
    dmax = max(model.max_degree, 1)
    vert_log = np.zeros((model.n, dmax + 1))
    vert_neg = np.zeros((model.n, dmax + 1), dtype=np.uint8)
    rho = t / (1.0 - t)
    for d in range(1, dmax + 1):
        term = t + (-1.0) ** d * rho ** (d - 1) * t
        with np.errstate(divide="ignore"):
            vert_log[:, d] = np.log(np.abs(term))
        vert_neg[:, d] = term < 0
    # an odd-degree vertex term is exactly zero under a symmetric marginal
    exact_zero = np.isclose(t, 0.5, rtol=0, atol=0)
    for d in range(1, dmax + 1, 2):
        vert_log[exact_zero, d] = -np.inf
        vert_neg[exact_zero, d] = 0
    for arr in (edge_log, edge_neg, vert_log, vert_neg):
        arr.flags.writeable = False
    return WeightTables(edge_log, edge_neg, vert_log, vert_neg)


def weight_from_degrees(tables: WeightTables, mask: int, degrees) -> SignedLog:
    if mask == 0:
        return SignedLog(0.0, 1)
    log_abs = 0.0
    neg = 0
    for e in edges_of(mask):
        log_abs += tables.edge_log[e]
        neg ^= int(tables.edge_neg[e])
    for v, d in enumerate(degrees):
        if d > 0:
            log_abs += tables.vert_log[v, d]
            neg ^= int(tables.vert_neg[v, d])
    if log_abs == -math.inf:
        return SignedLog(-math.inf, 0)
    return SignedLog(float(log_abs), -1 if neg else 1)


def loop_weight(F: EdgeSubgraph, fp: BPFixedPoint, model: PairwiseModel,
                tables: WeightTables | None = None) -> SignedLog:
    """Loop-series term of a generalized loop ``F`` (``w(empty) = 1``)."""
    if not in_loops(F):
        raise ValueError("loop_weight requires a generalized loop")
    if tables is None:
        tables = weight_tables(fp, model)
    return weight_from_degrees(tables, F.mask, F.degrees)


# --------------------------------------------------------------------------
# enumeration oracles

_FILTERS = {
    None: None,
    "all": None,
    "loops": "loops",
    "two_regular": "two_regular",
}


def _check_enum(model: PairwiseModel):
    if model.m > ENUM_MAX_EDGES:
        raise SizeGuardError(f"enumeration limited to m <= {ENUM_MAX_EDGES}, got {model.m}")


def _mask_chunks(m: int, chunk_bits: int = 18):
    total = 1 << m
    chunk = 1 << min(m, chunk_bits)
    shifts = np.arange(m, dtype=np.int64)
    for start in range(0, total, chunk):
        masks = np.arange(start, min(start + chunk, total), dtype=np.int64)
        bits = ((masks[:, None] >> shifts) & 1).astype(np.int8)
        yield masks, bits


def _incidence(model: PairwiseModel) -> np.ndarray:
    inc = np.zeros((model.m, model.n), dtype=np.int8)
    for e, (u, v) in enumerate(model.edges):
        inc[e, u] = 1
        inc[e, v] = 1
    return inc


def class_codes(degrees: np.ndarray) -> np.ndarray:
    """Vectorized :func:`classify_degrees` over rows; returns enum indices
    into ``list(LoopClass)``."""
    touched = degrees > 0
    any_t = touched.any(axis=1)
    two_reg = np.all((degrees == 0) | (degrees == 2), axis=1) & any_t
    gl = np.all(degrees != 1, axis=1) & any_t & ~two_reg
    two_odd = ((degrees % 2).sum(axis=1) == 2) & ~gl & ~two_reg
    codes = np.full(len(degrees), 4, dtype=np.int8)
    codes[two_odd] = 3
    codes[gl] = 1
    codes[two_reg] = 2
    codes[~any_t] = 0
    return codes


_CLASS_LIST = list(LoopClass)


def loop_masks(model: PairwiseModel, class_filter=None) -> np.ndarray:
    """Bitmasks (ascending) of edge subsets matching ``class_filter``.

    ``class_filter`` is a :class:`LoopClass`, a set of them, or one of the
    strings ``"loops"`` (Empty plus every generalized loop),
    ``"two_regular"`` (Empty plus every 2-regular loop) or ``None`` (all
    subsets).
    """
    _check_enum(model)
    if isinstance(class_filter, str):
        wanted = {
            "loops": {LoopClass.EMPTY, LoopClass.GENERALIZED_LOOP, LoopClass.TWO_REGULAR},
            "two_regular": {LoopClass.EMPTY, LoopClass.TWO_REGULAR},
            "all": None,
        }[class_filter]
    elif isinstance(class_filter, LoopClass):
        wanted = {class_filter}
    elif class_filter is None:
        wanted = None
    else:
        wanted = set(class_filter)
    inc = _incidence(model)
    out = []
    codes_wanted = None if wanted is None else np.array([_CLASS_LIST.index(c) for c in wanted])
    for masks, bits in _mask_chunks(model.m):
        if codes_wanted is None:
            out.append(masks)
            continue
        deg = bits.astype(np.int16) @ inc.astype(np.int16)
        codes = class_codes(deg)
        out.append(masks[np.isin(codes, codes_wanted)])
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def enumerate_loops(model: PairwiseModel, class_filter=None) -> list[EdgeSubgraph]:
    """All edge subsets of the requested class, ascending by bitmask."""
    return [EdgeSubgraph.from_mask(model, int(mk)) for mk in loop_masks(model, class_filter)]


def masks_weights(model: PairwiseModel, tables: WeightTables, masks: np.ndarray):
    """Vectorized loop weights of subgraph bitmasks: ``(log_abs, sign)``."""
    masks = np.asarray(masks, dtype=np.int64)
    if masks.size == 0:
        return np.zeros(0), np.zeros(0, dtype=np.int8)
    shifts = np.arange(model.m, dtype=np.int64)
    bits = ((masks[:, None] >> shifts) & 1).astype(bool)
    deg = bits.astype(np.int16) @ _incidence(model).astype(np.int16)
    with np.errstate(invalid="ignore"):
        log_abs = np.where(bits, tables.edge_log[None, :], 0.0).sum(axis=1)
    neg = (bits & tables.edge_neg[None, :].astype(bool)).sum(axis=1)
    rows = np.arange(model.n)[None, :]
    vl = tables.vert_log[rows, deg]
    vn = tables.vert_neg[rows, deg]
    touched = deg > 0
    log_abs = log_abs + np.where(touched, vl, 0.0).sum(axis=1)
    neg = neg + np.where(touched, vn, 0).sum(axis=1)
    sign = np.where(neg % 2 == 1, -1, 1).astype(np.int8)
    sign[np.isneginf(log_abs)] = 0
    return log_abs, sign


def signed_logsum(log_abs: np.ndarray, sign: np.ndarray) -> SignedLog:
    """``sum(sign * exp(log_abs))`` as a ``SignedLog`` using exact
    (``math.fsum``) accumulation in a fixed order."""
    live = sign != 0
    if not np.any(live):
        return SignedLog(-math.inf, 0)
    la = log_abs[live]
    sg = sign[live]
    top = float(la.max())
    total = math.fsum((sg * np.exp(la - top)).tolist())
    if total == 0:
        return SignedLog(-math.inf, 0)
    return SignedLog(top + math.log(abs(total)), 1 if total > 0 else -1)


def ls_oracle(model: PairwiseModel, fp: BPFixedPoint, truncation: str = "full") -> SignedLog:
    """Exact loop series (``"full"``) or its 2-regular truncation
    (``"two_regular"``) by exhaustive enumeration."""
    cls = {"full": "loops", "two_regular": "two_regular"}[truncation]
    tables = weight_tables(fp, model)
    masks = loop_masks(model, cls)
    la, sg = masks_weights(model, tables, masks)
    return signed_logsum(la, sg)


def abs_series(model: PairwiseModel, fp: BPFixedPoint, truncation: str = "full",
               beta: float = 1.0) -> float:
    """``log sum |w(F)|**beta`` over the chosen loop family."""
    cls = {"full": "loops", "two_regular": "two_regular"}[truncation]
    tables = weight_tables(fp, model)
    la, sg = masks_weights(model, tables, loop_masks(model, cls))
    la = la[sg != 0] * beta
    top = la.max()
    return float(top + math.log(math.fsum(np.exp(la - top).tolist())))


def loop_distribution(model: PairwiseModel, fp: BPFixedPoint, truncation: str = "full",
                      beta: float = 1.0):
    """Exact ``pi(F) ∝ |w(F)|**beta`` over the loop family.

    Returns ``(masks, probabilities, signs)``.
    """
    cls = {"full": "loops", "two_regular": "two_regular"}[truncation]
    tables = weight_tables(fp, model)
    masks = loop_masks(model, cls)
    la, sg = masks_weights(model, tables, masks)
    la = np.where(sg != 0, la * beta, -np.inf)
    p = np.exp(la - la.max())
    p /= p.sum()
    return masks, p, sg
