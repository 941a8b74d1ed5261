"""Sum-product belief propagation and the Bethe free energy.

Directed edge ``2e`` carries the message ``u -> v`` and ``2e + 1`` the
message ``v -> u`` for ``edges[e] == (u, v)``. Messages are normalized pairs
``(m(0), m(1))``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateMarginal, ModelFormatError
from .model import PairwiseModel

DEGENERATE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class BPFixedPoint:
    """Final state of a BP run.

    Attributes
    ----------
    messages : ndarray, shape (2m, 2)
    tau_v : ndarray, shape (n,)
        Pseudo-marginal ``tau_v(1)``.
    tau_uv : ndarray, shape (m, 2, 2)
        Pairwise pseudo-marginals in edge orientation.
    bethe_log_z : float
    residual : float
        Largest message change in the final iteration.
    iterations : int
    converged : bool
        ``residual <= tol``.
    degenerate_resets : int
        Number of all-zero messages reset to uniform.
    """

    messages: np.ndarray
    tau_v: np.ndarray
    tau_uv: np.ndarray
    bethe_log_z: float
    residual: float
    iterations: int
    converged: bool
    tol: float
    damping: float
    degenerate_resets: int = 0
    meta: dict = field(default_factory=dict)

    def tau(self, v: int) -> np.ndarray:
        """``(tau_v(0), tau_v(1))``."""
        t = float(self.tau_v[v])
        return np.array([1.0 - t, t])


class _Plan:
    """Index arrays for vectorized synchronous updates."""

    def __init__(self, model: PairwiseModel):
        m = model.m
        n = model.n
        src = np.empty(2 * m, dtype=np.intp)
        dst = np.empty(2 * m, dtype=np.intp)
        src[0::2] = model.edge_array[:, 0]
        dst[0::2] = model.edge_array[:, 1]
        src[1::2] = model.edge_array[:, 1]
        dst[1::2] = model.edge_array[:, 0]
        incoming: list[list[int]] = [[] for _ in range(n)]
        for d in range(2 * m):
            incoming[dst[d]].append(d)
        sentinel = 2 * m
        dmax = max((len(x) for x in incoming), default=0)
        width = max(dmax - 1, 1)
        excl = np.full((2 * m, width), sentinel, dtype=np.intp)
        for d in range(2 * m):
            others = [d2 for d2 in incoming[src[d]] if d2 != (d ^ 1)]
            excl[d, : len(others)] = others
        full = np.full((n, max(dmax, 1)), sentinel, dtype=np.intp)
        for v in range(n):
            full[v, : len(incoming[v])] = incoming[v]
        tables = np.empty((2 * m, 2, 2))
        tables[0::2] = model.edge_factors
        tables[1::2] = np.transpose(model.edge_factors, (0, 2, 1))
        self.src, self.dst, self.excl, self.full, self.tables = src, dst, excl, full, tables


def _pre(model, plan, ext):
    """``psi_src(x) * prod of incoming messages except the reverse one``."""
    return model.vertex_factors[plan.src] * np.prod(ext[plan.excl], axis=1)


def run_bp(model: PairwiseModel, damping: float = 0.5, max_iters: int = 10_000,
           tol: float = 1e-10, init_messages=None) -> BPFixedPoint:
    """Damped synchronous BP from uniform (or given) messages.

    Each sweep replaces every message by
    ``(1 - damping) * update + damping * old``. The residual is the
    undamped change ``max |update - old|``, so it does not shrink with the
    damping; iteration stops once it is at most ``tol``. A run that exhausts
    ``max_iters`` is returned with ``converged=False``.
    """
    if not 0.0 <= damping < 1.0:
        raise ValueError("damping must lie in [0, 1)")
    if not tol > 0:
        raise ValueError("tol must be positive")
    m = model.m
    plan = _Plan(model)
    ext = np.ones((2 * m + 1, 2))
    if init_messages is not None:
        ext[:-1] = np.asarray(init_messages, dtype=np.float64)
    else:
        ext[:-1] = 0.5
    resets = 0
    residual = 0.0
    it = 0
    while it < max_iters and m > 0:
        it += 1
        pre = _pre(model, plan, ext)
        new = np.einsum("di,dij->dj", pre, plan.tables)
        s = new.sum(axis=1)
        bad = ~(s > 0)
        if bad.any():
            resets += int(bad.sum())
            new[bad] = 1.0
            s[bad] = 2.0
        new /= s[:, None]
        residual = float(np.max(np.abs(new - ext[:-1])))
        if damping:
            new = (1.0 - damping) * new + damping * ext[:-1]
        ext[:-1] = new
        if residual <= tol:
            break
    return _finish(model, plan, ext, residual, it, tol, damping, resets)


def _finish(model, plan, ext, residual, it, tol, damping, resets) -> BPFixedPoint:
    with np.errstate(invalid="ignore", divide="ignore"):
        bel = model.vertex_factors * np.prod(ext[plan.full], axis=1)
        z = bel.sum(axis=1)
        if np.any(~(z > 0)):
            raise DegenerateMarginal("vertex belief vanished; model has zero-weight support")
        bel /= z[:, None]
        pre = _pre(model, plan, ext)
        fwd = pre[0::2]  # over x_u
        bwd = pre[1::2]  # over x_v
        pair = fwd[:, :, None] * model.edge_factors * bwd[:, None, :]
        zp = pair.sum(axis=(1, 2))
        if np.any(~(zp > 0)):
            raise DegenerateMarginal("pair belief vanished")
        pair /= zp[:, None, None]
    log_z = bethe_log_partition(model, bel, pair)
    msgs = ext[:-1].copy()
    for arr in (msgs, bel, pair):
        arr.flags.writeable = False
    return BPFixedPoint(
        messages=msgs,
        tau_v=bel[:, 1].copy(),
        tau_uv=pair,
        bethe_log_z=log_z,
        residual=residual,
        iterations=it,
        converged=(residual <= tol) or model.m == 0,
        tol=tol,
        damping=damping,
        degenerate_resets=resets,
    )


def _xlogy(x, y):
    out = np.zeros(np.broadcast(x, y).shape)
    mask = np.broadcast_to(x > 0, out.shape)
    xb = np.broadcast_to(x, out.shape)
    yb = np.broadcast_to(y, out.shape)
    out[mask] = xb[mask] * np.log(yb[mask])
    return out


def bethe_log_partition(model: PairwiseModel, tau_v2: np.ndarray, tau_uv: np.ndarray) -> float:
    """Bethe approximation to ``log Z`` from vertex tables ``(n, 2)`` and
    pair tables ``(m, 2, 2)``."""
    eu = model.edge_array[:, 0]
    ev = model.edge_array[:, 1]
    energy = _xlogy(tau_v2, model.vertex_factors).sum() + _xlogy(tau_uv, model.edge_factors).sum()
    ent_v = _xlogy(tau_v2, tau_v2).sum()
    if model.m:
        prod = tau_v2[eu][:, :, None] * tau_v2[ev][:, None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(tau_uv > 0, tau_uv / prod, 1.0)
        mi = _xlogy(tau_uv, ratio).sum()
    else:
        mi = 0.0
    return float(energy - ent_v - mi)


def edge_weight_magnitudes(fp: BPFixedPoint, model: PairwiseModel) -> tuple[np.ndarray, np.ndarray]:
    """Normalized covariance of each edge's indicators under BP.

    Returns ``(signed_corr, magnitude)``; on a 2-regular loop the absolute
    loop weight is the product of the magnitudes.
    """
    t = np.asarray(fp.tau_v, dtype=np.float64)
    check_nondegenerate(fp)
    tu = t[model.edge_array[:, 0]]
    tv = t[model.edge_array[:, 1]]
    corr = (fp.tau_uv[:, 1, 1] - tu * tv) / np.sqrt(tu * tv * (1 - tu) * (1 - tv))
    mag = np.abs(corr)
    over = mag > 1.0
    # equality edges sit at exactly 1 only at an exact fixed point
    slack = 1e-9 + 100.0 * max(float(fp.tol), float(fp.residual))
    if np.any(mag > 1.0 + slack):
        raise ValueError("edge magnitude exceeds 1; pair tables inconsistent with marginals")
    mag[over] = 1.0
    return corr, mag


def check_nondegenerate(fp: BPFixedPoint) -> None:
    t = np.asarray(fp.tau_v)
    bad = np.flatnonzero((t <= DEGENERATE_TOL) | (t >= 1 - DEGENERATE_TOL))
    if bad.size:
        raise DegenerateMarginal(f"tau_v(1) in {{0, 1}} at vertices {bad.tolist()}")


# --------------------------------------------------------------------------
# serialization

def fixed_point_to_dict(fp: BPFixedPoint) -> dict:
    return {
        "format": "loopmc-bp-fixed-point",
        "bethe_log_z": fp.bethe_log_z,
        "tau_v": fp.tau_v.tolist(),
        "tau_uv": fp.tau_uv.tolist(),
        "messages": fp.messages.tolist(),
        "residual": fp.residual,
        "iterations": fp.iterations,
        "converged": fp.converged,
        "tol": fp.tol,
        "damping": fp.damping,
        "degenerate_resets": fp.degenerate_resets,
    }


def fixed_point_from_dict(d: dict) -> BPFixedPoint:
    if d.get("format") != "loopmc-bp-fixed-point":
        raise ModelFormatError("not a fixed-point file")
    return BPFixedPoint(
        messages=np.array(d["messages"], dtype=np.float64).reshape(-1, 2),
        tau_v=np.array(d["tau_v"], dtype=np.float64),
        tau_uv=np.array(d["tau_uv"], dtype=np.float64).reshape(-1, 2, 2),
        bethe_log_z=float(d["bethe_log_z"]),
        residual=float(d["residual"]),
        iterations=int(d["iterations"]),
        converged=bool(d["converged"]),
        tol=float(d["tol"]),
        damping=float(d["damping"]),
        degenerate_resets=int(d.get("degenerate_resets", 0)),
    )


def write_fixed_point(path, fp: BPFixedPoint) -> None:
    with open(path, "w") as fh:
        json.dump(fixed_point_to_dict(fp), fh, indent=1)


def read_fixed_point(path) -> BPFixedPoint:
    with open(path) as fh:
        return fixed_point_from_dict(json.load(fh))
