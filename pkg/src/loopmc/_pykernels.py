"""Pure-Python reference implementations of the hot Monte Carlo loops.

These mirror ``_kernels.pyx`` statement for statement (same RNG draws in the
same order, same floating-point operations) so the two backends return
identical output for identical seeds. They are slow; the compiled module is
selected automatically when it is importable.
"""
from __future__ import annotations

import math

import numpy as np

from .rng import KernelRNG

NEG_INF = -math.inf


def worm_batch(indptr, nbr, nbr_edge, w_add, w_del, n_samples, n_trials, n_steps, seed):
    """Draw ``n_samples`` outputs of the trial-restart worm sampler.

    ``w_add[e]`` / ``w_del[e]`` are the weight ratios for inserting and
    removing edge ``e`` (``|w(e)|`` and ``1/|w(e)|``). Returns
    ``(masks, failures, trials)`` where ``masks`` is a ``(n_samples, m)``
    uint8 array of edge indicators.
    """
    indptr = [int(x) for x in indptr]
    nbr = [int(x) for x in nbr]
    nbr_edge = [int(x) for x in nbr_edge]
    w_add = [float(x) for x in w_add]
    w_del = [float(x) for x in w_del]
    n = len(indptr) - 1
    m = len(w_add)
    deg = [indptr[v + 1] - indptr[v] for v in range(n)]
    # degree ratio d(v)/d(u) for directed slot j = (v -> u)
    dr = [0.0] * len(nbr)
    for v in range(n):
        for j in range(indptr[v], indptr[v + 1]):
            dr[j] = float(deg[v]) / float(deg[nbr[j]])
    rng = KernelRNG(seed)
    out = np.zeros((n_samples, m), dtype=np.uint8)
    failures = 0
    trials = 0
    for s in range(n_samples):
        in_f = [0] * m
        accepted = False
        for _trial in range(n_trials):
            trials += 1
            for e in range(m):
                in_f[e] = 0
            n_odd = 0
            odd0 = -1
            odd1 = -1
            for _t in range(n_steps):
                if n_odd == 0:
                    v = rng.randint(n)
                elif rng.randint(2) == 0:
                    v = odd0
                else:
                    v = odd1
                dv = deg[v]
                j = indptr[v] + rng.randint(dv)
                u = nbr[j]
                e = nbr_edge[j]
                acc = w_del[e] if in_f[e] else w_add[e]
                other = -1
                if n_odd != 0:
                    other = odd1 if odd0 == v else odd0
                    if u != other:
                        acc = acc * dr[j]
                if acc >= 1.0 or rng.uniform() < acc:
                    in_f[e] ^= 1
                    if n_odd == 0:
                        n_odd = 2
                        odd0 = v
                        odd1 = u
                    elif u == other:
                        n_odd = 0
                        odd0 = -1
                        odd1 = -1
                    else:
                        odd0 = other
                        odd1 = u
            if n_odd == 0:
                accepted = True
                break
        if accepted:
            out[s, :] = in_f
        else:
            failures += 1
    return out, failures, trials


def loop_chain(move_indptr, move_edges, edge_u, edge_v, edge_log, edge_neg,
               vert_log, vert_neg, n, beta, burn_in, thin, count, seed):
    """Run the cycle/path Metropolis chain over generalized loops from the
    empty subgraph and record ``count`` states spaced ``thin`` steps apart
    after ``burn_in``.

    ``vert_log``/``vert_neg`` are ``(n, dmax + 1)`` tables of the vertex term
    indexed by subgraph degree. Returns ``(masks, log_abs, neg_parity)`` with
    the log-magnitude and sign parity of the unscaled weight.
    """
    move_indptr = [int(x) for x in move_indptr]
    move_edges = [int(x) for x in move_edges]
    edge_u = [int(x) for x in edge_u]
    edge_v = [int(x) for x in edge_v]
    edge_log = [float(x) for x in edge_log]
    edge_neg = [int(x) for x in edge_neg]
    vert_log = [[float(x) for x in row] for row in vert_log]
    vert_neg = [[int(x) for x in row] for row in vert_neg]
    m = len(edge_u)
    n_moves = len(move_indptr) - 1
    rng = KernelRNG(seed)
    in_f = [0] * m
    deg = [0] * n
    ddeg = [0] * n
    stamp = [-1] * n
    touched = []
    cur_log = 0.0
    cur_neg = 0
    masks = np.zeros((count, m), dtype=np.uint8)
    log_abs = np.zeros(count, dtype=np.float64)
    neg = np.zeros(count, dtype=np.uint8)
    total = burn_in + thin * count
    rec = 0
    next_rec = burn_in + thin
    for step in range(1, total + 1):
        b = rng.randint(n_moves)
        touched.clear()
        dlog = 0.0
        dneg = 0
        for j in range(move_indptr[b], move_indptr[b + 1]):
            e = move_edges[j]
            delta = -1 if in_f[e] else 1
            if in_f[e]:
                dlog -= edge_log[e]
            else:
                dlog += edge_log[e]
            dneg ^= edge_neg[e]
            for w in (edge_u[e], edge_v[e]):
                if stamp[w] != step:
                    stamp[w] = step
                    ddeg[w] = 0
                    touched.append(w)
                ddeg[w] += delta
        valid = True
        for w in touched:
            nd = deg[w] + ddeg[w]
            if nd == 1:
                valid = False
                break
        r = rng.uniform()
        if valid:
            for w in touched:
                od = deg[w]
                nd = od + ddeg[w]
                if od > 0:
                    dlog -= vert_log[w][od]
                    dneg ^= vert_neg[w][od]
                if nd > 0:
                    dlog += vert_log[w][nd]
                    dneg ^= vert_neg[w][nd]
            logacc = beta * dlog
            if logacc >= 0.0 or math.log(r) < logacc:
                for j in range(move_indptr[b], move_indptr[b + 1]):
                    in_f[move_edges[j]] ^= 1
                for w in touched:
                    deg[w] += ddeg[w]
                cur_log += dlog
                cur_neg ^= dneg
        if step == next_rec and rec < count:
            masks[rec, :] = in_f
            log_abs[rec] = cur_log
            neg[rec] = cur_neg
            rec += 1
            next_rec += thin
    return masks, log_abs, neg


def gibbs_ais(indptr, nbr, nbr_edge, edge_u, edge_v, log_vf, log_ef, betas,
              n_particles, sweeps, seed):
    """Annealed importance sampling with single-site Gibbs transitions.

    Returns the log importance weight of each particle relative to the
    uniform distribution at ``betas[0] == 0``.
    """
    indptr = [int(x) for x in indptr]
    nbr = [int(x) for x in nbr]
    nbr_edge = [int(x) for x in nbr_edge]
    edge_u = [int(x) for x in edge_u]
    edge_v = [int(x) for x in edge_v]
    log_vf = [[float(x) for x in row] for row in log_vf]
    log_ef = [[[float(x) for x in r] for r in tab] for tab in log_ef]
    betas = [float(b) for b in betas]
    n = len(indptr) - 1
    m = len(edge_u)
    rng = KernelRNG(seed)
    out = np.zeros(n_particles, dtype=np.float64)
    x = [0] * n
    for p in range(n_particles):
        for v in range(n):
            x[v] = rng.randint(2)
        logw = 0.0
        for k in range(1, len(betas)):
            lf = 0.0
            for v in range(n):
                lf += log_vf[v][x[v]]
            for e in range(m):
                lf += log_ef[e][x[edge_u[e]]][x[edge_v[e]]]
            logw += (betas[k] - betas[k - 1]) * lf
            beta = betas[k]
            for _sw in range(sweeps):
                for v in range(n):
                    a0 = log_vf[v][0]
                    a1 = log_vf[v][1]
                    for j in range(indptr[v], indptr[v + 1]):
                        e = nbr_edge[j]
                        u = nbr[j]
                        if edge_u[e] == v:
                            a0 += log_ef[e][0][x[u]]
                            a1 += log_ef[e][1][x[u]]
                        else:
                            a0 += log_ef[e][x[u]][0]
                            a1 += log_ef[e][x[u]][1]
                    r = rng.uniform()
                    if a1 == NEG_INF and a0 == NEG_INF:
                        continue
                    if a1 == NEG_INF:
                        p1 = 0.0
                    elif a0 == NEG_INF:
                        p1 = 1.0
                    else:
                        z = beta * (a0 - a1)
                        p1 = 0.0 if z > 700.0 else 1.0 / (1.0 + math.exp(z))
                    x[v] = 1 if r < p1 else 0
        out[p] = logw
    return out


def rng_stream(seed, count, k=0):
    """First ``count`` raw outputs (or ``randint(k)`` draws when ``k > 0``)."""
    r = KernelRNG(seed)
    draw = (lambda: r.randint(k)) if k > 0 else r.next_u64
    return np.array([draw() for _ in range(count)], dtype=np.uint64)
