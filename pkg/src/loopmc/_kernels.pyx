# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Monte Carlo kernels.

Statement-for-statement twins of ``_pykernels``; see that module for the
contracts. Any change here must be mirrored there (the backend-equivalence
tests compare outputs bit for bit).
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport log, exp, INFINITY
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()


cdef struct Xoshiro:
    uint64_t s0
    uint64_t s1
    uint64_t s2
    uint64_t s3


cdef inline uint64_t _splitmix(uint64_t* state) nogil:
    cdef uint64_t z
    state[0] += <uint64_t>0x9E3779B97F4A7C15
    z = state[0]
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EB
    return z ^ (z >> 31)


cdef inline void _seed(Xoshiro* r, uint64_t seed) nogil:
    cdef uint64_t st = seed
    r.s0 = _splitmix(&st)
    r.s1 = _splitmix(&st)
    r.s2 = _splitmix(&st)
    r.s3 = _splitmix(&st)


cdef inline uint64_t _rotl(uint64_t x, int k) nogil:
    return (x << k) | (x >> (64 - k))


cdef inline uint64_t _next(Xoshiro* r) nogil:
    cdef uint64_t result = _rotl(r.s1 * 5, 7) * 9
    cdef uint64_t t = r.s1 << 17
    r.s2 ^= r.s0
    r.s3 ^= r.s1
    r.s1 ^= r.s2
    r.s0 ^= r.s3
    r.s2 ^= t
    r.s3 = _rotl(r.s3, 45)
    return result


cdef inline double _uniform(Xoshiro* r) nogil:
    return (<double>(_next(r) >> 11) + 0.5) * (1.0 / 9007199254740992.0)


cdef inline Py_ssize_t _randint(Xoshiro* r, Py_ssize_t k) nogil:
    return <Py_ssize_t>(((_next(r) >> 32) * <uint64_t>k) >> 32)


def worm_batch(const int[:] indptr, const int[:] nbr, const int[:] nbr_edge,
               const double[:] w_add, const double[:] w_del, Py_ssize_t n_samples,
               Py_ssize_t n_trials, Py_ssize_t n_steps, uint64_t seed):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t m = w_add.shape[0]
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] out_arr = np.zeros((n_samples, m), dtype=np.uint8)
    cdef unsigned char[:, :] out = out_arr
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] in_arr = np.zeros(m, dtype=np.uint8)
    cdef unsigned char[:] in_f = in_arr
    cdef Xoshiro rng
    cdef Py_ssize_t s, trial, t, e, k, v, u, other, n_odd, odd0, odd1, dv, j
    cdef int64_t failures = 0, trials = 0
    cdef double acc
    cdef bint accepted
    cdef const int* ip = &indptr[0]
    cdef const int* nb = &nbr[0]
    cdef const int* ne = &nbr_edge[0]
    cdef const double* wa = &w_add[0]
    cdef const double* wd = &w_del[0]
    cdef unsigned char* fin = &in_f[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] dr_arr = np.empty(nbr.shape[0])
    cdef double* dr = NULL
    # degree ratio d(v)/d(u) for directed slot j = (v -> u)
    for v in range(n):
        for j in range(indptr[v], indptr[v + 1]):
            u = nbr[j]
            dr_arr[j] = <double>(indptr[v + 1] - indptr[v]) / <double>(indptr[u + 1] - indptr[u])
    if nbr.shape[0]:
        dr = <double*>dr_arr.data
    _seed(&rng, seed)
    with nogil:
        for s in range(n_samples):
            accepted = False
            for trial in range(n_trials):
                trials += 1
                for e in range(m):
                    fin[e] = 0
                n_odd = 0
                odd0 = -1
                odd1 = -1
                for t in range(n_steps):
                    if n_odd == 0:
                        v = _randint(&rng, n)
                    elif _randint(&rng, 2) == 0:
                        v = odd0
                    else:
                        v = odd1
                    dv = ip[v + 1] - ip[v]
                    j = ip[v] + _randint(&rng, dv)
                    u = nb[j]
                    e = ne[j]
                    if fin[e]:
                        acc = wd[e]
                    else:
                        acc = wa[e]
                    other = -1
                    if n_odd != 0:
                        other = odd1 if odd0 == v else odd0
                        if u != other:
                            acc = acc * dr[j]
                    if acc >= 1.0 or _uniform(&rng) < acc:
                        fin[e] ^= 1
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
                for e in range(m):
                    out[s, e] = in_f[e]
            else:
                failures += 1
    return out_arr, int(failures), int(trials)


def loop_chain(const int[:] move_indptr, const int[:] move_edges,
               const int[:] edge_u, const int[:] edge_v,
               const double[:] edge_log, const unsigned char[:] edge_neg,
               const double[:, :] vert_log, const unsigned char[:, :] vert_neg,
               Py_ssize_t n, double beta, Py_ssize_t burn_in, Py_ssize_t thin,
               Py_ssize_t count, uint64_t seed):
    cdef Py_ssize_t m = edge_u.shape[0]
    cdef Py_ssize_t n_moves = move_indptr.shape[0] - 1
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] masks_arr = np.zeros((count, m), dtype=np.uint8)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] log_arr = np.zeros(count, dtype=np.float64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] neg_arr = np.zeros(count, dtype=np.uint8)
    cdef unsigned char[:, :] masks = masks_arr
    cdef double[:] log_abs = log_arr
    cdef unsigned char[:] neg = neg_arr
    cdef unsigned char[:] in_f = np.zeros(m, dtype=np.uint8)
    cdef int[:] deg = np.zeros(n, dtype=np.intc)
    cdef int[:] ddeg = np.zeros(n, dtype=np.intc)
    cdef int64_t[:] stamp = np.full(n, -1, dtype=np.int64)
    cdef int[:] touched = np.zeros(n, dtype=np.intc)
    cdef Py_ssize_t n_touched, i, j, b, e, w, od, nd, rec = 0
    cdef int64_t step, total = burn_in + thin * count, next_rec = burn_in + thin
    cdef int delta
    cdef double dlog, logacc, r, cur_log = 0.0
    cdef int dneg, cur_neg = 0
    cdef bint valid
    cdef Xoshiro rng
    _seed(&rng, seed)
    with nogil:
        for step in range(1, total + 1):
            b = _randint(&rng, n_moves)
            n_touched = 0
            dlog = 0.0
            dneg = 0
            for j in range(move_indptr[b], move_indptr[b + 1]):
                e = move_edges[j]
                if in_f[e]:
                    delta = -1
                    dlog -= edge_log[e]
                else:
                    delta = 1
                    dlog += edge_log[e]
                dneg ^= edge_neg[e]
                w = edge_u[e]
                if stamp[w] != step:
                    stamp[w] = step
                    ddeg[w] = 0
                    touched[n_touched] = w
                    n_touched += 1
                ddeg[w] += delta
                w = edge_v[e]
                if stamp[w] != step:
                    stamp[w] = step
                    ddeg[w] = 0
                    touched[n_touched] = w
                    n_touched += 1
                ddeg[w] += delta
            valid = True
            for i in range(n_touched):
                w = touched[i]
                if deg[w] + ddeg[w] == 1:
                    valid = False
                    break
            r = _uniform(&rng)
            if valid:
                for i in range(n_touched):
                    w = touched[i]
                    od = deg[w]
                    nd = od + ddeg[w]
                    if od > 0:
                        dlog -= vert_log[w, od]
                        dneg ^= vert_neg[w, od]
                    if nd > 0:
                        dlog += vert_log[w, nd]
                        dneg ^= vert_neg[w, nd]
                logacc = beta * dlog
                if logacc >= 0.0 or log(r) < logacc:
                    for j in range(move_indptr[b], move_indptr[b + 1]):
                        in_f[move_edges[j]] ^= 1
                    for i in range(n_touched):
                        w = touched[i]
                        deg[w] += ddeg[w]
                    cur_log += dlog
                    cur_neg ^= dneg
            if step == next_rec and rec < count:
                for e in range(m):
                    masks[rec, e] = in_f[e]
                log_abs[rec] = cur_log
                neg[rec] = cur_neg
                rec += 1
                next_rec += thin
    return masks_arr, log_arr, neg_arr


def gibbs_ais(const int[:] indptr, const int[:] nbr, const int[:] nbr_edge,
              const int[:] edge_u, const int[:] edge_v,
              const double[:, :] log_vf, const double[:, :, :] log_ef,
              const double[:] betas, Py_ssize_t n_particles, Py_ssize_t sweeps,
              uint64_t seed):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t m = edge_u.shape[0]
    cdef Py_ssize_t n_betas = betas.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out_arr = np.zeros(n_particles, dtype=np.float64)
    cdef double[:] out = out_arr
    cdef unsigned char[:] x = np.zeros(n, dtype=np.uint8)
    cdef Py_ssize_t p, v, k, e, j, u, sw
    cdef double logw, lf, beta, a0, a1, r, p1, z
    cdef Xoshiro rng
    _seed(&rng, seed)
    with nogil:
        for p in range(n_particles):
            for v in range(n):
                x[v] = <unsigned char>_randint(&rng, 2)
            logw = 0.0
            for k in range(1, n_betas):
                lf = 0.0
                for v in range(n):
                    lf += log_vf[v, x[v]]
                for e in range(m):
                    lf += log_ef[e, x[edge_u[e]], x[edge_v[e]]]
                logw += (betas[k] - betas[k - 1]) * lf
                beta = betas[k]
                for sw in range(sweeps):
                    for v in range(n):
                        a0 = log_vf[v, 0]
                        a1 = log_vf[v, 1]
                        for j in range(indptr[v], indptr[v + 1]):
                            e = nbr_edge[j]
                            u = nbr[j]
                            if edge_u[e] == v:
                                a0 += log_ef[e, 0, x[u]]
                                a1 += log_ef[e, 1, x[u]]
                            else:
                                a0 += log_ef[e, x[u], 0]
                                a1 += log_ef[e, x[u], 1]
                        r = _uniform(&rng)
                        if a1 == -INFINITY and a0 == -INFINITY:
                            continue
                        if a1 == -INFINITY:
                            p1 = 0.0
                        elif a0 == -INFINITY:
                            p1 = 1.0
                        else:
                            z = beta * (a0 - a1)
                            if z > 700.0:
                                p1 = 0.0
                            else:
                                p1 = 1.0 / (1.0 + exp(z))
                        x[v] = 1 if r < p1 else 0
            out[p] = logw
    return out_arr


def rng_stream(uint64_t seed, Py_ssize_t count, Py_ssize_t k=0):
    """First ``count`` raw outputs (or ``randint(k)`` draws when ``k > 0``)."""
    cdef Xoshiro r
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] out = np.empty(count, dtype=np.uint64)
    cdef Py_ssize_t i
    _seed(&r, seed)
    for i in range(count):
        out[i] = _randint(&r, k) if k > 0 else _next(&r)
    return out
