# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: Lemke pivoting, Bellman backups, batch action choice.

Every routine here has a numpy twin in ``_pykernels`` with the same signature
and the same floating-point operation order.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, INFINITY

cnp.import_array()

IMPLEMENTATION = "cython"


# ---------------------------------------------------------------- Lemke ----

cdef void _pivot(double[:, ::1] T, int r, int c) noexcept nogil:
    cdef Py_ssize_t i, k
    cdef Py_ssize_t ncol = T.shape[1]
    cdef Py_ssize_t n = T.shape[0]
    cdef double p = T[r, c]
    cdef double f
    for k in range(ncol):
        T[r, k] = T[r, k] / p
    for i in range(n):
        if i == r:
            continue
        f = T[i, c]
        if f != 0.0:
            for k in range(ncol):
                T[i, k] = T[i, k] - f * T[r, k]


cdef int _lex_less(double[:, ::1] T, int a, int b, int c, int rhs, int n,
                   double tol) noexcept nogil:
    """1 if row a precedes row b in the lexicographic ratio order."""
    cdef double ra = T[a, rhs] / T[a, c]
    cdef double rb = T[b, rhs] / T[b, c]
    cdef double scale
    cdef Py_ssize_t k
    scale = tol * (1.0 + fabs(ra) + fabs(rb))
    if ra < rb - scale:
        return 1
    if ra > rb + scale:
        return 0
    for k in range(n):
        ra = T[a, k] / T[a, c]
        rb = T[b, k] / T[b, c]
        if ra < rb - tol:
            return 1
        if ra > rb + tol:
            return 0
    return 0


def lemke(const double[:, ::1] M, const double[::1] q, long max_pivots):
    """Solve ``0 <= z  _|_  q + M z >= 0`` by Lemke's method (lexicographic).

    Returns ``(z, status, pivots)``; status 0 solved, 1 ray termination,
    2 pivot limit reached.
    """
    cdef int n = M.shape[0]
    cdef int ncol = 2 * n + 2
    cdef int z0col = 2 * n
    cdef int rhs = 2 * n + 1
    tab = np.zeros((n, ncol), dtype=np.float64)
    basis_arr = np.arange(n, dtype=np.intc)
    z_arr = np.zeros(n, dtype=np.float64)
    cdef double[:, ::1] T = tab
    cdef int[::1] basis = basis_arr
    cdef double[::1] z = z_arr
    cdef int i, j, r, c, leaving, status = 1
    cdef long pivots = 0
    cdef double minq
    cdef double piv_tol = 1e-12
    cdef double lex_tol = 1e-12
    cdef int z0row

    with nogil:
        for i in range(n):
            T[i, i] = 1.0
            for j in range(n):
                T[i, n + j] = -M[i, j]
            T[i, z0col] = -1.0
            T[i, rhs] = q[i]
        r = 0
        minq = q[0]
        for i in range(1, n):
            if q[i] <= minq:
                minq = q[i]
                r = i
        if minq >= 0.0:
            status = 0
        else:
            _pivot(T, r, z0col)
            pivots = 1
            leaving = basis[r]
            basis[r] = z0col
            c = leaving + n if leaving < n else leaving - n
            while True:
                if pivots >= max_pivots:
                    status = 2
                    break
                r = -1
                z0row = -1
                for i in range(n):
                    if T[i, c] > piv_tol:
                        if r < 0 or _lex_less(T, i, r, c, rhs, n, lex_tol):
                            r = i
                        if basis[i] == z0col:
                            z0row = i
                if r < 0:
                    status = 1
                    break
                if z0row >= 0 and z0row != r:
                    # prefer z0 to leave on a ratio tie
                    if fabs(T[z0row, rhs] / T[z0row, c] - T[r, rhs] / T[r, c]) <= \
                            lex_tol * (1.0 + fabs(T[r, rhs] / T[r, c])):
                        r = z0row
                _pivot(T, r, c)
                pivots += 1
                leaving = basis[r]
                basis[r] = c
                if leaving == z0col:
                    status = 0
                    break
                c = leaving + n if leaving < n else leaving - n
        if status == 0:
            for i in range(n):
                if n <= basis[i] < 2 * n:
                    z[basis[i] - n] = T[i, rhs]
    return z_arr, status, pivots


# ------------------------------------------------------- Bellman backups ----

cdef inline double _cont(const double* vn, int j, double w) noexcept nogil:
    if w == 0.0:
        return vn[j]
    return (1.0 - w) * vn[j] + w * vn[j + 1]


cdef void _hour_brute(double P, const double[:, ::1] coef, const int[:, ::1] lo,
                      const double[:, ::1] wt, const double* vn, double beta,
                      double* out) noexcept nogil:
    cdef Py_ssize_t G = coef.shape[0]
    cdef Py_ssize_t K = coef.shape[1]
    cdef Py_ssize_t i, k
    cdef double best, val
    for i in range(G):
        best = -INFINITY
        for k in range(K):
            val = P * coef[i, k] + beta * _cont(vn, lo[i, k], wt[i, k])
            if val > best:
                best = val
        out[i] = best


cdef bint _concave(const double* v, Py_ssize_t G) noexcept nogil:
    cdef Py_ssize_t j
    cdef double scale = 0.0
    for j in range(G):
        if fabs(v[j]) > scale:
            scale = fabs(v[j])
    scale = 1e-9 * (1.0 + scale)
    for j in range(1, G - 1):
        if v[j - 1] - 2.0 * v[j] + v[j + 1] > scale:
            return 0
    return 1


cdef void _hour(double P, const double[:, ::1] coef, const int[:, ::1] lo,
                const double[:, ::1] wt, const double* vn, double beta,
                double* out, bint aligned) noexcept nogil:
    """One hour of the Bellman operator.

    With grid-aligned actions, a positive price and a concave continuation the
    objective is concave in the landing index and its argmax is monotone in the
    start index, so a forward-moving pointer finds every maximum in O(G).
    """
    cdef Py_ssize_t G = coef.shape[0]
    cdef Py_ssize_t i
    cdef Py_ssize_t j = 0
    cdef double best, cand
    if not (aligned and P > 0.0 and _concave(vn, G)):
        _hour_brute(P, coef, lo, wt, vn, beta, out)
        return
    for i in range(G):
        best = P * coef[i, j] + beta * vn[j]
        while j + 1 < G:
            cand = P * coef[i, j + 1] + beta * vn[j + 1]
            if cand > best:
                j += 1
                best = cand
            else:
                break
        out[i] = best


def bellman_hour(double P, const double[:, ::1] coef, const int[:, ::1] lo,
                 const double[:, ::1] wt, const double[::1] vnext, double beta,
                 bint aligned):
    out = np.empty(coef.shape[0], dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        _hour(P, coef, lo, wt, &vnext[0], beta, &o[0], aligned)
    return out


def value_iteration(const double[::1] P, const double[:, ::1] coef,
                    const int[:, ::1] lo, const double[:, ::1] wt, double beta,
                    double tol, long max_sweeps, double[:, ::1] V, bint aligned):
    """Synchronous value iteration over the cyclic day, in place on ``V``.

    Returns ``(sweeps, history)`` where ``history[s]`` is the sup-norm change
    produced by sweep ``s``.
    """
    cdef Py_ssize_t H = V.shape[0]
    cdef Py_ssize_t G = V.shape[1]
    Vn_arr = np.empty((H, G), dtype=np.float64)
    hist_arr = np.empty(max_sweeps, dtype=np.float64)
    cdef double[:, ::1] Vn = Vn_arr
    cdef double[::1] hist = hist_arr
    cdef Py_ssize_t h, i
    cdef long s, done = 0
    cdef double diff, d
    with nogil:
        for s in range(max_sweeps):
            for h in range(H):
                _hour(P[h], coef, lo, wt, &V[(h + 1) % H, 0], beta, &Vn[h, 0], aligned)
            diff = 0.0
            for h in range(H):
                for i in range(G):
                    d = fabs(Vn[h, i] - V[h, i])
                    if d > diff:
                        diff = d
                    V[h, i] = Vn[h, i]
            hist[s] = diff
            done = s + 1
            if diff <= tol:
                break
    return done, hist_arr[:done].copy()


cdef long _cyclic(const double* P, const double[:, ::1] coef, const int[:, ::1] lo,
                  const double[:, ::1] wt, double beta, double tol, long max_passes,
                  double* V, Py_ssize_t H, Py_ssize_t G, double* V1, bint aligned,
                  double* resid) noexcept nogil:
    cdef Py_ssize_t h, i
    cdef long p
    cdef double rho = 1.0
    cdef double mn, mx, d, shift, res = INFINITY
    for h in range(H):
        rho = rho * beta
    for i in range(G):
        V1[i] = V[i]
    for p in range(max_passes):
        _hour(P[H - 1], coef, lo, wt, V1, beta, &V[(H - 1) * G], aligned)
        for h in range(H - 2, -1, -1):
            _hour(P[h], coef, lo, wt, &V[(h + 1) * G], beta, &V[h * G], aligned)
        mn = INFINITY
        mx = -INFINITY
        res = 0.0
        for i in range(G):
            d = V[i] - V1[i]
            if d < mn:
                mn = d
            if d > mx:
                mx = d
            if fabs(d) > res:
                res = fabs(d)
        if res <= tol:
            resid[0] = beta * res
            return p + 1
        shift = rho / (1.0 - rho) * 0.5 * (mn + mx)
        for i in range(G):
            V1[i] = V[i] + shift
    resid[0] = beta * res
    return -max_passes


def solve_cyclic(const double[::1] P, const double[:, ::1] coef, const int[:, ::1] lo,
                 const double[:, ::1] wt, double beta, double tol, long max_passes,
                 double[:, ::1] V, bint aligned):
    """Day-operator iteration with midpoint error-bound extrapolation.

    ``V`` (H x G) is the warm start and receives the solution.  Returns
    ``(passes, residual)``; passes is negative when ``max_passes`` ran out.
    """
    cdef Py_ssize_t H = V.shape[0]
    cdef Py_ssize_t G = V.shape[1]
    V1_arr = np.empty(G, dtype=np.float64)
    cdef double[::1] V1 = V1_arr
    cdef double resid = 0.0
    cdef long passes
    with nogil:
        passes = _cyclic(&P[0], coef, lo, wt, beta, tol, max_passes, &V[0, 0], H, G,
                         &V1[0], aligned, &resid)
    return passes, resid


def solve_cyclic_batch(const double[:, ::1] P, const long[::1] rows,
                       const double[:, ::1] coef, const int[:, ::1] lo,
                       const double[:, ::1] wt, double beta, double tol,
                       long max_passes, double[:, :, ::1] V, bint aligned):
    """``solve_cyclic`` for ``V[rows[m]]`` with beliefs ``P[rows[m]]``.

    Returns the number of passes used per listed row.
    """
    cdef Py_ssize_t m, nrow = rows.shape[0]
    cdef Py_ssize_t H = V.shape[1]
    cdef Py_ssize_t G = V.shape[2]
    V1_arr = np.empty(G, dtype=np.float64)
    out_arr = np.empty(nrow, dtype=np.int64)
    cdef double[::1] V1 = V1_arr
    cdef long[::1] out = out_arr
    cdef double resid
    cdef long r
    with nogil:
        for m in range(nrow):
            r = rows[m]
            out[m] = _cyclic(&P[r, 0], coef, lo, wt, beta, tol, max_passes,
                             &V[r, 0, 0], H, G, &V1[0], aligned, &resid)
    return out_arr


def select_actions(const double[:, :, ::1] V, const long[::1] vrow, const long[::1] soc,
                   const double[::1] price, long hnext, const double[:, ::1] coef,
                   const int[:, ::1] lo, const double[:, ::1] wt,
                   const double[:, ::1] act, double beta, double tie_tol,
                   long[::1] out):
    """Greedy action index per agent against its cached continuation values.

    Ties (within ``tie_tol`` relative) go to the smallest ``|a|``, then to
    discharging.
    """
    cdef Py_ssize_t n, k, bk
    cdef Py_ssize_t N = soc.shape[0]
    cdef Py_ssize_t K = coef.shape[1]
    cdef Py_ssize_t i
    cdef const double* vn
    cdef double P, best, val, thr, a, ba
    with nogil:
        for n in range(N):
            i = soc[n]
            P = price[n]
            vn = &V[vrow[n], hnext, 0]
            best = -INFINITY
            for k in range(K):
                val = P * coef[i, k] + beta * _cont(vn, lo[i, k], wt[i, k])
                if val > best:
                    best = val
            thr = best - tie_tol * (1.0 + fabs(best))
            bk = -1
            for k in range(K):
                val = P * coef[i, k] + beta * _cont(vn, lo[i, k], wt[i, k])
                if val >= thr:
                    a = act[i, k]
                    if bk < 0:
                        bk = k
                    else:
                        ba = act[i, bk]
                        if fabs(a) < fabs(ba) or (fabs(a) == fabs(ba) and a < ba):
                            bk = k
            out[n] = bk
