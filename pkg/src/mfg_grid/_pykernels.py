"""Pure-numpy versions of the compiled kernels.

Signatures and floating-point operation order mirror ``_kernels.pyx`` so the
two backends agree to the last bit on the paths that do not take the O(G)
pointer shortcut.
"""
import numpy as np

IMPLEMENTATION = "python"


def _lex_less(T, a, b, c, rhs, n, tol):
    ra = T[a, rhs] / T[a, c]
    rb = T[b, rhs] / T[b, c]
    scale = tol * (1.0 + abs(ra) + abs(rb))
    if ra < rb - scale:
        return True
    if ra > rb + scale:
        return False
    for k in range(n):
        ra = T[a, k] / T[a, c]
        rb = T[b, k] / T[b, c]
        if ra < rb - tol:
            return True
        if ra > rb + tol:
            return False
    return False


def _pivot(T, r, c):
    T[r] = T[r] / T[r, c]
    f = T[:, c].copy()
    f[r] = 0.0
    nz = np.nonzero(f)[0]
    if nz.size:
        T[nz] -= f[nz, None] * T[r]


def lemke(M, q, max_pivots):
    M = np.asarray(M, dtype=float)
    q = np.asarray(q, dtype=float)
    n = q.size
    z0col, rhs = 2 * n, 2 * n + 1
    T = np.zeros((n, 2 * n + 2))
    T[:, :n] = np.eye(n)
    T[:, n:2 * n] = -M
    T[:, z0col] = -1.0
    T[:, rhs] = q
    basis = np.arange(n)
    z = np.zeros(n)
    piv_tol = lex_tol = 1e-12
    r = 0
    minq = q[0]
    for i in range(1, n):
        if q[i] <= minq:
            minq, r = q[i], i
    if minq >= 0.0:
        return z, 0, 0
    _pivot(T, r, z0col)
    pivots = 1
    leaving = basis[r]
    basis[r] = z0col
    c = leaving + n if leaving < n else leaving - n
    status = 1
    while True:
        if pivots >= max_pivots:
            status = 2
            break
        cand = np.nonzero(T[:, c] > piv_tol)[0]
        if cand.size == 0:
            status = 1
            break
        r = int(cand[0])
        for i in cand[1:]:
            if _lex_less(T, int(i), r, c, rhs, n, lex_tol):
                r = int(i)
        z0rows = np.nonzero(basis[cand] == z0col)[0]
        if z0rows.size:
            zr = int(cand[z0rows[0]])
            if zr != r and abs(T[zr, rhs] / T[zr, c] - T[r, rhs] / T[r, c]) <= \
                    lex_tol * (1.0 + abs(T[r, rhs] / T[r, c])):
                r = zr
        _pivot(T, r, c)
        pivots += 1
        leaving = basis[r]
        basis[r] = c
        if leaving == z0col:
            status = 0
            break
        c = leaving + n if leaving < n else leaving - n
    if status == 0:
        zb = (basis >= n) & (basis < 2 * n)
        z[basis[zb] - n] = T[zb, rhs]
    return z, status, pivots


def _cont(vn, lo, wt):
    c = vn[lo]
    m = wt != 0.0
    if m.any():
        c = c.copy()
        c[m] = (1.0 - wt[m]) * vn[lo[m]] + wt[m] * vn[lo[m] + 1]
    return c


def _hour(P, coef, lo, wt, vn, beta, aligned=False):
    # the pointer shortcut is an exact argmax under its preconditions, so the
    # brute-force maximum is returned here unconditionally
    vals = P * coef + beta * _cont(vn, lo, wt)
    return vals.max(axis=1)


def bellman_hour(P, coef, lo, wt, vnext, beta, aligned):
    return _hour(float(P), coef, lo, wt, np.asarray(vnext, dtype=float), beta)


def value_iteration(P, coef, lo, wt, beta, tol, max_sweeps, V, aligned):
    H = V.shape[0]
    hist = []
    for _ in range(max_sweeps):
        Vn = np.empty_like(V)
        for h in range(H):
            Vn[h] = _hour(P[h], coef, lo, wt, V[(h + 1) % H], beta)
        diff = float(np.abs(Vn - V).max())
        V[...] = Vn
        hist.append(diff)
        if diff <= tol:
            break
    return len(hist), np.array(hist)


def _cyclic(P, coef, lo, wt, beta, tol, max_passes, V):
    H = V.shape[0]
    rho = 1.0
    for _ in range(H):
        rho = rho * beta
    V1 = V[0].copy()
    res = np.inf
    for p in range(max_passes):
        V[H - 1] = _hour(P[H - 1], coef, lo, wt, V1, beta)
        for h in range(H - 2, -1, -1):
            V[h] = _hour(P[h], coef, lo, wt, V[h + 1], beta)
        d = V[0] - V1
        res = float(np.abs(d).max())
        if res <= tol:
            return p + 1, beta * res
        shift = rho / (1.0 - rho) * 0.5 * (d.min() + d.max())
        V1 = V[0] + shift
    return -max_passes, beta * res


def solve_cyclic(P, coef, lo, wt, beta, tol, max_passes, V, aligned):
    return _cyclic(P, coef, lo, wt, beta, tol, max_passes, V)


def solve_cyclic_batch(P, rows, coef, lo, wt, beta, tol, max_passes, V, aligned):
    out = np.empty(len(rows), dtype=np.int64)
    for m, r in enumerate(rows):
        out[m] = _cyclic(P[r], coef, lo, wt, beta, tol, max_passes, V[r])[0]
    return out


def select_actions(V, vrow, soc, price, hnext, coef, lo, wt, act, beta, tie_tol, out):
    if len(soc) == 0:
        return
    vn = V[vrow, hnext]  # (n, G)
    lo_s = lo[soc]
    wt_s = wt[soc]
    rows = np.arange(len(soc))[:, None]
    cont = vn[rows, lo_s]
    m = wt_s != 0.0
    if m.any():
        hi = np.minimum(lo_s + 1, vn.shape[1] - 1)
        cont = np.where(m, (1.0 - wt_s) * vn[rows, lo_s] + wt_s * vn[rows, hi], cont)
    vals = price[:, None] * coef[soc] + beta * cont
    best = vals.max(axis=1)
    thr = best - tie_tol * (1.0 + np.abs(best))
    ok = vals >= thr[:, None]
    a = act[soc]
    # rank: smallest |a| first, then the more negative action
    key = np.where(ok, np.abs(a), np.inf)
    kmin = key.min(axis=1)
    ok &= key == kmin[:, None]
    a_masked = np.where(ok, a, np.inf)
    out[:] = np.argmin(a_masked, axis=1)
