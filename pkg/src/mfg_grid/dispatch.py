"""Hourly economic dispatch solved through its KKT complementarity system.

LCP variable ordering (length N + 1 + 2L + N)::

    x = (g[0..N), lam, mu_up[0..L), mu_lo[0..L), eta_up[0..N))

with slack vector ``w = u + M x`` holding, in the same order, the stationarity
residual of each generator, total supply minus total demand, upper and lower
line-flow margins, and generator headroom.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .grid_model import Network

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-8


class DispatchError(RuntimeError):
    pass


class InfeasibleDispatch(DispatchError):
    def __init__(self, msg, basis=None):
        super().__init__(msg)
        self.basis = basis


class SolverFailure(DispatchError):
    pass


@dataclass(frozen=True)
class DemandVector:
    """Per-bus aggregate net demand in MW."""

    b: np.ndarray

    def __post_init__(self):
        b = np.ascontiguousarray(self.b, dtype=float)
        if b.ndim != 1:
            raise ValueError("demand must be a 1-D vector")
        if not np.all(np.isfinite(b)):
            raise ValueError("demand contains non-finite entries")
        object.__setattr__(self, "b", b)

    @property
    def total(self) -> float:
        return float(self.b.sum())

    @property
    def positive_total(self) -> bool:
        return self.total > 0.0


def _as_demand(demand) -> DemandVector:
    return demand if isinstance(demand, DemandVector) else DemandVector(demand)


@dataclass
class LcpProblem:
    u: np.ndarray
    m: np.ndarray
    n_buses: int = 0
    n_lines: int = 0

    @property
    def size(self) -> int:
        return len(self.u)


@dataclass
class DispatchResult:
    g: np.ndarray
    lam: float
    mu_upper: np.ndarray
    mu_lower: np.ndarray
    eta_upper: np.ndarray
    lmp: np.ndarray
    objective: float
    licq_violated: bool = False
    pivots: int = 0
    residual: float = 0.0
    extra: dict = field(default_factory=dict, repr=False)

    @property
    def flows(self):
        return self.extra.get("flows")


def _kkt_matrix(network: Network) -> np.ndarray:
    cached = network._arrays.get("kkt_m")
    if cached is not None:
        return cached
    n, nl = network.n_buses, network.n_lines
    P = np.asarray(network.ptdf, dtype=float)
    size = 2 * n + 1 + 2 * nl
    m = np.zeros((size, size))
    ig = slice(0, n)
    il = n
    iu = slice(n + 1, n + 1 + nl)
    io = slice(n + 1 + nl, n + 1 + 2 * nl)
    ie = slice(n + 1 + 2 * nl, size)
    m[ig, ig] = np.diag(network.alpha)
    m[ig, il] = -1.0
    m[ig, iu] = P.T
    m[ig, io] = -P.T
    m[ig, ie] = np.eye(n)
    m[il, ig] = 1.0
    m[iu, ig] = -P
    m[io, ig] = P
    m[ie, ig] = -np.eye(n)
    m.setflags(write=False)
    network._arrays["kkt_m"] = m
    return m


def build_kkt_lcp(network: Network, demand) -> LcpProblem:
    """Assemble ``(u, M)`` so that the dispatch optimum solves ``0 <= x _|_ u + Mx >= 0``."""
    demand = _as_demand(demand)
    n, nl = network.n_buses, network.n_lines
    if demand.b.shape != (n,):
        raise ValueError(f"demand has length {demand.b.size}, network has {n} buses")
    P = np.asarray(network.ptdf, dtype=float)
    pb = P @ demand.b
    fcap = network.line_capacity
    u = np.concatenate(
        [network.beta, [-demand.total], fcap + pb, fcap - pb, network.gen_capacity]
    )
    return LcpProblem(u, _kkt_matrix(network), n, nl)


def solve_lcp(problem: LcpProblem, max_pivots: int | None = None) -> np.ndarray:
    """Complementary solution of the LCP by lexicographic Lemke pivoting."""
    x, _ = _solve_lcp(problem, max_pivots)
    return x


def _solve_lcp(problem, max_pivots=None):
    u = np.ascontiguousarray(problem.u, dtype=float)
    m = np.ascontiguousarray(problem.m, dtype=float)
    n = u.size
    if m.shape != (n, n):
        raise ValueError("LCP matrix and vector sizes disagree")
    limit = 10 * n * n if max_pivots is None else int(max_pivots)
    x, status, pivots = kernels.lemke(m, u, limit)
    if status == 1:
        raise InfeasibleDispatch("Lemke ray termination: LCP infeasible", basis=pivots)
    if status == 2:
        raise SolverFailure(f"pivot limit {limit} exceeded")
    w = u + m @ x
    scale = max(1.0, float(np.abs(u).max(initial=0.0))) * max(1.0, float(x.max(initial=0.0)))
    res = max(
        float(np.abs(x * w).max(initial=0.0)),
        float(-w.min(initial=0.0)),
        float(-x.min(initial=0.0)),
    ) / scale
    if res > RESIDUAL_TOL:
        raise SolverFailure(f"complementarity residual {res:.3e} exceeds tolerance")
    return x, (pivots, res, w)


def _constraints(network: Network, b: np.ndarray):
    """All inequality constraints as rows of ``A g - c >= 0``.

    Order: balance, line upper, line lower, capacity, nonnegativity.
    """
    n = network.n_buses
    P = np.asarray(network.ptdf, dtype=float)
    pb = P @ b
    fcap = network.line_capacity
    A = np.vstack([np.ones((1, n)), -P, P, -np.eye(n), np.eye(n)])
    c = np.concatenate([[b.sum()], -(fcap + pb), -(fcap - pb), -network.gen_capacity, np.zeros(n)])
    return A, c


def _licq_violated(network, b, g, tol=1e-7) -> bool:
    A, c = _constraints(network, b)
    slack = A @ g - c
    scale = 1.0 + np.abs(c)
    active = np.abs(slack) <= tol * scale
    k = int(active.sum())
    if k == 0:
        return False
    if k > network.n_buses:
        return True
    return np.linalg.matrix_rank(A[active]) < k


def _result(network, b, g, lam, mu_up, mu_lo, eta, **kw) -> DispatchResult:
    P = np.asarray(network.ptdf, dtype=float)
    lmp = lam - P.T @ (mu_up - mu_lo)
    obj = float(np.sum(0.5 * network.alpha * g * g + network.beta * g + network.gamma))
    extra = {"flows": P @ (g - b)}
    return DispatchResult(g, float(lam), mu_up, mu_lo, eta, lmp, obj, extra=extra, **kw)


def _capacity_check(network, demand):
    cap = float(network.gen_capacity.sum())
    if demand.total > cap:
        raise InfeasibleDispatch(
            f"total demand {demand.total:.6g} MW exceeds generation capacity {cap:.6g} MW"
        )


def solve_ed(network: Network, demand) -> DispatchResult:
    demand = _as_demand(demand)
    _capacity_check(network, demand)
    prob = build_kkt_lcp(network, demand)
    try:
        x, (pivots, res, _) = _solve_lcp(prob)
    except InfeasibleDispatch as exc:
        raise InfeasibleDispatch(
            "no dispatch satisfies the transmission limits for this demand", exc.basis
        ) from None
    n, nl = network.n_buses, network.n_lines
    g = x[:n].copy()
    lam = x[n]
    mu_up = x[n + 1:n + 1 + nl].copy()
    mu_lo = x[n + 1 + nl:n + 1 + 2 * nl].copy()
    eta = x[n + 1 + 2 * nl:].copy()
    licq = _licq_violated(network, demand.b, g)
    return _result(network, demand.b, g, lam, mu_up, mu_lo, eta,
                   licq_violated=licq, pivots=int(pivots), residual=res)


def brute_force_ed(network: Network, demand) -> DispatchResult:
    """Active-set enumeration oracle for small networks (N <= 4, L <= 6)."""
    demand = _as_demand(demand)
    n, nl = network.n_buses, network.n_lines
    if n > 4 or nl > 6:
        raise ValueError(f"brute_force_ed is limited to N <= 4 and L <= 6 (got N={n}, L={nl})")
    if demand.b.shape != (n,):
        raise ValueError(f"demand has length {demand.b.size}, network has {n} buses")
    b = demand.b
    A, c = _constraints(network, b)
    m = A.shape[0]
    alpha, beta = network.alpha, network.beta
    feas_tol = 1e-9 * (1.0 + np.abs(c).max())
    for k in range(0, n + 1):
        for act in itertools.combinations(range(m), k):
            act = list(act)
            Aa = A[act]
            kkt = np.zeros((n + k, n + k))
            kkt[:n, :n] = np.diag(alpha)
            kkt[:n, n:] = -Aa.T
            kkt[n:, :n] = Aa
            rhs = np.concatenate([-beta, c[act]])
            try:
                sol = np.linalg.solve(kkt, rhs)
            except np.linalg.LinAlgError:
                continue
            if np.linalg.cond(kkt) > 1e12:
                continue
            g, nu = sol[:n], sol[n:]
            if np.any(nu < -1e-10 * (1.0 + np.abs(beta).max())):
                continue
            if np.any(A @ g - c < -feas_tol):
                continue
            full = np.zeros(m)
            full[act] = np.maximum(nu, 0.0)
            lam = full[0]
            mu_up = full[1:1 + nl]
            mu_lo = full[1 + nl:1 + 2 * nl]
            eta = full[1 + 2 * nl:1 + 2 * nl + n]
            return _result(network, b, g, lam, mu_up, mu_lo, eta,
                           licq_violated=_licq_violated(network, b, g))
    _capacity_check(network, demand)
    raise InfeasibleDispatch("no KKT-consistent active set found")


def estimate_lipschitz(network: Network, base_demand, n_samples: int, radius: float,
                       seed: int = 0, solver=solve_ed, details: bool = False):
    """Sampled sup-norm Lipschitz constant of the LMP map around ``base_demand``.

    Each sample draws a point in the box of half-width ``radius``, forms a
    finite-difference Jacobian from coordinate pairs, then probes the sign
    direction that maximizes the steepest row.  The estimate is the largest
    ratio ``|LMP(B) - LMP(B')|_inf / |B - B'|_inf`` over every evaluated pair.
    """
    base = _as_demand(base_demand).b
    n = base.size
    rng = np.random.default_rng(seed)
    best = 0.0
    pairs = skipped = 0
    if radius <= 0:
        return (0.0, {"pairs": 0, "skipped": 0}) if details else 0.0
    step = min(radius, 1.0) * 0.5

    def lmp(b):
        return solver(network, DemandVector(b)).lmp

    for _ in range(n_samples):
        x0 = base + rng.uniform(-radius, radius, n)
        try:
            p0 = lmp(x0)
        except DispatchError:
            skipped += 1
            continue
        jac = np.zeros((n, n))
        for j in range(n):
            x1 = x0.copy()
            x1[j] += step
            try:
                p1 = lmp(x1)
            except DispatchError:
                skipped += 1
                continue
            jac[:, j] = (p1 - p0) / step
            best = max(best, float(np.abs(p1 - p0).max()) / step)
            pairs += 1
        row = int(np.argmax(np.abs(jac).sum(axis=1)))
        direction = np.sign(jac[row])
        if np.any(direction):
            x1 = x0 + step * direction
            try:
                p1 = lmp(x1)
                best = max(best, float(np.abs(p1 - p0).max()) / step)
                pairs += 1
            except DispatchError:
                skipped += 1
    if skipped:
        log.warning("estimate_lipschitz: %d infeasible samples skipped", skipped)
    if details:
        return best, {"pairs": pairs, "skipped": skipped}
    return best


@dataclass
class OracleReport:
    cases: int
    max_gen_diff: float
    max_lmp_diff: float
    redraws: int
    failures: list = field(default_factory=list)

    def ok(self, tol_gen: float = 1e-6, tol_lmp: float = 1e-6) -> bool:
        return (not self.failures and self.max_gen_diff <= tol_gen
                and self.max_lmp_diff <= tol_lmp)


def oracle_check(n_cases: int = 200, seed: int = 0, buses=(2, 4),
                 max_redraws: int = 50) -> OracleReport:
    """Compare solve_ed with brute_force_ed on random small networks.

    Demands are redrawn until the oracle finds a feasible dispatch.
    """
    from .grid_model import random_network

    rng = np.random.default_rng(seed)
    gmax = lmax = 0.0
    redraws = 0
    failures = []
    for case in range(n_cases):
        n = int(rng.integers(buses[0], buses[1] + 1))
        net = random_network(rng, n)
        for _ in range(max_redraws):
            b = rng.uniform(-20.0, 0.8 * net.gen_capacity.sum() / n, n)
            try:
                ref = brute_force_ed(net, b)
                break
            except InfeasibleDispatch:
                redraws += 1
        else:
            failures.append((case, "no feasible demand drawn"))
            continue
        try:
            got = solve_ed(net, b)
        except DispatchError as exc:
            failures.append((case, str(exc)))
            continue
        gmax = max(gmax, float(np.abs(got.g - ref.g).max()))
        lmax = max(lmax, float(np.abs(got.lmp - ref.lmp).max()))
    return OracleReport(n_cases, gmax, lmax, redraws, failures)
