"""Single-agent battery model, bids, cyclic-day value iteration and learning."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels

DEFAULT_SOC_POINTS = 100


@dataclass(frozen=True)
class EfficiencyParams:
    alpha0: float = 0.95
    alpha_c: float = 0.1
    alpha_d: float = 0.1

    def __post_init__(self):
        if not 0.0 < self.alpha0 < 1.0:
            raise ValueError("alpha0 must lie in (0, 1)")
        if self.alpha_c < 0 or self.alpha_d < 0:
            raise ValueError("efficiency slopes must be non-negative")
        if not (self.alpha0 - self.alpha_c > 0 and self.alpha0 - self.alpha_d > 0):
            raise ValueError("efficiency must stay positive over a in [-1, 1]")

    def eta(self, a):
        """Vectorized efficiency without the domain check."""
        a = np.asarray(a, dtype=float)
        return np.where(a < 0, self.alpha0 + self.alpha_d * a, self.alpha0 - self.alpha_c * a)


@dataclass(frozen=True)
class TriangularNoise:
    """Multiplicative agent-level draw on the shape value, recentred to mean zero."""

    lower: float = 0.8
    mode: float = 1.0
    upper: float = 1.2

    @property
    def mean(self) -> float:
        return (self.lower + self.mode + self.upper) / 3.0

    @property
    def width(self) -> float:
        return self.upper - self.lower


@dataclass
class AgentType:
    node: int
    capacity_total: float  # MWh
    agent_count: int
    net_load_shape: np.ndarray  # expected q per hour, in units of per-agent capacity
    demand_shape: np.ndarray | None = None  # gross-demand part of q, same units
    noise: TriangularNoise = field(default_factory=TriangularNoise)
    efficiency: EfficiencyParams = field(default_factory=EfficiencyParams)
    has_storage: bool = True
    name: str = ""

    def __post_init__(self):
        self.net_load_shape = np.asarray(self.net_load_shape, dtype=float)
        if self.demand_shape is None:
            self.demand_shape = self.net_load_shape.copy()
        self.demand_shape = np.asarray(self.demand_shape, dtype=float)
        if self.agent_count < 0 or self.capacity_total < 0:
            raise ValueError("agent_count and capacity_total must be non-negative")
        if not np.all(np.isfinite(self.net_load_shape)):
            raise ValueError("net load shape must be finite")

    @property
    def per_agent_capacity(self) -> float:
        return self.capacity_total / self.agent_count if self.agent_count else 0.0


@dataclass
class AgentState:
    soc: float
    beliefs: np.ndarray
    beliefs_ds: np.ndarray
    beliefs_ss: np.ndarray
    tau_d: int = 0
    tau_s: int = 0
    days_elapsed: int = 0
    value_fn_cache: "ValueFunction | None" = None


# ---------------------------------------------------------------- physics ----

def efficiency(a, params: EfficiencyParams = EfficiencyParams()):
    a_arr = np.asarray(a, dtype=float)
    if np.any(np.abs(a_arr) > 1.0):
        raise ValueError("action magnitude must not exceed 1")
    out = params.eta(a_arr)
    return float(out) if out.ndim == 0 else out


def soc_transition(e, a):
    out = np.maximum(np.minimum(np.asarray(e, dtype=float) + a, 1.0), 0.0)
    return float(out) if out.ndim == 0 else out


def make_bid(e, a, q, capacity, params: EfficiencyParams = EfficiencyParams()):
    """Signed energy bid (MWh): net load plus battery flow seen at the meter."""
    e = np.asarray(e, dtype=float)
    a = np.asarray(a, dtype=float)
    eta = params.eta(a)
    dis = eta * capacity * np.maximum(-e, a)
    chg = capacity * np.minimum(1.0 - e, a) / eta
    out = np.asarray(q, dtype=float) * capacity + np.where(a < 0, dis, chg)
    return float(out) if out.ndim == 0 else out


def reward_kernel(a, price, params: EfficiencyParams = EfficiencyParams()):
    """Per-unit-capacity stage payoff of battery action ``a`` at ``price``."""
    a = np.asarray(a, dtype=float)
    eta = params.eta(a)
    out = np.where(a <= 0, -eta * a * price, -a * price / eta)
    return float(out) if out.ndim == 0 else out


# ------------------------------------------------------- dynamic program ----

@dataclass(frozen=True)
class ActionModel:
    """Precomputed action/landing tables over a SoC grid.

    For state ``i`` the ``k``-th action is ``-e_i + k/(K-1)``, landing on
    ``k/(K-1)``.  ``lo``/``wt`` encode the landing point on the SoC grid
    (``wt == 0`` means exactly on ``lo``).
    """

    soc_grid: np.ndarray
    actions: np.ndarray  # (G, K)
    coef: np.ndarray  # (G, K) reward at unit price
    lo: np.ndarray  # (G, K) int32
    wt: np.ndarray  # (G, K)
    aligned: bool
    params: EfficiencyParams
    landing: str

    @property
    def G(self):
        return self.soc_grid.size

    @property
    def K(self):
        return self.actions.shape[1]


_MODEL_CACHE: dict = {}


def action_model(soc_points: int = DEFAULT_SOC_POINTS, action_points: int | None = None,
                 params: EfficiencyParams = EfficiencyParams(), landing: str = "snap"):
    if soc_points < 2:
        raise ValueError("SoC grid needs at least 2 points")
    K = soc_points if action_points is None else int(action_points)
    if K < 2:
        raise ValueError("action grid needs at least 2 points")
    if landing not in ("snap", "linear"):
        raise ValueError(f"unknown landing mode {landing!r}")
    key = (soc_points, K, params, landing)
    if key in _MODEL_CACHE:
        return _MODEL_CACHE[key]
    G = soc_points
    grid = np.linspace(0.0, 1.0, G)
    land = np.arange(K) / (K - 1)
    acts = land[None, :] - grid[:, None]
    coef = np.ascontiguousarray(reward_kernel(acts, 1.0, params))
    pos = land * (G - 1)
    if landing == "snap":
        lo_row = np.rint(pos).astype(np.int32)
        wt_row = np.zeros(K)
    else:
        lo_row = np.minimum(np.floor(pos), G - 2).astype(np.int32)
        wt_row = pos - lo_row
        wt_row[np.abs(wt_row) < 1e-12] = 0.0
    lo = np.ascontiguousarray(np.broadcast_to(lo_row, (G, K)), dtype=np.int32)
    wt = np.ascontiguousarray(np.broadcast_to(wt_row, (G, K)), dtype=float)
    aligned = K == G and landing == "snap"
    for arr in (grid, acts, coef, lo, wt):
        arr.setflags(write=False)
    model = ActionModel(grid, acts, coef, lo, wt, aligned, params, landing)
    _MODEL_CACHE[key] = model
    return model


@dataclass
class ValueFunction:
    values: np.ndarray  # (H, G); values[h] is the value before acting in hour h
    soc_grid: np.ndarray
    discount: float
    beliefs: np.ndarray
    model: ActionModel = field(repr=False)
    residual: float = 0.0
    iterations: int = 0
    history: np.ndarray | None = field(default=None, repr=False)

    @property
    def hours(self):
        return self.values.shape[0]


def _check_beliefs(beliefs):
    p = np.ascontiguousarray(beliefs, dtype=float)
    if p.ndim != 1 or p.size < 1:
        raise ValueError("beliefs must be a non-empty vector")
    if not np.all(np.isfinite(p)):
        raise ValueError("beliefs must be finite")
    return p


def bellman_residual(values, beliefs, model: ActionModel, discount: float) -> float:
    H = values.shape[0]
    worst = 0.0
    for h in range(H):
        t = kernels.bellman_hour(float(beliefs[h]), model.coef, model.lo, model.wt,
                                 np.ascontiguousarray(values[(h + 1) % H]), discount,
                                 model.aligned)
        worst = max(worst, float(np.abs(t - values[h]).max()))
    return worst


def solve_value_function(beliefs, params: EfficiencyParams = EfficiencyParams(),
                         discount: float = 0.999, grid=DEFAULT_SOC_POINTS,
                         action_grid_size: int | None = None, tol: float = 1e-6,
                         method: str = "cyclic", landing: str = "snap",
                         warm_start=None, max_iter: int | None = None) -> ValueFunction:
    """Fixed point of the cyclic-day Bellman operator for a belief vector.

    ``method="sweep"`` runs synchronous value iteration (every sweep updates
    all hours from the previous iterate) and records the sup-norm change per
    sweep.  ``method="cyclic"`` iterates the whole-day operator with midpoint
    error-bound extrapolation, which converges far faster for discounts near 1.
    """
    p = _check_beliefs(beliefs)
    if not 0.0 < discount < 1.0:
        raise ValueError("discount must lie in (0, 1)")
    G = grid if np.isscalar(grid) else len(grid)
    if not np.isscalar(grid):
        g = np.asarray(grid, dtype=float)
        if not np.allclose(g, np.linspace(0.0, 1.0, g.size)):
            raise ValueError("SoC grid must be evenly spaced on [0, 1]")
    model = action_model(int(G), action_grid_size, params, landing)
    H = p.size
    if warm_start is None:
        V = np.zeros((H, model.G))
    else:
        V = np.array(warm_start, dtype=float, order="C")
    if method == "sweep":
        cap = max_iter or 200_000
        n, hist = kernels.value_iteration(p, model.coef, model.lo, model.wt, discount, tol,
                                          cap, V, model.aligned)
        res = bellman_residual(V, p, model, discount)
    elif method == "cyclic":
        cap = max_iter or 100_000
        n, res = kernels.solve_cyclic(p, model.coef, model.lo, model.wt, discount, tol, cap,
                                      V, model.aligned)
        hist = None
        if n < 0:
            raise RuntimeError(f"value iteration did not converge in {cap} passes")
    else:
        raise ValueError(f"unknown method {method!r}")
    return ValueFunction(V, model.soc_grid, discount, p.copy(), model, float(res), int(n), hist)


def _state_index(vf: ValueFunction, e: float) -> int:
    if not 0.0 <= e <= 1.0:
        raise ValueError("state of charge must lie in [0, 1]")
    return int(np.rint(e * (vf.soc_grid.size - 1)))


def optimal_action(vf: ValueFunction, e: float, h: int, beliefs=None, price=None,
                   tie_tol: float = 1e-12) -> float:
    """Greedy action at SoC ``e`` in hour ``h``.

    ``price`` overrides the immediate-reward belief (shock hours); the
    continuation always comes from ``vf``.
    """
    if price is None:
        src = vf.beliefs if beliefs is None else _check_beliefs(beliefs)
        price = float(src[h])
    i = _state_index(vf, e)
    m = vf.model
    out = np.zeros(1, dtype=np.int64)
    kernels.select_actions(vf.values[None], np.zeros(1, dtype=np.int64),
                           np.array([i], dtype=np.int64), np.array([price], dtype=float),
                           (h + 1) % vf.hours, m.coef, m.lo, m.wt, m.actions,
                           vf.discount, tie_tol, out)
    return float(m.actions[i, out[0]])


# ---------------------------------------------------------------- learning ----

def step_size(delta: float, count) -> np.ndarray | float:
    return delta * (np.asarray(count, dtype=float) + 1.0) ** -0.5


def update_belief(beliefs, h: int, observed: float, delta: float, day_index: int):
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if day_index < 0:
        raise ValueError("day_index must be non-negative")
    out = np.array(beliefs, dtype=float)
    out[h] = out[h] - step_size(delta, day_index) * (out[h] - observed)
    return out


def update_shock_belief(beliefs_shock, h: int, observed: float, delta: float, counter: int):
    return update_belief(beliefs_shock, h, observed, delta, counter), counter + 1


# ------------------------------------------------------------- net load ----

def draw_net_load(agent_type: AgentType, hour: int, weather_draw: float, rng, size=None):
    """``q = omega + zeta`` with zeta a recentred triangular draw on the shape value."""
    base = agent_type.net_load_shape[hour]
    nz = agent_type.noise
    if nz.width == 0:
        return weather_draw if size is None else np.full(size, float(weather_draw))
    t = rng.triangular(nz.lower, nz.mode, nz.upper, size=size)
    return weather_draw + base * (t - nz.mean)


def init_beliefs(rng, hours: int, center: float, size=None, spread=(0.5, 1.5)):
    shape = (hours,) if size is None else (size, hours)
    return rng.uniform(spread[0] * center, spread[1] * center, size=shape)


def regenerate(state: AgentState, rng, belief_center: float,
               soc_points: int = DEFAULT_SOC_POINTS, spread=(0.5, 1.5)) -> AgentState:
    H = state.beliefs.size
    soc = rng.integers(0, soc_points) / (soc_points - 1)
    return replace(
        state,
        soc=float(soc),
        beliefs=init_beliefs(rng, H, belief_center, spread=spread),
        beliefs_ds=init_beliefs(rng, H, belief_center, spread=spread),
        beliefs_ss=init_beliefs(rng, H, belief_center, spread=spread),
        tau_d=0,
        tau_s=0,
        days_elapsed=0,
        value_fn_cache=None,
    )
