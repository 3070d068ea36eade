"""Hourly market loop with learning prosumers.

Every hour runs the same fixed phase order:

1. agents pick battery actions (regular or shock beliefs for the immediate
   reward, cached regular value function for the continuation)
2. bids are formed from net load and battery flow
3. bids are summed per bus
4. economic dispatch is solved
5. nodal LMPs are broadcast
6. beliefs are updated
7. states of charge move
8. regeneration draws are applied

Phases 1, 2 and 6-8 are per-agent and run in worker threads over fixed agent
chunks; phases 3-5 are a serial barrier.  All randomness comes from
counter-based streams keyed by ``(seed, purpose, type, day[, hour, agent])``,
so results do not depend on the number of workers.
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import kernels
from .dispatch import DemandVector, DispatchResult, InfeasibleDispatch, solve_ed
from .grid_model import Network
from .prosumer import AgentType, EfficiencyParams, TriangularNoise, action_model
from .rng import stream

log = logging.getLogger(__name__)

MODES = ("mf_with_shock_info", "mf_without_shock_info", "no_learning_no_battery")
DEMAND, SUPPLY = "demand", "supply"


@dataclass(frozen=True)
class ShockConfig:
    demand_rate: float = 0.1  # events per day
    supply_rate: float = 0.1
    demand_hours: tuple = (18, 19, 20)  # clock hours, 18:00-21:00
    supply_hours: tuple = (1, 2, 3)  # 01:00-04:00
    demand_magnitude: tuple = (0.30, 0.40, 0.50)  # triangular (low, mode, high)
    supply_magnitude: tuple = (0.20, 0.25, 0.30)
    demand_on_prosumers: bool = True


@dataclass
class ScenarioConfig:
    mode: str = "mf_with_shock_info"
    days: int = 100
    hours_per_day: int = 24
    agents_per_node: int = 200
    seed: int = 0
    prosumer_share: float = 0.5
    shocks: ShockConfig = field(default_factory=ShockConfig)
    regen_prob: float = 1e-4
    delta: float = 0.5
    discount: float = 0.999
    soc_points: int = 100
    action_points: int | None = None
    landing: str = "snap"
    vi_tol: float = 1e-6
    vf_drift: float = 0.1  # $/MWh sup-norm drift that triggers a re-solve
    weather_band: tuple = (0.95, 1.05)
    noise: tuple = (0.8, 1.0, 1.2)
    bus_scale: tuple = (0.9, 1.1)
    belief_spread: tuple = (0.5, 1.5)
    profile_bins: tuple = (10, 10)  # (SoC bins, action bins)
    probes_per_bus: int = 1
    threads: int = 1
    chunk_size: int = 512

    def validate(self):
        errs = []
        if self.mode not in MODES:
            errs.append(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.days < 0:
            errs.append("days must be >= 0")
        if self.hours_per_day < 1:
            errs.append("hours_per_day must be >= 1")
        if self.agents_per_node < 2:
            errs.append("agents_per_node must be >= 2")
        if not 0.0 < self.prosumer_share < 1.0:
            errs.append("prosumer_share must lie in (0, 1)")
        if not 0.0 < self.delta < 1.0:
            errs.append("delta must lie in (0, 1)")
        if not 0.0 < self.discount < 1.0:
            errs.append("discount must lie in (0, 1)")
        if not 0.0 <= self.regen_prob <= 1.0:
            errs.append("regen_prob must lie in [0, 1]")
        if self.landing != "snap":
            errs.append("simulation requires landing='snap' (states stay on the SoC grid)")
        if self.soc_points < 2:
            errs.append("soc_points must be >= 2")
        if self.threads < 1:
            errs.append("threads must be >= 1")
        if self.probes_per_bus < 1:
            errs.append("probes_per_bus must be >= 1")
        for name in ("demand_hours", "supply_hours"):
            hrs = getattr(self.shocks, name)
            if any(not 0 <= h < self.hours_per_day for h in hrs):
                errs.append(f"shocks.{name} must lie in 0..{self.hours_per_day - 1}")
        if errs:
            raise ValueError("; ".join(errs))
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        d["shocks"] = {k: list(v) if isinstance(v, tuple) else v for k, v in d["shocks"].items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "shocks" in d:
            s = dict(d["shocks"])
            sk = {f.name for f in fields(ShockConfig)}
            if set(s) - sk:
                raise ValueError(f"unknown shock keys: {sorted(set(s) - sk)}")
            d["shocks"] = ShockConfig(**{k: tuple(v) if isinstance(v, list) else v
                                         for k, v in s.items()})
        for k, v in list(d.items()):
            if isinstance(v, list):
                d[k] = tuple(v)
        return cls(**d)


@dataclass(frozen=True)
class ShockEvent:
    kind: str
    day: int
    hours: tuple
    magnitude: float


@dataclass
class MarketRecord:
    day: int
    hour: int
    B: np.ndarray
    dispatch: DispatchResult | None
    lmp: np.ndarray
    demand_shock: bool
    supply_shock: bool
    infeasible: bool = False


@dataclass(frozen=True)
class MarketParams:
    """Aggregate per-bus sizes before the bus scaling factor."""

    consumer_load_mw: float = 120.0  # mean gross load of pure consumers
    prosumer_load_mw: float = 150.0  # mean gross load of prosumers
    prosumer_storage_mwh: float = 600.0  # total prosumer battery capacity
    efficiency: EfficiencyParams = field(default_factory=lambda: EfficiencyParams(0.97))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MarketParams":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        if set(d) - known:
            raise ValueError(f"unknown market keys: {sorted(set(d) - known)}")
        if "efficiency" in d:
            d["efficiency"] = EfficiencyParams(**d["efficiency"])
        return cls(**d)


# ------------------------------------------------------------------ setup ----

def bus_scales(config: ScenarioConfig, n_buses: int) -> np.ndarray:
    lo, hi = config.bus_scale
    return stream(config.seed, "bus_scale").uniform(lo, hi, n_buses)


def make_agent_types(network: Network, gross_shape, net_shape, market: MarketParams,
                     config: ScenarioConfig) -> list[AgentType]:
    """One consumer type and one prosumer type per bus, in bus order.

    Consumers carry no storage; their nominal capacity is the bus's consumer
    load so that ``q`` is the gross shape itself.  Prosumer ``q`` is net load
    in units of per-agent battery capacity.
    """
    gross = np.asarray(gross_shape, dtype=float)
    net = np.asarray(net_shape, dtype=float)
    scales = bus_scales(config, network.n_buses)
    n_p = max(1, int(round(config.agents_per_node * config.prosumer_share)))
    n_c = config.agents_per_node - n_p
    noise = TriangularNoise(*config.noise)
    out = []
    for n in range(network.n_buses):
        s = scales[n]
        lc = market.consumer_load_mw * s
        out.append(AgentType(n, lc, n_c, gross.copy(), gross.copy(), noise,
                             has_storage=False, name=f"consumer@{n + 1}"))
        cap = market.prosumer_storage_mwh * s
        unit = market.prosumer_load_mw * s / cap
        out.append(AgentType(n, cap, n_p, net * unit, gross * unit, noise,
                             market.efficiency, has_storage=True, name=f"prosumer@{n + 1}"))
    return out


def generate_shocks(config: ScenarioConfig, seed: int | None = None) -> list[ShockEvent]:
    seed = config.seed if seed is None else seed
    sc = config.shocks
    events = []
    for d in range(config.days):
        for kind, rate, hours, mag in (
            (DEMAND, sc.demand_rate, sc.demand_hours, sc.demand_magnitude),
            (SUPPLY, sc.supply_rate, sc.supply_hours, sc.supply_magnitude),
        ):
            if rate <= 0:
                continue
            g = stream(seed, "shock_" + kind, d)
            k = int(g.poisson(rate))
            for m in g.triangular(mag[0], mag[1], mag[2], size=k):
                events.append(ShockEvent(kind, d, tuple(hours), float(m)))
    return events


def apply_shock(q, demand_component, event: ShockEvent):
    """Shift net load by the shock's share of typical demand."""
    if event.kind == DEMAND:
        return q + event.magnitude * demand_component
    return q - event.magnitude * demand_component


def shock_magnitudes(events, days: int, hours: int) -> np.ndarray:
    """(days, hours, 2) summed magnitudes; channel 0 demand, 1 supply."""
    out = np.zeros((days, hours, 2))
    for ev in events:
        c = 0 if ev.kind == DEMAND else 1
        for h in ev.hours:
            out[ev.day, h, c] += ev.magnitude
    return out


# ---------------------------------------------------------------- profiles ----

@dataclass
class PopulationProfile:
    counts: np.ndarray  # (n_types, H, soc_bins, action_bins)

    @property
    def mass(self) -> np.ndarray:
        tot = self.counts.sum(axis=(2, 3), keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(tot > 0, self.counts / np.maximum(tot, 1), 0.0)

    @property
    def weights(self) -> np.ndarray:
        return self.counts.sum(axis=(2, 3))  # (n_types, H)


def profile_bin_index(soc, action, bins):
    ns, na = bins
    i = np.minimum((np.asarray(soc) * ns).astype(np.int64), ns - 1)
    j = np.minimum(((np.asarray(action) + 1.0) * 0.5 * na).astype(np.int64), na - 1)
    j = np.maximum(j, 0)
    return i * na + j


def empirical_profile(soc, action, type_index, n_types, hour_index=None, hours=1,
                      bins=(10, 10)) -> PopulationProfile:
    """Histogram of (SoC, action) per type (and hour if given)."""
    soc = np.asarray(soc, dtype=float)
    type_index = np.asarray(type_index, dtype=np.int64)
    h = np.zeros_like(type_index) if hour_index is None else np.asarray(hour_index)
    cell = profile_bin_index(soc, action, bins)
    nb = bins[0] * bins[1]
    flat = (type_index * hours + h) * nb + cell
    counts = np.bincount(flat, minlength=n_types * hours * nb)
    present = np.bincount(type_index, minlength=n_types)
    for t in np.nonzero(present == 0)[0]:
        log.info("profile: type %d has no agents; omitted", t)
    return PopulationProfile(counts.reshape(n_types, hours, bins[0], bins[1]))


def profile_distance(p1: PopulationProfile, p2: PopulationProfile):
    """Total-variation distance per hour and its maximum over hours.

    Per-type distances are averaged with the agent counts as weights.
    """
    if p1.counts.shape != p2.counts.shape:
        raise ValueError("profiles use different binning")
    tv = 0.5 * np.abs(p1.mass - p2.mass).sum(axis=(2, 3))  # (types, H)
    w = p1.weights.astype(float)
    per_hour = (tv * w).sum(axis=0) / np.maximum(w.sum(axis=0), 1.0)
    return per_hour, float(per_hour.max(initial=0.0))


# -------------------------------------------------------------------- log ----

@dataclass
class SimulationLog:
    config: ScenarioConfig
    network: Network
    types: list
    shocks: list
    B: np.ndarray  # (D, H, N)
    lmp: np.ndarray  # (D, H, N)
    lam: np.ndarray  # (D, H)
    g: np.ndarray  # (D, H, N)
    infeasible: np.ndarray  # (D, H) bool
    licq: np.ndarray  # (D, H) bool
    breach: np.ndarray  # (D, H) bool, total net demand not positive
    shock_mag: np.ndarray  # (D, H, 2)
    agent_cost: np.ndarray  # (A, D) $ per agent per day
    agent_type: np.ndarray  # (A,)
    belief_err: np.ndarray  # (D, H, N) mean over prosumers at the bus
    profiles: np.ndarray  # (D, n_storage_types, H, sb, ab)
    probe_index: np.ndarray  # (P,) global agent ids
    probe_bus: np.ndarray  # (P,)
    probe_belief: np.ndarray  # (D, H, P) regular belief before the update
    probe_day_beliefs: np.ndarray  # (D, P, H) full regular vector at day start
    probe_q: np.ndarray  # (D, H, P)
    probe_bid: np.ndarray  # (D, H, P)
    probe_soc: np.ndarray  # (D, H, P) before acting
    probe_action: np.ndarray  # (D, H, P)
    probe_capacity: np.ndarray  # (P,)
    vf_solves: np.ndarray  # (D,)
    # rows (day, hour, global agent id), one per regeneration
    regen: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), np.int64))
    timings: dict = field(default_factory=dict)

    @property
    def days(self):
        return self.lmp.shape[0]

    @property
    def hours(self):
        return self.lmp.shape[1]

    def market_record(self, day: int, hour: int) -> MarketRecord:
        return MarketRecord(
            day, hour, self.B[day, hour].copy(), None, self.lmp[day, hour].copy(),
            bool(self.shock_mag[day, hour, 0] > 0), bool(self.shock_mag[day, hour, 1] > 0),
            bool(self.infeasible[day, hour]),
        )

    def profile(self, day: int) -> PopulationProfile:
        return PopulationProfile(self.profiles[day])

    def daily_cost(self) -> np.ndarray:
        return self.agent_cost.sum(axis=0)


# -------------------------------------------------------------- simulation ----

class Simulation:
    """Mutable market state; ``run`` or repeated ``step_hour`` calls drive it."""

    def __init__(self, network: Network, types: list[AgentType], config: ScenarioConfig,
                 executor=None):
        self.cfg = config.validate()
        self.net = network
        self.types = list(types)
        for t in self.types:
            if not 0 <= t.node < network.n_buses:
                raise ValueError(f"agent type {t.name!r} references bus {t.node + 1}")
            if t.net_load_shape.size != config.hours_per_day:
                raise ValueError(f"agent type {t.name!r} shape length != hours_per_day")
        self.H = config.hours_per_day
        self.D = config.days
        self.learning = config.mode != "no_learning_no_battery"
        self.shock_info = config.mode == "mf_with_shock_info"
        self._executor = executor
        self._own_executor = False
        self._setup_agents()
        self._setup_log()
        self.prev_lmp = np.full(network.n_buses, self.belief_center)

    # ---- construction
    def _setup_agents(self):
        cfg, H = self.cfg, self.H
        counts = np.array([t.agent_count for t in self.types], dtype=np.int64)
        self.type_offsets = np.concatenate([[0], np.cumsum(counts)])
        self.A = int(counts.sum())
        self.agent_type = np.repeat(np.arange(len(self.types)), counts)
        self.agent_bus = np.array([self.types[t].node for t in self.agent_type], dtype=np.int64)
        self.agent_cap = np.array([self.types[t].per_agent_capacity for t in self.agent_type])
        self.base_q = np.stack([t.net_load_shape for t in self.types])  # (T, H)
        self.base_d = np.stack([t.demand_shape for t in self.types])
        shock_d = np.array([t.has_storage and not cfg.shocks.demand_on_prosumers
                            for t in self.types])
        self.demand_shock_scale = np.where(shock_d, 0.0, 1.0)  # per type

        st = [i for i, t in enumerate(self.types) if t.has_storage]
        self.storage_types = np.array(st, dtype=np.int64)
        mask = np.isin(self.agent_type, self.storage_types)
        self.s_idx = np.nonzero(mask)[0]  # global ids of storage agents
        self.S = self.s_idx.size
        self.s_type = self.agent_type[self.s_idx]
        self.s_bus = self.agent_bus[self.s_idx]
        self.s_cap = self.agent_cap[self.s_idx]
        self.s_local = self.s_idx - self.type_offsets[self.s_type]
        self.s_type_slot = np.searchsorted(self.storage_types, self.s_type)
        eff = {self.types[t].efficiency for t in st} or {EfficiencyParams()}
        if len(eff) > 1:
            raise ValueError("all storage types must share efficiency parameters")
        self.eff = eff.pop()
        self.model = action_model(cfg.soc_points, cfg.action_points, self.eff, cfg.landing)
        self.belief_center = float(np.mean(self.net.beta))

        G = self.model.G
        self.soc = np.zeros(self.S, dtype=np.int64)
        self.beliefs = np.zeros((self.S, H))
        self.beliefs_ds = np.zeros((self.S, H))
        self.beliefs_ss = np.zeros((self.S, H))
        for t in st:
            sel = self.s_type == t
            n = int(sel.sum())
            g = stream(cfg.seed, "init", t)
            soc = g.integers(0, G, n)
            b = self._draw_beliefs(g, n)
            if self.learning:
                self.soc[sel] = soc
                self.beliefs[sel], self.beliefs_ds[sel], self.beliefs_ss[sel] = b
        self.tau_d = np.zeros(self.S, dtype=np.int64)
        self.tau_s = np.zeros(self.S, dtype=np.int64)
        self.days_elapsed = np.zeros(self.S, dtype=np.int64)
        if self.learning:
            self.V = np.zeros((self.S, H, G))
            self.solved_for = np.full((self.S, H), np.nan)
            self.stale = np.ones(self.S, dtype=bool)
        else:
            self.V = np.zeros((0, H, G))
            self.stale = np.zeros(self.S, dtype=bool)

        # probes: first storage agents at each bus
        probes = []
        for n in range(self.net.n_buses):
            ids = np.nonzero(self.s_bus == n)[0][: cfg.probes_per_bus]
            probes.extend(ids.tolist())
        self.probe_s = np.array(probes, dtype=np.int64)
        self.shocks = generate_shocks(cfg)
        self.shock_mag = shock_magnitudes(self.shocks, self.D, H)

    def _draw_beliefs(self, g, n):
        lo, hi = self.cfg.belief_spread
        c = self.belief_center
        return tuple(g.uniform(lo * c, hi * c, size=(n, self.H)) for _ in range(3))

    def _setup_log(self):
        D, H, N = self.D, self.H, self.net.n_buses
        P = self.probe_s.size
        sb, ab = self.cfg.profile_bins
        self.log = SimulationLog(
            config=self.cfg, network=self.net, types=self.types, shocks=self.shocks,
            B=np.zeros((D, H, N)), lmp=np.zeros((D, H, N)), lam=np.zeros((D, H)),
            g=np.zeros((D, H, N)), infeasible=np.zeros((D, H), bool),
            licq=np.zeros((D, H), bool), breach=np.zeros((D, H), bool),
            shock_mag=self.shock_mag, agent_cost=np.zeros((self.A, D)),
            agent_type=self.agent_type.copy(), belief_err=np.zeros((D, H, N)),
            profiles=np.zeros((D, self.storage_types.size, H, sb, ab), dtype=np.int64),
            probe_index=self.s_idx[self.probe_s], probe_bus=self.s_bus[self.probe_s],
            probe_belief=np.zeros((D, H, P)), probe_day_beliefs=np.zeros((D, P, H)),
            probe_q=np.zeros((D, H, P)), probe_bid=np.zeros((D, H, P)),
            probe_soc=np.zeros((D, H, P)), probe_action=np.zeros((D, H, P)),
            probe_capacity=self.s_cap[self.probe_s].copy(), vf_solves=np.zeros(D, np.int64),
        )
        self._regen_rows = []
        self._bus_prosumers = np.bincount(self.s_bus, minlength=N).astype(float)

    # ---- per-day draws
    def _begin_day(self, d: int):
        cfg, H = self.cfg, self.H
        T = len(self.types)
        self.weather = np.empty((T, H))
        self.noise_t = np.empty((self.A, H))
        lo, mode, hi = cfg.noise
        wl, wh = cfg.weather_band
        for t, ty in enumerate(self.types):
            self.weather[t] = stream(cfg.seed, "weather", t, d).uniform(wl, wh, H)
            a, b = self.type_offsets[t], self.type_offsets[t + 1]
            if b > a and hi == lo:
                self.noise_t[a:b] = 0.0
            elif b > a:
                draw = stream(cfg.seed, "noise", t, d).triangular(lo, mode, hi, size=(H, b - a))
                self.noise_t[a:b] = draw.T - (lo + mode + hi) / 3.0
        self.regen_u = np.ones((self.S, H))
        if self.learning and cfg.regen_prob > 0:
            for t in self.storage_types:
                sel = self.s_type == t
                u = stream(cfg.seed, "regen_draw", t, d).random((H, int(sel.sum())))
                self.regen_u[sel] = u.T
        if self.probe_s.size:
            self.log.probe_day_beliefs[d] = self.beliefs[self.probe_s]

    # ---- threading helpers
    def _chunks(self, n):
        cs = self.cfg.chunk_size
        return [(a, min(a + cs, n)) for a in range(0, n, cs)]

    def _map(self, fn, n):
        chunks = self._chunks(n)
        if self.cfg.threads <= 1 or len(chunks) <= 1:
            for a, b in chunks:
                fn(a, b)
            return
        if self._executor is None:
            self._executor = ThreadPoolExecutor(self.cfg.threads)
            self._own_executor = True
        list(self._executor.map(lambda ab: fn(*ab), chunks))

    def close(self):
        if self._own_executor and self._executor is not None:
            self._executor.shutdown()
            self._executor = None

    # ---- phases
    def _net_load(self, d, h):
        t = self.agent_type
        base = self.base_q[t, h]
        q = base * self.weather[t, h] + base * self.noise_t[:, h]
        md, ms = self.shock_mag[d, h]
        if md:
            q = q + md * self.demand_shock_scale[t] * self.base_d[t, h]
        if ms:
            q = q - ms * self.base_d[t, h]
        return q

    def _resolve_values(self, d):
        rows = np.nonzero(self.stale)[0]
        if rows.size == 0:
            return
        m, cfg = self.model, self.cfg

        def work(a, b):
            kernels.solve_cyclic_batch(self.beliefs, rows[a:b], m.coef, m.lo, m.wt,
                                       cfg.discount, cfg.vi_tol, 100_000, self.V, m.aligned)

        self._map(work, rows.size)
        self.solved_for[rows] = self.beliefs[rows]
        self.stale[rows] = False
        self.log.vf_solves[d] += rows.size

    def _choose_actions(self, d, h):
        price = self.beliefs[:, h]
        if self.shock_info:
            md, ms = self.shock_mag[d, h]
            if md > 0:
                price = self.beliefs_ds[:, h]
            elif ms > 0:
                price = self.beliefs_ss[:, h]
        price = np.ascontiguousarray(price)
        k = np.empty(self.S, dtype=np.int64)
        m, cfg = self.model, self.cfg
        rows = np.arange(self.S, dtype=np.int64)
        hnext = (h + 1) % self.H

        def work(a, b):
            kernels.select_actions(self.V, rows[a:b], self.soc[a:b], price[a:b], hnext,
                                   m.coef, m.lo, m.wt, m.actions, cfg.discount, 1e-12,
                                   k[a:b])

        self._map(work, self.S)
        return k

    def _battery_flow(self, a):
        eta = self.eff.eta(a)
        return np.where(a < 0, eta * a, a / eta)

    def step_hour(self, d: int, h: int) -> MarketRecord:
        cfg, lg = self.cfg, self.log
        q = self._net_load(d, h)
        bids = q * self.agent_cap

        # (1)-(2) actions and bids
        if self.learning and self.S:
            self._resolve_values(d)
            k = self._choose_actions(d, h)
            a = self.model.actions[self.soc, k]
            bids[self.s_idx] += self.s_cap * self._battery_flow(a)
        else:
            k = None
            a = np.zeros(self.S)
        e = self.model.soc_grid[self.soc]

        # (3) aggregation, fixed order
        B = np.bincount(self.agent_bus, weights=bids, minlength=self.net.n_buses)
        lg.B[d, h] = B
        if B.sum() <= 0:
            lg.breach[d, h] = True
            log.warning("day %d hour %d: total net demand %.3f MW is not positive",
                        d, h, B.sum())

        # (4)-(5) dispatch and broadcast
        res = None
        try:
            res = solve_ed(self.net, DemandVector(B))
            lmp = res.lmp
            lg.g[d, h] = res.g
            lg.lam[d, h] = res.lam
            lg.licq[d, h] = res.licq_violated
        except InfeasibleDispatch as exc:
            log.warning("day %d hour %d: dispatch infeasible (%s); carrying prices forward",
                        d, h, exc)
            lg.infeasible[d, h] = True
            lmp = self.prev_lmp
        lg.lmp[d, h] = lmp
        self.prev_lmp = lmp.copy()
        lg.agent_cost[:, d] += lmp[self.agent_bus] * bids

        # bookkeeping before learning changes the beliefs
        obs = lmp[self.s_bus]
        if self.S:
            rel = np.abs(self.beliefs[:, h] - obs) / np.maximum(np.abs(obs), 1e-9)
            lg.belief_err[d, h] = np.bincount(self.s_bus, weights=rel,
                                              minlength=self.net.n_buses) / np.maximum(
                self._bus_prosumers, 1.0)
            cells = profile_bin_index(e, a, cfg.profile_bins)
            nb = cfg.profile_bins[0] * cfg.profile_bins[1]
            flat = np.bincount(self.s_type_slot * nb + cells,
                               minlength=self.storage_types.size * nb)
            lg.profiles[d, :, h] = flat.reshape(self.storage_types.size, *cfg.profile_bins)
        p = self.probe_s
        if p.size:
            lg.probe_belief[d, h] = self.beliefs[p, h]
            lg.probe_q[d, h] = q[self.s_idx[p]]
            lg.probe_bid[d, h] = bids[self.s_idx[p]]
            lg.probe_soc[d, h] = e[p]
            lg.probe_action[d, h] = a[p]

        if self.learning and self.S:
            # (6) learning
            self._learn(d, h, obs)
            # (7) state of charge
            self.soc = self.model.lo[self.soc, k].astype(np.int64)
            # (8) regeneration
            self._regenerate(d, h)

        return MarketRecord(d, h, B, res, lmp, bool(self.shock_mag[d, h, 0] > 0),
                            bool(self.shock_mag[d, h, 1] > 0), res is None)

    def _learn(self, d, h, obs):
        delta = self.cfg.delta
        md, ms = self.shock_mag[d, h]
        if self.shock_info and md > 0:
            step = delta * (self.tau_d + 1.0) ** -0.5
            self.beliefs_ds[:, h] -= step * (self.beliefs_ds[:, h] - obs)
            self.tau_d += 1
        elif self.shock_info and ms > 0:
            step = delta * (self.tau_s + 1.0) ** -0.5
            self.beliefs_ss[:, h] -= step * (self.beliefs_ss[:, h] - obs)
            self.tau_s += 1
        else:
            step = delta * (self.days_elapsed + 1.0) ** -0.5
            self.beliefs[:, h] -= step * (self.beliefs[:, h] - obs)
            drift = np.abs(self.beliefs[:, h] - self.solved_for[:, h])
            self.stale |= drift > self.cfg.vf_drift

    def _regenerate(self, d, h):
        hit = np.nonzero(self.regen_u[:, h] < self.cfg.regen_prob)[0]
        G = self.model.G
        for i in hit:
            self._regen_rows.append((d, h, int(self.s_idx[i])))
            g = stream(self.cfg.seed, "regen_state", self.s_type[i], d, h, self.s_local[i])
            self.soc[i] = g.integers(0, G)
            b = self._draw_beliefs(g, 1)
            self.beliefs[i], self.beliefs_ds[i], self.beliefs_ss[i] = (x[0] for x in b)
            self.tau_d[i] = self.tau_s[i] = self.days_elapsed[i] = 0
            self.stale[i] = True

    def run(self) -> SimulationLog:
        t0 = time.perf_counter()
        try:
            for d in range(self.D):
                self._begin_day(d)
                for h in range(self.H):
                    self.step_hour(d, h)
                self.days_elapsed += 1
        finally:
            self.close()
        if self._regen_rows:
            self.log.regen = np.array(self._regen_rows, dtype=np.int64)
        self.log.timings["run_seconds"] = time.perf_counter() - t0
        return self.log


def run_simulation(network: Network, types: list[AgentType], config: ScenarioConfig,
                   executor=None) -> SimulationLog:
    return Simulation(network, types, config, executor).run()
