"""Evaluation quantities: price volatility, belief error, costs, spreads and
unilateral-deviation probes."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dispatch import DemandVector, DispatchError, solve_ed
from .prosumer import EfficiencyParams, make_bid, soc_transition, solve_value_function

REL_GUARD = 1e-9


@dataclass
class MetricSeries:
    name: str
    values: np.ndarray
    unit: str = ""
    index: str = "day"  # what one entry covers: "day", "hour" or "run"
    seed: int | None = None
    flags: np.ndarray | None = None  # True where an entry is unreliable

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f"metric {self.name!r} has non-finite values")


# ------------------------------------------------------------------ prices ----

def imv(prices) -> float:
    """Mean absolute change between consecutive prices."""
    p = np.asarray(prices, dtype=float).ravel()
    if p.size < 2:
        raise ValueError("IMV needs at least two prices")
    return float(np.abs(np.diff(p)).mean())


def window_imv(lmp, bus: int, days: int = 10) -> float:
    """IMV of one bus over the last ``days`` days of a (D, H, N) price array."""
    lmp = np.asarray(lmp)
    return imv(lmp[-days:, :, bus])


def peak_spread(prices) -> float:
    p = np.asarray(prices, dtype=float)
    if p.size == 0:
        raise ValueError("empty price day")
    return float(p.max() - p.min())


def mean_peak_spread(lmp, bus: int, days: int = 10) -> float:
    win = np.asarray(lmp)[-days:, :, bus]
    return float(np.mean([peak_spread(d) for d in win]))


def belief_relative_error(beliefs, realized):
    """Relative belief error and a mask of entries whose realized price is ~0."""
    b = np.asarray(beliefs, dtype=float)
    r = np.asarray(realized, dtype=float)
    if b.shape != r.shape:
        raise ValueError("beliefs and realized prices are not aligned")
    small = np.abs(r) < REL_GUARD
    err = np.abs(b - r) / np.maximum(np.abs(r), REL_GUARD)
    return err, small


# ------------------------------------------------------------------- costs ----

def daily_cost(agent_cost, day: int | None = None):
    """Total cost over agents, per day or for one day (``agent_cost`` is (A, D))."""
    c = np.asarray(agent_cost, dtype=float)
    tot = c.sum(axis=0) if c.ndim == 2 else c
    return tot if day is None else float(tot[day])


def window_cost(log, days: int = 10) -> float:
    return float(log.daily_cost()[-days:].sum())


# ------------------------------------------------------- deviation probes ----

@dataclass(frozen=True)
class Policy:
    """Stationary battery rule ``(soc, hour, beliefs) -> action`` for replays."""

    name: str
    rule: Callable = field(compare=False)

    def __call__(self, e, h, beliefs):
        return self.rule(e, h, beliefs)


def constant_policy(rate: float) -> Policy:
    return Policy(f"constant({rate:+.3f})", lambda e, h, b: rate)


def threshold_policy(lo_q: float, hi_q: float, rate: float) -> Policy:
    """Charge at ``rate`` in believed-cheap hours, discharge in believed-dear ones."""

    def rule(e, h, b):
        lo, hi = np.quantile(b, [lo_q, hi_q])
        if b[h] <= lo:
            return rate
        if b[h] >= hi:
            return -rate
        return 0.0

    return Policy(f"threshold({lo_q:.2f},{hi_q:.2f},{rate:.2f})", rule)


def heuristic_policies() -> list[Policy]:
    """Ten constant-action rules and forty belief-threshold rules."""
    out = [constant_policy(float(r)) for r in np.linspace(-0.2, 0.2, 10)]
    bands = ((0.1, 0.9), (0.2, 0.8), (0.25, 0.75), (0.3, 0.7), (0.4, 0.6))
    rates = (0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 0.85, 1.0)
    out += [threshold_policy(lo, hi, r) for lo, hi in bands for r in rates]
    return out


@dataclass
class DeviationResult:
    probe: int
    realized_payoff: float
    best_payoff: float
    best_policy: str
    gain: float
    realized_cost: float
    payoffs: dict
    regenerated: bool = False  # the probe restarted inside the window

    @property
    def relative_gain(self) -> float:
        return self.gain / max(abs(self.realized_cost), REL_GUARD)


def _clip_action(e, a):
    return float(min(max(a, -e), 1.0 - e, 1.0))


def deviation_gain(log, probe: int, candidates, days: int = 10,
                   params: EfficiencyParams | None = None,
                   discount: float | None = None) -> DeviationResult:
    """Best discounted payoff gain of one probe agent over the last ``days``.

    The probe's logged bid is removed from its bus total and the candidate's
    bid added; dispatch is re-solved so the agent's own price impact counts.
    The realized action sequence is always evaluated as well, which makes the
    gain non-negative.  Energy left at the end of the window is credited with
    the discounted value ``beta**T * cap * V_0(e_T)`` from the probe's own value
    function at its latest beliefs, so liquidating the battery is not free.
    """
    candidates = list(candidates)
    if not candidates:
        raise ValueError("candidate set is empty")
    D, H = log.days, log.hours
    if not 0 < days <= D:
        raise ValueError(f"window of {days} days does not fit a {D}-day log")
    if params is None:
        st = [t for t in log.types if t.has_storage]
        params = st[0].efficiency if st else EfficiencyParams()
    beta = log.config.discount if discount is None else discount
    bus = int(log.probe_bus[probe])
    cap = float(log.probe_capacity[probe])
    d0 = D - days
    hours = [(d, h) for d in range(d0, D) for h in range(H)]
    disc = beta ** np.arange(len(hours))
    q = np.array([log.probe_q[d, h, probe] for d, h in hours])
    bid0 = np.array([log.probe_bid[d, h, probe] for d, h in hours])
    acts0 = np.array([log.probe_action[d, h, probe] for d, h in hours])
    e_start = float(log.probe_soc[d0, 0, probe])
    beliefs = log.probe_day_beliefs[d0, probe]
    price0 = np.array([log.lmp[d, h, bus] for d, h in hours])
    realized_cost = float(np.dot(price0, bid0))
    vf = solve_value_function(log.probe_day_beliefs[D - 1, probe], params, beta,
                              log.config.soc_points, log.config.action_points,
                              log.config.vi_tol)
    v0 = vf.values[0]
    tail = beta ** len(hours) * cap

    def replay(action_at):
        e = e_start
        payoff = 0.0
        for t, (d, h) in enumerate(hours):
            a = _clip_action(e, action_at(t, e, h))
            b = make_bid(e, a, q[t], cap, params)
            if abs(b - bid0[t]) <= 1e-12 * (1.0 + abs(b)):
                b, p = bid0[t], price0[t]
            else:
                B = log.B[d, h].copy()
                B[bus] += b - bid0[t]
                try:
                    p = solve_ed(log.network, DemandVector(B)).lmp[bus]
                except DispatchError:
                    p = price0[t]
            payoff -= disc[t] * p * b
            e = soc_transition(e, a)
        return payoff + tail * float(np.interp(e, vf.soc_grid, v0))

    realized = replay(lambda t, e, h: acts0[t])
    pay = {"realized": realized}
    for pol in candidates:
        pay[pol.name] = replay(lambda t, e, h, pol=pol: pol(e, h, beliefs))
    best_name = max(pay, key=lambda k: pay[k])
    best = pay[best_name]
    regen = np.asarray(getattr(log, "regen", np.zeros((0, 3))))
    hit = bool(np.any((regen[:, 2] == log.probe_index[probe]) & (regen[:, 0] >= d0))) \
        if regen.size else False
    return DeviationResult(probe, realized, best, best_name, max(0.0, best - realized),
                           realized_cost, pay, hit)


# ---------------------------------------------------------------- summary ----

def summarize(log, bus: int = 2, days: int = 10) -> dict:
    """Headline numbers for one run (bus is zero-based; 2 is Bus 3)."""
    days = min(days, log.days)
    out = {"bus": bus + 1, "window_days": days}
    if log.days == 0:
        return out
    out["imv"] = window_imv(log.lmp, bus, days) if days * log.hours >= 2 else None
    out["mean_peak_spread"] = mean_peak_spread(log.lmp, bus, days)
    out["window_cost"] = window_cost(log, days)
    out["infeasible_hours"] = int(log.infeasible.sum())
    out["mean_lmp"] = float(log.lmp[-days:, :, bus].mean())
    return out


def metric_series(log, bus: int = 2, seed: int | None = None) -> list[MetricSeries]:
    seed = log.config.seed if seed is None else seed
    D = log.days
    out = [MetricSeries("daily_cost", log.daily_cost(), "$", "day", seed)]
    if D:
        out.append(MetricSeries("peak_spread", [peak_spread(p) for p in log.lmp[:, :, bus]],
                                "$/MWh", "day", seed))
        out.append(MetricSeries("daily_imv",
                                [imv(p) if p.size >= 2 else 0.0 for p in log.lmp[:, :, bus]],
                                "$/MWh", "day", seed))
    else:
        out.append(MetricSeries("peak_spread", [], "$/MWh", "day", seed))
        out.append(MetricSeries("daily_imv", [], "$/MWh", "day", seed))
    return out
