import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import one_bus
from mfg_grid.metrics import (MetricSeries, belief_relative_error, constant_policy,
                              daily_cost, deviation_gain, heuristic_policies, imv,
                              mean_peak_spread, metric_series, peak_spread, summarize,
                              window_imv)
from mfg_grid.prosumer import AgentType, EfficiencyParams, TriangularNoise
from mfg_grid.simulate import ScenarioConfig, ShockConfig, run_simulation

prices = st.lists(st.floats(-1e4, 1e4), min_size=2, max_size=60)


def test_imv_example():
    assert imv([1.0, 3.0, 2.0]) == 1.5
    with pytest.raises(ValueError):
        imv([5.0])


@given(prices, st.floats(0.01, 100))
def test_imv_homogeneous(p, c):
    assert imv(np.array(p) * c) == pytest.approx(c * imv(p), rel=1e-9, abs=1e-9)


@given(prices, st.floats(-1e4, 1e4))
def test_imv_shift_invariant(p, s):
    assert imv(np.array(p) + s) == pytest.approx(imv(p), rel=1e-9, abs=1e-6)


def test_window_imv_uses_trailing_days():
    lmp = np.zeros((5, 3, 2))
    lmp[:, :, 1] = np.arange(15).reshape(5, 3)
    lmp[:2, :, 1] = 1000.0 * np.arange(6).reshape(2, 3)
    assert window_imv(lmp, 1, days=3) == 1.0


def test_peak_spread_example():
    day = np.linspace(100, 150, 24)
    assert peak_spread(day) == 50.0
    lmp = np.stack([day, day + 10])[:, :, None]
    assert mean_peak_spread(lmp, 0, 2) == 50.0


def test_belief_error_example():
    err, small = belief_relative_error([110.0, 5.0], [100.0, 0.0])
    assert err[0] == pytest.approx(0.10, abs=1e-15)
    assert small.tolist() == [False, True] and np.isfinite(err[1])
    with pytest.raises(ValueError):
        belief_relative_error([1.0], [1.0, 2.0])


def test_daily_cost_example():
    # one agent bidding 1 MWh at 158 $/MWh for one hour
    c = np.zeros((1, 2))
    c[0, 0] = 1.0 * 158.0
    assert daily_cost(c, 0) == 158.0
    np.testing.assert_array_equal(daily_cost(c), [158.0, 0.0])


def test_metric_series_rejects_nan():
    with pytest.raises(ValueError):
        MetricSeries("x", [1.0, np.nan])


def test_heuristic_set_size():
    pols = heuristic_policies()
    assert len(pols) == 50 and len({p.name for p in pols}) == 50


# ------------------------------------------------------------ deviations ----

@pytest.fixture(scope="module")
def small_log():
    flat = np.full(24, 0.5)
    z = TriangularNoise()
    types = [AgentType(0, 100.0, 10, flat, flat, z, has_storage=False, name="c"),
             AgentType(0, 100.0, 10, flat * np.r_[np.ones(12), 1.4 * np.ones(12)], flat, z,
                       EfficiencyParams(0.95), name="p")]
    cfg = ScenarioConfig(days=4, agents_per_node=20, soc_points=21, regen_prob=0.0,
                         shocks=ShockConfig(demand_rate=0.0, supply_rate=0.0))
    return run_simulation(one_bus(), types, cfg)


def test_gain_is_best_minus_realized(small_log):
    r = deviation_gain(small_log, 0, [constant_policy(0.0), constant_policy(0.1)], days=2)
    assert r.payoffs["realized"] == r.realized_payoff
    assert r.best_payoff == max(r.payoffs.values())
    assert r.gain == max(0.0, r.best_payoff - r.realized_payoff)


def test_replaying_realized_actions_reproduces_cost(small_log):
    class Replay:
        name = "replay"

        def __init__(self, acts):
            self.acts = list(acts)

        def __call__(self, e, h, b):
            return self.acts.pop(0)

    acts = small_log.probe_action[-2:, :, 0].ravel()
    r = deviation_gain(small_log, 0, [Replay(acts)], days=2)
    assert r.payoffs["replay"] == pytest.approx(r.realized_payoff, abs=1e-9)
    assert r.gain == 0.0 and not r.regenerated


def test_empty_candidate_set_raises(small_log):
    with pytest.raises(ValueError):
        deviation_gain(small_log, 0, [], days=2)
    with pytest.raises(ValueError):
        deviation_gain(small_log, 0, [constant_policy(0.0)], days=10)


def test_summary_and_series(small_log):
    s = summarize(small_log, bus=0, days=2)
    assert s["bus"] == 1 and s["window_days"] == 2
    assert s["imv"] == window_imv(small_log.lmp, 0, 2)
    names = [m.name for m in metric_series(small_log, bus=0)]
    assert names == ["daily_cost", "peak_spread", "daily_imv"]
