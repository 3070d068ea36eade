import dataclasses

import numpy as np
import pytest

from conftest import one_bus
from mfg_grid import simulate as sim_mod
from mfg_grid.dispatch import SolverFailure
from mfg_grid.prosumer import AgentType, EfficiencyParams, TriangularNoise
from mfg_grid.simulate import (MarketParams, ScenarioConfig, ShockConfig, ShockEvent,
                               Simulation, apply_shock, empirical_profile, generate_shocks,
                               make_agent_types, profile_distance, run_simulation)

NO_SHOCKS = ShockConfig(demand_rate=0.0, supply_rate=0.0)


def small_config(**kw):
    base = dict(days=2, agents_per_node=20, seed=3, soc_points=21, chunk_size=16)
    base.update(kw)
    return ScenarioConfig(**base)


def ieee_run(ieee14, load_shape, **kw):
    cfg = small_config(**kw)
    types = make_agent_types(ieee14, *load_shape, MarketParams(), cfg)
    return run_simulation(ieee14, types, cfg)


def flat_one_bus_types(q=0.5, n=10, cap=100.0, noise=(1.0, 1.0, 1.0)):
    z = TriangularNoise(*noise)
    flat = np.full(24, q)
    return [AgentType(0, cap, n, flat, flat, z, has_storage=False, name="c"),
            AgentType(0, cap, n, flat, flat, z, EfficiencyParams(0.95), name="p")]


# ------------------------------------------------------------------ config ----

def test_config_round_trip_and_unknown_keys():
    c = ScenarioConfig(days=7, shocks=ShockConfig(demand_rate=0.2))
    assert ScenarioConfig.from_dict(c.to_dict()) == c
    with pytest.raises(ValueError, match="unknown config"):
        ScenarioConfig.from_dict({"dayz": 3})
    m = MarketParams(efficiency=EfficiencyParams(0.9, 0.05, 0.05))
    assert MarketParams.from_dict(m.to_dict()) == m


@pytest.mark.parametrize("kw", [dict(mode="x"), dict(days=-1), dict(delta=1.0),
                                dict(discount=1.0), dict(landing="linear"),
                                dict(shocks=ShockConfig(demand_hours=(30,)))])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        ScenarioConfig(**kw).validate()


def test_agent_types_follow_shapes(ieee14, load_shape):
    gross, net = load_shape
    cfg = small_config()
    mp = MarketParams()
    types = make_agent_types(ieee14, gross, net, mp, cfg)
    assert len(types) == 2 * ieee14.n_buses
    scales = sim_mod.bus_scales(cfg, ieee14.n_buses)
    for n in range(ieee14.n_buses):
        c, p = types[2 * n], types[2 * n + 1]
        assert not c.has_storage and p.has_storage
        np.testing.assert_allclose(c.net_load_shape * c.capacity_total,
                                   gross * mp.consumer_load_mw * scales[n])
        np.testing.assert_allclose(p.net_load_shape * p.capacity_total,
                                   net * mp.prosumer_load_mw * scales[n])
        assert p.efficiency == mp.efficiency


# ------------------------------------------------------------------ shocks ----

def test_shock_counts_are_poisson():
    cfg = ScenarioConfig(days=10_000)
    ev = generate_shocks(cfg, seed=5)
    nd = sum(e.kind == "demand" for e in ev)
    ns = sum(e.kind == "supply" for e in ev)
    sd = np.sqrt(1000)
    assert abs(nd - 1000) <= 4 * sd and abs(ns - 1000) <= 4 * sd
    md = np.array([e.magnitude for e in ev if e.kind == "demand"])
    ms = np.array([e.magnitude for e in ev if e.kind == "supply"])
    assert md.min() >= 0.3 and md.max() <= 0.5 and abs(md.mean() - 0.4) < 0.01
    assert ms.min() >= 0.2 and ms.max() <= 0.3 and abs(ms.mean() - 0.25) < 0.01
    assert all(e.hours == (18, 19, 20) for e in ev if e.kind == "demand")


def test_shocks_are_seed_deterministic():
    cfg = ScenarioConfig(days=200)
    assert generate_shocks(cfg, 1) == generate_shocks(cfg, 1)
    assert generate_shocks(cfg, 1) != generate_shocks(cfg, 2)


def test_apply_shock_examples():
    assert apply_shock(0.2, 0.2, ShockEvent("demand", 0, (18,), 0.4)) == pytest.approx(0.28)
    assert apply_shock(0.2, 0.2, ShockEvent("supply", 0, (1,), 0.25)) == pytest.approx(0.15)


# ---------------------------------------------------------------- profiles ----

def test_profile_mass_and_distance():
    rng = np.random.default_rng(0)
    soc = rng.uniform(0, 1, 500)
    act = rng.uniform(-1, 1, 500) * (1 - soc)
    typ = rng.integers(0, 3, 500)
    p = empirical_profile(soc, act, typ, 3)
    np.testing.assert_allclose(p.mass.sum(axis=(2, 3)), 1.0)
    assert profile_distance(p, p)[1] == 0.0
    q1 = empirical_profile(np.zeros(10), np.zeros(10), np.zeros(10, int), 1)
    q2 = empirical_profile(np.ones(10), np.zeros(10), np.zeros(10, int), 1)
    assert profile_distance(q1, q2)[1] == 1.0


def test_empty_type_is_omitted():
    p = empirical_profile(np.zeros(4), np.zeros(4), np.zeros(4, int), 2)
    assert p.mass[1].sum() == 0.0 and p.weights[1, 0] == 0


# ----------------------------------------------------------------- market ----

def test_no_learning_bids_are_net_load(ieee14, load_shape):
    lg = ieee_run(ieee14, load_shape, mode="no_learning_no_battery")
    np.testing.assert_array_equal(lg.probe_action, 0.0)
    np.testing.assert_allclose(lg.probe_bid, lg.probe_q * lg.probe_capacity, rtol=1e-15)
    assert lg.vf_solves.sum() == 0 and lg.regen.shape == (0, 3)


def test_aggregation_and_cost_identity(ieee14, load_shape):
    lg = ieee_run(ieee14, load_shape)
    for d in range(lg.days):
        total = float(np.sum(lg.lmp[d] * lg.B[d]))
        assert lg.daily_cost()[d] == pytest.approx(total, rel=1e-9)
    # balance: generation equals net demand in every dispatched hour
    ok = ~lg.infeasible
    np.testing.assert_allclose(lg.g.sum(axis=2)[ok], lg.B.sum(axis=2)[ok], atol=1e-6)


def test_one_bus_flat_load_has_constant_price():
    net = one_bus(alpha=0.02, beta=150.0)
    cfg = ScenarioConfig(mode="no_learning_no_battery", days=3, agents_per_node=20,
                         shocks=NO_SHOCKS, weather_band=(1.0, 1.0), noise=(1.0, 1.0, 1.0))
    lg = run_simulation(net, flat_one_bus_types(), cfg)
    # B = 2 types * 100 MWh * 0.5 = 100 MW; LMP = beta + alpha * B
    np.testing.assert_allclose(lg.B, 100.0, rtol=1e-12)
    np.testing.assert_allclose(lg.lmp, 152.0, rtol=1e-12)


def test_infeasible_hour_carries_price_forward():
    net = one_bus(cap=600.0)
    types = flat_one_bus_types()
    types[0] = dataclasses.replace(types[0], net_load_shape=np.r_[np.full(5, 0.5), 9.0,
                                                                   np.full(18, 0.5)])
    cfg = ScenarioConfig(mode="no_learning_no_battery", days=1, agents_per_node=20,
                         shocks=NO_SHOCKS, weather_band=(1.0, 1.0), noise=(1.0, 1.0, 1.0))
    lg = run_simulation(net, types, cfg)
    assert lg.infeasible[0].tolist() == [h == 5 for h in range(24)]
    assert lg.lmp[0, 5, 0] == lg.lmp[0, 4, 0]


def test_solver_failure_propagates(monkeypatch):
    def boom(*a, **k):
        raise SolverFailure("pivot limit")
    monkeypatch.setattr(sim_mod, "solve_ed", boom)
    cfg = ScenarioConfig(mode="no_learning_no_battery", days=1, agents_per_node=4)
    with pytest.raises(SolverFailure):
        run_simulation(one_bus(), flat_one_bus_types(n=2), cfg)


def _primed(mode):
    net = one_bus(alpha=0.02, beta=150.0, cap=2000.0)
    cfg = ScenarioConfig(mode=mode, days=1, agents_per_node=20, shocks=NO_SHOCKS,
                         soc_points=11, regen_prob=0.0, seed=1)
    s = Simulation(net, flat_one_bus_types(), cfg)
    s.shock_mag[0, 18, 0] = 0.4
    s.soc[:] = s.model.G - 1
    s.beliefs[:] = 152.0
    s.beliefs_ds[:] = 1e4
    s._begin_day(0)
    return s


def test_shock_signal_switches_beliefs():
    with_info = _primed("mf_with_shock_info")
    without = _primed("mf_without_shock_info")
    r1 = with_info.step_hour(0, 18)
    r0 = without.step_hour(0, 18)
    assert with_info.log.probe_action[0, 18, 0] == -1.0
    assert without.log.probe_action[0, 18, 0] > -1.0
    assert r1.B[0] < r0.B[0]
    # the shock counter moves, the regular belief stays put for that hour
    assert with_info.tau_d[0] == 1 and with_info.beliefs[0, 18] == 152.0


def test_regeneration_is_logged():
    net = one_bus()
    cfg = ScenarioConfig(days=2, agents_per_node=40, regen_prob=0.05, soc_points=11,
                         shocks=NO_SHOCKS)
    lg = run_simulation(net, flat_one_bus_types(n=20), cfg)
    assert lg.regen.shape[1] == 3 and lg.regen.shape[0] > 0
    n = 20 * 48
    assert abs(lg.regen.shape[0] - 0.05 * n) <= 4 * np.sqrt(n * 0.05 * 0.95)


def test_thread_count_does_not_change_results(ieee14, load_shape):
    a = ieee_run(ieee14, load_shape, threads=1)
    b = ieee_run(ieee14, load_shape, threads=3)
    for name in ("B", "lmp", "agent_cost", "profiles", "probe_action", "belief_err", "regen"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
