import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

from conftest import make_one_relay, make_two_cells, single_link
from loadcoupling.coupling import (AssociationError, build_topology, cell_loads, energy,
                                   fixed_point, interference, iterate, load_map,
                                   load_required, sinr)
from loadcoupling.optimizer import baseline_association
from loadcoupling.scenario import (GraphInstance, HexNetParams, Scenario, generate_hexnet,
                                   mis_gadget, random_scenario)

RELAY_ASSOC = [1, 0, 0]  # ue0 <- rc0, ue1 <- mc0, rc0 <- mc0
MC, RC, UE0, UE1, RCN = 0, 1, 0, 1, 2


def random_assoc(s, rng):
    return np.array([rng.choice(cs) for cs in s.candidates])


# -- topology ---------------------------------------------------------------

def test_one_relay_links_and_orthogonal_sets(one_relay):
    topo = build_topology(one_relay, RELAY_ASSOC)
    assert set(topo.links()) == {(MC, UE1), (MC, RCN), (RC, UE0)}
    assert topo.ortho_set((MC, UE1)) == {(MC, UE1), (MC, RCN)}
    assert topo.ortho_set((RC, UE0)) == {(RC, UE0), (MC, RCN)}
    assert topo.ortho_set((MC, RCN)) == {(MC, UE1), (MC, RCN), (RC, UE0)}
    assert topo.served[MC] == (UE1,) and topo.served[RC] == (UE0,)
    assert topo.relays[MC] == (RCN,)


def test_one_relay_backhaul_demand_is_sum_of_served(one_relay):
    s = make_one_relay(demand=(0.3, 0.7))
    topo = build_topology(s, RELAY_ASSOC)
    k = s.link_index[(MC, RCN)]
    assert topo.demand[k] == pytest.approx(0.3)


def test_one_relay_relay_access_ignores_donor_backhaul(one_relay):
    topo = build_topology(one_relay, RELAY_ASSOC)
    x = np.zeros(one_relay.n_links)
    x[one_relay.link_index[(MC, UE1)]] = 0.25
    x[one_relay.link_index[(MC, RCN)]] = 0.9
    x[one_relay.link_index[(RC, UE0)]] = 0.4
    i_relay = interference(topo, x)[one_relay.link_index[(RC, UE0)]]
    # only the MC's access link to ue1 reaches ue0 (gain 0.5, p 1)
    assert i_relay == pytest.approx(1.0 + 0.5 * 0.25)
    i_mc = interference(topo, x)[one_relay.link_index[(MC, UE1)]]
    assert i_mc == pytest.approx(1.0 + 0.5 * 0.3 * 0.4)
    i_bh = interference(topo, x)[one_relay.link_index[(MC, RCN)]]
    assert i_bh == pytest.approx(1.0)


def test_idle_relay_has_no_backhaul(one_relay):
    topo = build_topology(one_relay, [0, 0, 0])
    assert set(topo.links()) == {(MC, UE0), (MC, UE1)}
    assert topo.demand[one_relay.link_index[(MC, RCN)]] == 0.0
    assert topo.relays[MC] == ()
    res = fixed_point(one_relay, [0, 0, 0])
    assert res.loads[one_relay.link_index[(MC, RCN)]] == 0.0


def test_single_link_cells_interfere(two_cells):
    topo = build_topology(two_cells, [0, 1])
    assert topo.ortho_set((0, 0)) == {(0, 0)}
    assert topo.ortho_set((1, 1)) == {(1, 1)}
    x = np.zeros(two_cells.n_links)
    x[two_cells.link_index[(1, 1)]] = 0.5
    assert interference(topo, x)[two_cells.link_index[(0, 0)]] == pytest.approx(1.25)


def test_association_outside_candidates(one_relay):
    with pytest.raises(AssociationError):
        build_topology(one_relay, [1, 0, 1])
    with pytest.raises(AssociationError):
        build_topology(one_relay, [0, 0])


def test_orthogonality_symmetric_on_active_links():
    s = generate_hexnet(HexNetParams(rcs_per_region=4, rng_seed=2))
    rng = np.random.default_rng(0)
    for _ in range(3):
        a = random_assoc(s, rng)
        topo = build_topology(s, a)
        act = topo.active_idx
        sub = topo.ortho[np.ix_(act, act)]
        assert np.array_equal(sub, sub.T)


def test_active_link_count_with_pruned_relays():
    s = generate_hexnet(HexNetParams(rcs_per_region=2, rng_seed=1))
    a = baseline_association(s)
    topo = build_topology(s, a)
    busy = {a[j] for j in range(s.n_ue) if a[j] >= s.n_mc}
    assert len(topo.active_idx) == s.n_ue + len(busy)


# -- SINR and load -----------------------------------------------------------

def test_sinr_without_interference():
    s = single_link(p=1.0, g=1.0, noise=1.0, demand=1.0, num_ru=1, bandwidth=1.0)
    topo = build_topology(s, [0])
    assert sinr(topo, np.zeros(1), (0, 0)) == 1.0


def test_sinr_one_interferer(two_cells):
    s = make_two_cells(g_own=1.0, g_cross=0.5)
    topo = build_topology(s, [0, 1])
    x = np.zeros(s.n_links)
    x[s.link_index[(1, 1)]] = 0.5
    assert sinr(topo, x, (0, 0)) == pytest.approx(0.8)


def test_sinr_gadget_relay_access():
    s = mis_gadget(GraphInstance.path(2))
    # ue0 on rc0 (cell 2), ue1 on mc1, relays to their MCs
    topo = build_topology(s, [2, 1, 0, 1])
    assert sinr(topo, np.zeros(s.n_links), (2, 0)) == pytest.approx(3.0)


def test_load_required_examples():
    s = single_link(p=1.0, g=1.0, noise=1.0, demand=9e6, num_ru=100, bandwidth=180e3)
    topo = build_topology(s, [0])
    assert load_required(topo, np.zeros(1), (0, 0)) == pytest.approx(0.5, rel=1e-15)
    z = build_topology(s.with_demand(0.0), [0])
    assert load_required(z, np.zeros(1), (0, 0)) == 0.0

    g = mis_gadget(GraphInstance.path(2))
    topo = build_topology(g, [2, 1, 0, 1])
    assert load_required(topo, np.zeros(g.n_links), (2, 0)) == pytest.approx(0.5, rel=1e-15)


def test_load_map_matches_scalar_api():
    s = random_scenario(7, n_mc=3, n_rc=2, n_ue=5)
    rng = np.random.default_rng(1)
    topo = build_topology(s, random_assoc(s, rng))
    x = rng.uniform(0, 0.5, s.n_links)
    f = load_map(topo, x)
    for (c, j), k in s.link_index.items():
        assert f[k] == pytest.approx(load_required(topo, x, (c, j)), rel=1e-12)


# -- fixed point ---------------------------------------------------------------

def test_single_link_closed_form():
    s = single_link()
    closed = 2e6 / (100 * 180e3 * math.log2(1 + 0.8 * 1e-11 / 7e-16))
    first = iterate(build_topology(s, [0]), np.zeros(1), max_iter=1)
    assert first.loads[0] == pytest.approx(closed, rel=1e-12)
    res = fixed_point(s, [0])
    assert res.converged and res.feasible and res.iterations <= 2
    assert res.loads[0] == pytest.approx(closed, rel=1e-12)


def _symmetric_oracle(g, h, r, mb, p=1.0, noise=1.0):
    f = lambda x: x - r / (mb * math.log2(1 + p * g / (p * h * x + noise)))
    return brentq(f, 1e-12, 10.0, xtol=1e-15)


def test_two_cell_uniqueness_and_bisection():
    s = make_two_cells(g_own=1.0, g_cross=0.5, demand=1.0)
    lo = fixed_point(s, [0, 1])
    hi = fixed_point(s, [0, 1], x0=np.ones(s.n_links))
    assert lo.converged and hi.converged
    act = lo.topology.active_idx
    assert np.max(np.abs(lo.loads[act] - hi.loads[act])) <= 1e-6
    expected = _symmetric_oracle(1.0, 0.5, 1.0, 1.0)
    np.testing.assert_allclose(lo.loads[act], expected, rtol=1e-7)


def test_gadget_neighbouring_relays_infeasible():
    s = mis_gadget(GraphInstance.path(2))
    res = fixed_point(s, [2, 3, 0, 1])
    assert res.converged and not res.feasible
    assert res.cell_load[2] > 1.0 and res.cell_load[3] > 1.0


def test_divergence_reported_in_band():
    s = make_two_cells(g_own=1.0, g_cross=1.0, demand=3.0)
    res = fixed_point(s, [0, 1])
    assert not res.converged and not res.feasible and res.energy == math.inf


def test_max_iter_exhaustion():
    s = make_two_cells(g_own=1.0, g_cross=0.9, demand=0.6)
    res = fixed_point(s, [0, 1], max_iter=3)
    assert not res.converged and res.iterations == 3


def test_negative_start_rejected(two_cells):
    with pytest.raises(ValueError):
        fixed_point(two_cells, [0, 1], x0=-np.ones(two_cells.n_links))


def test_cell_loads_count_backhaul_at_both_ends(one_relay):
    topo = build_topology(one_relay, RELAY_ASSOC)
    x = np.zeros(one_relay.n_links)
    x[one_relay.link_index[(MC, UE1)]] = 0.2
    x[one_relay.link_index[(MC, RCN)]] = 0.3
    x[one_relay.link_index[(RC, UE0)]] = 0.4
    np.testing.assert_allclose(cell_loads(topo, x), [0.5, 0.7])


# -- energy -----------------------------------------------------------------

def test_energy_zero_demand():
    s = random_scenario(2).with_demand(0.0)
    res = fixed_point(s, baseline_association(s))
    assert res.energy == 0.0


def test_energy_arithmetic():
    s = make_two_cells(num_ru=100)
    s = Scenario(mc_pos=s.mc_pos, rc_pos=s.rc_pos, ue_pos=s.ue_pos, demand=s.demand,
                 gain=s.gain, power=[0.8, 0.05], noise=1.0, num_ru=100, ru_bandwidth=1.0,
                 candidates=s.candidates)
    topo = build_topology(s, [0, 1])
    x = np.zeros(s.n_links)
    x[s.link_index[(0, 0)]] = 0.5
    x[s.link_index[(1, 1)]] = 0.2
    x[s.link_index[(1, 0)]] = 7.0  # hypothetical, must not count
    assert energy(topo, x) == pytest.approx(41.0)


def test_energy_gadget_relayed_node():
    s = mis_gadget(GraphInstance(2, ()))
    res = fixed_point(s, [2, 1, 0, 1])
    # node 0 via relay: 0.5*0.5 + 1.0*0.5 ; node 1 direct: 1/log2(1 + 1.2)
    assert res.energy == pytest.approx(0.75 + 1.0 / math.log2(2.2), rel=1e-12)
    lit = mis_gadget(GraphInstance(2, ()), mc_ue_gain=1.0)
    assert fixed_point(lit, [2, 1, 0, 1]).energy == pytest.approx(1.75, rel=1e-12)


# -- properties ---------------------------------------------------------------

instance = st.tuples(st.integers(0, 10_000), st.integers(1, 3), st.integers(0, 2),
                     st.integers(1, 6))


def _random_setup(args):
    seed, n_mc, n_rc, n_ue = args
    s = random_scenario(seed, n_mc=n_mc, n_rc=n_rc, n_ue=n_ue)
    rng = np.random.default_rng(seed + 1)
    return s, build_topology(s, random_assoc(s, rng)), rng


@settings(max_examples=50, deadline=None)
@given(instance)
def test_load_map_monotone(args):
    s, topo, rng = _random_setup(args)
    x = rng.uniform(0, 1, s.n_links)
    y = x + rng.uniform(0, 1, s.n_links)
    assert np.all(load_map(topo, x) <= load_map(topo, y) * (1 + 1e-12))


@settings(max_examples=50, deadline=None)
@given(instance, st.floats(1.0001, 4.0))
def test_load_map_scalable(args, alpha):
    s, topo, rng = _random_setup(args)
    x = rng.uniform(0, 1, s.n_links)
    assert np.all(load_map(topo, alpha * x) <= alpha * load_map(topo, x) * (1 + 1e-12))


@settings(max_examples=30, deadline=None)
@given(instance)
def test_fixed_point_unique_from_positive_starts(args):
    s, topo, rng = _random_setup(args)
    base = fixed_point(s, topo)
    if not base.converged:
        return
    other = fixed_point(s, topo, x0=rng.uniform(0, 1, s.n_links))
    if not other.converged:
        return
    act = topo.active_idx
    assert np.max(np.abs(base.loads[act] - other.loads[act])) <= 10 * 1e-9


@settings(max_examples=20, deadline=None)
@given(instance, st.floats(1.01, 3.0))
def test_demand_scaling_monotone(args, lam):
    s, topo, rng = _random_setup(args)
    a = topo.assoc
    low = fixed_point(s, a)
    high = fixed_point(s.with_demand(s.demand * lam), a)
    if not (low.converged and high.converged):
        return
    act = topo.active_idx
    assert np.all(high.loads[act] >= low.loads[act] - 1e-9)


def test_energy_invariant_under_ue_relabelling():
    s = random_scenario(5, n_mc=3, n_rc=2, n_ue=6)
    a = baseline_association(s)
    perm = np.random.default_rng(0).permutation(s.n_ue)
    node_perm = np.r_[perm, np.arange(s.n_ue, s.n_nodes)]
    t = Scenario(mc_pos=s.mc_pos, rc_pos=s.rc_pos, ue_pos=s.ue_pos[perm],
                 demand=s.demand[perm], gain=s.gain[:, node_perm], power=s.power,
                 noise=s.noise, num_ru=s.num_ru, ru_bandwidth=s.ru_bandwidth,
                 candidates=tuple(s.candidates[j] for j in node_perm))
    e1 = fixed_point(s, a).energy
    e2 = fixed_point(t, a[node_perm]).energy
    assert e2 == pytest.approx(e1, rel=1e-9)
