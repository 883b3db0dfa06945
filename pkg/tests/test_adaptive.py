import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from msnbargain import (ConstantChannel, DataItem, HomogeneousScenario, RayleighChannel, Scenario, SlotState,
                        UserProfile, run_adaptive, run_non_adaptive, sample_capacity, solve)
from msnbargain.adaptive import slot_lengths

from conftest import four_users, random_scenario


def ideal():
    return four_users(budgets=(500,) * 4)


# -- channel ----------------------------------------------------------------

class _FixedU:
    def __init__(self, u):
        self.u = u

    def random(self, size=None):
        return self.u if size is None else np.full(size, self.u)


def test_capacity_at_small_u_is_near_zero():
    ch = RayleighChannel(10)
    assert sample_capacity(ch, _FixedU(1e-12)) == pytest.approx(0.0, abs=1e-9)
    assert sample_capacity(ch, _FixedU(0.0)) > 0.0
    # inverse of F(c) = 1 - exp(-(2^c - 1) / rho)
    c = sample_capacity(ch, _FixedU(0.5))
    assert 1 - math.exp(-(2 ** c - 1) / 10) == pytest.approx(0.5)


def test_capacity_stream_reproducible():
    ch = RayleighChannel(20)
    a = sample_capacity(ch, np.random.default_rng(7), 50)
    b = sample_capacity(ch, np.random.default_rng(7), 50)
    assert np.array_equal(a, b) and np.all(a > 0)


@pytest.mark.parametrize("rho", [1.0, 10.0, 20.0])
def test_capacity_mean_matches_quadrature(rho):
    ch = RayleighChannel(rho)
    m = sample_capacity(ch, np.random.default_rng(0), 10 ** 6).mean()
    assert abs(m - ch.mean()) <= 0.01 * ch.mean()


def test_pdf_integrates_to_one():
    from scipy import integrate
    ch = RayleighChannel(10)
    total, _ = integrate.quad(lambda c: float(ch.pdf(c)), 0, 30)
    assert total == pytest.approx(1.0, abs=1e-8)
    assert float(ch.pdf(-1.0)) == 0.0 and float(ch.pdf(5000.0)) == 0.0


def test_link_matrix_symmetric():
    c = RayleighChannel(10).sample(4, np.random.default_rng(1))
    assert np.array_equal(c, c.T) and np.all(np.diag(c) == 0)
    assert np.all(c[~np.eye(4, dtype=bool)] > 0)


def test_bad_snr():
    with pytest.raises(ValueError):
        RayleighChannel(0)


# -- slotting ---------------------------------------------------------------

@pytest.mark.parametrize("T, pi, expected", [(20, 1, [1] * 20), (20, 3, [3] * 6 + [2]), (20, 20, [20]),
                                             (20, 50, [20]), (0, 2, [])])
def test_slot_lengths(T, pi, expected):
    assert slot_lengths(T, pi) == pytest.approx(expected)


def test_slot_size_validated():
    with pytest.raises(ValueError):
        slot_lengths(20, 0)


def test_single_slot_matches_static_solve():
    for sc in (ideal(), four_users(), random_scenario(np.random.default_rng(5), n_users=3)):
        res = run_adaptive(sc, sc.airtime_horizon)
        js = solve(sc)
        assert res.heads == [js.head]
        full = np.zeros(len(sc.items))
        full[list(js.selected.plan.variables)] = js.x
        np.testing.assert_allclose(res.slots[0].airtime, full, atol=1e-12)
        np.testing.assert_allclose(res.utilities, js.utilities, rtol=1e-10)


def test_ideal_rotation_counts():
    assert run_adaptive(ideal(), 1).head_counts(4).tolist() == [5, 5, 5, 5]
    assert run_adaptive(ideal(), 2).head_counts(4).tolist() == [3, 3, 2, 2]
    counts = run_adaptive(ideal(), 20).head_counts(4)
    assert counts.sum() == 1 and counts.max() == 1


def test_head_count_spread_shrinks_with_slot():
    spread = []
    for pi in (20, 10, 4, 2, 1):
        c = run_adaptive(ideal(), pi).head_counts(4)
        spread.append(int(c.max() - c.min()))
    assert all(a >= b for a, b in zip(spread, spread[1:]))


def test_exhausted_data_gets_no_airtime():
    sc = HomogeneousScenario([UserProfile(5000)] * 3, (1, 1, 1), 4.0).to_scenario()
    res = run_adaptive(sc, 1)
    assert np.all(res.state.remaining <= 1e-9)
    assert all(s.airtime.sum() == 0 for s in res.slots[5:])
    assert res.total_airtime < sc.airtime_horizon


def test_state_invariants_over_time():
    sc = four_users(budgets=(120, 500, 400, 400))
    res = run_adaptive(sc, 2, RayleighChannel(10), seed=3)
    assert len(res.slots) == 10
    assert res.total_airtime <= sc.airtime_horizon + 1e-9
    assert all(s.airtime.sum() <= s.length + 1e-9 for s in res.slots)
    sizes = np.array([it.size for it in sc.items])
    assert np.all(res.state.remaining >= 0) and np.all(res.state.remaining <= sizes)
    assert np.all(res.energy < sc.energy_budget)
    # cumulative utilities never drop back (with these budgets every slot adds value)
    u = np.array([s.utilities for s in res.slots])
    assert np.all(np.diff(u.sum(axis=1)) >= -1e-9)


def test_utilities_carry_over_between_slots():
    sc = ideal()
    res = run_adaptive(sc, 5)
    state = SlotState.initial(sc)
    assert np.all(state.utilities(sc) == 0)
    # replay the first slot and check the stored post-slot utilities
    first = res.slots[0]
    plan = sc.plan(first.head)
    maps = plan.flow_maps()
    state.apply(sc, plan, maps, first.airtime[list(maps.variables)])
    np.testing.assert_allclose(state.utilities(sc), first.utilities, rtol=1e-12)


def test_reward_accumulates_for_past_heads():
    res = run_adaptive(ideal(), 5)
    heads = set(res.heads)
    assert all(res.reward[h] > 0 for h in heads)
    assert all(res.reward[i] == 0 for i in range(4) if i not in heads)


def test_head_takes_stored_items_without_uplink():
    res = run_adaptive(ideal(), 1)
    first = res.heads[0]
    # every item the first head finished receiving is now flagged as stored
    flags = res.state.stored_flags(ideal(), first)
    done = res.state.holdings[first] >= 10 - 1e-9
    assert flags == done.tolist()


def test_non_adaptive_equals_single_slot_on_constant_links():
    sc = four_users()
    a = run_adaptive(sc, sc.airtime_horizon)
    for slot in (20, 5, 1):
        n = run_non_adaptive(sc, ConstantChannel(), seed=0, slot_size=slot)
        assert n.heads[0] == a.heads[0]
        total = np.sum([s.airtime for s in n.slots], axis=0)
        np.testing.assert_allclose(total, a.slots[0].airtime, atol=1e-9)
        np.testing.assert_allclose(n.utilities, a.utilities, atol=1e-6)


def test_single_slot_fading_runs_agree():
    sc = four_users()
    ch = RayleighChannel(10)
    a = run_adaptive(sc, 20, ch, seed=4)
    n = run_non_adaptive(sc, ch, seed=4, slot_size=20)
    assert a.heads == n.heads
    np.testing.assert_allclose(a.utilities, n.utilities, atol=1e-6)


def test_runs_are_deterministic():
    sc = four_users()
    ch = RayleighChannel(20)
    a, b = run_adaptive(sc, 4, ch, seed=9), run_adaptive(sc, 4, ch, seed=9)
    assert a.heads == b.heads and a.utilities.tobytes() == b.utilities.tobytes()
    c = run_adaptive(sc, 4, ch, seed=10)
    assert not np.array_equal(np.array([s.capacity for s in a.slots]), np.array([s.capacity for s in c.slots]))


def test_no_feasible_head_skips_slots():
    sc = Scenario([UserProfile(500)] * 3, [DataItem(0, 5, [1])], 4.0, unit_reward=0.0)
    res = run_adaptive(sc, 5)
    assert res.heads == [None] * 4
    assert res.total_airtime == 0
    assert run_non_adaptive(sc, ConstantChannel(), slot_size=5).total_airtime == 0


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 31), st.sampled_from([2.0, 5.0]))
def test_cumulative_fields_non_decreasing(seed, pi):
    rng = np.random.default_rng(seed)
    sc = random_scenario(rng, horizon=10)
    res = run_adaptive(sc, pi, RayleighChannel(10), seed=seed)
    st_ = SlotState.initial(sc)
    prev = st_.copy()
    for s in res.slots:
        if s.head is None:
            continue
        plan = s_plan = sc.with_capacity(s.capacity).plan(s.head, st_.stored_flags(sc, s.head))
        maps = plan.flow_maps()
        st_.apply(sc.with_capacity(s.capacity), s_plan, maps, s.airtime[list(maps.variables)])
        for f in ("disseminated", "received_interest", "forwarded", "sent", "received", "energy", "reward"):
            assert np.all(getattr(st_, f) >= getattr(prev, f) - 1e-12)
        assert np.all(st_.remaining <= prev.remaining + 1e-12)
        prev = st_.copy()
    np.testing.assert_allclose(st_.energy, res.energy, rtol=1e-9, atol=1e-9)
