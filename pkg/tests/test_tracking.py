import numpy as np
import pytest

from hsa import oracle, tracking
from hsa.tracking import (WassersteinTrace, check_encounter_times,
                          closed_form_discrepancy, track_cyclic,
                          track_full_holder, track_full_lipschitz,
                          track_subsampled, trace_for)

from conftest import fig1_problem


def test_lipschitz_examples():
    tr = track_full_lipschitz(1.0, 0.1, 2.0, 5, 1.0, 3)
    assert np.allclose(tr.values, [0, 0.08, 0.16, 0.24], rtol=0, atol=1e-15)
    assert track_full_lipschitz(0.7, 0.1, 2.0, 5, 1.0, 0).values == (0.0,)
    assert track_full_lipschitz(1.1, 0.1, 2.0, 5, 1.0, 50)[50] == 1.0


def test_holder_examples():
    tr = track_full_holder(1.0, 0.5, 0.1, 2.0, 5, 1.0, 2)
    assert tr[1] == pytest.approx(0.08)
    assert tr[2] == pytest.approx(0.08 + 0.1 * 0.08 ** 0.5 + 0.08, rel=1e-14)
    assert tr[2] == pytest.approx(0.18828, abs=1e-5)
    assert track_full_holder(1.0, 0.5, 0.1, 2.0, 5, 1.0, 0).values == (0.0,)
    # L = 0 collapses to the c = 1 recursion
    assert (track_full_holder(0.0, 0.3, 0.1, 2.0, 5, 1.0, 30).values
            == track_full_lipschitz(1.0, 0.1, 2.0, 5, 1.0, 30).values)


def test_holder_at_lambda_one_is_bitwise_lipschitz():
    a = track_full_holder(1.0, 1.0, 0.1, 2.0, 5, 1.0, 200)
    b = track_full_lipschitz(1.1, 0.1, 2.0, 5, 1.0, 200)
    assert a.values == b.values


def test_subsampled():
    tr = track_subsampled(1.0, 0.5, 0.1, 2.0, 1, 1.0, 5)
    assert np.allclose(tr.values, [0, 0.4, 0.8, 1.0, 1.0, 1.0])
    assert track_subsampled(1.0, 0.5, 0.1, 2.0, 1, 1.0, 0).values == (0.0,)
    # b = n uses the reduced constant eta*L*(b-1)/b
    ref = track_full_holder(4 / 5, 0.5, 0.1, 2.0, 5, 1.0, 40)
    sub = track_subsampled(1.0, 0.5, 0.1, 2.0, 5, 1.0, 40)
    assert np.allclose(sub.values, ref.values, rtol=1e-14, atol=0)


def test_cyclic_examples():
    tr = track_cyclic(1.0, 1.0, 0.1, 2.0, 5, 1.0, 5, [4])
    assert np.allclose(tr.values, [0, 0, 0, 0, 0, 0.08], atol=1e-15)
    assert track_cyclic(1.0, 1.0, 0.1, 2.0, 2, 1.0, 4, []).values == (0.0,) * 5


def test_cyclic_every_step_matches_subsampled_recursion():
    # b = n and an encounter at every step: each step is "after an encounter",
    # so the shared-gradient growth uses (b-1)/b of the constant
    T = 30
    tr = track_cyclic(1.0, 0.5, 0.1, 2.0, 5, 1.0, T, range(T), batches_per_epoch=1)
    ref = track_subsampled(1.0, 0.5, 0.1, 2.0, 5, 1.0, T)
    assert tr.values == ref.values
    full = track_full_holder(1.0, 0.5, 0.1, 2.0, 5, 1.0, T)
    assert all(x <= y + 1e-15 for x, y in zip(tr.values, full.values))
    # with L = 0 the two coincide exactly
    assert (track_cyclic(0.0, 0.5, 0.1, 2.0, 5, 1.0, T, range(T), 1).values
            == track_full_holder(0.0, 0.5, 0.1, 2.0, 5, 1.0, T).values)


def test_cyclic_four_cases():
    eta, K, b, L = 0.1, 2.0, 2, 1.0
    tr = track_cyclic(L, 1.0, eta, K, b, 10.0, 6, [1, 3, 4], batches_per_epoch=2)
    inc = 2 * eta * K / b
    v = [0.0, 0.0, inc]
    v.append(v[-1] * (1 + eta * L))              # t=3, t-1=2 not an encounter
    v.append(v[-1] * (1 + eta * L / 2) + inc)    # t=4, after encounter at 3
    v.append(v[-1] * (1 + eta * L / 2) + inc)    # t=5, after encounter at 4
    v.append(v[-1] * (1 + eta * L))              # t=6
    assert np.allclose(tr.values, v, rtol=1e-14)


@pytest.mark.parametrize("times, T, B", [
    ([2, 1], 5, None), ([0, 5], 5, None), ([-1], 5, None),
    ([0, 1], 4, 2), ([1, 2, 3], 6, 2),
])
def test_malformed_encounters(times, T, B):
    with pytest.raises(ValueError):
        check_encounter_times(times, T, B)


def test_trace_invariants():
    with pytest.raises(ValueError):
        WassersteinTrace((0.1, 0.2), "full_batch")
    for c in (0.5, 1.0, 1.3):
        tr = track_full_lipschitz(c, 0.1, 2.0, 5, 1.0, 100)
        a = tr.as_array()
        assert a[0] == 0 and a.min() >= 0 and a.max() <= 1.0


@pytest.mark.parametrize("c", [0.9, 1.0, 1.1])
def test_closed_form_is_an_upper_bound(c):
    tr = track_full_lipschitz(c, 0.1, 2.0, 5, 1.0, 60)
    for tau in range(61):
        assert tr[tau] <= closed_form_discrepancy(c, 0.1, 2.0, 5, 1.0, tau) + 1e-15


def test_trace_for_dispatch():
    p = fig1_problem("strongly_convex", T=10)
    assert trace_for(p).values == track_full_lipschitz(0.9, 0.1, 2.0, 5, 1.0, 10).values
    q = fig1_problem("non_convex", T=10, lam=0.5)
    assert trace_for(q).values == track_full_holder(1.0, 0.5, 0.1, 2.0, 5, 1.0, 10).values
    r = fig1_problem("non_convex", T=4, n=4, b=2, strategy="shuffled_cyclic")
    with pytest.raises(ValueError):
        trace_for(r)
    assert trace_for(r, [1, 2]).encounter_times == (1, 2)


def test_monte_carlo_domination_random_quadratics():
    rng = np.random.default_rng(11)
    for i in range(5):
        m = float(rng.uniform(-0.8, 1.0))
        toy = oracle.ToyProblem1D("quadratic", tuple(rng.uniform(-0.5, 0.5, 5)),
                                  float(rng.uniform(-0.5, 0.5)), int(rng.integers(5)),
                                  m=m, eta=0.3, sigma=0.5, T=25)
        rep = oracle.coupled_w_inf_check(toy, trace_for(toy.problem()), 1000, seed=i)
        assert rep.passed, rep.worst_excess
