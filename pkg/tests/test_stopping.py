import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seqinfer.pivots import numeric_gradient
from seqinfer.sampling import IDENTITY_MAP, SQUARE_MAP, NormalKnownVar, RandomStream, draw_many
from seqinfer.stopping import (
    StoppingRule,
    example1_rule,
    example2_rule,
    example4_rule,
    kappa,
    quadratic_boundary,
    run_trial,
    smoothed_abs_boundary,
    stopped_sample,
    stopping_time_of,
    stopping_times,
    studentized_boundary,
)

RULE = example2_rule()


def vec_T(rule, xs, omap=IDENTITY_MAP):
    return int(stopping_times(rule, np.cumsum(omap.lift_array(np.asarray(xs, float)), axis=0)))


@pytest.mark.parametrize("value,expected", [(0.0, 75), (1.0, 15), (0.6, 25)])
def test_hand_examples(value, expected):
    assert stopping_time_of(RULE, itertools.repeat(value)) == expected
    assert vec_T(RULE, np.full(75, value)) == expected


def test_consumes_at_most_n0():
    seen = []

    def gen():
        for i in itertools.count():
            seen.append(i)
            yield 0.0

    assert stopping_time_of(RULE, gen()) == 75
    assert len(seen) == 75


def test_short_sequence_errors():
    with pytest.raises(ValueError, match="exhausted"):
        stopping_time_of(RULE, [0.0] * 10)


def test_early_crossing_is_ignored_by_default():
    # |S_1| = 4 >= 3 but the path falls back inside before n1 = 15
    xs = [4.0] + [-0.3] * 74
    assert stopping_time_of(RULE, xs) == 75
    clamped = StoppingRule(quadratic_boundary(), 4.5, 75, 15, clamp_early=True)
    assert stopping_time_of(clamped, xs) == 15
    assert vec_T(clamped, xs) == 15


def test_rule_validation():
    with pytest.raises(ValueError):
        StoppingRule(quadratic_boundary(), 0.0, 75, 15)
    with pytest.raises(ValueError):
        StoppingRule(quadratic_boundary(), 4.5, 15, 15)
    with pytest.raises(ValueError):
        StoppingRule(quadratic_boundary(), 4.5, 75, 0)
    assert RULE.eps0 == pytest.approx(0.06) and RULE.eps1 == pytest.approx(0.3)


def test_kappa_examples():
    assert kappa(RULE, [0.0]) == pytest.approx(0.06, rel=1e-12)
    assert kappa(RULE, [0.5]) == pytest.approx(0.125, rel=1e-12)
    assert kappa(RULE, [1.0]) == pytest.approx(0.3, rel=1e-12)


@given(st.floats(-50, 50))
def test_kappa_clamped(mu):
    k = float(kappa(RULE, [mu]))
    assert RULE.eps0 <= k <= RULE.eps1


@settings(max_examples=200)
@given(st.lists(st.floats(-3, 3), min_size=75, max_size=75))
def test_vectorized_matches_scalar(xs):
    assert stopping_time_of(RULE, xs) == vec_T(RULE, xs)


@settings(max_examples=100)
@given(st.lists(st.floats(-3, 3), min_size=75, max_size=75))
def test_stopped_sample_invariants(xs):
    T = stopping_time_of(RULE, xs)
    s = stopped_sample(xs[:T])
    assert RULE.n1 <= T <= RULE.n0
    assert np.allclose(s.mean * T, s.obs.sum(axis=0))
    if RULE.n1 < T < RULE.n0:
        S = np.cumsum(xs)
        assert T * RULE.g([S[T - 1] / T]) >= RULE.crossing_level
        assert (T - 1) * RULE.g([S[T - 2] / (T - 1)]) < RULE.crossing_level


@settings(max_examples=100)
@given(st.lists(st.floats(-3, 3), min_size=75, max_size=75))
def test_studentized_vectorized_matches_scalar(xs):
    rule = example4_rule()
    lifted = SQUARE_MAP.lift_array(np.asarray(xs))
    assert stopping_time_of(rule, lifted) == vec_T(rule, xs, SQUARE_MAP)


def test_studentized_statistic_identity():
    x = np.array([0.3, -1.2, 2.0, 0.7, 0.1])
    n = len(x)
    s2 = np.mean((x - x.mean()) ** 2)
    lhs = n * studentized_boundary()([x.mean(), np.mean(x * x)])
    assert lhs == pytest.approx(x.sum() ** 2 / (2 * n * s2), rel=1e-12)


def test_studentized_edge_values():
    g = studentized_boundary()
    assert g([0.0, 0.0]) == 0.0
    assert g([0.1, 0.0]) == 0.0
    assert np.isinf(g([0.3, 0.09]))


def test_degenerate_trial():
    s = run_trial(RULE, NormalKnownVar(0.0, 0.0), IDENTITY_MAP, RandomStream(0, 0))
    assert s.T == 75 and s.mean[0] == 0.0


def test_large_drift_stops_at_n1():
    hits = [run_trial(RULE, NormalKnownVar(3.0), IDENTITY_MAP, RandomStream(1, i)).T == 15 for i in range(10_000)]
    assert np.mean(hits) > 0.99


def test_a_over_T_matches_oracle():
    # independent stdlib brute force, 1e5 trials: 0.16422 (SE 0.00026);
    # the a -> inf limit kappa(0.5) = 0.125 is not reached at a = 4.5
    paths = np.stack([draw_many(NormalKnownVar(0.5), RandomStream(2, i), 75) for i in range(100_000)])
    T = stopping_times(RULE, np.cumsum(paths, axis=1)[..., None])
    assert abs(np.mean(4.5 / T) - 0.16422) < 0.0015
    assert np.mean(4.5 / T) > 0.125


def test_wald_identity():
    N = 100_000
    paths = np.stack([draw_many(NormalKnownVar(0.3), RandomStream(3, i), 75) for i in range(N)])
    S = np.cumsum(paths, axis=1)
    T = stopping_times(RULE, S[..., None])
    dev = S[np.arange(N), T - 1] - 0.3 * T
    assert abs(dev.mean()) < 3 * dev.std() / np.sqrt(N)


def test_a_over_T_consistency_improves_with_scale():
    def spread(scale):
        rule = StoppingRule(quadratic_boundary(), 4.5 * scale, 75 * scale, 15 * scale)
        n = 2000
        paths = np.stack([draw_many(NormalKnownVar(0.5), RandomStream(4, i), rule.n0) for i in range(n)])
        T = stopping_times(rule, np.cumsum(paths, axis=1)[..., None])
        return np.mean(np.abs(rule.a / T - 0.125))

    assert spread(10) < spread(1)


@pytest.mark.parametrize("g,points", [
    (quadratic_boundary(), [[x] for x in np.linspace(-3, 3, 20)]),
    (smoothed_abs_boundary(0.5), [[x] for x in np.linspace(-2.9, 2.9, 20) if abs(abs(x) - 0.5) > 1e-3]),
    (studentized_boundary(), [[m, m * m + v] for m, v in zip(np.linspace(-1.5, 1.5, 20), np.linspace(0.5, 2, 20))]),
])
def test_boundary_gradients(g, points):
    for x in points:
        x = np.asarray(x, float)
        a = g.grad(x)
        n = numeric_gradient(g.func, x)
        assert np.allclose(a, n, rtol=1e-6, atol=1e-9), (x, a, n)


def test_example_rules():
    r1 = example1_rule(0.5)
    assert (r1.a, r1.n0, r1.n1, r1.d) == (9.0, 72, 1, 1)
    assert example4_rule().d == 2
