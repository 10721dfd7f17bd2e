from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import seeds, similar_to_unitary
from finvn.algebra import BlockAlgebra
from finvn.errors import DimensionTooLarge, HorizonTooShort, NotAGauge, NotAlmostConvergent
from finvn.gauge import (
    Gauge,
    almost_limit,
    almost_limit_of_gauge_power,
    analyze_gauge,
    domination,
    norm_ratios,
    op_norm_sequence,
    q_prime,
    q_prime_search,
    q_tilde,
    strong_almost_limit,
    window_schedule,
)

N = 4096
n = np.arange(1, N + 1)


def test_window_schedule_doubles_up_to_quarter():
    assert window_schedule(4096) == [16, 32, 64, 128, 256, 512, 1024]
    assert window_schedule(4095)[-1] == 1024
    with pytest.raises(HorizonTooShort):
        window_schedule(32)


def test_constant_and_alternating():
    assert almost_limit(np.full(N, 5.0)).value == 5.0
    res = almost_limit((-1.0) ** n)
    assert res.converged and res.value == 0.0 and res.spread == 0.0


def test_periodic_sequences_average_to_period_mean():
    # period 3 does not divide any window, so the spread is O(1/w) and nonzero
    u = np.tile([1.0, 0.0, 0.0], N // 3 + 1)[:N]
    res = almost_limit(u, tol=1e-2)
    assert res.converged
    assert res.value == pytest.approx(1 / 3, abs=1e-3)


def test_divergent_blocks_are_not_certified():
    # blocks of ones and zeros of doubling length: no almost limit
    u = np.concatenate([np.full(2 ** k, k % 2, dtype=float) for k in range(13)])[:N]
    res = almost_limit(u)
    assert not res.converged
    assert res.upper - res.lower > 0.1
    with pytest.raises(NotAlmostConvergent):
        almost_limit(u, strict=True)


@given(seeds)
def test_convergent_sequences_agree_with_limit(seed):
    # [DERIVED] almost limit of a convergent sequence is its ordinary limit
    rng = np.random.default_rng(seed)
    L, d = rng.uniform(-3, 3), rng.uniform(-2, 2)
    rho = rng.uniform(0.1, 0.95)
    u = L + d * rho ** n + rng.uniform(-1, 1) / n ** 2
    res = almost_limit(u, tol=1e-5)
    assert res.converged
    assert abs(res.value - L) <= 1e-5


@given(seeds, st.integers(1, 200))
def test_shift_invariance(seed, shift):
    rng = np.random.default_rng(seed)
    a, b, c = rng.uniform(-2, 2, 3)
    theta = rng.uniform(0.1, 3.0)
    m = np.arange(1, N + shift + 1)
    u = a + b * (-1.0) ** m + c * np.cos(theta * m) / np.sqrt(m)
    base = almost_limit(u[:N], tol=1e-3)
    shifted = almost_limit(u[shift:shift + N], tol=1e-3)
    assert base.converged and shifted.converged
    assert abs(base.value - shifted.value) <= 1e-3
    assert abs(base.value - a) <= 1e-3


def test_strong_almost_limit():
    assert strong_almost_limit(0.7 * (1 + 1 / n), 0.7)
    assert not strong_almost_limit(3 + (-1.0) ** n, 3.0)


@pytest.mark.parametrize("c", [0.5, 0.9, 1.0, 1.7])
def test_perturbed_geometric_gauge_is_regular(c):
    g = Gauge.from_function(lambda k: k * np.log(c) + np.log1p(1 / k), N, log=True)
    a = analyze_gauge(g)
    assert a.regular
    assert abs(a.c_p - c) <= 0.01 * c


def test_linear_gauge_is_not_regular():
    a = analyze_gauge(Gauge.formula("n+1"))
    assert not a.regular
    assert a.c_p == pytest.approx(1.0, abs=1e-3)
    rho = almost_limit_of_gauge_power(Gauge.formula("n+1"), 1.0, 2)
    assert rho.value == pytest.approx(0.0, abs=1e-5)


def test_constant_multiple_gauge_has_rho_below_one():
    g = Gauge.geometric(0.8, N, scale=2.0)
    a = analyze_gauge(g)
    assert not a.regular
    assert almost_limit_of_gauge_power(g, a.c_p, 2).value == pytest.approx(0.25)


def test_alternating_ratios_are_not_a_gauge():
    vals = np.cumprod(np.where(n % 2 == 0, 2.0, 0.5))
    with pytest.raises(NotAGauge):
        analyze_gauge(Gauge.custom(vals))


def test_gauge_horizon_too_short():
    with pytest.raises(HorizonTooShort):
        analyze_gauge(Gauge.geometric(0.9, 128))
    with pytest.raises(HorizonTooShort):
        Gauge.geometric(0.9, 100).log(101)


def test_gauge_json_round_trip():
    for g in [Gauge.constant(2.0), Gauge.geometric(0.9, scale=3.0), Gauge.formula("2**n*(1+1/n)"),
              Gauge.custom(np.linspace(1, 2, 300))]:
        back = Gauge.from_json(g.to_json(), g.horizon)
        np.testing.assert_allclose(back.log_values, g.log_values, rtol=0, atol=1e-12)


def test_formula_gauge_matches_closed_form():
    g = Gauge.formula("0.9**n*(1+1/n)", 512)
    np.testing.assert_allclose(g.values, 0.9 ** np.arange(1, 513) * (1 + 1 / np.arange(1, 513)), rtol=1e-12)


def test_norm_ratios_match_unnormalized_powers(rng):
    # oracle: ||T^n|| / p(n) from explicit powers at small horizon
    alg = BlockAlgebra([3])
    t = similar_to_unitary(alg, rng, radius=0.9, cond=5.0)
    g = Gauge.geometric(0.9, 256)
    np.testing.assert_allclose(norm_ratios(t, g, 64), op_norm_sequence(t, 64) / g.values[:64], rtol=1e-10)


def test_domination_flags(rng):
    alg = BlockAlgebra([2])
    u = alg.element([np.diag([1.0, 1j])])
    rep = domination(u, Gauge.constant(1.0), 512)
    assert rep.dominated and rep.bounded and rep.compatible
    jordan = alg.element([np.array([[1.0, 1.0], [0.0, 1.0]])])
    assert not domination(jordan, Gauge.constant(1.0), 512).bounded
    contraction = alg.identity() * 0.5
    rep = domination(contraction, Gauge.constant(1.0), 512)
    assert rep.bounded and not rep.compatible
    # non-normal but similar to a unitary: bounded, not literally dominated
    t = similar_to_unitary(alg, rng, cond=20.0)
    rep = domination(t, Gauge.constant(1.0), 512)
    assert rep.bounded and rep.compatible and not rep.dominated


def test_q_prime_constant_and_alternating():
    assert q_prime(np.full(256, 3.0)) == 3.0
    res = q_prime_search((-1.0) ** np.arange(1, 257))
    assert res.value == 0.0 and res.offsets == (0, 1)


@given(st.lists(st.floats(0, 1), min_size=2, max_size=6), st.integers(0, 5))
def test_q_prime_of_periodic_is_period_mean(pattern, phase):
    # [DERIVED] no finite set beats the period mean and the full period attains it
    u = np.roll(np.tile(pattern, 512 // len(pattern) + 1), phase)[:512]
    assert q_prime(u) == pytest.approx(np.mean(pattern), abs=1e-12)


def test_q_prime_of_sparse_spikes_is_small():
    u = np.zeros(1024)
    u[np.arange(1, 33) ** 2 - 1] = 1.0
    assert q_prime(u) <= 1 / 8


def test_q_prime_horizon():
    with pytest.raises(HorizonTooShort):
        q_prime(np.ones(32))


def test_q_tilde_nested():
    arr = np.add.outer(np.zeros(64), (-1.0) ** np.arange(64) + 1)  # rows alternate 0, 2
    assert q_tilde(arr, 2) == pytest.approx(1.0)
    with pytest.raises(DimensionTooLarge):
        q_tilde(np.ones((2, 2, 2, 2)), 4)
