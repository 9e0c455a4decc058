import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from ridawgn.numerics import (DomainError, Layer, LogLayered, RngStream, bessel_i_log, log_q_function,
                              log_sum_exp, q_function, q_inverse, run_blocks)


def erfc_series(x, terms=80):
    # erf Maclaurin series, independent of math.erfc
    s = sum((-1) ** k * x ** (2 * k + 1) / (math.factorial(k) * (2 * k + 1)) for k in range(terms))
    return 1.0 - 2.0 / math.sqrt(math.pi) * s


def test_q_function_values():
    assert q_function(0.0) == 0.5
    oracle = 0.5 * erfc_series(1.0 / math.sqrt(2.0))
    assert q_function(1.0) == pytest.approx(oracle, abs=1e-14)
    assert q_function(1.0) == pytest.approx(0.158655, abs=5e-7)
    tail = q_function(40.0)
    assert 0.0 <= tail < 1e-300


def test_log_q_function_deep_tail():
    for x in (5.0, 30.0, 40.0, 200.0):
        ref = float(mpmath.log(mpmath.erfc(x / mpmath.sqrt(2)) / 2))
        assert log_q_function(x) == pytest.approx(ref, rel=1e-12)


@pytest.mark.parametrize("bad", [math.inf, -math.inf, math.nan])
def test_q_function_rejects_non_finite(bad):
    with pytest.raises(DomainError):
        q_function(bad)


def newton_quantile(eps):
    x = 0.0
    for _ in range(60):
        x += (0.5 * erfc_series(x / math.sqrt(2)) - eps) / (math.exp(-x * x / 2) / math.sqrt(2 * math.pi))
    return x


def test_q_inverse_values():
    assert q_inverse(0.5) == 0.0
    assert q_inverse(0.025) == pytest.approx(newton_quantile(0.025), abs=1e-10)
    assert q_inverse(0.025) == pytest.approx(1.959964, abs=5e-7)
    for e in (1e-6, 0.01, 0.3):
        assert q_inverse(e) == pytest.approx(-q_inverse(1 - e), abs=1e-9)


@pytest.mark.parametrize("bad", [0.0, 1.0, -0.1, 1.5])
def test_q_inverse_domain(bad):
    with pytest.raises(DomainError):
        q_inverse(bad)


@given(st.floats(min_value=1e-300, max_value=1 - 1e-15))
def test_q_inverse_roundtrip_probability(eps):
    assert q_function(q_inverse(eps)) == pytest.approx(eps, abs=1e-10, rel=1e-9)


@given(st.floats(min_value=-6.0, max_value=6.0))
def test_q_inverse_of_q_is_identity(x):
    # For x < 0, Q(x) sits near 1 and its double rounding alone moves the
    # preimage by ulp(Q)/phi(x) (~9e-9 at x = -6); that term is added.
    pdf = math.exp(-x * x / 2) / math.sqrt(2 * math.pi)
    rounding = 0.5 * np.spacing(q_function(x)) / pdf
    assert abs(q_inverse(q_function(x)) - x) <= 1e-9 + 1.01 * rounding


@given(st.floats(min_value=-5.0, max_value=6.0))
def test_q_inverse_of_q_is_identity_strict(x):
    assert abs(q_inverse(q_function(x)) - x) <= 1e-9


def bessel_series_oracle(nu, s, terms=60):
    return sum((s / 2) ** (2 * k + nu) / (math.factorial(k) * math.gamma(k + nu + 1)) for k in range(terms))


def test_bessel_i_log_basic():
    assert bessel_i_log(0, 0) == 0.0
    assert bessel_i_log(1, 0) == -math.inf
    assert bessel_i_log(0, 1) == pytest.approx(math.log(bessel_series_oracle(0, 1.0)), abs=1e-14)
    assert math.exp(bessel_i_log(0, 1)) == pytest.approx(1.266066, abs=5e-7)


@pytest.mark.parametrize("nu", [0.0, 0.5, 1.0, 3.0, 7.5, 20.0, 49.0, 50.0, 120.0])
@pytest.mark.parametrize("s", [1e-4, 0.3, 2.0, 17.0, 59.0, 61.0, 250.0, 2000.0, 1e4])
def test_bessel_i_log_against_mpmath(nu, s):
    ref = float(mpmath.log(mpmath.besseli(nu, s)))
    # absolute error in ln I is the relative error in I
    assert abs(bessel_i_log(nu, s) - ref) < 1e-8


@pytest.mark.parametrize("nu", [1, 2, 3, 4, 5])
def test_bessel_recurrence(nu):
    s = 2.0
    lhs = math.exp(bessel_i_log(nu - 1, s)) - math.exp(bessel_i_log(nu + 1, s))
    rhs = 2 * nu / s * math.exp(bessel_i_log(nu, s))
    assert lhs == pytest.approx(rhs, rel=1e-6)


def test_bessel_domain():
    with pytest.raises(DomainError):
        bessel_i_log(-1, 1)
    with pytest.raises(DomainError):
        bessel_i_log(0, math.inf)


def test_log_sum_exp_examples():
    assert log_sum_exp([3.25]) == 3.25
    assert log_sum_exp([0.0, 0.0]) == 1.0
    assert log_sum_exp([10.0, -math.inf, -math.inf]) == 10.0
    assert log_sum_exp([-math.inf, -math.inf]) == -math.inf
    assert log_sum_exp([2000.0, 2000.0]) == 2001.0
    with pytest.raises(DomainError):
        log_sum_exp([])


def test_log_sum_exp_axis():
    v = np.array([[0.0, 0.0, -math.inf], [1.0, -math.inf, -math.inf], [-math.inf] * 3])
    out = log_sum_exp(v, axis=1)
    assert out[0] == 1.0 and out[1] == 1.0 and out[2] == -math.inf


finite = st.floats(min_value=-500, max_value=500)


@given(st.lists(finite, min_size=1, max_size=12), st.randoms())
def test_log_sum_exp_permutation_invariant(vals, rnd):
    shuffled = list(vals)
    rnd.shuffle(shuffled)
    assert log_sum_exp(shuffled) == pytest.approx(log_sum_exp(vals), abs=1e-12)


@given(st.lists(finite, min_size=1, max_size=12), st.integers(0, 11), st.floats(0, 50))
def test_log_sum_exp_monotone(vals, k, bump):
    k %= len(vals)
    raised = list(vals)
    raised[k] += bump
    assert log_sum_exp(raised) >= log_sum_exp(vals) - 1e-12


def test_loglayered_roundtrip():
    x = LogLayered.linear(12345.678)
    up = x.promote().promote()
    assert up.layer is Layer.LOGLOG
    back = up.demote().demote()
    assert back.value == pytest.approx(x.value, rel=1e-12)


@given(st.floats(min_value=1.0 + 1e-6, max_value=1e300))
def test_loglayered_roundtrip_property(v):
    x = LogLayered.linear(v)
    assert x.promote().demote().value == pytest.approx(v, rel=1e-12)


def test_loglayered_refuses_overflowing_demotion():
    big = LogLayered.loglog2(20.0)  # N = 2^(2^20)
    assert big.at(Layer.LOG) == 2.0 ** 20
    with pytest.raises(OverflowError):
        big.demote().demote()
    with pytest.raises(DomainError):
        LogLayered.linear(0.0).promote()
    with pytest.raises(DomainError):
        LogLayered.linear(0.5).promote().promote()  # log2(0.5) < 0 has no loglog


def test_rng_stream_reproducible_and_distinct():
    a = RngStream(5, 1).generator().standard_normal(8)
    b = RngStream(5, 1).generator().standard_normal(8)
    c = RngStream(5, 2).generator().standard_normal(8)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_run_blocks_independent_of_workers():
    def fn(gen, count):
        return gen.standard_normal(count).sum()

    one = run_blocks(fn, 20_000, RngStream(3), workers=1, block_size=1000)
    many = run_blocks(fn, 20_000, RngStream(3), workers=8, block_size=1000)
    assert one == many
    assert len(run_blocks(fn, 2500, RngStream(3), block_size=1000)) == 3
