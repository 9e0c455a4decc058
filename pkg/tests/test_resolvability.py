import math

import mpmath
import numpy as np
import pytest
from scipy import integrate

from ridawgn.channel import ChannelSpec, cao_log_density, channel_log_density
from ridawgn.numerics import LOG2E, DomainError, RngStream
from ridawgn.resolvability import (CURVE_COLUMNS, FREY_CONST, FreyParams, ResolvabilityCodebook,
                                   curve_to_csv, frey_bound, induced_output_log_density,
                                   mixture_log_density, mtype_check, rate_tv_spearman,
                                   resolvability_experiment, sample_shell_output,
                                   shell_output_log_density, tv_estimate)
from ridawgn.shellquant import sample_shell

# Frozen after a 40-digit mpmath evaluation (see frey_oracle below).
FREY_TRIPLE = (0.70723091843806937, 0.40172985638271763, 0.24391189585462196)


def test_codebook_validation():
    spec = ChannelSpec(3, 1.0)
    with pytest.raises(DomainError):
        ResolvabilityCodebook(spec, np.ones((2, 3)) * 1.1)
    with pytest.raises(DomainError):
        ResolvabilityCodebook(spec, np.ones((2, 2)))
    assert ResolvabilityCodebook(spec, np.ones((5, 3))).M == 5


def test_induced_density_single_and_duplicate():
    spec = ChannelSpec(4, 1.0)
    c = np.ones(4)
    y = np.array([0.3, -1.2, 2.0, 0.1])
    one = induced_output_log_density(ResolvabilityCodebook(spec, c[None, :]), y)
    assert one == pytest.approx(channel_log_density(spec, c, y), abs=1e-12)
    two = induced_output_log_density(ResolvabilityCodebook(spec, np.stack([c, c])), y)
    assert two == pytest.approx(one, abs=1e-12)
    with pytest.raises(DomainError):
        induced_output_log_density(ResolvabilityCodebook(spec, c[None, :]), y[:3])


def test_induced_density_cross_direct_sum():
    spec = ChannelSpec(2, 2.0)
    a = math.sqrt(spec.n * spec.power)
    cross = np.array([[a, 0], [-a, 0], [0, a], [0, -a]])
    cb = ResolvabilityCodebook(spec, cross)
    oracle = sum(math.exp(-0.5 * (cx * cx + cy * cy)) / (2 * math.pi) for cx, cy in cross) / 4
    assert induced_output_log_density(cb, np.zeros(2)) == pytest.approx(math.log2(oracle), abs=1e-10)
    y = np.array([0.7, -0.2])
    oracle = sum(math.exp(-0.5 * float(np.sum((y - cc) ** 2))) / (2 * math.pi) for cc in cross) / 4
    assert induced_output_log_density(cb, y) == pytest.approx(math.log2(oracle), abs=1e-10)


def test_mixture_batch_matches_rows():
    spec = ChannelSpec(5, 1.0)
    rng = np.random.default_rng(0)
    c = sample_shell(spec, rng, 7)
    y = rng.normal(size=(20, 5)) * 2
    w = rng.uniform(size=7)
    batch = mixture_log_density(spec, c, y, w)
    for k in range(20):
        assert batch[k] == pytest.approx(mixture_log_density(spec, c, y[k], w), abs=1e-12)


def shell_density_quadrature(n, P, r):
    # X uniform on the shell: the angle between x and y has density ~ sin^{n-2}
    a = math.sqrt(n * P)
    t = a * r

    def num(phi):
        return math.exp(t * (math.cos(phi) - 1)) * math.sin(phi) ** (n - 2)

    def den(phi):
        return math.sin(phi) ** (n - 2)

    ratio = (integrate.quad(num, 0, math.pi, epsabs=0, epsrel=1e-13, limit=400)[0]
             / integrate.quad(den, 0, math.pi, epsabs=0, epsrel=1e-13, limit=400)[0])
    ln_p = -0.5 * n * math.log(2 * math.pi) - 0.5 * (r * r + a * a) + t + math.log(ratio)
    return ln_p * LOG2E


@pytest.mark.parametrize("n", [2, 4, 8])
@pytest.mark.parametrize("r", [0.0, 0.3, 1.0, 2.0, 3.0, 4.5, 6.0, 8.0, 11.0, 15.0])
def test_shell_density_against_quadrature(n, r):
    spec = ChannelSpec(n, 2.0)
    y = np.zeros(n)
    y[0] = r
    got = shell_output_log_density(spec, y)
    ref = shell_density_quadrature(n, 2.0, r)
    # log2 difference converts to relative density error via ln 2
    assert abs(got - ref) * math.log(2) < 1e-7


def test_shell_density_examples():
    spec = ChannelSpec(2, 1.0)
    assert shell_output_log_density(spec, np.zeros(2)) == pytest.approx(-math.log2(2 * math.pi) - LOG2E, abs=1e-12)
    s1 = ChannelSpec(1, 1.0)
    ref = math.log2(0.5 * (math.exp(-0.5 * (0.4 - 1) ** 2) + math.exp(-0.5 * (0.4 + 1) ** 2)) / math.sqrt(2 * math.pi))
    assert shell_output_log_density(s1, [0.4]) == pytest.approx(ref, abs=1e-12)


def test_shell_density_symmetry():
    rng = np.random.default_rng(3)
    for n in (2, 3, 6, 11):
        spec = ChannelSpec(n, 1.5)
        y = rng.normal(size=n) * 2
        q, _ = np.linalg.qr(rng.normal(size=(n, n)))
        assert shell_output_log_density(spec, q @ y) == pytest.approx(shell_output_log_density(spec, y), abs=1e-12)


def test_shell_density_batch_and_high_n():
    spec = ChannelSpec(200, 1.0)
    y = sample_shell_output(spec, np.random.default_rng(0), 4)
    vals = shell_output_log_density(spec, y)
    assert vals.shape == (4,) and np.all(np.isfinite(vals))


def test_tv_equal_laws_is_zero():
    lp = lambda y: channel_log_density(ChannelSpec(1, 1.0), [0.0], y)  # noqa: E731
    est = tv_estimate(lp, lp, lambda g, c: g.standard_normal((c, 1)), 1000, RngStream(0))
    assert est.value == 0.0 and est.ci_low == 0.0


def gauss1(mean):
    spec = ChannelSpec(1, 1.0)
    return lambda y: channel_log_density(spec, [mean], y)


def test_tv_two_gaussians():
    closed = 2 * (1 - 2 * float(mpmath.ncdf(-1)))
    assert closed == pytest.approx(1.365379, abs=1e-6)
    est = tv_estimate(gauss1(0.0), gauss1(2.0), lambda g, c: g.standard_normal((c, 1)), 100_000, RngStream(1))
    assert abs(est.value - closed) < 3 * est.std_error
    assert est.ci_low <= closed <= est.ci_high
    # the rounded literal 1.36539 sits 1.1e-5 away, far inside 3 sigma
    assert abs(est.value - 1.36539) < 3 * est.std_error


def test_tv_disjoint_saturates():
    est = tv_estimate(gauss1(0.0), gauss1(100.0), lambda g, c: g.standard_normal((c, 1)), 1000, RngStream(2))
    assert est.value == pytest.approx(2.0, abs=1e-6)


def test_tv_symmetric():
    a = tv_estimate(gauss1(0.0), gauss1(0.8), lambda g, c: g.standard_normal((c, 1)), 50_000, RngStream(3))
    b = tv_estimate(gauss1(0.8), gauss1(0.0), lambda g, c: 0.8 + g.standard_normal((c, 1)), 50_000, RngStream(4))
    assert abs(a.value - b.value) < 2 * math.hypot(a.std_error, b.std_error)


def test_tv_error_context_and_guard():
    def bad(y):
        raise ValueError("boom")

    with pytest.raises(ValueError, match="block of"):
        tv_estimate(bad, bad, lambda g, c: g.standard_normal((c, 1)), 200, RngStream(0))
    with pytest.raises(DomainError):
        tv_estimate(bad, bad, lambda g, c: g.standard_normal((c, 1)), 50, RngStream(0))


def test_mixture_integrates_to_one():
    spec = ChannelSpec(4, 1.0)
    c = sample_shell(spec, RngStream(5), 8)
    y = np.random.default_rng(6).normal(size=(200_000, 4)) * math.sqrt(1 + spec.power)
    w = np.exp2(mixture_log_density(spec, c, y) - cao_log_density(spec, y))
    assert abs(w.mean() - 1.0) < 3 * w.std(ddof=1) / math.sqrt(len(w))


def test_mtype_examples():
    assert mtype_check([0.2] * 5, 5)
    assert not mtype_check([1 / 3, 2 / 3], 2)
    assert mtype_check([0.25, 0.25, 0.5], 4)
    with pytest.raises(DomainError):
        mtype_check([0.5, 0.6], 10)


def frey_oracle(I, V, rho, xi, c, d, n):
    with mpmath.workdps(40):
        n = mpmath.mpf(n)
        qx = -mpmath.sqrt(2) * mpmath.erfinv(2 * mpmath.mpf(xi) - 1)
        R = I + mpmath.sqrt(V / n) * qx + c * mpmath.log(n, 2) / n
        mu = mpmath.ncdf(-(qx + d * mpmath.log(n, 2) / mpmath.sqrt(n * V))) + rho / (mpmath.mpf(V) ** 1.5 * mpmath.sqrt(n))
        const = mpmath.mpf(7) / 6 + mpmath.sqrt(3 * mpmath.pi / 2) * mpmath.exp(mpmath.mpf(3) / 4)
        bound = mpmath.exp(-n * mu * mpmath.power(2, n * R) / 3) + const * mpmath.exp(-n ** ((c - d - 1) / 2))
        return float(R), float(mu), float(bound)


def test_frey_frozen_triple():
    fb = frey_bound(FreyParams(0.5, 0.7805, 2.0, 0.2, 2.0, 0.5, 100))
    oracle = frey_oracle(0.5, 0.7805, 2.0, 0.2, 2.0, 0.5, 100)
    for got, ref, frozen in zip((fb.rate, fb.mu, fb.prob_bound), oracle, FREY_TRIPLE):
        assert got == pytest.approx(ref, rel=1e-12)
        assert got == pytest.approx(frozen, rel=1e-12)
    assert fb.second_term == pytest.approx(FREY_CONST * math.exp(-100 ** 0.25), rel=1e-14)


def test_frey_mu_tends_to_xi():
    fb = frey_bound(FreyParams(0.5, 0.78, 2.0, 0.1, 2.0, 0.5, 10 ** 6))
    assert abs(fb.mu - 0.1) < 1e-2


def test_frey_boundary_no_overflow():
    fb = frey_bound(FreyParams(0.5, 0.78, 2.0, 0.2, 2.0, 1.0 - 1e-12, 10 ** 4))
    assert math.isfinite(fb.prob_bound)
    assert fb.second_term == pytest.approx(FREY_CONST * math.exp(-1), rel=1e-9)


def test_frey_monotone_in_mu():
    # rho only enters mu; the bound must not increase as mu grows
    rows = [frey_bound(FreyParams(0.05, 0.78, rho, 0.3, 2.0, 0.5, 40)) for rho in np.linspace(0, 5, 60)]
    mus = [r.mu for r in rows]
    bounds = [r.prob_bound for r in rows]
    assert all(b > a for a, b in zip(mus, mus[1:]))
    assert all(b <= a for a, b in zip(bounds, bounds[1:]))


@pytest.mark.parametrize("kw,msg", [(dict(c=1.0), "c > 1"), (dict(d=1.5), "d in"), (dict(xi=1.0), "xi"),
                                    (dict(n=4), "n\\^")])
def test_frey_params_guard(kw, msg):
    base = dict(mutual_info=0.5, central_second=0.78, third_abs=2.0, xi=0.2, c=2.0, d=0.5, n=100)
    base.update(kw)
    with pytest.raises(DomainError, match=msg):
        FreyParams(**base)


def test_experiment_trend_and_reproducible():
    spec = ChannelSpec(8, 1.0)
    C = spec.capacity
    rates = [C - 0.25, C, C + 0.25, C + 0.5]
    rows = resolvability_experiment(spec, rates, 2000, RngStream(7))
    assert [r["M"] for r in rows] == [2 ** math.ceil(8 * r) for r in rates]
    assert rate_tv_spearman(rows) < 0
    assert rows[-1]["tv"] < 0.5 * rows[0]["tv"]
    again = resolvability_experiment(spec, rates, 2000, RngStream(7), workers=4)
    assert again == rows
    text = curve_to_csv(rows)
    assert text.splitlines()[0] == ",".join(CURVE_COLUMNS)
    assert len(text.splitlines()) == 5


def test_experiment_single_codeword_near_max():
    spec = ChannelSpec(6, 1.0)
    row = resolvability_experiment(spec, [0.0], 4000, RngStream(2))[0]
    assert row["M"] == 1
    # reverse-direction oracle: sample from the single Gaussian instead
    c = sample_shell(spec, RngStream(2).child(1).generator(), 1)[0]
    rev = tv_estimate(lambda y: channel_log_density(spec, c, y), lambda y: shell_output_log_density(spec, y),
                      lambda g, k: c + g.standard_normal((k, spec.n)), 4000, RngStream(3))
    assert abs(row["tv"] - rev.value) < 4 * math.hypot(row["ci_high"] - row["tv"], rev.std_error * 1.96) / 1.96
    assert row["tv"] > 1.0


def test_experiment_cao_target():
    rows = resolvability_experiment(ChannelSpec(4, 1.0), [0.5, 2.0], 500, RngStream(1), target="cao")
    assert rows[1]["tv"] < rows[0]["tv"]
    with pytest.raises(DomainError):
        resolvability_experiment(ChannelSpec(4, 1.0), [0.5], 500, RngStream(1), target="nope")


def test_experiment_guards():
    with pytest.raises(DomainError, match="n=13"):
        resolvability_experiment(ChannelSpec(13, 1.0), [0.5], 200, RngStream(0))
    with pytest.raises(DomainError, match="2\\^16"):
        resolvability_experiment(ChannelSpec(8, 1.0), [2.5], 200, RngStream(0))
