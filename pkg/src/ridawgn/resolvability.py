"""Channel resolvability over the AWGN channel.

Output densities are log2 values. The codebook-induced output law is an
equal-weight mixture of unit Gaussians; the target is the exact output of a
uniform-on-shell input, which depends on y only through ||y||.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np
from scipy.stats import spearmanr

from .channel import SHELL_TOL, ChannelSpec, cao_log_density
from .numerics import (LOG2E, DomainError, RngStream, bessel_i_log, log_sum_exp, q_function,
                       q_inverse, run_blocks)
from .shellquant import sample_shell

# rows * components per chunk in the mixture kernel
_CHUNK = 1 << 22


@dataclass(frozen=True)
class ResolvabilityCodebook:
    spec: ChannelSpec
    codewords: np.ndarray

    def __post_init__(self):
        c = np.ascontiguousarray(np.atleast_2d(np.asarray(self.codewords, dtype=float)))
        if c.shape[1] != self.spec.n:
            raise DomainError(f"codewords must have dimension {self.spec.n}")
        e = np.sum(c * c, axis=1)
        target = self.spec.n * self.spec.power
        if np.any(np.abs(e - target) > SHELL_TOL * max(1.0, target)):
            raise DomainError("codewords must lie on the power shell")
        object.__setattr__(self, "codewords", c)

    @property
    def M(self) -> int:
        return len(self.codewords)


def mixture_log_density(spec: ChannelSpec, centers, y, weights=None):
    """log2 sum_i w_i W^n(y | c_i); uniform weights when ``weights`` is None."""
    c = np.atleast_2d(np.asarray(centers, dtype=float))
    y_arr = np.asarray(y, dtype=float)
    if c.shape[1] != spec.n or y_arr.shape[-1] != spec.n:
        raise DomainError(f"dimension mismatch with n={spec.n}")
    rows = np.atleast_2d(y_arr)
    if weights is None:
        log_w = np.full(len(c), -math.log2(len(c)))
    else:
        w = np.asarray(weights, dtype=float)
        with np.errstate(divide="ignore"):
            log_w = np.log2(w / w.sum())
    c2 = np.sum(c * c, axis=1)
    const = -0.5 * spec.n * math.log2(2 * math.pi)
    out = np.empty(len(rows))
    step = max(1, _CHUNK // len(c))
    for s in range(0, len(rows), step):
        blk = rows[s:s + step]
        d2 = np.sum(blk * blk, axis=1)[:, None] - 2.0 * blk @ c.T + c2[None, :]
        np.maximum(d2, 0.0, out=d2)
        out[s:s + step] = log_sum_exp(log_w[None, :] - 0.5 * LOG2E * d2, axis=1)
    out += const
    return float(out[0]) if y_arr.ndim == 1 else out


def induced_output_log_density(cb: ResolvabilityCodebook, y):
    """log2 of (1/M) sum_i W^n(y | c_i)."""
    return mixture_log_density(cb.spec, cb.codewords, y)


def shell_output_log_density(spec: ChannelSpec, y):
    """Exact log2 density of X + Z with X uniform on the shell ||x||^2 = nP.

    For n >= 2 and r = ||y||, a = sqrt(nP), t = a r, nu = n/2 - 1:

        p(y) = (2 pi)^{-n/2} exp(-(r^2 + a^2)/2) Gamma(n/2) (t/2)^{-nu} I_nu(t)

    For n = 1 the input takes the two values +-sqrt(P).
    """
    y_arr = np.asarray(y, dtype=float)
    if y_arr.shape[-1] != spec.n:
        raise DomainError(f"y must have trailing dimension {spec.n}")
    rows = np.atleast_2d(y_arr)
    n = spec.n
    a = spec.radius
    if n == 1:
        atoms = np.array([[a], [-a]])
        out = mixture_log_density(spec, atoms, rows)
    else:
        nu = n / 2.0 - 1.0
        r = np.linalg.norm(rows, axis=1)
        base = -0.5 * n * math.log(2 * math.pi) - 0.5 * (r * r + a * a)
        ang = np.empty(len(r))
        for k, rk in enumerate(r):
            t = a * rk
            if t == 0.0:
                ang[k] = 0.0
            elif nu == 0.0:
                ang[k] = bessel_i_log(0.0, t)
            else:
                ang[k] = math.lgamma(n / 2.0) - nu * math.log(t / 2.0) + bessel_i_log(nu, t)
        out = (base + ang) * LOG2E
    return float(out[0]) if y_arr.ndim == 1 else out


def sample_shell_output(spec: ChannelSpec, gen: np.random.Generator, count: int) -> np.ndarray:
    return sample_shell(spec, gen, count) + gen.standard_normal((count, spec.n))


@dataclass(frozen=True)
class TvEstimate:
    """Monte Carlo estimate of d(P, Q) = ||p - q||_1 (range [0, 2])."""

    value: float
    std_error: float
    ci_low: float
    ci_high: float
    trials: int

    def to_dict(self) -> dict:
        return asdict(self)


def tv_estimate(log_p: Callable, log_q: Callable, sampler: Callable, trials: int, rng: RngStream,
                workers: int = 1) -> TvEstimate:
    """Estimate ||p - q||_1 as 2 E_p[(1 - q/p)^+] with y drawn by ``sampler(gen, count)``.

    Uses the positive part rather than |1 - q/p|: both are unbiased when q
    integrates to one, but the positive part is bounded in [0, 2] and does
    not need samples from the region where q dominates.
    """
    if trials < 100:
        raise DomainError(f"tv_estimate needs at least 100 trials, got {trials}")

    def block(gen, count):
        y = sampler(gen, count)
        try:
            lp = np.asarray(log_p(y), dtype=float)
            lq = np.asarray(log_q(y), dtype=float)
        except Exception as exc:
            raise type(exc)(f"{exc} (while evaluating densities on a block of {count} samples)") from exc
        diff = np.minimum(lq - lp, 0.0)
        return 2.0 * (1.0 - np.exp2(diff))

    vals = np.concatenate(run_blocks(block, trials, rng, workers=workers))
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(trials))
    return TvEstimate(mean, se, max(0.0, mean - 1.96 * se), min(2.0, mean + 1.96 * se), trials)


def mtype_check(masses, M: int) -> bool:
    """True iff every mass is an integer multiple of 1/M."""
    m = np.asarray(masses, dtype=float)
    if abs(m.sum() - 1.0) > 1e-12 or np.any(m < 0):
        raise DomainError("masses must be a probability vector summing to 1 within 1e-12")
    if M < 1:
        raise DomainError("M must be a positive integer")
    scaled = m * M
    return bool(np.all(np.abs(scaled - np.round(scaled)) <= 1e-12 * M))


@dataclass(frozen=True)
class FreyParams:
    mutual_info: float
    central_second: float
    third_abs: float
    xi: float
    c: float
    d: float
    n: int

    def __post_init__(self):
        if not self.c > 1:
            raise DomainError("Frey bound needs c > 1")
        if not 0 < self.d < self.c - 1:
            raise DomainError("Frey bound needs d in (0, c - 1)")
        if not 0 < self.xi < 1:
            raise DomainError("Frey bound needs xi in (0, 1)")
        if not self.central_second > 0 or self.third_abs < 0:
            raise DomainError("Frey bound needs V > 0 and rho >= 0")
        if self.n < 2 or self.n ** ((self.c - self.d) / 2) < 6:
            raise DomainError("Frey bound needs n^{(c-d)/2} >= 6")


@dataclass(frozen=True)
class FreyBound:
    rate: float            # bits per channel use
    mu: float
    prob_bound: float
    log_first_term: float  # natural log of exp(-(1/3) n mu 2^{nR})
    second_term: float

    def to_dict(self) -> dict:
        return asdict(self)


FREY_CONST = 7.0 / 6.0 + math.sqrt(1.5 * math.pi) * math.exp(0.75)


def frey_bound(fp: FreyParams) -> FreyBound:
    """Rate, mu and the probability bound of Frey's second-order resolvability theorem.

    Rates and logs are base 2; exp(nR) is the codebook size 2^{nR}. The
    first summand is formed in log domain and underflows cleanly to 0.
    """
    n = fp.n
    log_n = math.log2(n)
    V = fp.central_second
    qx = q_inverse(fp.xi)
    rate = fp.mutual_info + math.sqrt(V / n) * qx + fp.c * log_n / n
    mu = q_function(qx + fp.d * log_n / math.sqrt(n * V)) + fp.third_abs / (V ** 1.5 * math.sqrt(n))
    if mu > 0:
        ln_expo = math.log(n / 3.0) + math.log(mu) + n * rate * math.log(2.0)
        log_first = -math.exp(ln_expo) if ln_expo < 709 else -math.inf
    else:
        log_first = 0.0
    second = FREY_CONST * math.exp(-n ** ((fp.c - fp.d - 1.0) / 2.0))
    return FreyBound(rate, mu, math.exp(log_first) + second, log_first, second)


def resolvability_experiment(spec: ChannelSpec, rates, trials: int, rng: RngStream,
                             target: str = "shell", workers: int = 1) -> list[dict]:
    """TV between the target output law and random-codebook mixtures, per rate.

    Codebooks of size M = 2^ceil(nR) come from one stream, so a smaller
    codebook is a prefix of a larger one, and every rate is scored on the
    same target samples.
    """
    if spec.n > 12:
        raise DomainError(f"desk-scale guard: n={spec.n} > 12")
    sizes = [2 ** max(0, math.ceil(spec.n * r - 1e-12)) for r in rates]
    if max(sizes, default=1) > 2 ** 16:
        raise DomainError(f"desk-scale guard: largest codebook M={max(sizes)} exceeds 2^16")
    if target == "shell":
        log_p = lambda y: shell_output_log_density(spec, y)  # noqa: E731
    elif target == "cao":
        log_p = lambda y: cao_log_density(spec, y)  # noqa: E731
    else:
        raise DomainError(f"unknown target {target!r}")

    def sampler(gen, count):
        if target == "shell":
            return sample_shell_output(spec, gen, count)
        return gen.standard_normal((count, spec.n)) * math.sqrt(1.0 + spec.power)

    pool = sample_shell(spec, rng.child(1).generator(), max(sizes, default=1))
    rows = []
    for rate, M in zip(rates, sizes):
        cb = ResolvabilityCodebook(spec, pool[:M])
        est = tv_estimate(log_p, lambda y, cb=cb: induced_output_log_density(cb, y), sampler,
                          trials, rng.child(0), workers=workers)
        rows.append({"rate_bits": float(rate), "M": M, "tv": est.value, "ci_low": est.ci_low,
                     "ci_high": est.ci_high, "trials": trials, "seed": rng.seed})
    return rows


def rate_tv_spearman(rows: list[dict]) -> float:
    return float(spearmanr([r["rate_bits"] for r in rows], [r["tv"] for r in rows]).statistic)


CURVE_COLUMNS = ("rate_bits", "M", "tv", "ci_low", "ci_high", "trials", "seed")


def curve_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CURVE_COLUMNS)
    for r in rows:
        w.writerow([repr(r[k]) if isinstance(r[k], float) else r[k] for k in CURVE_COLUMNS])
    return buf.getvalue()
