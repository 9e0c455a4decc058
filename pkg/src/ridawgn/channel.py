"""AWGN channel model, the Gaussian auxiliary output law, and information density.

Vectors are numpy arrays; functions that take ``y`` accept either a single
length-n vector or a (batch, n) array and return a float or an array to match.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bounds import capacity, dispersion
from .numerics import (LOG2E, DomainError, RngStream, q_function_array, run_blocks)

SHELL_TOL = 1e-9


@dataclass(frozen=True)
class ChannelSpec:
    """Length-n AWGN channel with per-symbol power ``power`` and unit noise."""

    n: int
    power: float
    noise_var: float = 1.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"blocklength must be a positive integer, got {self.n}")
        if not (self.power > 0 and math.isfinite(self.power)):
            raise DomainError(f"power must be positive and finite, got {self.power}")
        if self.noise_var != 1.0:
            raise DomainError("noise variance is fixed to 1")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "power", float(self.power))

    @property
    def radius(self) -> float:
        return math.sqrt(self.n * self.power)

    @property
    def capacity(self) -> float:
        return capacity(self.power)

    @property
    def dispersion(self) -> float:
        return dispersion(self.power)


@dataclass(frozen=True)
class MomentEstimate:
    """Monte Carlo moments of the per-symbol information density (1/n) i(x;Y)."""

    mean: float
    variance: float
    third_abs: float
    trials: int
    std_error_mean: float

    def to_dict(self) -> dict:
        return {"mean": self.mean, "variance": self.variance, "third_abs": self.third_abs,
                "trials": self.trials, "std_error_mean": self.std_error_mean}


def _as_rows(spec: ChannelSpec, v, name: str) -> np.ndarray:
    a = np.asarray(v, dtype=float)
    if a.shape[-1:] != (spec.n,) or a.ndim > 2:
        raise DomainError(f"{name} must have trailing dimension n={spec.n}, got shape {a.shape}")
    return a


def _out(a: np.ndarray):
    return float(a) if a.ndim == 0 else a


def channel_log_density(spec: ChannelSpec, x, y):
    """log2 W^n(y|x) = log2[(2 pi)^{-n/2} exp(-||y-x||^2 / 2)]."""
    x = _as_rows(spec, x, "x")
    y = _as_rows(spec, y, "y")
    d2 = np.sum((y - x) ** 2, axis=-1)
    return _out(-0.5 * spec.n * math.log2(2 * math.pi) - 0.5 * LOG2E * d2)


def cao_log_density(spec: ChannelSpec, y):
    """log2 density of N(0, (1+P) I_n), the capacity-achieving output law."""
    y = _as_rows(spec, y, "y")
    s = 1.0 + spec.power
    r2 = np.sum(y * y, axis=-1)
    return _out(-0.5 * spec.n * math.log2(2 * math.pi * s) - 0.5 * LOG2E * r2 / s)


def info_density(spec: ChannelSpec, x, y):
    """i(x;y) = log2 W(y|x)/Q*(y) in bits, via its closed algebraic form."""
    x = _as_rows(spec, x, "x")
    y = _as_rows(spec, y, "y")
    s = 1.0 + spec.power
    r2 = np.sum(y * y, axis=-1)
    d2 = np.sum((y - x) ** 2, axis=-1)
    return _out(0.5 * spec.n * math.log2(s) + 0.5 * LOG2E * (r2 / s - d2))


def info_density_via_densities(spec: ChannelSpec, x, y):
    """Same quantity as :func:`info_density`, as a difference of log-densities."""
    return channel_log_density(spec, x, y) - cao_log_density(spec, y)


def normalized_statistic(spec: ChannelSpec, x, y):
    """(i(x;y) - nC) / sqrt(nV): the CLT-normalised information density."""
    i = info_density(spec, x, y)
    return (i - spec.n * spec.capacity) / math.sqrt(spec.n * spec.dispersion)


def _check_shell(spec: ChannelSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.n,):
        raise DomainError(f"x must be a length-{spec.n} vector")
    e = float(x @ x)
    if abs(e - spec.n * spec.power) > SHELL_TOL * max(1.0, spec.n * spec.power):
        raise DomainError(f"x is off the power shell: ||x||^2={e!r}, nP={spec.n * spec.power!r}")
    return x


def _sample_info_density(spec: ChannelSpec, x: np.ndarray, rng: RngStream, trials: int,
                         workers: int) -> np.ndarray:
    def block(gen, count):
        z = gen.standard_normal((count, spec.n))
        return info_density(spec, x, x + z)

    parts = run_blocks(block, trials, rng, workers=workers)
    return np.concatenate(parts) if parts else np.empty(0)


def estimate_moments(spec: ChannelSpec, x, trials: int, rng: RngStream,
                     workers: int = 1) -> MomentEstimate:
    """Monte Carlo moments of (1/n) i(x;Y) with Y ~ W(.|x) and x on the shell."""
    x = _check_shell(spec, x)
    if trials < 100:
        raise DomainError(f"estimate_moments needs at least 100 trials, got {trials}")
    s = _sample_info_density(spec, x, rng, trials, workers) / spec.n
    mean = float(s.mean())
    dev = s - mean
    var = float(dev @ dev / (trials - 1))
    third = float(np.mean(np.abs(dev) ** 3))
    return MomentEstimate(mean, var, third, trials, math.sqrt(var / trials))


def ks_distance_normal(samples) -> float:
    """Kolmogorov-Smirnov distance between the empirical CDF and Phi."""
    z = np.sort(np.asarray(samples, dtype=float))
    m = z.size
    if m == 0:
        raise DomainError("ks distance of an empty sample")
    cdf = 1.0 - q_function_array(z)
    hi = np.arange(1, m + 1) / m - cdf
    lo = cdf - np.arange(0, m) / m
    return float(max(hi.max(), lo.max()))


def clt_diagnostic(spec: ChannelSpec, x, trials: int, rng: RngStream,
                   workers: int = 1) -> tuple[float, dict]:
    """KS distance of the normalised information density to N(0, 1).

    The summary also carries ``berry_esseen_hat`` = ks * sqrt(n), an
    empirical stand-in for the unspecified Berry-Esseen constant. It is a
    report, not a certified constant.
    """
    x = _check_shell(spec, x)
    if trials < 1:
        raise DomainError("clt_diagnostic needs at least one trial")
    i = _sample_info_density(spec, x, rng, trials, workers)
    z = (i - spec.n * spec.capacity) / math.sqrt(spec.n * spec.dispersion)
    ks = ks_distance_normal(z)
    summary = {
        "trials": trials,
        "mean": float(z.mean()),
        "std": float(z.std(ddof=1)) if trials > 1 else 0.0,
        "min": float(z.min()),
        "max": float(z.max()),
        "berry_esseen_hat": ks * math.sqrt(spec.n),
    }
    return ks, summary
