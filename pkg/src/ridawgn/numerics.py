"""Special functions, base-2 log arithmetic and seeded randomness.

Every information quantity in this package is measured in bits. The helpers
here are the only place where natural logarithms leak in (Bessel functions,
Gaussian tails); callers convert at the boundary with :data:`LOG2E`.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence, TypeVar

import numpy as np

LOG2E = math.log2(math.e)
LN2 = math.log(2.0)
SQRT2 = math.sqrt(2.0)

# Largest log2 value that still demotes to a finite double.
MAX_LINEAR_LOG2 = math.log2(np.finfo(float).max)

T = TypeVar("T")


class DomainError(ValueError):
    """An argument lies outside the domain where an operation is defined."""


def nats_to_bits(x: float) -> float:
    return x * LOG2E


def bits_to_nats(x: float) -> float:
    return x * LN2


# ---------------------------------------------------------------------------
# Gaussian tail and its inverse
# ---------------------------------------------------------------------------

def q_function(x: float) -> float:
    """Pr(Z > x) for a standard normal Z.

    Underflows to 0.0 past x ~ 38.5; use :func:`log_q_function` when the
    magnitude of deep tails matters.
    """
    x = float(x)
    if not math.isfinite(x):
        raise DomainError(f"q_function needs a finite argument, got {x}")
    return 0.5 * math.erfc(x / SQRT2)


def log_q_function(x: float) -> float:
    """Natural log of Q(x), finite for all finite x."""
    x = float(x)
    if not math.isfinite(x):
        raise DomainError(f"log_q_function needs a finite argument, got {x}")
    if x < 30.0:
        return math.log(0.5 * math.erfc(x / SQRT2))
    # Mills-ratio asymptotic series; at x >= 30 five terms give ~1e-16.
    x2 = x * x
    s, term = 1.0, 1.0
    for k in range(1, 6):
        term *= -(2 * k - 1) / x2
        s += term
    return -0.5 * x2 - math.log(x) - 0.5 * math.log(2 * math.pi) + math.log(s)


def q_function_array(x) -> np.ndarray:
    """Vectorised :func:`q_function` for numpy input."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError("q_function_array needs finite arguments")
    return 0.5 * _erfc_vec(x / SQRT2)


_erfc_vec = np.vectorize(math.erfc, otypes=[float])

# Acklam's rational approximation to the normal quantile (rel. error ~1e-9).
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def _normal_quantile_rational(p: float) -> float:
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        return (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    if p > 1.0 - _P_LOW:
        q = math.sqrt(-2.0 * math.log1p(-p))
        return -(((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    q = p - 0.5
    r = q * q
    return (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / \
        (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0)


def q_inverse(eps: float) -> float:
    """Inverse of :func:`q_function` on (0, 1)."""
    eps = float(eps)
    if not (0.0 < eps < 1.0):
        raise DomainError(f"q_inverse needs 0 < eps < 1, got {eps}")
    if eps == 0.5:
        return 0.0
    # Q^{-1}(eps) = Phi^{-1}(1 - eps); work on the smaller tail for accuracy
    # and restore the sign afterwards.
    tail = min(eps, 1.0 - eps)
    x = -_normal_quantile_rational(tail)
    for _ in range(2):
        pdf = math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
        if pdf == 0.0:
            break
        x += (q_function(x) - tail) / pdf
    return x if eps < 0.5 else -x


# ---------------------------------------------------------------------------
# log I_nu(s)
# ---------------------------------------------------------------------------

def _bessel_i_log_series(nu: float, s: float) -> float:
    # ln of sum_k (s/2)^{2k+nu} / (k! Gamma(k+nu+1)), summed in log domain.
    half = s / 2.0
    peak = 0.5 * (-nu + math.sqrt(nu * nu + s * s))
    kmax = int(peak + 12.0 * math.sqrt(peak + 1.0) + 40)
    k = np.arange(1, kmax + 1, dtype=float)
    steps = 2.0 * math.log(half) - np.log(k) - np.log(k + nu)
    logs = np.concatenate(([0.0], np.cumsum(steps)))
    top = logs.max()
    total = top + math.log(np.exp(logs - top).sum())
    return nu * math.log(half) - math.lgamma(nu + 1.0) + total


def _bessel_i_log_hankel(nu: float, s: float) -> float:
    # Large-argument expansion; truncated at the smallest term.
    mu = 4.0 * nu * nu
    acc, term = 1.0, 1.0
    prev = math.inf
    for k in range(1, 200):
        term *= -(mu - (2 * k - 1) ** 2) / (k * 8.0 * s)
        if abs(term) >= prev or term == 0.0:
            break
        acc += term
        prev = abs(term)
        if prev < 1e-17 * abs(acc):
            break
    return s - 0.5 * math.log(2.0 * math.pi * s) + math.log(acc)


# Debye polynomials u_k(t), DLMF 10.41.10.
def _debye_u(t: float) -> tuple[float, ...]:
    t2 = t * t
    u1 = t * (3.0 - 5.0 * t2) / 24.0
    u2 = t2 * (81.0 - 462.0 * t2 + 385.0 * t2 * t2) / 1152.0
    u3 = t * t2 * (30375.0 - 369603.0 * t2 + 765765.0 * t2 ** 2 - 425425.0 * t2 ** 3) / 414720.0
    u4 = t2 * t2 * (4465125.0 - 94121676.0 * t2 + 349922430.0 * t2 ** 2
                    - 446185740.0 * t2 ** 3 + 185910725.0 * t2 ** 4) / 39813120.0
    return (1.0, u1, u2, u3, u4)


def _bessel_i_log_debye(nu: float, s: float) -> float:
    z = s / nu
    root = math.sqrt(1.0 + z * z)
    t = 1.0 / root
    eta = root + math.log(z / (1.0 + root))
    us = _debye_u(t)
    corr = sum(u / nu ** k for k, u in enumerate(us))
    return nu * eta - 0.5 * math.log(2.0 * math.pi * nu) - 0.5 * math.log(root) + math.log(corr)


def bessel_i_log(nu: float, s: float) -> float:
    """Natural log of the modified Bessel function I_nu(s).

    Returns ``-inf`` for s = 0 and nu > 0. Dispatches between the power
    series, the Hankel expansion (s >> nu^2) and the Debye uniform
    expansion (nu >= 50).
    """
    nu, s = float(nu), float(s)
    if not (math.isfinite(nu) and math.isfinite(s)) or nu < 0 or s < 0:
        raise DomainError(f"bessel_i_log needs finite nu, s >= 0, got nu={nu}, s={s}")
    if s == 0.0:
        return 0.0 if nu == 0.0 else -math.inf
    if nu >= 50.0:
        return _bessel_i_log_debye(nu, s)
    if s > max(60.0, 2.0 * nu * nu):
        return _bessel_i_log_hankel(nu, s)
    return _bessel_i_log_series(nu, s)


# ---------------------------------------------------------------------------
# base-2 log-sum-exp
# ---------------------------------------------------------------------------

def log_sum_exp(values: Sequence[float] | np.ndarray, axis: int | None = None):
    """log2 of sum(2**v), overflow safe. ``-inf`` entries contribute nothing.

    With ``axis`` given, reduces along that axis of an array and returns an
    array; otherwise returns a float.
    """
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise DomainError("log_sum_exp of an empty list")
    if axis is None:
        v = v.ravel()
        top = v.max()
        if not np.isfinite(top):
            return float(top)
        return float(top + np.log2(np.exp2(v - top).sum()))
    top = v.max(axis=axis, keepdims=True)
    safe = np.where(np.isfinite(top), top, 0.0)
    with np.errstate(divide="ignore"):
        out = safe + np.log2(np.exp2(v - safe).sum(axis=axis, keepdims=True))
    out = np.where(np.isfinite(top), out, top)
    return np.squeeze(out, axis=axis)


# ---------------------------------------------------------------------------
# layered magnitudes
# ---------------------------------------------------------------------------

class Layer(str, enum.Enum):
    LINEAR = "linear"
    LOG = "log"
    LOGLOG = "loglog"


_ORDER = [Layer.LINEAR, Layer.LOG, Layer.LOGLOG]


@dataclass(frozen=True)
class LogLayered:
    """A positive magnitude stored as x, log2 x or log2 log2 x.

    Used for code sizes like N ~ 2^(2^(nC)) that can never be held linearly.
    """

    layer: Layer
    value: float

    def __post_init__(self):
        object.__setattr__(self, "layer", Layer(self.layer))
        # log and loglog layers represent 2**v > 0 and 2**2**v > 1 by construction
        if math.isnan(self.value):
            raise DomainError("LogLayered value is NaN")

    @classmethod
    def linear(cls, x: float) -> "LogLayered":
        return cls(Layer.LINEAR, float(x))

    @classmethod
    def log2(cls, v: float) -> "LogLayered":
        return cls(Layer.LOG, float(v))

    @classmethod
    def loglog2(cls, v: float) -> "LogLayered":
        return cls(Layer.LOGLOG, float(v))

    def promote(self) -> "LogLayered":
        """Move one layer up (take log2 of the stored value)."""
        if self.layer is Layer.LOGLOG:
            raise DomainError("cannot promote beyond the loglog layer")
        if self.value <= 0:
            raise DomainError(
                f"promotion from {self.layer.value} needs a positive stored value, got {self.value}")
        nxt = _ORDER[_ORDER.index(self.layer) + 1]
        return LogLayered(nxt, math.log2(self.value))

    def demote(self) -> "LogLayered":
        """Move one layer down; refuses when the result would overflow."""
        if self.layer is Layer.LINEAR:
            raise DomainError("cannot demote below the linear layer")
        if self.value > MAX_LINEAR_LOG2:
            raise OverflowError(
                f"value stays at layer {self.layer.value}: 2**{self.value} is not representable")
        prev = _ORDER[_ORDER.index(self.layer) - 1]
        return LogLayered(prev, 2.0 ** self.value)

    def at(self, layer: Layer | str) -> float:
        """Stored value re-expressed at ``layer``."""
        layer = Layer(layer)
        cur = self
        while _ORDER.index(cur.layer) < _ORDER.index(layer):
            cur = cur.promote()
        while _ORDER.index(cur.layer) > _ORDER.index(layer):
            cur = cur.demote()
        return cur.value

    def to_dict(self) -> dict:
        return {"layer": self.layer.value, "value": self.value}


# ---------------------------------------------------------------------------
# randomness
# ---------------------------------------------------------------------------

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngStream:
    """Deterministic random stream keyed by (seed, stream_id, subkey...).

    Streams are derived with numpy's SeedSequence spawn keys, so distinct
    keys give independent PCG64 generators.
    """

    seed: int
    stream_id: int = 0
    subkey: tuple[int, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "seed", int(self.seed) & _MASK64)
        object.__setattr__(self, "stream_id", int(self.stream_id) & _MASK64)
        object.__setattr__(self, "subkey", tuple(int(k) & _MASK64 for k in self.subkey))

    def child(self, *key: int) -> "RngStream":
        return RngStream(self.seed, self.stream_id, self.subkey + tuple(key))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,) + self.subkey)
        return np.random.Generator(np.random.PCG64(ss))


DEFAULT_BLOCK = 4096


def run_blocks(fn: Callable[[np.random.Generator, int], T], trials: int, rng: RngStream,
               workers: int = 1, block_size: int = DEFAULT_BLOCK) -> list[T]:
    """Apply ``fn(generator, count)`` to fixed-size trial blocks.

    Block b always draws from ``rng.child(b)``, and results come back in
    block order, so the output does not depend on ``workers``.
    """
    if trials < 0:
        raise DomainError("trials must be non-negative")
    counts = [block_size] * (trials // block_size)
    if trials % block_size:
        counts.append(trials % block_size)
    jobs = [(rng.child(b), c) for b, c in enumerate(counts)]
    if workers <= 1 or len(jobs) <= 1:
        return [fn(s.generator(), c) for s, c in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: fn(job[0].generator(), job[1]), jobs))
