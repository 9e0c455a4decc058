"""Power-shell geometry: sampling, spherical coordinates and sector quantization.

Spherical coordinates use the n-coordinate convention

    x_1 = r cos(phi_1)
    x_k = r sin(phi_1) ... sin(phi_{k-1}) cos(phi_k),   k <= n-1
    x_n = r sin(phi_1) ... sin(phi_{n-1})

with phi_1..phi_{n-2} in [0, pi] and phi_{n-1} in [0, 2 pi).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bounds import quantization_shift
from .channel import ChannelSpec
from .numerics import LOG2E, DomainError, Layer, LogLayered, RngStream

INGEST_TOL = 1e-6
_GRID_EPS = 1e-12


def sample_shell(spec: ChannelSpec, rng: RngStream | np.random.Generator, size: int | None = None):
    """Uniform draws from the sphere ||x||^2 = nP (normalised Gaussians)."""
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    shape = (spec.n,) if size is None else (int(size), spec.n)
    g = gen.standard_normal(shape)
    x = g / np.linalg.norm(g, axis=-1, keepdims=True) * spec.radius
    # second pass pulls ||x||^2 to nP at rounding level
    return x * (spec.radius / np.linalg.norm(x, axis=-1, keepdims=True))


def to_spherical(x) -> tuple[float, np.ndarray]:
    """Radius and the n-1 angles of ``x``; inverse of :func:`from_spherical`."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    if n < 2:
        raise DomainError("spherical coordinates need n >= 2")
    r = float(np.linalg.norm(x))
    if r == 0.0:
        raise DomainError("angles are undefined at the origin")
    angles = np.empty(n - 1)
    # tail[k] = ||x_{k+1..n}|| computed from the back for stability
    tail = np.sqrt(np.cumsum((x ** 2)[::-1]))[::-1]
    for k in range(n - 2):
        angles[k] = math.atan2(tail[k + 1], x[k])
    angles[n - 2] = math.atan2(x[n - 1], x[n - 2]) % (2 * math.pi)
    return r, angles


def from_spherical(radius: float, angles) -> np.ndarray:
    angles = np.asarray(angles, dtype=float)
    n = angles.size + 1
    if n < 2:
        raise DomainError("spherical coordinates need n >= 2")
    x = np.empty(n)
    s = radius
    for k in range(n - 1):
        x[k] = s * math.cos(angles[k])
        s *= math.sin(angles[k])
    x[n - 1] = s
    return x


def angles_batch(points: np.ndarray) -> np.ndarray:
    """Vectorised angles for a (m, n) array of non-zero points."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    m, n = points.shape
    tail = np.sqrt(np.cumsum((points ** 2)[:, ::-1], axis=1))[:, ::-1]
    out = np.empty((m, n - 1))
    if n > 2:
        out[:, : n - 2] = np.arctan2(tail[:, 1:n - 1], points[:, : n - 2])
    out[:, n - 2] = np.mod(np.arctan2(points[:, n - 1], points[:, n - 2]), 2 * np.pi)
    return out


@dataclass(frozen=True)
class QuantizerSpec:
    """Uniform angular grid of width ``theta`` on the shell of radius ``radius``."""

    n: int
    theta: float
    radius: float

    def __post_init__(self):
        if self.n < 2:
            raise DomainError("sector quantization needs n >= 2")
        if not 0.0 < self.theta <= math.pi:
            raise DomainError(f"theta must lie in (0, pi], got {self.theta}")
        if not self.radius > 0:
            raise DomainError("radius must be positive")

    @classmethod
    def for_channel(cls, spec: ChannelSpec, theta: float) -> "QuantizerSpec":
        return cls(spec.n, theta, spec.radius)

    @property
    def count_polar(self) -> int:
        return math.ceil(math.pi / self.theta - _GRID_EPS)

    @property
    def count_azimuthal(self) -> int:
        return math.ceil(2 * math.pi / self.theta - _GRID_EPS)

    def counts(self) -> tuple[int, ...]:
        return (self.count_polar,) * (self.n - 2) + (self.count_azimuthal,)

    def widths(self) -> np.ndarray:
        return np.array([math.pi / self.count_polar] * (self.n - 2)
                        + [2 * math.pi / self.count_azimuthal])


def sector_index(qs: QuantizerSpec, points) -> np.ndarray:
    """Sector multi-index of each point, shape (m, n-1). Edge ties go to the lower bin."""
    ang = angles_batch(points)
    idx = np.ceil(ang / qs.widths()).astype(np.int64) - 1
    return np.clip(idx, 0, np.array(qs.counts()) - 1)


def sector_midpoint(qs: QuantizerSpec, index) -> np.ndarray:
    ang = (np.asarray(index, dtype=float) + 0.5) * qs.widths()
    return from_spherical(qs.radius, ang)


def sector_count(qs: QuantizerSpec) -> LogLayered:
    """m = (pi/theta)^{n-2} (2 pi/theta) at the log layer."""
    v = (qs.n - 2) * math.log2(math.pi / qs.theta) + math.log2(2 * math.pi / qs.theta)
    return LogLayered(Layer.LOG, v)


def grid_sector_count(qs: QuantizerSpec) -> int:
    """Number of cells in the integer grid actually used for indexing."""
    return qs.count_polar ** (qs.n - 2) * qs.count_azimuthal


def sector_count_log2_exp_width(n: int) -> float:
    """log2 m with theta = e^{-n}, through the generic sector-count formula."""
    log2_ratio = math.log2(math.pi) + n * LOG2E  # log2(pi / e^{-n})
    return (n - 2) * log2_ratio + 1.0 + log2_ratio


def sector_count_log2_closed(n: int) -> float:
    """log2 of 2 pi^{n-1} / (e^{-n})^{n-1}."""
    return 1.0 + (n - 1) * math.log2(math.pi) + n * (n - 1) * LOG2E


def sector_growth_ratio(n: int, P: float = 1.0) -> float:
    """log2 log2 m_n / log2 n with theta_n = e^{-n}; tends to 2 from above.

    ``P`` is accepted for symmetry with the other shell functions; the sector
    count does not depend on the radius.
    """
    if n < 3:
        raise DomainError("sector_growth_ratio needs n >= 3")
    return math.log2(sector_count_log2_exp_width(n)) / math.log2(n)


@dataclass
class QuantizedDistribution:
    """Sector masses and representative points of a quantized input law."""

    spec: QuantizerSpec
    mass: dict[tuple[int, ...], float] = field(default_factory=dict)
    representatives: dict[tuple[int, ...], np.ndarray] = field(default_factory=dict)

    def keys(self) -> list[tuple[int, ...]]:
        return sorted(self.mass)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """(representatives, masses) stacked in sorted sector order."""
        keys = self.keys()
        reps = np.array([self.representatives[k] for k in keys])
        return reps, np.array([self.mass[k] for k in keys])

    def to_text(self) -> str:
        lines = [f"# n={self.spec.n} theta={self.spec.theta!r} radius={self.spec.radius!r}",
                 "# sector\tmass\tcoordinates..."]
        for k in self.keys():
            coords = "\t".join(format(c, ".17g") for c in self.representatives[k])
            lines.append(":".join(map(str, k)) + "\t" + format(self.mass[k], ".17g") + "\t" + coords)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "QuantizedDistribution":
        lines = text.splitlines()
        head = dict(tok.split("=", 1) for tok in lines[0].lstrip("# ").split())
        qs = QuantizerSpec(int(head["n"]), float(head["theta"]), float(head["radius"]))
        out = cls(qs)
        for line in lines[1:]:
            if not line or line.startswith("#"):
                continue
            cols = line.split("\t")
            key = tuple(int(t) for t in cols[0].split(":"))
            out.mass[key] = float(cols[1])
            out.representatives[key] = np.array([float(t) for t in cols[2:]])
        return out


def _check_points(qs: QuantizerSpec, points) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != qs.n:
        raise DomainError(f"points must have dimension {qs.n}")
    r2 = np.sum(pts ** 2, axis=1)
    bad = np.abs(r2 - qs.radius ** 2) > INGEST_TOL * max(1.0, qs.radius ** 2)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise DomainError(f"sample {i} is off the shell: ||x||^2={r2[i]!r}, expected {qs.radius ** 2!r}")
    return pts


def quantize_distribution(samples, qs: QuantizerSpec, weights=None) -> QuantizedDistribution:
    """Move the mass of each sector onto its representative point.

    Weights are normalised to total mass 1. A sector whose atoms are all the
    same point keeps that point as representative; otherwise the angular
    midpoint of the sector is used.
    """
    pts = _check_points(qs, samples)
    w = np.ones(len(pts)) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (len(pts),) or np.any(w < 0) or not w.sum() > 0:
        raise DomainError("weights must be non-negative, one per sample, with positive total")
    w = w / w.sum()
    idx = sector_index(qs, pts)
    keys, inverse = np.unique(idx, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    masses = np.bincount(inverse, weights=w, minlength=len(keys))
    out = QuantizedDistribution(qs)
    for s, key in enumerate(map(tuple, keys.tolist())):
        members = pts[inverse == s]
        out.mass[key] = float(masses[s])
        if np.all(members == members[0]):
            out.representatives[key] = members[0].copy()
        else:
            out.representatives[key] = sector_midpoint(qs, key)
    return out


def gaussian_kl(x, u) -> float:
    """D(N(x, I) || N(u, I)) = ||x - u||^2 / 2 in nats."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape != u.shape:
        raise DomainError(f"dimension mismatch: {x.shape} vs {u.shape}")
    d = x - u
    return 0.5 * float(d @ d)


def gaussian_kl_scaled(x, u) -> float:
    """The looser n ||x - u||^2 / 2 form, kept for comparison reports."""
    x = np.asarray(x, dtype=float)
    return x.size * gaussian_kl(x, u)


def pinsker_tv_bound(kl_nats: float) -> float:
    """Pinsker bound on the L1 distance (range [0, 2]): min(2, sqrt(2 KL))."""
    if kl_nats < 0:
        raise DomainError(f"KL divergence must be non-negative, got {kl_nats}")
    return min(2.0, math.sqrt(2.0 * kl_nats))


@dataclass(frozen=True)
class QuantizationTvReport:
    empirical: object          # resolvability.TvEstimate
    bound: float               # sum_l Qbar(u_l) max_{x in sector l} sqrt(2 D(x, u_l))
    bound_scaled_kl: float     # same chain with n ||x - u||^2 / 2
    closed_form: float         # sqrt(P) n^{3/2} e^{-n}
    sectors: int

    def to_dict(self) -> dict:
        return {"empirical": self.empirical.to_dict(), "bound": self.bound,
                "bound_scaled_kl": self.bound_scaled_kl, "closed_form": self.closed_form,
                "sectors": self.sectors}


def quantization_tv_report(samples, qs: QuantizerSpec, spec: ChannelSpec, trials: int,
                           rng: RngStream, weights=None, workers: int = 1) -> QuantizationTvReport:
    """Monte Carlo d(QW, Qbar W) next to its Pinsker-chain upper bound."""
    from .resolvability import mixture_log_density, tv_estimate

    if qs.n != spec.n:
        raise DomainError("quantizer and channel dimensions differ")
    pts = _check_points(qs, samples)
    w = np.ones(len(pts)) if weights is None else np.asarray(weights, dtype=float)
    w = w / w.sum()
    qd = quantize_distribution(pts, qs, w)

    idx = sector_index(qs, pts)
    # Qbar as a per-atom mixture (atom -> its representative, same weight):
    # the same measure as sum_l Qbar(u_l) W(.|u_l), and bitwise equal to the
    # Q mixture when every atom is its own representative.
    moved = np.array([qd.representatives[k] for k in map(tuple, idx.tolist())])
    worst = {}
    worst_scaled = {}
    for x, key in zip(pts, map(tuple, idx.tolist())):
        u = qd.representatives[key]
        worst[key] = max(worst.get(key, 0.0), pinsker_tv_bound(gaussian_kl(x, u)))
        worst_scaled[key] = max(worst_scaled.get(key, 0.0), pinsker_tv_bound(gaussian_kl_scaled(x, u)))
    bound = min(2.0, sum(qd.mass[k] * worst[k] for k in qd.mass))
    bound_scaled = min(2.0, sum(qd.mass[k] * worst_scaled[k] for k in qd.mass))

    def log_p(y):
        return mixture_log_density(spec, pts, y, w)

    def log_q(y):
        return mixture_log_density(spec, moved, y, w)

    def sampler(gen, count):
        pick = gen.choice(len(pts), size=count, p=w)
        return pts[pick] + gen.standard_normal((count, spec.n))

    est = tv_estimate(log_p, log_q, sampler, trials, rng, workers=workers)
    return QuantizationTvReport(est, bound, bound_scaled, quantization_shift(spec.n, spec.power),
                                len(qd.mass))
