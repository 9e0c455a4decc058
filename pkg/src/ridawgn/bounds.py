"""Capacity, dispersion and the second-order bounds on identification code size.

All rates are in bits. Code sizes of identification codes grow doubly
exponentially, so they are carried as :class:`~ridawgn.numerics.LogLayered`
values and compared at the log2 log2 layer.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import TYPE_CHECKING

from .numerics import (LOG2E, DomainError, Layer, LogLayered, q_function, q_inverse)

if TYPE_CHECKING:
    from .channel import ChannelSpec

RESIDUAL = "O(log n)"


def capacity(P: float) -> float:
    """C(P) = 1/2 log2(1 + P)."""
    if not P >= 0:
        raise DomainError(f"power must be non-negative, got {P}")
    return 0.5 * math.log2(1.0 + P)


def dispersion(P: float) -> float:
    """V(P) = (log2 e)^2 P (P + 2) / (2 (P + 1)^2), in bits^2."""
    if not P >= 0:
        raise DomainError(f"power must be non-negative, got {P}")
    return LOG2E ** 2 * P * (P + 2.0) / (2.0 * (P + 1.0) ** 2)


@dataclass(frozen=True)
class SecondOrderEstimate:
    """Normal approximation nC - sqrt(nV) Q^{-1}(eps); the O(log n) residual is not folded in."""

    loglog_N: float
    first_term: float
    second_term: float
    residual_model: str = RESIDUAL

    def to_dict(self) -> dict:
        return asdict(self)


def _check_eps(eps: float, name: str = "eps") -> float:
    eps = float(eps)
    if not 0.0 < eps < 1.0:
        raise DomainError(f"{name} must lie in (0, 1), got {eps}")
    return eps


def _normal_terms(spec: ChannelSpec, eps: float) -> tuple[float, float]:
    eps = _check_eps(eps)
    first = spec.n * capacity(spec.power)
    second = -math.sqrt(spec.n * dispersion(spec.power)) * q_inverse(eps)
    return first, second


def id_second_order(spec: ChannelSpec, eps: float) -> SecondOrderEstimate:
    """log2 log2 N*(eps, delta -> 0) up to the O(log n) term."""
    first, second = _normal_terms(spec, eps)
    return SecondOrderEstimate(first + second, first, second)


def transmission_second_order(spec: ChannelSpec, eps: float) -> LogLayered:
    """log2 M*_T(eps) up to O(log n); same arithmetic one exponential lower."""
    first, second = _normal_terms(spec, eps)
    return LogLayered(Layer.LOG, first + second)


# ---------------------------------------------------------------------------
# achievability planner
# ---------------------------------------------------------------------------

def pool_code_size(M: int | LogLayered, tau: float) -> LogLayered:
    """N = floor(e^{tau M} / (M e)) as a layered magnitude.

    The floor is applied only while N fits in a double's 53-bit mantissa;
    beyond that it is below floating-point resolution. ``M`` may be an int
    or a LogLayered at the log layer when it is too large for a float.
    """
    if not 0 < tau:
        raise DomainError(f"tau must be positive, got {tau}")
    if isinstance(M, LogLayered):
        log2_M = M.at(Layer.LOG)
        if log2_M < 1000:
            return pool_code_size(math.ceil(2.0 ** log2_M), tau)
        # log2 of (tau M log2 e), the leading term of log2 N.
        a = log2_M + math.log2(tau) + math.log2(LOG2E)
        corr = (log2_M + LOG2E) / 2.0 ** a if a < 1000 else 0.0
        return LogLayered(Layer.LOGLOG, a + math.log2(1.0 - corr))
    if int(M) != M or M < 1:
        raise DomainError(f"M must be a positive integer, got {M}")
    M = int(M)
    ln_N = tau * M - math.log(M) - 1.0
    if ln_N < 53 * math.log(2):
        return LogLayered(Layer.LINEAR, float(math.floor(math.exp(ln_N))))
    return LogLayered(Layer.LOG, ln_N * LOG2E)


@dataclass
class AchievabilityPlan:
    """Parameters and bounds of the randomized ID code from the pool-counting construction.

    ``delta_bound`` is the closed form (1 + log2 2)/log2 n + 2/(n + 2) certified
    by the parameter choices; ``delta_bound_exact`` is zeta + c'd' ceil(M/f)/K
    for the actual K and M, which never exceeds it once K >= (n+2)^4.
    """

    n: int
    c: float
    c_prime: float
    d: float
    d_prime: float
    tau: float
    zeta: float
    f: float
    eps: float
    berry_esseen_B: float
    kappa: float | None = None
    log2_K: float | None = None
    M: int | LogLayered | None = None
    log2_N: LogLayered | None = None
    pr_proxy: float | None = None
    eps_bound: float | None = None
    delta_bound: float = math.nan
    delta_bound_exact: float | None = None
    feasibility_lhs: float | None = None
    constraints: dict[str, bool] = field(default_factory=dict)
    violations: list[str] = field(default_factory=list)
    feasible: bool = False

    @property
    def loglog_N(self) -> float | None:
        if self.log2_N is None:
            return None
        try:
            return self.log2_N.at(Layer.LOGLOG)
        except DomainError:
            return None

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k not in ("M", "log2_N")}
        if isinstance(self.M, LogLayered):
            d["M"] = self.M.to_dict()
        else:
            d["M"] = self.M
        d["log2_N"] = None if self.log2_N is None else self.log2_N.to_dict()
        d["loglog_N"] = self.loglog_N
        return d


def proof_parameters(n: int) -> dict[str, float]:
    """The parameter choices c=d=1+2/n, c'=d'=n+2, tau=1/(n+2), zeta=(1+log 2)/log n.

    Logs are base 2, so zeta = 2/log2(n).
    """
    n = int(n)
    if n < 2:
        raise DomainError("the proof parameters need n >= 2 (zeta divides by log n)")
    c = d = 1.0 + 2.0 / n
    cp = dp = n + 2.0
    return {"c": c, "d": d, "c_prime": cp, "d_prime": dp, "tau": 1.0 / (n + 2.0),
            "zeta": (1.0 + math.log2(2.0)) / math.log2(n), "f": 1.0 - 1.0 / d - 1.0 / dp}


def standing_constraints(c: float, c_prime: float, d: float, d_prime: float, tau: float,
                       zeta: float) -> dict[str, bool]:
    """Evaluate each standing assumption of the pool-counting achievability bound."""
    f = 1.0 - 1.0 / d - 1.0 / d_prime
    growth = zeta * math.log2(1.0 / tau - 1.0) if 0 < tau < 1 else -math.inf
    return {
        "zeta*log(1/tau-1) > log2+1": growth > math.log2(2.0) + 1.0,
        "0 < tau < 1/3": 0.0 < tau < 1.0 / 3.0,
        "0 < zeta < 1": 0.0 < zeta < 1.0,
        "1/c + 1/c' < 1": 1.0 / c + 1.0 / c_prime < 1.0,
        "f = 1 - 1/d - 1/d' > 0": f > 0.0,
    }


def type2_bound_proxy(n: int, log2_K: float, M: int) -> float:
    """c'd' ceil(M/f) / K under the proof's parameters, i.e. (n+2)^2 ceil(M (n+2)) / K."""
    p = proof_parameters(n)
    ceil_term = math.ceil(M / p["f"] - 1e-9)
    return 2.0 ** (math.log2(p["c_prime"] * p["d_prime"]) + math.log2(ceil_term) - log2_K)


def plan_achievability(spec: ChannelSpec, eps: float, berry_esseen_B: float = 1.0) -> AchievabilityPlan:
    """Instantiate the pool-counting bound with the standard parameters at blocklength ``spec.n``.

    Pr(i <= log K) is replaced by its normal proxy Q(kappa) + B/sqrt(n), with
    kappa = Q^{-1}((1 + 2/n)^{-2} eps - B/sqrt(n)). Infeasible settings come
    back with ``feasible=False`` and the violated conditions listed.
    """
    eps = _check_eps(eps)
    if berry_esseen_B < 0:
        raise DomainError("berry_esseen_B must be non-negative")
    n = spec.n
    p = proof_parameters(n)
    plan = AchievabilityPlan(n=n, c=p["c"], c_prime=p["c_prime"], d=p["d"], d_prime=p["d_prime"],
                             tau=p["tau"], zeta=p["zeta"], f=p["f"], eps=eps,
                             berry_esseen_B=float(berry_esseen_B))
    plan.delta_bound = (1.0 + math.log2(2.0)) / math.log2(n) + 2.0 / (n + 2.0)
    plan.constraints = standing_constraints(plan.c, plan.c_prime, plan.d, plan.d_prime, plan.tau, plan.zeta)
    plan.violations = [k for k, ok in plan.constraints.items() if not ok]

    slack = berry_esseen_B / math.sqrt(n)
    target = eps / (1.0 + 2.0 / n) ** 2 - slack
    if not 0.0 < target < 1.0:
        plan.violations.append(f"kappa argument (1+2/n)^-2 eps - B/sqrt(n) = {target!r} not in (0,1)")
        return plan
    plan.kappa = q_inverse(target)
    plan.log2_K = n * capacity(spec.power) - plan.kappa * math.sqrt(n * dispersion(spec.power))
    plan.pr_proxy = q_function(plan.kappa) + slack
    plan.eps_bound = plan.c * plan.d * plan.pr_proxy

    log2_M = plan.log2_K - 4.0 * math.log2(n + 2.0)
    if log2_M <= 50:
        plan.M = max(1, math.ceil(2.0 ** log2_M))
        log2_M = math.log2(plan.M)
        # M/f = M (n+2) is an integer, so the ceiling is exact here.
        log2_ceil = log2_M + math.log2(n + 2.0)
    else:
        plan.M = LogLayered(Layer.LOG, log2_M)
        log2_ceil = log2_M + math.log2(n + 2.0)
    type2 = 2.0 ** (math.log2(plan.c_prime * plan.d_prime) + log2_ceil - plan.log2_K)
    plan.delta_bound_exact = plan.zeta + type2
    plan.feasibility_lhs = plan.c * plan.d * plan.pr_proxy + type2
    if not plan.feasibility_lhs < 1.0:
        plan.violations.append(f"cd Pr + c'd' ceil(M/f)/K = {plan.feasibility_lhs!r} is not < 1")

    plan.log2_N = pool_code_size(plan.M, plan.tau)
    if plan.log2_N.layer is Layer.LINEAR and plan.log2_N.value < 2:
        plan.violations.append(f"N = {plan.log2_N.value:g} < 2 messages")
    plan.feasible = not plan.violations
    return plan


# ---------------------------------------------------------------------------
# converse
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConverseChain:
    """Intermediate quantities of the resolvability-based converse."""

    n: int
    eps: float
    delta: float
    shift: float           # sqrt(P) n^{3/2} e^{-n}, the quantization TV slack
    xi: float              # 1 - eps - delta - shift
    resolvability_term: float   # nC + sqrt(nV) Q^{-1}(xi)
    limit_term: float      # nC + sqrt(nV) Q^{-1}(1 - eps - shift), delta -> 0
    value: float           # nC - sqrt(nV) Q^{-1}(eps + shift)
    taylor_value: float    # nC - sqrt(nV) Q^{-1}(eps)
    residual_model: str = RESIDUAL

    def to_dict(self) -> dict:
        return asdict(self)


def quantization_shift(n: int, P: float) -> float:
    """sqrt(P) n^{3/2} e^{-n}, evaluated in log domain."""
    return math.exp(0.5 * math.log(P) + 1.5 * math.log(n) - n)


def converse_bound(spec: ChannelSpec, eps: float, delta: float) -> ConverseChain:
    """Upper bound on log2 log2 N* via ID-to-resolvability, up to O(log n)."""
    eps = _check_eps(eps)
    delta = _check_eps(delta, "delta")
    n, P = spec.n, spec.power
    shift = quantization_shift(n, P)
    xi = 1.0 - eps - delta - shift
    if not xi > 0.0:
        raise DomainError(
            f"need eps + delta + sqrt(P) n^1.5 e^-n < 1 (xi = 1 - eps - delta - shift = {xi!r})")
    first = n * capacity(P)
    root = math.sqrt(n * dispersion(P))
    return ConverseChain(
        n=n, eps=eps, delta=delta, shift=shift, xi=xi,
        resolvability_term=first + root * q_inverse(xi),
        limit_term=first + root * q_inverse(1.0 - eps - shift),
        value=first - root * q_inverse(eps + shift),
        taylor_value=first - root * q_inverse(eps),
    )


# ---------------------------------------------------------------------------
# sandwich table
# ---------------------------------------------------------------------------

def sandwich_report(ns, P: float, eps: float, berry_esseen_B: float = 1.0,
                    delta: float = 1e-12) -> list[dict]:
    """Achievability / normal approximation / converse, one row per blocklength.

    The achievability column is log2 log2 N from the planner, so all three
    columns share the loglog scale. Row failures are recorded in ``error``.
    """
    from .channel import ChannelSpec

    rows = []
    for n in ns:
        row = {"n": int(n), "achievability": None, "approximation": None, "converse": None,
               "gap_lower": None, "gap_upper": None, "gap_lower_per_log2n": None,
               "gap_upper_per_log2n": None, "error": None}
        try:
            spec = ChannelSpec(int(n), P)
            approx = id_second_order(spec, eps).loglog_N
            row["approximation"] = approx
            row["converse"] = converse_bound(spec, eps, delta).value
            row["gap_upper"] = row["converse"] - approx
            row["gap_upper_per_log2n"] = row["gap_upper"] / math.log2(n)
            plan = plan_achievability(spec, eps, berry_esseen_B)
            if not plan.feasible:
                raise DomainError("plan infeasible: " + "; ".join(plan.violations))
            row["achievability"] = plan.loglog_N
            row["gap_lower"] = approx - row["achievability"]
            row["gap_lower_per_log2n"] = row["gap_lower"] / math.log2(n)
        except (DomainError, OverflowError) as exc:
            row["error"] = str(exc)
        rows.append(row)
    return rows
