"""Randomized identification codes over AWGN with threshold decoding.

Message i is encoded by a uniform draw from its codeword set. Receiver i
accepts y iff some codeword c of message i has i(c; y) > log2 K; this union
of threshold events is the decoder used throughout.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import beta

from .channel import SHELL_TOL, ChannelSpec
from .numerics import LOG2E, DomainError, RngStream, run_blocks
from .shellquant import sample_shell

INDEPENDENT = "independent_pools"
SHARED = "shared_pool_subsets"
_FORMAT = "ridawgn-idcode v1"


class ConstructionError(DomainError):
    pass


class BudgetExceeded(DomainError):
    def __init__(self, required: int, budget: int):
        super().__init__(f"Monte Carlo budget exceeded: N(N-1)*trials = {required} > budget {budget}")
        self.required = required
        self.budget = budget


@dataclass
class IdCode:
    spec: ChannelSpec
    log2_K: float
    construction: str
    codebooks: list[np.ndarray]
    pool: np.ndarray | None = None
    subsets: np.ndarray | None = None
    seed: int | None = None
    validate: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        if self.construction not in (INDEPENDENT, SHARED):
            raise ConstructionError(f"unknown construction {self.construction!r}")
        self.log2_K = float(self.log2_K)
        self.codebooks = [np.ascontiguousarray(np.atleast_2d(np.asarray(c, dtype=float)))
                          for c in self.codebooks]
        if not self.validate:
            return
        if len(self.codebooks) < 2:
            raise ConstructionError("an identification code needs N >= 2 messages")
        target = self.spec.n * self.spec.power
        for i, c in enumerate(self.codebooks):
            if c.shape[1] != self.spec.n:
                raise ConstructionError(f"codebook {i} has dimension {c.shape[1]}, expected {self.spec.n}")
            if np.any(np.abs(np.sum(c * c, axis=1) - target) > SHELL_TOL * max(1.0, target)):
                raise ConstructionError(f"codebook {i} leaves the power shell")
        if self.construction == SHARED:
            if self.subsets is None or self.pool is None:
                raise ConstructionError("shared-pool codes need pool and subsets")
            keys = {tuple(sorted(s)) for s in np.asarray(self.subsets).tolist()}
            if len(keys) != len(self.subsets) or len({len(s) for s in self.subsets}) != 1:
                raise ConstructionError("subsets must be distinct and of equal size")

    @property
    def N(self) -> int:
        return len(self.codebooks)

    @property
    def per_message_codewords(self) -> int:
        return max(len(c) for c in self.codebooks)

    def to_text(self) -> str:
        fmt = lambda v: format(float(v), ".17g")  # noqa: E731
        T = None if self.subsets is None else np.asarray(self.subsets).shape[1]
        M = len(self.pool) if self.construction == SHARED else self.per_message_codewords
        head = [f"# {_FORMAT}", f"n={self.spec.n}", f"power={fmt(self.spec.power)}", f"N={self.N}",
                f"M={M}", f"T={T}", f"log2_K={fmt(self.log2_K)}",
                f"construction={self.construction}", f"seed={self.seed}"]
        body = []
        if self.construction == SHARED:
            body.append("pool:")
            body += ["\t".join(map(fmt, row)) for row in self.pool]
            body.append("subsets:")
            body += ["\t".join(map(str, s)) for s in np.asarray(self.subsets).tolist()]
        else:
            body.append("codewords:")
            for i, cb in enumerate(self.codebooks):
                body += [f"{i}\t" + "\t".join(map(fmt, row)) for row in cb]
        return "\n".join(head + body) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "IdCode":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if lines[0] != f"# {_FORMAT}":
            raise DomainError("not a serialized identification code")
        head = {}
        pos = 1
        while "=" in lines[pos]:
            k, v = lines[pos].split("=", 1)
            head[k] = v
            pos += 1
        spec = ChannelSpec(int(head["n"]), float(head["power"]))
        seed = None if head["seed"] == "None" else int(head["seed"])
        N = int(head["N"])
        if head["construction"] == SHARED:
            sub_at = lines.index("subsets:")
            pool = np.array([[float(t) for t in ln.split("\t")] for ln in lines[pos + 1:sub_at]])
            subsets = np.array([[int(t) for t in ln.split("\t")] for ln in lines[sub_at + 1:]])
            return cls(spec, float(head["log2_K"]), SHARED, [pool[s] for s in subsets],
                       pool=pool, subsets=subsets, seed=seed)
        books: list[list[list[float]]] = [[] for _ in range(N)]
        for ln in lines[pos + 1:]:
            cols = ln.split("\t")
            books[int(cols[0])].append([float(t) for t in cols[1:]])
        return cls(spec, float(head["log2_K"]), INDEPENDENT, [np.array(b) for b in books], seed=seed)


def _random_subsets(gen: np.random.Generator, M: int, T: int, N: int) -> np.ndarray:
    total = math.comb(M, T)
    if N > total:
        raise ConstructionError(f"N={N} exceeds the {total} distinct size-{T} subsets of a pool of {M}")
    if total <= 1_000_000 and 2 * N > total:
        combos = list(itertools.combinations(range(M), T))
        pick = gen.choice(total, size=N, replace=False)
        return np.array([combos[k] for k in pick], dtype=np.int64)
    seen: set[tuple[int, ...]] = set()
    out = []
    while len(out) < N:
        s = tuple(sorted(gen.choice(M, size=T, replace=False).tolist()))
        if s not in seen:
            seen.add(s)
            out.append(s)
    return np.array(out, dtype=np.int64)


def build_id_code(spec: ChannelSpec, N: int, M_msg: int, log2_K: float,
                  construction: str = INDEPENDENT, T: int | None = None,
                  rng: RngStream | None = None) -> IdCode:
    """Random identification code with codewords uniform on the power shell.

    ``independent_pools``: each message gets ``M_msg`` fresh codewords.
    ``shared_pool_subsets``: one pool of ``M_msg`` codewords; each message
    owns a distinct random subset of size ``T``.
    """
    rng = rng if rng is not None else RngStream(0)
    if N < 2:
        raise ConstructionError("an identification code needs N >= 2 messages")
    gen = rng.generator()
    if construction == INDEPENDENT:
        if M_msg < 1:
            raise ConstructionError("each message needs at least one codeword")
        words = sample_shell(spec, gen, N * M_msg).reshape(N, M_msg, spec.n)
        return IdCode(spec, log2_K, INDEPENDENT, list(words), seed=rng.seed)
    if construction == SHARED:
        if T is None or not 1 <= T <= M_msg:
            raise ConstructionError(f"shared pool needs 1 <= T <= M, got T={T}, M={M_msg}")
        pool = sample_shell(spec, gen, M_msg)
        subsets = _random_subsets(gen, M_msg, T, N)
        return IdCode(spec, log2_K, SHARED, [pool[s] for s in subsets], pool=pool,
                      subsets=subsets, seed=rng.seed)
    raise ConstructionError(f"unknown construction {construction!r}")


def max_info_density(code: IdCode, i: int, y) -> np.ndarray:
    """max over message i's codewords of i(c; y), for each row of ``y``."""
    spec = code.spec
    c = code.codebooks[i]
    rows = np.atleast_2d(np.asarray(y, dtype=float))
    s = 1.0 + spec.power
    r2 = np.sum(rows * rows, axis=1)
    # ||y - c||^2 = r2 + min_c (||c||^2 - 2 <y, c>)
    d2 = r2 + np.min(np.sum(c * c, axis=1)[None, :] - 2.0 * rows @ c.T, axis=1)
    return 0.5 * spec.n * math.log2(s) + 0.5 * LOG2E * (r2 / s - d2)


def _check_message(code: IdCode, i: int):
    if not 0 <= i < code.N:
        raise DomainError(f"message index {i} out of range 0..{code.N - 1}")


def identify(code: IdCode, i: int, y):
    """Receiver i's decision: does some codeword of i clear the threshold?"""
    _check_message(code, i)
    y_arr = np.asarray(y, dtype=float)
    if y_arr.shape[-1] != code.spec.n:
        raise DomainError(f"y must have trailing dimension {code.spec.n}")
    if code.log2_K == -math.inf:
        acc = np.ones(len(np.atleast_2d(y_arr)), dtype=bool)
    elif code.log2_K == math.inf:
        acc = np.zeros(len(np.atleast_2d(y_arr)), dtype=bool)
    else:
        acc = max_info_density(code, i, y_arr) > code.log2_K
    return bool(acc[0]) if y_arr.ndim == 1 else acc


@dataclass(frozen=True)
class ErrorEstimate:
    value: float
    ci_low: float
    ci_high: float
    trials: int
    count: int | None = None

    def to_dict(self) -> dict:
        return {"value": self.value, "ci_low": self.ci_low, "ci_high": self.ci_high,
                "trials": self.trials, "count": self.count}


def clopper_pearson(k: int, m: int, confidence: float = 0.95) -> tuple[float, float]:
    a = 1.0 - confidence
    lo = 0.0 if k == 0 else float(beta.ppf(a / 2, k, m - k + 1))
    hi = 1.0 if k == m else float(beta.ppf(1 - a / 2, k + 1, m - k))
    return lo, hi


def _exact(value: float, trials: int) -> ErrorEstimate:
    return ErrorEstimate(value, value, value, trials, int(round(value * trials)))


def _count_acceptances(code: IdCode, sender: int, receiver: int, trials: int, rng: RngStream,
                       workers: int) -> int:
    book = code.codebooks[sender]
    n = code.spec.n

    def block(gen, count):
        pick = gen.integers(len(book), size=count)
        y = book[pick] + gen.standard_normal((count, n))
        return int(np.count_nonzero(identify(code, receiver, y)))

    return sum(run_blocks(block, trials, rng, workers=workers))


def estimate_type1(code: IdCode, i: int, trials: int, rng: RngStream, confidence: float = 0.95,
                   workers: int = 1) -> ErrorEstimate:
    """Missed-detection rate of message i: Pr(receiver i rejects | i sent)."""
    _check_message(code, i)
    if trials < 100:
        raise DomainError(f"estimate_type1 needs at least 100 trials, got {trials}")
    if code.log2_K == -math.inf:
        return _exact(0.0, trials)
    if code.log2_K == math.inf:
        return _exact(1.0, trials)
    k = trials - _count_acceptances(code, i, i, trials, rng, workers)
    return ErrorEstimate(k / trials, *clopper_pearson(k, trials, confidence), trials, k)


def estimate_type2(code: IdCode, i: int, j: int, trials: int, rng: RngStream,
                   confidence: float = 0.95, workers: int = 1) -> ErrorEstimate:
    """False-activation rate: Pr(receiver j accepts | i sent), i != j."""
    _check_message(code, i)
    _check_message(code, j)
    if i == j:
        raise DomainError("type-II error needs distinct messages i != j")
    if trials < 100:
        raise DomainError(f"estimate_type2 needs at least 100 trials, got {trials}")
    if code.log2_K == math.inf:
        return _exact(0.0, trials)
    if code.log2_K == -math.inf:
        return _exact(1.0, trials)
    k = _count_acceptances(code, i, j, trials, rng, workers)
    return ErrorEstimate(k / trials, *clopper_pearson(k, trials, confidence), trials, k)


@dataclass
class ErrorProfile:
    max_type1: ErrorEstimate
    max_type2: ErrorEstimate
    per_pair: list[dict]
    eps: float | None = None
    delta: float | None = None
    certified: bool | None = None

    def to_dict(self) -> dict:
        return {"max_type1": self.max_type1.to_dict(), "max_type2": self.max_type2.to_dict(),
                "eps": self.eps, "delta": self.delta, "certified": self.certified,
                "per_pair": self.per_pair}


DEFAULT_BUDGET = 10 ** 9


def code_error_profile(code: IdCode, trials_per_pair: int, rng: RngStream, eps: float | None = None,
                       delta: float | None = None, confidence: float = 0.95,
                       budget: int = DEFAULT_BUDGET, workers: int = 1) -> ErrorProfile:
    """Exhaustive max of type-I over messages and type-II over ordered pairs.

    The code certifies (eps, delta) when the upper confidence limits of both
    maxima fall at or below the targets. Pairs use independent streams, so
    (i, j) and (j, i) differ numerically even for exchangeable codes.
    """
    N = code.N
    required = N * (N - 1) * trials_per_pair
    if required > budget:
        raise BudgetExceeded(required, budget)
    rows = []
    t1 = []
    for i in range(N):
        e = estimate_type1(code, i, trials_per_pair, rng.child(0, i), confidence, workers)
        t1.append(e)
        rows.append({"kind": "type1", "i": i, "j": i, **e.to_dict()})
    t2 = []
    for i in range(N):
        for j in range(N):
            if i == j:
                continue
            e = estimate_type2(code, i, j, trials_per_pair, rng.child(1, i, j), confidence, workers)
            t2.append(e)
            rows.append({"kind": "type2", "i": i, "j": j, **e.to_dict()})
    worst1 = max(t1, key=lambda e: (e.value, e.ci_high))
    worst2 = max(t2, key=lambda e: (e.value, e.ci_high))
    certified = None
    if eps is not None and delta is not None:
        certified = (max(e.ci_high for e in t1) <= eps) and (max(e.ci_high for e in t2) <= delta)
    return ErrorProfile(worst1, worst2, rows, eps, delta, certified)
