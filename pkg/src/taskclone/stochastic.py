"""Task-duration distributions, seeded substreams and speedup functions."""

from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass, field
from functools import lru_cache
from statistics import NormalDist
from typing import Hashable, NamedTuple, Protocol

import numpy as np

from .core import ContractViolation

_TWO_53 = float(1 << 53)


class UndefinedExpectationError(ArithmeticError):
    pass


class UniformSource(Protocol):
    def random(self) -> float: ...


class RngStreams:
    """Counter-based uniforms addressed by a seed plus an arbitrary key.

    ``uniform(seed, *key)`` is a pure function, so a draw never depends on how
    many other draws were made before it.  This is what gives common random
    numbers across policies.
    """

    def __init__(self, seed: int = 0) -> None:
        self.seed = int(seed)

    def _digest(self, key: tuple) -> int:
        msg = "/".join(map(str, (self.seed,) + key)).encode()
        return int.from_bytes(hashlib.blake2b(msg, digest_size=8).digest(), "big")

    def uniform(self, *key: Hashable) -> float:
        """A uniform draw on (0, 1]."""
        return ((self._digest(key) >> 11) + 1) / _TWO_53

    def stream(self, *key: Hashable) -> random.Random:
        """An independent ``random.Random`` for multi-draw needs (shuffles)."""
        return random.Random(self._digest(key))


def _open_unit(rng: UniformSource) -> float:
    return 1.0 - rng.random()


@dataclass(frozen=True)
class Pareto:
    alpha: float
    mu: float

    def __post_init__(self) -> None:
        if not (self.alpha > 1 and self.mu > 0):
            raise ContractViolation(f"Pareto needs alpha > 1 and mu > 0, got {self}")

    def mean(self) -> float:
        return self.alpha * self.mu / (self.alpha - 1)

    def sd(self) -> float:
        a = self.alpha
        if a <= 2:
            return math.inf
        return self.mu / (a - 1) * math.sqrt(a / (a - 2))

    def cdf(self, t: float) -> float:
        return 0.0 if t < self.mu else 1.0 - (self.mu / t) ** self.alpha

    def quantile(self, u: float) -> float:
        """Inverse survival: mu * u^(-1/alpha) for u in (0, 1]."""
        return self.mu * u ** (-1.0 / self.alpha)

    def sample(self, rng: UniformSource) -> float:
        return self.quantile(_open_unit(rng))

    def sample_many(self, gen: np.random.Generator, size) -> np.ndarray:
        u = 1.0 - gen.random(size)
        return self.mu * u ** (-1.0 / self.alpha)

    def speedup_function(self) -> "SpeedupFunction":
        return ParetoClosedForm(self.alpha)


@dataclass(frozen=True)
class Deterministic:
    value: float

    def __post_init__(self) -> None:
        if not self.value > 0:
            raise ContractViolation(f"Deterministic needs value > 0, got {self.value}")

    def mean(self) -> float:
        return self.value

    def sd(self) -> float:
        return 0.0

    def cdf(self, t: float) -> float:
        return 1.0 if t >= self.value else 0.0

    def quantile(self, u: float) -> float:
        return self.value

    def sample(self, rng: UniformSource) -> float:
        return self.value

    def sample_many(self, gen: np.random.Generator, size) -> np.ndarray:
        return np.full(size, self.value, dtype=float)

    def speedup_function(self) -> "SpeedupFunction":
        return Identityless()


@dataclass(frozen=True)
class LogNormal:
    log_mean: float
    log_sd: float

    def __post_init__(self) -> None:
        if not self.log_sd >= 0 or not math.isfinite(self.log_mean):
            raise ContractViolation(f"LogNormal needs finite log_mean and log_sd >= 0, got {self}")

    @classmethod
    def from_moments(cls, mean: float, sd: float) -> "LogNormal":
        s2 = math.log1p((sd / mean) ** 2)
        return cls(math.log(mean) - s2 / 2, math.sqrt(s2))

    def mean(self) -> float:
        return math.exp(self.log_mean + self.log_sd**2 / 2)

    def sd(self) -> float:
        s2 = self.log_sd**2
        return math.sqrt(math.expm1(s2)) * self.mean()

    def cdf(self, t: float) -> float:
        if t <= 0:
            return 0.0
        if self.log_sd == 0:
            return 1.0 if math.log(t) >= self.log_mean else 0.0
        return NormalDist(self.log_mean, self.log_sd).cdf(math.log(t))

    def quantile(self, u: float) -> float:
        """Inverse survival function at u in (0, 1]."""
        if self.log_sd == 0:
            return math.exp(self.log_mean)
        u = min(max(u, 1e-300), 1.0 - 1e-16)
        return math.exp(NormalDist(self.log_mean, self.log_sd).inv_cdf(1.0 - u))

    def sample(self, rng: UniformSource) -> float:
        return self.quantile(_open_unit(rng))

    def sample_many(self, gen: np.random.Generator, size) -> np.ndarray:
        return gen.lognormal(self.log_mean, self.log_sd, size)

    def speedup_function(self) -> "SpeedupFunction":
        return _lognormal_speedup_table(self)


DurationDistribution = Pareto | Deterministic | LogNormal


def sample_duration(dist: DurationDistribution, rng: UniformSource) -> float:
    return dist.sample(rng)


def sample_keyed(dist: DurationDistribution, streams: RngStreams, *key: Hashable) -> float:
    """One draw from ``dist`` addressed by ``key`` in ``streams``."""
    return dist.quantile(streams.uniform(*key))


class MinOfCopies(NamedTuple):
    mean: float
    stderr: float
    samples: int  # 0 when exact


def expected_min_of(
    dist: DurationDistribution, k: int, *, samples: int = 100_000, seed: int = 0
) -> MinOfCopies:
    """Expected duration of the fastest of ``k`` independent copies."""
    if k < 1 or int(k) != k:
        raise ContractViolation(f"k must be a positive integer, got {k}")
    if isinstance(dist, Pareto):
        if dist.alpha * k <= 1:
            raise UndefinedExpectationError(f"alpha*k = {dist.alpha * k} <= 1")
        ak = dist.alpha * k
        return MinOfCopies(ak * dist.mu / (ak - 1), 0.0, 0)
    if isinstance(dist, Deterministic) or k == 1:
        return MinOfCopies(dist.mean(), 0.0, 0)
    gen = np.random.default_rng(seed)
    mins = dist.sample_many(gen, (samples, k)).min(axis=1)
    return MinOfCopies(float(mins.mean()), float(mins.std(ddof=1) / math.sqrt(samples)), samples)


# -- speedup functions -------------------------------------------------------


@dataclass(frozen=True)
class ParetoClosedForm:
    alpha: float

    def __call__(self, k: int) -> float:
        return (k * self.alpha - 1) / (k * (self.alpha - 1))


@dataclass(frozen=True)
class Empirical:
    table: tuple  # ((k, factor), ...) sorted by k

    @classmethod
    def from_mapping(cls, mapping: dict) -> "Empirical":
        return cls(tuple(sorted((int(k), float(v)) for k, v in mapping.items())))

    @property
    def k_max(self) -> int:
        return self.table[-1][0]

    def __call__(self, k: int) -> float:
        for kk, v in self.table:
            if kk == k:
                return v
        if k > self.k_max:
            # flat beyond the measured range
            return self.table[-1][1]
        raise ContractViolation(f"no speedup entry for k={k}")


@dataclass(frozen=True)
class Identityless:
    def __call__(self, k: int) -> float:
        return 1.0


SpeedupFunction = ParetoClosedForm | Empirical | Identityless


def speedup(fn: SpeedupFunction, k: int) -> float:
    if k < 1 or int(k) != k:
        raise ContractViolation(f"speedup needs an integer k >= 1, got {k}")
    return fn(int(k))


@lru_cache(maxsize=256)
def _lognormal_speedup_table(dist: LogNormal, k_max: int = 32, samples: int = 20_000) -> Empirical:
    base = dist.mean()
    gen = np.random.default_rng(12345)
    draws = dist.sample_many(gen, (samples, k_max))
    running_min = np.minimum.accumulate(draws, axis=1).mean(axis=0)
    return Empirical(tuple((k + 1, float(base / m)) for k, m in enumerate(running_min)))


@dataclass
class SpeedupReport:
    k_max: int
    monotone: bool
    bounded_by_k: bool
    concave: bool
    ratio_nonincreasing: bool
    failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.monotone and self.bounded_by_k and self.concave and self.ratio_nonincreasing


def validate_speedup(fn: SpeedupFunction, k_max: int, tol: float = 1e-12) -> SpeedupReport:
    """Check the speedup axioms on 1..k_max; failures are reported, not raised."""
    if k_max < 2:
        raise ContractViolation("k_max must be >= 2")
    if isinstance(fn, Empirical):
        k_max = min(k_max, fn.k_max)
    ks = np.arange(1, k_max + 1)
    s = np.array([speedup(fn, int(k)) for k in ks])
    failures = []

    monotone = bool(np.all(np.diff(s) >= -tol))
    if not monotone:
        failures.append("monotone")
    bounded = bool(abs(s[0] - 1.0) <= tol and np.all(s <= ks + tol))
    if not bounded:
        failures.append("s(1)=1 and s(k)<=k")
    d = np.diff(s)
    concave = bool(np.all(d[1:] <= d[:-1] + tol)) if len(d) > 1 else True
    if not concave:
        failures.append("concave")
    ratio = s / ks
    # s(a)/a >= s(b)/b for every a <= b
    ratio_ok = bool(np.all(ratio <= np.minimum.accumulate(ratio) + tol))
    if not ratio_ok:
        failures.append("s(a)/a >= s(b)/b")
    return SpeedupReport(k_max, monotone, bounded, concave, ratio_ok, failures)
