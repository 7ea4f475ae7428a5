"""Shared data containers, errors and the seeded random-stream contract."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np


class PredcalError(Exception):
    """Base class for every error raised by predcal."""


class ValidationError(PredcalError, ValueError):
    """Input data or settings violate a documented precondition."""


class ParameterRangeError(ValidationError):
    """A distribution parameter lies outside its open admissible range."""


class FitError(PredcalError):
    """A model could not be fitted to the supplied data."""


class ConvergenceError(FitError):
    """An optimizer ran out of budget. ``best`` carries the last iterate."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class Alternative(str, enum.Enum):
    BOTH = "both"
    LOWER = "lower"
    UPPER = "upper"

    @classmethod
    def parse(cls, value) -> "Alternative":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValidationError(
                f"alternative must be one of both/lower/upper, got {value!r}"
            ) from None


def _as_int_array(values, name):
    arr = np.asarray(values)
    if arr.ndim != 1:
        raise ValidationError(f"{name} must be one-dimensional")
    if arr.size and not np.all(np.isfinite(arr.astype(float))):
        raise ValidationError(f"{name} contains missing or non-finite values")
    if arr.size and not np.all(arr == np.round(arr)):
        raise ValidationError(f"{name} must contain integers")
    arr = arr.astype(np.int64)
    if np.any(arr < 0):
        raise ValidationError(f"{name} must be nonnegative")
    return arr


@dataclass(frozen=True)
class ClusteredBinomial:
    """Successes and failures observed in ``H >= 2`` clusters."""

    successes: np.ndarray
    failures: np.ndarray

    def __post_init__(self):
        succ = _as_int_array(self.successes, "successes")
        fail = _as_int_array(self.failures, "failures")
        if succ.shape != fail.shape:
            raise ValidationError("successes and failures differ in length")
        if succ.size < 2:
            raise ValidationError("at least 2 clusters are required")
        if np.any(succ + fail < 1):
            raise ValidationError("every cluster needs size >= 1")
        succ.flags.writeable = False
        fail.flags.writeable = False
        object.__setattr__(self, "successes", succ)
        object.__setattr__(self, "failures", fail)

    @classmethod
    def from_sizes(cls, successes, sizes) -> "ClusteredBinomial":
        succ = _as_int_array(successes, "successes")
        size = _as_int_array(sizes, "sizes")
        if np.any(succ > size):
            raise ValidationError("successes exceed cluster size")
        return cls(succ, size - succ)

    @property
    def sizes(self) -> np.ndarray:
        return self.successes + self.failures

    @property
    def N(self) -> int:
        return int(self.sizes.sum())

    @property
    def H(self) -> int:
        return int(self.successes.size)


@dataclass(frozen=True)
class ClusteredCounts:
    """One count per cluster, ``H >= 2`` clusters."""

    counts: np.ndarray

    def __post_init__(self):
        y = _as_int_array(self.counts, "counts")
        if y.size < 2:
            raise ValidationError("at least 2 clusters are required")
        y.flags.writeable = False
        object.__setattr__(self, "counts", y)

    @property
    def H(self) -> int:
        return int(self.counts.size)


@dataclass(frozen=True)
class MixedModelData:
    """Gaussian response plus one categorical column per random factor."""

    response: np.ndarray
    factors: Mapping[str, tuple]

    def __post_init__(self):
        y = np.asarray(self.response, dtype=float)
        if y.ndim != 1 or y.size < 1:
            raise ValidationError("response must be a non-empty vector")
        if not np.all(np.isfinite(y)):
            raise ValidationError("response contains missing or non-finite values")
        cols = {}
        for name, col in self.factors.items():
            col = tuple(col)
            if len(col) != y.size:
                raise ValidationError(
                    f"factor {name!r} has {len(col)} entries, expected {y.size}"
                )
            for v in col:
                if v is None or (isinstance(v, float) and np.isnan(v)) or v == "":
                    raise ValidationError(f"factor {name!r} contains missing values")
            cols[name] = tuple(str(v) for v in col)
        y.flags.writeable = False
        object.__setattr__(self, "response", y)
        object.__setattr__(self, "factors", cols)

    @property
    def N(self) -> int:
        return int(self.response.size)

    @classmethod
    def from_frame(cls, frame, response: str) -> "MixedModelData":
        if response not in frame.columns:
            raise ValidationError(f"response column {response!r} not found")
        if frame.isna().any().any():
            raise ValidationError("data frame contains missing values")
        factors = {c: tuple(frame[c]) for c in frame.columns if c != response}
        return cls(frame[response].to_numpy(dtype=float), factors)


@dataclass(frozen=True)
class CalibrationSettings:
    """Knobs of the bootstrap calibration; defaults give a 95% two-sided interval."""

    alpha: float = 0.05
    nboot: int = 10000
    delta_min: float = 0.01
    delta_max: float = 10.0
    tolerance: float = 0.003
    max_bisection_steps: int = 30
    alternative: Alternative = Alternative.BOTH
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "alternative", Alternative.parse(self.alternative))
        if not 0 < self.alpha < 1:
            raise ValidationError(f"alpha must lie in (0, 1), got {self.alpha}")
        if int(self.nboot) != self.nboot or self.nboot < 1:
            raise ValidationError(f"nboot must be a positive integer, got {self.nboot}")
        if not 0 < self.delta_min < self.delta_max:
            raise ValidationError(
                "need 0 < delta_min < delta_max, got "
                f"({self.delta_min}, {self.delta_max})"
            )
        if not self.tolerance > 0:
            raise ValidationError(f"tolerance must be positive, got {self.tolerance}")
        if int(self.max_bisection_steps) != self.max_bisection_steps or self.max_bisection_steps < 1:
            raise ValidationError("max_bisection_steps must be a positive integer")
        if not 0 <= int(self.seed) < 2**64:
            raise ValidationError("seed must be an unsigned 64-bit integer")
        if int(self.threads) < 1:
            raise ValidationError("threads must be >= 1")

    @property
    def level(self) -> float:
        return 1.0 - self.alpha


@dataclass(frozen=True)
class RandomStream:
    """Counter-based random source addressed by ``(seed, path)``.

    The generator state is a hash of the seed and the derivation path
    (numpy's ``SeedSequence``), so ``derive(b)`` gives the same stream no
    matter when or on which thread it is created.

    Examples
    --------
    >>> s = RandomStream(1)
    >>> a = s.derive(0).generator().integers(0, 2**63, 4)
    >>> b = RandomStream(1).derive(0).generator().integers(0, 2**63, 4)
    >>> bool((a == b).all())
    True
    """

    seed: int
    path: tuple = field(default=())

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValidationError("seed must be an unsigned 64-bit integer")
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "path", tuple(int(i) for i in self.path))

    def derive(self, index: int) -> "RandomStream":
        if index < 0:
            raise ValidationError("substream index must be nonnegative")
        return RandomStream(self.seed, self.path + (int(index),))

    def generator(self) -> np.random.Generator:
        """A fresh generator positioned at the start of this stream."""
        ss = np.random.SeedSequence(self.seed, spawn_key=self.path)
        return np.random.Generator(np.random.PCG64(ss))

    def uint64(self, n: int) -> np.ndarray:
        return self.generator().integers(0, 2**64, size=n, dtype=np.uint64)

    def child_seed(self) -> int:
        """A 64-bit seed summarising this stream (for nested tasks)."""
        ss = np.random.SeedSequence(self.seed, spawn_key=self.path)
        return int(ss.generate_state(1, dtype=np.uint64)[0])


def derive_substream(parent: RandomStream, index: int) -> RandomStream:
    return parent.derive(index)


def as_float_array(values: Sequence[float], name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains missing or non-finite values")
    return arr
