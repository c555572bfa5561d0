"""Shared data types: samples, stages, sequences, run configuration.

Stage indices are 1-based throughout. All types are immutable after
construction and safe to share between workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import ValidationError

DEFAULT_TARGETS = (15.0, 25.0, 35.0, 45.0, 55.0, 65.0)


@dataclass(frozen=True)
class Sample:
    """One individual at one stage, as a d-dimensional feature vector."""

    features: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.features, dtype=np.float64)
        if f.ndim != 1:
            raise ValidationError(f"sample features must be 1-d, got shape {f.shape}")
        if not np.all(np.isfinite(f)):
            raise ValidationError("sample features must be finite")
        f.setflags(write=False)
        object.__setattr__(self, "features", f)

    @property
    def dim(self) -> int:
        return self.features.shape[0]


class StageDataset:
    """Unpaired samples for one developmental stage.

    Holds the samples as one (n, d) array; the `samples` property gives
    the per-sample view. target_mean_age is the stage's intended mean
    age in plain age units.
    """

    __slots__ = ("stage_index", "features", "target_mean_age")

    def __init__(self, stage_index: int, features, target_mean_age: float):
        X = np.asarray(features, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2 or X.shape[0] == 0:
            raise ValidationError(f"stage {stage_index}: needs a non-empty (n, d) sample array")
        if not np.all(np.isfinite(X)):
            raise ValidationError(f"stage {stage_index}: non-finite feature values")
        if stage_index < 1:
            raise ValidationError("stage_index is 1-based")
        X = X.copy()
        X.setflags(write=False)
        self.stage_index = int(stage_index)
        self.features = X
        self.target_mean_age = float(target_mean_age)

    @classmethod
    def from_samples(cls, stage_index: int, samples: Sequence[Sample], target_mean_age: float):
        if len(samples) == 0:
            raise ValidationError(f"stage {stage_index}: empty sample list")
        return cls(stage_index, np.stack([s.features for s in samples]), target_mean_age)

    @property
    def samples(self) -> tuple[Sample, ...]:
        return tuple(Sample(row) for row in self.features)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def __repr__(self):
        return (f"StageDataset(stage_index={self.stage_index}, n={self.n}, "
                f"d={self.dim}, target_mean_age={self.target_mean_age})")


class DomainSequence:
    """Ordered stages 1..N_D of one developmental process."""

    __slots__ = ("stages", "dimension")

    def __init__(self, stages: Sequence[StageDataset]):
        stages = tuple(stages)
        if not stages:
            raise ValidationError("empty domain sequence")
        self.stages = stages
        self.dimension = stages[0].dim

    @property
    def n_stages(self) -> int:
        return len(self.stages)

    def stage(self, index: int) -> StageDataset:
        """1-based stage access."""
        if not 1 <= index <= len(self.stages):
            raise ValidationError(f"stage index {index} out of range 1..{len(self.stages)}")
        return self.stages[index - 1]

    @property
    def targets(self) -> tuple[float, ...]:
        return tuple(s.target_mean_age for s in self.stages)


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: tuple[str, ...] = ()


def validate_sequence(seq: DomainSequence) -> ValidationReport:
    """Check every sequence invariant; reports instead of raising."""
    v: list[str] = []
    if seq.n_stages < 3:
        v.append(f"N_D >= 3 required, got {seq.n_stages}")
    for pos, st in enumerate(seq.stages, start=1):
        if st.stage_index != pos:
            v.append(f"stage at position {pos} has stage_index {st.stage_index}")
        if st.n == 0:
            v.append(f"stage {pos} is empty")
        if st.dim != seq.dimension:
            v.append(f"dimension mismatch at stage {pos}: {st.dim} != {seq.dimension}")
    targets = [s.target_mean_age for s in seq.stages]
    for a, b, i in zip(targets, targets[1:], range(1, len(targets))):
        if not b > a:
            v.append(f"target means must strictly increase: stage {i}={a} vs stage {i + 1}={b}")
    return ValidationReport(ok=not v, violations=tuple(v))


@dataclass(frozen=True)
class RunConfig:
    """Everything a chain run needs besides the data itself.

    epsilon is the score-difference threshold of the reuse decision;
    decision_mode picks the comparison: "two_sided" reuses when
    |E - E'| < epsilon, "one_sided" when E' - E < epsilon.
    init selects fresh-module initialization: "identity",
    "seeded_random", or "spectral" (closed-form moment-matching start
    computed from the module's first training pair).
    budget_mode "total" splits steps across a plan's pairs; "per_pair"
    gives every pair the full count.
    """

    n_stages: int = 6
    target_means: tuple[float, ...] = DEFAULT_TARGETS
    steps: int = 4000
    epsilon: float = 0.1
    seed: int = 0
    sigma_floor: float = 1e-6
    decision_mode: str = "one_sided"
    learning_rate: float = 2e-2
    lambda_cycle: float = 1.0
    lambda_dist: float = 0.1
    interleave: str = "alternate_batches"
    budget_mode: str = "total"
    init: str = "spectral"
    hidden_width: int | None = None
    ridge: float = 1e-6
    checkpoint_interval: int = 0
    max_reuses: int | None = None
    max_forgetting_error: float | None = None
    archive_released: bool = False

    def validated(self) -> "RunConfig":
        if self.steps < 1:
            raise ValidationError("steps >= 1 required")
        if self.epsilon < 0:
            raise ValidationError("epsilon >= 0 required")
        if self.sigma_floor <= 0:
            raise ValidationError("sigma_floor > 0 required")
        if self.decision_mode not in ("two_sided", "one_sided"):
            raise ValidationError(f"unknown decision_mode {self.decision_mode!r}")
        if self.interleave not in ("alternate_batches", "sequential_halves"):
            raise ValidationError(f"unknown interleave {self.interleave!r}")
        if self.budget_mode not in ("total", "per_pair"):
            raise ValidationError(f"unknown budget_mode {self.budget_mode!r}")
        if self.init not in ("identity", "seeded_random", "spectral"):
            raise ValidationError(f"unknown init {self.init!r}")
        if len(self.target_means) != self.n_stages:
            raise ValidationError("target_means length must equal n_stages")
        t = self.target_means
        if any(not b > a for a, b in zip(t, t[1:])):
            raise ValidationError("target_means must strictly increase")
        return self

    def with_overrides(self, **kw) -> "RunConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw) if kw else self
