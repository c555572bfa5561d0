"""Greedy forward-mode recursive transformer chain.

The run walks stage pairs in order. Each iteration trains a fresh
baseline module for the new pair, co-trains a copy of the currently
reusable module on its previous pair plus the new pair, scores both on
the new pair's source stage through the age estimator, and keeps the
recycled copy only if the decision rule accepts it. Winning upgrades
replace the shared module in place, so every earlier slot that
referenced it moves forward together; losses archive the attempt and
make the fresh baseline the next reuse candidate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import TrainingError, ValidationError
from .model import DomainSequence, RunConfig, Sample, validate_sequence
from .rng import substream
from .scorer import AgeEstimator, estimate_batch, score_error
from .transformer import (ReversibleTransformer, TrainPlan, copy_transformer,
                          init_transformer, spectral_init, train,
                          transform_backward, transform_forward)


@dataclass(frozen=True)
class DecisionRecord:
    iteration: int
    e_baseline: float
    e_recycled: float
    epsilon: float
    decision_mode: str
    winner: str
    sigma_floored_baseline: bool
    sigma_floored_recycled: bool
    guard: str = ""
    forgetting_error: float = float("nan")
    reuse_index_after: int = 0


@dataclass(frozen=True)
class CurveRecord:
    label: str
    step: int
    normalized_error: float
    mean_abs_error: float
    std_dev: float


@dataclass(frozen=True)
class EvalRow:
    slot: int
    module: str
    start_stage: int
    target: float
    reached_mean: float
    reached_std: float
    mean_abs_error: float
    mean_offset: float


@dataclass
class ChainState:
    """Completed chain: module table plus slot references into it.

    slot_modules[j] is the module index serving slot j+1 (stage j+1 to
    j+2); several slots holding one index is the compressed case.
    reuse_index is the 1-based slot whose module the next iteration
    would try to recycle.
    """

    modules: tuple
    slot_modules: tuple
    reuse_index: int
    decision_log: tuple
    config: RunConfig
    targets: tuple
    curves: tuple = ()
    released: tuple = ()

    @property
    def n_stages(self) -> int:
        return len(self.slot_modules) + 1

    def module_name(self, index: int) -> str:
        return f"m{index + 1}"

    def slot_transformer(self, slot: int) -> ReversibleTransformer:
        if not 1 <= slot <= len(self.slot_modules):
            raise ValidationError(f"slot {slot} out of range 1..{len(self.slot_modules)}")
        return self.modules[self.slot_modules[slot - 1]]


@dataclass(frozen=True)
class Descriptor:
    """Composition terms in application order (first slot first)."""

    terms: tuple

    @property
    def total_exponent(self) -> int:
        return sum(e for _, _, e in self.terms)


def _module_seed(seed: int, ordinal: int) -> int:
    return int(substream(seed, f"module.{ordinal}").integers(2 ** 63))


def run_chain(seq: DomainSequence, gamma: AgeEstimator, cfg: RunConfig) -> ChainState:
    """Execute the greedy recursion over a validated stage sequence.

    gamma must be fitted on labeled data disjoint from seq; it only
    ranks modules and never feeds a gradient. Raises TrainingError with
    a partial_log attribute if any training call diverges.
    """
    cfg = cfg.validated()
    report = validate_sequence(seq)
    if not report.ok:
        raise ValidationError("; ".join(report.violations))
    if gamma.dim != seq.dimension:
        raise ValidationError(
            f"estimator dimension {gamma.dim} does not match stages {seq.dimension}")
    nd = seq.n_stages
    targets = seq.targets
    curves: list[CurveRecord] = []
    released: list = []
    log: list[DecisionRecord] = []

    def curve_hook(label: str, source, target_mean: float):
        if cfg.checkpoint_interval <= 0:
            return None

        def hook(step, snapshot):
            r = score_error(snapshot, source, target_mean, gamma, cfg.sigma_floor)
            curves.append(CurveRecord(label, step, r.normalized_error,
                                      r.mean_abs_error, r.std_dev))
        return hook

    def fit(phi, pairs, ordinal: int, label: str):
        src = pairs[-1][0]
        goal = pairs[-1][1].target_mean_age
        plan = TrainPlan(pairs=pairs, total_steps=cfg.steps,
                         interleave=cfg.interleave,
                         lambda_cycle=cfg.lambda_cycle,
                         lambda_dist=cfg.lambda_dist,
                         learning_rate=cfg.learning_rate,
                         budget_mode=cfg.budget_mode,
                         seed=_module_seed(cfg.seed, ordinal))
        try:
            return train(phi, plan, cfg.checkpoint_interval,
                         curve_hook(label, src, goal))
        except TrainingError as err:
            err.partial_log = tuple(log)
            err.label = label
            raise

    def fresh(i: int):
        src, dst = seq.stage(i), seq.stage(i + 1)
        if cfg.init == "spectral":
            phi0 = spectral_init(src, dst)
        else:
            phi0 = init_transformer(seq.dimension, cfg.init,
                                    seed=_module_seed(cfg.seed, i),
                                    hidden=cfg.hidden_width)
        return fit(phi0, ((src, dst),), i, f"baseline_{i}")

    modules: list[ReversibleTransformer] = [fresh(1)]
    slots: list[int] = [0]
    created_at: list[int] = [1]
    reuse_wins: list[int] = [0]
    a = 1

    for i in range(2, nd):
        src, dst = seq.stage(i), seq.stage(i + 1)
        baseline = fresh(i)
        e_base = score_error(baseline, src, dst.target_mean_age, gamma, cfg.sigma_floor)
        cur = slots[a - 1]

        guard = ""
        forgetting = float("nan")
        if cfg.max_reuses is not None and reuse_wins[cur] >= cfg.max_reuses:
            guard = "max_reuses"
            e_rec = None
            recycled = None
        else:
            recycled = fit(copy_transformer(modules[cur]),
                           ((seq.stage(i - 1), src), (src, dst)),
                           nd + i, f"recycled_{i}")
            e_rec = score_error(recycled, src, dst.target_mean_age, gamma, cfg.sigma_floor)
            if cfg.max_forgetting_error is not None:
                first = created_at[cur]
                f_src = seq.stage(first)
                f_tgt = seq.stage(first + 1)
                forgetting = score_error(recycled, f_src, f_tgt.target_mean_age,
                                         gamma, cfg.sigma_floor).normalized_error
                if forgetting > cfg.max_forgetting_error:
                    guard = "max_forgetting"

        if guard or e_rec is None:
            win = False
        elif cfg.decision_mode == "two_sided":
            win = abs(e_base.normalized_error - e_rec.normalized_error) < cfg.epsilon
        else:
            win = e_rec.normalized_error - e_base.normalized_error < cfg.epsilon

        if win:
            if cfg.archive_released:
                released.append((f"baseline_{i}", baseline))
            modules[cur] = recycled
            slots.append(cur)
            reuse_wins[cur] += 1
            winner = "recycled"
        else:
            if cfg.archive_released and recycled is not None:
                released.append((f"recycled_{i}", recycled))
            modules.append(baseline)
            slots.append(len(modules) - 1)
            created_at.append(i)
            reuse_wins.append(0)
            a = i
            winner = "baseline"

        log.append(DecisionRecord(
            iteration=i,
            e_baseline=e_base.normalized_error,
            e_recycled=float("nan") if e_rec is None else e_rec.normalized_error,
            epsilon=cfg.epsilon,
            decision_mode=cfg.decision_mode,
            winner=winner,
            sigma_floored_baseline=e_base.sigma_floored,
            sigma_floored_recycled=False if e_rec is None else e_rec.sigma_floored,
            guard=guard,
            forgetting_error=forgetting,
            reuse_index_after=a,
        ))

    return ChainState(modules=tuple(modules), slot_modules=tuple(slots),
                      reuse_index=a, decision_log=tuple(log), config=cfg,
                      targets=targets, curves=tuple(curves),
                      released=tuple(released))


def transform_features(chain: ChainState, X: np.ndarray,
                       from_stage: int, to_stage: int) -> np.ndarray:
    nd = chain.n_stages
    for s, name in ((from_stage, "from_stage"), (to_stage, "to_stage")):
        if not 1 <= s <= nd:
            raise ValidationError(f"{name} {s} out of range 1..{nd}")
    out = np.asarray(X, dtype=np.float64)
    if to_stage > from_stage:
        for j in range(from_stage, to_stage):
            out = transform_forward(chain.slot_transformer(j), out)
    else:
        for j in range(from_stage - 1, to_stage - 1, -1):
            out = transform_backward(chain.slot_transformer(j), out)
    return out


def transform_to_stage(chain: ChainState, s: Sample,
                       from_stage: int, to_stage: int) -> Sample:
    return Sample(transform_features(chain, s.features[None, :],
                                     from_stage, to_stage)[0])


def evaluate_chain(chain: ChainState, validation: DomainSequence,
                   gamma: AgeEstimator):
    """One row per (slot module, validation start stage).

    Each module is applied once to every start stage's samples, the
    estimator reads the resulting ages, and the row reports their mean
    and spread against the following stage's target. Rows where the
    start stage equals the slot's own source stage are the on-path
    accuracy numbers; other rows show how a module generalizes across
    input ages.
    """
    if validation.dimension != chain.modules[0].dim:
        raise ValidationError("validation dimension does not match the chain")
    if validation.n_stages != chain.n_stages:
        raise ValidationError("validation stage count does not match the chain")
    rows = []
    for j in range(1, chain.n_stages):
        phi = chain.slot_transformer(j)
        name = chain.module_name(chain.slot_modules[j - 1])
        for s in range(1, validation.n_stages):
            stage = validation.stage(s)
            target = validation.stage(s + 1).target_mean_age
            ages = estimate_batch(gamma, transform_forward(phi, stage.features))
            mean = float(ages.mean())
            rows.append(EvalRow(
                slot=j, module=name, start_stage=s, target=target,
                reached_mean=mean,
                reached_std=float(ages.std()),
                mean_abs_error=float(np.abs(ages - target).mean()),
                mean_offset=mean - target,
            ))
    return tuple(rows)


def descriptor(chain: ChainState) -> Descriptor:
    """Collapse contiguous shared slots into exponent terms."""
    terms = []
    j = 0
    slots = chain.slot_modules
    while j < len(slots):
        start = j
        while j < len(slots) and slots[j] == slots[start]:
            j += 1
        pair = (chain.targets[start], chain.targets[start + 1])
        terms.append((chain.module_name(slots[start]), pair, j - start))
    return Descriptor(terms=tuple(terms))


def _fmt_age(x: float) -> str:
    return f"{x:g}"


def render_descriptor(desc: Descriptor) -> str:
    """Nested composition string, innermost term first in application order."""
    out = "x"
    for name, (lo, hi), exp in desc.terms:
        power = f"^{exp}" if exp > 1 else ""
        out = f"F{power}_{{{_fmt_age(lo)}→{_fmt_age(hi)}}}({out})"
    return out
