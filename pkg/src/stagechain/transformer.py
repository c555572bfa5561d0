"""Reversible stage-to-stage transformers and their trainer.

A transformer holds a forward map F (stage i to i+1) and an
independently parameterized backward map G (stage i+1 to i). Both are
trained jointly on a cycle-consistency term plus a first-and-second
moment distribution match; see _kernel_numpy for the objective. The
backward map is learned, not inverted from F, except for spectral_init
which starts G at the exact inverse of its closed-form F.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import backend, _kernel_numpy
from .errors import TrainingError, ValidationError
from .model import Sample, StageDataset
from .rng import substream

# alternation quantum for alternate_batches: pairs take turns in blocks
# of up to this many full-batch steps
CHUNK = 25

INIT_SCALE = 0.01


@dataclass(frozen=True)
class AffineParams:
    weight: np.ndarray
    offset: np.ndarray

    def __post_init__(self):
        w = np.array(self.weight, dtype=np.float64)
        c = np.array(self.offset, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != w.shape[1] or c.shape != (w.shape[0],):
            raise ValidationError("affine params need (d, d) weight and (d,) offset")
        w.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "offset", c)

    @property
    def dim(self) -> int:
        return self.weight.shape[0]


@dataclass(frozen=True)
class MlpParams:
    """Residual one-hidden-layer map: x + w2 @ tanh(w1 @ x + b1) + b2."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        arrs = [np.array(a, dtype=np.float64) for a in (self.w1, self.b1, self.w2, self.b2)]
        w1, b1, w2, b2 = arrs
        h, d = w1.shape
        if b1.shape != (h,) or w2.shape != (d, h) or b2.shape != (d,):
            raise ValidationError("mlp params shapes inconsistent")
        for name, a in zip(("w1", "b1", "w2", "b2"), arrs):
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def dim(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden(self) -> int:
        return self.w1.shape[0]

    def as_tuple(self):
        return (self.w1, self.b1, self.w2, self.b2)


@dataclass(frozen=True)
class ReversibleTransformer:
    forward_params: AffineParams | MlpParams
    backward_params: AffineParams | MlpParams
    trained_steps: int = 0
    provenance: tuple = ()

    def __post_init__(self):
        if self.forward_params.dim != self.backward_params.dim:
            raise ValidationError("forward and backward dimensions differ")
        if type(self.forward_params) is not type(self.backward_params):
            raise ValidationError("forward and backward parameterizations differ")
        if self.trained_steps != sum(steps for _, steps in self.provenance):
            raise ValidationError("trained_steps must equal the provenance total")

    @property
    def dim(self) -> int:
        return self.forward_params.dim

    @property
    def kind(self) -> str:
        return "affine" if isinstance(self.forward_params, AffineParams) else "mlp"


@dataclass(frozen=True)
class TrainPlan:
    pairs: tuple
    total_steps: int
    interleave: str = "alternate_batches"
    lambda_cycle: float = 1.0
    lambda_dist: float = 0.1
    learning_rate: float = 2e-2
    budget_mode: str = "total"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(self.pairs))
        if self.total_steps < 1:
            raise ValidationError("total_steps >= 1 required")
        if not self.pairs:
            raise ValidationError("at least one stage pair required")
        if self.interleave not in ("alternate_batches", "sequential_halves"):
            raise ValidationError(f"unknown interleave {self.interleave!r}")
        if self.budget_mode not in ("total", "per_pair"):
            raise ValidationError(f"unknown budget_mode {self.budget_mode!r}")
        d = self.pairs[0][0].dim
        for src, dst in self.pairs:
            if src.dim != d or dst.dim != d:
                raise ValidationError("all pairs must share one dimension")


def init_transformer(d: int, mode: str = "identity", seed: int = 0,
                     hidden: int | None = None) -> ReversibleTransformer:
    if d < 1:
        raise ValidationError("d >= 1 required")
    if mode == "identity":
        if hidden is not None:
            # zero hidden weights make the identity an exact saddle:
            # nothing would ever train
            raise ValidationError("identity init supports affine transformers only")
        p = AffineParams(np.eye(d), np.zeros(d))
        return ReversibleTransformer(p, p)
    if mode != "seeded_random":
        raise ValidationError(f"unknown init mode {mode!r}")
    rng = substream(seed, "init")
    scale = INIT_SCALE / np.sqrt(d)

    if hidden is None:
        def draw():
            return AffineParams(np.eye(d) + scale * rng.standard_normal((d, d)),
                                scale * rng.standard_normal(d))
    else:
        if hidden < 1:
            raise ValidationError("hidden width >= 1 required")

        def draw():
            return MlpParams(rng.standard_normal((hidden, d)) / np.sqrt(d),
                             scale * rng.standard_normal(hidden),
                             scale * rng.standard_normal((d, hidden)),
                             scale * rng.standard_normal(d))
    return ReversibleTransformer(draw(), draw())


def spectral_init(source: StageDataset, target: StageDataset) -> ReversibleTransformer:
    """Closed-form moment-matching start: F maps source moments onto
    target moments through the covariance square roots, G is its exact
    inverse. Requires a non-degenerate source covariance.
    """
    if source.dim != target.dim:
        raise ValidationError("source and target dimensions differ")
    mx, my, cx, cy = _kernel_numpy.pair_moments(source.features, target.features)
    wx, vx = np.linalg.eigh(cx)
    wx = np.clip(wx, 1e-12, None)
    sx = (vx * np.sqrt(wx)) @ vx.T
    sxi = (vx / np.sqrt(wx)) @ vx.T
    mid = sx @ cy @ sx
    wm, vm = np.linalg.eigh(mid)
    mids = (vm * np.sqrt(np.clip(wm, 0.0, None))) @ vm.T
    w = sxi @ mids @ sxi
    wi = np.linalg.inv(w)
    return ReversibleTransformer(AffineParams(w, my - w @ mx),
                                 AffineParams(wi, mx - wi @ my))


def copy_transformer(phi: ReversibleTransformer) -> ReversibleTransformer:
    """Deep, independent copy; training the copy never touches phi."""
    def dup(p):
        if isinstance(p, AffineParams):
            return AffineParams(p.weight.copy(), p.offset.copy())
        return MlpParams(*(a.copy() for a in p.as_tuple()))
    return ReversibleTransformer(dup(phi.forward_params), dup(phi.backward_params),
                                 phi.trained_steps, tuple(phi.provenance))


def _apply_params(p, X: np.ndarray) -> np.ndarray:
    if isinstance(p, AffineParams):
        return X @ p.weight.T + p.offset
    return _kernel_numpy.mlp_apply(p.as_tuple(), X)[0]


def transform_forward(phi: ReversibleTransformer, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.shape[-1] != phi.dim:
        raise ValidationError(f"dimension mismatch: data {X.shape[-1]}, transformer {phi.dim}")
    return _apply_params(phi.forward_params, X)


def transform_backward(phi: ReversibleTransformer, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.shape[-1] != phi.dim:
        raise ValidationError(f"dimension mismatch: data {X.shape[-1]}, transformer {phi.dim}")
    return _apply_params(phi.backward_params, X)


def apply_forward(phi: ReversibleTransformer, s: Sample) -> Sample:
    return Sample(transform_forward(phi, s.features[None, :])[0])


def apply_backward(phi: ReversibleTransformer, s: Sample) -> Sample:
    return Sample(transform_backward(phi, s.features[None, :])[0])


def cycle_loss(phi: ReversibleTransformer, dataset: StageDataset) -> float:
    """Mean absolute per-coordinate round-trip residual, |G(F(x)) - x|."""
    if dataset.n == 0:
        raise ValidationError("empty dataset")
    X = dataset.features
    return float(np.abs(transform_backward(phi, transform_forward(phi, X)) - X).mean())


def dist_loss(phi: ReversibleTransformer, source: StageDataset,
              target: StageDataset) -> float:
    """Squared mean gap plus squared Frobenius covariance gap of F(source) vs target."""
    if source.dim != target.dim:
        raise ValidationError("source and target dimensions differ")
    P = transform_forward(phi, source.features)
    mp = P.mean(0)
    Pc = P - mp
    cp = Pc.T @ Pc / P.shape[0]
    _, my, _, cy = _kernel_numpy.pair_moments(source.features, target.features)
    dm = mp - my
    dc = cp - cy
    return float(dm @ dm + (dc * dc).sum())


def pair_step_counts(total_steps: int, n_pairs: int, budget_mode: str) -> list[int]:
    """Steps assigned to each pair; earlier pairs get the ceil share."""
    if budget_mode == "per_pair":
        return [total_steps] * n_pairs
    return [(total_steps - p + n_pairs - 1) // n_pairs for p in range(n_pairs)]


def build_segments(counts: list[int], interleave: str) -> list[tuple[int, int]]:
    if interleave == "sequential_halves":
        return [(p, c) for p, c in enumerate(counts) if c > 0]
    segments = []
    remaining = list(counts)
    while any(r > 0 for r in remaining):
        for p, r in enumerate(remaining):
            take = min(CHUNK, r)
            if take > 0:
                segments.append((p, take))
                remaining[p] -= take
    return segments


def _split_at_checkpoints(segments, interval):
    """Yield (pair, count, fire_hook_after) honoring the interval grid."""
    if interval <= 0:
        for pair, count in segments:
            yield pair, count, False
        return
    until = interval
    for pair, count in segments:
        while count > 0:
            take = min(count, until)
            count -= take
            until -= take
            fire = until == 0
            if fire:
                until = interval
            yield pair, take, fire


def train(phi: ReversibleTransformer, plan: TrainPlan,
          checkpoint_interval: int = 0, hook=None) -> ReversibleTransformer:
    """Run the plan and return a newly trained transformer.

    phi is never mutated. With alternate_batches the pairs take blocks
    of up to CHUNK steps round-robin until each has used its share
    (ceil(S/k) for the first pairs, floor for the rest); with
    sequential_halves each pair runs its share in one block, in order.
    Affine descent runs in the mean-centered offset parametrization
    (plain descent on centered data); the stored offset is recovered
    exactly at block boundaries. hook(step, transformer) fires after
    every checkpoint_interval steps. Raises TrainingError naming the
    first step with non-finite gradients.
    """
    if phi.dim != plan.pairs[0][0].dim:
        raise ValidationError("transformer and plan dimensions differ")
    counts = pair_step_counts(plan.total_steps, len(plan.pairs), plan.budget_mode)
    segments = build_segments(counts, plan.interleave)
    pieces = _split_at_checkpoints(segments, checkpoint_interval if hook else 0)

    done = [0] * len(plan.pairs)

    if phi.kind == "affine":
        moments = [_kernel_numpy.pair_moments(src.features, dst.features)
                   for src, dst in plan.pairs]
        wf = phi.forward_params.weight
        cf = phi.forward_params.offset
        wg = phi.backward_params.weight
        cg = phi.backward_params.offset
        step = 0
        for pair, take, fire in pieces:
            wf, cf, wg, cg, bad = backend.run_affine_schedule(
                wf, cf, wg, cg, moments, [(pair, take)],
                plan.learning_rate, plan.lambda_cycle, plan.lambda_dist)
            if bad >= 0:
                raise TrainingError(f"non-finite gradients at step {step + bad}")
            step += take
            done[pair] += take
            if fire:
                hook(step, _assemble(phi, wf, cf, wg, cg, plan, done))
        return _assemble(phi, wf, cf, wg, cg, plan, done)

    pairs_xy = [(src.features, dst.features) for src, dst in plan.pairs]
    fp = phi.forward_params.as_tuple()
    gp = phi.backward_params.as_tuple()
    step = 0
    for pair, take, fire in pieces:
        fp, gp, bad = _kernel_numpy.run_mlp_schedule(
            fp, gp, pairs_xy, [(pair, take)],
            plan.learning_rate, plan.lambda_cycle, plan.lambda_dist)
        if bad >= 0:
            raise TrainingError(f"non-finite gradients at step {step + bad}")
        step += take
        done[pair] += take
        if fire:
            hook(step, _assemble_mlp(phi, fp, gp, plan, done))
    return _assemble_mlp(phi, fp, gp, plan, done)


def _provenance(phi, plan, done):
    new = tuple(((src.stage_index, dst.stage_index), c)
                for (src, dst), c in zip(plan.pairs, done) if c > 0)
    return phi.provenance + new, phi.trained_steps + sum(done)


def _assemble(phi, wf, cf, wg, cg, plan, done):
    prov, steps = _provenance(phi, plan, done)
    return ReversibleTransformer(AffineParams(wf, cf), AffineParams(wg, cg),
                                 steps, prov)


def _assemble_mlp(phi, fp, gp, plan, done):
    prov, steps = _provenance(phi, plan, done)
    return ReversibleTransformer(MlpParams(*fp), MlpParams(*gp), steps, prov)
