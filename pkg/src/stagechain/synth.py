"""Synthetic developmental processes with known ground truth.

A process is a latent-linear generative model over N ordered stages:
stage i draws fresh latents z (stages are unpaired by construction) and
emits warp(A_i z + b_i) + noise, where A_{i+1} = M_i A_i and
b_{i+1} = M_i b_i + v_i for per-transition maps (M_i, v_i). The first
latent coordinate carries age: true_age = target_mean_i + jitter * z_0.
All transition maps leave the age readout direction fixed, so a single
affine regressor can estimate age at every stage.

Builders construct the canonical geometry in a frame where coordinate 0
is the age axis and the rest carry shape, then conjugate everything by
a seeded random rotation so no coordinate is special in the emitted
features.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ValidationError
from .model import DomainSequence, StageDataset
from .rng import substream

AGE_SCALE = 0.5


@dataclass(frozen=True)
class ProcessSpec:
    latent_dim: int
    observable_dim: int
    a1: np.ndarray
    b1: np.ndarray
    transition_maps: tuple
    transition_offsets: tuple
    target_means: tuple
    age_jitter: float = 2.0
    noise_scale: float = 0.05
    samples_per_stage: int = 512
    warp: str | None = None
    warp_scale: float = 0.0

    def __post_init__(self):
        k, d = self.latent_dim, self.observable_dim
        a1 = np.asarray(self.a1, dtype=np.float64)
        b1 = np.asarray(self.b1, dtype=np.float64)
        if a1.shape != (d, k) or b1.shape != (d,):
            raise ValidationError("a1 must be (d, k) and b1 (d,)")
        if np.linalg.matrix_rank(a1) < k:
            raise ValidationError("a1 must have full column rank")
        maps = tuple(np.asarray(m, dtype=np.float64) for m in self.transition_maps)
        offs = tuple(np.asarray(v, dtype=np.float64) for v in self.transition_offsets)
        if len(maps) != len(offs):
            raise ValidationError("transition maps and offsets must align")
        if len(self.target_means) != len(maps) + 1:
            raise ValidationError("need one target mean per stage")
        for m, v in zip(maps, offs):
            if m.shape != (d, d) or v.shape != (d,):
                raise ValidationError("transitions must be (d, d) maps with (d,) offsets")
        t = self.target_means
        if any(not b > a for a, b in zip(t, t[1:])):
            raise ValidationError("target means must strictly increase")
        if self.samples_per_stage < 2:
            raise ValidationError("sigma needs >= 2 samples per stage")
        if self.age_jitter <= 0:
            raise ValidationError("age_jitter > 0 required")
        if self.noise_scale < 0:
            raise ValidationError("noise_scale >= 0 required")
        if self.warp not in (None, "tanh"):
            raise ValidationError(f"unknown warp {self.warp!r}")
        object.__setattr__(self, "a1", a1)
        object.__setattr__(self, "b1", b1)
        object.__setattr__(self, "transition_maps", maps)
        object.__setattr__(self, "transition_offsets", offs)
        object.__setattr__(self, "target_means", tuple(float(x) for x in t))

    @property
    def n_stages(self) -> int:
        return len(self.target_means)

    def with_samples(self, n: int) -> "ProcessSpec":
        return replace(self, samples_per_stage=int(n))


@dataclass(frozen=True)
class GeneratedProcess:
    sequence: DomainSequence
    ages: tuple
    spec: ProcessSpec
    seed: int


def stage_basis(spec: ProcessSpec, i: int):
    """(A_i, b_i) of 1-based stage i, by accumulating transitions."""
    if not 1 <= i <= spec.n_stages:
        raise ValidationError(f"stage {i} out of range 1..{spec.n_stages}")
    a = spec.a1.copy()
    b = spec.b1.copy()
    for j in range(i - 1):
        a = spec.transition_maps[j] @ a
        b = spec.transition_maps[j] @ b + spec.transition_offsets[j]
    return a, b


def stage_population_moments(spec: ProcessSpec, i: int):
    """Noiseless structural mean and covariance of stage i."""
    a, b = stage_basis(spec, i)
    return b, a @ a.T


def ground_truth_moment_map(spec: ProcessSpec, i: int):
    """Closed-form moment-matching affine map from stage i to i+1.

    Computed from the noiseless structural moments:
    W = Sx^-1/2 (Sx^1/2 Sy Sx^1/2)^1/2 Sx^-1/2 with a small eigenvalue
    floor on Sx. For a shared transition block this map reproduces the
    generating transition itself, which is what the compression tests
    check against.
    """
    mx, cx = stage_population_moments(spec, i)
    my, cy = stage_population_moments(spec, i + 1)
    wx, vx = np.linalg.eigh(cx)
    wx = np.clip(wx, 1e-12, None)
    sx = (vx * np.sqrt(wx)) @ vx.T
    sxi = (vx / np.sqrt(wx)) @ vx.T
    wm, vm = np.linalg.eigh(sx @ cy @ sx)
    mids = (vm * np.sqrt(np.clip(wm, 0.0, None))) @ vm.T
    w = sxi @ mids @ sxi
    return w, my - w @ mx


def generate_process(spec: ProcessSpec, seed: int,
                     substream_name: str = "synth") -> GeneratedProcess:
    """Draw every stage of the process; deterministic in (spec, seed).

    substream_name picks an independent stream so held-out estimator or
    validation draws never overlap the training draw.
    """
    rng = substream(seed, substream_name)
    n, k, d = spec.samples_per_stage, spec.latent_dim, spec.observable_dim
    a = spec.a1.copy()
    b = spec.b1.copy()
    stages = []
    ages = []
    for i in range(spec.n_stages):
        z = rng.standard_normal((n, k))
        x = z @ a.T + b
        if spec.warp == "tanh":
            x = x + spec.warp_scale * np.tanh(x)
        if spec.noise_scale > 0:
            x = x + spec.noise_scale * rng.standard_normal((n, d))
        stages.append(StageDataset(i + 1, x, spec.target_means[i]))
        ages.append(spec.target_means[i] + spec.age_jitter * z[:, 0])
        if i < spec.n_stages - 1:
            a = spec.transition_maps[i] @ a
            b = spec.transition_maps[i] @ b + spec.transition_offsets[i]
    return GeneratedProcess(DomainSequence(stages), tuple(ages), spec, seed)


def pooled_labels(gen: GeneratedProcess):
    """All stages' features and true ages stacked, for estimator fits."""
    X = np.vstack([s.features for s in gen.sequence.stages])
    y = np.concatenate(gen.ages)
    return X, y


# ---------------------------------------------------------------------------
# canonical-frame construction helpers
# ---------------------------------------------------------------------------

def _rotation(ds: int, i: int, j: int, degrees: float) -> np.ndarray:
    r = np.eye(ds)
    th = np.deg2rad(degrees)
    r[i, i] = r[j, j] = np.cos(th)
    r[i, j] = -np.sin(th)
    r[j, i] = np.sin(th)
    return r


def _shape_pattern(ds: int) -> np.ndarray:
    # deterministic +-1 ramp visiting coordinates in a scrambled order
    return (np.arange(ds) * 7 % ds) / (ds - 1) * 2.0 - 1.0


def _transition(d: int, shape_block: np.ndarray, age_gap: float):
    m = np.eye(d)
    m[1:, 1:] = shape_block
    v = np.zeros(d)
    v[0] = AGE_SCALE * age_gap
    return m, v


def _first_stage_basis(d: int, k: int, age_jitter: float, rho: float,
                       shape_diag: np.ndarray, first_target: float):
    a1 = np.zeros((d, k))
    a1[0, 0] = AGE_SCALE * age_jitter
    for j in range(1, k):
        a1[j, j] = shape_diag[j - 1]
    col = np.zeros(d - 1)
    col[:6] = 1.0
    a1[1:, 0] = rho * col / np.linalg.norm(col)
    b1 = np.zeros(d)
    b1[0] = AGE_SCALE * first_target
    return a1, b1


def _conjugate(q: np.ndarray, a1, b1, maps, offsets):
    a1 = q @ a1
    b1 = q @ b1
    maps = tuple(q @ m @ q.T for m in maps)
    offsets = tuple(q @ v for v in offsets)
    return a1, b1, maps, offsets


def _random_orthogonal(d: int, rng) -> np.ndarray:
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    return q


def make_shared_middle_spec(seed: int = 0, d: int = 16,
                            samples_per_stage: int = 1536,
                            noise_scale: float = 0.05) -> ProcessSpec:
    """Six stages whose middle three transitions are one repeated map.

    The boundary transitions rotate the shape spectrum into different
    planes and carry age gaps (1 and 18) far from the shared gap (6),
    so no single affine map can serve a boundary pair and a shared pair
    at once; the shared region itself is exactly one SPD map, which a
    co-trained module can match. Latents are square (k = d) so the
    conjugated frame stays exact.
    """
    if d < 8:
        raise ValidationError("shared_middle needs d >= 8")
    targets = (15.0, 16.0, 22.0, 28.0, 34.0, 52.0)
    ds = d - 1
    pat = _shape_pattern(ds)
    db = np.diag(1.0 + 0.35 * pat)
    dsh = np.diag(1.0 + 0.08 * pat)
    r1 = _rotation(ds, 0, 1, 45) @ _rotation(ds, 2, 3, 45) @ _rotation(ds, 4, 5, 45)
    r5 = _rotation(ds, 1, 2, 45) @ _rotation(ds, 3, 4, 45) @ _rotation(ds, 5, 6, 45)
    m1, v1 = _transition(d, r1 @ db @ r1.T, targets[1] - targets[0])
    ms, vs = _transition(d, dsh, targets[2] - targets[1])
    m5, v5 = _transition(d, r5 @ db @ r5.T, targets[5] - targets[4])

    jitter = 2.0
    a1 = np.eye(d)
    a1[0, 0] = AGE_SCALE * jitter
    a1[1:, 1:] = np.diag(np.linspace(0.95, 1.35, ds))
    col = np.zeros(ds)
    col[:6] = 1.0
    a1[1:, 0] = 1.2 * col / np.linalg.norm(col)
    b1 = np.zeros(d)
    b1[0] = AGE_SCALE * targets[0]

    q = _random_orthogonal(d, substream(seed, "process"))
    a1, b1, maps, offsets = _conjugate(q, a1, b1, (m1, ms, ms, ms, m5), (v1, vs, vs, vs, v5))
    return ProcessSpec(latent_dim=d, observable_dim=d, a1=a1, b1=b1,
                       transition_maps=maps, transition_offsets=offsets,
                       target_means=targets, age_jitter=jitter,
                       noise_scale=noise_scale,
                       samples_per_stage=samples_per_stage)


def make_linear_chain_spec(seed: int = 0, d: int = 16, latent_dim: int = 8,
                           samples_per_stage: int = 512,
                           noise_scale: float = 0.05,
                           target_means: tuple = (15.0, 25.0, 35.0, 45.0, 55.0, 65.0),
                           ) -> ProcessSpec:
    """Basic linear process: mild, per-stage-distinct SPD transitions."""
    if d < 8:
        raise ValidationError("linear_chain needs d >= 8")
    if not 2 <= latent_dim <= d:
        raise ValidationError("latent_dim must be in 2..d")
    ds = d - 1
    jitter = 2.0
    pat = _shape_pattern(ds)
    maps = []
    offsets = []
    for i in range(len(target_means) - 1):
        rot = _rotation(ds, i, i + 1, 30)
        block = rot @ np.diag(1.0 + 0.12 * np.roll(pat, i)) @ rot.T
        m, v = _transition(d, block, target_means[i + 1] - target_means[i])
        maps.append(m)
        offsets.append(v)

    shape_diag = np.linspace(0.9, 1.3, latent_dim - 1)
    a1, b1 = _first_stage_basis(d, latent_dim, jitter, 1.2,
                                shape_diag, target_means[0])
    q = _random_orthogonal(d, substream(seed, "process"))
    a1, b1, maps, offsets = _conjugate(q, a1, b1, tuple(maps), tuple(offsets))
    return ProcessSpec(latent_dim=latent_dim, observable_dim=d, a1=a1, b1=b1,
                       transition_maps=maps, transition_offsets=offsets,
                       target_means=tuple(target_means), age_jitter=jitter,
                       noise_scale=noise_scale,
                       samples_per_stage=samples_per_stage)


def make_all_distinct_spec(seed: int = 0, d: int = 16, latent_dim: int = 8,
                           samples_per_stage: int = 512,
                           noise_scale: float = 0.05,
                           warp_scale: float = 0.3) -> ProcessSpec:
    """Strongly per-stage-distinct transitions plus a tanh feature warp."""
    if d < 10:
        raise ValidationError("all_distinct needs d >= 10")
    targets = (15.0, 25.0, 35.0, 45.0, 55.0, 65.0)
    ds = d - 1
    jitter = 2.0
    pat = _shape_pattern(ds)
    maps = []
    offsets = []
    for i in range(len(targets) - 1):
        rot = _rotation(ds, 2 * i % ds, (2 * i + 1) % ds, 45) @ _rotation(
            ds, (2 * i + 3) % ds, (2 * i + 5) % ds, 45)
        block = rot @ np.diag(1.0 + 0.3 * np.roll(pat, 2 * i)) @ rot.T
        m, v = _transition(d, block, targets[i + 1] - targets[i])
        maps.append(m)
        offsets.append(v)

    shape_diag = np.linspace(0.9, 1.3, latent_dim - 1)
    a1, b1 = _first_stage_basis(d, latent_dim, jitter, 1.2, shape_diag, targets[0])
    q = _random_orthogonal(d, substream(seed, "process"))
    a1, b1, maps, offsets = _conjugate(q, a1, b1, tuple(maps), tuple(offsets))
    return ProcessSpec(latent_dim=latent_dim, observable_dim=d, a1=a1, b1=b1,
                       transition_maps=maps, transition_offsets=offsets,
                       target_means=targets, age_jitter=jitter,
                       noise_scale=noise_scale,
                       samples_per_stage=samples_per_stage,
                       warp="tanh", warp_scale=warp_scale)


def make_linear_pair(seed: int = 0, d: int = 16, n: int = 512):
    """Noiseless two-stage fixture whose empirical covariances commute.

    Latents are drawn once and exactly whitened, and both stage bases
    share one eigenframe, so the empirical moment-matching map between
    the stages is symmetric positive definite. Gradient descent from
    the identity converges to exactly that map, which makes this the
    trainer's closed-form reference fixture. Returns (source, target).
    """
    rng = substream(seed, "synth")
    z = rng.standard_normal((n, d))
    z = z - z.mean(0)
    cz = z.T @ z / n
    w, v = np.linalg.eigh(cz)
    z = z @ (v / np.sqrt(w)) @ v.T

    q = _random_orthogonal(d, substream(seed, "process"))
    d1 = np.linspace(0.8, 1.25, d)
    d2 = d1 * np.linspace(1.3, 0.9, d)
    a1 = q @ np.diag(d1)
    a2 = q @ np.diag(d2)
    b1 = np.zeros(d)
    b2 = 10.0 * q[:, 0]
    src = StageDataset(1, z @ a1.T + b1, 15.0)
    dst = StageDataset(2, z @ a2.T + b2, 25.0)
    return src, dst


PROCESS_BUILDERS = {
    "shared_middle": make_shared_middle_spec,
    "linear_chain": make_linear_chain_spec,
    "all_distinct": make_all_distinct_spec,
}
