"""File formats: stage/label CSVs, report CSVs, chain files, manifests.

Every numeric value is rendered with repr(float(x)), the shortest
decimal that parses back to the identical float64, so emitted files
round-trip bit-exactly and reruns diff cleanly. Chain files are
sectioned text with an explicit version tag; shared modules are stored
once and referenced from the slot table.
"""

from __future__ import annotations

import hashlib
import json
import time
from pathlib import Path

import numpy as np

from .chain import ChainState, CurveRecord, DecisionRecord, EvalRow
from .errors import FormatError
from .model import DomainSequence, RunConfig, StageDataset
from .scorer import AgeEstimator
from .transformer import AffineParams, MlpParams, ReversibleTransformer

CHAIN_VERSION = "stagechain chain v1"

STAGE_HEADER = "stage_index,target_mean_age,d"
LABELS_HEADER = "stage_index,row,true_age"
DECISIONS_HEADER = ("iteration,e_baseline,e_recycled,epsilon,decision_mode,"
                    "winner,sigma_floored_baseline,sigma_floored_recycled,"
                    "guard,forgetting_error,reuse_index_after")
EVAL_HEADER = ("slot,module,start_stage,target,reached_mean,reached_std,"
               "mean_abs_error,mean_offset")
CURVES_HEADER = "label,step,normalized_error,mean_abs_error,std_dev"


def _r(x) -> str:
    return repr(float(x))


def _b(x) -> str:
    return "true" if x else "false"


def _parse_bool(s: str, where: str) -> bool:
    if s == "true":
        return True
    if s == "false":
        return False
    raise FormatError(f"{where}: expected true/false, got {s!r}")


# ---------------------------------------------------------------------------
# stage and label CSVs
# ---------------------------------------------------------------------------

def write_stage_csv(path, stage: StageDataset) -> None:
    d = stage.dim
    lines = [STAGE_HEADER,
             f"{stage.stage_index},{_r(stage.target_mean_age)},{d}",
             ",".join(f"f{j}" for j in range(d))]
    for row in stage.features:
        lines.append(",".join(_r(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_stage_csv(path) -> StageDataset:
    lines = Path(path).read_text().splitlines()
    if len(lines) < 4:
        raise FormatError(f"{path}: truncated stage file")
    if lines[0] != STAGE_HEADER:
        raise FormatError(f"{path}: expected header {STAGE_HEADER!r}")
    meta = lines[1].split(",")
    if len(meta) != 3:
        raise FormatError(f"{path}: malformed metadata line")
    stage_index, target, d = int(meta[0]), float(meta[1]), int(meta[2])
    expected = [f"f{j}" for j in range(d)]
    got = lines[2].split(",")
    for name in expected:
        if name not in got:
            raise FormatError(f"{path}: missing stage column {name}")
    if got != expected:
        raise FormatError(f"{path}: stage columns out of order")
    rows = []
    for k, line in enumerate(lines[3:]):
        parts = line.split(",")
        if len(parts) != d:
            raise FormatError(f"{path}: row {k} has {len(parts)} fields, expected {d}")
        rows.append([float(p) for p in parts])
    return StageDataset(stage_index, np.array(rows, dtype=np.float64), target)


def write_sequence_csvs(out_dir, seq: DomainSequence, ages=None) -> list:
    """stage_<i>.csv per stage, plus labels.csv when ages are given."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for s in seq.stages:
        p = out / f"stage_{s.stage_index}.csv"
        write_stage_csv(p, s)
        paths.append(p)
    if ages is not None:
        p = out / "labels.csv"
        write_labels_csv(p, seq, ages)
        paths.append(p)
    return paths


def read_sequence_csvs(paths) -> DomainSequence:
    stages = sorted((read_stage_csv(p) for p in paths), key=lambda s: s.stage_index)
    return DomainSequence(stages)


def write_labels_csv(path, seq: DomainSequence, ages) -> None:
    lines = [LABELS_HEADER]
    for stage, stage_ages in zip(seq.stages, ages):
        for r, age in enumerate(stage_ages):
            lines.append(f"{stage.stage_index},{r},{_r(age)}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_labels_csv(path) -> dict:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != LABELS_HEADER:
        raise FormatError(f"{path}: expected header {LABELS_HEADER!r}")
    out: dict[int, list[float]] = {}
    for line in lines[1:]:
        i, _, age = line.split(",")
        out.setdefault(int(i), []).append(float(age))
    return {i: np.array(v, dtype=np.float64) for i, v in out.items()}


# ---------------------------------------------------------------------------
# report CSVs
# ---------------------------------------------------------------------------

def write_decisions_csv(path, decision_log) -> None:
    lines = [DECISIONS_HEADER]
    for r in decision_log:
        lines.append(",".join([
            str(r.iteration), _r(r.e_baseline), _r(r.e_recycled), _r(r.epsilon),
            r.decision_mode, r.winner, _b(r.sigma_floored_baseline),
            _b(r.sigma_floored_recycled), r.guard, _r(r.forgetting_error),
            str(r.reuse_index_after)]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_decisions_csv(path) -> tuple:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != DECISIONS_HEADER:
        raise FormatError(f"{path}: expected header {DECISIONS_HEADER!r}")
    out = []
    for line in lines[1:]:
        p = line.split(",")
        if len(p) != 11:
            raise FormatError(f"{path}: decision row has {len(p)} fields")
        out.append(DecisionRecord(
            iteration=int(p[0]), e_baseline=float(p[1]), e_recycled=float(p[2]),
            epsilon=float(p[3]), decision_mode=p[4], winner=p[5],
            sigma_floored_baseline=_parse_bool(p[6], path),
            sigma_floored_recycled=_parse_bool(p[7], path),
            guard=p[8], forgetting_error=float(p[9]),
            reuse_index_after=int(p[10])))
    return tuple(out)


def write_eval_csv(path, rows) -> None:
    lines = [EVAL_HEADER]
    for r in rows:
        lines.append(",".join([
            str(r.slot), r.module, str(r.start_stage), _r(r.target),
            _r(r.reached_mean), _r(r.reached_std), _r(r.mean_abs_error),
            _r(r.mean_offset)]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_eval_csv(path) -> tuple:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != EVAL_HEADER:
        raise FormatError(f"{path}: expected header {EVAL_HEADER!r}")
    out = []
    for line in lines[1:]:
        p = line.split(",")
        if len(p) != 8:
            raise FormatError(f"{path}: eval row has {len(p)} fields")
        out.append(EvalRow(slot=int(p[0]), module=p[1], start_stage=int(p[2]),
                           target=float(p[3]), reached_mean=float(p[4]),
                           reached_std=float(p[5]), mean_abs_error=float(p[6]),
                           mean_offset=float(p[7])))
    return tuple(out)


def write_curves_csv(path, curves) -> None:
    lines = [CURVES_HEADER]
    for c in curves:
        lines.append(",".join([c.label, str(c.step), _r(c.normalized_error),
                               _r(c.mean_abs_error), _r(c.std_dev)]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_curves_csv(path) -> tuple:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != CURVES_HEADER:
        raise FormatError(f"{path}: expected header {CURVES_HEADER!r}")
    out = []
    for line in lines[1:]:
        p = line.split(",")
        if len(p) != 5:
            raise FormatError(f"{path}: curve row has {len(p)} fields")
        out.append(CurveRecord(label=p[0], step=int(p[1]),
                               normalized_error=float(p[2]),
                               mean_abs_error=float(p[3]), std_dev=float(p[4])))
    return tuple(out)


# ---------------------------------------------------------------------------
# chain files
# ---------------------------------------------------------------------------

def _write_array(lines, key, arr) -> None:
    arr = np.asarray(arr, dtype=np.float64)
    lines.append(f"{key}.shape=" + ",".join(str(n) for n in arr.shape))
    lines.append(f"{key}=" + " ".join(_r(v) for v in arr.reshape(-1)))


def _params_lines(lines, prefix, params) -> None:
    if isinstance(params, AffineParams):
        _write_array(lines, f"{prefix}.weight", params.weight)
        _write_array(lines, f"{prefix}.offset", params.offset)
    else:
        for name in ("w1", "b1", "w2", "b2"):
            _write_array(lines, f"{prefix}.{name}", getattr(params, name))


def save_chain(chain: ChainState, path) -> None:
    lines = [CHAIN_VERSION, "[config]",
             json.dumps(chain.config.__dict__, sort_keys=True, default=list),
             "[chain]",
             "targets=" + ",".join(_r(t) for t in chain.targets),
             f"reuse_index={chain.reuse_index}"]
    for idx, phi in enumerate(chain.modules):
        lines.append(f"[module m{idx + 1}]")
        lines.append(f"kind={phi.kind}")
        lines.append(f"trained_steps={phi.trained_steps}")
        lines.append("provenance=" + json.dumps(list(phi.provenance)))
        _params_lines(lines, "forward", phi.forward_params)
        _params_lines(lines, "backward", phi.backward_params)
    lines.append("[slots]")
    for j, idx in enumerate(chain.slot_modules):
        lines.append(f"{j + 1}=m{idx + 1}")
    lines.append("[decisions]")
    lines.append(DECISIONS_HEADER)
    for r in chain.decision_log:
        lines.append(",".join([
            str(r.iteration), _r(r.e_baseline), _r(r.e_recycled), _r(r.epsilon),
            r.decision_mode, r.winner, _b(r.sigma_floored_baseline),
            _b(r.sigma_floored_recycled), r.guard, _r(r.forgetting_error),
            str(r.reuse_index_after)]))
    lines.append("[end]")
    Path(path).write_text("\n".join(lines) + "\n")


def _split_sections(lines, path):
    sections: list[tuple[str, list[str]]] = []
    current: list[str] | None = None
    for line in lines:
        if line.startswith("[") and line.endswith("]"):
            current = []
            sections.append((line[1:-1], current))
        elif current is not None:
            current.append(line)
        elif line.strip():
            raise FormatError(f"{path}: content before the first section")
    return sections


def _kv(body, section, path) -> dict:
    out = {}
    for line in body:
        if not line.strip():
            continue
        if "=" not in line:
            raise FormatError(f"{path}: [{section}] line without '=': {line!r}")
        k, v = line.split("=", 1)
        out[k] = v
    return out


def _read_array(kv, key, section, path) -> np.ndarray:
    try:
        shape = tuple(int(n) for n in kv[f"{key}.shape"].split(","))
        flat = np.array([float(v) for v in kv[key].split()], dtype=np.float64)
    except KeyError as err:
        raise FormatError(f"{path}: [{section}] missing {err.args[0]}") from None
    if flat.size != int(np.prod(shape)):
        raise FormatError(f"{path}: [{section}] {key} size does not match shape")
    return flat.reshape(shape)


def _read_params(kv, prefix, kind, section, path):
    if kind == "affine":
        return AffineParams(_read_array(kv, f"{prefix}.weight", section, path),
                            _read_array(kv, f"{prefix}.offset", section, path))
    return MlpParams(*(_read_array(kv, f"{prefix}.{n}", section, path)
                       for n in ("w1", "b1", "w2", "b2")))


def load_chain(path) -> ChainState:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != CHAIN_VERSION:
        head = lines[0] if lines else ""
        raise FormatError(f"{path}: unknown version tag {head!r}")
    sections = _split_sections(lines[1:], path)
    names = [name for name, _ in sections]
    for required in ("config", "chain", "slots", "decisions", "end"):
        if required not in names:
            raise FormatError(f"{path}: missing [{required}] section")

    by_name = dict(sections)
    raw = json.loads("\n".join(by_name["config"]))
    raw["target_means"] = tuple(raw["target_means"])
    config = RunConfig(**raw)

    chain_kv = _kv(by_name["chain"], "chain", path)
    targets = tuple(float(t) for t in chain_kv["targets"].split(","))
    reuse_index = int(chain_kv["reuse_index"])

    modules = []
    module_names = []
    for name, body in sections:
        if not name.startswith("module "):
            continue
        kv = _kv(body, name, path)
        kind = kv.get("kind")
        if kind not in ("affine", "mlp"):
            raise FormatError(f"{path}: [{name}] unknown kind {kind!r}")
        prov = tuple((tuple(pair), steps) for pair, steps in json.loads(kv["provenance"]))
        modules.append(ReversibleTransformer(
            _read_params(kv, "forward", kind, name, path),
            _read_params(kv, "backward", kind, name, path),
            int(kv["trained_steps"]), prov))
        module_names.append(name.split(" ", 1)[1])

    index_of = {n: i for i, n in enumerate(module_names)}
    slot_kv = _kv(by_name["slots"], "slots", path)
    slot_modules = []
    for j in range(1, len(slot_kv) + 1):
        ref = slot_kv.get(str(j))
        if ref is None:
            raise FormatError(f"{path}: [slots] missing slot {j}")
        if ref not in index_of:
            raise FormatError(f"{path}: [slots] references unknown module {ref!r}")
        slot_modules.append(index_of[ref])

    dec_lines = [l for l in by_name["decisions"] if l.strip()]
    if not dec_lines or dec_lines[0] != DECISIONS_HEADER:
        raise FormatError(f"{path}: [decisions] missing header")
    decisions = []
    for line in dec_lines[1:]:
        p = line.split(",")
        if len(p) != 11:
            raise FormatError(f"{path}: [decisions] row has {len(p)} fields")
        decisions.append(DecisionRecord(
            iteration=int(p[0]), e_baseline=float(p[1]), e_recycled=float(p[2]),
            epsilon=float(p[3]), decision_mode=p[4], winner=p[5],
            sigma_floored_baseline=_parse_bool(p[6], path),
            sigma_floored_recycled=_parse_bool(p[7], path),
            guard=p[8], forgetting_error=float(p[9]),
            reuse_index_after=int(p[10])))

    return ChainState(modules=tuple(modules), slot_modules=tuple(slot_modules),
                      reuse_index=reuse_index, decision_log=tuple(decisions),
                      config=config, targets=targets)


# ---------------------------------------------------------------------------
# estimator files
# ---------------------------------------------------------------------------

ESTIMATOR_VERSION = "stagechain estimator v1"


def save_estimator(gamma: AgeEstimator, path) -> None:
    lines = [ESTIMATOR_VERSION, "[estimator]",
             f"ridge={_r(gamma.ridge)}",
             f"bias={_r(gamma.bias)}",
             "fit_record=" + json.dumps(gamma.fit_record, sort_keys=True)]
    _write_array(lines, "weights", gamma.weights)
    lines.append("[end]")
    Path(path).write_text("\n".join(lines) + "\n")


def load_estimator(path) -> AgeEstimator:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != ESTIMATOR_VERSION:
        head = lines[0] if lines else ""
        raise FormatError(f"{path}: unknown version tag {head!r}")
    sections = _split_sections(lines[1:], path)
    names = [name for name, _ in sections]
    for required in ("estimator", "end"):
        if required not in names:
            raise FormatError(f"{path}: missing [{required}] section")
    kv = _kv(dict(sections)["estimator"], "estimator", path)
    try:
        return AgeEstimator(weights=_read_array(kv, "weights", "estimator", path),
                            bias=float(kv["bias"]), ridge=float(kv["ridge"]),
                            fit_record=json.loads(kv["fit_record"]))
    except KeyError as err:
        raise FormatError(f"{path}: [estimator] missing {err.args[0]}") from None


# ---------------------------------------------------------------------------
# manifests
# ---------------------------------------------------------------------------

def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(path, config: RunConfig, seed: int, artifacts: dict) -> dict:
    """Record config, seed, and a digest per artifact; returns the dict."""
    from . import __version__

    manifest = {
        "tool": "stagechain",
        "version": __version__,
        "created": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime()),
        "seed": seed,
        "config": json.loads(json.dumps(config.__dict__, default=list)),
        "artifacts": {
            name: {"path": str(Path(p).name), "sha256": sha256_file(p)}
            for name, p in artifacts.items()},
    }
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def check_manifest(path) -> list:
    """Digest mismatches and missing files, as human-readable strings."""
    manifest = json.loads(Path(path).read_text())
    base = Path(path).parent
    problems = []
    for name, entry in manifest["artifacts"].items():
        p = base / entry["path"]
        if not p.exists():
            problems.append(f"{name}: missing file {entry['path']}")
        elif sha256_file(p) != entry["sha256"]:
            problems.append(f"{name}: digest mismatch for {entry['path']}")
    return problems
