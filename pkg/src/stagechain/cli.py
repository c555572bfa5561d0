"""Command-line front end.

Subcommands:
    generate   draw a synthetic process and write its stage/label CSVs
    run        train the full chain and write every report artifact
    eval       re-score a saved chain against validation stage CSVs
    inspect    print a saved chain's descriptor and decision log

Config files are JSON: a process builder name with its parameters,
held-out sample counts for the estimator and validation draws, and the
run settings. One seed drives everything through named substreams, so
rerunning a command with the same config and seed reproduces every
output file byte for byte (manifests carry a timestamp and are the one
exception).

Exit codes: 0 ok, 1 usage, 2 validation or format failure, 3 runtime
failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .chain import descriptor, evaluate_chain, render_descriptor, run_chain
from .errors import FormatError, StagechainError, TrainingError, ValidationError
from .formats import (load_chain, load_estimator, read_sequence_csvs, save_chain,
                      save_estimator, write_curves_csv, write_decisions_csv,
                      write_eval_csv, write_manifest, write_sequence_csvs)
from .model import RunConfig
from .scorer import fit_estimator
from .synth import PROCESS_BUILDERS, generate_process, pooled_labels


@dataclass(frozen=True)
class CliConfig:
    process: str
    process_params: dict
    estimator_samples: int
    validation_samples: int
    run: RunConfig


def load_config(path) -> CliConfig:
    p = Path(path)
    if not p.exists():
        raise ValidationError(f"config file not found: {path}")
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as err:
        raise FormatError(f"{path}: invalid JSON: {err}") from None
    if not isinstance(raw, dict):
        raise FormatError(f"{path}: config must be a JSON object")
    known = {"process", "process_params", "estimator_samples",
             "validation_samples", "run"}
    for key in raw:
        if key not in known:
            raise FormatError(f"{path}: unknown config key {key!r}")
    process = raw.get("process", "linear_chain")
    if process not in PROCESS_BUILDERS:
        names = ", ".join(sorted(PROCESS_BUILDERS))
        raise ValidationError(f"unknown process {process!r}; available: {names}")
    run_raw = dict(raw.get("run", {}))
    if "target_means" in run_raw:
        run_raw["target_means"] = tuple(run_raw["target_means"])
    try:
        run = RunConfig(**run_raw)
    except TypeError as err:
        raise FormatError(f"{path}: bad run settings: {err}") from None
    return CliConfig(process=process,
                     process_params=dict(raw.get("process_params", {})),
                     estimator_samples=int(raw.get("estimator_samples", 512)),
                     validation_samples=int(raw.get("validation_samples", 512)),
                     run=run)


def _configure(args) -> CliConfig:
    """Config file plus flag overrides; flags win."""
    cfg = load_config(args.config)
    run = cfg.run.with_overrides(
        seed=args.seed, epsilon=args.epsilon, steps=args.steps,
        decision_mode=args.decision_mode,
        checkpoint_interval=args.checkpoint_interval)
    return CliConfig(cfg.process, cfg.process_params,
                     cfg.estimator_samples, cfg.validation_samples, run)


def _build_spec(cfg: CliConfig):
    spec = PROCESS_BUILDERS[cfg.process](seed=cfg.run.seed, **cfg.process_params)
    run = cfg.run.with_overrides(n_stages=spec.n_stages,
                                 target_means=spec.target_means).validated()
    return spec, run


def cmd_generate(args) -> int:
    cfg = _configure(args)
    spec, run = _build_spec(cfg)
    gen = generate_process(spec, run.seed, "synth")
    out = Path(args.out_dir)
    paths = write_sequence_csvs(out, gen.sequence, gen.ages)
    artifacts = {p.stem: p for p in paths}
    manifest = write_manifest(out / "manifest.json", run, run.seed, artifacts)
    print(json.dumps(manifest, indent=2, sort_keys=True))
    return 0


def cmd_run(args) -> int:
    cfg = _configure(args)
    spec, run = _build_spec(cfg)
    train_gen = generate_process(spec, run.seed, "synth")
    est_gen = generate_process(spec.with_samples(cfg.estimator_samples),
                               run.seed, "synth.estimator")
    val_gen = generate_process(spec.with_samples(cfg.validation_samples),
                               run.seed, "synth.validation")

    X, y = pooled_labels(est_gen)
    gamma = fit_estimator(X, y, ridge=run.ridge, seed=run.seed)

    try:
        chain = run_chain(train_gen.sequence, gamma, run)
    except TrainingError as err:
        label = getattr(err, "label", "training")
        raise TrainingError(f"{label}: {err}") from err

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    desc = render_descriptor(descriptor(chain))
    rows = evaluate_chain(chain, val_gen.sequence, gamma)

    save_chain(chain, out / "chain.txt")
    save_estimator(gamma, out / "estimator.txt")
    write_decisions_csv(out / "decisions.csv", chain.decision_log)
    (out / "descriptor.txt").write_text(desc + "\n")
    write_eval_csv(out / "evaluation.csv", rows)
    write_curves_csv(out / "curves.csv", chain.curves)
    val_paths = write_sequence_csvs(out / "validation", val_gen.sequence,
                                    val_gen.ages)

    artifacts = {"chain": out / "chain.txt", "estimator": out / "estimator.txt",
                 "decisions": out / "decisions.csv",
                 "descriptor": out / "descriptor.txt",
                 "evaluation": out / "evaluation.csv",
                 "curves": out / "curves.csv"}
    artifacts.update({f"validation_{p.stem}": p for p in val_paths})
    write_manifest(out / "manifest.json", run, run.seed, artifacts)

    print(f"descriptor: {desc}")
    print(f"modules: {len(chain.modules)}  slots: {len(chain.slot_modules)}  "
          f"reuse_index: {chain.reuse_index}")
    for r in chain.decision_log:
        print(f"  iteration {r.iteration}: E={r.e_baseline:.4f} "
              f"E'={r.e_recycled:.4f} -> {r.winner}"
              + (f" [{r.guard}]" if r.guard else ""))
    print(f"artifacts in {out}")
    return 0


def cmd_eval(args) -> int:
    chain = load_chain(args.chain)
    est_path = args.estimator or Path(args.chain).parent / "estimator.txt"
    if not Path(est_path).exists():
        raise ValidationError(
            f"estimator file not found: {est_path} (pass --estimator)")
    gamma = load_estimator(est_path)
    seq = read_sequence_csvs(args.stages)
    rows = evaluate_chain(chain, seq, gamma)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "evaluation.csv"
    write_eval_csv(path, rows)
    print(f"wrote {len(rows)} rows to {path}")
    return 0


def cmd_inspect(args) -> int:
    chain = load_chain(args.chain)
    print(f"descriptor: {render_descriptor(descriptor(chain))}")
    print(f"stages: {chain.n_stages}  modules: {len(chain.modules)}  "
          f"reuse_index: {chain.reuse_index}")
    slots = " ".join(f"{j + 1}:{chain.module_name(m)}"
                     for j, m in enumerate(chain.slot_modules))
    print(f"slots: {slots}")
    print("decisions:")
    print(f"  {'iter':>4} {'E':>10} {'E_prime':>10} {'winner':>9} "
          f"{'guard':>14} {'a':>3}")
    for r in chain.decision_log:
        print(f"  {r.iteration:>4} {r.e_baseline:>10.4f} {r.e_recycled:>10.4f} "
              f"{r.winner:>9} {r.guard or '-':>14} {r.reuse_index_after:>3}")
    return 0


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the contract reserves 2 for
    validation failures, so usage problems exit 1 instead."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_override_flags(p) -> None:
    p.add_argument("--seed", type=int, default=None,
                   help="override the config seed")
    p.add_argument("--epsilon", type=float, default=None,
                   help="override the reuse threshold")
    p.add_argument("--steps", type=int, default=None,
                   help="override the training step budget")
    p.add_argument("--decision-mode", choices=("one_sided", "two_sided"),
                   default=None, help="override the reuse comparison")
    p.add_argument("--checkpoint-interval", type=int, default=None,
                   help="score a training-curve point every N steps (0 = off)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stagechain",
                     description="Train and compress chains of reversible "
                                 "stage-to-stage transformers.")
    parser.add_argument("--version", action="version",
                        version=f"stagechain {__version__}")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    g = sub.add_parser("generate", help="write synthetic stage CSVs")
    g.add_argument("--config", required=True, help="config JSON path")
    g.add_argument("--out-dir", default="out", help="output directory")
    _add_override_flags(g)
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("run", help="train a chain and write all reports")
    r.add_argument("--config", required=True, help="config JSON path")
    r.add_argument("--out-dir", default="out", help="output directory")
    _add_override_flags(r)
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("eval", help="evaluate a saved chain on stage CSVs")
    e.add_argument("chain", help="chain file from a run")
    e.add_argument("stages", nargs="+", help="validation stage CSV paths")
    e.add_argument("--estimator", default=None,
                   help="estimator file (default: alongside the chain)")
    e.add_argument("--out-dir", default=".", help="output directory")
    e.set_defaults(func=cmd_eval)

    i = sub.add_parser("inspect", help="print a chain's descriptor and log")
    i.add_argument("chain", help="chain file from a run")
    i.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, FormatError) as err:
        print(f"stagechain: {err}", file=sys.stderr)
        return 2
    except (TrainingError, StagechainError, OSError) as err:
        print(f"stagechain: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
