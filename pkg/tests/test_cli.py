import json

import pytest

from stagechain.cli import main
from stagechain.formats import (read_decisions_csv, read_eval_csv,
                                read_labels_csv, read_stage_csv)

SMALL_CONFIG = {
    "process": "linear_chain",
    "process_params": {"d": 8, "latent_dim": 4, "samples_per_stage": 96},
    "estimator_samples": 128,
    "validation_samples": 96,
    "run": {"steps": 250, "epsilon": 0.0, "seed": 0,
            "decision_mode": "two_sided"},
}


def run_cli(*argv):
    try:
        return main(list(argv))
    except SystemExit as err:
        return err.code


@pytest.fixture()
def config_path(tmp_path):
    p = tmp_path / "config.json"
    p.write_text(json.dumps(SMALL_CONFIG))
    return p


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    base = tmp_path_factory.mktemp("run")
    p = base / "config.json"
    p.write_text(json.dumps(SMALL_CONFIG))
    out = base / "out"
    assert main(["run", "--config", str(p), "--out-dir", str(out)]) == 0
    return out


class TestGenerate:
    def test_writes_stage_and_label_files(self, tmp_path, config_path):
        out = tmp_path / "data"
        assert run_cli("generate", "--config", str(config_path),
                       "--out-dir", str(out)) == 0
        stages = sorted(out.glob("stage_*.csv"))
        assert len(stages) == 6
        first = read_stage_csv(stages[0])
        assert first.n == 96 and first.dim == 8
        labels = read_labels_csv(out / "labels.csv")
        assert set(labels) == set(range(1, 7))
        assert (out / "manifest.json").exists()

    def test_same_seed_byte_identical(self, tmp_path, config_path):
        a, b = tmp_path / "a", tmp_path / "b"
        run_cli("generate", "--config", str(config_path), "--out-dir", str(a))
        run_cli("generate", "--config", str(config_path), "--out-dir", str(b))
        assert (a / "stage_3.csv").read_bytes() == (b / "stage_3.csv").read_bytes()
        assert (a / "labels.csv").read_bytes() == (b / "labels.csv").read_bytes()

    def test_seed_flag_changes_data(self, tmp_path, config_path):
        a, b = tmp_path / "a", tmp_path / "b"
        run_cli("generate", "--config", str(config_path), "--out-dir", str(a))
        run_cli("generate", "--config", str(config_path), "--out-dir", str(b),
                "--seed", "7")
        assert (a / "stage_1.csv").read_bytes() != (b / "stage_1.csv").read_bytes()

    def test_invalid_sample_count_exits_2(self, tmp_path, capsys):
        cfg = dict(SMALL_CONFIG,
                   process_params=dict(SMALL_CONFIG["process_params"],
                                       samples_per_stage=1))
        p = tmp_path / "config.json"
        p.write_text(json.dumps(cfg))
        assert run_cli("generate", "--config", str(p),
                       "--out-dir", str(tmp_path / "x")) == 2
        assert "2 samples" in capsys.readouterr().err


class TestRun:
    def test_artifacts_written(self, run_dir):
        for name in ("chain.txt", "estimator.txt", "decisions.csv",
                     "descriptor.txt", "evaluation.csv", "curves.csv",
                     "manifest.json"):
            assert (run_dir / name).exists(), name
        assert len(list((run_dir / "validation").glob("stage_*.csv"))) == 6
        desc = (run_dir / "descriptor.txt").read_text()
        assert desc.startswith("F") and desc.count("F_") == 5

    def test_decision_log_parses(self, run_dir):
        rows = read_decisions_csv(run_dir / "decisions.csv")
        assert [r.iteration for r in rows] == [2, 3, 4, 5]
        assert all(r.winner == "baseline" for r in rows)

    def test_rerun_byte_identical(self, run_dir, tmp_path):
        cfg = tmp_path / "config.json"
        cfg.write_text(json.dumps(SMALL_CONFIG))
        out2 = tmp_path / "out2"
        assert run_cli("run", "--config", str(cfg), "--out-dir", str(out2)) == 0
        for name in ("decisions.csv", "chain.txt", "evaluation.csv",
                     "descriptor.txt"):
            assert ((run_dir / name).read_bytes()
                    == (out2 / name).read_bytes()), name

    def test_decision_mode_flag_overrides_config(self, tmp_path, config_path):
        out = tmp_path / "out"
        assert run_cli("run", "--config", str(config_path), "--out-dir",
                       str(out), "--decision-mode", "one_sided",
                       "--epsilon", "1000") == 0
        rows = read_decisions_csv(out / "decisions.csv")
        assert all(r.decision_mode == "one_sided" for r in rows)
        assert all(r.epsilon == 1000.0 for r in rows)
        # inf-like epsilon turns every decision into a reuse win
        assert all(r.winner == "recycled" for r in rows)

    def test_diverging_rate_exits_3(self, tmp_path, capsys):
        cfg = dict(SMALL_CONFIG, run=dict(SMALL_CONFIG["run"],
                                          learning_rate=1e6))
        p = tmp_path / "config.json"
        p.write_text(json.dumps(cfg))
        assert run_cli("run", "--config", str(p),
                       "--out-dir", str(tmp_path / "x")) == 3
        err = capsys.readouterr().err
        assert "baseline_1" in err and "step" in err


class TestEval:
    def test_reproduces_run_evaluation(self, run_dir, tmp_path):
        stages = sorted(str(p) for p in (run_dir / "validation").glob("stage_*.csv"))
        out = tmp_path / "ev"
        assert run_cli("eval", str(run_dir / "chain.txt"), *stages,
                       "--out-dir", str(out)) == 0
        assert ((out / "evaluation.csv").read_bytes()
                == (run_dir / "evaluation.csv").read_bytes())
        rows = read_eval_csv(out / "evaluation.csv")
        assert len(rows) == 25

    def test_missing_estimator_exits_2(self, run_dir, tmp_path):
        lone = tmp_path / "chain.txt"
        lone.write_bytes((run_dir / "chain.txt").read_bytes())
        stage = str(next((run_dir / "validation").glob("stage_*.csv")))
        assert run_cli("eval", str(lone), stage) == 2

    def test_corrupt_chain_exits_2(self, run_dir, tmp_path, capsys):
        bad = tmp_path / "chain.txt"
        lines = (run_dir / "chain.txt").read_text().splitlines()
        cut = lines.index("[slots]")
        bad.write_text("\n".join(lines[:cut]) + "\n")
        stage = str(next((run_dir / "validation").glob("stage_*.csv")))
        assert run_cli("eval", str(bad), stage,
                       "--estimator", str(run_dir / "estimator.txt")) == 2
        assert "[slots]" in capsys.readouterr().err


class TestInspect:
    def test_prints_descriptor_and_log(self, run_dir, capsys):
        assert run_cli("inspect", str(run_dir / "chain.txt")) == 0
        out = capsys.readouterr().out
        assert "descriptor: F" in out
        assert "decisions:" in out
        assert " baseline" in out


class TestUsageAndErrors:
    def test_no_arguments_is_usage_error(self):
        assert run_cli() == 1

    def test_unknown_subcommand(self):
        assert run_cli("explode") == 1

    def test_missing_required_flag(self):
        assert run_cli("run") == 1

    def test_unknown_flag(self, config_path):
        assert run_cli("run", "--config", str(config_path), "--fast") == 1

    def test_invalid_json_exits_2(self, tmp_path):
        p = tmp_path / "config.json"
        p.write_text("{not json")
        assert run_cli("generate", "--config", str(p),
                       "--out-dir", str(tmp_path / "x")) == 2

    def test_unknown_process_exits_2(self, tmp_path, capsys):
        p = tmp_path / "config.json"
        p.write_text(json.dumps(dict(SMALL_CONFIG, process="quadratic")))
        assert run_cli("run", "--config", str(p),
                       "--out-dir", str(tmp_path / "x")) == 2
        assert "quadratic" in capsys.readouterr().err

    def test_unknown_config_key_exits_2(self, tmp_path):
        p = tmp_path / "config.json"
        p.write_text(json.dumps(dict(SMALL_CONFIG, pasta="carbonara")))
        assert run_cli("run", "--config", str(p),
                       "--out-dir", str(tmp_path / "x")) == 2

    def test_unknown_run_field_exits_2(self, tmp_path):
        p = tmp_path / "config.json"
        p.write_text(json.dumps(dict(SMALL_CONFIG,
                                     run=dict(SMALL_CONFIG["run"], warp=2))))
        assert run_cli("run", "--config", str(p),
                       "--out-dir", str(tmp_path / "x")) == 2
