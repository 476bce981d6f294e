import os
import re

import numpy as np
import pytest

from gravel.checkpoint import load_checkpoint, save_checkpoint
from gravel.cli import main as cli_main
from gravel.config import parse_config
from gravel.data import convert_for_benchmark, generate_synthetic, read_dataset
from gravel.experiment import (
    RESULTS_NAME_RE,
    ExperimentError,
    ResultRow,
    ResultsFile,
    read_results_file,
    report_table,
    run_experiment,
)

CONFIG_TEMPLATE = """\
experiment:
  backend: pytorch
  data_config:
    strategy: fixed
    train_path: data/{{0}}/train_elliot.tsv
    test_path: data/{{0}}/test_elliot.tsv
  dataset: blocks
  models:
{models}
"""

MFBPR_BLOCK = """\
    MFBPR:
      meta:
        hyper_opt_alg: grid
        save_weights: {save_weights}
        validation_rate: 4
        validation_metric: Recall@20
      lr: 0.02
      epochs: 8
      factors: 16
      batch_size: 64
      max_steps: 300
      seed: 42
"""

ITEMFILTER_BLOCK = """\
    ItemFilter:
      meta:
        hyper_opt_alg: grid
      smoothing: 0.5
"""


@pytest.fixture
def workspace(tmp_path):
    ds = generate_synthetic(40, 60, 4, 0.5, 0.02, 0.25, seed=7)
    data_dir = tmp_path / "data" / "blocks"
    convert_for_benchmark(ds, data_dir)
    return tmp_path, ds


def build_config(models, **fmt):
    fmt.setdefault("save_weights", "False")
    return parse_config(CONFIG_TEMPLATE.format(models="".join(models).format(**fmt)))


class TestRunExperiment:
    def test_training_free_only_run(self, workspace):
        tmp_path, _ = workspace
        config = build_config([ITEMFILTER_BLOCK])
        run = run_experiment(config, data_root=tmp_path, results_root=tmp_path / "results")
        assert len(run.results.rows) == 1
        assert run.results.rows[0].model == "ItemFilter"
        assert run.log_paths == []  # no training log for a training-free model
        assert RESULTS_NAME_RE.search(run.results.path.name)
        assert run.results.path.parent == tmp_path / "results" / "blocks" / "performance"

    def test_results_file_layout_and_reader(self, workspace):
        tmp_path, _ = workspace
        config = build_config([ITEMFILTER_BLOCK, MFBPR_BLOCK])
        run = run_experiment(config, data_root=tmp_path, results_root=tmp_path / "results")
        loaded = read_results_file(run.results.path)
        assert loaded.dataset == "blocks"
        assert [r.model for r in loaded.rows] == ["ItemFilter", "MFBPR"]
        for row in loaded.rows:
            assert 0.0 <= row.recall <= 1.0 and 0.0 <= row.ndcg <= 1.0

    def test_deterministic_reruns_byte_identical(self, workspace):
        tmp_path, _ = workspace
        contents, weights = [], []
        for run_dir in ("r1", "r2"):
            config = build_config([MFBPR_BLOCK], save_weights="True")
            run = run_experiment(config, data_root=tmp_path,
                                 results_root=tmp_path / run_dir, now=1_700_000_000)
            contents.append(run.results.path.read_bytes())
            weights.append(run.weight_paths[0].read_bytes())
        assert contents[0] == contents[1]
        assert weights[0] == weights[1]

    def test_run_touches_nothing_outside_results_root(self, workspace):
        tmp_path, _ = workspace
        before = {p for p in tmp_path.rglob("*") if p.is_file()}
        config = build_config([MFBPR_BLOCK], save_weights="True")
        results_root = tmp_path / "results"
        run_experiment(config, data_root=tmp_path, results_root=results_root)
        after = {p for p in tmp_path.rglob("*") if p.is_file()}
        for new_file in after - before:
            assert results_root in new_file.parents

    def test_grid_search_selects_best_point(self, workspace):
        tmp_path, _ = workspace
        grid_block = MFBPR_BLOCK.replace("lr: 0.02", "lr: [0.0000001, 0.02]")
        config = build_config([grid_block])
        run = run_experiment(config, data_root=tmp_path, results_root=tmp_path / "results")
        assert len(run.results.rows) == 1  # one row per model, best grid point
        assert len(run.log_paths) == 2     # but every grid point leaves a log
        # the near-zero learning rate cannot beat the tuned one
        logs = sorted(p.name for p in run.log_paths)
        assert logs == ["MFBPR_grid0.tsv", "MFBPR_grid1.tsv"]

    def test_model_failure_aborts_with_partial_results(self, workspace):
        tmp_path, _ = workspace
        broken = (
            "    external.ContextGNN:\n"
            "      meta:\n"
            "        hyper_opt_alg: grid\n"
            "      q_warm_start: missing.grvl\n"
            "      factors: 8\n"
            "      n_layers: 2\n"
            "      neigh: (4,4)\n"
            "      max_steps: 5\n"
        )
        config = build_config([ITEMFILTER_BLOCK, broken])
        with pytest.raises(ExperimentError, match="partial results"):
            run_experiment(config, data_root=tmp_path, results_root=tmp_path / "results")
        perf = list((tmp_path / "results" / "blocks" / "performance").glob("*.tsv"))
        assert len(perf) == 1
        partial = read_results_file(perf[0])
        assert [r.model for r in partial.rows] == ["ItemFilter"]

    def test_env_var_overrides_results_root(self, workspace, monkeypatch):
        tmp_path, _ = workspace
        override = tmp_path / "elsewhere"
        monkeypatch.setenv("GRAVEL_RESULTS_ROOT", str(override))
        config = build_config([ITEMFILTER_BLOCK])
        run = run_experiment(config, data_root=tmp_path, results_root=tmp_path / "ignored")
        assert override in run.results.path.parents

    def test_q_warm_start_from_checkpoint(self, workspace):
        tmp_path, ds = workspace
        warm_q = np.full((ds.num_items, 8), 0.25)
        warm_path = tmp_path / "warm.grvl"
        save_checkpoint(warm_path, {"P": np.zeros((ds.num_users, 8)), "Q": warm_q})
        block = (
            "    external.ContextGNN:\n"
            "      meta:\n"
            "        hyper_opt_alg: grid\n"
            "        save_weights: True\n"
            "        validation_rate: 10\n"
            "        validation_metric: Recall@20\n"
            f"      q_warm_start: '{warm_path}'\n"
            "      factors: 8\n"
            "      n_layers: 2\n"
            "      neigh: (4,4)\n"
            "      lr: 0.0000001\n"
            "      epochs: 1\n"
            "      batch_size: 64\n"
            "      max_steps: 1\n"
            "      seed: 42\n"
        )
        config = build_config([block])
        run = run_experiment(config, data_root=tmp_path, results_root=tmp_path / "results")
        stored = load_checkpoint(run.weight_paths[0])
        # one tiny step at lr 1e-7 barely moves Q off of the warm start
        assert np.allclose(stored["Q"], warm_q, atol=1e-5)
        assert not np.allclose(stored["user_emb"], 0.25)


class TestReportTable:
    def test_single_model_single_dataset(self):
        rf = ResultsFile(path="x", dataset="gowalla",
                         rows=[ResultRow("external.ContextGNN", 0.1712, 0.1285)])
        table = report_table([rf])
        assert "| Model | gowalla Recall | gowalla nDCG |" in table
        assert "**0.1712**" in table and "**0.1285**" in table

    def test_best_bold_second_underlined(self):
        rf = ResultsFile(path="x", dataset="d", rows=[
            ResultRow("A", 0.2, 0.05),
            ResultRow("B", 0.1, 0.15),
            ResultRow("C", 0.05, 0.01),
        ])
        table = report_table([rf])
        row_a = next(line for line in table.splitlines() if line.startswith("| A"))
        row_b = next(line for line in table.splitlines() if line.startswith("| B"))
        row_c = next(line for line in table.splitlines() if line.startswith("| C"))
        assert "**0.2000**" in row_a and "<u>0.0500</u>" in row_a
        assert "<u>0.1000</u>" in row_b and "**0.1500**" in row_b
        assert "0.0500" in row_c and "**0.0100**" not in row_c

    def test_missing_cells_render_dashes(self):
        rf1 = ResultsFile(path="x", dataset="d1", rows=[ResultRow("A", 0.2, 0.1),
                                                        ResultRow("B", 0.1, 0.05)])
        rf2 = ResultsFile(path="y", dataset="d2", rows=[ResultRow("B", 0.3, 0.2)])
        table = report_table([rf1, rf2])
        row_a = next(line for line in table.splitlines() if line.startswith("| A"))
        assert row_a.rstrip().endswith("--- |")

    def test_requires_input(self):
        with pytest.raises(ValueError):
            report_table([])


class TestCli:
    def test_full_pipeline(self, tmp_path, capsys, monkeypatch):
        monkeypatch.chdir(tmp_path)
        # 1) synthesize a dataset directory
        assert cli_main(["synth", "--users", "40", "--items", "60", "--seed", "7",
                         "--out", "data/blocks", "--blocks", "4",
                         "--in-block-density", "0.5", "--cross-density", "0.02",
                         "--test-fraction", "0.25"]) == 0
        assert read_dataset(tmp_path / "data" / "blocks").num_users == 40
        # 2) convert it for the benchmark stack
        assert cli_main(["convert", "--dataset", "data/blocks"]) == 0
        assert (tmp_path / "data" / "blocks" / "train_elliot.tsv").exists()
        # 3) run a config
        config_text = CONFIG_TEMPLATE.format(models=ITEMFILTER_BLOCK)
        (tmp_path / "experiment.yml").write_text(config_text)
        assert cli_main(["run", "--config", "experiment.yml",
                         "--data-root", str(tmp_path),
                         "--results-root", "results"]) == 0
        out = capsys.readouterr().out
        assert "results written to" in out and "ItemFilter" in out
        # 4) report on the results glob
        assert cli_main(["report", "--results", "results/*/performance/*.tsv"]) == 0
        table = capsys.readouterr().out
        assert "| Model | blocks Recall | blocks nDCG |" in table

    def test_run_model_filter_and_dataset_override(self, tmp_path, capsys, monkeypatch):
        monkeypatch.chdir(tmp_path)
        ds = generate_synthetic(30, 40, 2, 0.5, 0.02, 0.25, seed=3)
        convert_for_benchmark(ds, tmp_path / "data" / "other")
        config_text = CONFIG_TEMPLATE.format(models=ITEMFILTER_BLOCK + MFBPR_BLOCK.format(save_weights="False"))
        (tmp_path / "experiment.yml").write_text(config_text)
        code = cli_main(["run", "--config", "experiment.yml", "--dataset", "other",
                         "--model", "ItemFilter", "--data-root", str(tmp_path),
                         "--results-root", "results"])
        assert code == 0
        out = capsys.readouterr().out
        assert "ItemFilter" in out and "MFBPR" not in out

    def test_config_error_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.yml"
        bad.write_text("experiment:\n  dataset: x\n  models:\n    Unknown:\n      lr: 1\n")
        assert cli_main(["run", "--config", str(bad)]) == 2
        assert "config error" in capsys.readouterr().err

    def test_invalid_hyperparameter_value_is_config_error(self, workspace, monkeypatch):
        tmp_path, _ = workspace
        monkeypatch.chdir(tmp_path)
        bad_lr = MFBPR_BLOCK.format(save_weights="False").replace("lr: 0.02", "lr: -1.0")
        (tmp_path / "experiment.yml").write_text(CONFIG_TEMPLATE.format(models=bad_lr))
        assert cli_main(["run", "--config", "experiment.yml",
                         "--data-root", str(tmp_path)]) == 2

    def test_unknown_model_flag_is_config_error(self, tmp_path, capsys):
        (tmp_path / "ok.yml").write_text(CONFIG_TEMPLATE.format(models=ITEMFILTER_BLOCK))
        assert cli_main(["run", "--config", str(tmp_path / "ok.yml"),
                         "--model", "Nonexistent"]) == 2

    def test_data_error_exit_code(self, tmp_path, capsys):
        (tmp_path / "ok.yml").write_text(CONFIG_TEMPLATE.format(models=ITEMFILTER_BLOCK))
        assert cli_main(["run", "--config", str(tmp_path / "ok.yml"),
                         "--data-root", str(tmp_path)]) == 3
        assert "data error" in capsys.readouterr().err

    def test_missing_config_is_data_error(self, tmp_path):
        assert cli_main(["run", "--config", str(tmp_path / "nope.yml")]) == 3

    def test_runtime_error_exit_code(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        ds = generate_synthetic(20, 30, 2, 0.5, 0.02, 0.25, seed=3)
        convert_for_benchmark(ds, tmp_path / "data" / "blocks")
        broken = (
            "    external.ContextGNN:\n"
            "      meta:\n"
            "        hyper_opt_alg: grid\n"
            "      q_warm_start: missing.grvl\n"
            "      factors: 8\n"
            "      n_layers: 2\n"
            "      neigh: (4,4)\n"
        )
        (tmp_path / "experiment.yml").write_text(CONFIG_TEMPLATE.format(models=broken))
        assert cli_main(["run", "--config", "experiment.yml",
                         "--data-root", str(tmp_path)]) == 4

    def test_report_glob_without_matches(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        assert cli_main(["report", "--results", "nothing/*.tsv"]) == 3
