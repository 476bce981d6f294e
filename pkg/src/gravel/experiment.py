"""Config-driven experiment runner and results reporting.

A run resolves the configured split files, trains every model over its
hyperparameter grid, evaluates at the default cutoff of 20 and writes one
results row per model (its best grid point by the validation metric) to
`<results_root>/<dataset>/performance/rec_cutoff_20_relthreshold_0_<datetime>.tsv`.
Training logs and optional weight checkpoints stay inside results_root.
"""

from __future__ import annotations

import os
import re
import time
from dataclasses import dataclass
from pathlib import Path

from .checkpoint import save_checkpoint
from .config import ConfigError, ExperimentConfig, expand_grid
from .data import DataError, read_elliot_split
from .evaluation import evaluate, parse_metric_tag
from .graph import build_graph
from .training import TrainConfig, make_model, train

__all__ = [
    "ExperimentError",
    "ResultRow",
    "ResultsFile",
    "ExperimentRun",
    "RESULTS_NAME_RE",
    "RESULTS_ROOT_ENV",
    "train_config_from",
    "run_experiment",
    "read_results_file",
    "write_results_file",
    "report_table",
]

RESULTS_NAME_RE = re.compile(r"rec_cutoff_20_relthreshold_0_\d{8}_\d{6}\.tsv$")
RESULTS_ROOT_ENV = "GRAVEL_RESULTS_ROOT"
REPORT_CUTOFF = 20


class ExperimentError(RuntimeError):
    pass


@dataclass
class ResultRow:
    model: str
    recall: float
    ndcg: float


@dataclass
class ResultsFile:
    path: Path
    dataset: str
    rows: list


@dataclass
class ExperimentRun:
    results: ResultsFile
    log_paths: list
    weight_paths: list


def train_config_from(hyperparams, meta):
    """Build a TrainConfig from one concrete grid point plus the meta block."""
    hp = dict(hyperparams)
    factors = hp.pop("factors", None)
    channels = hp.pop("channels", None)
    d = factors if factors is not None else channels
    kwargs = {}
    for name in ("lr", "epochs", "batch_size", "max_steps", "seed", "n_layers"):
        if name in hp:
            kwargs[name] = hp.pop(name)
    if "aggr" in hp:
        kwargs["aggr"] = hp.pop("aggr")
    if "neigh" in hp:
        kwargs["neigh"] = tuple(hp.pop("neigh"))
    if d is not None:
        kwargs["factors"] = int(d)
    config = TrainConfig(
        validation_rate=int(meta.validation_rate),
        validation_metric=str(meta.validation_metric),
        **kwargs,
    )
    try:
        config.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return config, hp  # hp keeps model-specific extras


def _resolve_path(template, dataset_name, data_root):
    path = Path(str(template).format(dataset_name))
    if not path.is_absolute():
        path = Path(os.path.normpath(os.path.join(data_root, path)))
    return path


def _model_extras(tag, leftover):
    extras = dict(leftover)
    if tag == "external.ContextGNN" and extras.get("q_warm_start"):
        from .checkpoint import load_checkpoint

        warm = load_checkpoint(extras.pop("q_warm_start"))
        if "Q" not in warm:
            raise ExperimentError("warm-start checkpoint has no tensor named 'Q'")
        extras["q_init"] = warm["Q"]
    return extras


def run_experiment(config, data_root=".", results_root="results", now=None):
    """Execute every configured model; returns the written results bundle.

    The GRAVEL_RESULTS_ROOT environment variable overrides `results_root`.
    Relative split paths resolve against `data_root` after substituting the
    dataset name for `{0}`. Any model failure aborts the run with a partial
    results file already on disk.
    """
    results_root = Path(os.environ.get(RESULTS_ROOT_ENV) or results_root)
    dataset_name = config.dataset
    train_path = _resolve_path(config.data_config.train_path, dataset_name, data_root)
    test_path = _resolve_path(config.data_config.test_path, dataset_name, data_root)
    val_path = (_resolve_path(config.data_config.val_path, dataset_name, data_root)
                if config.data_config.val_path else None)
    for p in (train_path, test_path):
        if not p.exists():
            raise DataError(p, 1, "split file does not exist")
    # fail on bad hyperparameters before any training or file output
    for spec in config.models:
        for point in expand_grid(spec):
            if spec.tag != "ItemFilter":
                train_config_from(point, spec.meta)
    dataset = read_elliot_split(train_path, test_path, val_path)

    log_dir = results_root / dataset_name / "logs"
    weight_dir = results_root / dataset_name / "weights"
    rows, log_paths, weight_paths = [], [], []
    failure = None

    for spec in config.models:
        try:
            row, spec_logs, spec_weights = _run_model(
                spec, dataset, log_dir, weight_dir)
        except Exception as exc:  # noqa: BLE001 - converted to a typed abort below
            failure = (spec.tag, exc)
            break
        rows.append(row)
        log_paths.extend(spec_logs)
        weight_paths.extend(spec_weights)

    stamp = time.strftime("%Y%m%d_%H%M%S", time.localtime(now if now is not None else time.time()))
    perf_dir = results_root / dataset_name / "performance"
    results_path = perf_dir / f"rec_cutoff_20_relthreshold_0_{stamp}.tsv"
    results = ResultsFile(path=results_path, dataset=dataset_name, rows=rows)
    write_results_file(results_path, rows)

    if failure is not None:
        tag, exc = failure
        raise ExperimentError(
            f"model {tag} failed ({exc}); partial results written to {results_path}"
        ) from exc
    return ExperimentRun(results=results, log_paths=log_paths, weight_paths=weight_paths)


def _run_model(spec, dataset, log_dir, weight_dir):
    metric_name, metric_k = parse_metric_tag(spec.meta.validation_metric)
    best = None  # (selection value, report, model, grid index)
    log_paths = []
    for gi, point in enumerate(expand_grid(spec)):
        tc, leftover = train_config_from(point, spec.meta)
        extras = _model_extras(spec.tag, leftover)
        if spec.tag == "ItemFilter":
            graph = build_graph(dataset, "train")
            model = make_model(spec.tag, dataset, graph, tc, extras)
            selection = _metric_value(
                evaluate(model.scores_for_user, dataset, K=metric_k), metric_name)
        else:
            result = train(spec.tag, dataset, tc, extras)
            model = result.model
            selection = result.best_metric
            log_dir.mkdir(parents=True, exist_ok=True)
            log_path = log_dir / f"{spec.tag}_grid{gi}.tsv"
            result.log.to_tsv(log_path)
            log_paths.append(log_path)
        if best is None or selection > best[0]:
            report = evaluate(model.scores_for_user, dataset, K=REPORT_CUTOFF)
            best = (selection, report, model, gi)

    _, report, model, _ = best
    row = ResultRow(model=spec.tag, recall=report.recall, ndcg=report.ndcg)
    weight_paths = []
    if spec.meta.save_weights and hasattr(model, "named_tensors"):
        weight_dir.mkdir(parents=True, exist_ok=True)
        wpath = weight_dir / f"{spec.tag}.grvl"
        save_checkpoint(wpath, {k: t.values for k, t in model.named_tensors().items()})
        weight_paths.append(wpath)
    return row, log_paths, weight_paths


def _metric_value(report, metric_name):
    return report.recall if metric_name == "recall" else report.ndcg


# ----------------------------------------------------------------------
# results files and the summary table
# ----------------------------------------------------------------------

def write_results_file(path, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("model\tRecall@20\tnDCG@20\n")
        for row in rows:
            fh.write(f"{row.model}\t{row.recall:.4f}\t{row.ndcg:.4f}\n")


def read_results_file(path, dataset=None):
    """Read a results file; the dataset defaults to the grandparent directory
    name (results/<dataset>/performance/<file> layout)."""
    path = Path(path)
    if dataset is None:
        dataset = path.parent.parent.name if path.parent.name == "performance" else path.stem
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        lines = [ln.rstrip("\r\n") for ln in fh]
    for lineno, line in enumerate(lines, start=1):
        if lineno == 1 or not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise DataError(path, lineno, f"expected 3 fields, got {len(parts)}")
        rows.append(ResultRow(model=parts[0], recall=float(parts[1]), ndcg=float(parts[2])))
    return ResultsFile(path=path, dataset=dataset, rows=rows)


def _decorate(values):
    """Map column values to markdown decorations: best bold, runner-up underlined."""
    present = sorted({v for v in values if v is not None}, reverse=True)
    best = present[0] if present else None
    second = present[1] if len(present) > 1 else None
    marks = {}
    if best is not None:
        marks[best] = ("**", "**")
    if second is not None:
        marks[second] = ("<u>", "</u>")
    return marks


def report_table(results_files):
    """Summary table: models x (Recall, nDCG) per dataset, markdown formatted.

    The best value per column is bold and the second best underlined;
    missing model/dataset cells render as ---.
    """
    if not results_files:
        raise ValueError("need at least one results file")
    files = [rf if isinstance(rf, ResultsFile) else read_results_file(rf)
             for rf in results_files]
    datasets = []
    for rf in files:
        if rf.dataset not in datasets:
            datasets.append(rf.dataset)
    models = []
    for rf in files:
        for row in rf.rows:
            if row.model not in models:
                models.append(row.model)
    cell = {}
    for rf in files:
        for row in rf.rows:
            cell[(row.model, rf.dataset)] = (row.recall, row.ndcg)

    header = ["Model"]
    for ds in datasets:
        header += [f"{ds} Recall", f"{ds} nDCG"]
    lines = ["| " + " | ".join(header) + " |",
             "|" + "---|" * len(header)]

    marks = {}
    for ds in datasets:
        for j, name in enumerate(("recall", "ndcg")):
            values = [cell.get((m, ds), (None, None))[j] for m in models]
            marks[(ds, name)] = _decorate(values)

    for m in models:
        fields = [m]
        for ds in datasets:
            pair = cell.get((m, ds))
            for j, name in enumerate(("recall", "ndcg")):
                if pair is None:
                    fields.append("---")
                    continue
                value = pair[j]
                pre, post = marks[(ds, name)].get(value, ("", ""))
                fields.append(f"{pre}{value:.4f}{post}")
        lines.append("| " + " | ".join(fields) + " |")
    return "\n".join(lines) + "\n"
