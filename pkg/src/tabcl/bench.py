"""Full-pipeline experiments and the speed/accuracy trade-off.

The trade-off score of a model is its task metric per training second:
``P / t`` for classification (higher F1 is better) and ``(1 / P) / t`` for
regression (lower RMSE is better).  ``run_experiment`` drives the whole
pipeline on one CSV: ingest, OOD detection and split, timed contrastive
training, embedding, head fitting, and evaluation on the ID-test and OOD
portions.  Only the unsupervised training time enters the trade-off; the
other stages are recorded separately.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import ood as ood_mod
from .contrastive import TclConfig, embed, parameter_count, save_model, train_tcl
from .data import CLASSIFICATION, Dataset, ingest_csv, save_split, split
from .exceptions import ConfigError, FormatError
from .heads import (
    HeadConfig,
    fit_linear,
    fit_logistic,
    metric_f1_macro,
    metric_rmse,
    predict,
)
from .numerics import RngStream
from .ood import (
    OPENMAX,
    TEMPERATURE,
    fit_openmax,
    fit_temperature,
    openmax_score,
    score_histogram,
    split_by_threshold,
    temp_score,
    train_backbone,
    validate_split,
    write_histogram_csv,
)

DETECTOR_KEYS = {"detector", "norm", "tail", "bins", "threshold", "quantile", "seed"}
DISCRETIZE_BINS = 10  # detection-only quantile bins for regression targets


def tradeoff(p: float, t: float, task: str) -> float:
    """Speed/accuracy trade-off: P/t for classification, (1/P)/t for regression."""
    if t <= 0:
        raise ValueError(f"training time must be positive, got {t}")
    if task == CLASSIFICATION:
        return p / t
    if task == "regression":
        if p <= 0:
            raise ValueError(f"regression metric must be positive, got {p}")
        return (1.0 / p) / t
    raise ValueError(f"unknown task: {task!r}")


@dataclass
class ExperimentPlan:
    """Everything needed to re-run one experiment deterministically."""

    dataset: str
    target: str
    task: str | None = None
    model_name: str = "tcl"
    detector: dict = field(default_factory=dict)
    tcl: dict = field(default_factory=dict)
    head: str | None = None  # "logistic" | "linear"; default picked by task
    seed: int = 0
    out_dir: str = "out"
    delta: float | None = None  # declared OOD degradation budget (recorded only)
    fractions: tuple[float, float] = (0.8, 0.2)

    def __post_init__(self):
        unknown = set(self.detector) - DETECTOR_KEYS
        if unknown:
            raise ConfigError(f"unknown detector config keys: {sorted(unknown)}")
        name = self.detector.get("detector", OPENMAX)
        if name not in (OPENMAX, TEMPERATURE):
            raise ConfigError(f"unknown detector: {name!r}")
        if "threshold" in self.detector and "quantile" in self.detector:
            raise ConfigError("give either a threshold or a quantile, not both")

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "target": self.target,
            "task": self.task,
            "model_name": self.model_name,
            "detector": dict(self.detector),
            "tcl": dict(self.tcl),
            "head": self.head,
            "seed": self.seed,
            "out_dir": self.out_dir,
            "delta": self.delta,
            "fractions": list(self.fractions),
        }

    @staticmethod
    def from_dict(d: dict) -> "ExperimentPlan":
        d = dict(d)
        if "fractions" in d:
            d["fractions"] = tuple(d["fractions"])
        try:
            return ExperimentPlan(**d)
        except TypeError as exc:
            raise ConfigError(f"malformed experiment plan: {exc}") from exc

    @staticmethod
    def from_file(path) -> "ExperimentPlan":
        try:
            text = open(path, "r", encoding="utf-8").read()
        except OSError as exc:
            raise ConfigError(f"cannot read plan {path}: {exc}") from exc
        if str(path).endswith(".toml"):
            try:
                import tomllib  # py3.11+
            except ImportError:  # pragma: no cover
                try:
                    import tomli as tomllib
                except ImportError:
                    raise ConfigError("TOML plans need Python 3.11+ or the tomli package")
            try:
                doc = tomllib.loads(text)
            except Exception as exc:
                raise ConfigError(f"{path}: bad TOML: {exc}") from exc
        else:
            try:
                doc = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: bad JSON: {exc}") from exc
        return ExperimentPlan.from_dict(doc)


@dataclass
class BenchReport:
    """One experiment's outcome: task metric P, training seconds t, trade-off
    T, the split validation grid, and the recorded constraint fields."""

    model: str
    dataset: str
    task: str
    metric_name: str
    p: float
    t_seconds: float
    tradeoff: float
    split_grid: dict  # four-cell validation grid + split settings
    constraints: dict  # recorded budget fields, never enforced
    stage_seconds: dict
    detector: str
    norm: str
    threshold: float
    m: int
    n: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "dataset": self.dataset,
            "task": self.task,
            "metric_name": self.metric_name,
            "p": self.p,
            "t_seconds": self.t_seconds,
            "tradeoff": self.tradeoff,
            "split_grid": dict(self.split_grid),
            "constraints": dict(self.constraints),
            "stage_seconds": dict(self.stage_seconds),
            "detector": self.detector,
            "norm": self.norm,
            "threshold": self.threshold,
            "m": self.m,
            "n": self.n,
            "seed": self.seed,
        }

    @staticmethod
    def from_dict(d: dict) -> "BenchReport":
        try:
            return BenchReport(**d)
        except TypeError as exc:
            raise FormatError(f"malformed report: {exc}") from exc

    @staticmethod
    def from_file(path) -> "BenchReport":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                return BenchReport.from_dict(json.load(fh))
        except OSError as exc:
            raise FormatError(f"cannot read report {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: corrupt report: {exc}") from exc

    def split_signature(self) -> tuple:
        return (self.dataset, self.detector, self.norm, round(self.threshold, 12),
                self.m, self.n)


class _Stage:
    """Context that prefixes any stage failure with the stage name and
    records its wall-clock time."""

    def __init__(self, name: str, clock: dict):
        self.name = name
        self.clock = clock

    def __enter__(self):
        self._start = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        self.clock[self.name] = time.perf_counter() - self._start
        if exc is not None and isinstance(exc, Exception):
            try:
                wrapped = type(exc)(f"[stage={self.name}] {exc}")
            except TypeError:  # exception with a non-trivial constructor
                return False
            raise wrapped from exc
        return False


def _detector_scores(dataset: Dataset, det: dict, seed: int, out_dir: str):
    """Train the backbone, fit the configured detector, score every row."""
    name = det.get("detector", OPENMAX)
    norm = det.get("norm", "l2")
    tail = int(det.get("tail", 20))
    bins = int(det.get("bins", 50))
    det_seed = int(det.get("seed", seed))

    if dataset.schema.task == CLASSIFICATION:
        det_data = dataset
    else:
        labels = ood_mod.discretize_target(dataset.labels, DISCRETIZE_BINS)
        det_data = _with_class_labels(dataset, labels, DISCRETIZE_BINS)

    if name == OPENMAX:
        backbone = train_backbone(det_data)
        model = fit_openmax(backbone, det_data, norm=norm, tail=tail)
        scores = openmax_score(model, det_data.features)
    else:
        fit_part, cal_part = split(det_data, (0.8, 0.2), RngStream(det_seed, 11))
        backbone = train_backbone(fit_part)
        model = fit_temperature(backbone, cal_part)
        scores = temp_score(model, det_data.features)
        norm = "none"

    hist = score_histogram(scores, bins=bins)
    write_histogram_csv(hist, os.path.join(out_dir, "histogram.csv"))
    return np.asarray(scores), name, norm, det_seed


def _with_class_labels(dataset: Dataset, labels: np.ndarray, n_classes: int) -> Dataset:
    """Detection-only view of a regression dataset with discretized labels."""
    from .data import Schema

    schema = Schema(
        dataset.schema.features,
        dataset.schema.target,
        CLASSIFICATION,
        tuple(str(i) for i in range(n_classes)),
    )
    return Dataset(dataset.features, labels, schema, dataset.stats)


def resolve_threshold(scores: np.ndarray, det: dict) -> float:
    """Explicit threshold if configured, else a quantile of the scores
    (default: the 95th percentile)."""
    if "threshold" in det:
        return float(det["threshold"])
    q = float(det.get("quantile", 0.95))
    if not 0.0 < q < 1.0:
        raise ConfigError(f"quantile must lie in (0, 1), got {q}")
    return float(np.quantile(scores, q))


def _estimate_memory_bytes(n_params: int, batch: int, d: int, h: int, k: int) -> int:
    # parameters + gradients + two Adam moments, plus the live batch
    # activations for both views; an estimate, not a measurement
    return 8 * (4 * n_params + 2 * batch * (3 * d + 4 * h + 2 * k))


def run_experiment(plan: ExperimentPlan) -> BenchReport:
    """Execute a plan end to end and write all artifacts to its out_dir.

    Stage order: ingest -> detect -> split -> train (timed) -> embed ->
    fit-head -> evaluate.  Any failure is re-raised with the stage name;
    artifacts written before the failure are kept for debugging.
    """
    os.makedirs(plan.out_dir, exist_ok=True)
    clock: dict[str, float] = {}

    with _Stage("ingest", clock):
        dataset = ingest_csv(plan.dataset, target=plan.target, task=plan.task)
        task = dataset.schema.task

    with _Stage("detect", clock):
        scores, det_name, det_norm, det_seed = _detector_scores(
            dataset, plan.detector, plan.seed, plan.out_dir
        )
        threshold = resolve_threshold(scores, plan.detector)

    with _Stage("split", clock):
        pair = split_by_threshold(
            dataset, scores, threshold, detector=det_name, norm=det_norm, seed=det_seed
        )
        save_split(pair, os.path.join(plan.out_dir, "split"))
        grid = validate_split(pair, RngStream(plan.seed, 21), plan.fractions)
        id_train, id_test = split(pair.d_in, plan.fractions, RngStream(plan.seed, 22))

    with _Stage("train", clock):
        tcl_cfg = TclConfig(input_dim=dataset.d, seed=plan.seed, **plan.tcl)
        model, trace = train_tcl(id_train, tcl_cfg)
        save_model(model, os.path.join(plan.out_dir, "model.json"))
        with open(os.path.join(plan.out_dir, "trace.json"), "w", encoding="utf-8") as fh:
            json.dump(
                {
                    "total": trace.total,
                    "reconstruction": trace.reconstruction,
                    "contrastive": trace.contrastive,
                    "distance": trace.distance,
                    "seconds": trace.seconds,
                    "epochs": trace.epochs,
                    "stop_reason": trace.stop_reason,
                },
                fh,
                indent=1,
            )

    with _Stage("embed", clock):
        e_train = embed(model, id_train.features)
        e_test = embed(model, id_test.features)
        e_ood = embed(model, pair.d_ood.features)

    head_kind = plan.head or ("logistic" if task == CLASSIFICATION else "linear")
    with _Stage("fit-head", clock):
        if head_kind == "logistic":
            head = fit_logistic(e_train, id_train.labels, HeadConfig(seed=plan.seed))
        elif head_kind == "linear":
            head = fit_linear(e_train, id_train.labels)
        else:
            raise ConfigError(f"unknown head kind: {head_kind!r}")

    with _Stage("evaluate", clock):
        t0 = time.perf_counter()
        pred_test = predict(head, e_test)
        t_inference = time.perf_counter() - t0
        pred_ood = predict(head, e_ood)
        if task == CLASSIFICATION:
            metric_name = "f1_macro"
            p = metric_f1_macro(id_test.labels, pred_test)
            p_ood = metric_f1_macro(pair.d_ood.labels, pred_ood)
        else:
            metric_name = "rmse"
            p = metric_rmse(id_test.labels, pred_test)
            p_ood = metric_rmse(pair.d_ood.labels, pred_ood)

    t_train = trace.seconds
    n_params = parameter_count(model)
    report = BenchReport(
        model=plan.model_name,
        dataset=plan.dataset,
        task=task,
        metric_name=metric_name,
        p=p,
        t_seconds=t_train,
        tradeoff=tradeoff(p, t_train, task),
        split_grid=grid.to_dict(),
        constraints={
            "t_train_seconds": t_train,
            "memory_estimate_bytes": _estimate_memory_bytes(
                n_params, min(tcl_cfg.batch_size, id_train.n), dataset.d,
                tcl_cfg.hidden_dim, tcl_cfg.latent_dim
            ),
            "parameter_count": n_params,
            "t_inference_seconds": t_inference,
            "ood_degradation": p - p_ood if task == CLASSIFICATION else p_ood - p,
            "ood_metric": p_ood,
            "delta_declared": plan.delta,
        },
        stage_seconds=clock,
        detector=det_name,
        norm=det_norm,
        threshold=threshold,
        m=pair.m,
        n=pair.n,
        seed=plan.seed,
    )
    emit_report(report, "json", os.path.join(plan.out_dir, "report.json"))
    return report


def _sig(v: float, digits: int) -> str:
    if v == 0 or not np.isfinite(v):
        return str(v)
    return f"{v:.{digits}g}"


def _markdown(report: BenchReport) -> str:
    g = report.split_grid
    lines = [
        f"# Experiment report: {report.model} on {os.path.basename(report.dataset)}",
        "",
        "## Split validation",
        "",
        f"Detector `{report.detector}` (norm `{report.norm}`), threshold "
        f"{_sig(report.threshold, 4)}; M={report.m}, N={report.n}.",
        "",
        "| portion | train | test |",
        "| --- | --- | --- |",
        f"| in-distribution | {_sig(g['id_train'], 4)} | {_sig(g['id_test'], 4)} |",
        f"| out-of-distribution | {_sig(g['ood_train'], 4)} | {_sig(g['ood_test'], 4)} |",
        "",
        "## Speed/accuracy",
        "",
        f"| model | {report.metric_name} | t (s) | trade-off |",
        "| --- | --- | --- | --- |",
        f"| {report.model} | {_sig(report.p, 4)} | {_sig(report.t_seconds, 4)} "
        f"| {_sig(report.tradeoff, 2)} |",
        "",
        "## Recorded constraints",
        "",
        "| field | value |",
        "| --- | --- |",
    ]
    for key, value in report.constraints.items():
        shown = _sig(value, 4) if isinstance(value, float) else str(value)
        lines.append(f"| {key} | {shown} |")
    lines.append("")
    return "\n".join(lines)


def _flat_items(report: BenchReport) -> list[tuple[str, object]]:
    out: list[tuple[str, object]] = []
    for key, value in report.to_dict().items():
        if isinstance(value, dict):
            out.extend((f"{key}.{k}", v) for k, v in value.items())
        else:
            out.append((key, value))
    return out


def _csv_text(report: BenchReport) -> str:
    # full-precision value plus a display-rounded column
    lines = ["field,value,display"]
    for key, value in _flat_items(report):
        if isinstance(value, float):
            lines.append(f"{key},{value!r},{_sig(value, 4)}")
        else:
            lines.append(f"{key},{value},{value}")
    return "\n".join(lines) + "\n"


def emit_report(report: BenchReport, fmt: str, path) -> None:
    """Write a report as json (lossless round-trip), markdown, or csv."""
    if fmt == "json":
        text = json.dumps(report.to_dict(), indent=1)
    elif fmt == "markdown":
        text = _markdown(report)
    elif fmt == "csv":
        text = _csv_text(report)
    else:
        raise ValueError(f"unknown report format: {fmt!r}")
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc


def compare_models(reports: list[BenchReport]) -> list[dict]:
    """Rank reports over one dataset/split by trade-off, best first.

    Ties break by the better task metric, then by model name.  All reports
    must describe the same dataset and split.
    """
    if len(reports) < 2:
        raise ValueError("need at least 2 reports to compare")
    signatures = {r.split_signature() for r in reports}
    if len(signatures) > 1:
        raise ValueError(f"reports cover different datasets/splits: {sorted(signatures)}")
    task = reports[0].task
    better_p = (lambda r: -r.p) if task == CLASSIFICATION else (lambda r: r.p)
    ranked = sorted(reports, key=lambda r: (-r.tradeoff, better_p(r), r.model))
    return [
        {
            "rank": i + 1,
            "model": r.model,
            "metric_name": r.metric_name,
            "p": r.p,
            "t_seconds": r.t_seconds,
            "tradeoff": r.tradeoff,
        }
        for i, r in enumerate(ranked)
    ]


def comparison_markdown(rows: list[dict]) -> str:
    lines = [
        "| rank | model | P | t (s) | trade-off |",
        "| --- | --- | --- | --- | --- |",
    ]
    for r in rows:
        lines.append(
            f"| {r['rank']} | {r['model']} | {_sig(r['p'], 4)} "
            f"| {_sig(r['t_seconds'], 4)} | {_sig(r['tradeoff'], 2)} |"
        )
    return "\n".join(lines) + "\n"
