"""Command-line pipeline: each subcommand is one stage, `report` runs them all.

Exit codes: 0 success, 2 configuration error, 3 data/format error,
4 numeric/training error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .bench import (
    BenchReport,
    ExperimentPlan,
    compare_models,
    comparison_markdown,
    emit_report,
    resolve_threshold,
    run_experiment,
    tradeoff,
)
from .contrastive import TclConfig, embed, load_model, save_model, train_tcl
from .data import (
    CLASSIFICATION,
    Column,
    Dataset,
    Schema,
    ingest_csv,
    load_dataset,
    load_split,
    save_dataset,
    save_split,
)
from .exceptions import ConfigError, FormatError, NumericError
from .heads import (
    HeadConfig,
    fit_linear,
    fit_logistic,
    load_head,
    metric_accuracy,
    metric_f1_macro,
    metric_r2,
    metric_rmse,
    predict,
    save_head,
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
    write_histogram_csv,
)
from .data import split as split_rows


def _load_config(args) -> dict:
    if not getattr(args, "config", None):
        return {}
    path = args.config
    try:
        text = open(path, "r", encoding="utf-8").read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if str(path).endswith(".toml"):
        try:
            import tomllib
        except ImportError:  # pragma: no cover
            try:
                import tomli as tomllib
            except ImportError:
                raise ConfigError("TOML configs need Python 3.11+ or the tomli package")
        return tomllib.loads(text)
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: bad JSON: {exc}") from exc


def _out_dir(args) -> str:
    out = args.out or "out"
    os.makedirs(out, exist_ok=True)
    return out


def cmd_ingest(args) -> int:
    dataset = ingest_csv(
        args.csv, target=args.target, task=args.task, delimiter=args.delimiter
    )
    out = _out_dir(args)
    save_dataset(dataset, out)
    print(f"ingested {dataset.n} rows x {dataset.d} encoded features -> {out}")
    return 0


def cmd_detect(args) -> int:
    cfg = _load_config(args)
    det = dict(cfg.get("detector", cfg) if isinstance(cfg, dict) else {})
    for key in ("detector", "norm", "tail", "bins"):
        flag = getattr(args, key.replace("-", "_"), None)
        if flag is not None:
            det[key] = flag
    name = det.get("detector", OPENMAX)
    norm = det.get("norm", "l2")
    tail = int(det.get("tail", 20))
    bins = int(det.get("bins", 50))
    seed = args.seed if args.seed is not None else int(det.get("seed", 0))

    dataset = load_dataset(args.data)
    if dataset.schema.task != CLASSIFICATION:
        from .ood import discretize_target

        labels = discretize_target(dataset.labels, 10)
        schema = Schema(
            dataset.schema.features, dataset.schema.target, CLASSIFICATION,
            tuple(str(i) for i in range(10)),
        )
        det_data = Dataset(dataset.features, labels, schema, dataset.stats)
    else:
        det_data = dataset

    if name == OPENMAX:
        backbone = train_backbone(det_data)
        model = fit_openmax(backbone, det_data, norm=norm, tail=tail)
        scores = openmax_score(model, det_data.features)
    elif name == TEMPERATURE:
        fit_part, cal_part = split_rows(det_data, (0.8, 0.2), RngStream(seed, 11))
        backbone = train_backbone(fit_part)
        model = fit_temperature(backbone, cal_part)
        scores = temp_score(model, det_data.features)
        norm = "none"
    else:
        raise ConfigError(f"unknown detector: {name!r}")

    out = _out_dir(args)
    hist = score_histogram(scores, bins=bins)
    write_histogram_csv(hist, os.path.join(out, "histogram.csv"))
    with open(os.path.join(out, "scores.json"), "w", encoding="utf-8") as fh:
        json.dump(
            {"detector": name, "norm": norm, "tail": tail, "seed": seed,
             "scores": np.asarray(scores).tolist()},
            fh,
        )
    print(f"scored {len(scores)} rows with {name} -> {out}/scores.json, {out}/histogram.csv")
    return 0


def cmd_split(args) -> int:
    dataset = load_dataset(args.data)
    try:
        with open(args.scores, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise FormatError(f"cannot read scores {args.scores}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{args.scores}: corrupt scores file: {exc}") from exc
    scores = np.asarray(payload["scores"], dtype=np.float64)

    det = {}
    if args.threshold is not None:
        det["threshold"] = args.threshold
    if args.quantile is not None:
        det["quantile"] = args.quantile
    if "threshold" in det and "quantile" in det:
        raise ConfigError("give either --threshold or --quantile, not both")
    threshold = resolve_threshold(scores, det)

    pair = split_by_threshold(
        dataset, scores, threshold,
        detector=payload.get("detector", "unknown"),
        norm=payload.get("norm", "none"),
        seed=payload.get("seed"),
    )
    out = _out_dir(args)
    save_split(pair, out)
    flag = "  (anomalous: M <= N)" if pair.anomalous else ""
    print(f"split at {threshold!r}: M={pair.m} in-distribution, N={pair.n} OOD -> {out}{flag}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    tcl = dict(cfg.get("tcl", cfg) if isinstance(cfg, dict) else {})
    for key in ("hidden_dim", "latent_dim", "noise", "sigma", "mask_prob", "temperature",
                "batch_size", "max_epochs", "tolerance", "learning_rate"):
        flag = getattr(args, key, None)
        if flag is not None:
            tcl[key] = flag
    if args.seed is not None:
        tcl["seed"] = args.seed

    path = os.path.join(args.data, "d_in.csv")
    data = load_split(args.data).d_in if os.path.exists(path) else load_dataset(args.data)
    config = TclConfig(input_dim=data.d, **tcl)
    model, trace = train_tcl(data, config)
    out = _out_dir(args)
    save_model(model, os.path.join(out, "model.json"))
    with open(os.path.join(out, "trace.json"), "w", encoding="utf-8") as fh:
        json.dump(
            {"total": trace.total, "reconstruction": trace.reconstruction,
             "contrastive": trace.contrastive, "distance": trace.distance,
             "seconds": trace.seconds, "epochs": trace.epochs,
             "stop_reason": trace.stop_reason},
            fh, indent=1,
        )
    print(
        f"trained {trace.epochs} epochs in {trace.seconds:.2f}s "
        f"(stop: {trace.stop_reason}, final loss {trace.total[-1]:.4g}) -> {out}/model.json"
    )
    return 0


def cmd_embed(args) -> int:
    model = load_model(args.model)
    dataset = load_dataset(args.data)
    e = embed(model, dataset.features)
    schema = Schema(
        tuple(Column(f"e{i}", "numeric") for i in range(e.shape[1])),
        dataset.schema.target,
        dataset.schema.task,
        dataset.schema.classes,
    )
    out = _out_dir(args)
    save_dataset(Dataset(e, dataset.labels, schema, None), out)
    print(f"embedded {e.shape[0]} rows -> {out} ({e.shape[1]} latent features)")
    return 0


def cmd_fit_head(args) -> int:
    dataset = load_dataset(args.data)
    kind = args.kind or ("logistic" if dataset.schema.task == CLASSIFICATION else "linear")
    if kind == "logistic":
        head = fit_logistic(
            dataset.features, dataset.labels, HeadConfig(seed=args.seed or 0)
        )
    elif kind == "linear":
        head = fit_linear(dataset.features, dataset.labels)
    else:
        raise ConfigError(f"unknown head kind: {kind!r}")
    out = _out_dir(args)
    save_head(head, os.path.join(out, "head.json"))
    print(f"fitted {kind} head on {dataset.n} rows -> {out}/head.json")
    return 0


def cmd_evaluate(args) -> int:
    head = load_head(args.head)
    dataset = load_dataset(args.data)
    pred = predict(head, dataset.features)
    if dataset.schema.task == CLASSIFICATION:
        metrics = {
            "accuracy": metric_accuracy(dataset.labels, pred),
            "f1_macro": metric_f1_macro(dataset.labels, pred),
        }
    else:
        metrics = {
            "rmse": metric_rmse(dataset.labels, pred),
            "r2": metric_r2(dataset.labels, pred),
        }
    out = _out_dir(args)
    with open(os.path.join(out, "metrics.json"), "w", encoding="utf-8") as fh:
        json.dump(metrics, fh, indent=1)
    for key, value in metrics.items():
        print(f"{key}: {value:.6g}")
    return 0


def cmd_tradeoff(args) -> int:
    t = tradeoff(args.p, args.t, args.task)
    print(f"tradeoff: {t!r}  (display: {t:.2g})")
    return 0


def cmd_report(args) -> int:
    if not args.config:
        raise ConfigError("report needs --config with an experiment plan")
    plan = ExperimentPlan.from_file(args.config)
    if args.out:
        plan.out_dir = args.out
    if args.seed is not None:
        plan.seed = args.seed
    report = run_experiment(plan)
    emit_report(report, "markdown", os.path.join(plan.out_dir, "report.md"))
    emit_report(report, "csv", os.path.join(plan.out_dir, "report.csv"))
    print(
        f"{report.model}: {report.metric_name}={report.p:.4g}, "
        f"t={report.t_seconds:.3g}s, tradeoff={report.tradeoff:.2g} -> {plan.out_dir}"
    )
    return 0


def cmd_compare(args) -> int:
    reports = [BenchReport.from_file(p) for p in args.reports]
    rows = compare_models(reports)
    text = comparison_markdown(rows)
    sys.stdout.write(text)
    if args.out:
        out = _out_dir(args)
        with open(os.path.join(out, "comparison.md"), "w", encoding="utf-8") as fh:
            fh.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed")
    common.add_argument("--config", default=None, help="JSON/TOML config file")
    common.add_argument("--out", default=None, help="output directory")

    parser = argparse.ArgumentParser(
        prog="tabcl",
        description="Tabular contrastive learning with OOD gating and benchmarking.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="encode a CSV into a dataset artifact")
    p.add_argument("csv")
    p.add_argument("--target", required=True, help="target column name")
    p.add_argument("--task", choices=["classification", "regression"], default=None)
    p.add_argument("--delimiter", default=",")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("detect", parents=[common], help="score rows with an OOD detector")
    p.add_argument("data", help="dataset artifact directory")
    p.add_argument("--detector", choices=[OPENMAX, TEMPERATURE], default=None)
    p.add_argument("--norm", choices=["l1", "l2"], default=None)
    p.add_argument("--tail", type=int, default=None)
    p.add_argument("--bins", type=int, default=None)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("split", parents=[common], help="split a dataset at a score threshold")
    p.add_argument("data")
    p.add_argument("scores", help="scores.json from `detect`")
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--quantile", type=float, default=None)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", parents=[common], help="train the contrastive encoder")
    p.add_argument("data", help="dataset artifact or split directory")
    p.add_argument("--hidden-dim", dest="hidden_dim", type=int, default=None)
    p.add_argument("--latent-dim", dest="latent_dim", type=int, default=None)
    p.add_argument("--noise", choices=["gaussian", "mask"], default=None)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--mask-prob", dest="mask_prob", type=float, default=None)
    p.add_argument("--temperature", type=float, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--max-epochs", dest="max_epochs", type=int, default=None)
    p.add_argument("--tolerance", type=float, default=None)
    p.add_argument("--learning-rate", dest="learning_rate", type=float, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("embed", parents=[common], help="encode a dataset into the latent space")
    p.add_argument("model", help="model.json from `train`")
    p.add_argument("data")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("fit-head", parents=[common], help="fit a prediction head")
    p.add_argument("data", help="dataset (or embeddings) artifact directory")
    p.add_argument("--kind", choices=["logistic", "linear"], default=None)
    p.set_defaults(func=cmd_fit_head)

    p = sub.add_parser("evaluate", parents=[common], help="evaluate a head on a dataset")
    p.add_argument("head", help="head.json from `fit-head`")
    p.add_argument("data")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("tradeoff", parents=[common], help="speed/accuracy trade-off")
    p.add_argument("--p", type=float, required=True, help="task metric (F1 or RMSE)")
    p.add_argument("--t", type=float, required=True, help="training seconds")
    p.add_argument("--task", choices=["classification", "regression"], required=True)
    p.set_defaults(func=cmd_tradeoff)

    p = sub.add_parser("report", parents=[common], help="run a full experiment plan")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("compare", parents=[common], help="rank reports by trade-off")
    p.add_argument("reports", nargs="+", help="report.json files")
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except FormatError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
