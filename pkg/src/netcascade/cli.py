"""Command-line entry points: extract, mix, train, run, serve."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from netcascade.capture import CaptureError, TrafficClass
from netcascade.cascade import CascadeConfig, JsonlWriter, run_scenario
from netcascade.features import (
    WindowConfig,
    apply_scaler,
    fit_scaler,
    read_feature_csv,
    stream_vectors,
    write_feature_csv,
)
from netcascade.mixer import (
    MixError,
    MixPlan,
    merge,
    random_plan,
    read_labeled_capture,
    write_capture,
)
from netcascade.models import (
    CLASSES,
    BayesModel,
    LinearModel,
    ModelBundle,
    evaluate,
    kmeans_select,
    load_bundle,
    save_bundle,
)

MODEL_KINDS = ("logistic", "perceptron", "mnb", "bnb", "gnb")


def _window_config(args: argparse.Namespace) -> WindowConfig:
    return WindowConfig(
        processing_interval=args.interval,
        abnormal_size_threshold=args.abnormal_size,
        port_frequency_threshold=args.port_frequency,
        short_lived_threshold=args.short_lived,
    )


def _add_window_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--interval", type=float, default=1.0, help="window length in seconds")
    parser.add_argument("--abnormal-size", type=int, default=1500)
    parser.add_argument("--port-frequency", type=int, default=5)
    parser.add_argument("--short-lived", type=int, default=5)


def cmd_extract(args: argparse.Namespace) -> int:
    cfg = _window_config(args)
    try:
        if args.sidecar:
            stream = read_labeled_capture(args.capture, args.sidecar)
        else:
            from netcascade.capture import parse_capture

            stream = list(parse_capture(args.capture))
    except (CaptureError, MixError) as exc:
        print(f"extract: {exc}", file=sys.stderr)
        return 1
    count = write_feature_csv(args.out, stream_vectors(stream, cfg))
    print(f"wrote {count} feature rows to {args.out}")
    return 0


def cmd_mix(args: argparse.Namespace) -> int:
    captures = {}
    for spec_text in args.capture or []:
        if "=" not in spec_text:
            print(f"mix: --capture needs id=path, got {spec_text!r}", file=sys.stderr)
            return 1
        cid, _, path = spec_text.partition("=")
        captures[cid] = read_labeled_capture(path)
    base = read_labeled_capture(args.base) if args.base else []
    try:
        if args.plan:
            plan = MixPlan.from_text(Path(args.plan).read_text(encoding="utf-8"))
        else:
            plan = random_plan(
                "base", captures, n_injections=args.random_injections,
                seed=args.seed, max_offset=args.max_offset,
            )
            plan_path = Path(str(args.out) + ".plan")
            plan_path.write_text(plan.to_text(), encoding="utf-8")
            print(f"wrote generated plan to {plan_path}")
        merged = merge(base, plan, captures)
        sidecar = write_capture(merged, args.out)
    except MixError as exc:
        print(f"mix: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {len(merged)} packets to {args.out} (labels: {sidecar})")
    return 0


def _build_model(kind: str, dim: int, learning_rate: float) -> LinearModel | BayesModel:
    if kind == "logistic":
        return LinearModel.zeros(dim, kind="logistic", learning_rate=learning_rate)
    if kind == "perceptron":
        return LinearModel.zeros(dim, kind="perceptron", learning_rate=learning_rate)
    if kind == "mnb":
        return BayesModel.create(dim, "multinomial")
    if kind == "bnb":
        return BayesModel.create(dim, "bernoulli")
    return BayesModel.create(dim, "gaussian")


def cmd_train(args: argparse.Namespace) -> int:
    vectors = read_feature_csv(args.features)
    labeled = [v for v in vectors if v.label is not None]
    if not labeled:
        print("train: the feature CSV has no labeled rows", file=sys.stderr)
        return 1
    if len(labeled) < len(vectors):
        print(f"train: ignoring {len(vectors) - len(labeled)} unlabeled rows")
    X = np.array([v.values for v in labeled])
    y = [v.label for v in labeled]

    rng = np.random.default_rng(args.seed)
    if args.role == "m1":
        by_class: dict[TrafficClass, np.ndarray] = {}
        rows_by_class: dict[TrafficClass, np.ndarray] = {}
        for cls in CLASSES:
            idx = np.array([i for i, lab in enumerate(y) if lab is cls])
            if len(idx) == 0:
                continue
            by_class[cls] = X[idx]
            rows_by_class[cls] = idx
        picked = kmeans_select(
            by_class,
            per_class_n={cls: min(args.per_class_n, len(m)) for cls, m in by_class.items()},
            k=args.k,
            seed=args.seed,
        )
        keep = np.sort(np.concatenate([rows_by_class[cls][sel] for cls, sel in picked.items()]))
        X = X[keep]
        y = [y[i] for i in keep]
        print(f"core-sample selection kept {len(X)} rows")

    order = rng.permutation(len(X))
    split = max(1, int(len(X) * 0.75))
    train_idx, test_idx = order[:split], order[split:]
    scaler = fit_scaler(X[train_idx])
    X_train = apply_scaler(scaler, X[train_idx])
    y_train = [y[i] for i in train_idx]

    model = _build_model(args.kind, X.shape[1], args.learning_rate)
    for _ in range(args.epochs):
        for i in rng.permutation(len(X_train)):
            model = model.update(X_train[i], y_train[i])

    window = WindowConfig(
        processing_interval=args.interval,
        abnormal_size_threshold=args.abnormal_size,
        port_frequency_threshold=args.port_frequency,
        short_lived_threshold=args.short_lived,
    )
    bundle = ModelBundle(model=model, scaler=scaler, window=window)
    save_bundle(args.out, bundle)
    print(f"trained {args.kind} ({args.role}) on {len(X_train)} rows -> {args.out}")

    if len(test_idx):
        X_test = apply_scaler(scaler, X[test_idx])
        y_test = [y[i] for i in test_idx]
        report = evaluate(model, X_test, y_test)
        print(f"holdout evaluation on {len(test_idx)} rows (25% split):")
        print(report.format_table())
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    m1 = load_bundle(args.m1) if args.m1 else None
    m2 = load_bundle(args.m2, expected_dim=m1.model.dim if m1 else None) if args.m2 else None
    anchor = m1 or m2
    if anchor is None:
        print("run: at least one of --m1/--m2 is required", file=sys.stderr)
        return 1
    stream = read_labeled_capture(args.capture, args.sidecar or None)
    cfg = CascadeConfig(
        theta=args.theta,
        alpha=args.alpha,
        scenario=args.scenario,
        human_mode=args.human_mode,
        batch_size=args.batch_size,
        seed=args.seed,
    )
    sink = JsonlWriter(args.events_out) if args.events_out else None
    try:
        metrics = run_scenario(
            stream,
            args.scenario,
            cfg,
            anchor.window,
            anchor.scaler,
            m1.model if m1 else None,
            m2.model if m2 else None,
            event_sink=sink,
            pace=args.pace,
        )
    finally:
        if sink is not None:
            sink.close()
    document = json.dumps(metrics.to_dict(), indent=1)
    if args.metrics_out:
        Path(args.metrics_out).write_text(document + "\n", encoding="utf-8")
        print(f"wrote metrics to {args.metrics_out}")
    print(document)
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    from netcascade.service import ServiceConfig, serve

    if args.config:
        config = ServiceConfig.from_file(args.config)
    else:
        config = ServiceConfig()
    for key in ("host", "port", "m1_model", "m2_model", "capture", "sidecar",
                "event_log", "theta", "alpha", "pace", "auth_token"):
        value = getattr(args, key, None)
        if value not in (None, ""):
            setattr(config, key, value)
    serve(config)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="netcascade",
        description="Malicious-traffic detection: feature extraction, stream mixing, "
        "online training, cascade replay, and the analyst service.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="capture -> feature CSV")
    p.add_argument("--capture", required=True)
    p.add_argument("--sidecar", default="")
    p.add_argument("--out", required=True)
    _add_window_flags(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("mix", help="splice flows from captures into a base stream")
    p.add_argument("--base", default="")
    p.add_argument("--capture", action="append", metavar="ID=PATH")
    p.add_argument("--plan", default="", help="mix plan file; omit to generate one")
    p.add_argument("--random-injections", type=int, default=3)
    p.add_argument("--max-offset", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mix)

    p = sub.add_parser("train", help="feature CSV -> model bundle")
    p.add_argument("--features", required=True)
    p.add_argument("--kind", choices=MODEL_KINDS, required=True)
    p.add_argument("--role", choices=("m1", "m2"), required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--per-class-n", type=int, default=100_000,
                   help="m1 core samples kept per class")
    p.add_argument("--k", type=int, default=8, help="clusters per class for m1 selection")
    p.add_argument("--epochs", type=int, default=3)
    p.add_argument("--learning-rate", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=42)
    _add_window_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("run", help="replay a capture through a scenario")
    p.add_argument("--capture", required=True)
    p.add_argument("--sidecar", default="")
    p.add_argument("--m1", default="")
    p.add_argument("--m2", default="")
    p.add_argument("--scenario", type=int, choices=(1, 2, 3, 4, 5), required=True)
    p.add_argument("--theta", type=float, default=0.9)
    p.add_argument("--alpha", type=float, default=0.75)
    p.add_argument("--human-mode", choices=("oracle", "none"), default="oracle")
    p.add_argument("--batch-size", type=int, default=1000)
    p.add_argument("--pace", choices=("max", "real-time"), default="max")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--metrics-out", default="")
    p.add_argument("--events-out", default="")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("serve", help="run the analyst HTTP service")
    p.add_argument("--config", default="", help="key = value config file")
    p.add_argument("--host", default=None)
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--m1-model", dest="m1_model", default=None)
    p.add_argument("--m2-model", dest="m2_model", default=None)
    p.add_argument("--capture", default=None)
    p.add_argument("--sidecar", default=None)
    p.add_argument("--event-log", dest="event_log", default=None)
    p.add_argument("--theta", type=float, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--pace", choices=("max", "real-time"), default=None)
    p.add_argument("--auth-token", dest="auth_token", default=None)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
