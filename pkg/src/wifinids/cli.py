"""Command-line entry point: ``wifinids <subcommand> ...``.

Every subcommand writes into ``<out-dir>/<subcommand>-<hash>/`` where the
hash covers the effective configuration (excluding output location and
thread count). The folder holds ``config.txt``, the artifacts and ``run.log``.

Options may also come from ``--config FILE`` with one ``key = value`` per
line (keys are the long option names, with or without dashes). Command-line
flags win over the file. ``WIFINIDS_OUT_DIR`` and ``WIFINIDS_DATA_DIR``
override the default output and data directories.
"""

from __future__ import annotations

import argparse
import contextlib
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, evaluation, ingest, transform
from . import train as training

log = logging.getLogger("wifinids")

_NOT_HASHED = {"out_dir", "threads", "verbose", "config", "func", "command"}


class CliError(Exception):
    pass


# --------------------------------------------------------------------------
# helpers


def _read_config_file(path: str) -> dict[str, str]:
    entries = {}
    with open(path, encoding="utf-8") as fh:
        for n, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise CliError(f"{path}:{n}: expected key = value")
            entries[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return entries


def _apply_config_file(sub: argparse.ArgumentParser, path: str) -> None:
    entries = _read_config_file(path)
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, value in entries.items():
        if key not in actions:
            raise CliError(f"{path}: unknown option {key!r} for this subcommand")
        action = actions[key]
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            defaults[key] = value.lower() in ("1", "true", "yes", "on")
        elif action.nargs in ("+", "*"):
            defaults[key] = [action.type(v) if action.type else v for v in value.split()]
        else:
            converted = action.type(value) if action.type else value
            if action.choices and converted not in action.choices:
                raise CliError(f"{path}: invalid {key} {value!r}; choose from {', '.join(map(str, action.choices))}")
            defaults[key] = converted
        action.required = False
    sub.set_defaults(**defaults)


def config_hash(args: argparse.Namespace) -> str:
    items = {k: v for k, v in sorted(vars(args).items()) if k not in _NOT_HASHED}
    blob = json.dumps(items, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def _run_dir(args: argparse.Namespace) -> Path:
    path = Path(args.out_dir) / f"{args.command}-{config_hash(args)}"
    path.mkdir(parents=True, exist_ok=True)
    with open(path / "config.txt", "w", encoding="utf-8") as fh:
        for k, v in sorted(vars(args).items()):
            if k in ("func",):
                continue
            if isinstance(v, list):
                v = " ".join(map(str, v))
            fh.write(f"{k.replace('_', '-')} = {v}\n")
    handler = logging.FileHandler(path / "run.log", mode="w", encoding="utf-8")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    logging.getLogger("wifinids").addHandler(handler)
    return path


def _write(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


@contextlib.contextmanager
def _thread_limit(n: int | None):
    if not n:
        yield
        return
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=n):
        yield


def _table(headers: list[str], rows: list[list]) -> str:
    cells = [headers] + [[f"{c:,}" if isinstance(c, (int, np.integer)) else str(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(headers))]
    out = []
    for i, r in enumerate(cells):
        out.append("  ".join(c.ljust(w) if j == 0 else c.rjust(w) for j, (c, w) in enumerate(zip(r, widths))))
        if i == 0:
            out.append("-" * len(out[0]))
    return "\n".join(out)


def _load_splits(data_dir: str, names=("train", "validation")) -> list[ingest.DatasetSplit]:
    base = Path(data_dir)
    missing = [n for n in names if not (base / f"{n}.csv").is_file()]
    if missing:
        raise CliError(f"{base}: missing split file(s) {', '.join(n + '.csv' for n in missing)}")
    return [ingest.load_split(base / f"{n}.csv") for n in names]


# --------------------------------------------------------------------------
# subcommands


def cmd_preprocess(args) -> int:
    """Merge raw CSVs, undersample Normals, split, scale and persist."""
    for p in args.inputs:
        if not Path(p).is_file():
            raise CliError(f"input file not found: {p}")
    run = _run_dir(args)

    per_file, values, labels = [], [], []
    for p in args.inputs:
        skipped: list = []
        records = list(ingest.parse_csv(p, lenient=args.lenient, skipped=skipped))
        v, y = ingest.decode_records(records)
        values.append(v)
        labels.append(y)
        n_attack = int((y != 0).sum())
        per_file.append([Path(p).name, len(y) - n_attack, n_attack, len(y)])
        if skipped:
            print(f"{p}: skipped {len(skipped)} malformed row(s)")
    values = np.concatenate(values) if values else np.empty((0, ingest.N_FEATURES))
    labels = np.concatenate(labels) if labels else np.empty(0, dtype=np.int64)
    log.info("merged %d records from %d file(s)", len(labels), len(args.inputs))

    keep = ingest.undersample_normals(labels, args.ratio, args.seed)
    values, labels = values[keep], labels[keep]
    tr_idx, va_idx, te_idx = ingest.stratified_split(labels, args.seed)
    scaler = ingest.fit_scaler_values(values[tr_idx], "train")
    scaler.save(run / "scaler.txt")

    splits = {}
    for name, idx in zip(ingest.SPLIT_NAMES, (tr_idx, va_idx, te_idx)):
        splits[name] = ingest.DatasetSplit(name, scaler.transform(values[idx]), labels[idx])
        ingest.persist_split(splits[name], run / f"{name}.csv")

    totals = [sum(r[i] for r in per_file) for i in (1, 2, 3)]
    print(_table(["Input", "Normal", "Attack", "Total"], per_file + [["(all)", *totals]]))
    print()
    rows = []
    for c, name in enumerate(ingest.CLASS_NAMES):
        counts = [int((labels == c).sum())] + [int(splits[s].class_counts()[c]) for s in ingest.SPLIT_NAMES]
        if counts[0]:
            rows.append([f"{name} ({c})", *counts])
    rows.append(["Total", len(labels), *(len(splits[s]) for s in ingest.SPLIT_NAMES)])
    table = _table(["Class", "Sampled", "Train", "Validation", "Test"], rows)
    print(table)
    n_attack = int((labels != 0).sum())
    ratio = (len(labels) - n_attack) / n_attack
    print(f"\nnormal:attack ratio after sampling {ratio:.3f}:1 (target {args.ratio:g}:1)")
    _write(run / "counts.txt", table + "\n")
    print(f"splits written to {run}")
    return 0


def _train_config(args) -> training.TrainConfig:
    return training.TrainConfig(
        technique=args.technique,
        architecture=args.arch,
        task=args.task,
        max_epochs=args.max_epochs,
        patience=args.patience,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        seed=args.seed,
        cache=not args.no_cache,
    )


def cmd_train(args) -> int:
    config = _train_config(args)
    train_split, val_split = _load_splits(args.data_dir)
    run = _run_dir(args)
    clf = training.build_model(config.architecture, config.task, seed=config.seed, technique=config.technique)
    print(clf.net.summary())
    clf, report = training.train(clf, train_split, val_split, config)
    training.save_model(clf, run / "model.wnm")
    report.write_csv(run / "epochs.csv")
    summary = (
        f"{config.technique} / {config.architecture} ({config.task}), "
        f"{clf.param_count():,} parameters\n" + report.summary() + "\n"
    )
    _write(run / "summary.txt", summary)
    print(summary, end="")
    print(f"model written to {run / 'model.wnm'}")
    return 0


def _check_model_flags(clf: training.Classifier, args) -> None:
    for flag, have in (("technique", clf.technique), ("task", clf.task), ("arch", clf.architecture)):
        want = getattr(args, flag, None)
        if want is not None and want != have:
            raise CliError(f"model was trained with {flag} {have!r} but --{flag} {want!r} was given")


def cmd_eval(args) -> int:
    if not Path(args.model).is_file():
        raise CliError(f"model file not found: {args.model}")
    clf = training.load_model(args.model)
    _check_model_flags(clf, args)
    test = ingest.load_split(args.data)
    report = evaluation.evaluate(clf, test)
    if args.train_data:
        train_split = ingest.load_split(args.train_data)
        report.train_accuracy = evaluation.evaluate(clf, train_split).accuracy
    run = _run_dir(args)
    _write(run / "metrics.csv", report.to_csv())
    _write(run / "confusion.csv", report.confusion_csv())
    text = report.summary() + "\n\n" + "confusion matrix (rows true, cols predicted)\n" + report.confusion_csv()
    if args.against_published:
        deltas = evaluation.published_deltas(report)
        rows = [[n, f"{o:.2f}", f"{p:.2f}", f"{d:+.2f}"] for n, o, p, d in deltas]
        text += "\npublished AWID3 reference\n" + _table(["metric", "ours", "published", "delta"], rows) + "\n"
    _write(run / "summary.txt", text)
    print(text, end="")
    print(f"report written to {run}")
    return 0


def cmd_bench(args) -> int:
    if args.model:
        clf = training.load_model(args.model)
        _check_model_flags(clf, args)
    else:
        clf = training.build_model(args.arch or "2d-2l", args.task or "binary", seed=args.seed,
                                   technique=args.technique or "gaf")
    if args.data:
        features = ingest.load_split(args.data).features[: args.records]
    else:
        classes = ingest.n_task_classes(clf.task)
        per_class = -(-args.records // classes)
        features = evaluation.generate_synthetic(per_class, classes, args.seed)[0][: args.records]
    stats = evaluation.benchmark_latency(clf, features, repetitions=args.reps, batch_size=args.batch_size)
    run = _run_dir(args)
    ref = evaluation.PUBLISHED_LATENCY_US.get(clf.architecture)
    text = f"{clf.technique} / {clf.architecture} ({clf.task})\n" + stats.summary() + "\n"
    text += f"forward-only: {stats.forward_mean_us:.2f} us per record\n"
    if ref is not None:
        text += f"published reference ({clf.architecture}, GPU workstation): ~{ref:g} us per record\n"
    _write(run / "latency.txt", text)
    _write(run / "latency.json", json.dumps(vars(stats), indent=2) + "\n")
    print(text, end="")
    return 0


def cmd_synth(args) -> int:
    run = _run_dir(args)
    if args.normal_ratio is not None:
        x, y = evaluation.generate_imbalanced(args.n, args.classes, args.normal_ratio, args.seed)
    else:
        x, y = evaluation.generate_synthetic(args.n, args.classes, args.seed)
    if args.format == "raw":
        out = run / "synthetic.csv"
        evaluation.write_raw_csv(out, x, y, seed=args.seed)
        print(f"{len(y):,} records written to {out}")
    else:
        idx = ingest.stratified_split(y, args.seed)
        for name, i in zip(ingest.SPLIT_NAMES, idx):
            ingest.persist_split(ingest.DatasetSplit(name, x[i], y[i]), run / f"{name}.csv")
        print(f"{len(y):,} records split {len(idx[0])}/{len(idx[1])}/{len(idx[2])} into {run}")
    return 0


def cmd_preview(args) -> int:
    split = ingest.load_split(args.data)
    if not 0 <= args.index < len(split):
        raise CliError(f"record index {args.index} out of range (split has {len(split)} records)")
    m = transform.get_transform(args.technique)(split.features[args.index])
    with np.printoptions(precision=3, suppress=True, linewidth=160):
        print(f"record {args.index} (label {split.labels[args.index]}), {args.technique}")
        print(m)
    if args.pgm:
        transform.write_pgm(m, args.pgm, scale=args.scale)
        print(f"image written to {args.pgm}")
    return 0


def cmd_report(args) -> int:
    reports = []
    for p in args.metrics:
        if not Path(p).is_file():
            raise CliError(f"metrics file not found: {p}")
        reports.append(evaluation.load_report_csv(p))
    csv_text, text = evaluation.compare_report(reports)
    run = _run_dir(args)
    _write(run / "comparison.csv", csv_text)
    _write(run / "comparison.txt", text + "\n")
    print(text)
    return 0


# --------------------------------------------------------------------------
# parser


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    out_default = os.environ.get("WIFINIDS_OUT_DIR", "runs")
    data_default = os.environ.get("WIFINIDS_DATA_DIR")

    parser = argparse.ArgumentParser(
        prog="wifinids",
        description="Wi-Fi intrusion detection: feature imaging and lightweight CNNs.",
        epilog=(
            "Each subcommand writes to OUT_DIR/<subcommand>-<config hash>/ "
            "(config.txt, run.log and the files listed in its --help)."
        ),
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value file supplying defaults for this subcommand")
    common.add_argument("--out-dir", default=out_default, help="parent of the run directory (env WIFINIDS_OUT_DIR)")
    common.add_argument("--threads", type=int, default=1, help="BLAS threads; 1 (default) is fully deterministic")
    common.add_argument("-v", "--verbose", action="store_true")

    subs = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    technique = dict(choices=transform.TECHNIQUES, help="matrix encoding: %(choices)s")

    p = subs.add_parser("preprocess", parents=[common], help="raw CSVs -> scaled train/validation/test splits",
                        description="Writes train.csv, validation.csv, test.csv, scaler.txt and counts.txt.")
    p.add_argument("inputs", nargs="+", help="AWID3-style CSV files (16 feature columns + attack_map)")
    p.add_argument("--ratio", type=_positive_float, default=8.0, help="target normal:attack ratio (default 8)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lenient", action="store_true", help="skip malformed rows instead of failing")
    p.set_defaults(func=cmd_preprocess)

    p = subs.add_parser("train", parents=[common], help="train one architecture on one encoding",
                        description="Writes model.wnm, epochs.csv and summary.txt.")
    p.add_argument("--data-dir", default=data_default, required=data_default is None,
                   help="directory holding train.csv and validation.csv (env WIFINIDS_DATA_DIR)")
    p.add_argument("--technique", default="gaf", **technique)
    p.add_argument("--arch", default="2d-2l", choices=training.ARCHITECTURES)
    p.add_argument("--task", default="binary", choices=ingest.TASKS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch-size", type=_positive_int, default=256)
    p.add_argument("--max-epochs", type=_positive_int, default=100)
    p.add_argument("--patience", type=_positive_int, default=3)
    p.add_argument("--lr", type=_positive_float, default=0.001)
    p.add_argument("--no-cache", action="store_true", help="encode matrices per batch instead of up front")
    p.set_defaults(func=cmd_train)

    p = subs.add_parser("eval", parents=[common], help="score a trained model on a split",
                        description="Writes metrics.csv, confusion.csv and summary.txt.")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="split file to evaluate (usually test.csv)")
    p.add_argument("--train-data", help="optional training split, to report train accuracy")
    p.add_argument("--technique", choices=transform.TECHNIQUES, help="refuse models trained on another encoding")
    p.add_argument("--task", choices=ingest.TASKS, help="refuse models trained for another task")
    p.add_argument("--arch", choices=training.ARCHITECTURES, help="refuse models of another architecture")
    p.add_argument("--against-published", action="store_true", help="print deltas to the published AWID3 results")
    p.set_defaults(func=cmd_eval)

    p = subs.add_parser("bench", parents=[common], help="single-threaded inference latency",
                        description="Writes latency.txt and latency.json.")
    p.add_argument("--model", help="trained model; omit to time a freshly initialised network")
    p.add_argument("--technique", choices=transform.TECHNIQUES)
    p.add_argument("--task", choices=ingest.TASKS)
    p.add_argument("--arch", choices=training.ARCHITECTURES)
    p.add_argument("--data", help="split file supplying records (default: synthetic)")
    p.add_argument("--records", type=_positive_int, default=10_000)
    p.add_argument("--reps", type=_positive_int, default=3)
    p.add_argument("--batch-size", type=_positive_int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)

    p = subs.add_parser("synth", parents=[common], help="generate a synthetic desk-scale dataset",
                        description="Writes synthetic.csv (raw format) or train/validation/test.csv (splits).")
    p.add_argument("--classes", type=int, choices=(2, ingest.N_CLASSES), default=ingest.N_CLASSES)
    p.add_argument("--n", type=_positive_int, default=2000, help="records per class (per attack class with --normal-ratio)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("raw", "splits"), default="raw")
    p.add_argument("--normal-ratio", type=_positive_float, help="Normal records per attack record")
    p.set_defaults(func=cmd_synth)

    p = subs.add_parser("preview", parents=[common], help="print (and optionally image) one encoded record")
    p.add_argument("--data", required=True)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--technique", default="gaf", **technique)
    p.add_argument("--pgm", help="write an 8-bit greyscale PGM here (debug only)")
    p.add_argument("--scale", type=_positive_int, default=16)
    p.set_defaults(func=cmd_preview)

    p = subs.add_parser("report", parents=[common], help="technique x model comparison table",
                        description="Writes comparison.csv and comparison.txt.")
    p.add_argument("metrics", nargs="+", help="metrics.csv files from eval runs")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        subcommands = parser._subparsers._group_actions[0].choices
        name = next((a for a in argv if a in subcommands), None)
        try:
            if name is None:
                raise CliError("--config needs a subcommand")
            _apply_config_file(subcommands[name], known.config)
        except (OSError, CliError, ValueError) as exc:
            print(f"wifinids: error: {exc}", file=sys.stderr)
            return 2
    args = parser.parse_args(argv)

    logger = logging.getLogger("wifinids")
    logger.setLevel(logging.INFO)
    console = logging.StreamHandler(sys.stderr)
    console.setLevel(logging.INFO if args.verbose else logging.WARNING)
    console.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    logger.addHandler(console)
    try:
        with _thread_limit(args.threads):
            return args.func(args)
    except (CliError, ValueError, OSError, RuntimeError) as exc:
        print(f"wifinids: error: {exc}", file=sys.stderr)
        return 1
    finally:
        for h in list(logger.handlers):
            h.close()
            logger.removeHandler(h)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
