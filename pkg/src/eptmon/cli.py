"""Command-line entry point.

Subcommands: simulate, collect, extract, evaluate, sweep, bench-flush,
export-series. Every command that produces artifacts also writes a manifest
(JSON, next to the outputs) echoing the parameters and the SHA-256 of every
input and output file, so a re-run with identical flags and seeds is
checkable bit-for-bit.

Flag resolution order: explicit flag > config file (--config, KEY=VALUE
lines) > environment (EPT_SEED, EPT_COLLECT_PORT) > built-in default.

Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 I/O error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from . import __version__
from .features import WindowConfig, extract_windows, read_features_csv, write_features_csv
from .ml import (
    ModelConfig,
    ModelKind,
    Task,
    confusion_to_csv,
    cross_validate,
    dataset_from_vectors,
    report_to_csv,
    report_to_text,
    sweep_to_csv,
    window_sweep,
)
from .simulator import SimConfig, cumulative_violations, make_profile, run_workload, simulate_trial
from .trace import ClassLabel, validate_trace
from .wire import (
    DEFAULT_PORT,
    WireDecodeError,
    WireFormatError,
    collect,
    read_trace_file,
    write_trace_file,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_IO = 3

DEFAULT_SEED = 42


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad flags; the contract reserves 2 for data errors.
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _load_config_file(path: Optional[str]) -> Dict[str, str]:
    if not path:
        return {}
    values: Dict[str, str] = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}: malformed config line {raw!r}")
        key, _, value = line.partition("=")
        values[key.strip().lower().replace("-", "_")] = value.strip()
    return values


class _Options:
    """Flag > config file > environment > default, per option."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.file = _load_config_file(getattr(args, "config", None))

    def get(self, name: str, default, cast=str, env: Optional[str] = None):
        flag = getattr(self.args, name, None)
        if flag is not None:
            return flag
        if name in self.file:
            return cast(self.file[name])
        if env and env in os.environ:
            return cast(os.environ[env])
        return default

    def seed(self) -> int:
        return self.get("seed", DEFAULT_SEED, int, env="EPT_SEED")


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(
    manifest_path: Path,
    command: str,
    parameters: Dict,
    outputs: Sequence[Path],
    inputs: Sequence[Path] = (),
) -> None:
    base = manifest_path.parent
    doc = {
        "tool": "eptmon",
        "version": __version__,
        "command": command,
        "parameters": parameters,
        "inputs": {str(p.name): _sha256(p) for p in sorted(inputs)},
        "outputs": {str(p.relative_to(base)): _sha256(p) for p in sorted(outputs)},
    }
    manifest_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _parse_classes(value: Optional[str]) -> List[ClassLabel]:
    if not value or value.lower() == "all":
        return list(ClassLabel)
    return [ClassLabel.from_name(part) for part in value.split(",") if part.strip()]


# ---------------------------------------------------------------------------
# Commands

def cmd_simulate(args: argparse.Namespace) -> int:
    opt = _Options(args)
    try:
        classes = _parse_classes(opt.get("classes", "all"))
    except ValueError as exc:
        print(f"eptmon simulate: {exc}", file=sys.stderr)
        return EXIT_USAGE
    trials = opt.get("trials", 5, int)
    config = SimConfig(
        t_flush=opt.get("t_flush", 30.0, float),
        duration=opt.get("duration", 60.0, float),
        seed=opt.seed(),
    )
    out_dir = Path(opt.get("out", "traces"))
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for label in classes:
        for trial in range(trials):
            trace = simulate_trial(label, trial, config)
            problems = validate_trace(trace)
            if problems:
                print(f"eptmon simulate: invalid trace generated: {problems[0]}", file=sys.stderr)
                return EXIT_DATA
            path = out_dir / f"{label.name.lower()}_{trial}.trace"
            write_trace_file(path, trace)
            written.append(path)
            print(f"wrote {path} ({len(trace.events)} events)")
    _write_manifest(
        out_dir / "manifest.json",
        "simulate",
        {
            "classes": [c.name for c in classes],
            "trials": trials,
            "duration": config.duration,
            "t_flush": config.t_flush,
            "seed": config.seed,
        },
        written,
    )
    return EXIT_OK


def cmd_collect(args: argparse.Namespace) -> int:
    opt = _Options(args)
    port = opt.get("port", DEFAULT_PORT, int, env="EPT_COLLECT_PORT")
    duration = opt.get("duration", 60.0, float)
    label = ClassLabel.from_name(opt.get("label", "IDLE"))
    trial = opt.get("trial", 0, int)
    out = Path(opt.get("out", "collected.trace"))
    result = collect(port=port, duration=duration, label=label, trial_id=trial)
    problems = validate_trace(result.trace)
    if problems:
        print(
            f"warning: collected trace violates {len(problems)} invariants "
            f"(first: {problems[0]})",
            file=sys.stderr,
        )
    write_trace_file(out, result.trace)
    report = {
        "received_datagrams": result.received,
        "duplicate_datagrams": result.duplicates,
        "malformed_datagrams": result.malformed,
        "missing_seqs": list(result.missing_seqs),
        "events": len(result.trace.events),
    }
    report_path = out.with_name(out.name + ".loss.json")
    report_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    if not result.trace.events:
        print("warning: no telemetry received; wrote an empty trace", file=sys.stderr)
    if result.malformed:
        print(f"warning: skipped {result.malformed} malformed datagrams", file=sys.stderr)
    if result.missing_seqs:
        print(f"warning: lost datagrams {list(result.missing_seqs)}", file=sys.stderr)
    _write_manifest(
        out.with_name(out.name + ".manifest.json"),
        "collect",
        {"port": port, "duration": duration, "label": label.name, "trial": trial},
        [out, report_path],
    )
    print(f"wrote {out} ({len(result.trace.events)} events)")
    return EXIT_OK


def _trace_files(directory: Path) -> List[Path]:
    files = sorted(directory.glob("*.trace"))
    if not files:
        raise ValueError(f"no .trace files in {directory}")
    return files


def cmd_extract(args: argparse.Namespace) -> int:
    opt = _Options(args)
    traces_dir = Path(opt.get("traces", "traces"))
    window = WindowConfig(
        t_window=opt.get("t_window", 10.0, float),
        t_d=opt.get("t_d", 60.0, float),
        stride=opt.get("stride", 1.0, float),
    )
    out = Path(opt.get("out", "features.csv"))
    files = _trace_files(traces_dir)
    vectors = []
    for path in files:
        vectors.extend(extract_windows(read_trace_file(path), window))
    rows = write_features_csv(out, vectors)
    _write_manifest(
        out.with_name(out.name + ".manifest.json"),
        "extract",
        {
            "traces": str(traces_dir),
            "t_window": window.t_window,
            "t_d": window.t_d,
            "stride": window.stride,
        },
        [out],
        inputs=files,
    )
    print(f"wrote {out} ({rows} rows from {len(files)} traces)")
    return EXIT_OK


def _model_config(opt: _Options) -> ModelConfig:
    kind = opt.get("model", "rf")
    try:
        model_kind = ModelKind(kind)
    except ValueError:
        raise ValueError(f"unknown model {kind!r}; expected rf, svm or knn") from None
    return ModelConfig(kind=model_kind, seed=opt.seed())


def cmd_evaluate(args: argparse.Namespace) -> int:
    opt = _Options(args)
    features_path = Path(opt.get("features", "features.csv"))
    task = Task(opt.get("task", "8class"))
    config = _model_config(opt)
    folds = opt.get("folds", 10, int)
    grouped = bool(getattr(args, "group_by_trial", False))
    out_dir = Path(opt.get("out_dir", "eval"))
    out_dir.mkdir(parents=True, exist_ok=True)

    vectors = read_features_csv(features_path)
    dataset = dataset_from_vectors(vectors, task=task)
    report = cross_validate(config, dataset, folds=folds, seed=config.seed, group_by_trial=grouped)

    text = report_to_text(report)
    stem = f"report_{config.kind.value}_{task.value}"
    paths = {
        out_dir / f"{stem}.txt": text,
        out_dir / f"{stem}.csv": report_to_csv(report),
        out_dir / f"{stem}_confusion.csv": confusion_to_csv(report),
    }
    for path, content in paths.items():
        path.write_text(content)
    _write_manifest(
        out_dir / f"{stem}.manifest.json",
        "evaluate",
        {
            "features": str(features_path),
            "model": config.kind.value,
            "task": task.value,
            "folds": folds,
            "seed": config.seed,
            "group_by_trial": grouped,
        },
        list(paths),
        inputs=[features_path],
    )
    print(text)
    print(f"macro-F1 ({config.kind.value}, {task.value}): {report.macro_f1:.4f}")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    opt = _Options(args)
    traces_dir = Path(opt.get("traces", "traces"))
    t_windows = [float(v) for v in str(opt.get("t_windows", "1,5,10,20")).split(",") if v.strip()]
    t_d = opt.get("t_d", 60.0, float)
    task = Task(opt.get("task", "8class"))
    config = _model_config(opt)
    folds = opt.get("folds", 10, int)
    out = Path(opt.get("out", "sweep.csv"))
    files = _trace_files(traces_dir)
    traces = [read_trace_file(p) for p in files]
    rows = window_sweep(
        traces, config, t_windows, t_d, folds=folds, seed=config.seed, task=task
    )
    out.write_text(sweep_to_csv(rows))
    _write_manifest(
        out.with_name(out.name + ".manifest.json"),
        "sweep",
        {
            "traces": str(traces_dir),
            "t_windows": t_windows,
            "t_d": t_d,
            "model": config.kind.value,
            "task": task.value,
            "folds": folds,
            "seed": config.seed,
        },
        [out],
        inputs=files,
    )
    for t_window, score in rows:
        print(f"t_window={t_window:g}s macro-F1={score:.4f}")
    return EXIT_OK


def cmd_bench_flush(args: argparse.Namespace) -> int:
    opt = _Options(args)
    label = ClassLabel.from_name(opt.get("profile", "IDLE"))
    config = SimConfig(
        t_flush=opt.get("t_flush", 30.0, float),
        duration=opt.get("duration", 60.0, float),
        seed=opt.seed(),
    )
    resolution = opt.get("resolution", 1.0, float)
    out = Path(opt.get("out", "flush_curve.csv"))
    trace = run_workload(make_profile(label, seed=config.seed), config)
    curve = cumulative_violations(trace, resolution)
    lines = ["time,count"] + [f"{t:g},{c}" for t, c in curve.samples]
    out.write_text("\n".join(lines) + "\n")
    _write_manifest(
        out.with_name(out.name + ".manifest.json"),
        "bench-flush",
        {
            "profile": label.name,
            "duration": config.duration,
            "t_flush": config.t_flush,
            "resolution": resolution,
            "seed": config.seed,
        },
        [out],
    )
    print(f"wrote {out} ({len(curve.samples)} samples, {len(trace.events)} violations)")
    return EXIT_OK


def cmd_export_series(args: argparse.Namespace) -> int:
    opt = _Options(args)
    trace_path = Path(opt.get("trace", "input.trace"))
    t_window = opt.get("t_window", 1.0, float)
    stride = opt.get("stride", 1.0, float)
    out = Path(opt.get("out", "series.csv"))
    trace = read_trace_file(trace_path)
    window = WindowConfig(t_window=t_window, t_d=trace.duration, stride=stride)
    rows = write_features_csv(out, extract_windows(trace, window))
    _write_manifest(
        out.with_name(out.name + ".manifest.json"),
        "export-series",
        {"trace": str(trace_path), "t_window": t_window, "stride": stride},
        [out],
        inputs=[trace_path],
    )
    print(f"wrote {out} ({rows} windows)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser assembly

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="eptmon", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"eptmon {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name: str, func, help_: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="key=value config file; flags win on conflict")
        p.set_defaults(func=func)
        return p

    p = add("simulate", cmd_simulate, "generate labeled synthetic trace files")
    p.add_argument("--classes", help="comma-separated class names, or 'all'")
    p.add_argument("--trials", type=int, help="trials per class (default 5)")
    p.add_argument("--duration", type=float, help="trial length in seconds (default 60)")
    p.add_argument("--t-flush", dest="t_flush", type=float, help="flush interval in seconds (default 30)")
    p.add_argument("--seed", type=int, help="base seed (default EPT_SEED or 42)")
    p.add_argument("--out", help="output directory (default traces)")

    p = add("collect", cmd_collect, "receive telemetry datagrams into a trace file")
    p.add_argument("--port", type=int, help=f"UDP port (default EPT_COLLECT_PORT or {DEFAULT_PORT})")
    p.add_argument("--duration", type=float, help="receive window in seconds (default 60)")
    p.add_argument("--label", help="fallback class label for an empty collection")
    p.add_argument("--trial", type=int, help="fallback trial id")
    p.add_argument("--out", help="output trace file")

    p = add("extract", cmd_extract, "turn trace files into windowed feature CSV")
    p.add_argument("--traces", help="directory of .trace files")
    p.add_argument("--t-window", dest="t_window", type=float, help="window length in seconds (default 10)")
    p.add_argument("--t-d", dest="t_d", type=float, help="detection duration in seconds (default 60)")
    p.add_argument("--stride", type=float, help="window stride in seconds (default 1)")
    p.add_argument("--out", help="output CSV path")

    p = add("evaluate", cmd_evaluate, "cross-validate a model on a feature CSV")
    p.add_argument("--features", help="feature CSV from extract")
    p.add_argument("--model", choices=[k.value for k in ModelKind], help="classifier (default rf)")
    p.add_argument("--task", choices=[t.value for t in Task], help="8class or 2class (default 8class)")
    p.add_argument("--folds", type=int, help="cross-validation folds (default 10)")
    p.add_argument("--seed", type=int, help="fold/model seed (default EPT_SEED or 42)")
    p.add_argument("--group-by-trial", action="store_true",
                   help="assign whole trials to folds instead of single vectors")
    p.add_argument("--out-dir", dest="out_dir", help="report output directory (default eval)")

    p = add("sweep", cmd_sweep, "macro-F1 as a function of window length")
    p.add_argument("--traces", help="directory of .trace files")
    p.add_argument("--t-windows", dest="t_windows", help="comma-separated window lengths (default 1,5,10,20)")
    p.add_argument("--t-d", dest="t_d", type=float, help="detection duration in seconds (default 60)")
    p.add_argument("--model", choices=[k.value for k in ModelKind], help="classifier (default rf)")
    p.add_argument("--task", choices=[t.value for t in Task], help="8class or 2class (default 8class)")
    p.add_argument("--folds", type=int, help="cross-validation folds (default 10)")
    p.add_argument("--seed", type=int, help="fold/model seed")
    p.add_argument("--out", help="output CSV path")

    p = add("bench-flush", cmd_bench_flush, "cumulative violation curve for one profile")
    p.add_argument("--profile", help="class name (default IDLE)")
    p.add_argument("--duration", type=float, help="trial length in seconds (default 60)")
    p.add_argument("--t-flush", dest="t_flush", type=float, help="flush interval in seconds (default 30)")
    p.add_argument("--resolution", type=float, help="sample spacing in seconds (default 1)")
    p.add_argument("--seed", type=int, help="simulation seed")
    p.add_argument("--out", help="output CSV path")

    p = add("export-series", cmd_export_series, "per-window feature time series for plotting")
    p.add_argument("--trace", help="input trace file")
    p.add_argument("--t-window", dest="t_window", type=float, help="window length in seconds (default 1)")
    p.add_argument("--stride", type=float, help="window stride in seconds (default 1)")
    p.add_argument("--out", help="output CSV path")

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (WireFormatError, WireDecodeError, ValueError) as exc:
        print(f"eptmon {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"eptmon {args.command}: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    raise SystemExit(main())
