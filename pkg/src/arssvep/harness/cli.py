"""Command-line entry point.

Exit status: 0 success, 1 usage error, 2 data error, 3 numeric error.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import sys
from pathlib import Path
from typing import List, Optional

from ..epochio import read_epochs, write_epochs
from ..errors import ArssvepError, DataError, NumericError
from .config import BUILTIN_CONFIGS, ExperimentConfig, load_config

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("arssvep")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _u64(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer")
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit an unsigned 64-bit integer")
    return value


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer")
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    default = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=argparse.SUPPRESS if suppress else "default",
                   help=f"JSON config path or built-in preset ({', '.join(BUILTIN_CONFIGS)})")
    p.add_argument("--seed", type=_u64, default=default, help="global seed (overrides config)")
    p.add_argument("--out", default=default, help="output directory (overrides config)")
    p.add_argument("--format", choices=("csv", "json"),
                   default=argparse.SUPPRESS if suppress else "csv",
                   help="format of tabular outputs")
    p.add_argument("-v", "--verbose", action="store_true",
                   default=argparse.SUPPRESS if suppress else False)
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="arssvep", parents=[_global_flags(False)],
                     description="Synthetic SSVEP decoding benchmark.")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True
    common = [_global_flags(True)]

    sub.add_parser("generate", parents=common, help="write synthetic SSVP1 sessions")
    p = sub.add_parser("preprocess", parents=common, help="band-pass and crop SSVP1 sessions")
    p.add_argument("--input", help="SSVP1 file or directory (default: the output directory)")
    p = sub.add_parser("benchmark", parents=common, help="run the four-method benchmark")
    p.add_argument("--data", help="directory of subject_<k>.ssvp sessions to use")
    p.add_argument("--workers", type=_positive_int, default=1)
    for name, text in (("train", "train a neural model and save a checkpoint"),
                       ("evaluate", "evaluate a checkpoint on its subject's test split"),
                       ("explain", "SHAP attribution report")):
        p = sub.add_parser(name, parents=common, help=text)
        p.add_argument("--subject", type=int, help="subject index (default: shap.subject)")
        p.add_argument("--window", type=float, help="window length in s (default: shap.window_s)")
        p.add_argument("--data", help="directory of subject_<k>.ssvp sessions to use")
        if name == "train":
            p.add_argument("--method", choices=("macnn_bilstm", "cnn_bilstm"))
        else:
            p.add_argument("--checkpoint", help="MACB0001 checkpoint (default: <out>/model.macb)")
    sub.add_parser("plot", parents=common, help="redraw SVG figures from CSV outputs")
    return parser


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out is not None:
        changes["output_dir"] = args.out
    return cfg.replace(**changes) if changes else cfg


def _session(args, cfg: ExperimentConfig, subject: int):
    if getattr(args, "data", None):
        return read_epochs(Path(args.data) / f"subject_{subject}.ssvp")
    return None


def cmd_generate(args, cfg: ExperimentConfig) -> None:
    from .pipeline import subject_session
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    for s in range(cfg.n_subjects):
        path = out / f"subject_{s}.ssvp"
        write_epochs(path, subject_session(cfg, s))
        print(f"wrote {path}")


def cmd_preprocess(args, cfg: ExperimentConfig) -> None:
    from .pipeline import preprocess
    out = Path(cfg.output_dir)
    src = Path(args.input) if args.input else out
    files = sorted(src.glob("subject_*.ssvp")) if src.is_dir() else [src]
    if not files or not files[0].is_file():
        raise DataError(f"no SSVP1 sessions found at {src}")
    out.mkdir(parents=True, exist_ok=True)
    for path in files:
        target = out / f"preprocessed_{path.stem.split('_', 1)[-1]}.ssvp"
        write_epochs(target, preprocess(cfg, read_epochs(path)))
        print(f"wrote {target}")


def cmd_benchmark(args, cfg: ExperimentConfig) -> None:
    from .benchmark import run_benchmark
    from .report import write_benchmark_outputs
    data = None
    if args.data:
        data = [read_epochs(Path(args.data) / f"subject_{s}.ssvp") for s in range(cfg.n_subjects)]
    table = run_benchmark(cfg, data, workers=args.workers)
    report = write_benchmark_outputs(cfg, table, cfg.output_dir, args.format)
    for row in report["summary"]:
        print(f"{row['method']:>13s} {row['window_s']:5.2f}s  "
              f"mean {row['mean']:.3f}  std {row['std']:.3f}")
    if report["ablation"] is not None and report["ablation"]["flag"] != "ok":
        print(f"ablation flag: {report['ablation']['flag']} "
              f"(gap {report['ablation']['gap']:+.3f})")
    for err in report["errors"]:
        print(f"cell failed: {err['method']} {err['window_s']:g}s subject {err['subject']}: "
              f"{err['error']}", file=sys.stderr)


def _neural_setup(args, cfg: ExperimentConfig):
    from .pipeline import raw_features, subject_split
    subject = cfg.shap.subject if args.subject is None else args.subject
    window = cfg.shap.window_s if args.window is None else args.window
    if not 0 <= subject < cfg.n_subjects:
        raise DataError(f"subject {subject} outside 0..{cfg.n_subjects - 1}")
    split = subject_split(cfg, subject, _session(args, cfg, subject))
    train_w, test_w = split.windows(cfg, window)
    if window in cfg.window_lengths:
        window_index = cfg.window_lengths.index(window)
    else:
        window_index = len(cfg.window_lengths)
    return (subject, window, window_index, raw_features(cfg, train_w), train_w.labels,
            raw_features(cfg, test_w), test_w.labels)


def _load_classifier(args, cfg: ExperimentConfig):
    from ..nn.checkpoint import decode_checkpoint, peek_config
    from .config import model_config
    from .pipeline import NeuralClassifier
    path = Path(args.checkpoint) if args.checkpoint else Path(cfg.output_dir) / "model.macb"
    if not path.is_file():
        raise DataError(f"checkpoint not found: {path}")
    buf = path.read_bytes()
    method = "macnn_bilstm" if peek_config(buf).attention else "cnn_bilstm"
    model = decode_checkpoint(buf, expected=model_config(cfg, method))
    return NeuralClassifier(cfg, model), method


def cmd_train(args, cfg: ExperimentConfig) -> None:
    from ..metrics import accuracy_from_confusion, confusion_matrix
    from ..nn.checkpoint import save_checkpoint
    from .pipeline import fit_neural
    from .report import write_confusion_csv, write_json
    method = args.method or cfg.shap.method
    subject, window, wi, xtr, ytr, xte, yte = _neural_setup(args, cfg)
    clf, rep = fit_neural(cfg, method, subject, wi, xtr, ytr)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "model.macb", clf.model)
    cm = confusion_matrix(yte, clf.predict(xte))
    history = [{"epoch": e, "train_loss": l, "train_accuracy": a}
               for e, (l, a) in enumerate(zip(rep.train_loss, rep.train_accuracy))]
    if args.format == "json":
        write_json(out / "train_history.json", history)
    else:
        with open(out / "train_history.csv", "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["epoch", "train_loss", "train_accuracy"])
            for h in history:
                writer.writerow([h["epoch"], repr(h["train_loss"]), repr(h["train_accuracy"])])
    write_confusion_csv(out / "confusion_train_test.csv", cm)
    acc = accuracy_from_confusion(cm)
    write_json(out / "train_report.json", {
        "kind": "train", "config_hash": cfg.config_hash(), "method": method,
        "subject": subject, "window_s": window, "test_accuracy": acc,
        "final_train_accuracy": rep.train_accuracy[-1], "confusion": cm})
    print(f"{method} subject {subject} window {window:g}s: test accuracy {acc:.3f}")


def cmd_evaluate(args, cfg: ExperimentConfig) -> None:
    from ..metrics import accuracy_from_confusion, confusion_matrix
    from .report import write_confusion_csv, write_json
    clf, method = _load_classifier(args, cfg)
    subject, window, _, _, _, xte, yte = _neural_setup(args, cfg)
    cm = confusion_matrix(yte, clf.predict(xte))
    acc = accuracy_from_confusion(cm)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_confusion_csv(out / "confusion_evaluate.csv", cm)
    result = {"method": method, "subject": subject, "window_s": window, "accuracy": acc,
              "n_test": int(cm.sum())}
    if args.format == "json":
        write_json(out / "evaluation.json", result)
    else:
        with open(out / "evaluation.csv", "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(list(result))
            writer.writerow([result[k] if k != "accuracy" else repr(acc) for k in result])
    print(f"{method} subject {subject} window {window:g}s: accuracy {acc:.3f}")


def cmd_explain(args, cfg: ExperimentConfig) -> None:
    from .interpret import run_explain
    from .pipeline import fit_neural
    from .report import write_explain_outputs
    subject, window, wi, xtr, ytr, xte, yte = _neural_setup(args, cfg)
    if args.checkpoint:
        clf, method = _load_classifier(args, cfg)
    else:
        method = cfg.shap.method
        clf, _ = fit_neural(cfg, method, subject, wi, xtr, ytr)
    shap_cfg = cfg.replace(shap=dataclasses.replace(cfg.shap, subject=subject, window_s=window))
    report = run_explain(shap_cfg, clf.as_float64(), xte, yte, xtr, ytr)
    summary = write_explain_outputs(shap_cfg, report, cfg.output_dir, args.format,
                                    {"method": method, "subject": subject, "window_s": window})
    print("top features: " + ", ".join(summary["top10"]))
    for i, err in report.skipped:
        print(f"instance {i} skipped: {err}", file=sys.stderr)


def cmd_plot(args, cfg: ExperimentConfig) -> None:
    from .report import plot_outputs
    for name in plot_outputs(cfg.output_dir):
        print(f"wrote {Path(cfg.output_dir) / name}")


COMMANDS = {"generate": cmd_generate, "preprocess": cmd_preprocess, "benchmark": cmd_benchmark,
            "train": cmd_train, "evaluate": cmd_evaluate, "explain": cmd_explain,
            "plot": cmd_plot}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        COMMANDS[args.command](args, cfg)
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ArssvepError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
