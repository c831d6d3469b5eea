"""Writing and reading run outputs: tables, confusion matrices, SHAP summaries, plots.

Nothing written here depends on wall-clock time, so identical runs produce
identical bytes.
"""
from __future__ import annotations

import csv
import json
import math
import platform
from collections import defaultdict
from importlib import metadata
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import scipy

from ..errors import FormatError
from ..explain import ImportanceTable, class_label, write_importance_csv
from ..signals import Stimulus
from . import svg
from .benchmark import BenchmarkTable
from .config import ExperimentConfig, derive_seed, subject_synth

TABLE_HEADER = ["method", "window_s", "subject", "accuracy"]
CLASS_TITLES = [s.title for s in Stimulus]


def _num(v: float) -> str:
    return "nan" if v != v else repr(float(v))


def _clean(value):
    """JSON-safe copy: NaN becomes null, numpy scalars become Python numbers."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return _clean(value.tolist())
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and (math.isnan(value) or math.isinf(value)):
        return None
    return value


def write_json(path, value) -> None:
    Path(path).write_text(json.dumps(_clean(value), indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def versions() -> Dict[str, str]:
    try:
        pkg = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        pkg = "unknown"
    return {"arssvep": pkg, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def cell_name(method: str, window_s: float, subject: int) -> str:
    return f"{method}_{window_s:g}s_s{subject}"


def write_confusion_csv(path, cm: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["true"] + CLASS_TITLES)
        for title, row in zip(CLASS_TITLES, cm):
            writer.writerow([title] + [int(v) for v in row])


def read_confusion_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["true"] + CLASS_TITLES:
        raise FormatError(f"{path} is not a confusion-matrix CSV")
    return np.array([[int(v) for v in r[1:]] for r in rows[1:]], dtype=np.int64)


def write_table_csv(path, table: BenchmarkTable) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TABLE_HEADER)
        for m, w, s, acc in table.rows():
            writer.writerow([m, f"{w:g}", s, _num(acc)])


def read_table_csv(path) -> List[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != TABLE_HEADER:
            raise FormatError(f"{path} does not have header {','.join(TABLE_HEADER)}")
        return [{"method": r["method"], "window_s": float(r["window_s"]),
                 "subject": int(r["subject"]), "accuracy": float(r["accuracy"])}
                for r in reader]


def _table_records(table: BenchmarkTable):
    return [dict(zip(TABLE_HEADER, (m, w, s, acc))) for m, w, s, acc in table.rows()]


def benchmark_report(cfg: ExperimentConfig, table: BenchmarkTable) -> dict:
    lo, hi = min(cfg.window_lengths), max(cfg.window_lengths)
    trend = {m: {"short": table.mean(m, lo), "long": table.mean(m, hi),
                 "increases": table.mean(m, hi) > table.mean(m, lo),
                 "chance_p_long": table.chance_p_value(m, hi)} for m in cfg.methods}
    return {
        "kind": "benchmark",
        "config_hash": cfg.config_hash(),
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "subject_seeds": [subject_synth(cfg, s).seed for s in range(cfg.n_subjects)],
        "split_seeds": [derive_seed(cfg.seed, s, 2) for s in range(cfg.n_subjects)],
        "versions": versions(),
        "accuracy_unit": "window",
        "summary": table.summary(),
        "trend": trend,
        "ablation": table.ablation(),
        "errors": [{"method": c.method, "window_s": c.window_s, "subject": c.subject,
                    "error": c.error} for c in table.errors()],
    }


def accuracy_plots(means: Dict[str, Dict[float, float]],
                   stds: Optional[Dict[str, Dict[float, float]]] = None) -> Dict[str, str]:
    """Accuracy-versus-window lines and grouped bars at the longest window."""
    windows = sorted({w for per in means.values() for w in per})
    series = {m: [(w, per[w]) for w in sorted(per)] for m, per in means.items()}
    out = {"accuracy_vs_window.svg": svg.line_chart(
        series, "Accuracy versus window length", "window length (s)", "accuracy")}
    if windows:
        w = windows[-1]
        bars = {m: per.get(w, float("nan")) for m, per in means.items()}
        errs = {m: per.get(w, float("nan")) for m, per in (stds or {}).items()}
        out[f"accuracy_{w:g}s.svg"] = svg.bar_chart(
            bars, f"Mean accuracy at {w:g} s", "accuracy", errs)
    return out


def write_benchmark_outputs(cfg: ExperimentConfig, table: BenchmarkTable, out_dir,
                            fmt: str = "csv") -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        write_json(out / "table.json", _table_records(table))
    else:
        write_table_csv(out / "table.csv", table)
    for (m, w, s), cell in sorted(table.cells.items()):
        if cell.confusion is not None:
            write_confusion_csv(out / f"confusion_{cell_name(m, w, s)}.csv", cell.confusion)
    means = {m: {w: table.mean(m, w) for w in cfg.window_lengths} for m in cfg.methods}
    stds = {m: {w: table.std(m, w) for w in cfg.window_lengths} for m in cfg.methods}
    for name, text in accuracy_plots(means, stds).items():
        (out / name).write_text(text, encoding="utf-8")
    report = benchmark_report(cfg, table)
    write_json(out / "report.json", report)
    return report


def shap_plot(table: ImportanceTable, cls: Optional[int], k: int = 20) -> str:
    label = "all classes" if cls is None else class_label(cls)
    return svg.hbar_chart(table.ranking(cls)[:k], f"SHAP importance: {label}", "mean |SHAP|")


def write_explain_outputs(cfg: ExperimentConfig, report, out_dir, fmt: str = "csv",
                          extra: Optional[dict] = None) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table = report.importance
    targets = list(table.per_class) + [None]
    for cls in targets:
        stem = "shap_overall" if cls is None else f"shap_{class_label(cls)}"
        if fmt == "json":
            write_json(out / f"{stem}.json",
                       [dict(zip(("feature", "class", "mean_abs_shap", "rank"), row))
                        for row in table.rows(cls)])
        else:
            write_importance_csv(out / f"{stem}.csv", table, cls)
        (out / f"{stem}.svg").write_text(shap_plot(table, cls), encoding="utf-8")
    summary = {
        "kind": "explain",
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "versions": versions(),
        "shap": cfg.to_dict()["shap"],
        "instances": list(report.instance_ids),
        "background": list(report.background_ids),
        "skipped": [{"instance": i, "error": e} for i, e in report.skipped],
        "top10": report.top(10),
        "top10_per_class": {class_label(c): table.top(10, c) for c in table.per_class},
        "max_additivity_error": max(a.additivity_error() for a in report.attributions),
    }
    summary.update(extra or {})
    write_json(out / "explain_report.json", summary)
    return summary


def read_importance_csv(path) -> List[tuple]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["feature", "class", "mean_abs_shap", "rank"]:
            raise FormatError(f"{path} is not a SHAP summary CSV")
        return [(r["feature"], r["class"], float(r["mean_abs_shap"]), int(r["rank"]))
                for r in reader]


def plot_outputs(out_dir) -> List[str]:
    """Regenerate SVGs from the CSV outputs already present in ``out_dir``."""
    out = Path(out_dir)
    written = []
    table_path = out / "table.csv"
    if table_path.is_file():
        acc = defaultdict(lambda: defaultdict(list))
        for r in read_table_csv(table_path):
            if r["accuracy"] == r["accuracy"]:
                acc[r["method"]][r["window_s"]].append(r["accuracy"])
        means = {m: {w: float(np.mean(v)) for w, v in per.items()} for m, per in acc.items()}
        stds = {m: {w: float(np.std(v)) for w, v in per.items()} for m, per in acc.items()}
        for name, text in accuracy_plots(means, stds).items():
            (out / name).write_text(text, encoding="utf-8")
            written.append(name)
    for path in sorted(out.glob("shap_*.csv")):
        rows = read_importance_csv(path)
        label = rows[0][1] if rows else path.stem
        items = [(name, value) for name, _, value, _ in rows[:20]]
        title = f"SHAP importance: {'all classes' if label == 'overall' else label}"
        path.with_suffix(".svg").write_text(svg.hbar_chart(items, title, "mean |SHAP|"),
                                            encoding="utf-8")
        written.append(path.with_suffix(".svg").name)
    if not written:
        raise FormatError(f"no table.csv or shap_*.csv in {out} to plot")
    return written
