"""Four-method benchmark over window lengths and synthetic subjects."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from ..cca import build_references, cca_classify
from ..errors import ArssvepError
from ..fbcca import fbcca_classify_subbands
from ..metrics import accuracy_from_confusion, confusion_matrix
from ..signals import EpochSet
from .config import NEURAL_METHODS, ExperimentConfig, model_config, train_config
from .pipeline import (fit_neural, raw_features, subband_splits, subject_session,
                       subject_split)

log = logging.getLogger(__name__)

CELL_ERRORS = (ArssvepError, ValueError, ArithmeticError, np.linalg.LinAlgError)


@dataclass(frozen=True)
class CellResult:
    method: str
    window_s: float
    subject: int
    accuracy: float
    confusion: Optional[np.ndarray]
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass(frozen=True)
class BenchmarkTable:
    """Complete method x window x subject grid of cell results."""

    methods: Tuple[str, ...]
    window_lengths: Tuple[float, ...]
    n_subjects: int
    cells: Dict[Tuple[str, float, int], CellResult]

    def __post_init__(self):
        for m in self.methods:
            for w in self.window_lengths:
                for s in range(self.n_subjects):
                    if (m, w, s) not in self.cells:
                        raise ValueError(f"benchmark grid is missing cell {(m, w, s)}")

    def cell(self, method: str, window_s: float, subject: int) -> CellResult:
        return self.cells[(method, float(window_s), subject)]

    def accuracies(self, method: str, window_s: float) -> np.ndarray:
        return np.array([self.cell(method, window_s, s).accuracy for s in range(self.n_subjects)])

    def mean(self, method: str, window_s: float) -> float:
        acc = self.accuracies(method, window_s)
        acc = acc[~np.isnan(acc)]
        return float(acc.mean()) if acc.size else float("nan")

    def std(self, method: str, window_s: float) -> float:
        acc = self.accuracies(method, window_s)
        acc = acc[~np.isnan(acc)]
        return float(acc.std()) if acc.size else float("nan")

    def pooled_counts(self, method: str, window_s: float) -> Tuple[int, int]:
        """Correct and total test windows summed over subjects."""
        correct = total = 0
        for s in range(self.n_subjects):
            cm = self.cell(method, window_s, s).confusion
            if cm is not None:
                correct += int(np.trace(cm))
                total += int(cm.sum())
        return correct, total

    def chance_p_value(self, method: str, window_s: float) -> float:
        """One-sided binomial test of pooled accuracy against 1/4."""
        k, n = self.pooled_counts(method, window_s)
        if n == 0:
            return float("nan")
        return float(stats.binomtest(k, n, 0.25, alternative="greater").pvalue)

    def errors(self) -> List[CellResult]:
        return [c for _, c in sorted(self.cells.items()) if not c.ok]

    def rows(self):
        for m in self.methods:
            for w in self.window_lengths:
                for s in range(self.n_subjects):
                    yield m, w, s, self.cell(m, w, s).accuracy

    def summary(self) -> List[dict]:
        return [{"method": m, "window_s": w, "mean": self.mean(m, w), "std": self.std(m, w),
                 "n_ok": int(np.sum(~np.isnan(self.accuracies(m, w)))),
                 "per_subject": [float(a) for a in self.accuracies(m, w)]}
                for m in self.methods for w in self.window_lengths]

    def ablation(self) -> Optional[dict]:
        """Attention versus identity at the longest window, with a soft-criterion flag."""
        if not set(NEURAL_METHODS) <= set(self.methods):
            return None
        w = max(self.window_lengths)
        gap = self.mean("macnn_bilstm", w) - self.mean("cnn_bilstm", w)
        if math.isnan(gap):
            flag = "incomplete"
        elif gap >= 0:
            flag = "ok"
        elif gap >= -0.05:
            flag = "attention_below_baseline"
        else:
            flag = "attention_below_baseline_blocking"
        return {"window_s": w, "macnn_bilstm": self.mean("macnn_bilstm", w),
                "cnn_bilstm": self.mean("cnn_bilstm", w), "gap": gap, "flag": flag}


def _bank(cfg: ExperimentConfig, windows: EpochSet):
    return build_references(n_harmonics=cfg.cca_harmonics,
                            sampling_rate=windows.meta.sampling_rate,
                            n_samples=windows.n_samples)


def _cca_predictions(windows: EpochSet, cfg: ExperimentConfig) -> np.ndarray:
    bank = _bank(cfg, windows)
    return np.array([int(cca_classify(x, bank)[0]) for x in windows.data])


def _fbcca_predictions(subband_windows: Sequence[EpochSet], cfg: ExperimentConfig) -> np.ndarray:
    bank = _bank(cfg, subband_windows[0])
    stacked = zip(*(w.data for w in subband_windows))
    return np.array([int(fbcca_classify_subbands(bands, bank, cfg.fbcca)[0])
                     for bands in stacked])


def run_subject(cfg: ExperimentConfig, subject: int,
                raw: Optional[EpochSet] = None) -> List[CellResult]:
    """All cells of one subject; failures are recorded per cell."""
    results = []

    def failed(method, w, exc):
        log.warning("cell %s/%gs/subject %d failed: %s", method, w, subject, exc)
        return CellResult(method, w, subject, float("nan"), None,
                          f"{type(exc).__name__}: {exc}")

    try:
        raw = subject_session(cfg, subject) if raw is None else raw
        split = subject_split(cfg, subject, raw)
        bands = subband_splits(cfg, subject, raw) if "fbcca" in cfg.methods else None
    except CELL_ERRORS as exc:
        return [failed(m, w, exc) for w in cfg.window_lengths for m in cfg.methods]
    for wi, w in enumerate(cfg.window_lengths):
        try:
            train_w, test_w = split.windows(cfg, w)
        except CELL_ERRORS as exc:
            results.extend(failed(m, w, exc) for m in cfg.methods)
            continue
        features = None
        for method in cfg.methods:
            try:
                if method in NEURAL_METHODS:
                    if features is None:
                        features = (raw_features(cfg, train_w), raw_features(cfg, test_w))
                    clf, _ = fit_neural(cfg, method, subject, wi, features[0], train_w.labels)
                    pred = clf.predict(features[1])
                elif method == "fbcca":
                    pred = _fbcca_predictions([b.windows(cfg, w)[1] for b in bands], cfg)
                else:
                    pred = _cca_predictions(test_w, cfg)
                cm = confusion_matrix(test_w.labels, pred)
                results.append(CellResult(method, w, subject, accuracy_from_confusion(cm), cm))
            except CELL_ERRORS as exc:
                results.append(failed(method, w, exc))
    return results


def _run_subject_job(args):
    cfg, subject, raw = args
    return run_subject(cfg, subject, raw)


def run_benchmark(cfg: ExperimentConfig, data: Optional[Sequence[EpochSet]] = None,
                  workers: int = 1) -> BenchmarkTable:
    """Evaluate every (method, window, subject) cell.

    ``data`` optionally supplies raw sessions per subject (for example read
    from SSVP1 files); otherwise each subject is generated from its derived
    seed. Subjects run in a process pool when ``workers > 1``; results do not
    depend on the worker count.
    """
    if any(m in NEURAL_METHODS for m in cfg.methods):
        model_config(cfg, "macnn_bilstm")
        train_config(cfg, 0)
    if data is not None and len(data) != cfg.n_subjects:
        raise ValueError(f"{len(data)} sessions supplied for {cfg.n_subjects} subjects")
    jobs = [(cfg, s, None if data is None else data[s]) for s in range(cfg.n_subjects)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            batches = list(pool.map(_run_subject_job, jobs))
    else:
        batches = [_run_subject_job(job) for job in jobs]
    cells = {(c.method, c.window_s, c.subject): c for batch in batches for c in batch}
    return BenchmarkTable(cfg.methods, cfg.window_lengths, cfg.n_subjects, cells)
