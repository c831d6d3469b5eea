"""SHAP reporting for a trained neural classifier."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from ..errors import ArssvepError, EstimationError
from ..explain import (Attribution, Explainer, ImportanceTable, aggregate_importance,
                       kernel_shap_all, stratified_indices)
from ..features import feature_names
from .config import ExperimentConfig, derive_seed

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExplainReport:
    importance: ImportanceTable
    attributions: Tuple[Attribution, ...]
    instance_ids: Tuple[int, ...]
    skipped: Tuple[Tuple[int, str], ...]
    background_ids: Tuple[int, ...]

    def top(self, k: int = 10) -> List[str]:
        return self.importance.top(k)


def run_explain(cfg: ExperimentConfig, classifier, x_test: np.ndarray, y_test: np.ndarray,
                x_train: np.ndarray, y_train: np.ndarray) -> ExplainReport:
    """KernelSHAP over up to ``cfg.shap.n_instances`` stratified test windows.

    A stratified subsample of training windows is the background. Each
    instance gets one attribution per class from a shared coalition sample;
    an instance whose estimate fails is logged and skipped.
    """
    shap = cfg.shap
    subject = shap.subject
    channels = cfg.session.layout.names
    bg_ids = stratified_indices(y_train, shap.n_background, derive_seed(cfg.seed, subject, 5))
    explainer = Explainer(classifier, np.asarray(x_train)[bg_ids],
                          feature_names=feature_names(channels))
    ids = stratified_indices(y_test, shap.n_instances, derive_seed(cfg.seed, subject, 6))
    attributions, kept, skipped = [], [], []
    for i in ids:
        try:
            attributions.extend(kernel_shap_all(
                explainer, x_test[i], shap.n_samples, derive_seed(cfg.seed, subject, 7, int(i)),
                instance_id=int(i)))
            kept.append(int(i))
        except ArssvepError as exc:
            log.warning("explaining test window %d failed: %s", i, exc)
            skipped.append((int(i), f"{type(exc).__name__}: {exc}"))
    if not attributions:
        raise EstimationError("every instance failed to explain; see the log for causes")
    return ExplainReport(aggregate_importance(attributions), tuple(attributions), tuple(kept),
                         tuple(skipped), tuple(int(b) for b in bg_ids))
