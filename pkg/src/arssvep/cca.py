"""Canonical correlation analysis and the sine/cosine reference classifier."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Mapping, Sequence, Tuple

import numpy as np

from .errors import DegenerateInputError, ParameterError, ShapeError
from .signals import STIMULUS_FREQUENCIES, Stimulus

DEFAULT_HARMONICS = 2


@dataclass(frozen=True)
class ReferenceBank:
    """Reference matrices ``Y_f`` of shape ``(2 * n_harmonics, n_samples)``.

    Rows alternate ``sin(2 pi h f t)``, ``cos(2 pi h f t)`` for h = 1..n_harmonics.
    """

    frequencies: Tuple[float, ...]
    n_harmonics: int
    sampling_rate: float
    n_samples: int
    references: Mapping[float, np.ndarray]

    def __getitem__(self, frequency: float) -> np.ndarray:
        return self.references[frequency]


def build_references(frequencies: Sequence[float] = STIMULUS_FREQUENCIES,
                     n_harmonics: int = DEFAULT_HARMONICS,
                     sampling_rate: float = 1000.0,
                     n_samples: int = 1000) -> ReferenceBank:
    frequencies = tuple(sorted(float(f) for f in frequencies))
    if n_harmonics < 1:
        raise ParameterError("n_harmonics must be at least 1")
    if n_samples < 1:
        raise ParameterError("n_samples must be positive")
    top = max(frequencies) * n_harmonics
    if top >= sampling_rate / 2:
        raise ParameterError(
            f"harmonic at {top:g} Hz is not below Nyquist ({sampling_rate / 2:g} Hz)")
    t = np.arange(n_samples) / sampling_rate
    refs = {}
    for f in frequencies:
        rows = []
        for h in range(1, n_harmonics + 1):
            rows.append(np.sin(2 * np.pi * h * f * t))
            rows.append(np.cos(2 * np.pi * h * f * t))
        y = np.array(rows)
        y.setflags(write=False)
        refs[f] = y
    return ReferenceBank(frequencies, n_harmonics, float(sampling_rate), n_samples, refs)


@dataclass(frozen=True)
class CcaResult:
    rho: float
    wx: np.ndarray
    wy: np.ndarray


def _centered(a: np.ndarray, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    level = np.abs(a).max(axis=1)
    a = a - a.mean(axis=1, keepdims=True)
    spread = np.abs(a).max(axis=1)
    for i, (s, lv) in enumerate(zip(spread, level)):
        if s <= 1e-12 * lv or s == 0:
            raise DegenerateInputError(f"{name} row {i} has zero variance", row=(name, i))
    return a


def _basis(a: np.ndarray):
    """Orthonormal basis of the row space of ``a`` plus the map back to row weights.

    Rows are normalised first so that rescaling any single variable changes
    nothing but rounding. Directions with singular value below 1e-12 of the
    largest are dropped, which keeps collinear rows from blowing up.
    """
    norms = np.linalg.norm(a, axis=1)
    u, s, vt = np.linalg.svd((a / norms[:, None]).T, full_matrices=False)
    keep = s > 1e-12 * s[0]
    back = (vt[keep].T / s[keep]) / norms[:, None]
    return u[:, keep], back


def canonical_correlation(X: np.ndarray, Y: np.ndarray) -> CcaResult:
    """Largest canonical correlation between the rows of ``X`` and ``Y``.

    Rows are variables, columns are time points. Each centred block is reduced
    to an orthonormal basis of its row space and the leading singular triplet
    of the product of the two bases gives ``rho`` and the projection vectors.
    """
    X = np.atleast_2d(X)
    Y = np.atleast_2d(Y)
    if X.shape[1] != Y.shape[1]:
        raise ShapeError(f"time axes differ: {X.shape[1]} vs {Y.shape[1]}")
    n, m = X.shape[0], Y.shape[0]
    if X.shape[1] <= n + m:
        raise ShapeError(f"need more than {n + m} time points, got {X.shape[1]}")
    Qx, Bx = _basis(_centered(X, "X"))
    Qy, By = _basis(_centered(Y, "Y"))
    U, s, Vt = np.linalg.svd(Qx.T @ Qy)
    wx = Bx @ U[:, 0]
    wy = By @ Vt[0]
    rho = float(min(max(s[0], 0.0), 1.0))
    return CcaResult(rho, wx, wy)


def argmax_frequency(scores: Mapping[float, float]) -> float:
    """Best-scoring frequency; exact ties go to the lowest frequency."""
    best = None
    for f in sorted(scores):
        if best is None or scores[f] > scores[best]:
            best = f
    return best


def cca_scores(window: np.ndarray, bank: ReferenceBank) -> Dict[float, float]:
    window = np.atleast_2d(window)
    if window.shape[1] != bank.n_samples:
        raise ShapeError(
            f"window has {window.shape[1]} samples, references have {bank.n_samples}")
    return {f: canonical_correlation(window, bank[f]).rho for f in bank.frequencies}


def cca_classify(window: np.ndarray, bank: ReferenceBank) -> Tuple[Stimulus, Dict[float, float]]:
    scores = cca_scores(window, bank)
    return Stimulus.from_frequency(argmax_frequency(scores)), scores
