"""Filter-bank CCA: sub-band decomposition and weighted correlation fusion."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .cca import ReferenceBank, argmax_frequency, canonical_correlation
from .errors import ParameterError, ShapeError
from .signals import Stimulus, zero_phase_bandpass

DEFAULT_PASSBANDS = ((4.0, 25.0), (8.0, 25.0), (12.0, 25.0))


@dataclass(frozen=True)
class FilterBankSpec:
    """Sub-band passbands and the weight law ``w_k = k**-a + b``."""

    passbands: Tuple[Tuple[float, float], ...] = DEFAULT_PASSBANDS
    a: float = 1.25
    b: float = 0.25
    order: int = 4

    def __post_init__(self):
        bands = tuple((float(lo), float(hi)) for lo, hi in self.passbands)
        object.__setattr__(self, "passbands", bands)
        if not bands:
            raise ParameterError("filter bank needs at least one passband")
        for lo, hi in bands:
            if not 0 < lo < hi:
                raise ParameterError(f"invalid passband [{lo}, {hi}]")
        if [lo for lo, _ in bands] != sorted(lo for lo, _ in bands):
            raise ParameterError("passbands must be ordered by lower edge")
        if self.a <= 0 or self.b < 0:
            raise ParameterError("weights must be positive and decreasing (a > 0, b >= 0)")

    @property
    def n_subbands(self) -> int:
        return len(self.passbands)

    @property
    def weights(self) -> np.ndarray:
        k = np.arange(1, self.n_subbands + 1, dtype=float)
        return k ** -self.a + self.b

    def validate(self, sampling_rate: float) -> None:
        for lo, hi in self.passbands:
            if hi >= sampling_rate / 2:
                raise ParameterError(
                    f"passband [{lo}, {hi}] reaches Nyquist ({sampling_rate / 2:g} Hz)")


def subband_decompose(window: np.ndarray, spec: FilterBankSpec,
                      sampling_rate: float = 1000.0) -> List[np.ndarray]:
    spec.validate(sampling_rate)
    return [zero_phase_bandpass(window, sampling_rate, lo, hi, spec.order)
            for lo, hi in spec.passbands]


def fbcca_score(window: np.ndarray, bank: ReferenceBank,
                spec: FilterBankSpec = FilterBankSpec()) -> Dict[float, float]:
    window = np.atleast_2d(window)
    _check_length(window, bank)
    return fbcca_score_subbands(subband_decompose(window, spec, bank.sampling_rate), bank, spec)


def fbcca_score_subbands(subbands: Sequence[np.ndarray], bank: ReferenceBank,
                         spec: FilterBankSpec = FilterBankSpec()) -> Dict[float, float]:
    """Weighted fusion for a window whose sub-bands were filtered upstream.

    Use this when the bank was applied to whole trials before windowing, so
    the short window never sees filter edge transients.
    """
    if len(subbands) != spec.n_subbands:
        raise ShapeError(f"{len(subbands)} sub-bands supplied, bank has {spec.n_subbands}")
    subbands = [np.atleast_2d(sb) for sb in subbands]
    for sb in subbands:
        _check_length(sb, bank)
    weights = spec.weights
    scores = {}
    for f in bank.frequencies:
        rhos = [canonical_correlation(sb, bank[f]).rho for sb in subbands]
        scores[f] = float(np.dot(weights, rhos))
    return scores


def _check_length(window: np.ndarray, bank: ReferenceBank) -> None:
    if window.shape[1] != bank.n_samples:
        raise ShapeError(
            f"window has {window.shape[1]} samples, references have {bank.n_samples}")


def fbcca_classify(window: np.ndarray, bank: ReferenceBank,
                   spec: FilterBankSpec = FilterBankSpec()) -> Tuple[Stimulus, Dict[float, float]]:
    scores = fbcca_score(window, bank, spec)
    return Stimulus.from_frequency(argmax_frequency(scores)), scores


def fbcca_classify_subbands(subbands: Sequence[np.ndarray], bank: ReferenceBank,
                            spec: FilterBankSpec = FilterBankSpec()
                            ) -> Tuple[Stimulus, Dict[float, float]]:
    scores = fbcca_score_subbands(subbands, bank, spec)
    return Stimulus.from_frequency(argmax_frequency(scores)), scores
