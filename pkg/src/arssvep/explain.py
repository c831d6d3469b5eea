"""Shapley attribution: exact coalition enumeration and KernelSHAP.

Features index the last axis of a model input, so the same machinery
explains flat feature vectors ``[80]`` and feature sequences ``[T, 80]``
(where masking feature ``j`` replaces its whole column). A masked feature
takes the background value (interventional convention), and a coalition's
value is the model output averaged over the background set.
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import EstimationError, ParameterError, ShapeError, SizeError
from .features import feature_names as default_feature_names
from .signals import Stimulus

MAX_EXACT_FEATURES = 15


class Explainer:
    """Model handle plus background set.

    Parameters
    ----------
    model : callable
        Maps a batch ``[N, *input_shape]`` to outputs ``[N, n_outputs]``
        (class probabilities) or ``[N]``.
    background : array_like
        Background inputs ``[K, *input_shape]``, ``K >= 1``.
    target : int
        Output column explained by the single-target estimators.
    check_probabilities : bool
        Require outputs on the background to be probability vectors.
    """

    def __init__(self, model: Callable[[np.ndarray], np.ndarray], background,
                 target: int = 0, feature_names: Optional[Sequence[str]] = None,
                 check_probabilities: bool = True, batch_size: int = 8192):
        background = np.asarray(background, dtype=float)
        if background.ndim < 2 or background.shape[0] == 0:
            raise ShapeError("background must be a non-empty batch [K, ..., n_features]")
        self.model = model
        self.background = background
        self.batch_size = int(batch_size)
        self.n_features = background.shape[-1]
        if feature_names is None:
            feature_names = (default_feature_names() if self.n_features == 80
                             else [f"x{j}" for j in range(self.n_features)])
        if len(feature_names) != self.n_features:
            raise ShapeError(f"{len(feature_names)} names for {self.n_features} features")
        self.feature_names = tuple(feature_names)
        out = self._call(background)
        if check_probabilities:
            if np.any(out < -1e-12) or not np.allclose(out.sum(axis=1), 1.0, atol=1e-6, rtol=0):
                raise ParameterError("model outputs are not probability vectors")
        self.n_outputs = out.shape[1]
        if not 0 <= target < self.n_outputs:
            raise ParameterError(f"target {target} outside 0..{self.n_outputs - 1}")
        self.target = int(target)
        self.expected_value = out.mean(axis=0)

    @property
    def input_shape(self) -> Tuple[int, ...]:
        return self.background.shape[1:]

    def _call(self, x: np.ndarray) -> np.ndarray:
        out = np.asarray(self.model(x), dtype=float)
        if out.ndim == 1:
            out = out[:, None]
        if out.ndim != 2 or out.shape[0] != len(x):
            raise ShapeError(f"model returned shape {out.shape} for {len(x)} inputs")
        return out

    def coalition_values(self, instance: np.ndarray, masks: np.ndarray) -> np.ndarray:
        """``v(S)`` for every row of ``masks[n, n_features]`` (True keeps the instance value).

        Returns ``[n, n_outputs]``.
        """
        instance = np.asarray(instance, dtype=float)
        if instance.shape != self.input_shape:
            raise ShapeError(f"instance shape {instance.shape} != {self.input_shape}")
        masks = np.asarray(masks, dtype=bool)
        K = len(self.background)
        per_chunk = max(1, self.batch_size // K)
        expand = (slice(None), None) + (None,) * (instance.ndim - 1)
        out = []
        for i in range(0, len(masks), per_chunk):
            m = masks[i:i + per_chunk][expand]
            x = np.where(m, instance, self.background[None])
            y = self._call(x.reshape((-1,) + self.input_shape))
            out.append(y.reshape(len(m), K, -1).mean(axis=1))
        return np.concatenate(out, axis=0) if out else np.zeros((0, self.n_outputs))


@dataclass(frozen=True)
class Attribution:
    """Shapley values for one instance and one output.

    ``phi0`` is the value of the empty coalition, which equals the mean
    background output when every feature is active. ``prediction`` is the
    value of the full coalition, the model output at the instance.
    """

    phi: np.ndarray
    phi0: float
    prediction: float
    target: int
    estimator: str
    n_samples: int
    instance: np.ndarray = field(repr=False)
    feature_names: Tuple[str, ...] = ()
    instance_id: Optional[int] = None

    def __post_init__(self):
        if self.estimator not in ("exact", "kernel"):
            raise ParameterError(f"unknown estimator {self.estimator!r}")
        scale = max(1.0, abs(self.prediction), abs(self.phi0), float(np.abs(self.phi).sum()))
        if self.additivity_error() > 1e-10 * scale:
            raise EstimationError(
                f"attribution violates additivity by {self.additivity_error():.3g}")

    def additivity_error(self) -> float:
        return abs(self.phi0 + float(np.sum(self.phi)) - self.prediction)

    def ranking(self) -> List[int]:
        """Feature indices by decreasing ``|phi|``; ties keep index order."""
        return list(np.argsort(-np.abs(self.phi), kind="stable"))


def _active(explainer: Explainer, active_features) -> np.ndarray:
    if active_features is None:
        return np.arange(explainer.n_features)
    active = np.asarray(sorted(set(int(j) for j in active_features)), dtype=np.int64)
    if active.size == 0 or active[0] < 0 or active[-1] >= explainer.n_features:
        raise ParameterError("active features must be a non-empty subset of feature indices")
    return active


def _masks(explainer: Explainer, active: np.ndarray, bits: np.ndarray) -> np.ndarray:
    masks = np.ones((len(bits), explainer.n_features), dtype=bool)
    masks[:, active] = bits
    return masks


def _attributions(explainer, instance, active, phi, v0, v1, estimator, n_samples,
                  targets, instance_id):
    out = []
    for t in targets:
        full = np.zeros(explainer.n_features)
        full[active] = phi[:, t]
        out.append(Attribution(full, float(v0[t]), float(v1[t]), int(t), estimator,
                               int(n_samples), np.asarray(instance, dtype=float),
                               explainer.feature_names, instance_id))
    return out


def _targets(explainer: Explainer, all_outputs: bool):
    return range(explainer.n_outputs) if all_outputs else [explainer.target]


def _exact(explainer, instance, active_features, all_outputs, instance_id=None):
    active = _active(explainer, active_features)
    M = active.size
    if M > MAX_EXACT_FEATURES:
        raise SizeError(f"exact enumeration of {M} features needs 2^{M} coalitions; "
                        f"use kernel_shap for more than {MAX_EXACT_FEATURES}")
    codes = np.arange(2 ** M)
    bits = (codes[:, None] >> np.arange(M)) & 1
    v = explainer.coalition_values(instance, _masks(explainer, active, bits.astype(bool)))
    size = bits.sum(axis=1)
    weight = np.array([math.factorial(s) * math.factorial(M - s - 1) / math.factorial(M)
                       for s in range(M)])
    phi = np.zeros((M, v.shape[1]))
    for j in range(M):
        without = codes[bits[:, j] == 0]
        phi[j] = weight[size[without]] @ (v[without | (1 << j)] - v[without])
    return _attributions(explainer, instance, active, phi, v[0], v[-1], "exact", 2 ** M,
                         _targets(explainer, all_outputs), instance_id)


def exact_shapley(explainer: Explainer, instance, active_features=None) -> Attribution:
    """Shapley values by enumerating all ``2^M`` coalitions of the active features.

    Features outside ``active_features`` stay at their instance values and
    receive zero attribution.
    """
    return _exact(explainer, instance, active_features, False)[0]


def exact_shapley_all(explainer: Explainer, instance, active_features=None) -> List[Attribution]:
    """:func:`exact_shapley` for every model output, sharing one enumeration."""
    return _exact(explainer, instance, active_features, True)


def shapley_kernel_weight(M: int, size) -> np.ndarray:
    """``(M - 1) / (C(M, s) s (M - s))`` for ``0 < s < M``."""
    size = np.asarray(size)
    comb = np.array([math.comb(M, int(s)) for s in size.ravel()], dtype=float).reshape(size.shape)
    return (M - 1) / (comb * size * (M - size))


def _size_coalitions(M: int, size: int) -> np.ndarray:
    rows = np.zeros((math.comb(M, size), M), dtype=bool)
    for i, members in enumerate(itertools.combinations(range(M), size)):
        rows[i, list(members)] = True
    return rows


def _coalitions(M: int, n_samples: int, rng: np.random.Generator):
    """Interior coalitions and their regression weights.

    Coalition sizes are grouped into complementary levels ``{s, M - s}``.
    Starting from the outermost level, a level is enumerated completely
    (each coalition weighted by the Shapley kernel) while its share of the
    remaining budget, proportional to its kernel mass, covers all of its
    coalitions. The leftover budget draws complementary pairs from the
    remaining levels in proportion to their mass; each draw carries an equal
    share of that mass, so the weights are unbiased for the full kernel sum.
    """
    if M < 31 and n_samples >= 2 ** M:
        codes = np.arange(1, 2 ** M - 1)
        bits = ((codes[:, None] >> np.arange(M)) & 1).astype(bool)
        return bits, shapley_kernel_weight(M, bits.sum(axis=1))
    levels = list(range(1, M // 2 + 1))
    members = {s: sorted({s, M - s}) for s in levels}
    mass = {s: sum((M - 1) / (k * (M - k)) for k in members[s]) for s in levels}
    count = {s: sum(math.comb(M, k) for k in members[s]) for s in levels}
    budget = n_samples - 2
    left = sum(mass.values())
    bits, weights = [], []
    while levels:
        s = levels[0]
        if count[s] > budget or budget * mass[s] / left < count[s] - 1e-8:
            break
        for k in members[s]:
            rows = _size_coalitions(M, k)
            bits.append(rows)
            weights.append(np.full(len(rows), float(shapley_kernel_weight(M, k))))
        budget -= count[s]
        left -= mass[s]
        levels.pop(0)
    n_pairs = budget // 2
    if levels and n_pairs:
        p = np.array([mass[s] for s in levels])
        drawn = rng.choice(levels, size=n_pairs, p=p / p.sum())
        ranks = rng.random((n_pairs, M)).argsort(axis=1)
        z = ranks < drawn[:, None]
        bits.append(np.concatenate([z, ~z], axis=0))
        weights.append(np.full(2 * n_pairs, left / (2 * n_pairs)))
    return np.concatenate(bits, axis=0), np.concatenate(weights)


def _kernel(explainer, instance, n_samples, seed, active_features, all_outputs,
            instance_id=None):
    active = _active(explainer, active_features)
    M = active.size
    if n_samples < 2 * M + 2:
        raise SizeError(f"n_samples must be at least 2*M + 2 = {2 * M + 2}")
    ends = explainer.coalition_values(
        instance, _masks(explainer, active, np.array([[False] * M, [True] * M])))
    v0, v1 = ends
    if M == 1:
        phi = (v1 - v0)[None, :]
        return _attributions(explainer, instance, active, phi, v0, v1, "kernel", 2,
                             _targets(explainer, all_outputs), instance_id)
    rng = np.random.default_rng(seed)
    bits, w = _coalitions(M, n_samples, rng)
    v = explainer.coalition_values(instance, _masks(explainer, active, bits))
    # eliminate the last coefficient through sum(phi) = v1 - v0
    z = bits.astype(float)
    A = z[:, :-1] - z[:, -1:]
    b = (v - v0) - z[:, -1:] * (v1 - v0)
    sw = np.sqrt(w)[:, None]
    sol, _, rank, _ = np.linalg.lstsq(A * sw, b * sw, rcond=None)
    if rank < M - 1:
        raise EstimationError(
            f"coalition design has rank {rank} < {M - 1}; increase n_samples")
    phi = np.vstack([sol, (v1 - v0) - sol.sum(axis=0)])
    return _attributions(explainer, instance, active, phi, v0, v1, "kernel", len(bits) + 2,
                         _targets(explainer, all_outputs), instance_id)


def kernel_shap(explainer: Explainer, instance, n_samples: int = 4096, seed: int = 0,
                active_features=None) -> Attribution:
    """KernelSHAP estimate for the explainer's target output.

    When ``n_samples`` covers all ``2^M`` coalitions they are enumerated and
    weighted by the Shapley kernel, which reproduces exact Shapley values.
    Otherwise the smallest and largest coalition sizes are enumerated while
    the budget allows and complementary pairs are sampled for the rest (see
    :func:`_coalitions`). The empty and full coalitions enter as the
    equality constraint

    .. math:: \\phi_0 = v(\\emptyset), \\quad \\sum_j \\phi_j = v(F) - v(\\emptyset)

    which is enforced exactly by eliminating one coefficient.

    Raises
    ------
    SizeError
        If ``n_samples < 2 M + 2``.
    EstimationError
        If the sampled design is rank deficient.
    """
    return _kernel(explainer, instance, n_samples, seed, active_features, False)[0]


def kernel_shap_all(explainer: Explainer, instance, n_samples: int = 4096, seed: int = 0,
                    active_features=None, instance_id: Optional[int] = None) -> List[Attribution]:
    """:func:`kernel_shap` for every output, sharing one set of coalitions."""
    return _kernel(explainer, instance, n_samples, seed, active_features, True, instance_id)


def stratified_indices(labels, size: int, seed: int = 0) -> np.ndarray:
    """Up to ``size`` indices drawn round-robin over classes, sorted."""
    labels = np.asarray(labels, dtype=np.int64)
    rng = np.random.default_rng(seed)
    pools = [list(rng.permutation(np.flatnonzero(labels == c))) for c in np.unique(labels)]
    chosen = []
    while len(chosen) < min(size, len(labels)):
        for pool in pools:
            if pool and len(chosen) < size:
                chosen.append(pool.pop(0))
    return np.sort(np.asarray(chosen, dtype=np.int64))


@dataclass(frozen=True)
class ImportanceTable:
    """Mean ``|phi|`` per feature, per class and overall.

    ``overall`` averages the per-class importances with equal class weight.
    """

    feature_names: Tuple[str, ...]
    per_class: Dict[int, np.ndarray]
    overall: np.ndarray
    counts: Dict[int, int]

    def values(self, cls: Optional[int] = None) -> np.ndarray:
        return self.overall if cls is None else self.per_class[cls]

    def ranking(self, cls: Optional[int] = None) -> List[Tuple[str, float]]:
        vals = self.values(cls)
        order = np.argsort(-vals, kind="stable")
        return [(self.feature_names[j], float(vals[j])) for j in order]

    def top(self, k: int, cls: Optional[int] = None) -> List[str]:
        return [name for name, _ in self.ranking(cls)[:k]]

    def rows(self, cls: Optional[int] = None):
        label = "overall" if cls is None else class_label(cls)
        return [(name, label, value, rank)
                for rank, (name, value) in enumerate(self.ranking(cls), start=1)]


def class_label(cls: int) -> str:
    return Stimulus(cls).title if 0 <= cls < 4 else str(cls)


def aggregate_importance(attributions: Sequence[Attribution]) -> ImportanceTable:
    if not attributions:
        raise ParameterError("no attributions to aggregate")
    names = attributions[0].feature_names
    by_class: Dict[int, List[np.ndarray]] = {}
    for a in attributions:
        if a.feature_names != names:
            raise ShapeError("attributions disagree on feature names")
        by_class.setdefault(a.target, []).append(np.abs(a.phi))
    per_class = {c: np.mean(v, axis=0) for c, v in sorted(by_class.items())}
    overall = np.mean(list(per_class.values()), axis=0)
    return ImportanceTable(tuple(names), per_class, overall,
                           {c: len(v) for c, v in sorted(by_class.items())})


def write_importance_csv(path, table: ImportanceTable, cls: Optional[int] = None) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["feature", "class", "mean_abs_shap", "rank"])
        for name, label, value, rank in table.rows(cls):
            writer.writerow([name, label, repr(value), rank])
