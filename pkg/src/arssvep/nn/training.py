"""Adam training loop with step learning-rate decay, and evaluation."""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from decimal import Decimal
from typing import List, Optional, Tuple

import numpy as np

from ..errors import ConfigError, NumericError, TrainingError
from ..metrics import accuracy_from_confusion, confusion_matrix
from .functional import softmax_cross_entropy
from .model import MACNNBiLSTM


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.01
    weight_decay: float = 1e-5
    lr_decay: float = 0.9
    lr_step: int = 100
    epochs: int = 300
    batch_size: int = 16
    seed: int = 0
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8

    def __post_init__(self):
        if not self.lr > 0:
            raise ConfigError("train.lr", "must be positive")
        if self.weight_decay < 0:
            raise ConfigError("train.weight_decay", "must be non-negative")
        if not 0 < self.lr_decay < 1:
            raise ConfigError("train.lr_decay", "must be in (0, 1)")
        if self.lr_step < 1 or self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("train", "lr_step, epochs and batch_size must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


def learning_rate(cfg: TrainConfig, epoch: int) -> float:
    """Step schedule: ``lr * lr_decay ** (epoch // lr_step)`` for 0-based epochs.

    The product is formed in decimal so 0.01 decayed by 0.9 twice is the
    double nearest 0.0081 rather than a binary-rounded neighbour.
    """
    k = epoch // cfg.lr_step
    return float(Decimal(repr(cfg.lr)) * Decimal(repr(cfg.lr_decay)) ** k)


class Adam:
    """Adam with decoupled weight decay over a model's flat parameter buffer."""

    def __init__(self, model: MACNNBiLSTM, cfg: TrainConfig):
        self.values = model.store.flat
        self.grad = model.store.flat_grad
        self.cfg = cfg
        self.m = np.zeros_like(self.values)
        self.v = np.zeros_like(self.values)
        self.t = 0

    def step(self, lr: float) -> None:
        b1, b2 = self.cfg.betas
        self.t += 1
        self.m *= b1
        self.m += (1 - b1) * self.grad
        self.v *= b2
        self.v += (1 - b2) * self.grad * self.grad
        mhat = self.m / (1 - b1 ** self.t)
        vhat = self.v / (1 - b2 ** self.t)
        if self.cfg.weight_decay:
            self.values *= 1 - lr * self.cfg.weight_decay
        self.values -= lr * mhat / (np.sqrt(vhat) + self.cfg.eps)


@dataclass
class TrainReport:
    train_loss: List[float] = field(default_factory=list)
    train_accuracy: List[float] = field(default_factory=list)
    test_accuracy: List[float] = field(default_factory=list)
    confusion: Optional[np.ndarray] = None
    wall_time: float = 0.0


def evaluate(model: MACNNBiLSTM, x: np.ndarray, y: np.ndarray) -> Tuple[float, np.ndarray]:
    if len(x) == 0:
        raise ValueError("cannot evaluate on an empty set")
    cm = confusion_matrix(y, model.predict(x), model.config.n_classes)
    return accuracy_from_confusion(cm), cm


def train(model: MACNNBiLSTM, x_train: np.ndarray, y_train: np.ndarray,
          x_test: Optional[np.ndarray] = None, y_test: Optional[np.ndarray] = None,
          cfg: TrainConfig = TrainConfig(), track_test: bool = True) -> TrainReport:
    """Mini-batch training with cross-entropy loss.

    Shuffling and dropout draw from separate streams derived from
    ``cfg.seed``, so runs are repeatable bit for bit.
    """
    x_train = np.asarray(x_train, dtype=model.dtype)
    y_train = np.asarray(y_train, dtype=np.int64)
    n = len(x_train)
    if n == 0:
        raise ValueError("training set is empty")
    shuffle_rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(1,)))
    dropout_rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(2,)))
    opt = Adam(model, cfg)
    report = TrainReport()
    has_test = x_test is not None and len(x_test) > 0
    start = time.perf_counter()
    for epoch in range(cfg.epochs):
        lr = learning_rate(cfg, epoch)
        order = shuffle_rng.permutation(n)
        loss_sum = 0.0
        correct = 0
        for i in range(0, n, cfg.batch_size):
            idx = order[i:i + cfg.batch_size]
            try:
                logits = model.forward(x_train[idx], train=True, rng=dropout_rng)
            except NumericError as exc:
                raise TrainingError(f"diverged at epoch {epoch}: {exc}", epoch) from exc
            loss, dlogits = softmax_cross_entropy(logits, y_train[idx])
            if not math.isfinite(loss):
                raise TrainingError(f"loss became non-finite at epoch {epoch}", epoch)
            model.zero_grad()
            model.backward(dlogits)
            opt.step(lr)
            loss_sum += loss * len(idx)
            correct += int(np.sum(np.argmax(logits, axis=1) == y_train[idx]))
        report.train_loss.append(loss_sum / n)
        report.train_accuracy.append(correct / n)
        if has_test and track_test:
            report.test_accuracy.append(evaluate(model, x_test, y_test)[0])
    if not np.isfinite(model.store.flat).all():
        raise TrainingError("parameters became non-finite", cfg.epochs - 1)
    if has_test:
        acc, report.confusion = evaluate(model, x_test, y_test)
        if not track_test:
            report.test_accuracy.append(acc)
    report.wall_time = time.perf_counter() - start
    return report
