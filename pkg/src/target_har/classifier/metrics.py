from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Tuple

import numpy as np

from ..core_types import ActionLabel

NUM_CLASSES = len(ActionLabel)


@dataclass
class Metrics:
    """Classification metrics derived from a confusion matrix (rows = true class)."""

    confusion: np.ndarray
    loss_history: Tuple[float, ...] = field(default_factory=tuple)

    @property
    def support(self) -> np.ndarray:
        return self.confusion.sum(axis=1)

    @property
    def accuracy(self) -> float:
        total = self.confusion.sum()
        return float(np.trace(self.confusion) / total) if total else 0.0

    @property
    def per_class_accuracy(self) -> np.ndarray:
        support = self.support
        diag = np.diag(self.confusion).astype(np.float64)
        return np.divide(diag, support, out=np.zeros_like(diag), where=support > 0)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Metrics):
            return NotImplemented
        return np.array_equal(self.confusion, other.confusion) and tuple(self.loss_history) == tuple(other.loss_history)


def confusion_matrix(true: Sequence[int], pred: Sequence[int], num_classes: int = NUM_CLASSES) -> np.ndarray:
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(true, dtype=int), np.asarray(pred, dtype=int)), 1)
    return cm
