"""Matching losses: normalised Hamming and clamped endpoint error.

Both losses are linear in the assignment matrix, ``loss(y) = <L, y> + const``,
which is what keeps loss-augmented inference an assignment problem.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import MatchingLike, TrainingInstance, as_assign


@dataclass(frozen=True)
class LossKind:
    variant: str = "hamming"
    sigma: Optional[float] = None  # endpoint only; falls back to the instance's scene width
    clamp: bool = True
    # 1 - mean(d / sigma), the formula as printed; small values then mean bad matches
    literal: bool = False

    def __post_init__(self):
        if self.variant not in ("hamming", "endpoint"):
            raise ValueError(f"unknown loss variant {self.variant!r}")
        if self.sigma is not None and not self.sigma > 0:
            raise ValueError("sigma must be positive")

    @classmethod
    def endpoint(cls, sigma: Optional[float] = None, clamp: bool = True, literal: bool = False) -> "LossKind":
        return cls("endpoint", sigma, clamp, literal)


HAMMING = LossKind()


def hamming_loss(y: MatchingLike, y_true: MatchingLike) -> float:
    y, t = as_assign(y), as_assign(y_true)
    if y.shape != t.shape:
        raise ValueError(f"shape mismatch: {y.shape} vs {t.shape}")
    return 1.0 - float(np.sum(y * t)) / float(np.sum(t * t))


def _scaled_distances(true_positions, target_points, sigma: float, clamp: bool) -> np.ndarray:
    """(n, n') matrix of d(target_i', true_i) / sigma, optionally clamped at 1."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    true_positions = np.asarray(true_positions, dtype=float)
    target_points = np.asarray(target_points, dtype=float)
    d = np.linalg.norm(true_positions[:, None, :] - target_points[None, :, :], axis=2) / sigma
    return np.minimum(d, 1.0) if clamp else d


def endpoint_loss(y: MatchingLike, true_positions, target_points, sigma: float,
                  clamp: bool = True, literal: bool = False) -> float:
    """Mean over query nodes of the (clamped) distance from the chosen to the true point, over sigma."""
    y = as_assign(y)
    d = _scaled_distances(true_positions, target_points, sigma, clamp)
    if d.shape != y.shape:
        raise ValueError(f"shape mismatch: {y.shape} vs {d.shape}")
    mean = float(np.sum(d * y)) / y.shape[0]
    return 1.0 - mean if literal else mean


def true_positions(instance: TrainingInstance) -> np.ndarray:
    return instance.g_prime.points[instance.y_true.perm]


def loss_linearization(kind: LossKind, instance: TrainingInstance):
    """``(L, const)`` with ``loss(y, y_true) == <L, y> + const`` for every matching y."""
    t = as_assign(instance.y_true)
    if kind.variant == "hamming":
        return -t / float(np.sum(t * t)), 1.0
    sigma = kind.sigma if kind.sigma is not None else instance.scene_width
    d = _scaled_distances(true_positions(instance), instance.g_prime.points, sigma, kind.clamp)
    unary = d / t.shape[0]
    return (-unary, 1.0) if kind.literal else (unary, 0.0)


def instance_loss(kind: LossKind, instance: TrainingInstance, y: MatchingLike) -> float:
    if kind.variant == "hamming":
        return hamming_loss(y, instance.y_true)
    sigma = kind.sigma if kind.sigma is not None else instance.scene_width
    return endpoint_loss(y, true_positions(instance), instance.g_prime.points, sigma, kind.clamp, kind.literal)
