"""Generic-object loss (matching + focal + L1) and the object-level alignment loss."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import logsumexp

from .errors import DomainError, EmptyPositiveSet, ShapeError
from .geometry import Box3D


@dataclass(frozen=True)
class LossConfig:
    alpha: float = 0.25
    gamma: float = 2.0
    focal_weight: float = 1.0
    l1_weight: float = 1.0
    temperature: float = 0.07


@dataclass(frozen=True)
class Prediction:
    objectness: float
    box: Box3D

    def __post_init__(self):
        if not 0.0 < self.objectness < 1.0:
            raise DomainError(f"objectness {self.objectness} must lie strictly in (0, 1)")


@dataclass(frozen=True)
class MatchResult:
    assignment: dict  # target index -> prediction index
    total_cost: float


def hungarian_match(cost) -> MatchResult:
    """Minimum-cost injective assignment of targets (rows) to predictions (columns)."""
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise ShapeError(f"cost must be a matrix, got shape {cost.shape}")
    n_targets, n_preds = cost.shape
    if n_targets > n_preds:
        raise ShapeError(f"{n_targets} targets cannot be matched to {n_preds} predictions")
    if not np.all(np.isfinite(cost)):
        raise ShapeError("cost matrix has non-finite entries")
    if n_targets == 0:
        return MatchResult({}, 0.0)
    rows, cols = linear_sum_assignment(cost)
    assignment = {int(r): int(c) for r, c in zip(rows, cols)}
    total = math.fsum(cost[r, c] for r, c in assignment.items())
    return MatchResult(assignment, total)


def focal_loss(p: float, is_object: bool, alpha: float = 0.25, gamma: float = 2.0) -> float:
    if not 0.0 < p < 1.0:
        raise DomainError(f"probability {p} must lie strictly in (0, 1)")
    if is_object:
        return -alpha * (1.0 - p) ** gamma * math.log(p)
    return -(1.0 - alpha) * p**gamma * math.log1p(-p)


def box_vector(box: Box3D) -> np.ndarray:
    return np.array(box.center + box.size)


def l1_box_loss(pred: Box3D, target: Box3D) -> float:
    return float(np.sum(np.abs(box_vector(pred) - box_vector(target))))


def generic_object_loss(
    preds: Sequence[Prediction], targets: Sequence[Box3D], cfg: LossConfig = LossConfig()
) -> tuple[float, MatchResult]:
    """Matched focal + L1 terms plus the background focal term for unmatched predictions."""
    if len(targets) > len(preds):
        raise ShapeError(f"{len(targets)} targets but only {len(preds)} predictions")
    pos = np.array([focal_loss(p.objectness, True, cfg.alpha, cfg.gamma) for p in preds])
    neg = np.array([focal_loss(p.objectness, False, cfg.alpha, cfg.gamma) for p in preds])
    cost = np.zeros((len(targets), len(preds)))
    for t, target in enumerate(targets):
        for k, pred in enumerate(preds):
            cost[t, k] = cfg.focal_weight * pos[k] + cfg.l1_weight * l1_box_loss(pred.box, target)
    match = hungarian_match(cost)
    matched = set(match.assignment.values())
    # fsum keeps the total independent of prediction order
    terms = [cost[t, k] for t, k in match.assignment.items()]
    terms += [cfg.focal_weight * neg[k] for k in range(len(preds)) if k not in matched]
    return math.fsum(terms), match


def _alignment_terms(f3d, f2d, positives, delta):
    f3d = np.asarray(f3d, dtype=np.float64)
    f2d = np.asarray(f2d, dtype=np.float64)
    if delta <= 0:
        raise DomainError("temperature must be positive")
    if len(f3d) != len(positives):
        raise ShapeError("one positive set is needed per 3D feature")
    masks = np.zeros((len(f3d), len(f2d)), dtype=bool)
    for i, pos in enumerate(positives):
        pos = list(pos)
        if not pos:
            raise EmptyPositiveSet(f"3D feature {i} has no positive 2D features")
        if min(pos) < 0 or max(pos) >= len(f2d):
            raise ShapeError(f"positive index out of range for feature {i}")
        masks[i, pos] = True
    logits = f3d @ f2d.T / delta
    return f3d, f2d, masks, logits


def alignment_loss(f3d, f2d, positives, delta: float = 0.07) -> float:
    """Mean negative log of the softmax mass each 3D feature puts on its positives."""
    _, _, masks, logits = _alignment_terms(f3d, f2d, positives, delta)
    if len(logits) == 0:
        return 0.0
    num = logsumexp(np.where(masks, logits, -np.inf), axis=1)
    den = logsumexp(logits, axis=1)
    return float(np.mean(np.maximum(den - num, 0.0)))


def alignment_loss_grad(f3d, f2d, positives, delta: float = 0.07) -> np.ndarray:
    """Analytic gradient of :func:`alignment_loss` with respect to ``f3d``."""
    f3d, f2d, masks, logits = _alignment_terms(f3d, f2d, positives, delta)
    n = len(f3d)
    if n == 0:
        return np.zeros_like(f3d)
    p_all = np.exp(logits - logsumexp(logits, axis=1, keepdims=True))
    masked = np.where(masks, logits, -np.inf)
    p_pos = np.exp(masked - logsumexp(masked, axis=1, keepdims=True))
    return (p_all - p_pos) @ f2d / (delta * n)
