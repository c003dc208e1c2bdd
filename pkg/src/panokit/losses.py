"""Voxel-grid loss terms: cross-entropy and Lovasz-softmax."""

from __future__ import annotations

import numpy as np

from .errors import InvariantViolation, NotNormalized, ShapeMismatch

IGNORE_ID = 255


def _flatten(scores, labels, ignore_id):
    s = np.asarray(scores, dtype=float)
    l = np.asarray(labels)
    if s.ndim < 2:
        raise ShapeMismatch("scores must have a trailing class axis")
    if s.shape[:-1] != l.shape:
        raise ShapeMismatch(
            f"scores {s.shape} do not match labels {l.shape} plus class axis")
    s = s.reshape(-1, s.shape[-1])
    l = l.reshape(-1).astype(np.int64)
    keep = l != ignore_id
    s = s[keep]
    l = l[keep]
    if l.size and (l.min() < 0 or l.max() >= s.shape[1]):
        raise InvariantViolation(
            f"labels must lie in 0..{s.shape[1] - 1} outside the ignore id")
    return s, l


def cross_entropy(logits, labels, ignore_id: int = IGNORE_ID) -> float:
    """Mean over non-ignored voxels of -log softmax(logits)[label]."""
    s, l = _flatten(logits, labels, ignore_id)
    if not len(l):
        return 0.0
    m = s.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.sum(np.exp(s - m), axis=1))
    return float(np.mean(lse - s[np.arange(len(l)), l]))


def _jaccard_grad(gt_sorted: np.ndarray) -> np.ndarray:
    """Gradient of the Lovasz extension of the Jaccard loss w.r.t. sorted
    errors: differenced 1 - intersection/union along the sorted prefix."""
    gts = gt_sorted.sum()
    intersection = gts - np.cumsum(gt_sorted)
    union = gts + np.cumsum(1.0 - gt_sorted)
    jaccard = 1.0 - intersection / union
    if len(gt_sorted) > 1:
        jaccard[1:] = jaccard[1:] - jaccard[:-1]
    return jaccard


def lovasz_softmax(probs, labels, ignore_id: int = IGNORE_ID) -> float:
    """Per-class sorted-error Lovasz extension of the Jaccard loss, averaged
    over the classes present in the (non-ignored) ground truth."""
    p, l = _flatten(probs, labels, ignore_id)
    if not len(l):
        return 0.0
    sums = p.sum(axis=1)
    if np.max(np.abs(sums - 1.0)) > 1e-6:
        raise NotNormalized("probability rows must sum to 1")
    if np.any(p < 0):
        raise NotNormalized("probabilities must be non-negative")
    present = np.unique(l)
    losses = []
    for c in present:
        fg = (l == c).astype(float)
        errors = np.abs(fg - p[:, c])
        order = np.argsort(-errors, kind="stable")
        losses.append(float(errors[order] @ _jaccard_grad(fg[order])))
    return float(np.mean(losses))
