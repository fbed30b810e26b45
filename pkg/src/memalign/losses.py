"""Alignment loss kernels and their analytic gradients.

All arithmetic is float64. Memory vectors are constants: gradients flow
only into the live target feature (and, for the domain discriminator, its
parameters). The gradient reversal contract is exact negation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .errors import ConfigError, NonFiniteLossError
from .retrieval import RetrievalResult

SIGMOID_CLAMP = 1e-7


@dataclass(frozen=True)
class LossWeights:
    """Term weights of the overall objective plus the negative-pair margin."""

    lambda1: float = 1.0
    lambda2: float = 0.1
    lambda3: float = 0.1
    margin: float = 1.0

    def __post_init__(self) -> None:
        for name in ("lambda1", "lambda2", "lambda3"):
            if getattr(self, name) < 0.0:
                raise ConfigError(f"{name}: must be >= 0")
        if self.margin <= 0.0:
            raise ConfigError("margin: must be > 0")


@dataclass
class LossBreakdown:
    """Per-term record of one optimization step.

    total = l_sup + lambda1*l_unsup + lambda2*l_dis + lambda3*l_ins; the
    n_* fields count the instances that actually contributed to each term.
    """

    l_sup: float
    l_unsup: float
    l_dis: float
    l_ins: float
    total: float
    weights: LossWeights
    n_sup: int = 0
    n_unsup: int = 0
    n_dis: int = 0
    n_ins: int = 0

    def verify(self, tol: float = 1e-12) -> None:
        w = self.weights
        expected = (
            self.l_sup
            + w.lambda1 * self.l_unsup
            + w.lambda2 * self.l_dis
            + w.lambda3 * self.l_ins
        )
        if abs(self.total - expected) > tol:
            raise AssertionError(
                f"breakdown total {self.total} != recombined {expected}"
            )

    def as_dict(self) -> Dict[str, float]:
        return {
            "l_sup": self.l_sup,
            "l_unsup": self.l_unsup,
            "l_dis": self.l_dis,
            "l_ins": self.l_ins,
            "total": self.total,
            "n_sup": self.n_sup,
            "n_unsup": self.n_unsup,
            "n_dis": self.n_dis,
            "n_ins": self.n_ins,
        }


def _check_nonzero(vec: np.ndarray, what: str) -> float:
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise ValueError(f"zero-norm {what}")
    return norm


def positive_loss(
    target: np.ndarray,
    positives: Sequence[Tuple[np.ndarray, float]],
    stop_similarity_grad: bool = False,
) -> Tuple[float, np.ndarray]:
    """Similarity-weighted pull toward retrieved same-category features.

    value = mean_k S(F, E_k) * ||F - E_k||. The similarity factor is a live
    function of F, so the gradient carries both product-rule terms;
    ``stop_similarity_grad`` freezes S for the ablation variant. At an
    exactly coincident positive the distance subgradient is taken as zero.
    """
    if not positives:
        raise ValueError("positives must be non-empty")
    f = np.asarray(target, dtype=np.float64)
    nf = _check_nonzero(f, "target feature")

    value = 0.0
    grad = np.zeros_like(f)
    for entry in positives:
        e = np.asarray(entry[0], dtype=np.float64)
        ne = _check_nonzero(e, "positive feature")
        diff = f - e
        dist = float(np.linalg.norm(diff))
        dot = float(f @ e)
        sim = min(1.0, max(-1.0, dot / (nf * ne)))
        value += sim * dist

        dist_grad = diff / dist if dist > 0.0 else np.zeros_like(f)
        grad += sim * dist_grad
        if not stop_similarity_grad:
            sim_grad = e / (nf * ne) - (dot / (nf**3 * ne)) * f
            grad += dist * sim_grad
    k = len(positives)
    return value / k, grad / k


def negative_loss(
    target: np.ndarray,
    negatives: Sequence[np.ndarray],
    margin: float,
) -> Tuple[float, np.ndarray]:
    """Max-margin push away from the other-category features.

    value = mean_k max(0, margin - ||F - E_k||); inactive hinges (distance
    at or beyond the margin) contribute nothing to value or gradient.
    """
    if not negatives:
        raise ValueError("negatives must be non-empty")
    if margin <= 0.0:
        raise ValueError(f"margin must be > 0, got {margin}")
    f = np.asarray(target, dtype=np.float64)

    value = 0.0
    grad = np.zeros_like(f)
    for entry in negatives:
        e = np.asarray(entry, dtype=np.float64)
        diff = f - e
        dist = float(np.linalg.norm(diff))
        if dist < margin:
            value += margin - dist
            if dist > 0.0:
                grad -= diff / dist
    k = len(negatives)
    return value / k, grad / k


def instance_alignment_loss(
    batch: Sequence[Sequence[Tuple[np.ndarray, RetrievalResult]]],
    margin: float,
    stop_similarity_grad: bool = False,
) -> Tuple[float, List[np.ndarray]]:
    """Image-then-instance mean of positive plus negative terms.

    ``batch`` groups (target feature, retrieval result) pairs by image.
    Images with no surviving instances drop out of the outer mean; an empty
    batch is worth 0 with no gradients. Returned gradients follow the input
    traversal order and are already scaled for both means.
    """
    images = [img for img in batch if len(img) > 0]
    if not images:
        return 0.0, []

    value = 0.0
    grads: List[np.ndarray] = []
    n_images = len(images)
    for instances in images:
        k_i = len(instances)
        image_value = 0.0
        for feature, result in instances:
            pos_val, pos_grad = positive_loss(
                feature, result.positives, stop_similarity_grad
            )
            if result.negatives:
                neg_val, neg_grad = negative_loss(
                    feature, result.negative_vectors, margin
                )
            else:
                neg_val, neg_grad = 0.0, np.zeros_like(pos_grad)
            image_value += pos_val + neg_val
            grads.append((pos_grad + neg_grad) / (k_i * n_images))
        value += image_value / k_i
    return value / n_images, grads


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # tanh form is overflow-safe for large |z|
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def discriminator_feature_gradients(
    features: Sequence[Tuple[np.ndarray, int]],
    disc_params: np.ndarray,
) -> List[np.ndarray]:
    """Unreversed per-feature gradients of the discriminator loss."""
    _, _, grads = _discriminator_terms(features, disc_params)
    return grads


def discriminator_loss(
    features: Sequence[Tuple[np.ndarray, int]],
    disc_params: np.ndarray,
) -> Tuple[float, np.ndarray, List[np.ndarray]]:
    """Mean binary cross-entropy of a logistic domain discriminator.

    ``disc_params`` is the affine map [w, b] over the feature. Returns the
    loss value, the ordinary parameter gradient, and the per-feature
    gradients negated (what a gradient reversal layer hands the feature
    extractor).
    """
    value, grad_disc, grads = _discriminator_terms(features, disc_params)
    return value, grad_disc, [np.negative(g) for g in grads]


def _discriminator_terms(
    features: Sequence[Tuple[np.ndarray, int]],
    disc_params: np.ndarray,
) -> Tuple[float, np.ndarray, List[np.ndarray]]:
    if not features:
        raise ValueError("at least one feature required")
    params = np.asarray(disc_params, dtype=np.float64)
    if not np.all(np.isfinite(params)):
        raise ValueError("non-finite discriminator parameters")
    dim = params.shape[0] - 1
    w, b = params[:dim], params[dim]

    n = len(features)
    mat = np.empty((n, dim), dtype=np.float64)
    labels = np.empty(n, dtype=np.float64)
    for i, (vec, domain) in enumerate(features):
        if domain not in (0, 1):
            raise ValueError(f"domain label {domain} not in {{0, 1}}")
        mat[i] = np.asarray(vec, dtype=np.float64)
        labels[i] = domain

    z = mat @ w + b
    p = _sigmoid(z)
    p_safe = np.clip(p, SIGMOID_CLAMP, 1.0 - SIGMOID_CLAMP)
    value = float(
        np.mean(-labels * np.log(p_safe) - (1.0 - labels) * np.log(1.0 - p_safe))
    )

    dz = (p - labels) / n
    grad_disc = np.concatenate([dz @ mat, [float(np.sum(dz))]])
    feature_grads = [dz[i] * w for i in range(n)]
    return value, grad_disc, feature_grads


def combine(
    l_sup: float,
    l_unsup: float,
    l_dis: float,
    l_ins: float,
    weights: LossWeights,
) -> LossBreakdown:
    """Weighted sum of the four objective terms."""
    terms = {"l_sup": l_sup, "l_unsup": l_unsup, "l_dis": l_dis, "l_ins": l_ins}
    bad = {k: v for k, v in terms.items() if not math.isfinite(v)}
    if bad:
        raise NonFiniteLossError(f"non-finite loss terms: {bad} (all terms: {terms})")
    total = (
        l_sup
        + weights.lambda1 * l_unsup
        + weights.lambda2 * l_dis
        + weights.lambda3 * l_ins
    )
    return LossBreakdown(
        l_sup=l_sup,
        l_unsup=l_unsup,
        l_dis=l_dis,
        l_ins=l_ins,
        total=total,
        weights=weights,
    )
