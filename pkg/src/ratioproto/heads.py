"""Probability heads that turn class distances (or similarities) into confidences.

Two families matter most:

* ``SOFTMAX_SQ``: softmax over negative squared distances.
* ``DR`` (distance ratio): confidence proportional to ``d ** -rho``, evaluated
  as a softmax over ``-rho * ln(d)``. Multiplying every distance by the same
  positive factor leaves it unchanged.

The cosine family (NormFace, SphereFace, CosFace, ArcFace) and the two angular
heads are only used on the unit sphere for confidence surfaces.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

from .core import _check_unit, angular_distances

PROB_FLOOR = 1e-30


class HeadKind(str, enum.Enum):
    SOFTMAX_SQ = "SoftmaxSq"
    DR = "DR"
    COS_NORMFACE = "CosNormFace"
    COS_SPHEREFACE = "CosSphereFace"
    COS_COSFACE = "CosCosFace"
    COS_ARCFACE = "CosArcFace"
    ANG_SOFTMAX = "AngSoftmax"
    ANG_DR = "AngDR"

    @classmethod
    def parse(cls, value) -> "HeadKind":
        if isinstance(value, cls):
            return value
        for kind in cls:
            if value in (kind.value, kind.name) or str(value).lower() == kind.value.lower():
                return kind
        raise ValueError(f"unknown head kind {value!r}")


COSINE_KINDS = frozenset(
    {HeadKind.COS_NORMFACE, HeadKind.COS_SPHEREFACE, HeadKind.COS_COSFACE, HeadKind.COS_ARCFACE}
)
ANGULAR_KINDS = frozenset({HeadKind.ANG_SOFTMAX, HeadKind.ANG_DR})
TRAINABLE_KINDS = frozenset({HeadKind.SOFTMAX_SQ, HeadKind.DR})


@dataclass(frozen=True)
class Head:
    """Immutable head descriptor.

    ``log_rho`` holds ``ln(rho)`` and is read only by the ratio heads
    (``DR``, ``AngDR``). ``scale`` and ``margin`` are read by the cosine family.
    """

    kind: HeadKind
    log_rho: float = 2.0
    scale: float = 2.0
    margin: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", HeadKind.parse(self.kind))
        if not math.isfinite(self.log_rho):
            raise ValueError("log_rho must be finite")
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        if not self.margin >= 0:
            raise ValueError("margin must be non-negative")

    @property
    def rho(self) -> float:
        return math.exp(self.log_rho)

    @property
    def uses_ratio(self) -> bool:
        return self.kind in (HeadKind.DR, HeadKind.ANG_DR)


@dataclass(frozen=True)
class ConfidenceVector:
    probs: np.ndarray
    class_order: tuple = field(default=())

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        order = tuple(self.class_order) if self.class_order else tuple(range(probs.shape[0]))
        if len(order) != probs.shape[0]:
            raise ValueError("class_order length does not match probs")
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "class_order", order)

    def __getitem__(self, cls: Hashable) -> float:
        return float(self.probs[self.class_order.index(cls)])

    def argmax(self) -> Hashable:
        # np.argmax returns the first maximum: ties go to the lowest index.
        return self.class_order[int(np.argmax(self.probs))]


def _softmax_last(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _check_distances(distances) -> np.ndarray:
    d = np.asarray(distances, dtype=np.float64)
    if d.ndim == 0 or d.shape[-1] == 0:
        raise ValueError("need at least one distance")
    if not np.all(np.isfinite(d)):
        raise ValueError("distances must be finite")
    if np.any(d < 0):
        raise ValueError("distances must be non-negative")
    return d


def softmax_probs(distances) -> np.ndarray:
    """Softmax of ``-d**2`` along the last axis (vectorized)."""
    d = _check_distances(distances)
    return _softmax_last(-(d * d))


def dr_probs(distances, rho: float) -> np.ndarray:
    """Distance-ratio probabilities along the last axis (vectorized).

    Rows containing exact zeros put all mass on the zero-distance classes,
    split uniformly when there is more than one.
    """
    d = _check_distances(distances)
    if not rho > 0:
        raise ValueError("rho must be positive")
    zero = d == 0
    with np.errstate(divide="ignore"):
        logits = -rho * np.log(np.where(zero, 1.0, d))
    probs = _softmax_last(logits)
    has_zero = zero.any(axis=-1, keepdims=True)
    if np.any(has_zero):
        degenerate = zero / zero.sum(axis=-1, keepdims=True).clip(min=1)
        probs = np.where(has_zero, degenerate, probs)
    return probs


def softmax_confidences(distances: Sequence[float], class_order=()) -> ConfidenceVector:
    d = _check_distances(distances)
    if d.ndim != 1:
        raise ValueError("softmax_confidences takes a single distance vector")
    return ConfidenceVector(softmax_probs(d), class_order)


def dr_confidences(distances: Sequence[float], rho: float, class_order=()) -> ConfidenceVector:
    d = _check_distances(distances)
    if d.ndim != 1:
        raise ValueError("dr_confidences takes a single distance vector")
    return ConfidenceVector(dr_probs(d, rho), class_order)


def head_probs(distances, head: Head, log_rho: float | None = None) -> np.ndarray:
    """Dispatch on a distance-based head; ``log_rho`` overrides the head's value."""
    if head.kind in (HeadKind.SOFTMAX_SQ, HeadKind.ANG_SOFTMAX):
        return softmax_probs(distances)
    if head.kind in (HeadKind.DR, HeadKind.ANG_DR):
        return dr_probs(distances, math.exp(head.log_rho if log_rho is None else log_rho))
    raise ValueError(f"{head.kind.value} is not a distance-based head")


def cross_entropy(conf: ConfidenceVector, true_class: Hashable) -> float:
    if true_class not in conf.class_order:
        raise ValueError(f"class {true_class!r} not in {conf.class_order}")
    p = max(conf[true_class], PROB_FLOOR)
    return -math.log(p)


def cosine_logits(cosines: np.ndarray, head: Head, target_index: int) -> np.ndarray:
    """Logits for the cosine family with the margin applied to one class.

    ``cosines`` has classes on the last axis.
    """
    s = head.scale
    logits = s * np.asarray(cosines, dtype=np.float64)
    cos_t = np.clip(cosines[..., target_index], -1.0, 1.0)
    if head.kind is HeadKind.COS_NORMFACE:
        return logits
    theta = np.arccos(cos_t)
    if head.kind is HeadKind.COS_SPHEREFACE:
        # multiplicative angular margin m=2, k=0, no piecewise extension
        target = s * np.cos(2.0 * theta)
    elif head.kind is HeadKind.COS_COSFACE:
        target = s * (cos_t - head.margin)
    elif head.kind is HeadKind.COS_ARCFACE:
        target = s * np.cos(theta + head.margin)
    else:
        raise ValueError(f"{head.kind.value} is not a cosine head")
    logits = logits.copy()
    logits[..., target_index] = target
    return logits


def cosine_probs(queries: np.ndarray, class_vectors: np.ndarray, head: Head, target_index: int) -> np.ndarray:
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    class_vectors = np.asarray(class_vectors, dtype=np.float64)
    _check_unit(queries, "query")
    _check_unit(class_vectors, "class_vectors")
    cosines = np.clip(queries @ class_vectors.T, -1.0, 1.0)
    return _softmax_last(cosine_logits(cosines, head, target_index))


def cosine_confidences(query, class_vectors, head: Head, target, class_order=()) -> ConfidenceVector:
    """Cosine-similarity head confidences, margin on ``target`` only."""
    if head.kind not in COSINE_KINDS:
        raise ValueError(f"{head.kind.value} is not a cosine head")
    class_vectors = np.asarray(class_vectors, dtype=np.float64)
    order = tuple(class_order) if class_order else tuple(range(class_vectors.shape[0]))
    probs = cosine_probs(query, class_vectors, head, order.index(target))[0]
    return ConfidenceVector(probs, order)


def angular_probs(queries: np.ndarray, class_vectors: np.ndarray, head: Head) -> np.ndarray:
    if head.kind not in ANGULAR_KINDS:
        raise ValueError(f"{head.kind.value} is not an angular head")
    angles = angular_distances(np.atleast_2d(queries), class_vectors)
    return head_probs(angles, head)


def angular_confidences(query, class_vectors, head: Head, class_order=()) -> ConfidenceVector:
    return ConfidenceVector(angular_probs(query, class_vectors, head)[0], class_order)
