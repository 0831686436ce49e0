"""Triplet-loss baseline: uniform triplet sampling and the squared-distance
hinge loss with its analytic gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ContractError, TripletInfeasibleError
from .numerics import RngStream
from .validation import as_labels, as_matrix, check_positive_int


@dataclass(frozen=True)
class Triplet:
    """Batch indices of an (anchor, positive, negative) triple."""

    anchor: int
    positive: int
    negative: int


def sample_triplets(labels, count: int, rng: RngStream) -> list[Triplet]:
    """Draw ``count`` valid triplets uniformly.

    Anchors are uniform over samples whose class has at least two members;
    the positive is uniform over the anchor's classmates, the negative uniform
    over all samples of other classes. Raises if no valid triplet exists
    (a single class, or no class with two members).
    """
    labels = as_labels(labels)
    count = check_positive_int(count, "count")
    classes, class_counts = np.unique(labels, return_counts=True)
    if classes.size < 2:
        raise TripletInfeasibleError(
            "triplet sampling needs at least two classes in the batch"
        )
    eligible_classes = classes[class_counts >= 2]
    if eligible_classes.size == 0:
        raise TripletInfeasibleError(
            "triplet sampling needs a class with at least two members"
        )
    anchor_pool = np.flatnonzero(np.isin(labels, eligible_classes))
    members = {int(c): np.flatnonzero(labels == c) for c in classes}
    outsiders = {int(c): np.flatnonzero(labels != c) for c in classes}

    triplets = []
    for _ in range(count):
        a = int(anchor_pool[rng.integers(anchor_pool.size)])
        cls = int(labels[a])
        mates = members[cls]
        # one draw over the classmates minus the anchor keeps the per-triplet
        # draw count constant (no rejection loop)
        a_pos = int(np.searchsorted(mates, a))
        k = int(rng.integers(mates.size - 1))
        p = int(mates[k if k < a_pos else k + 1])
        negatives = outsiders[cls]
        n = int(negatives[rng.integers(negatives.size)])
        triplets.append(Triplet(anchor=a, positive=p, negative=n))
    return triplets


def triplet_loss(Z, triplets, margin: float):
    """Mean hinge loss over triplets and its dL/dZ.

    Per triplet: max(0, ||z_a - z_p||^2 - ||z_a - z_n||^2 + margin); the
    subgradient at the hinge point is 0. Gradients accumulate over every
    triplet touching a row.
    """
    Z = as_matrix(Z, "Z")
    if not triplets:
        raise ContractError("triplet_loss needs a nonempty triplet list")
    margin = float(margin)
    if margin < 0:
        raise ContractError(f"margin must be nonnegative, got {margin}")
    m = Z.shape[0]
    a_idx = np.array([t.anchor for t in triplets])
    p_idx = np.array([t.positive for t in triplets])
    n_idx = np.array([t.negative for t in triplets])
    for name, idx in (("anchor", a_idx), ("positive", p_idx), ("negative", n_idx)):
        if idx.min() < 0 or idx.max() >= m:
            raise ContractError(f"{name} index out of range for batch of {m}")

    ap = Z[a_idx] - Z[p_idx]
    an = Z[a_idx] - Z[n_idx]
    violation = np.sum(ap * ap, axis=1) - np.sum(an * an, axis=1) + margin
    active = violation > 0.0
    count = len(triplets)
    loss = float(np.sum(violation[active])) / count if active.any() else 0.0

    grad = np.zeros_like(Z)
    if active.any():
        w = 2.0 / count
        np.add.at(grad, a_idx[active], w * (ap[active] - an[active]))
        np.add.at(grad, p_idx[active], -w * ap[active])
        np.add.at(grad, n_idx[active], w * an[active])
    return loss, grad
