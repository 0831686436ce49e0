"""K-means and isotropic GMM-EM over embedding space, plus medoid and top-k
selection for group summaries.

Both fitters seed with k-means++ draws from an RngStream and are pure up to
logging; distances are Euclidean throughout.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ContractError
from .numerics import RngStream
from .validation import as_labels, as_matrix, check_positive_int

log = logging.getLogger(__name__)

VARIANCE_FLOOR = 1e-8


@dataclass
class KmeansResult:
    centroids: np.ndarray  # (K, d)
    assignments: np.ndarray  # (m,)
    inertia: float
    n_iter: int
    inertia_trace: list = field(default_factory=list)


@dataclass
class GmmModel:
    """Isotropic Gaussian mixture: per-component mean, variance, and weight."""

    means: np.ndarray  # (K, d)
    variances: np.ndarray  # (K,)
    weights: np.ndarray  # (K,)
    responsibilities: np.ndarray  # (m, K), rows sum to 1
    log_likelihood: float
    n_iter: int
    ll_trace: list = field(default_factory=list)


def _sq_distances(Z, centers) -> np.ndarray:
    sq = (
        np.sum(Z * Z, axis=1)[:, None]
        - 2.0 * Z @ centers.T
        + np.sum(centers * centers, axis=1)[None, :]
    )
    np.maximum(sq, 0.0, out=sq)
    return sq


def kmeans_pp_seeds(Z: np.ndarray, k: int, rng: RngStream) -> np.ndarray:
    """k-means++ seeding: first center uniform, the rest D^2-weighted."""
    m = Z.shape[0]
    centers = np.empty((k, Z.shape[1]))
    centers[0] = Z[int(rng.integers(m))]
    closest = np.sum((Z - centers[0]) ** 2, axis=1)
    for i in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            # all remaining mass sits on existing centers; any point will do
            centers[i] = Z[int(rng.integers(m))]
            continue
        idx = int(rng.choice(m, p=closest / total))
        centers[i] = Z[idx]
        np.minimum(closest, np.sum((Z - centers[i]) ** 2, axis=1), out=closest)
    return centers


def _lloyd(Z, centroids, max_iter, tol):
    """Lloyd iterations from given centroids; reseeds empty clusters at the
    farthest point from its assigned centroid."""
    k = centroids.shape[0]
    centroids = centroids.copy()
    assignments = None
    inertia_trace = []
    it = 0
    for it in range(1, max_iter + 1):
        sq = _sq_distances(Z, centroids)
        new_assignments = np.argmin(sq, axis=1)
        inertia = float(sq[np.arange(Z.shape[0]), new_assignments].sum())
        inertia_trace.append(inertia)
        if assignments is not None and np.array_equal(new_assignments, assignments):
            assignments = new_assignments
            break
        assignments = new_assignments
        updated = centroids.copy()
        for j in range(k):
            members = assignments == j
            if members.any():
                updated[j] = Z[members].mean(axis=0)
        empty = [j for j in range(k) if not (assignments == j).any()]
        for j in empty:
            dist_to_own = _sq_distances(Z, updated)[np.arange(Z.shape[0]), assignments]
            far = int(np.argmax(dist_to_own))
            log.warning("kmeans: cluster %d went empty; reseeding at sample %d", j, far)
            updated[j] = Z[far]
            assignments[far] = j
        shift = float(np.max(np.linalg.norm(updated - centroids, axis=1)))
        centroids = updated
        if shift < tol:
            sq = _sq_distances(Z, centroids)
            assignments = np.argmin(sq, axis=1)
            inertia_trace.append(float(sq[np.arange(Z.shape[0]), assignments].sum()))
            break
    sq = _sq_distances(Z, centroids)
    assignments = np.argmin(sq, axis=1)
    # exact difference form for the reported inertia (the expanded form above
    # leaves ~1e-14 cancellation residue when points coincide with centroids)
    inertia = float(np.sum((Z - centroids[assignments]) ** 2))
    return KmeansResult(
        centroids=centroids,
        assignments=assignments,
        inertia=inertia,
        n_iter=it,
        inertia_trace=inertia_trace,
    )


def kmeans(Z, n_clusters: int, rng: RngStream, max_iter: int = 300, tol: float = 1e-6,
           restarts: int = 1) -> KmeansResult:
    """Lloyd's algorithm from k-means++ seeds; best of ``restarts`` runs."""
    Z = as_matrix(Z, "Z")
    k = check_positive_int(n_clusters, "n_clusters")
    restarts = check_positive_int(restarts, "restarts")
    if Z.shape[0] < k:
        raise ContractError(f"kmeans needs at least {k} samples, got {Z.shape[0]}")
    best = None
    for r in range(restarts):
        seeds = kmeans_pp_seeds(Z, k, rng.substream(r))
        result = _lloyd(Z, seeds, max_iter, tol)
        if best is None or result.inertia < best.inertia:
            best = result
    return best


def _log_component_densities(Z, means, variances) -> np.ndarray:
    d = Z.shape[1]
    sq = _sq_distances(Z, means)
    return -0.5 * d * np.log(2.0 * np.pi * variances)[None, :] - sq / (2.0 * variances[None, :])


def gmm_em(Z, n_components: int, rng: RngStream, max_iter: int = 300, tol: float = 1e-6,
           restarts: int = 1) -> GmmModel:
    """Isotropic-covariance EM from k-means++ seeds; best of ``restarts`` runs.

    The log-likelihood is non-decreasing across iterations (EM guarantee);
    component variances are floored at 1e-8 with a logged warning if a
    component collapses.
    """
    Z = as_matrix(Z, "Z")
    k = check_positive_int(n_components, "n_components")
    restarts = check_positive_int(restarts, "restarts")
    m, d = Z.shape
    if m < k:
        raise ContractError(f"gmm_em needs at least {k} samples, got {m}")
    best = None
    for r in range(restarts):
        model = _em_single(Z, k, rng.substream(r), max_iter, tol)
        if best is None or model.log_likelihood > best.log_likelihood:
            best = model
    return best


def _em_single(Z, k, rng, max_iter, tol):
    m, d = Z.shape
    means = kmeans_pp_seeds(Z, k, rng)
    global_var = float(np.mean((Z - Z.mean(axis=0)) ** 2))
    variances = np.full(k, max(global_var, VARIANCE_FLOOR))
    weights = np.full(k, 1.0 / k)

    ll_trace = []
    resp = np.full((m, k), 1.0 / k)
    it = 0
    for it in range(1, max_iter + 1):
        # E step
        with np.errstate(divide="ignore"):
            scores = np.log(weights)[None, :] + _log_component_densities(Z, means, variances)
        shift = scores.max(axis=1, keepdims=True)
        log_norm = shift[:, 0] + np.log(np.exp(scores - shift).sum(axis=1))
        ll = float(log_norm.sum())
        resp = np.exp(scores - log_norm[:, None])
        ll_trace.append(ll)
        if len(ll_trace) >= 2 and abs(ll_trace[-1] - ll_trace[-2]) < tol:
            break
        # M step
        nk = resp.sum(axis=0)
        nk = np.maximum(nk, 1e-300)
        weights = nk / m
        means = (resp.T @ Z) / nk[:, None]
        sq = _sq_distances(Z, means)
        variances = (resp * sq).sum(axis=0) / (d * nk)
        collapsed = variances < VARIANCE_FLOOR
        if collapsed.any():
            log.warning(
                "gmm_em: flooring %d collapsed component variance(s) at %g",
                int(collapsed.sum()), VARIANCE_FLOOR,
            )
            variances = np.maximum(variances, VARIANCE_FLOOR)
    return GmmModel(
        means=means,
        variances=variances,
        weights=weights,
        responsibilities=resp,
        log_likelihood=ll_trace[-1],
        n_iter=it,
        ll_trace=ll_trace,
    )


def hard_assign(model: GmmModel) -> np.ndarray:
    """Most-responsible component per sample; ties go to the lower index."""
    return np.argmax(model.responsibilities, axis=1)


def medoid(Z_group) -> int:
    """Index (within the group) of the member closest to the group mean."""
    Z_group = as_matrix(Z_group, "Z_group")
    center = Z_group.mean(axis=0)
    return int(np.argmin(np.sum((Z_group - center) ** 2, axis=1)))


def top_k_near_medoid(Z, assignments, group_id: int, k: int) -> np.ndarray:
    """The k group members nearest the group medoid, ascending by distance
    (medoid first); the whole group if it has fewer than k members."""
    Z = as_matrix(Z, "Z")
    assignments = as_labels(assignments, n_rows=Z.shape[0], name="assignments")
    k = check_positive_int(k, "k")
    members = np.flatnonzero(assignments == int(group_id))
    if members.size == 0:
        raise ContractError(f"group {group_id} has no members")
    med_local = medoid(Z[members])
    med_point = Z[members[med_local]]
    dists = np.linalg.norm(Z[members] - med_point, axis=1)
    order = np.argsort(dists, kind="stable")
    return members[order[: min(k, members.size)]]
