import itertools
import logging

import numpy as np
import pytest

from gmembed.clustering import (
    _lloyd,
    gmm_em,
    hard_assign,
    kmeans,
    kmeans_pp_seeds,
    medoid,
    top_k_near_medoid,
)
from gmembed.exceptions import ContractError
from gmembed.numerics import seeded_rng


def exhaustive_two_means(Z):
    """Brute-force optimal 2-partition inertia (point 0 pinned to side A)."""
    m = Z.shape[0]
    best = np.inf
    for bits in itertools.product([0, 1], repeat=m - 1):
        parts = np.array([0, *bits])
        if parts.min() == parts.max():
            continue
        inertia = 0.0
        for j in (0, 1):
            members = Z[parts == j]
            inertia += float(np.sum((members - members.mean(axis=0)) ** 2))
        best = min(best, inertia)
    return best


# --- kmeans ---

def test_kmeans_single_cluster_closed_form():
    rng = seeded_rng(0)
    Z = rng.normal((30, 4))
    result = kmeans(Z, 1, seeded_rng(1))
    assert np.allclose(result.centroids[0], Z.mean(axis=0), atol=1e-12)
    expected = float(np.sum((Z - Z.mean(axis=0)) ** 2))
    assert result.inertia == pytest.approx(expected, rel=1e-12)


def test_kmeans_one_point_per_cluster():
    rng = seeded_rng(2)
    Z = rng.normal((6, 3)) * 10
    result = kmeans(Z, 6, seeded_rng(3))
    assert result.inertia == pytest.approx(0.0, abs=1e-18)


def test_kmeans_matches_exhaustive_optimum():
    for seed in range(5):
        Z = seeded_rng(seed).normal((12, 2))
        result = kmeans(Z, 2, seeded_rng(100 + seed), restarts=8)
        assert result.inertia == pytest.approx(exhaustive_two_means(Z), abs=1e-9)


def test_kmeans_inertia_non_increasing():
    rng = seeded_rng(4)
    Z = rng.normal((60, 5))
    result = kmeans(Z, 4, seeded_rng(5))
    trace = result.inertia_trace
    assert all(b <= a + 1e-9 for a, b in zip(trace, trace[1:]))


def test_kmeans_final_assignment_is_voronoi():
    rng = seeded_rng(6)
    Z = rng.normal((50, 3))
    result = kmeans(Z, 3, seeded_rng(7))
    d2 = ((Z[:, None, :] - result.centroids[None, :, :]) ** 2).sum(axis=2)
    assert np.array_equal(result.assignments, np.argmin(d2, axis=1))
    assert result.inertia == pytest.approx(
        float(d2[np.arange(50), result.assignments].sum()), rel=1e-12
    )


def test_kmeans_empty_cluster_reseeded(caplog):
    # two identical seed centroids force one to go empty on the first pass
    Z = np.array([[0.0, 0.0], [0.1, 0.0], [5.0, 0.0], [5.1, 0.0]])
    init = np.array([[0.05, 0.0], [0.05, 0.0]])
    with caplog.at_level(logging.WARNING):
        result = _lloyd(Z, init, max_iter=50, tol=1e-9)
    assert "reseeding" in caplog.text
    assert set(result.assignments.tolist()) == {0, 1}
    assert result.inertia == pytest.approx(0.01, abs=1e-12)


def test_kmeans_contracts():
    with pytest.raises(ContractError):
        kmeans(np.zeros((2, 2)), 3, seeded_rng(0))


def test_kmeans_pp_spread_seeds():
    # k-means++ must pick distinct, spread-out seeds on separated data
    rng = seeded_rng(8)
    Z = np.concatenate([rng.normal((20, 2)), rng.normal((20, 2)) + 50.0])
    seeds = kmeans_pp_seeds(Z, 2, seeded_rng(9))
    assert np.linalg.norm(seeds[0] - seeds[1]) > 10.0


# --- gmm_em ---

def test_gmm_single_component_mle():
    rng = seeded_rng(10)
    Z = rng.normal((40, 3)) * 2.0 + 1.0
    model = gmm_em(Z, 1, seeded_rng(11))
    assert np.allclose(model.means[0], Z.mean(axis=0), atol=1e-9)
    expected_var = float(np.mean((Z - Z.mean(axis=0)) ** 2))
    assert model.variances[0] == pytest.approx(expected_var, rel=1e-9)
    assert model.weights[0] == pytest.approx(1.0, abs=1e-12)


def test_gmm_two_separated_blobs():
    rng = seeded_rng(12)
    Z = np.concatenate([
        rng.normal((60, 2)) * 0.1,
        rng.normal((60, 2)) * 0.1 + np.array([10.0, 0.0]),
    ])
    model = gmm_em(Z, 2, seeded_rng(13), restarts=2)
    resp = model.responsibilities
    assert np.all((resp > 0.99) | (resp < 0.01))
    got = sorted(model.means[:, 0].tolist())
    assert abs(got[0] - 0.0) < 0.01 * 10 and abs(got[1] - 10.0) < 0.01 * 10
    assert np.all(np.abs(resp.sum(axis=1) - 1.0) < 1e-9)


def test_gmm_log_likelihood_non_decreasing():
    for seed in range(10):
        Z = seeded_rng(seed).normal((50, 4))
        model = gmm_em(Z, 3, seeded_rng(200 + seed))
        trace = model.ll_trace
        assert all(b >= a - 1e-9 for a, b in zip(trace, trace[1:]))


def test_gmm_weights_sum_to_one():
    Z = seeded_rng(14).normal((30, 3))
    model = gmm_em(Z, 4, seeded_rng(15))
    assert abs(model.weights.sum() - 1.0) < 1e-12


def test_gmm_variance_floor_on_degenerate_data(caplog):
    Z = np.tile([[1.0, 2.0]], (10, 1))
    with caplog.at_level(logging.WARNING):
        model = gmm_em(Z, 1, seeded_rng(16))
    assert model.variances[0] >= 1e-8
    assert "floor" in caplog.text


def test_gmm_contracts():
    with pytest.raises(ContractError):
        gmm_em(np.zeros((2, 2)), 3, seeded_rng(0))


# --- hard_assign ---

def test_hard_assign_rows():
    model = gmm_em(seeded_rng(17).normal((20, 2)), 2, seeded_rng(18))
    model.responsibilities = np.array([[0.9, 0.1], [0.5, 0.5], [0.2, 0.8]])
    assert hard_assign(model).tolist() == [0, 0, 1]


def test_hard_assign_matches_argmax_oracle():
    model = gmm_em(seeded_rng(19).normal((40, 3)), 3, seeded_rng(20))
    expected = [int(np.argmax(row)) for row in model.responsibilities]
    assert hard_assign(model).tolist() == expected


# --- medoid / top-k ---

def test_medoid_singleton_and_tie():
    assert medoid(np.array([[3.0, 1.0]])) == 0
    assert medoid(np.array([[1.0, 0.0], [-1.0, 0.0]])) == 0  # symmetric pair


def test_medoid_matches_brute_force():
    Z = seeded_rng(21).normal((50, 4))
    center = Z.mean(axis=0)
    expected = int(np.argmin([float(np.sum((z - center) ** 2)) for z in Z]))
    assert medoid(Z) == expected


def test_top_k_is_medoid_for_k1():
    Z = seeded_rng(22).normal((30, 3))
    assignments = np.zeros(30, dtype=int)
    (top,) = top_k_near_medoid(Z, assignments, 0, 1)
    assert top == medoid(Z)


def test_top_k_saturates():
    Z = seeded_rng(23).normal((5, 2))
    assignments = np.zeros(5, dtype=int)
    top = top_k_near_medoid(Z, assignments, 0, 100)
    assert len(top) == 5 and set(top.tolist()) == set(range(5))


def test_top_k_matches_sort_oracle():
    Z = seeded_rng(24).normal((120, 4))
    assignments = (np.arange(120) % 2).astype(int)
    top = top_k_near_medoid(Z, assignments, 1, 16)
    members = np.flatnonzero(assignments == 1)
    med = members[medoid(Z[members])]
    dists = [(float(np.linalg.norm(Z[i] - Z[med])), int(i)) for i in members]
    expected = [i for _, i in sorted(dists)][:16]
    assert top.tolist() == expected
    assert top[0] == med


def test_top_k_permutation_equivariant():
    Z = seeded_rng(25).normal((40, 3))
    assignments = np.zeros(40, dtype=int)
    top = top_k_near_medoid(Z, assignments, 0, 7)
    perm = seeded_rng(26).permutation(40)
    inverse = np.argsort(perm)
    top_permuted = top_k_near_medoid(Z[perm], assignments, 0, 7)
    assert np.array_equal(perm[top_permuted], # map back to original ids
                          np.array([i for i in top]))


def test_top_k_unknown_group():
    Z = seeded_rng(27).normal((10, 2))
    with pytest.raises(ContractError):
        top_k_near_medoid(Z, np.zeros(10, dtype=int), 5, 3)
