"""Isotropic Gaussian class models in embedding space.

Each class j is modelled as N(mu_j, sigma^2 I) with a shared scalar sigma and
class priors; Bayes' rule turns the densities into a posterior over classes.
The structured manifold loss is the mean squared distance between that
posterior and the one-hot label posterior, plus an embedding-norm regularizer,
and its analytic gradient flows through the batch mean estimation (the class
means are themselves a function of the batch).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ContractError, MissingClassError
from .validation import as_labels, as_matrix, as_vector, check_positive

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class ClassGaussians:
    """Per-class means, one shared isotropic sigma, and class priors."""

    means: np.ndarray  # (c, d)
    sigma: float
    priors: np.ndarray  # (c,)

    def __post_init__(self):
        self.means = as_matrix(self.means, "means")
        self.sigma = check_positive(self.sigma, "sigma")
        self.priors = as_vector(self.priors, "priors")
        if self.priors.shape[0] != self.means.shape[0]:
            raise ContractError(
                f"{self.priors.shape[0]} priors for {self.means.shape[0]} class means"
            )
        if np.any(self.priors < 0):
            raise ContractError("priors must be nonnegative")
        if abs(self.priors.sum() - 1.0) > 1e-12:
            raise ContractError(f"priors sum to {self.priors.sum()!r}, expected 1")

    @property
    def n_classes(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @classmethod
    def from_embeddings(cls, Z, labels, n_classes, sigma, priors=None):
        """Fit means on labelled embeddings; uniform priors unless given."""
        means = estimate_class_means(Z, labels, n_classes)
        if priors is None:
            priors = np.full(n_classes, 1.0 / n_classes)
        return cls(means=means, sigma=sigma, priors=np.asarray(priors, dtype=np.float64))

    def to_dict(self) -> dict:
        """JSON-ready form for run reports."""
        return {
            "means": self.means.tolist(),
            "sigma": self.sigma,
            "priors": self.priors.tolist(),
        }


@dataclass
class SgmLossOutput:
    """Loss value, dL/dZ, and the per-sample posterior matrix."""

    loss: float
    grad: np.ndarray  # (m, d)
    posteriors: np.ndarray  # (m, c)


def estimate_class_means(Z, labels, n_classes) -> np.ndarray:
    """Arithmetic mean of the embeddings of each class; every class must appear."""
    Z = as_matrix(Z, "Z")
    labels = as_labels(labels, n_rows=Z.shape[0], n_classes=n_classes)
    means = np.empty((n_classes, Z.shape[1]))
    for j in range(n_classes):
        members = labels == j
        if not members.any():
            raise MissingClassError(j, "mean estimation needs every class in the batch")
        means[j] = Z[members].mean(axis=0)
    return means


def log_density(z, mean, sigma) -> float:
    """Log of the isotropic normal density N(mean, sigma^2 I) at z."""
    z = as_vector(z, "z")
    mean = as_vector(mean, "mean")
    sigma = check_positive(sigma, "sigma")
    if z.shape != mean.shape:
        raise ContractError(f"z has shape {z.shape}, mean has shape {mean.shape}")
    d = z.shape[0]
    sq = float(np.sum((z - mean) ** 2))
    return -0.5 * d * LOG_2PI - d * float(np.log(sigma)) - sq / (2.0 * sigma**2)


def _log_posterior_scores(Z: np.ndarray, g: ClassGaussians) -> np.ndarray:
    """Unnormalized log posteriors (m, c); the z-independent constant is dropped."""
    # ||z - mu_j||^2 expanded for a single (m, c) distance matrix.
    sq = (
        np.sum(Z * Z, axis=1)[:, None]
        - 2.0 * Z @ g.means.T
        + np.sum(g.means * g.means, axis=1)[None, :]
    )
    np.maximum(sq, 0.0, out=sq)
    with np.errstate(divide="ignore"):
        log_priors = np.log(g.priors)
    return log_priors[None, :] - sq / (2.0 * g.sigma**2)


def posteriors(Z, g: ClassGaussians) -> np.ndarray:
    """Row-wise Bayes posterior over classes, computed via max-shifted exponentials.

    Safe for squared distances far beyond float exponent range; every row sums
    to 1 and each entry lies in [0, 1].
    """
    Z = as_matrix(Z, "Z")
    if Z.shape[1] != g.dim:
        raise ContractError(f"Z has dim {Z.shape[1]}, class means have dim {g.dim}")
    scores = _log_posterior_scores(Z, g)
    scores -= scores.max(axis=1, keepdims=True)
    p = np.exp(scores)
    p /= p.sum(axis=1, keepdims=True)
    return p


def posterior(z, g: ClassGaussians) -> np.ndarray:
    """Posterior class probabilities for a single embedding."""
    z = as_vector(z, "z")
    return posteriors(z[None, :], g)[0]


def predict(z, g: ClassGaussians) -> int:
    """Posterior-argmax class for one embedding; ties go to the smallest id."""
    return int(np.argmax(posterior(z, g)))


def sgm_loss(Z, labels, g: ClassGaussians, reg_weight: float) -> SgmLossOutput:
    """Structured manifold loss and its analytic dL/dZ.

    loss = mean_i ||posterior(z_i) - onehot(y_i)||^2 + (reg/m) * sum_i ||z_i||_2

    The gradient includes the coupling of the class means to the batch: it is
    exact when ``g.means`` came from :func:`estimate_class_means` on this same
    (Z, labels), which is how the trainer uses it. The regularizer's gradient
    at z = 0 is defined as 0.
    """
    Z = as_matrix(Z, "Z")
    c = g.n_classes
    labels = as_labels(labels, n_rows=Z.shape[0], n_classes=c)
    if float(reg_weight) < 0:
        raise ContractError(f"reg_weight must be nonnegative, got {reg_weight}")
    m = Z.shape[0]
    sigma2 = g.sigma**2

    P = posteriors(Z, g)
    onehot = np.zeros_like(P)
    onehot[np.arange(m), labels] = 1.0
    R = P - onehot
    rep_loss = float(np.sum(R * R) / m)

    # dL/da for the softmax scores a_ik: P*(Q - rowsum(Q*P)) with Q = 2R.
    Q = 2.0 * R
    S = np.sum(Q * P, axis=1, keepdims=True)
    G = P * (Q - S) / m

    diffs = Z[:, None, :] - g.means[None, :, :]  # (m, c, d)
    grad = -np.einsum("ik,ikd->id", G, diffs) / sigma2

    # Mean coupling: mu_k averages the class-k rows of Z.
    class_pull = np.einsum("ik,ikd->kd", G, diffs) / sigma2  # (c, d)
    counts = np.bincount(labels, minlength=c).astype(np.float64)
    present = counts > 0
    scaled = np.zeros_like(class_pull)
    scaled[present] = class_pull[present] / counts[present, None]
    grad += scaled[labels]

    loss = rep_loss
    reg_weight = float(reg_weight)
    if reg_weight > 0:
        norms = np.linalg.norm(Z, axis=1)
        loss += reg_weight * float(norms.sum()) / m
        nonzero = norms > 0
        grad[nonzero] += (reg_weight / m) * Z[nonzero] / norms[nonzero, None]

    return SgmLossOutput(loss=loss, grad=grad, posteriors=P)
