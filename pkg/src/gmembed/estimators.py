"""Estimator-style wrappers around the functional core.

These follow the scikit-learn protocol (``fit``/``transform``/``predict``,
``get_params``/``set_params`` via ``BaseEstimator``) so the embeddings compose
with pipelines, ``clone``, and model selection from the wider ecosystem.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin

from . import clustering as _clustering
from . import metrics as _metrics
from .data import Dataset, apply_standardizer, fit_standardizer
from .encoder import forward
from .exceptions import ContractError
from .gaussian_manifold import ClassGaussians, posteriors
from .numerics import seeded_rng
from .subspace import SubspaceConfig, train_subspace
from .trainer import TrainConfig, train_sgm, train_triplet
from .validation import as_labels, as_matrix


def _require_fitted(estimator, attr):
    if getattr(estimator, attr, None) is None:
        raise ContractError(
            f"{type(estimator).__name__} is not fitted yet; call fit() first"
        )


class _EmbeddingBase(BaseEstimator, TransformerMixin):
    """Shared fit plumbing for the trained-encoder transformers."""

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            loss=self._loss_kind,
            samples_per_class=self.samples_per_class,
            n_updates=self.n_updates,
            learning_rate=self.learning_rate,
            reg_weight=self.reg_weight,
            sigma=self.sigma,
            triplet_count=getattr(self, "triplet_count", 128),
            margin=getattr(self, "margin", 0.2),
            hidden=tuple(self.hidden),
            embed_dim=self.embed_dim,
            activation=self.activation,
            seed=self.random_state,
        )

    def _prepare(self, X, y):
        X = as_matrix(X)
        y = as_labels(y, n_rows=X.shape[0], name="y")
        classes = np.unique(y)
        if not np.array_equal(classes, np.arange(classes.size)):
            raise ContractError("y must use dense class ids 0..c-1")
        if self.standardize:
            self.feature_mean_, self.feature_scale_ = fit_standardizer(X)
            X = apply_standardizer(X, self.feature_mean_, self.feature_scale_)
        else:
            self.feature_mean_, self.feature_scale_ = None, None
        self.classes_ = classes
        return Dataset(X=X, labels=y, n_classes=classes.size)

    def transform(self, X):
        """Embed rows of X into the learned space."""
        _require_fitted(self, "params_")
        X = as_matrix(X)
        if self.feature_mean_ is not None:
            X = apply_standardizer(X, self.feature_mean_, self.feature_scale_)
        Z, _ = forward(self.params_, X)
        return Z


class GaussianManifoldEmbedding(_EmbeddingBase):
    """Embedding trained so each class forms an isotropic Gaussian cluster.

    fit(X, y) runs the class-balanced training loop; transform(X) embeds;
    predict(X) classifies by posterior argmax under the per-class Gaussians
    fitted on the training embeddings.
    """

    _loss_kind = "sgm"

    def __init__(self, embed_dim=64, hidden=(64,), activation="relu", sigma=0.5,
                 reg_weight=0.01, samples_per_class=30, n_updates=1000,
                 learning_rate=1e-4, standardize=True, random_state=0):
        self.embed_dim = embed_dim
        self.hidden = hidden
        self.activation = activation
        self.sigma = sigma
        self.reg_weight = reg_weight
        self.samples_per_class = samples_per_class
        self.n_updates = n_updates
        self.learning_rate = learning_rate
        self.standardize = standardize
        self.random_state = random_state

    def fit(self, X, y):
        dataset = self._prepare(X, y)
        config = self._train_config()
        self.params_, self.report_ = train_sgm(dataset, config, seeded_rng(config.seed))
        Z, _ = forward(self.params_, dataset.X)
        self.class_gaussians_ = ClassGaussians.from_embeddings(
            Z, dataset.labels, dataset.n_classes, self.sigma
        )
        self.loss_trace_ = self.report_.loss_trace
        return self

    def predict_proba(self, X):
        _require_fitted(self, "class_gaussians_")
        return posteriors(self.transform(X), self.class_gaussians_)

    def predict(self, X):
        _require_fitted(self, "class_gaussians_")
        return _metrics.gaussian_classify(self.transform(X), self.class_gaussians_)


class TripletEmbedding(_EmbeddingBase):
    """Embedding trained with the triplet hinge baseline."""

    _loss_kind = "triplet"

    def __init__(self, embed_dim=64, hidden=(64,), activation="relu", margin=0.2,
                 triplet_count=128, reg_weight=0.0, sigma=0.5, samples_per_class=30,
                 n_updates=1000, learning_rate=1e-4, standardize=True, random_state=0):
        self.embed_dim = embed_dim
        self.hidden = hidden
        self.activation = activation
        self.margin = margin
        self.triplet_count = triplet_count
        self.reg_weight = reg_weight
        self.sigma = sigma
        self.samples_per_class = samples_per_class
        self.n_updates = n_updates
        self.learning_rate = learning_rate
        self.standardize = standardize
        self.random_state = random_state

    def fit(self, X, y):
        dataset = self._prepare(X, y)
        config = self._train_config()
        self.params_, self.report_ = train_triplet(dataset, config, seeded_rng(config.seed))
        self.loss_trace_ = self.report_.loss_trace
        return self


class MixtureSubspaceEmbedding(_EmbeddingBase):
    """Embedding plus discovered sub-classes (level loop of EM splits).

    After fit, ``sublabels_`` holds the final sub-class assignment of the
    training rows and ``lineage_`` maps every sub-class to its parent class.
    """

    _loss_kind = "sgm"

    def __init__(self, max_level=5, min_members=None, warm_start=True, em_restarts=1,
                 embed_dim=64, hidden=(64,), activation="relu", sigma=0.5,
                 reg_weight=0.01, samples_per_class=30, n_updates=1000,
                 learning_rate=1e-4, standardize=True, random_state=0):
        self.max_level = max_level
        self.min_members = min_members
        self.warm_start = warm_start
        self.em_restarts = em_restarts
        self.embed_dim = embed_dim
        self.hidden = hidden
        self.activation = activation
        self.sigma = sigma
        self.reg_weight = reg_weight
        self.samples_per_class = samples_per_class
        self.n_updates = n_updates
        self.learning_rate = learning_rate
        self.standardize = standardize
        self.random_state = random_state

    def fit(self, X, y):
        dataset = self._prepare(X, y)
        config = SubspaceConfig(
            train=self._train_config(),
            max_level=self.max_level,
            min_members=self.min_members,
            warm_start=self.warm_start,
            em_restarts=self.em_restarts,
        )
        self.params_, self.sublabels_, self.lineage_ = train_subspace(
            dataset, config, seeded_rng(config.train.seed)
        )
        return self


class KMeans(BaseEstimator):
    """Lloyd k-means with k-means++ seeding (own implementation)."""

    def __init__(self, n_clusters=8, max_iter=300, tol=1e-6, restarts=1, random_state=0):
        self.n_clusters = n_clusters
        self.max_iter = max_iter
        self.tol = tol
        self.restarts = restarts
        self.random_state = random_state

    def fit(self, X, y=None):
        result = _clustering.kmeans(
            as_matrix(X), self.n_clusters, seeded_rng(self.random_state),
            max_iter=self.max_iter, tol=self.tol, restarts=self.restarts,
        )
        self.cluster_centers_ = result.centroids
        self.labels_ = result.assignments
        self.inertia_ = result.inertia
        self.n_iter_ = result.n_iter
        return self

    def predict(self, X):
        _require_fitted(self, "cluster_centers_")
        X = as_matrix(X)
        d2 = _clustering._sq_distances(X, self.cluster_centers_)
        return np.argmin(d2, axis=1)


class IsotropicGaussianMixture(BaseEstimator):
    """EM-fitted mixture of isotropic Gaussians (own implementation)."""

    def __init__(self, n_components=5, max_iter=300, tol=1e-6, restarts=1, random_state=0):
        self.n_components = n_components
        self.max_iter = max_iter
        self.tol = tol
        self.restarts = restarts
        self.random_state = random_state

    def fit(self, X, y=None):
        model = _clustering.gmm_em(
            as_matrix(X), self.n_components, seeded_rng(self.random_state),
            max_iter=self.max_iter, tol=self.tol, restarts=self.restarts,
        )
        self.means_ = model.means
        self.variances_ = model.variances
        self.weights_ = model.weights
        self.responsibilities_ = model.responsibilities
        self.log_likelihood_ = model.log_likelihood
        self._model = model
        return self

    def predict(self, X=None):
        """Component of each fitted sample (hard assignment)."""
        _require_fitted(self, "means_")
        if X is None:
            return _clustering.hard_assign(self._model)
        X = as_matrix(X)
        scores = np.log(self.weights_)[None, :] + _clustering._log_component_densities(
            X, self.means_, self.variances_
        )
        return np.argmax(scores, axis=1)


class KnnClassifier(BaseEstimator, ClassifierMixin):
    """Majority-vote nearest-neighbor classifier over embeddings."""

    def __init__(self, n_neighbors=11):
        self.n_neighbors = n_neighbors

    def fit(self, X, y):
        self.train_Z_ = as_matrix(X)
        self.train_labels_ = as_labels(y, n_rows=self.train_Z_.shape[0], name="y")
        self.classes_ = np.unique(self.train_labels_)
        return self

    def predict(self, X):
        _require_fitted(self, "train_Z_")
        return _metrics.knn_classify(
            self.train_Z_, self.train_labels_, as_matrix(X), self.n_neighbors
        )
