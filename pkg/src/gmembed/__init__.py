"""Metric learning with Gaussian-structured embedding spaces.

A from-scratch differentiable encoder trained with either the structured
Gaussian-manifold loss (each class pushed toward an isotropic Gaussian in
embedding space) or the triplet hinge baseline; per-class EM splitting to
discover sub-classes; k-means/GMM clustering; and the full evaluation
protocol (NMI, Recall@K/Acc@K, KNN and posterior classification).
"""

from .clustering import GmmModel, KmeansResult, gmm_em, hard_assign, kmeans, medoid, top_k_near_medoid
from .data import (
    BlobsTruth,
    Dataset,
    EmbeddingTable,
    load_csv_dataset,
    load_embeddings,
    save_csv_dataset,
    save_embeddings,
    split,
    synth_blobs,
)
from .encoder import (
    EncoderParams,
    EncoderSpec,
    ForwardCache,
    backward,
    forward,
    init_encoder,
    load_checkpoint,
    save_checkpoint,
)
from .estimators import (
    GaussianManifoldEmbedding,
    IsotropicGaussianMixture,
    KMeans,
    KnnClassifier,
    MixtureSubspaceEmbedding,
    TripletEmbedding,
)
from .exceptions import ContractError, DataError, MissingClassError, TripletInfeasibleError
from .gaussian_manifold import (
    ClassGaussians,
    SgmLossOutput,
    estimate_class_means,
    log_density,
    posterior,
    posteriors,
    predict,
    sgm_loss,
)
from .metrics import (
    ClassificationReport,
    RetrievalCurve,
    classification_report,
    f1_score,
    gaussian_classify,
    knn_classify,
    nmi,
    retrieval_curve,
)
from .numerics import AdamState, RngStream, adam_init, adam_step, seeded_rng
from .subspace import LabelLineage, LineageEntry, SubspaceConfig, split_classes, train_subspace
from .trainer import (
    TrainConfig,
    TrainReport,
    epochs_to_updates,
    sample_class_balanced_batch,
    train,
    train_sgm,
    train_triplet,
)
from .triplet import Triplet, sample_triplets, triplet_loss

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "BlobsTruth",
    "ClassGaussians",
    "ClassificationReport",
    "ContractError",
    "DataError",
    "Dataset",
    "EmbeddingTable",
    "EncoderParams",
    "EncoderSpec",
    "ForwardCache",
    "GaussianManifoldEmbedding",
    "GmmModel",
    "IsotropicGaussianMixture",
    "KMeans",
    "KmeansResult",
    "KnnClassifier",
    "LabelLineage",
    "LineageEntry",
    "MissingClassError",
    "MixtureSubspaceEmbedding",
    "RetrievalCurve",
    "RngStream",
    "SgmLossOutput",
    "SubspaceConfig",
    "TrainConfig",
    "TrainReport",
    "Triplet",
    "TripletEmbedding",
    "TripletInfeasibleError",
    "adam_init",
    "adam_step",
    "backward",
    "classification_report",
    "epochs_to_updates",
    "estimate_class_means",
    "f1_score",
    "forward",
    "gaussian_classify",
    "gmm_em",
    "hard_assign",
    "init_encoder",
    "kmeans",
    "knn_classify",
    "load_checkpoint",
    "load_csv_dataset",
    "load_embeddings",
    "log_density",
    "medoid",
    "nmi",
    "posterior",
    "posteriors",
    "predict",
    "retrieval_curve",
    "sample_class_balanced_batch",
    "sample_triplets",
    "save_checkpoint",
    "save_csv_dataset",
    "save_embeddings",
    "seeded_rng",
    "sgm_loss",
    "split",
    "split_classes",
    "synth_blobs",
    "top_k_near_medoid",
    "train",
    "train_sgm",
    "train_subspace",
    "train_triplet",
    "triplet_loss",
]
