"""Evaluation protocol: NMI, precision/recall/F1, retrieval curves
(Recall@K / Acc@K), KNN classification, and Gaussian-posterior classification.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ContractError
from .gaussian_manifold import ClassGaussians, posteriors
from .validation import as_labels, as_matrix, check_positive_int

DEFAULT_KS = (1, 2, 4, 8, 16, 32)
DEFAULT_KNN_K = 11


@dataclass
class RetrievalCurve:
    ks: tuple
    recall_at_k: dict  # K -> fraction of queries with a same-class hit
    acc_at_k: dict  # K -> mean same-class fraction among the K

    def to_dict(self) -> dict:
        return {
            "ks": list(self.ks),
            "recall_at_k": {str(k): v for k, v in self.recall_at_k.items()},
            "acc_at_k": {str(k): v for k, v in self.acc_at_k.items()},
        }


@dataclass
class ClassificationReport:
    accuracy: float
    precision: float  # macro
    recall: float  # macro
    f1: float  # harmonic mean of the macro precision and recall
    confusion: np.ndarray  # (c, c), rows = true class, cols = predicted
    per_class_precision: np.ndarray = field(default=None)
    per_class_recall: np.ndarray = field(default=None)
    per_class_f1: np.ndarray = field(default=None)

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "confusion": self.confusion.tolist(),
            "per_class_precision": self.per_class_precision.tolist(),
            "per_class_recall": self.per_class_recall.tolist(),
            "per_class_f1": self.per_class_f1.tolist(),
        }


def entropy(labels) -> float:
    """Shannon entropy (nats) of a label vector's empirical distribution."""
    labels = as_labels(labels)
    if labels.size == 0:
        raise ContractError("entropy of an empty label vector is undefined")
    _, counts = np.unique(labels, return_counts=True)
    p = counts / labels.size
    return float(-np.sum(p * np.log(p)))


def nmi(assignments, labels) -> float:
    """Normalized mutual information: I / mean(H(assignments), H(labels)).

    1.0 for identical partitions up to relabeling. If both partitions are
    single blocks the partitions agree trivially (1.0); if exactly one has
    zero entropy there is no shared information (0.0).
    """
    assignments = as_labels(assignments, name="assignments")
    labels = as_labels(labels, n_rows=assignments.shape[0])
    m = assignments.size
    if m == 0:
        raise ContractError("nmi needs nonempty partitions")
    _, a_inv = np.unique(assignments, return_inverse=True)
    _, l_inv = np.unique(labels, return_inverse=True)
    n_a, n_l = a_inv.max() + 1, l_inv.max() + 1
    joint = np.zeros((n_a, n_l))
    np.add.at(joint, (a_inv, l_inv), 1.0)
    joint /= m
    pa = joint.sum(axis=1)
    pl = joint.sum(axis=0)
    h_a = float(-np.sum(pa[pa > 0] * np.log(pa[pa > 0])))
    h_l = float(-np.sum(pl[pl > 0] * np.log(pl[pl > 0])))
    if h_a == 0.0 and h_l == 0.0:
        return 1.0
    if h_a == 0.0 or h_l == 0.0:
        return 0.0
    nz = joint > 0
    mi = float(np.sum(joint[nz] * np.log(joint[nz] / np.outer(pa, pl)[nz])))
    value = mi / ((h_a + h_l) / 2.0)
    return float(min(max(value, 0.0), 1.0))


def f1_score(precision: float, recall: float) -> float:
    """2PR/(P+R), with the 0/0 case defined as 0."""
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def classification_report(preds, labels, n_classes: int) -> ClassificationReport:
    """Confusion-matrix derived accuracy and macro precision/recall/F1.

    Classes absent from both preds and labels contribute P = R = 0 and still
    count in the macro means.
    """
    n_classes = check_positive_int(n_classes, "n_classes")
    preds = as_labels(preds, n_classes=n_classes, name="preds")
    labels = as_labels(labels, n_rows=preds.shape[0], n_classes=n_classes)
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(confusion, (labels, preds), 1)
    diag = np.diag(confusion).astype(np.float64)
    pred_totals = confusion.sum(axis=0).astype(np.float64)
    true_totals = confusion.sum(axis=1).astype(np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        prec = np.where(pred_totals > 0, diag / pred_totals, 0.0)
        rec = np.where(true_totals > 0, diag / true_totals, 0.0)
    per_f1 = np.array([f1_score(p, r) for p, r in zip(prec, rec)])
    macro_p = float(prec.mean())
    macro_r = float(rec.mean())
    return ClassificationReport(
        accuracy=float(diag.sum() / confusion.sum()),
        precision=macro_p,
        recall=macro_r,
        f1=f1_score(macro_p, macro_r),
        confusion=confusion,
        per_class_precision=prec,
        per_class_recall=rec,
        per_class_f1=per_f1,
    )


def _neighbor_order(Z: np.ndarray) -> np.ndarray:
    """Per query (row), the other rows sorted by distance then index."""
    sq = (
        np.sum(Z * Z, axis=1)[:, None]
        - 2.0 * Z @ Z.T
        + np.sum(Z * Z, axis=1)[None, :]
    )
    np.maximum(sq, 0.0, out=sq)
    np.fill_diagonal(sq, np.inf)  # the query itself is excluded
    return np.argsort(sq, axis=1, kind="stable")


def retrieval_curve(Z, labels, ks=DEFAULT_KS) -> RetrievalCurve:
    """Recall@K and Acc@K over all queries, query excluded from its results.

    recall@K: fraction of queries with >= 1 same-class neighbor among the K.
    acc@K: mean fraction of same-class neighbors among the K.
    """
    Z = as_matrix(Z, "Z")
    labels = as_labels(labels, n_rows=Z.shape[0])
    m = Z.shape[0]
    if m < 2:
        raise ContractError("retrieval needs at least 2 samples")
    ks = tuple(check_positive_int(k, "K") for k in ks)
    for k in ks:
        if k >= m:
            raise ContractError(f"K={k} must be smaller than the sample count {m}")
    order = _neighbor_order(Z)
    same = labels[order] == labels[:, None]
    recall, acc = {}, {}
    for k in ks:
        window = same[:, :k]
        recall[k] = float(window.any(axis=1).mean())
        acc[k] = float(window.mean())
    return RetrievalCurve(ks=ks, recall_at_k=recall, acc_at_k=acc)


def knn_classify(train_Z, train_labels, query_Z, k: int = DEFAULT_KNN_K) -> np.ndarray:
    """Majority vote among the k Euclidean-nearest training samples.

    Vote ties break toward the class of the nearest member among the tied
    classes; distance ties break toward the lower training index.
    """
    train_Z = as_matrix(train_Z, "train_Z")
    train_labels = as_labels(train_labels, n_rows=train_Z.shape[0], name="train_labels")
    query_Z = as_matrix(query_Z, "query_Z")
    if query_Z.shape[1] != train_Z.shape[1]:
        raise ContractError("query and training embeddings have different dims")
    k = check_positive_int(k, "k")
    if k > train_Z.shape[0]:
        raise ContractError(f"k={k} exceeds the training set size {train_Z.shape[0]}")
    sq = (
        np.sum(query_Z * query_Z, axis=1)[:, None]
        - 2.0 * query_Z @ train_Z.T
        + np.sum(train_Z * train_Z, axis=1)[None, :]
    )
    order = np.argsort(sq, axis=1, kind="stable")[:, :k]
    neighbor_labels = train_labels[order]
    preds = np.empty(query_Z.shape[0], dtype=np.int64)
    for i, votes in enumerate(neighbor_labels):
        classes, counts = np.unique(votes, return_counts=True)
        top = counts.max()
        tied = set(classes[counts == top].tolist())
        if len(tied) == 1:
            preds[i] = tied.pop()
        else:
            # nearest neighbor whose class is among the tied ones decides
            for lab in votes:
                if int(lab) in tied:
                    preds[i] = int(lab)
                    break
    return preds


def gaussian_classify(query_Z, g: ClassGaussians) -> np.ndarray:
    """Row-wise posterior-argmax classification; ties to the smallest id."""
    query_Z = as_matrix(query_Z, "query_Z")
    return np.argmax(posteriors(query_Z, g), axis=1)
