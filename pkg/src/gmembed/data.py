"""Dataset ingestion, synthetic blob generation, stratified splits, and
lossless embedding persistence.

CSV contracts:
  dataset: header ``label,f0,...,f{D-1}``, one sample per row, integer label.
  embeddings: a version comment line, then header ``id,e0,...,e{d-1}``.
Floats are written with shortest round-trip decimal form, so write->read->write
is byte-identical.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .exceptions import ContractError, DataError, MissingClassError
from .numerics import RngStream
from .validation import as_labels, as_matrix, check_positive_int

EMBEDDINGS_FORMAT = "gmembed-embeddings"
EMBEDDINGS_VERSION = 1


@dataclass
class Dataset:
    """Feature matrix with dense integer class labels."""

    X: np.ndarray  # (m, D)
    labels: np.ndarray  # (m,)
    n_classes: int
    class_names: tuple = ()  # original label values, if remapped on load

    def __post_init__(self):
        self.X = as_matrix(self.X, "X")
        self.labels = as_labels(self.labels, n_rows=self.X.shape[0], n_classes=self.n_classes)

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(self.X[indices], self.labels[indices], self.n_classes, self.class_names)

    def with_labels(self, labels, n_classes) -> "Dataset":
        """Same features under a different labelling (e.g. sub-class ids)."""
        return Dataset(self.X, labels, n_classes)

    def class_sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)


@dataclass
class BlobsTruth:
    """Generator ground truth: the true sub-blob of every sample."""

    sub_ids: np.ndarray  # (m,) global sub-blob id
    sub_parent: np.ndarray  # (n_subs,) class of each sub-blob


@dataclass
class EmbeddingTable:
    """Embedding rows aligned with sample ids, tagged with their source model."""

    ids: np.ndarray
    Z: np.ndarray
    checkpoint_id: str = ""

    def __post_init__(self):
        self.Z = as_matrix(self.Z, "Z")
        self.ids = as_labels(self.ids, n_rows=self.Z.shape[0], name="ids")


def _fmt(x: float) -> str:
    # repr of a Python float is the shortest string that round-trips exactly.
    return repr(float(x))


def load_csv_dataset(path) -> Dataset:
    """Parse the dataset CSV contract; labels are remapped to dense 0..c-1."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read dataset {path}: {exc}") from exc
    if not lines:
        raise DataError(f"dataset {path} is empty")
    header = lines[0].split(",")
    if header[0] != "label" or len(header) < 2:
        raise DataError(f"{path}:1: header must be 'label,f0,...', got {lines[0]!r}")
    n_features = len(header) - 1
    expected = ["f%d" % j for j in range(n_features)]
    if header[1:] != expected:
        raise DataError(f"{path}:1: feature columns must be f0..f{n_features - 1}")
    raw_labels, rows = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != n_features + 1:
            raise DataError(
                f"{path}:{lineno}: expected {n_features + 1} fields, got {len(parts)}"
            )
        try:
            label = int(parts[0])
            values = [float(v) for v in parts[1:]]
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
        if label < 0:
            raise DataError(f"{path}:{lineno}: label must be nonnegative, got {label}")
        if not all(np.isfinite(values)):
            raise DataError(f"{path}:{lineno}: non-finite feature value")
        raw_labels.append(label)
        rows.append(values)
    if not rows:
        raise DataError(f"dataset {path} has no samples")
    raw = np.array(raw_labels, dtype=np.int64)
    uniq = np.unique(raw)
    remap = {int(v): j for j, v in enumerate(uniq)}
    labels = np.array([remap[int(v)] for v in raw], dtype=np.int64)
    return Dataset(
        X=np.array(rows, dtype=np.float64),
        labels=labels,
        n_classes=len(uniq),
        class_names=tuple(str(int(v)) for v in uniq),
    )


def save_csv_dataset(dataset: Dataset, path) -> None:
    """Write the dataset CSV contract (dense labels as stored)."""
    header = "label," + ",".join("f%d" % j for j in range(dataset.n_features))
    lines = [header]
    for y, row in zip(dataset.labels, dataset.X):
        lines.append(str(int(y)) + "," + ",".join(_fmt(v) for v in row))
    _atomic_write(path, "\n".join(lines) + "\n")


def _scaled_points(count, n_features, scale, rng, what):
    """``count`` random Gaussian points scaled by ``scale``, pairwise >= scale.

    Standard blob-generator placement: N(0, scale^2 I) draws, so typical
    pairwise distances grow like scale * sqrt(2 * n_features); the retry loop
    guarantees the minimum pairwise distance is never below the scale itself.
    """
    points = scale * rng.normal((count, n_features))
    if count == 1 or scale == 0.0:
        return points
    for _ in range(100):
        gaps = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=2)
        np.fill_diagonal(gaps, np.inf)
        if gaps.min() >= scale:
            return points
        points = scale * rng.normal((count, n_features))
    raise ContractError(
        f"could not place {count} {what} centers pairwise >= {scale} in "
        f"{n_features}-D space"
    )


def synth_blobs(
    n_classes: int,
    per_class: int,
    n_features: int,
    separation: float,
    sub_blobs: int = 1,
    rng: RngStream = None,
    sub_separation: float = 2.0,
) -> tuple[Dataset, BlobsTruth]:
    """Gaussian blobs with optional sub-blob structure inside each class.

    Class centers are random points scaled by ``separation`` (pairwise
    distances >= separation guaranteed; typical distances grow with the
    feature count, as in the usual blob generators); each class's sub-blob
    centers are offset the same way at the ``sub_separation`` scale. Features
    are the sub-blob center plus unit-variance Gaussian noise. separation = 0
    puts every class center at the origin (degenerate control).
    """
    n_classes = check_positive_int(n_classes, "n_classes")
    per_class = check_positive_int(per_class, "per_class")
    n_features = check_positive_int(n_features, "n_features")
    sub_blobs = check_positive_int(sub_blobs, "sub_blobs")
    separation = float(separation)
    sub_separation = float(sub_separation)
    if separation < 0:
        raise ContractError(f"separation must be nonnegative, got {separation}")
    if sub_separation < 0:
        raise ContractError(f"sub_separation must be nonnegative, got {sub_separation}")
    if rng is None:
        raise ContractError("synth_blobs needs an RngStream")

    centers = _scaled_points(n_classes, n_features, separation, rng, "class")

    X = np.empty((n_classes * per_class, n_features))
    labels = np.empty(n_classes * per_class, dtype=np.int64)
    sub_ids = np.empty(n_classes * per_class, dtype=np.int64)
    sub_parent = np.repeat(np.arange(n_classes), sub_blobs)

    base = sub_blobs * [per_class // sub_blobs]
    for b in range(per_class - sum(base)):
        base[b] += 1

    row = 0
    for j in range(n_classes):
        if sub_blobs > 1 and sub_separation > 0.0:
            offsets = _scaled_points(sub_blobs, n_features, sub_separation, rng, "sub-blob")
        else:
            offsets = np.zeros((sub_blobs, n_features))
        for b in range(sub_blobs):
            count = base[b]
            X[row : row + count] = centers[j] + offsets[b] + rng.normal((count, n_features))
            labels[row : row + count] = j
            sub_ids[row : row + count] = j * sub_blobs + b
            row += count
    dataset = Dataset(X=X, labels=labels, n_classes=n_classes)
    return dataset, BlobsTruth(sub_ids=sub_ids, sub_parent=sub_parent)


def split(dataset: Dataset, fractions, rng: RngStream) -> tuple[Dataset, Dataset]:
    """Stratified (train, test) split; both sides keep every class nonempty."""
    if len(fractions) != 2:
        raise ContractError("fractions must be a (train, test) pair")
    f_train, f_test = float(fractions[0]), float(fractions[1])
    if abs(f_train + f_test - 1.0) > 1e-9:
        raise ContractError(f"fractions must sum to 1, got {f_train + f_test}")
    if not (0 < f_train < 1):
        raise ContractError("both splits must be nonempty: fractions must lie in (0, 1)")
    train_idx, test_idx = [], []
    for j in range(dataset.n_classes):
        members = np.flatnonzero(dataset.labels == j)
        if members.size == 0:
            raise MissingClassError(j, "cannot stratify an empty class")
        if members.size < 2:
            raise ContractError(
                f"class {j} has {members.size} sample(s); stratified split needs >= 2"
            )
        perm = members[rng.permutation(members.size)]
        n_test = int(round(f_test * members.size))
        n_test = min(max(n_test, 1), members.size - 1)
        test_idx.append(perm[:n_test])
        train_idx.append(perm[n_test:])
    train = dataset.subset(np.sort(np.concatenate(train_idx)))
    test = dataset.subset(np.sort(np.concatenate(test_idx)))
    return train, test


def save_embeddings(table: EmbeddingTable, path) -> None:
    """Write embeddings losslessly (shortest round-trip decimals)."""
    if table.Z.shape[0] == 0:
        raise DataError("refusing to save an empty embedding table")
    d = table.Z.shape[1]
    lines = [
        f"# {EMBEDDINGS_FORMAT} v{EMBEDDINGS_VERSION} checkpoint={table.checkpoint_id}",
        "id," + ",".join("e%d" % j for j in range(d)),
    ]
    for i, z in zip(table.ids, table.Z):
        lines.append(str(int(i)) + "," + ",".join(_fmt(v) for v in z))
    _atomic_write(path, "\n".join(lines) + "\n")


def load_embeddings(path) -> EmbeddingTable:
    """Read embeddings written by :func:`save_embeddings`; bitwise lossless."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read embeddings {path}: {exc}") from exc
    if len(lines) < 3:
        raise DataError(f"embeddings {path} is truncated")
    head = lines[0].split()
    if len(head) < 3 or head[0] != "#" or head[1] != EMBEDDINGS_FORMAT:
        raise DataError(f"{path}:1: not a {EMBEDDINGS_FORMAT} file")
    version = head[2]
    if version != f"v{EMBEDDINGS_VERSION}":
        raise DataError(
            f"{path}:1: file version {version}, this build reads v{EMBEDDINGS_VERSION}"
        )
    checkpoint_id = ""
    for tok in head[3:]:
        if tok.startswith("checkpoint="):
            checkpoint_id = tok[len("checkpoint=") :]
    header = lines[1].split(",")
    if header[0] != "id":
        raise DataError(f"{path}:2: header must start with 'id'")
    d = len(header) - 1
    ids, rows = [], []
    for lineno, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != d + 1:
            raise DataError(f"{path}:{lineno}: expected {d + 1} fields, got {len(parts)}")
        try:
            ids.append(int(parts[0]))
            rows.append([float(v) for v in parts[1:]])
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
    if not rows:
        raise DataError(f"embeddings {path} has no rows")
    return EmbeddingTable(
        ids=np.array(ids, dtype=np.int64),
        Z=np.array(rows, dtype=np.float64),
        checkpoint_id=checkpoint_id,
    )


def fit_standardizer(X) -> tuple[np.ndarray, np.ndarray]:
    """Per-dimension mean and scale (std, floored) from training data."""
    X = as_matrix(X)
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale = np.where(scale > 1e-12, scale, 1.0)
    return mean, scale


def apply_standardizer(X, mean, scale) -> np.ndarray:
    return (as_matrix(X) - np.asarray(mean)) / np.asarray(scale)


def _atomic_write(path, text: str) -> None:
    tmp = f"{path}.tmp"
    try:
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)
