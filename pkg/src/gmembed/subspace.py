"""Sub-space discovery: alternate structured-manifold training with per-class
EM splitting to find sub-classes ("classes within classes").

Each level l = 1..max_level-1 trains the encoder on the current sub-labels,
embeds the full dataset, and re-splits every original class into
min(l, floor(|members| / min_members)) mixture components (at least 1). The
per-level relabeling restarts from an empty label set with a running offset,
so sub-class ids are contiguous from 0 at every level and each sub-class has
exactly one parent class.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .clustering import gmm_em, hard_assign
from .data import Dataset
from .encoder import forward, init_encoder
from .exceptions import ContractError
from .numerics import RngStream
from .trainer import TrainConfig, train_sgm
from .validation import as_labels, as_matrix, check_positive_int

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LineageEntry:
    """One discovered sub-class: where it came from."""

    subclass_id: int
    level: int
    parent_class: int
    component_index: int


@dataclass
class LabelLineage:
    """All lineage entries, grouped by the level that produced them."""

    entries: list = field(default_factory=list)

    def at_level(self, level: int) -> list:
        return [e for e in self.entries if e.level == level]

    def levels(self) -> list:
        return sorted({e.level for e in self.entries})

    def parent_map(self, level: int) -> dict:
        return {e.subclass_id: e.parent_class for e in self.at_level(level)}

    def collapse(self, sublabels, level: int) -> np.ndarray:
        """Map sub-class ids from ``level`` back to their original classes."""
        sublabels = as_labels(sublabels, name="sublabels")
        mapping = self.parent_map(level)
        missing = set(np.unique(sublabels).tolist()) - set(mapping)
        if missing:
            raise ContractError(f"sub-class ids {sorted(missing)} unknown at level {level}")
        lut = np.full(max(mapping) + 1, -1, dtype=np.int64)
        for sub, parent in mapping.items():
            lut[sub] = parent
        return lut[sublabels]

    def to_records(self) -> list:
        return [
            {
                "subclass_id": e.subclass_id,
                "level": e.level,
                "parent_class": e.parent_class,
                "component_index": e.component_index,
            }
            for e in self.entries
        ]


@dataclass
class SubspaceConfig:
    """Sub-space run knobs wrapping an inner training config."""

    train: TrainConfig = field(default_factory=TrainConfig)
    max_level: int = 5
    min_members: int | None = None  # default 2 * samples_per_class
    warm_start: bool = True
    em_restarts: int = 1
    em_max_iter: int = 300
    em_tol: float = 1e-6

    def __post_init__(self):
        check_positive_int(self.max_level, "max_level")
        if self.min_members is None:
            self.min_members = 2 * self.train.samples_per_class
        check_positive_int(self.min_members, "min_members")
        check_positive_int(self.em_restarts, "em_restarts")

    def to_dict(self) -> dict:
        return {
            "train": self.train.to_dict(),
            "max_level": self.max_level,
            "min_members": self.min_members,
            "warm_start": self.warm_start,
            "em_restarts": self.em_restarts,
            "em_max_iter": self.em_max_iter,
            "em_tol": self.em_tol,
        }


def split_classes(Z, labels, level: int, min_members: int, rng: RngStream,
                  em_restarts: int = 1, em_max_iter: int = 300, em_tol: float = 1e-6):
    """Split every class present in ``labels`` into EM components.

    Component count per class: min(level, floor(members / min_members)),
    clamped to >= 1. New labels are the component assignment plus a running
    offset advanced class by class, so ids are contiguous from 0. Per-class
    EM draws from a substream keyed by (level, class id). Degenerate member
    sets (all points identical) fall back to a single component with a
    logged warning.

    Returns (new_labels, lineage_entries).
    """
    Z = as_matrix(Z, "Z")
    labels = as_labels(labels, n_rows=Z.shape[0])
    level = check_positive_int(level, "level")
    min_members = check_positive_int(min_members, "min_members")
    new_labels = np.empty_like(labels)
    entries = []
    offset = 0
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        Zc = Z[members]
        n_components = max(1, min(level, members.size // min_members))
        if n_components > 1 and np.allclose(Zc, Zc[0], rtol=0.0, atol=0.0):
            log.warning(
                "split_classes: class %d is degenerate (identical points); "
                "falling back to 1 component", int(cls),
            )
            n_components = 1
        if n_components == 1:
            assignment = np.zeros(members.size, dtype=np.int64)
        else:
            model = gmm_em(
                Zc, n_components, rng.substream(level, int(cls)),
                max_iter=em_max_iter, tol=em_tol, restarts=em_restarts,
            )
            assignment = hard_assign(model)
        new_labels[members] = assignment + offset
        for comp in range(n_components):
            entries.append(
                LineageEntry(
                    subclass_id=offset + comp,
                    level=level,
                    parent_class=int(cls),
                    component_index=comp,
                )
            )
        offset += n_components
    return new_labels, entries


def train_subspace(dataset: Dataset, config: SubspaceConfig, rng: RngStream):
    """Run the level loop; returns (params, final sub-labels, lineage).

    With max_level = 1 the loop body never executes: the original labels come
    back unchanged alongside freshly initialized encoder parameters.
    """
    sublabels = dataset.labels.copy()
    lineage = LabelLineage()
    params = None
    for level in range(1, config.max_level):
        n_sub = int(sublabels.max()) + 1
        level_dataset = dataset.with_labels(sublabels, n_sub)
        init = params if (config.warm_start and params is not None) else None
        try:
            params, _report = train_sgm(
                level_dataset, config.train, rng.substream(level), init_params=init
            )
            Z, _ = forward(params, dataset.X)
            sublabels, entries = split_classes(
                Z, dataset.labels, level, config.min_members, rng,
                em_restarts=config.em_restarts,
                em_max_iter=config.em_max_iter,
                em_tol=config.em_tol,
            )
        except ContractError as exc:
            raise ContractError(f"level {level}: {exc}") from exc
        lineage.entries.extend(entries)
    if params is None:
        spec = config.train.encoder_spec(dataset.n_features)
        params = init_encoder(spec, rng.substream(0))
    return params, sublabels, lineage
