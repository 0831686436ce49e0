"""Training loops: class-balanced batching, per-batch Gaussian estimation,
loss evaluation, and Adam updates; the triplet loop swaps in triplet sampling
and the hinge loss.

RNG discipline (part of the determinism contract): the root stream forks
substream(0) for encoder init and substream(1) for batch sampling, and every
update consumes a fixed number of draws, so equal seeds give bitwise-equal
loss traces.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import triplet as triplet_mod
from .data import Dataset
from .encoder import EncoderParams, EncoderSpec, backward, forward, init_encoder
from .exceptions import ContractError, MissingClassError
from .gaussian_manifold import ClassGaussians, estimate_class_means, sgm_loss
from .numerics import RngStream, adam_init, adam_step
from .validation import check_positive, check_positive_int

INIT_STREAM = 0
BATCH_STREAM = 1

PRESETS = {
    # methodology batch shape: n=30 per class (240 for 8 classes)
    "paper-meth": {"samples_per_class": 30},
    # experimental-protocol batch shape: n=32 per class (256 for 8 classes)
    "paper-exp": {"samples_per_class": 32},
}


@dataclass
class TrainConfig:
    """Knobs for a training run (both loss kinds) plus the encoder shape."""

    loss: str = "sgm"  # "sgm" or "triplet"
    samples_per_class: int = 30
    n_updates: int = 1000
    learning_rate: float = 1e-4
    reg_weight: float = 0.01
    sigma: float = 0.5
    triplet_count: int = 128
    margin: float = 0.2
    hidden: tuple[int, ...] = (64,)
    embed_dim: int = 64
    activation: str = "relu"
    seed: int = 0
    preset: str = ""

    def __post_init__(self):
        if self.loss not in ("sgm", "triplet"):
            raise ContractError(f"loss must be 'sgm' or 'triplet', got {self.loss!r}")
        check_positive_int(self.samples_per_class, "samples_per_class")
        check_positive_int(self.n_updates, "n_updates")
        check_positive(self.learning_rate, "learning_rate")
        check_positive(self.sigma, "sigma")
        check_positive_int(self.triplet_count, "triplet_count")
        if self.reg_weight < 0:
            raise ContractError("reg_weight must be nonnegative")
        if self.margin < 0:
            raise ContractError("margin must be nonnegative")
        self.hidden = tuple(int(w) for w in self.hidden)

    @classmethod
    def with_preset(cls, name: str, **overrides) -> "TrainConfig":
        if name not in PRESETS:
            raise ContractError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        merged = {**PRESETS[name], **overrides, "preset": name}
        return cls(**merged)

    def encoder_spec(self, input_dim: int) -> EncoderSpec:
        return EncoderSpec(
            input_dim=input_dim,
            hidden=self.hidden,
            output_dim=self.embed_dim,
            activation=self.activation,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


@dataclass
class TrainReport:
    """Per-update loss trace plus the resolved config and timing."""

    loss_trace: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    seed: int = 0
    preset: str = ""
    loss_kind: str = "sgm"
    wall_time_s: float = 0.0

    @property
    def final_loss(self) -> float:
        return self.loss_trace[-1] if self.loss_trace else float("nan")


def epochs_to_updates(epochs: int, dataset_size: int, batch_size: int) -> int:
    """Convert an epoch budget to the update count the trainer understands."""
    check_positive_int(epochs, "epochs")
    check_positive_int(dataset_size, "dataset_size")
    check_positive_int(batch_size, "batch_size")
    return max(1, (epochs * dataset_size) // batch_size)


def sample_class_balanced_batch(dataset: Dataset, n: int, rng: RngStream):
    """Exactly n rows per class: without replacement when a class has >= n
    samples, with replacement otherwise. Rows are grouped by class."""
    n = check_positive_int(n, "n")
    sizes = dataset.class_sizes()
    for j in range(dataset.n_classes):
        if sizes[j] == 0:
            raise MissingClassError(j, "class-balanced batching")
    picks = []
    for j in range(dataset.n_classes):
        members = np.flatnonzero(dataset.labels == j)
        replace = members.size < n
        picks.append(members[rng.choice(members.size, size=n, replace=replace)])
    idx = np.concatenate(picks)
    return dataset.X[idx], dataset.labels[idx]


def _run_updates(dataset, config, rng, init_params, step_fn):
    start = time.perf_counter()
    spec = config.encoder_spec(dataset.n_features)
    if init_params is None:
        params = init_encoder(spec, rng.substream(INIT_STREAM))
    else:
        if init_params.spec != spec:
            raise ContractError(
                f"warm-start params built for {init_params.spec}, config wants {spec}"
            )
        params = init_params.copy()
    batch_rng = rng.substream(BATCH_STREAM)
    state = adam_init(params.as_list())
    trace = []
    for update in range(config.n_updates):
        try:
            X, y = sample_class_balanced_batch(dataset, config.samples_per_class, batch_rng)
            Z, cache = forward(params, X)
            loss, dZ = step_fn(Z, y, batch_rng)
        except ContractError as exc:
            raise ContractError(f"update {update}: {exc}") from exc
        grads = backward(params, cache, dZ)
        new_arrays, state = adam_step(params.as_list(), grads, state, config.learning_rate)
        params = EncoderParams.from_list(spec, new_arrays)
        trace.append(float(loss))
    report = TrainReport(
        loss_trace=trace,
        config=config.to_dict(),
        seed=config.seed,
        preset=config.preset,
        loss_kind=config.loss,
        wall_time_s=time.perf_counter() - start,
    )
    return params, report


def train_sgm(dataset: Dataset, config: TrainConfig, rng: RngStream, init_params=None):
    """Structured-manifold training: batch -> embed -> estimate class means ->
    loss -> backprop -> Adam, for n_updates rounds."""
    c = dataset.n_classes
    priors = np.full(c, 1.0 / c)

    def step(Z, y, _batch_rng):
        means = estimate_class_means(Z, y, c)
        g = ClassGaussians(means=means, sigma=config.sigma, priors=priors)
        out = sgm_loss(Z, y, g, config.reg_weight)
        return out.loss, out.grad

    return _run_updates(dataset, config, rng, init_params, step)


def train_triplet(dataset: Dataset, config: TrainConfig, rng: RngStream, init_params=None):
    """Triplet training with the same batching; samples triplet_count triplets
    from each class-balanced batch."""

    def step(Z, y, batch_rng):
        triplets = triplet_mod.sample_triplets(y, config.triplet_count, batch_rng)
        return triplet_mod.triplet_loss(Z, triplets, config.margin)

    return _run_updates(dataset, config, rng, init_params, step)


def train(dataset: Dataset, config: TrainConfig, rng: RngStream, init_params=None):
    """Dispatch on config.loss."""
    if config.loss == "triplet":
        return train_triplet(dataset, config, rng, init_params)
    return train_sgm(dataset, config, rng, init_params)
