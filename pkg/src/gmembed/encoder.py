"""The embedding network: a fully-connected map from feature space to the
embedding space, with analytic forward and backward passes.

Hidden layers apply the configured activation; the output layer is linear so
embeddings can occupy all of R^d (their scale is controlled by the training
loss's norm regularizer, not by a squashing nonlinearity).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ContractError, DataError
from .numerics import RngStream
from .validation import as_matrix

CHECKPOINT_FORMAT = "gmembed-encoder"
CHECKPOINT_VERSION = 1

_ACTIVATIONS = ("relu", "tanh")


@dataclass(frozen=True)
class EncoderSpec:
    """Architecture of the encoder: layer widths and hidden activation."""

    input_dim: int
    hidden: tuple[int, ...] = (64,)
    output_dim: int = 64
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(w) for w in self.hidden))
        for w in (self.input_dim, *self.hidden, self.output_dim):
            if int(w) < 1:
                raise ContractError(f"layer widths must be >= 1, got {w}")
        if self.activation not in _ACTIVATIONS:
            raise ContractError(
                f"activation must be one of {_ACTIVATIONS}, got {self.activation!r}"
            )

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden, self.output_dim)

    @property
    def n_layers(self) -> int:
        return len(self.hidden) + 1


@dataclass
class EncoderParams:
    """Per-layer weights (out x in) and biases conforming to a spec."""

    spec: EncoderSpec
    weights: list = field(default_factory=list)
    biases: list = field(default_factory=list)

    def as_list(self) -> list:
        """Flat parameter list [W_0..W_L, b_0..b_L] for the optimizer."""
        return [*self.weights, *self.biases]

    @classmethod
    def from_list(cls, spec: EncoderSpec, arrays) -> "EncoderParams":
        n = spec.n_layers
        if len(arrays) != 2 * n:
            raise ContractError(f"expected {2 * n} arrays, got {len(arrays)}")
        return cls(spec, list(arrays[:n]), list(arrays[n:]))

    def copy(self) -> "EncoderParams":
        return EncoderParams(
            self.spec, [w.copy() for w in self.weights], [b.copy() for b in self.biases]
        )


@dataclass
class ForwardCache:
    """Layer inputs and pre-activations for one batch, consumed by backward()."""

    inputs: list  # inputs[l] is the input to layer l, shape (m, dims[l])
    pre: list  # pre[l] = inputs[l] @ W_l.T + b_l
    n_rows: int


def init_encoder(spec: EncoderSpec, rng: RngStream) -> EncoderParams:
    """Zero-mean fan-in-scaled init: var 2/fan_in for relu, 1/fan_in for tanh.

    Biases start at zero. Same spec and seed give identical parameters.
    """
    gain = 2.0 if spec.activation == "relu" else 1.0
    dims = spec.layer_dims
    weights, biases = [], []
    for l in range(spec.n_layers):
        fan_in, fan_out = dims[l], dims[l + 1]
        std = np.sqrt(gain / fan_in)
        weights.append(rng.normal((fan_out, fan_in)) * std)
        biases.append(np.zeros(fan_out))
    return EncoderParams(spec, weights, biases)


def _activate(pre: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(pre, 0.0)
    return np.tanh(pre)


def _activate_grad(pre: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return (pre > 0.0).astype(np.float64)
    t = np.tanh(pre)
    return 1.0 - t * t


def forward(params: EncoderParams, X) -> tuple[np.ndarray, ForwardCache]:
    """Embed a batch; returns (Z, cache). Pure in (params, X)."""
    X = as_matrix(X)
    spec = params.spec
    if X.shape[1] != spec.input_dim:
        raise ContractError(
            f"input has {X.shape[1]} features, encoder expects {spec.input_dim}"
        )
    inputs, pres = [], []
    a = X
    for l in range(spec.n_layers):
        inputs.append(a)
        z = a @ params.weights[l].T + params.biases[l]
        pres.append(z)
        if l < spec.n_layers - 1:
            a = _activate(z, spec.activation)
        else:
            a = z
    return a, ForwardCache(inputs=inputs, pre=pres, n_rows=X.shape[0])


def backward(params: EncoderParams, cache: ForwardCache, dL_dZ) -> list:
    """Backpropagate dL/dZ through the cached forward pass.

    Returns gradients in the same flat order as ``EncoderParams.as_list()``.
    """
    dL_dZ = np.asarray(dL_dZ, dtype=np.float64)
    spec = params.spec
    if len(cache.inputs) != spec.n_layers:
        raise ContractError("cache does not match the encoder architecture")
    if dL_dZ.shape != (cache.n_rows, spec.output_dim):
        raise ContractError(
            f"dL_dZ has shape {dL_dZ.shape}, expected {(cache.n_rows, spec.output_dim)}"
        )
    w_grads = [None] * spec.n_layers
    b_grads = [None] * spec.n_layers
    delta = dL_dZ
    for l in reversed(range(spec.n_layers)):
        if l < spec.n_layers - 1:
            delta = delta * _activate_grad(cache.pre[l], spec.activation)
        w_grads[l] = delta.T @ cache.inputs[l]
        b_grads[l] = delta.sum(axis=0)
        if l > 0:
            delta = delta @ params.weights[l]
    return [*w_grads, *b_grads]


def save_checkpoint(params: EncoderParams, path, extra: dict | None = None) -> None:
    """Write a self-describing JSON checkpoint; save->load->save is byte-identical.

    ``extra`` carries optional blocks (e.g. feature standardization stats) that
    ride along with the encoder.
    """
    spec = params.spec
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "spec": {
            "input_dim": spec.input_dim,
            "hidden": list(spec.hidden),
            "output_dim": spec.output_dim,
            "activation": spec.activation,
        },
        "layers": [
            {
                "index": l,
                "weight_shape": list(params.weights[l].shape),
                "weight": params.weights[l].ravel().tolist(),
                "bias": params.biases[l].tolist(),
            }
            for l in range(spec.n_layers)
        ],
    }
    if extra:
        payload["extra"] = extra
    text = json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n"
    tmp = f"{path}.tmp"
    try:
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)


def load_checkpoint(path) -> tuple[EncoderParams, dict]:
    """Read a checkpoint written by :func:`save_checkpoint`.

    Returns (params, extra). Refuses other formats/versions by name.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"checkpoint {path} is not valid JSON: {exc}") from exc
    fmt = payload.get("format")
    version = payload.get("version")
    if fmt != CHECKPOINT_FORMAT or version != CHECKPOINT_VERSION:
        raise DataError(
            f"checkpoint {path} has format {fmt!r} version {version!r}; "
            f"this build reads {CHECKPOINT_FORMAT!r} version {CHECKPOINT_VERSION!r}"
        )
    s = payload["spec"]
    spec = EncoderSpec(
        input_dim=int(s["input_dim"]),
        hidden=tuple(int(w) for w in s["hidden"]),
        output_dim=int(s["output_dim"]),
        activation=str(s["activation"]),
    )
    layers = sorted(payload["layers"], key=lambda rec: rec["index"])
    if len(layers) != spec.n_layers:
        raise DataError(
            f"checkpoint {path} lists {len(layers)} layers, spec needs {spec.n_layers}"
        )
    weights, biases = [], []
    for rec in layers:
        shape = tuple(rec["weight_shape"])
        w = np.array(rec["weight"], dtype=np.float64).reshape(shape)
        b = np.array(rec["bias"], dtype=np.float64)
        weights.append(w)
        biases.append(b)
    params = EncoderParams(spec, weights, biases)
    dims = spec.layer_dims
    for l, (w, b) in enumerate(zip(weights, biases)):
        if w.shape != (dims[l + 1], dims[l]) or b.shape != (dims[l + 1],):
            raise DataError(f"checkpoint {path} layer {l} shapes do not match its spec")
    return params, payload.get("extra", {})
