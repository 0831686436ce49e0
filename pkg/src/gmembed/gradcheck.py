"""Finite-difference verification of every analytic gradient in the package.

Central differences with step 1e-6 against 64-bit evaluations; relative error
uses max(|a|, |b|, 1e-8) as the denominator. The loss-level checks perturb the
embeddings directly (re-estimating class means per evaluation, since the means
are a function of the batch); the encoder-level checks perturb the network
parameters and differentiate through a composed loss.
"""

from __future__ import annotations

import numpy as np

from .encoder import EncoderParams, EncoderSpec, backward, forward, init_encoder
from .gaussian_manifold import ClassGaussians, estimate_class_means, sgm_loss
from .numerics import RngStream
from .triplet import sample_triplets, triplet_loss

DEFAULT_STEP = 1e-6
DEFAULT_THRESHOLD = 1e-4
ERROR_FLOOR = 1e-8


def central_difference(f, x: np.ndarray, step: float = DEFAULT_STEP) -> np.ndarray:
    """Central-difference gradient of a scalar function of an array."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = grad.ravel()
    xf = x.ravel()
    for i in range(xf.size):
        orig = xf[i]
        xf[i] = orig + step
        hi = f(x)
        xf[i] = orig - step
        lo = f(x)
        xf[i] = orig
        flat[i] = (hi - lo) / (2.0 * step)
    return grad


def max_rel_error(a: np.ndarray, b: np.ndarray, floor: float = ERROR_FLOOR,
                  atol: float = 1e-9) -> float:
    """Max of |a-b| / max(|a|, |b|, floor), ignoring differences below atol.

    The atol guard covers structurally-zero gradients (e.g. the output bias
    under the translation-invariant triplet loss): there the analytic side is
    an exact 0 while central differences return roundoff of order
    |loss| * eps / (2 * step), which the denominator floor would otherwise
    inflate into a fake error. Callers scale atol with the loss magnitude via
    :func:`fd_noise_floor`.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    diff = np.abs(a - b)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    err = np.where(diff <= atol, 0.0, diff / denom)
    return float(np.max(err))


def fd_noise_floor(loss_value: float, step: float = DEFAULT_STEP) -> float:
    """Absolute tolerance for central-difference noise at this loss scale:
    ~100x the cancellation roundoff |f| * eps / (2 * step)."""
    eps = np.finfo(np.float64).eps
    return max(1e-9, 100.0 * abs(float(loss_value)) * eps / (2.0 * step))


def _random_instance(rng, max_batch=24, max_dim=8, max_classes=4):
    c = int(rng.integers(2, max_classes + 1))
    d = int(rng.integers(2, max_dim + 1))
    per = int(rng.integers(2, max(3, max_batch // c + 1)))
    m = per * c
    Z = rng.normal((m, d))
    labels = np.repeat(np.arange(c), per)
    return Z, labels, c, d


def check_sgm_loss(seed: int = 0, trials: int = 20, step: float = DEFAULT_STEP,
                   corrupt: bool = False) -> float:
    """Max relative error of dL/dZ for the structured loss over random cases."""
    rng = RngStream(seed).substream(10)
    worst = 0.0
    for _ in range(trials):
        Z, labels, c, _d = _random_instance(rng)
        sigma = 0.5
        reg = float(rng.uniform()) * 0.05
        priors = np.full(c, 1.0 / c)

        def loss_of(Zp):
            means = estimate_class_means(Zp, labels, c)
            g = ClassGaussians(means=means, sigma=sigma, priors=priors)
            return sgm_loss(Zp, labels, g, reg).loss

        means = estimate_class_means(Z, labels, c)
        g = ClassGaussians(means=means, sigma=sigma, priors=priors)
        out = sgm_loss(Z, labels, g, reg)
        analytic = out.grad
        if corrupt:
            analytic = analytic + 1e-2
        numeric = central_difference(loss_of, Z, step)
        worst = max(worst, max_rel_error(analytic, numeric, atol=fd_noise_floor(out.loss, step)))
    return worst


def check_triplet_loss(seed: int = 0, trials: int = 20, step: float = DEFAULT_STEP,
                       corrupt: bool = False) -> float:
    """Max relative error of dL/dZ for the triplet hinge, away from the hinge
    boundary (cases with a violation within 1e-3 of zero are resampled)."""
    rng = RngStream(seed).substream(11)
    worst = 0.0
    done = 0
    while done < trials:
        Z, labels, _c, _d = _random_instance(rng)
        triplets = sample_triplets(labels, 10, rng)
        margin = 0.2
        a = np.array([t.anchor for t in triplets])
        p = np.array([t.positive for t in triplets])
        n = np.array([t.negative for t in triplets])
        v = (
            np.sum((Z[a] - Z[p]) ** 2, axis=1)
            - np.sum((Z[a] - Z[n]) ** 2, axis=1)
            + margin
        )
        if np.any(np.abs(v) < 1e-3):
            continue
        loss, analytic = triplet_loss(Z, triplets, margin)
        if corrupt:
            analytic = analytic + 1e-2
        numeric = central_difference(lambda Zp: triplet_loss(Zp, triplets, margin)[0], Z, step)
        worst = max(worst, max_rel_error(analytic, numeric, atol=fd_noise_floor(loss, step)))
        done += 1
    return worst


def _composed_encoder_check(seed, trials, step, loss_kind, corrupt=False):
    rng = RngStream(seed).substream(12 if loss_kind == "sgm" else 13)
    worst = 0.0
    done = 0
    while done < trials:
        activation = "relu" if int(rng.integers(2)) else "tanh"
        # the invariant's domain: <= 3 hidden layers, widths <= 16, batch <= 8
        spec = EncoderSpec(
            input_dim=int(rng.integers(2, 6)),
            hidden=tuple(int(rng.integers(2, 17)) for _ in range(int(rng.integers(1, 4)))),
            output_dim=int(rng.integers(2, 5)),
            activation=activation,
        )
        params = init_encoder(spec, rng.substream(done))
        c = 2
        per = 3
        X = rng.normal((per * c, spec.input_dim))
        labels = np.repeat(np.arange(c), per)

        if activation == "relu":
            _, cache = forward(params, X)
            # keep pre-activations away from the relu kink
            if min(float(np.min(np.abs(p))) for p in cache.pre[:-1]) < 1e-3:
                continue

        def loss_from_arrays(arrays):
            pp = EncoderParams.from_list(spec, [a.copy() for a in arrays])
            Z, _ = forward(pp, X)
            if loss_kind == "sgm":
                means = estimate_class_means(Z, labels, c)
                g = ClassGaussians(means, 0.5, np.full(c, 0.5))
                return sgm_loss(Z, labels, g, 0.01).loss
            return triplet_loss(Z, trips, 0.2)[0]

        if loss_kind == "triplet":
            trips = sample_triplets(labels, 6, rng)
        Z, cache = forward(params, X)
        if loss_kind == "sgm":
            means = estimate_class_means(Z, labels, c)
            g = ClassGaussians(means, 0.5, np.full(c, 0.5))
            out = sgm_loss(Z, labels, g, 0.01)
            loss_value, dZ = out.loss, out.grad
        else:
            loss_value, dZ = triplet_loss(Z, trips, 0.2)
            a = np.array([t.anchor for t in trips])
            p = np.array([t.positive for t in trips])
            n = np.array([t.negative for t in trips])
            v = (
                np.sum((Z[a] - Z[p]) ** 2, axis=1)
                - np.sum((Z[a] - Z[n]) ** 2, axis=1)
                + 0.2
            )
            if np.any(np.abs(v) < 1e-3):
                continue
        analytic = backward(params, cache, dZ)
        if corrupt:
            analytic = [g + 1e-2 for g in analytic]

        arrays = params.as_list()
        numeric = []
        for idx in range(len(arrays)):
            def f_idx(arr, idx=idx):
                trial = [a.copy() for a in arrays]
                trial[idx] = arr
                return loss_from_arrays(trial)

            numeric.append(central_difference(f_idx, arrays[idx].copy(), step))
        atol = fd_noise_floor(loss_value, step)
        worst = max(
            worst,
            max(max_rel_error(a_, n_, atol=atol) for a_, n_ in zip(analytic, numeric)),
        )
        done += 1
    return worst


def check_encoder_sgm(seed: int = 0, trials: int = 5, step: float = DEFAULT_STEP,
                      corrupt: bool = False) -> float:
    """Max relative error of parameter gradients through the structured loss."""
    return _composed_encoder_check(seed, trials, step, "sgm", corrupt)


def check_encoder_triplet(seed: int = 0, trials: int = 5, step: float = DEFAULT_STEP,
                          corrupt: bool = False) -> float:
    """Max relative error of parameter gradients through the triplet loss."""
    return _composed_encoder_check(seed, trials, step, "triplet", corrupt)


def run_all(seed: int = 0, corrupt: bool = False) -> dict:
    """Every suite's max relative error, keyed by loss path."""
    return {
        "sgm_loss": check_sgm_loss(seed, corrupt=corrupt),
        "triplet_loss": check_triplet_loss(seed, corrupt=corrupt),
        "encoder_sgm": check_encoder_sgm(seed, corrupt=corrupt),
        "encoder_triplet": check_encoder_triplet(seed, corrupt=corrupt),
    }
