"""Shared test oracles, kept independent of the package's own checking code."""

import numpy as np


def central_diff(f, x, step=1e-6):
    """Central-difference gradient of scalar f at array x."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    gf = grad.ravel()
    xf = x.ravel()
    for i in range(xf.size):
        keep = xf[i]
        xf[i] = keep + step
        hi = f(x)
        xf[i] = keep - step
        lo = f(x)
        xf[i] = keep
        gf[i] = (hi - lo) / (2.0 * step)
    return grad


def rel_err(a, b, floor=1e-8, atol=1e-9):
    """Max relative error with denominator max(|a|,|b|,floor); absolute
    differences below atol (finite-difference noise on exact zeros) count as
    agreement."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    diff = np.abs(a - b)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.where(diff <= atol, 0.0, diff / denom)))


def entropy_of(labels):
    """Independent Shannon entropy (nats) for NMI oracles."""
    labels = np.asarray(labels)
    h = 0.0
    for v in set(labels.tolist()):
        p = float(np.mean(labels == v))
        h -= p * np.log(p)
    return h


def mutual_information_of(a, b):
    """Independent plug-in mutual information (nats)."""
    a = np.asarray(a)
    b = np.asarray(b)
    mi = 0.0
    for va in set(a.tolist()):
        for vb in set(b.tolist()):
            pab = float(np.mean((a == va) & (b == vb)))
            if pab == 0.0:
                continue
            pa = float(np.mean(a == va))
            pb = float(np.mean(b == vb))
            mi += pab * np.log(pab / (pa * pb))
    return mi
