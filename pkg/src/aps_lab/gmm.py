"""Two-component 1-D Gaussian mixture fitted by deterministic EM."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels

VAR_FLOOR = 1e-8


class GmmError(ValueError):
    pass


class InsufficientDataError(GmmError):
    pass


class DegenerateDataError(GmmError):
    pass


@dataclass(frozen=True)
class Gmm2:
    """Mixture parameters; component 1 has the lower mean after fitting."""

    w1: float
    w2: float
    mu1: float
    mu2: float
    var1: float
    var2: float
    trace: tuple[float, ...] = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        if not (0.0 < self.w1 < 1.0 and 0.0 < self.w2 < 1.0) or abs(self.w1 + self.w2 - 1.0) > 1e-9:
            raise GmmError(f"invalid weights ({self.w1}, {self.w2})")
        if not (self.var1 >= VAR_FLOOR and self.var2 >= VAR_FLOOR):
            raise GmmError(f"variances below floor ({self.var1}, {self.var2})")

    @property
    def n_iter(self) -> int:
        return max(len(self.trace) - 1, 0)


def _as_samples(samples) -> np.ndarray:
    x = np.ascontiguousarray(samples, dtype=np.float64).ravel()
    if not np.all(np.isfinite(x)):
        raise GmmError("samples must be finite")
    return x


def _log_components(model: Gmm2, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    la = math.log(model.w1) - 0.5 * (math.log(2 * math.pi * model.var1)) - (x - model.mu1) ** 2 / (2 * model.var1)
    lb = math.log(model.w2) - 0.5 * (math.log(2 * math.pi * model.var2)) - (x - model.mu2) ** 2 / (2 * model.var2)
    return la, lb


def responsibilities(model: Gmm2, samples) -> np.ndarray:
    """Posterior ``(n, 2)`` array; column 0 is the low-mean component."""
    x = _as_samples(samples)
    la, lb = _log_components(model, x)
    lse = np.logaddexp(la, lb)
    return np.stack([np.exp(la - lse), np.exp(lb - lse)], axis=1)


def log_likelihood(model: Gmm2, samples) -> float:
    x = _as_samples(samples)
    la, lb = _log_components(model, x)
    return float(np.logaddexp(la, lb).sum())


def fit_em(samples, max_iter: int = 100, tol: float = 1e-6) -> Gmm2:
    """Fit by EM starting from means at min/max, equal weights, pooled variance.

    Stops when the log-likelihood gain drops below ``tol`` or after
    ``max_iter`` M-steps.  The per-iteration log-likelihoods are kept on the
    result as ``trace``.
    """
    x = _as_samples(samples)
    if x.size < 2:
        raise InsufficientDataError(f"need at least 2 samples, got {x.size}")
    lo, hi = float(x.min()), float(x.max())
    if lo == hi:
        raise DegenerateDataError(f"all {x.size} samples equal {lo}")
    var0 = max(float(x.var()), VAR_FLOOR)
    params = np.array([0.5, lo, var0, 0.5, hi, var0])
    trace = np.empty(max_iter + 1)
    p, filled = _kernels.em(x, params, int(max_iter), float(tol), VAR_FLOOR, trace)
    w1, mu1, v1, w2, mu2, v2 = (float(v) for v in p)
    if mu2 < mu1:
        w1, mu1, v1, w2, mu2, v2 = w2, mu2, v2, w1, mu1, v1
    # weights can leave (0, 1) only when a component lost every sample
    eps = 1e-12
    w1 = min(max(w1, eps), 1.0 - eps)
    return Gmm2(w1, 1.0 - w1, mu1, mu2, v1, v2, trace=tuple(float(t) for t in trace[:filled]))
