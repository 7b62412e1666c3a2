"""Dense, slow reference implementations used to check the fast paths.

Signals on the m x m grid are flattened row-major into vectors of length
n = m^2; every dense matrix here uses that ordering.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import cf, spectral
from .errors import NonFiniteEvaluation, SingularSystem, TooLarge

MAX_CIRCULANT_SIDE = 32
MAX_DIRECT_SIDE = 16


@dataclass
class DenseSystem:
    X_blocks: list
    K: np.ndarray
    y_vec: np.ndarray


@dataclass
class GradcheckReport:
    max_rel_err_x: float
    max_rel_err_y: float

    @property
    def max_rel_err(self):
        return max(self.max_rel_err_x, self.max_rel_err_y)


def circulant_matrix(x):
    """Dense X with X[u, t] = x[(u + t) mod m], so that X @ vec(w) = vec(w * x)."""
    x = spectral.as_plane(x)
    if x.ndim != 2:
        raise ValueError("circulant_matrix takes a single plane")
    m = x.shape[0]
    if m > MAX_CIRCULANT_SIDE:
        raise TooLarge(f"side {m} exceeds {MAX_CIRCULANT_SIDE} for a dense circulant matrix")
    i, j = np.divmod(np.arange(m * m), m)
    rows = (i[:, None] + i[None, :]) % m
    cols = (j[:, None] + j[None, :]) % m
    return x[rows, cols]


def dense_system(x, y, lam):
    x = spectral.as_multichannel(x)
    y = spectral.as_plane(y, "y")
    m = x.shape[-1]
    if m > MAX_DIRECT_SIDE:
        raise TooLarge(f"side {m} exceeds {MAX_DIRECT_SIDE} for the dense solver")
    n = m * m
    blocks = [circulant_matrix(xp) for xp in x]
    K = sum(X.T @ X for X in blocks) / n + lam * np.eye(n)
    return DenseSystem(X_blocks=blocks, K=K, y_vec=y.ravel().copy())


def direct_dual(system):
    """Solve K alpha = y / n by Cholesky."""
    n = system.K.shape[0]
    try:
        factor = scipy.linalg.cho_factor(system.K, lower=True)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    return scipy.linalg.cho_solve(factor, system.y_vec / n)


def direct_cf(x, y, lam):
    """Template by dense dual ridge regression; shape (k, m, m)."""
    x = spectral.as_multichannel(x)
    m = x.shape[-1]
    system = dense_system(x, y, lam)
    alpha = direct_dual(system)
    return np.stack([(X @ alpha).reshape(m, m) for X in system.X_blocks])


def finite_difference_steps(v, rel=1e-4):
    return rel * (1.0 + np.abs(v))


def numeric_gradient(f, v, h=None):
    """Central-difference gradient of a scalar function of a flat vector.

    ``h`` may be a scalar or a per-coordinate array; by default each
    coordinate uses 1e-4 * (1 + |v_i|).
    """
    v = np.asarray(v, dtype=np.float64).ravel()
    steps = finite_difference_steps(v) if h is None else np.broadcast_to(np.asarray(h, float), v.shape)
    if np.any(steps <= 0):
        raise ValueError("finite-difference step must be positive")
    grad = np.empty_like(v)
    probe = v.copy()
    for i in range(v.size):
        probe[i] = v[i] + steps[i]
        fp = f(probe)
        probe[i] = v[i] - steps[i]
        fm = f(probe)
        probe[i] = v[i]
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFiniteEvaluation(f"non-finite evaluation at coordinate {i}")
        grad[i] = (fp - fm) / (2.0 * steps[i])
    return grad


def relative_error(analytic, numeric):
    analytic = np.asarray(analytic).ravel()
    numeric = np.asarray(numeric).ravel()
    return np.abs(analytic - numeric) / (1.0 + np.abs(analytic))


def gradcheck_cf(m, k, lam, seed):
    """Compare cf_backward against finite differences of <g, w(x, y)>."""
    if m > 8:
        raise TooLarge(f"gradcheck is limited to m <= 8, got {m}")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((k, m, m))
    y = rng.standard_normal((m, m))
    g = rng.standard_normal((k, m, m))
    cfg = cf.CFConfig.default(m, lam=lam)

    def loss_x(v):
        w, _ = cf.cf_forward(v.reshape(x.shape), cfg, y=y)
        return float(np.sum(g * w))

    def loss_y(v):
        w, _ = cf.cf_forward(x, cfg, y=v.reshape(y.shape))
        return float(np.sum(g * w))

    _, cache = cf.cf_forward(x, cfg, y=y)
    grads = cf.cf_backward(cache, cfg, g)
    err_x = relative_error(grads.grad_x, numeric_gradient(loss_x, x))
    err_y = relative_error(grads.grad_y, numeric_gradient(loss_y, y))
    return GradcheckReport(max_rel_err_x=float(err_x.max()), max_rel_err_y=float(err_y.max()))
