"""Correlation Filter layer.

The forward pass solves the multi-channel circulant ridge regression

    k = (1/n) sum_p x_p * x_p + lambda delta,   k conv alpha = y / n,   w_p = alpha * x_p

element-wise in the Fourier domain (``*`` is circular cross-correlation).
The backward pass is the adjoint of its differential, again element-wise in
the Fourier domain and linear in the number of channels.

The helpers around it (cosine window, template crop, calibrated score head)
each come with their own backward map so callers can chain gradients.
"""

from dataclasses import dataclass, field

import numpy as np

from . import spectral
from .errors import MarginTooLarge, NonPositiveLambda, ShapeMismatch, StaleCache

MIN_LAMBDA = 1e-8


@dataclass(frozen=True)
class CFConfig:
    """Regularization, desired response, window and crop for a CF of side m."""

    lam: float
    m: int
    response: np.ndarray = field(repr=False)
    window: np.ndarray = field(repr=False)
    crop_margin: int = 0

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam >= MIN_LAMBDA):
            raise NonPositiveLambda(f"lambda must be >= {MIN_LAMBDA}, got {self.lam}")
        if self.m < 2:
            raise ShapeMismatch(f"m must be >= 2, got {self.m}")
        for name in ("response", "window"):
            arr = spectral.as_plane(getattr(self, name), name)
            if arr.shape != (self.m, self.m):
                raise ShapeMismatch(f"{name} must be {self.m}x{self.m}, got {arr.shape}")
            object.__setattr__(self, name, arr)
        if not (0 <= self.crop_margin and 2 * self.crop_margin < self.m):
            raise MarginTooLarge(f"crop margin {self.crop_margin} invalid for m={self.m}")

    @property
    def n(self):
        return self.m * self.m

    @property
    def template_side(self):
        return self.m - 2 * self.crop_margin

    @classmethod
    def default(cls, m, lam=0.01, sigma=None, crop_margin=None):
        """Gaussian response (sigma m/16), Hann window, crop margin m/8."""
        if crop_margin is None:
            crop_margin = m // 8
        return cls(lam=lam, m=m, response=spectral.gaussian_response(m, sigma),
                   window=spectral.hann_window(m), crop_margin=crop_margin)

    def with_response(self, y):
        return CFConfig(self.lam, self.m, y, self.window, self.crop_margin)


@dataclass(frozen=True)
class CFCache:
    xhat: np.ndarray
    khat: np.ndarray
    alphahat: np.ndarray

    @property
    def m(self):
        return self.xhat.shape[-1]

    @property
    def k(self):
        return self.xhat.shape[0]


@dataclass(frozen=True)
class CFGradients:
    grad_x: np.ndarray
    grad_y: np.ndarray


@dataclass
class ScoreCalibration:
    s: float = 1e-3
    b: float = 0.0


def cf_forward(x, cfg, y=None):
    """Solve for the template w given features x of shape (k, m, m).

    ``y`` overrides ``cfg.response`` (used when the desired response is learned).
    Returns ``(w, cache)`` with w of shape (k, m, m).
    """
    x = spectral.as_multichannel(x)
    if x.shape[-1] != cfg.m:
        raise ShapeMismatch(f"features are {x.shape[-1]}x{x.shape[-1]}, config expects m={cfg.m}")
    y = cfg.response if y is None else spectral.as_plane(y, "y")
    if y.shape != (cfg.m, cfg.m):
        raise ShapeMismatch(f"response must be {cfg.m}x{cfg.m}, got {y.shape}")
    n = cfg.n
    xhat = spectral.dft2(x)
    khat = np.sum(np.conj(xhat) * xhat, axis=0) / n + cfg.lam
    alphahat = spectral.dft2(y) / (n * khat)
    w = np.fft.ifft2(np.conj(alphahat) * xhat, axes=(-2, -1)).real
    return w, CFCache(xhat=xhat, khat=khat, alphahat=alphahat)


def cf_backward(cache, cfg, grad_w):
    """Map the gradient w.r.t. the template to gradients w.r.t. x and y."""
    grad_w = spectral.as_multichannel(grad_w, "grad_w")
    if cache.m != cfg.m:
        raise StaleCache(f"cache side {cache.m} does not match config m={cfg.m}")
    if grad_w.shape[-1] != cache.m:
        raise StaleCache(f"gradient side {grad_w.shape[-1]} does not match cache side {cache.m}")
    if grad_w.shape[0] != cache.k:
        raise ShapeMismatch(f"gradient has {grad_w.shape[0]} channels, forward had {cache.k}")
    n = cfg.n
    gwhat = spectral.dft2(grad_w)
    kinv_conj = 1.0 / np.conj(cache.khat)
    galpha = np.sum(cache.xhat * np.conj(gwhat), axis=0)
    gy = kinv_conj * galpha / n
    gk = -kinv_conj * np.conj(cache.alphahat) * galpha
    gx = cache.alphahat * gwhat + (2.0 / n) * cache.xhat * gk.real
    return CFGradients(grad_x=np.fft.ifft2(gx, axes=(-2, -1)).real,
                       grad_y=np.fft.ifft2(gy).real)


def apply_window(x, window):
    """Multiply every channel by the window; the backward map is the same product."""
    x = spectral.as_plane(x, "x")
    window = spectral.as_plane(window, "window")
    if x.shape[-2:] != window.shape:
        raise ShapeMismatch(f"window {window.shape} does not fit map {x.shape}")
    return x * window


def crop_template(w, margin):
    """Keep the central (m - 2 margin) square of every channel.

    The template comes out of the solver in the same layout as the exemplar
    features, object in the middle, so the central block is the object.
    """
    w = np.asarray(w)
    m = w.shape[-1]
    if not (0 <= margin and 2 * margin < m):
        raise MarginTooLarge(f"margin {margin} too large for side {m}")
    if margin == 0:
        return w.copy()
    return w[..., margin:m - margin, margin:m - margin].copy()


def crop_backward(grad, m, margin):
    """Zero-pad a cropped-template gradient back to side m."""
    grad = np.asarray(grad)
    side = m - 2 * margin
    if grad.shape[-1] != side or grad.shape[-2] != side:
        raise ShapeMismatch(f"gradient side {grad.shape[-1]} does not match crop side {side}")
    out = np.zeros(grad.shape[:-2] + (m, m))
    out[..., margin:margin + side, margin:margin + side] = grad
    return out


def _pad_to(w, side):
    a = w.shape[-1]
    if a == side:
        return w
    out = np.zeros(w.shape[:-2] + (side, side))
    out[..., :a, :a] = w
    return out


def _check_score_shapes(w, z):
    w = spectral.as_multichannel(w, "w")
    z = spectral.as_multichannel(z, "z")
    if w.shape[0] != z.shape[0]:
        raise ShapeMismatch(f"channel counts differ: {w.shape[0]} vs {z.shape[0]}")
    if z.shape[-1] < w.shape[-1]:
        raise ShapeMismatch(f"search side {z.shape[-1]} smaller than template side {w.shape[-1]}")
    return w, z


def correlate_channels(w, z):
    """sum_p (w_p * z_p) with w zero-padded at the origin corner to z's side."""
    w, z = _check_score_shapes(w, z)
    wp = _pad_to(w, z.shape[-1])
    total = np.sum(np.conj(spectral.dft2(wp)) * spectral.dft2(z), axis=0)
    return np.fft.ifft2(total).real


def score(w, z, cal):
    """Calibrated response s * sum_p (w_p * z_p) + b, same side as z."""
    return cal.s * correlate_channels(w, z) + cal.b


def score_backward(grad_response, w, z, cal):
    """Gradients of the score head: (grad_w, grad_z, grad_s, grad_b)."""
    w, z = _check_score_shapes(w, z)
    g = spectral.as_plane(grad_response, "grad_response")
    side = z.shape[-1]
    if g.shape != (side, side):
        raise ShapeMismatch(f"response gradient {g.shape} does not match search side {side}")
    a = w.shape[-1]
    ghat = spectral.dft2(g)
    zhat = spectral.dft2(z)
    what = spectral.dft2(_pad_to(w, side))
    raw = np.fft.ifft2(np.sum(np.conj(what) * zhat, axis=0)).real
    grad_w = cal.s * np.fft.ifft2(np.conj(ghat) * zhat, axes=(-2, -1)).real[..., :a, :a]
    grad_z = cal.s * np.fft.ifft2(ghat * what, axes=(-2, -1)).real
    return grad_w, grad_z, float(np.sum(g * raw)), float(np.sum(g))
