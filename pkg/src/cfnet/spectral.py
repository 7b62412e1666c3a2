"""Real 2-D circular signal algebra.

Planes are float64 arrays of shape (m, m); multi-channel maps stack them as
(k, m, m). Spectra are complex128 arrays of the same shape. The forward DFT
is unnormalized and the inverse carries the 1/m^2 factor, so for real planes

    <a, b> = (1 / m^2) <dft2(a), dft2(b)>.

Every transform acts on the last two axes, so a (k, m, m) stack is handled
channel by channel in one call.
"""

import numpy as np

from .errors import InvalidSigma, NonSymmetricSpectrum, ShapeMismatch


def as_plane(a, name="plane"):
    """Validate and convert to a float64 array whose last two axes are square."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ShapeMismatch(f"{name} must be square in its last two axes, got {a.shape}")
    if a.shape[-1] < 2:
        raise ShapeMismatch(f"{name} side must be >= 2, got {a.shape[-1]}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def as_multichannel(x, name="x"):
    """Promote a single plane to a one-channel stack of shape (1, m, m)."""
    x = as_plane(x, name)
    if x.ndim == 2:
        x = x[np.newaxis]
    if x.ndim != 3 or x.shape[0] < 1:
        raise ShapeMismatch(f"{name} must have shape (k, m, m), got {x.shape}")
    return x


def dft2(p):
    return np.fft.fft2(np.asarray(p, dtype=np.float64), axes=(-2, -1))


def idft2(s, tol=1e-9):
    """Inverse DFT of a conjugate-symmetric spectrum, returned as a real plane.

    Raises NonSymmetricSpectrum when the imaginary residue of the inverse
    exceeds ``tol * ||s||``.
    """
    s = np.asarray(s, dtype=np.complex128)
    out = np.fft.ifft2(s, axes=(-2, -1))
    residue = np.max(np.abs(out.imag)) if out.size else 0.0
    if residue > tol * np.linalg.norm(s.ravel()):
        raise NonSymmetricSpectrum(
            f"imaginary residue {residue:.3e} after inversion; spectrum is not conjugate-symmetric")
    return out.real.copy()


def _pair(a, b):
    a = as_plane(a, "a")
    b = as_plane(b, "b")
    if a.shape[-2:] != b.shape[-2:]:
        raise ShapeMismatch(f"side mismatch: {a.shape} vs {b.shape}")
    return a, b


def circ_xcorr(a, b):
    """Circular cross-correlation: out[u] = sum_t a[t] b[(u + t) mod m]."""
    a, b = _pair(a, b)
    return np.fft.ifft2(np.conj(dft2(a)) * dft2(b), axes=(-2, -1)).real


def circ_conv(a, b):
    """Circular convolution: out[u] = sum_t a[t] b[(u - t) mod m]."""
    a, b = _pair(a, b)
    return np.fft.ifft2(dft2(a) * dft2(b), axes=(-2, -1)).real


def inner(a, b):
    """Inner product of real or complex arrays, conjugating the first argument."""
    return np.vdot(np.asarray(a).ravel(), np.asarray(b).ravel())


def impulse(m):
    if m < 2:
        raise ShapeMismatch(f"side must be >= 2, got {m}")
    p = np.zeros((m, m))
    p[0, 0] = 1.0
    return p


def wrapped_distance(m):
    """Per-axis circular distance of each index to the origin."""
    t = np.arange(m)
    return np.minimum(t, m - t).astype(np.float64)


def gaussian_response(m, sigma=None):
    """Gaussian peaked with value 1 at the origin, wrapped circularly.

    ``sigma`` defaults to m / 16.
    """
    if m < 2:
        raise ShapeMismatch(f"side must be >= 2, got {m}")
    if sigma is None:
        sigma = m / 16.0
    if not (np.isfinite(sigma) and sigma > 0):
        raise InvalidSigma(f"sigma must be positive and finite, got {sigma}")
    d = wrapped_distance(m)
    g = np.exp(-0.5 * (d / sigma) ** 2)
    return np.outer(g, g)


def hann_window(m):
    """Separable symmetric Hann window, 0.5 * (1 - cos(2 pi t / (m - 1)))."""
    if m < 2:
        raise ShapeMismatch(f"side must be >= 2, got {m}")
    t = np.arange(m)
    h = 0.5 * (1.0 - np.cos(2.0 * np.pi * t / (m - 1)))
    return np.outer(h, h)
