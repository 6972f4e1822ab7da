"""Anisotropic total variation on non-periodic forward differences."""

from dataclasses import dataclass

import numpy as np

__all__ = ["GradientField", "gradient", "divergence", "tv_value", "soft_threshold"]


@dataclass
class GradientField:
    """Forward differences of a ``(rows, cols)`` image.

    ``h`` has shape ``(rows, cols - 1)`` and ``v`` has shape ``(rows - 1, cols)``.
    Supports the vector-space operations the ADMM iteration needs.
    """

    h: np.ndarray
    v: np.ndarray

    @property
    def image_shape(self):
        return (self.h.shape[0], self.v.shape[1])

    def __add__(self, other):
        return GradientField(self.h + other.h, self.v + other.v)

    def __sub__(self, other):
        return GradientField(self.h - other.h, self.v - other.v)

    def __mul__(self, a):
        return GradientField(a * self.h, a * self.v)

    __rmul__ = __mul__

    def __neg__(self):
        return GradientField(-self.h, -self.v)

    def norm(self):
        return float(np.sqrt(np.linalg.norm(self.h) ** 2 + np.linalg.norm(self.v) ** 2))

    def dot(self, other):
        """Real inner product ``Re <self, other>``."""
        return float(np.real(np.vdot(self.h, other.h) + np.vdot(self.v, other.v)))

    def ravel(self):
        return np.concatenate([self.h.ravel(), self.v.ravel()])

    @classmethod
    def zeros(cls, shape, dtype=np.complex128):
        rows, cols = shape
        return cls(np.zeros((rows, cols - 1), dtype), np.zeros((rows - 1, cols), dtype))


def gradient(x):
    """Apply ``D``: ``h[i, j] = x[i, j+1] - x[i, j]``, ``v[i, j] = x[i+1, j] - x[i, j]``."""
    x = np.asarray(x)
    if x.ndim != 2 or min(x.shape) < 2:
        raise ValueError(f"gradient needs a 2-D image with both sides >= 2, got {x.shape}")
    return GradientField(np.diff(x, axis=1), np.diff(x, axis=0))


def divergence(g):
    """Apply ``-D^T`` so that ``<D x, g> = <x, -divergence(g)>``."""
    h, v = g.h, g.v
    rows, cols = g.image_shape
    if h.shape != (rows, cols - 1) or v.shape != (rows - 1, cols):
        raise ValueError(f"inconsistent gradient field shapes {h.shape}, {v.shape}")
    out = np.zeros((rows, cols), dtype=np.result_type(h, v))
    out[:, :-1] += h
    out[:, 1:] -= h
    out[:-1, :] += v
    out[1:, :] -= v
    return out


def tv_value(x):
    """``||D x||_1`` with the l1 norm taken over real and imaginary parts."""
    g = gradient(x)
    return float(
        np.abs(g.h.real).sum() + np.abs(g.h.imag).sum()
        + np.abs(g.v.real).sum() + np.abs(g.v.imag).sum()
    )


def _shrink(t, kappa):
    return np.sign(t) * np.maximum(np.abs(t) - kappa, 0.0)


def soft_threshold(v, kappa):
    """Proximal map of ``kappa * ||.||_1``, applied to Re and Im separately."""
    if kappa < 0:
        raise ValueError("threshold must be non-negative")
    if isinstance(v, GradientField):
        return GradientField(soft_threshold(v.h, kappa), soft_threshold(v.v, kappa))
    v = np.asarray(v)
    if np.iscomplexobj(v):
        return _shrink(v.real, kappa) + 1j * _shrink(v.imag, kappa)
    return _shrink(v, kappa)
