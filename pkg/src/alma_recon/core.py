"""Complex-array primitives: real inner products, p-norms and the centered DFT.

Images are plain 2-D ``complex128`` numpy arrays. Complex vectors are treated
as vectors of the real space R^{2d}, so norms act on real and imaginary parts
separately.
"""

from pathlib import Path

import numpy as np
import scipy.fft

__all__ = ["inner_re", "dot_real", "norm_p", "dft2c", "idft2c", "save_magnitude_image"]


def _check_same_shape(a, b):
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def inner_re(a, b):
    """Return ``Re(sum(a * b))``, the un-conjugated real part of ``a^T b``."""
    a = np.asarray(a)
    b = np.asarray(b)
    _check_same_shape(a, b)
    return float(np.real(np.sum(a * b)))


def dot_real(a, b):
    """Inner product of R^{2d}: ``Re(a^H b)`` = <(Re a, Im a), (Re b, Im b)>."""
    a = np.asarray(a)
    b = np.asarray(b)
    _check_same_shape(a, b)
    return float(np.real(np.vdot(a, b)))


def norm_p(y, p=2):
    """p-norm of a complex array, counting real and imaginary parts separately.

    ``||y||_p^p = sum |Re y_j|^p + |Im y_j|^p``. For ``p == 2`` this is the
    usual Euclidean norm.
    """
    if p <= 0:
        raise ValueError("p must be positive")
    y = np.asarray(y)
    if p == 2:
        return float(np.linalg.norm(y.ravel()))
    re = np.abs(np.real(y))
    im = np.abs(np.imag(y))
    if p == 1:
        return float(re.sum() + im.sum())
    return float((np.sum(re**p) + np.sum(im**p)) ** (1.0 / p))


def dft2c(x):
    """Unitary 2-D DFT over the last two axes with DC at the grid center."""
    x = np.asarray(x, dtype=np.complex128)
    axes = (-2, -1)
    k = scipy.fft.fft2(scipy.fft.ifftshift(x, axes=axes), axes=axes, norm="ortho")
    return scipy.fft.fftshift(k, axes=axes)


def idft2c(k):
    """Inverse of :func:`dft2c`."""
    k = np.asarray(k, dtype=np.complex128)
    axes = (-2, -1)
    x = scipy.fft.ifft2(scipy.fft.ifftshift(k, axes=axes), axes=axes, norm="ortho")
    return scipy.fft.fftshift(x, axes=axes)


def save_magnitude_image(path, x, ref_max=None):
    """Write ``|x|`` as a 16-bit grayscale image (PGM or PNG by suffix).

    Intensities are scaled linearly so that ``ref_max`` (default ``max|x|``)
    maps to 65535; values above it are clipped.
    """
    path = Path(path)
    mag = np.abs(np.asarray(x))
    if ref_max is None:
        ref_max = mag.max()
    scale = 65535.0 / ref_max if ref_max > 0 else 0.0
    img = np.clip(np.rint(mag * scale), 0, 65535).astype(np.uint16)
    if path.suffix.lower() == ".png":
        from PIL import Image

        Image.fromarray(img).save(path)
    else:
        rows, cols = img.shape
        with open(path, "wb") as fh:
            fh.write(f"P5\n{cols} {rows}\n65535\n".encode("ascii"))
            fh.write(img.astype(">u2").tobytes())
    return path
