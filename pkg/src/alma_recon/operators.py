"""Multi-coil Cartesian encoding operator ``A = U F C`` and its adjoint.

k-space tensors are stored coil-major, ``(n_coils, n_acquired_lines, cols)``.
"""

from dataclasses import dataclass

import numpy as np
import scipy.fft

from .core import dft2c, idft2c

__all__ = [
    "CoilSensitivities",
    "SamplingMask",
    "MultiCoilKSpace",
    "SenseOperator",
    "forward",
    "adjoint",
    "gridded_recon",
]

RSS_FLOOR = 1e-8


@dataclass(frozen=True)
class CoilSensitivities:
    """Stack of complex coil maps, shape ``(n_coils, rows, cols)``."""

    maps: np.ndarray

    def __post_init__(self):
        maps = np.asarray(self.maps, dtype=np.complex128)
        if maps.ndim == 2:
            maps = maps[None]
        if maps.ndim != 3:
            raise ValueError("coil maps must have shape (n_coils, rows, cols)")
        object.__setattr__(self, "maps", maps)

    @property
    def n_coils(self):
        return self.maps.shape[0]

    @property
    def shape(self):
        return self.maps.shape[1:]

    def sum_of_squares(self):
        """Pixelwise ``sum_k |C_k|^2``."""
        return np.sum(np.abs(self.maps) ** 2, axis=0)

    @classmethod
    def uniform(cls, shape, n_coils=1):
        return cls(np.ones((n_coils, *shape), dtype=np.complex128))


@dataclass(frozen=True)
class SamplingMask:
    """Acquired phase-encode lines, stored 1-based as in ``1..n_lines``."""

    n_lines: int
    lines: tuple

    def __post_init__(self):
        lines = tuple(sorted(int(v) for v in self.lines))
        if len(set(lines)) != len(lines):
            raise ValueError("sampling lines must be distinct")
        if lines and (lines[0] < 1 or lines[-1] > self.n_lines):
            raise ValueError(f"line indices must lie in [1, {self.n_lines}]")
        if not lines:
            raise ValueError("sampling mask is empty")
        object.__setattr__(self, "lines", lines)

    @property
    def rows(self):
        """0-based grid rows of the acquired lines."""
        return np.asarray(self.lines, dtype=np.intp) - 1

    def __len__(self):
        return len(self.lines)

    @classmethod
    def full(cls, n_lines):
        return cls(n_lines, tuple(range(1, n_lines + 1)))

    def as_array(self, cols):
        """Boolean ``(n_lines, cols)`` mask of sampled grid points."""
        m = np.zeros((self.n_lines, cols), dtype=bool)
        m[self.rows] = True
        return m


@dataclass(frozen=True)
class MultiCoilKSpace:
    """Sampled k-space lines for every coil, shape ``(n_coils, len(mask), cols)``."""

    mask: SamplingMask
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.complex128)
        if data.ndim != 3 or data.shape[1] != len(self.mask):
            raise ValueError(
                f"k-space data of shape {data.shape} does not match a mask "
                f"with {len(self.mask)} lines"
            )
        object.__setattr__(self, "data", data)

    @property
    def n_coils(self):
        return self.data.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)


class SenseOperator:
    """Matrix-free ``A = U F C`` acting on ``(rows, cols)`` complex images.

    Parameters
    ----------
    coils : CoilSensitivities
    mask : SamplingMask
        Must have ``n_lines == rows`` of the coil maps.
    """

    def __init__(self, coils, mask):
        if mask.n_lines != coils.shape[0]:
            raise ValueError(
                f"mask has {mask.n_lines} lines but images have {coils.shape[0]} rows"
            )
        self.coils = coils
        self.mask = mask
        self._maps = coils.maps
        self._rows = mask.rows
        self.ishape = coils.shape
        self.oshape = (coils.n_coils, len(mask), coils.shape[1])
        # Normal-operator precomputation: with whole rows sampled, F^H U^T U F acts
        # only along axis 0, so it reduces to 1-D FFTs with the centering shifts
        # moved onto the maps and the mask.
        keep = np.zeros(self.ishape[0], dtype=bool)
        keep[self._rows] = True
        self._keep_shifted = np.fft.ifftshift(keep)[:, None]
        self._maps_shifted = np.fft.ifftshift(self._maps, axes=-2)

    def _check_image(self, x):
        x = np.asarray(x)
        if x.shape != self.ishape:
            raise ValueError(f"image shape {x.shape} does not match operator {self.ishape}")
        return x

    def forward(self, x):
        x = self._check_image(x)
        return dft2c(self._maps * x)[:, self._rows, :]

    def adjoint(self, y):
        y = np.asarray(y)
        if y.shape != self.oshape:
            raise ValueError(f"k-space shape {y.shape} does not match operator {self.oshape}")
        k = np.zeros((self.oshape[0], *self.ishape), dtype=np.complex128)
        k[:, self._rows, :] = y
        return np.sum(np.conj(self._maps) * idft2c(k), axis=0)

    def normal(self, x):
        """``A^H A x`` without materializing the sampled k-space."""
        x = self._check_image(x)
        xs = np.fft.ifftshift(x, axes=0)
        k = scipy.fft.fft(self._maps_shifted * xs, axis=-2, norm="ortho")
        k *= self._keep_shifted
        v = scipy.fft.ifft(k, axis=-2, norm="ortho", overwrite_x=True)
        out = np.einsum("kij,kij->ij", np.conj(self._maps_shifted), v)
        return np.fft.fftshift(out, axes=0)

    __call__ = forward

    def to_dense(self):
        """Explicit ``(prod(oshape), prod(ishape))`` matrix; small problems only."""
        n = int(np.prod(self.ishape))
        if n > 256:
            raise ValueError("dense assembly is limited to images of at most 16x16")
        cols = []
        for j in range(n):
            e = np.zeros(n, dtype=np.complex128)
            e[j] = 1.0
            cols.append(self.forward(e.reshape(self.ishape)).ravel())
        return np.stack(cols, axis=1)


def _kspace_data(y):
    return y.data if isinstance(y, MultiCoilKSpace) else np.asarray(y)


def forward(x, coils, mask):
    """Encode image ``x`` into multi-coil undersampled k-space."""
    return MultiCoilKSpace(mask, SenseOperator(coils, mask).forward(x))


def adjoint(y, coils):
    """``A^H y``: zero-fill, inverse DFT, conjugate-coil combination."""
    if not isinstance(y, MultiCoilKSpace):
        raise TypeError("adjoint needs a MultiCoilKSpace to know the sampled lines")
    return SenseOperator(coils, y.mask).adjoint(y.data)


def gridded_recon(b, coils):
    """Sensitivity-weighted zero-filled reconstruction, used as ALMA's start.

    Returns ``A^H b / sum_k |C_k|^2`` where the denominator exceeds 1e-8 and
    zero elsewhere.
    """
    x = adjoint(b, coils)
    rss = coils.sum_of_squares()
    out = np.zeros_like(x)
    ok = rss > RSS_FLOOR
    out[ok] = x[ok] / rss[ok]
    return out
