"""Synthetic multi-coil Cartesian acquisition of the Shepp-Logan phantom."""

from dataclasses import dataclass
import json
import math
from pathlib import Path

import numpy as np
import scipy.stats

from .core import save_magnitude_image
from .operators import CoilSensitivities, MultiCoilKSpace, SamplingMask, forward

__all__ = [
    "TrajectorySpec",
    "NoiseSpec",
    "shepp_logan",
    "simulate_coils",
    "draw_trajectory",
    "simulate_acquisition",
    "corrupt",
    "gm_wm_masks",
    "derive_seed",
    "export_run",
    "load_kspace",
]

# Modified Shepp-Logan: intensity, semi-axes (a, b), center (x0, y0), angle (deg).
_MODIFIED_SHEPP_LOGAN = (
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0),
    (-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0),
    (-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0),
    (0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0),
    (0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0),
    (0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0),
    (0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0),
)

# Tissue bands of the clean phantom used for the CJV masks.
WM_INTENSITY = 0.2
GM_INTENSITY = 0.3
BAND_HALF_WIDTH = 0.05

CENTER_FRACTION = 0.30
COIL_RADIUS = 0.55
COIL_WIDTH = 0.45


def _ceil(x):
    # Guards products such as 384 * 0.2 = 76.80000000000001 -> 77, and 384 * 0.25 -> 96.
    return int(math.ceil(round(x, 9)))


def shepp_logan(n):
    """Rasterize the 10-ellipse modified Shepp-Logan phantom at pixel centers.

    Returns a real ``(n, n)`` float array with values in ``[0, 1]``; row 0 is
    the top of the image.
    """
    if n < 32:
        raise ValueError("phantom size must be at least 32")
    c = (np.arange(n) + 0.5) * (2.0 / n) - 1.0
    x = c[None, :]
    y = -c[:, None]
    img = np.zeros((n, n))
    for amp, a, b, x0, y0, phi in _MODIFIED_SHEPP_LOGAN:
        th = np.deg2rad(phi)
        dx, dy = x - x0, y - y0
        xr = dx * np.cos(th) + dy * np.sin(th)
        yr = -dx * np.sin(th) + dy * np.cos(th)
        img[(xr / a) ** 2 + (yr / b) ** 2 <= 1.0] += amp
    return np.clip(np.round(img, 12), 0.0, 1.0)


def simulate_coils(n, n_coils):
    """Smooth complex coil maps: Gaussian lobes on a ring plus a linear phase.

    Lobe ``k`` is centered at angle ``2 pi k / n_coils`` on a circle of radius
    ``0.55 n`` about the grid center, with Gaussian width ``0.45 n``. Maps are
    scaled so the root-sum-of-squares peaks at 1.
    """
    if n_coils < 1:
        raise ValueError("need at least one coil")
    idx = np.arange(n) - (n - 1) / 2.0
    yy, xx = np.meshgrid(idx, idx, indexing="ij")
    maps = np.empty((n_coils, n, n), dtype=np.complex128)
    for k in range(n_coils):
        th = 2.0 * np.pi * k / n_coils
        cy, cx = COIL_RADIUS * n * np.sin(th), COIL_RADIUS * n * np.cos(th)
        if n_coils == 1:
            cy = cx = 0.0
        d2 = (yy - cy) ** 2 + (xx - cx) ** 2
        mag = np.exp(-d2 / (2.0 * (COIL_WIDTH * n) ** 2))
        phase = th + 0.5 * np.pi * (xx * np.cos(th) + yy * np.sin(th)) / n
        maps[k] = mag * np.exp(1j * phase)
    maps /= np.sqrt(np.max(np.sum(np.abs(maps) ** 2, axis=0)))
    return CoilSensitivities(maps)


@dataclass(frozen=True)
class TrajectorySpec:
    """Cartesian line undersampling: ``ceil(n_lines * ur_pct)`` lines in total."""

    n_lines: int = 384
    ur_pct: float = 0.2
    center_frac: float = CENTER_FRACTION
    seed: int = 0

    @property
    def n_acquired(self):
        return _ceil(self.n_lines * self.ur_pct)

    @property
    def n_center(self):
        return _ceil(self.n_acquired * self.center_frac)

    @property
    def mu(self):
        return self.n_lines // 2 + 1

    @property
    def variance(self):
        return self.n_lines * self.ur_pct


def _line_log_pmf(lines, mu, sd):
    """``log P(round(N(mu, sd^2)) == v)`` for integer lines ``v``, tail-stable."""
    a = (lines - 0.5 - mu) / sd
    b = (lines + 0.5 - mu) / sd
    right = a > 0
    hi = np.where(right, scipy.stats.norm.logsf(a), scipy.stats.norm.logcdf(b))
    lo = np.where(right, scipy.stats.norm.logsf(b), scipy.stats.norm.logcdf(a))
    return hi + np.log1p(-np.exp(lo - hi))


def draw_trajectory(spec):
    """Draw a :class:`SamplingMask` (1-based line indices).

    A contiguous block of ``n_center`` lines around line ``mu = n_lines/2 + 1``
    is always acquired. The remaining lines follow rounded draws from
    ``N(mu, n_lines * ur_pct)`` with duplicates and out-of-range draws
    rejected. That rejection loop is sampled exactly, and without stalling in
    the tails, as successive sampling without replacement from the rounded
    normal's probabilities over the free lines.
    """
    if not 0 < spec.ur_pct <= 1:
        raise ValueError("ur_pct must lie in (0, 1]")
    total = spec.n_acquired
    if total > spec.n_lines:
        raise ValueError(f"{total} lines requested from a grid of {spec.n_lines}")
    n_c = min(spec.n_center, total)
    start = spec.mu - n_c // 2
    start = min(max(start, 1), spec.n_lines - n_c + 1)
    center = np.arange(start, start + n_c)

    free = np.setdiff1d(np.arange(1, spec.n_lines + 1), center)
    logp = _line_log_pmf(free.astype(float), spec.mu, math.sqrt(spec.variance))
    p = np.exp(logp - logp.max())
    # keep far-tail lines drawable once everything nearer is taken
    p = np.maximum(p, 1e-300)
    rng = np.random.default_rng(spec.seed)
    extra = rng.choice(free, size=total - n_c, replace=False, p=p / p.sum())
    return SamplingMask(spec.n_lines, tuple(int(v) for v in np.concatenate([center, extra])))


def simulate_acquisition(f, coils, mask):
    """Noiseless data ``y = U F C f``."""
    return forward(f, coils, mask)


@dataclass(frozen=True)
class NoiseSpec:
    """Additive complex Gaussian noise.

    ``convention`` fixes how the per-component variance follows from ``nl_pct``:

    ``"power"``
        ``sigma^2 = nl_pct * ||y||^2 / (2 N)``: the noise power is ``nl_pct``
        times the mean signal power per real component (``N`` complex samples).
    ``"literal"``
        ``sigma^2 = nl_pct * ||y||_2``, taken verbatim; at unit phantom
        intensity this buries the signal.
    """

    nl_pct: float = 0.03
    seed: int = 0
    convention: str = "power"

    def __post_init__(self):
        if self.nl_pct < 0:
            raise ValueError("nl_pct must be non-negative")
        if self.convention not in ("power", "literal"):
            raise ValueError(f"unknown noise convention {self.convention!r}")

    def variance(self, y):
        y = np.asarray(y)
        norm = np.linalg.norm(y.ravel())
        if self.convention == "literal":
            return norm * self.nl_pct
        return self.nl_pct * norm**2 / (2 * y.size)


def corrupt(y, spec):
    """Return ``(b, eta)`` with ``b = y + eps`` and ``eta = ||eps||_2`` (realized)."""
    data = y.data if isinstance(y, MultiCoilKSpace) else np.asarray(y)
    if spec.nl_pct == 0:
        return y, 0.0
    sigma = math.sqrt(spec.variance(data))
    rng = np.random.default_rng(spec.seed)
    eps = sigma * (rng.standard_normal(data.shape) + 1j * rng.standard_normal(data.shape))
    b = data + eps
    if isinstance(y, MultiCoilKSpace):
        b = MultiCoilKSpace(y.mask, b)
    return b, float(np.linalg.norm(eps.ravel()))


def gm_wm_masks(f):
    """Grey- and white-matter masks by intensity band of the clean phantom.

    White matter is the broad ``0.2`` interior, grey matter the ``0.3`` ellipses.
    """
    f = np.abs(np.asarray(f))
    wm = np.abs(f - WM_INTENSITY) < BAND_HALF_WIDTH
    gm = np.abs(f - GM_INTENSITY) < BAND_HALF_WIDTH
    if not gm.any() or not wm.any():
        raise ValueError("phantom yields an empty grey- or white-matter mask")
    return gm, wm


def derive_seed(master_seed, *keys):
    """Stable 64-bit seed from a master seed and integer keys (cell, run, ...)."""
    ss = np.random.SeedSequence([int(master_seed) & 0xFFFFFFFFFFFFFFFF, *map(int, keys)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def export_run(out_dir, f, mask, b, seed, gm=None, wm=None, extra=None):
    """Write one simulated run to ``out_dir``.

    Files: ``mask.txt`` (one 1-based line index per row), ``kspace.bin``
    (little-endian float64, interleaved re/im, C order), ``kspace.json``
    (shape, dtype, seed and ``extra``), ``phantom.pgm`` and optional
    ``mask_gm.pgm``/``mask_wm.pgm``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "mask.txt").write_text("".join(f"{v}\n" for v in mask.lines))
    data = b.data if isinstance(b, MultiCoilKSpace) else np.asarray(b)
    inter = np.empty(data.shape + (2,), dtype="<f8")
    inter[..., 0] = data.real
    inter[..., 1] = data.imag
    (out / "kspace.bin").write_bytes(inter.tobytes(order="C"))
    meta = {
        "shape": list(data.shape),
        "layout": "coil, line, column, (re, im)",
        "dtype": "<f8",
        "n_lines": mask.n_lines,
        "seed": int(seed),
    }
    if extra:
        meta.update(extra)
    (out / "kspace.json").write_text(json.dumps(meta, indent=2))
    save_magnitude_image(out / "phantom.pgm", f)
    if gm is not None:
        save_magnitude_image(out / "mask_gm.pgm", gm.astype(float), ref_max=1.0)
    if wm is not None:
        save_magnitude_image(out / "mask_wm.pgm", wm.astype(float), ref_max=1.0)
    return out


def load_kspace(run_dir):
    """Read back ``(MultiCoilKSpace, metadata)`` written by :func:`export_run`."""
    run_dir = Path(run_dir)
    meta = json.loads((run_dir / "kspace.json").read_text())
    raw = np.frombuffer((run_dir / "kspace.bin").read_bytes(), dtype="<f8")
    raw = raw.reshape(*meta["shape"], 2)
    lines = [int(v) for v in (run_dir / "mask.txt").read_text().split()]
    mask = SamplingMask(meta["n_lines"], tuple(lines))
    return MultiCoilKSpace(mask, raw[..., 0] + 1j * raw[..., 1]), meta
