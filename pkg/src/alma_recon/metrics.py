"""Image quality metrics on magnitude images: MS-SSIM, pSNR and CJV."""

from dataclasses import dataclass
import math

import numpy as np
from scipy.ndimage import correlate1d

__all__ = ["MetricReport", "msssim", "psnr", "cjv", "evaluate", "MSSSIM_WEIGHTS"]

MSSSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
WINDOW_SIZE = 11
WINDOW_SIGMA = 1.5
K1, K2 = 0.01, 0.03


@dataclass(frozen=True)
class MetricReport:
    mssim: float
    psnr_db: float
    cjv: float


def _gauss_window(size=WINDOW_SIZE, sigma=WINDOW_SIGMA):
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    return g / g.sum()


def _filter_valid(img, win):
    out = correlate1d(img, win, axis=0, mode="constant")
    out = correlate1d(out, win, axis=1, mode="constant")
    h = len(win) // 2
    return out[h:-h, h:-h]


def _ssim_cs(x, y, c1, c2, win):
    mx, my = _filter_valid(x, win), _filter_valid(y, win)
    sxx = _filter_valid(x * x, win) - mx * mx
    syy = _filter_valid(y * y, win) - my * my
    sxy = _filter_valid(x * y, win) - mx * my
    cs_map = (2.0 * sxy + c2) / (sxx + syy + c2)
    l_map = (2.0 * mx * my + c1) / (mx * mx + my * my + c1)
    return float(np.mean(l_map * cs_map)), float(np.mean(cs_map))


def _downsample(img):
    r, c = (img.shape[0] // 2) * 2, (img.shape[1] // 2) * 2
    img = img[:r, :c]
    return 0.25 * (img[0::2, 0::2] + img[1::2, 0::2] + img[0::2, 1::2] + img[1::2, 1::2])


def max_scales(shape, window=WINDOW_SIZE):
    """Number of dyadic scales at which every side still holds a full window."""
    m = min(shape)
    k = 0
    while k < len(MSSSIM_WEIGHTS) and m >= window:
        k += 1
        m //= 2
    return k


def msssim(img, ref, data_range=None, scales=None):
    """Multiscale SSIM of ``img`` against ``ref``.

    Five dyadic scales with the usual weights; when the images are too small
    for five 11-pixel windows, ``scales=None`` drops the coarsest scales and
    renormalizes the remaining weights. ``data_range`` defaults to ``max(ref)``.
    """
    x = np.abs(np.asarray(img)) if np.iscomplexobj(img) else np.asarray(img, float)
    y = np.abs(np.asarray(ref)) if np.iscomplexobj(ref) else np.asarray(ref, float)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    fit = max_scales(x.shape)
    if scales is None:
        scales = fit
    if scales < 1 or scales > fit:
        raise ValueError(
            f"{scales} scales need sides of at least {WINDOW_SIZE * 2 ** (scales - 1)} "
            f"pixels; image is {x.shape}"
        )
    L = float(np.max(y)) if data_range is None else float(data_range)
    if L <= 0:
        raise ValueError("reference image has no dynamic range")
    c1, c2 = (K1 * L) ** 2, (K2 * L) ** 2
    w = np.asarray(MSSSIM_WEIGHTS[:scales])
    w = w / w.sum()
    win = _gauss_window()

    vals = []
    for s in range(scales):
        ssim, cs = _ssim_cs(x, y, c1, c2, win)
        vals.append(ssim if s == scales - 1 else cs)
        if s < scales - 1:
            x, y = _downsample(x), _downsample(y)
    vals = np.clip(np.asarray(vals), 0.0, None)
    return float(np.prod(vals**w))


def psnr(img, ref):
    """Peak SNR in dB with peak ``max(ref)``; ``inf`` for identical images."""
    x = np.abs(np.asarray(img)) if np.iscomplexobj(img) else np.asarray(img, float)
    y = np.abs(np.asarray(ref)) if np.iscomplexobj(ref) else np.asarray(ref, float)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    mse = float(np.mean((x - y) ** 2))
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(float(np.max(y)) ** 2 / mse)


def cjv(img, mask_gm, mask_wm):
    """Coefficient of joint variation ``(sd_GM + sd_WM) / |mean_GM - mean_WM|``.

    Returns ``inf`` when the two tissue means coincide.
    """
    x = np.abs(np.asarray(img)) if np.iscomplexobj(img) else np.asarray(img, float)
    gm = np.asarray(mask_gm, dtype=bool)
    wm = np.asarray(mask_wm, dtype=bool)
    if not gm.any() or not wm.any():
        raise ValueError("CJV masks must be non-empty")
    if np.any(gm & wm):
        raise ValueError("CJV masks must be disjoint")
    g, w = x[gm], x[wm]
    gap = abs(g.mean() - w.mean())
    if gap == 0:
        return math.inf
    return float((g.std() + w.std()) / gap)


def evaluate(x, ref, mask_gm, mask_wm):
    """All three metrics of reconstruction ``x`` (complex ok) against ``ref``."""
    mag = np.abs(x)
    return MetricReport(msssim(mag, ref), psnr(mag, ref), cjv(mag, mask_gm, mask_wm))
