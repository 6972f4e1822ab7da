"""L-curve selection of the TV weight: corner of (log residual, log TV)."""

import csv
from dataclasses import dataclass
import math

import numpy as np

from .solvers import SolverConfig, admm_tv_lasso
from .tv import tv_value

__all__ = ["LCurvePoint", "NoCornerError", "menger_curvature", "corner_index",
           "lcurve_select", "write_lcurve_csv"]


@dataclass(frozen=True)
class LCurvePoint:
    lam: float
    log_residual: float
    log_tv: float


class NoCornerError(ValueError):
    """The sampled L-curve has no interior point of maximal curvature."""

    def __init__(self, message, points=None):
        super().__init__(message)
        self.points = points


def menger_curvature(x, y):
    """Signed curvature of the circle through each three consecutive points.

    Positive values mean a counter-clockwise (corner-forming) turn. The result
    has ``len(x) - 2`` entries, one per interior point.
    """
    p = np.column_stack([x, y]).astype(float)
    a, b, c = p[:-2], p[1:-1], p[2:]
    d1, d2 = b - a, c - b
    cross = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    n1, n2 = np.linalg.norm(d1, axis=1), np.linalg.norm(d2, axis=1)
    # rounding noise on collinear points is not a turn
    cross = np.where(np.abs(cross) <= 1e-12 * n1 * n2, 0.0, cross)
    denom = n1 * n2 * np.linalg.norm(c - a, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        k = np.where(denom > 0, 2.0 * cross / denom, 0.0)
    return k


def corner_index(x, y):
    """Index of the point of maximum curvature; ties go to the lower index.

    Raises :class:`NoCornerError` when no interior point bends towards a corner.
    """
    if len(x) < 3:
        raise NoCornerError("need at least three points")
    k = menger_curvature(x, y)
    if not np.any(k > 0):
        raise NoCornerError("L-curve never turns towards a corner")
    return int(np.argmax(k)) + 1


def lcurve_select(op, b, lam_grid, solver_cfg=SolverConfig(), x0=None,
                  warm_start=True, return_images=False):
    """Sweep ``lam_grid`` and return ``(lambda_L, points[, images])``.

    Reconstructions run from the largest ``lambda`` down (continuation), each
    warm-started from the previous one when ``warm_start`` is set. Points are
    returned in increasing ``lambda`` order.
    """
    lams = np.sort(np.asarray(lam_grid, dtype=float))
    if len(lams) < 3 or np.any(lams <= 0):
        raise ValueError("lambda grid needs at least three positive values")
    bd = getattr(b, "data", b)
    points, images = [], []
    x = x0
    for lam in lams[::-1]:
        x_lam = admm_tv_lasso(op, b, lam, solver_cfg, x0=x if warm_start else x0)
        if warm_start:
            x = x_lam
        res = float(np.linalg.norm(op.forward(x_lam) - bd))
        tv = tv_value(x_lam)
        points.append(LCurvePoint(float(lam), math.log(max(res, 1e-300)),
                                  math.log(max(tv, 1e-300))))
        if return_images:
            images.append(x_lam)
    points.reverse()
    images.reverse()
    xs = np.array([p.log_residual for p in points])
    ys = np.array([p.log_tv for p in points])
    try:
        k = corner_index(xs, ys)
    except NoCornerError as exc:
        raise NoCornerError(str(exc), points=points) from None
    if return_images:
        return points[k].lam, points, images
    return points[k].lam, points


def write_lcurve_csv(path, points):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lambda", "log_residual", "log_tv"])
        for p in points:
            w.writerow([repr(p.lam), repr(p.log_residual), repr(p.log_tv)])
