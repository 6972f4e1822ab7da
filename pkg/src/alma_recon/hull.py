"""Lower convex hull of planar point clouds and its tangent slope at ``u = 0``."""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "LowerHull",
    "DegenerateHullError",
    "ConstraintInfeasibleError",
    "HullGeometryError",
    "lower_convex_hull",
    "tangent_slope_at_zero",
]


class DegenerateHullError(ValueError):
    """Fewer than two distinct points were supplied."""


class ConstraintInfeasibleError(ValueError):
    """The sketched hull does not straddle ``u = 0``: eta is inconsistent with the data."""


class HullGeometryError(ValueError):
    """The hull is not decreasing at ``u = 0``."""


@dataclass(frozen=True)
class LowerHull:
    """Vertices ``(k, 2)`` of a lower convex chain, sorted by ``u``."""

    vertices: np.ndarray

    @property
    def u(self):
        return self.vertices[:, 0]

    @property
    def t(self):
        return self.vertices[:, 1]

    def slopes(self):
        return np.diff(self.t) / np.diff(self.u)

    def __len__(self):
        return len(self.vertices)

    def evaluate(self, u):
        """Piecewise-linear interpolation of the chain; NaN outside its u-range."""
        return np.interp(u, self.u, self.t, left=np.nan, right=np.nan)


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def lower_convex_hull(points):
    """Andrew's monotone chain, lower half only.

    ``points`` is any ``(N, 2)`` array-like of ``(u, t)``. Collinear interior
    points are dropped, so consecutive slopes of the result strictly increase.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if pts.size == 0:
        raise DegenerateHullError("empty point set")
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]
    # Among equal u only the lowest t can be on the lower chain.
    first = np.ones(len(pts), dtype=bool)
    first[1:] = pts[1:, 0] != pts[:-1, 0]
    pts = pts[first]
    if len(pts) < 2:
        raise DegenerateHullError("need at least two distinct points for a hull")

    chain = []
    for p in pts:
        while len(chain) >= 2 and _cross(chain[-2], chain[-1], p) <= 0:
            chain.pop()
        chain.append(p)
    return LowerHull(np.array(chain))


def tangent_slope_at_zero(hull):
    """Slope of the hull edge over ``u = 0``.

    When ``u = 0`` is itself a vertex, the slope of the edge on its left is
    returned (a subgradient of the lower boundary).
    """
    u = hull.u
    if not (u[0] < 0.0 < u[-1] or (u[0] < 0.0 and u[-1] == 0.0)):
        raise ConstraintInfeasibleError(
            f"hull spans u in [{u[0]:.6g}, {u[-1]:.6g}], which does not contain 0; "
            "eta is inconsistent with the data"
        )
    # First vertex with u >= 0; the edge ending there crosses (or touches) zero.
    i = int(np.searchsorted(u, 0.0, side="left"))
    v0, v1 = hull.vertices[i - 1], hull.vertices[i]
    m = (v1[1] - v0[1]) / (v1[0] - v0[0])
    if not m < 0:
        raise HullGeometryError(
            f"tangent slope at u=0 is {m:.6g} >= 0; eta exceeds what the sketch supports"
        )
    return float(m)
