"""ALMA: approximate Lagrange multipliers from a sketched epigraph.

Each iteration sketches points ``(u, t) = (1/2 ||A(a x) - b||^2 - eta^2/2,
1/2 TV(a x))`` for images ``x`` along a segment and scales ``a``, keeps the
lower convex hull of everything sketched so far, and reads its slope ``m`` at
``u = 0``. The tuning parameter is ``lambda = -1/m``; a TV-LASSO reconstruction
with that ``lambda`` seeds the next segment.
"""

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .core import dot_real
from .hull import (
    ConstraintInfeasibleError,
    HullGeometryError,
    lower_convex_hull,
    tangent_slope_at_zero,
)
from .operators import MultiCoilKSpace, SenseOperator, gridded_recon
from .solvers import (
    SolverConfig,
    admm_tv_lasso,
    project_onto_lsq_set,
    solve_least_squares,
)
from .tv import tv_value

__all__ = [
    "AlmaConfig",
    "AlmaTrace",
    "AlmaIteration",
    "ConstraintInfeasibleError",
    "HullGeometryError",
    "sketch_scaled_curve",
    "sketch_segment",
    "alma_run",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AlmaConfig:
    n_tau: int = 201
    n_alpha: int = 201
    n_max: int = 100
    lambda_rel_tol: float = 1e-4

    def __post_init__(self):
        if self.n_tau < 3 or self.n_alpha < 3:
            raise ValueError("n_tau and n_alpha must be at least 3")
        if self.n_max < 1:
            raise ValueError("n_max must be at least 1")
        if not self.lambda_rel_tol >= 0:
            raise ValueError("lambda_rel_tol must be non-negative")


@dataclass
class AlmaIteration:
    iteration: int
    lam: float
    slope: float
    hull_size: int
    admm_iters: int
    objective: float


@dataclass
class AlmaTrace:
    records: list = field(default_factory=list)
    converged: bool = False

    def __len__(self):
        return len(self.records)

    @property
    def lambdas(self):
        return np.array([r.lam for r in self.records])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "lambda", "slope", "hull_size", "admm_iters", "objective"])
            for r in self.records:
                w.writerow([r.iteration, repr(r.lam), repr(r.slope), r.hull_size,
                            r.admm_iters, repr(r.objective)])


def _curve_points(ax2, r, bb, tv, eta, n_alpha):
    """Points of the two parabola branches given the precomputed scalars.

    Every argument may be an array over segment samples; the output then has
    shape ``(len, n_alpha, 2)``.
    """
    ax2, r, bb, tv = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (ax2, r, bb, tv)))
    with np.errstate(divide="ignore", invalid="ignore"):
        a_max = np.where(ax2 > 0, np.abs(r) / np.where(ax2 > 0, ax2, 1.0), 0.0)
    grid = np.linspace(-1.0, 1.0, n_alpha)
    alpha = a_max[..., None] * grid
    u = 0.5 * (alpha**2 * ax2[..., None] - 2.0 * alpha * r[..., None] + bb[..., None] - eta**2)
    t = 0.5 * np.abs(alpha) * tv[..., None]
    return np.stack([u, t], axis=-1)


def sketch_scaled_curve(x, op, b, eta, n_alpha=201):
    """Sample ``alpha -> (u(alpha x), t(alpha x))`` for ``alpha`` in ``[-a_max, a_max]``.

    ``a_max = |Re <b, A x>| / ||A x||^2`` places the parabola vertex on the
    boundary of the sampled range. Returns an ``(n_alpha, 2)`` array, or the
    single point ``(1/2 (||b||^2 - eta^2), 0)`` when ``A x = 0``.
    """
    bd = b.data if isinstance(b, MultiCoilKSpace) else np.asarray(b)
    ax = op.forward(x)
    ax2 = dot_real(ax, ax)
    bb = dot_real(bd, bd)
    if ax2 == 0:
        return np.array([[0.5 * (bb - eta**2), 0.0]])
    r = dot_real(bd, ax)
    return _curve_points(ax2, r, bb, tv_value(x), eta, n_alpha)


def sketch_segment(x_a, x_b, op, b, eta, n_tau=201, n_alpha=201):
    """Union of scaled-curve sketches over ``x_tau = tau x_a + (1 - tau) x_b``.

    ``A x_tau`` is linear in ``tau``, so only two forward applications are
    needed; TV is evaluated per sample. Returns an ``(n_points, 2)`` array.
    """
    x_a = np.asarray(x_a)
    x_b = np.asarray(x_b)
    if x_a.shape != x_b.shape:
        raise ValueError(f"segment endpoints differ in shape: {x_a.shape} vs {x_b.shape}")
    bd = b.data if isinstance(b, MultiCoilKSpace) else np.asarray(b)
    aa, ab = op.forward(x_a), op.forward(x_b)
    bb = dot_real(bd, bd)
    taus = np.linspace(0.0, 1.0, n_tau)
    # ||tau Aa + (1-tau) Ab||^2 and <b, A x_tau> from a handful of inner products.
    g_aa, g_bb, g_ab = dot_real(aa, aa), dot_real(ab, ab), dot_real(aa, ab)
    r_a, r_b = dot_real(bd, aa), dot_real(bd, ab)
    s = 1.0 - taus
    ax2 = taus**2 * g_aa + 2.0 * taus * s * g_ab + s**2 * g_bb
    r = taus * r_a + s * r_b
    tv = np.array([tv_value(t * x_a + (1.0 - t) * x_b) for t in taus])

    degenerate = ax2 <= 0
    pts = _curve_points(ax2[~degenerate], r[~degenerate], bb, tv[~degenerate], eta, n_alpha)
    pts = pts.reshape(-1, 2)
    if degenerate.any():
        pts = np.vstack([pts, [[0.5 * (bb - eta**2), 0.0]]])
    return pts


def alma_run(op, b, coils, eta, cfg=AlmaConfig(), solver_cfg=SolverConfig()):
    """Run ALMA and return ``(lambda_alm, x_out, trace)``.

    Parameters
    ----------
    op : SenseOperator
        Encoding operator ``A``; ``coils`` must be the maps it was built from.
    b : MultiCoilKSpace or array
        Noisy measurements.
    coils : CoilSensitivities
        Used for the gridded starting image.
    eta : float
        Constraint bound, normally the realized noise norm.

    Raises
    ------
    ConstraintInfeasibleError
        If ``eta`` is not strictly between the least-squares residual and
        ``||b||``, so no sketch can straddle ``u = 0``.
    """
    if not isinstance(b, MultiCoilKSpace):
        b = MultiCoilKSpace(op.mask, b)
    if eta < 0:
        raise ValueError("eta must be non-negative")

    x_sharp = solve_least_squares(op, b, solver_cfg)
    res_ls = float(np.linalg.norm(op.forward(x_sharp) - b.data))
    norm_b = float(np.linalg.norm(b.data))
    if not res_ls < eta < norm_b:
        raise ConstraintInfeasibleError(
            f"eta={eta:.6g} must lie strictly between the least-squares residual "
            f"{res_ls:.6g} and ||b||={norm_b:.6g}"
        )

    x_prev = gridded_recon(b, coils)
    x_proj = x_sharp
    trace = AlmaTrace()
    carried = np.empty((0, 2))
    lam_prev = None
    x_out = x_prev
    for n in range(1, cfg.n_max + 1):
        if n > 1:
            x_proj = project_onto_lsq_set(x_prev, op, b, solver_cfg)
        cloud = sketch_segment(x_prev, x_proj, op, b, eta, cfg.n_tau, cfg.n_alpha)
        hull = lower_convex_hull(np.vstack([carried, cloud]))
        carried = hull.vertices
        m = tangent_slope_at_zero(hull)
        lam = -1.0 / m

        x_out, info = admm_tv_lasso(op, b, lam, solver_cfg, x0=x_prev, return_info=True)
        trace.records.append(
            AlmaIteration(n, lam, m, len(hull), info.iterations, info.objective)
        )
        log.debug("ALMA it %d: lambda=%.6g slope=%.6g hull=%d", n, lam, m, len(hull))
        if lam_prev is not None and abs(lam - lam_prev) <= cfg.lambda_rel_tol * lam_prev:
            trace.converged = True
            break
        lam_prev = lam
        x_prev = x_out
    return lam, x_out, trace
