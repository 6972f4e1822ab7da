"""Least-squares (iterative SENSE) and ADMM solvers for TV-regularized LASSO.

All solvers are matrix-free: ``op`` is anything with ``forward``, ``adjoint``
and (optionally) ``normal`` methods, e.g. :class:`~alma_recon.SenseOperator`.
"""

from dataclasses import dataclass
import logging

import numpy as np
import scipy.fft

from .operators import MultiCoilKSpace
from .tv import GradientField, divergence, gradient, soft_threshold, tv_value

__all__ = [
    "SolverConfig",
    "IterationLimitError",
    "conjugate_gradient",
    "solve_least_squares",
    "project_onto_lsq_set",
    "admm_tv_lasso",
    "tv_lasso_objective",
]

log = logging.getLogger(__name__)

RHO_SPAN = 1e3


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances and budgets for the inner solvers.

    ``cg_tol`` is the relative normal-equation residual required of
    least-squares solves. ``admm_inner_tol``/``admm_inner_max_iter`` govern the
    warm-started CG used for the ADMM image update.
    """

    cg_tol: float = 1e-8
    cg_max_iter: int = 500
    admm_rho: float = 1.0
    admm_max_iter: int = 300
    admm_tol: float = 1e-6
    admm_inner_tol: float = 1e-6
    admm_inner_max_iter: int = 100
    admm_inner_fail_tol: float = 1e-3
    admm_adaptive_rho: bool = True
    cg_strict: bool = True

    def __post_init__(self):
        for name in ("cg_tol", "cg_max_iter", "admm_rho", "admm_max_iter",
                     "admm_tol", "admm_inner_tol", "admm_inner_max_iter"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


class IterationLimitError(RuntimeError):
    """An iterative solver hit its iteration budget before reaching tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


def _vdot(a, b):
    return np.real(np.vdot(a, b))


def conjugate_gradient(apply, rhs, x0=None, tol=1e-8, max_iter=500, atol_ref=None,
                       strict=True, precond=None):
    """Solve ``apply(x) = rhs`` for a Hermitian positive (semi-)definite map.

    ``precond``, if given, applies an approximate inverse of ``apply``
    (Hermitian positive definite).

    Stops once ``||rhs - apply(x)|| <= tol * atol_ref`` (``atol_ref`` defaults to
    ``||rhs||``). Returns ``(x, iterations, residual_norm)``; raises
    :class:`IterationLimitError` if the budget runs out, unless ``strict`` is
    false, in which case the last iterate is returned.
    """
    x = np.zeros_like(rhs) if x0 is None else np.array(x0, dtype=rhs.dtype)
    r = rhs - apply(x) if x0 is not None else rhs.copy()
    ref = np.linalg.norm(rhs) if atol_ref is None else atol_ref
    target = tol * ref
    rnorm = np.linalg.norm(r)
    if rnorm <= target:
        return x, 0, float(rnorm)
    s = r if precond is None else precond(r)
    rs = _vdot(r, s)
    p = s.copy()
    it = 0
    for it in range(1, max_iter + 1):
        q = apply(p)
        pq = _vdot(p, q)
        if pq <= 0:
            # Direction in the null space: residual cannot shrink further.
            break
        step = rs / pq
        x += step * p
        r -= step * q
        rnorm = np.linalg.norm(r)
        if rnorm <= target:
            return x, it, float(rnorm)
        s = r if precond is None else precond(r)
        rs_new = _vdot(r, s)
        p = s + (rs_new / rs) * p
        rs = rs_new
    res = float(rnorm)
    if not strict:
        return x, it, res
    raise IterationLimitError(
        f"CG stopped at relative residual {res / ref if ref else res:.3e} "
        f"(target {tol:.1e}) after {max_iter} iterations",
        residual=res,
        iterations=max_iter,
    )


def neumann_laplacian_eigenvalues(shape):
    """Eigenvalues of ``D^T D`` in the orthonormal 2-D DCT-II basis."""
    rows, cols = shape
    ey = 4.0 * np.sin(np.pi * np.arange(rows) / (2.0 * rows)) ** 2
    ex = 4.0 * np.sin(np.pi * np.arange(cols) / (2.0 * cols)) ** 2
    return ey[:, None] + ex[None, :]


def _tv_preconditioner(shape, rho, shift):
    """Inverse of ``rho D^T D + shift I``, applied through the DCT."""
    inv = 1.0 / (rho * neumann_laplacian_eigenvalues(shape) + shift)

    def apply(v):
        return scipy.fft.idctn(inv * scipy.fft.dctn(v, norm="ortho"), norm="ortho")

    return apply


def _normal_diagonal_mean(op, shape):
    """Mean of ``diag(A^H A)``; exact for :class:`SenseOperator`."""
    coils = getattr(op, "coils", None)
    mask = getattr(op, "mask", None)
    if coils is not None and mask is not None:
        return float(coils.sum_of_squares().mean() * len(mask) / mask.n_lines)
    # Hutchinson-free fallback: Rayleigh quotient of a fixed random probe.
    rng = np.random.default_rng(0)
    v = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return float(_vdot(v, _normal(op)(v)) / _vdot(v, v))


def _data(b):
    return b.data if isinstance(b, MultiCoilKSpace) else np.asarray(b, dtype=np.complex128)


def _normal(op):
    return getattr(op, "normal", None) or (lambda x: op.adjoint(op.forward(x)))


def solve_least_squares(op, b, cfg=SolverConfig()):
    """Minimum-norm minimizer of ``||A x - b||_2`` by CG on the normal equations."""
    b = _data(b)
    rhs = op.adjoint(b)
    if not np.any(rhs):
        return np.zeros_like(rhs)
    x, _, _ = conjugate_gradient(
        _normal(op), rhs, tol=cfg.cg_tol, max_iter=cfg.cg_max_iter, strict=cfg.cg_strict
    )
    return x


def project_onto_lsq_set(x, op, b, cfg=SolverConfig()):
    """Euclidean projection of ``x`` onto ``argmin ||A z - b||_2``.

    Computes ``x + dz`` with ``dz`` the minimum-norm solution of
    ``min ||A dz - (b - A x)||``; CG from zero keeps ``dz`` in ``range(A^H)``.
    The residual is measured against ``||A^H b||`` like :func:`solve_least_squares`.
    """
    x = np.asarray(x, dtype=np.complex128)
    b = _data(b)
    ref = np.linalg.norm(op.adjoint(b))
    rhs = op.adjoint(b - op.forward(x))
    if ref == 0 or np.linalg.norm(rhs) <= cfg.cg_tol * ref:
        return x.copy()
    dz, _, _ = conjugate_gradient(
        _normal(op), rhs, tol=cfg.cg_tol, max_iter=cfg.cg_max_iter, atol_ref=ref,
        strict=cfg.cg_strict,
    )
    return x + dz


def tv_lasso_objective(op, b, x, lam):
    """``1/2 ||A x - b||^2 + lam/2 * TV(x)``."""
    r = op.forward(x) - _data(b)
    return 0.5 * float(np.vdot(r, r).real) + 0.5 * lam * tv_value(x)


@dataclass
class AdmmInfo:
    iterations: int
    converged: bool
    primal_residual: float
    dual_residual: float
    rho: float
    objective: float


def admm_tv_lasso(op, b, lam, cfg=SolverConfig(), x0=None, return_info=False):
    """Minimize ``1/2 ||A x - b||^2 + lam/2 ||D x||_1`` by ADMM on ``z = D x``.

    Parameters
    ----------
    op : operator with ``forward``/``adjoint``
    b : array or MultiCoilKSpace
    lam : float
        Regularization weight, must be positive.
    cfg : SolverConfig
    x0 : array, optional
        Starting image (warm start). Defaults to ``A^H b``.
    return_info : bool
        Also return an :class:`AdmmInfo`.
    """
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    b = _data(b)
    normal = _normal(op)
    atb = op.adjoint(b)
    x = atb.copy() if x0 is None else np.array(x0, dtype=np.complex128)
    obj0 = tv_lasso_objective(op, b, x, lam)
    x_start = x.copy()

    rho = cfg.admm_rho
    diag_mean = _normal_diagonal_mean(op, x.shape)
    z = gradient(x)
    u = GradientField.zeros(x.shape)
    converged = False
    r_norm = s_norm = np.inf
    it = 0
    for it in range(1, cfg.admm_max_iter + 1):
        w = z - u
        rhs = atb - rho * divergence(w)
        rho_now = rho

        def system(v):
            return normal(v) - rho_now * divergence(gradient(v))

        # Inexact inner solves are fine for ADMM; only a grossly wrong one is fatal.
        x, _, res = conjugate_gradient(
            system, rhs, x0=x, tol=cfg.admm_inner_tol,
            max_iter=cfg.admm_inner_max_iter, strict=False,
            precond=_tv_preconditioner(x.shape, rho_now, diag_mean),
        )
        rel = res / max(np.linalg.norm(rhs), 1e-300)
        if not rel <= cfg.admm_inner_fail_tol:
            raise IterationLimitError(
                f"ADMM image update failed at iteration {it}: CG relative residual "
                f"{rel:.3e} exceeds {cfg.admm_inner_fail_tol:.1e}",
                residual=res,
                iterations=it,
            )

        dx = gradient(x)
        z_prev = z
        z = soft_threshold(dx + u, lam / (2.0 * rho))
        u = u + dx - z

        r_norm = (dx - z).norm()
        s_norm = rho * np.linalg.norm(divergence(z - z_prev))
        eps_pri = cfg.admm_tol * max(dx.norm(), z.norm(), 1e-300)
        eps_dual = cfg.admm_tol * max(rho * np.linalg.norm(divergence(u)), 1e-300)
        if r_norm <= eps_pri and s_norm <= eps_dual:
            converged = True
            break
        if cfg.admm_adaptive_rho:
            if r_norm > 10.0 * s_norm and rho < RHO_SPAN * cfg.admm_rho:
                rho *= 2.0
                u = u * 0.5
            elif s_norm > 10.0 * r_norm and rho > cfg.admm_rho / RHO_SPAN:
                rho *= 0.5
                u = u * 2.0

    obj = tv_lasso_objective(op, b, x, lam)
    if obj > obj0:
        log.debug("ADMM ended above its starting objective; returning the start")
        x, obj = x_start, obj0
    if return_info:
        return x, AdmmInfo(it, converged, float(r_norm), float(s_norm), rho, obj)
    return x
