import numpy as np
import pytest
from scipy.optimize import lsq_linear

from alma_recon import (
    CoilSensitivities,
    GradientField,
    IterationLimitError,
    MultiCoilKSpace,
    SamplingMask,
    SenseOperator,
    SolverConfig,
    admm_tv_lasso,
    divergence,
    forward,
    gradient,
    project_onto_lsq_set,
    shepp_logan,
    simulate_coils,
    solve_least_squares,
    tv_lasso_objective,
    tv_value,
)
from alma_recon.solvers import conjugate_gradient, neumann_laplacian_eigenvalues

from conftest import crandn, small_operator

from test_tv import dense_gradient


class IdentityOp:
    """A = I on a single-coil image; turns TV-LASSO into TV denoising."""

    def forward(self, x):
        return np.asarray(x)[None]

    def adjoint(self, y):
        return np.asarray(y)[0]

    def normal(self, x):
        return x


def tv_denoise_oracle(b, lam, iters=20000):
    """Dual FISTA for min 1/2||x - b||^2 + lam/2 ||Dx||_1 on a real image.

    The dual is a box-constrained quadratic in p with x = b - D^T p and
    |p| <= lam/2; ||D^T D|| <= 8 gives the step.
    """
    p = GradientField.zeros(b.shape, dtype=float)
    q, t = p, 1.0
    for _ in range(iters):
        x = b + divergence(q)
        pn = q + gradient(x) * (1.0 / 8.0)
        pn = GradientField(np.clip(pn.h, -lam / 2, lam / 2), np.clip(pn.v, -lam / 2, lam / 2))
        tn = (1.0 + np.sqrt(1.0 + 4.0 * t * t)) / 2.0
        q = pn + (pn - p) * ((t - 1.0) / tn)
        p, t = pn, tn
    return b + divergence(p)


def dense_instance(rng, n_coils=2, lines=(1, 3, 4, 6, 8)):
    op = small_operator(rng, n_coils=n_coils, lines=lines)
    b = MultiCoilKSpace(op.mask, crandn(rng, *op.oshape))
    return op, b, op.to_dense()


class TestConfig:
    def test_defaults(self):
        cfg = SolverConfig()
        assert (cfg.cg_tol, cfg.cg_max_iter, cfg.admm_rho, cfg.admm_max_iter, cfg.admm_tol) == (
            1e-8, 500, 1.0, 300, 1e-6)

    @pytest.mark.parametrize("field", ["cg_tol", "cg_max_iter", "admm_rho", "admm_max_iter",
                                       "admm_tol"])
    def test_positive(self, field):
        with pytest.raises(ValueError):
            SolverConfig(**{field: 0})


class TestConjugateGradient:
    def test_spd_system(self, rng):
        m = rng.standard_normal((6, 6))
        a = m @ m.T + 6 * np.eye(6)
        rhs = rng.standard_normal(6) + 0j
        x, it, res = conjugate_gradient(lambda v: a @ v, rhs, tol=1e-12)
        np.testing.assert_allclose(a @ x, rhs, atol=1e-10)
        assert it <= 6

    def test_preconditioned(self, rng):
        d = np.linspace(1, 1e4, 50)
        rhs = rng.standard_normal(50) + 0j
        x, it, _ = conjugate_gradient(lambda v: d * v, rhs, tol=1e-12, precond=lambda v: v / d)
        np.testing.assert_allclose(x, rhs / d, rtol=1e-10)
        assert it == 1

    def test_limit(self, rng):
        d = np.linspace(1, 1e4, 50) + 0j
        with pytest.raises(IterationLimitError) as info:
            conjugate_gradient(lambda v: d * v, np.ones(50, complex), max_iter=2)
        assert info.value.residual > 0 and info.value.iterations == 2
        x, it, res = conjugate_gradient(lambda v: d * v, np.ones(50, complex), max_iter=2,
                                        strict=False)
        assert it == 2 and res > 0

    def test_laplacian_eigenvalues(self, rng):
        import scipy.fft

        x = crandn(rng, 5, 7)
        lap = -divergence(gradient(x))
        via_dct = scipy.fft.idctn(neumann_laplacian_eigenvalues((5, 7))
                                  * scipy.fft.dctn(x, norm="ortho"), norm="ortho")
        np.testing.assert_allclose(via_dct, lap, atol=1e-12)


class TestLeastSquares:
    def test_full_uniform_recovers(self):
        f = shepp_logan(32)
        coils = CoilSensitivities.uniform((32, 32))
        mask = SamplingMask.full(32)
        b = forward(f, coils, mask)
        x = solve_least_squares(SenseOperator(coils, mask), b)
        np.testing.assert_allclose(x, f, atol=1e-8)

    def test_zero_data(self, rng):
        op = small_operator(rng)
        b = MultiCoilKSpace(op.mask, np.zeros(op.oshape))
        assert not np.any(solve_least_squares(op, b))

    @pytest.mark.parametrize("n_coils,lines", [(2, (1, 3, 4, 6, 8)), (1, (2, 5, 7))])
    def test_dense_pseudoinverse(self, rng, n_coils, lines):
        op, b, a = dense_instance(rng, n_coils, lines)
        x = solve_least_squares(op, b)
        g = op.adjoint(op.forward(x) - b.data)
        assert np.linalg.norm(g) <= 1e-8 * np.linalg.norm(op.adjoint(b.data))
        # the forward error is the residual times cond(A^H A), about 1e2 here
        x = solve_least_squares(op, b, SolverConfig(cg_tol=1e-12))
        x_ref = (np.linalg.pinv(a) @ b.data.ravel()).reshape(8, 8)
        assert np.linalg.norm(x - x_ref) <= 1e-8 * np.linalg.norm(x_ref)

    def test_iteration_limit(self):
        coils = simulate_coils(32, 4)
        op = SenseOperator(coils, SamplingMask(32, (5, 9, 16, 17, 20, 28)))
        b = forward(shepp_logan(32), coils, op.mask)
        with pytest.raises(IterationLimitError):
            solve_least_squares(op, b, SolverConfig(cg_max_iter=2))


class TestProjection:
    @pytest.mark.parametrize("n_coils,lines", [(2, (1, 3, 4, 6, 8)), (1, (2, 5, 7))])
    def test_dense_pseudoinverse(self, rng, n_coils, lines):
        op, b, a = dense_instance(rng, n_coils, lines)
        x = crandn(rng, 8, 8)
        proj = project_onto_lsq_set(x, op, b)
        ref = x.ravel() + np.linalg.pinv(a) @ (b.data.ravel() - a @ x.ravel())
        assert np.linalg.norm(proj.ravel() - ref) <= 1e-7 * np.linalg.norm(ref)

    def test_idempotent(self, rng):
        op, b, _ = dense_instance(rng, 1, (2, 5, 7))
        p1 = project_onto_lsq_set(crandn(rng, 8, 8), op, b)
        p2 = project_onto_lsq_set(p1, op, b)
        assert np.linalg.norm(p2 - p1) <= 10 * 1e-8 * np.linalg.norm(p1)

    def test_from_zero_is_min_norm(self, rng):
        op, b, _ = dense_instance(rng, 1, (2, 5, 7))
        x_ls = solve_least_squares(op, b)
        x_p = project_onto_lsq_set(np.zeros((8, 8), complex), op, b)
        assert np.linalg.norm(x_ls - x_p) <= 1e-8 * np.linalg.norm(x_ls)

    def test_moves_only_in_range_of_adjoint(self, rng):
        op, b, a = dense_instance(rng, 1, (2, 5, 7))
        x = crandn(rng, 8, 8)
        step = (project_onto_lsq_set(x, op, b) - x).ravel()
        null = np.eye(64) - np.linalg.pinv(a) @ a
        assert np.linalg.norm(null @ step) <= 1e-8 * np.linalg.norm(step)


def subgradient_gap(op, b, x, lam, a, d, zero_tol):
    """min over s in the TV subdifferential of ||A^H(Ax - b) + lam/2 D^T s||.

    Works in the real stacked space; coordinates of Dx below ``zero_tol`` get a
    free s in [-1, 1], the rest are fixed to sign(Dx).
    """
    xv = x.ravel()
    grad = a.conj().T @ (a @ xv - b.data.ravel())
    dx = d @ xv
    fixed = np.zeros(len(xv), complex)
    free_cols = []
    dt = d.T
    for comp, unit in ((dx.real, 1.0), (dx.imag, 1j)):
        for j, c in enumerate(comp):
            col = 0.5 * lam * unit * dt[:, j]
            if abs(c) > zero_tol:
                fixed += np.sign(c) * col
            else:
                free_cols.append(col)
    g0 = grad + fixed
    if not free_cols:
        return np.linalg.norm(g0)
    m = np.array(free_cols).T
    mr = np.vstack([m.real, m.imag])
    rhs = -np.concatenate([g0.real, g0.imag])
    sol = lsq_linear(mr, rhs, bounds=(-1.0, 1.0), tol=1e-12)
    return float(np.linalg.norm(mr @ sol.x - rhs))


class TestAdmm:
    def test_rejects_nonpositive_lambda(self, rng):
        op, b, _ = dense_instance(rng)
        for lam in (0.0, -1.0):
            with pytest.raises(ValueError):
                admm_tv_lasso(op, b, lam)

    def test_tiny_lambda_gives_least_squares(self):
        f = shepp_logan(32)
        coils = CoilSensitivities.uniform((32, 32))
        mask = SamplingMask.full(32)
        op = SenseOperator(coils, mask)
        rng = np.random.default_rng(4)
        b = MultiCoilKSpace(mask, forward(f, coils, mask).data + 0.01 * crandn(rng, 1, 32, 32))
        x_ls = solve_least_squares(op, b)
        x = admm_tv_lasso(op, b, 1e-12)
        gap = tv_lasso_objective(op, b, x, 1e-12) - tv_lasso_objective(op, b, x_ls, 1e-12)
        assert gap <= 1e-6
        assert np.linalg.norm(x - x_ls) <= 1e-4 * np.linalg.norm(x_ls)

    def test_identity_denoising_matches_oracle(self, rng):
        b = crandn(rng, 8, 8)
        lam = 0.7
        x_ref = tv_denoise_oracle(b.real, lam) + 1j * tv_denoise_oracle(b.imag, lam)
        op = IdentityOp()
        bk = b[None]
        ref = tv_lasso_objective(op, bk, x_ref, lam)
        got = tv_lasso_objective(op, bk, admm_tv_lasso(op, bk, lam), lam)
        assert abs(got - ref) <= 1e-4 * ref

    @pytest.mark.parametrize("lam", [1e-3, 0.05, 0.5, 5.0])
    def test_objective_not_worse_than_start(self, rng, lam):
        op, b, _ = dense_instance(rng)
        x0 = crandn(rng, 8, 8)
        x, info = admm_tv_lasso(op, b, lam, x0=x0, return_info=True)
        assert info.objective <= tv_lasso_objective(op, b, x0, lam) + 1e-12
        assert info.objective == pytest.approx(tv_lasso_objective(op, b, x, lam))

    def test_optimality_certificate(self, rng):
        op, b, a = dense_instance(rng)
        lam = 0.3
        cfg = SolverConfig(admm_max_iter=5000, admm_tol=1e-10, admm_inner_tol=1e-12)
        x = admm_tv_lasso(op, b, lam, cfg)
        d = dense_gradient(8, 8)
        gap = subgradient_gap(op, b, x, lam, a, d, zero_tol=1e-6)
        assert gap <= 1e-3 * np.linalg.norm(op.adjoint(b.data))

    def test_large_lambda_oversmooths(self):
        from alma_recon import TrajectorySpec, corrupt, draw_trajectory, NoiseSpec

        f = shepp_logan(64)
        coils = simulate_coils(64, 4)
        mask = draw_trajectory(TrajectorySpec(64, 0.2, seed=0))
        b, _ = corrupt(forward(f, coils, mask), NoiseSpec(0.03, seed=100))
        # 1e6 times the desk-scale ALMA value of this cell (about 0.024)
        x = admm_tv_lasso(SenseOperator(coils, mask), b, 0.024 * 1e6)
        assert tv_value(x) <= 1e-3 * tv_value(f)
