import csv

import numpy as np
import pytest

from alma_recon import (
    NoCornerError,
    NoiseSpec,
    SenseOperator,
    SolverConfig,
    TrajectorySpec,
    corrupt,
    draw_trajectory,
    gridded_recon,
    lcurve_select,
    shepp_logan,
    simulate_acquisition,
    simulate_coils,
)
from alma_recon.lcurve import corner_index, menger_curvature, write_lcurve_csv

SOLVER = SolverConfig(cg_max_iter=50, cg_strict=False)


def right_angle(k, n_tail):
    """Down the y axis to the origin (index k), then right along the x axis."""
    y = np.concatenate([np.arange(k, 0, -1.0), np.zeros(n_tail + 1)])
    x = np.concatenate([np.zeros(k), np.arange(0, n_tail + 1.0)])
    return x, y


@pytest.fixture(scope="module")
def problem():
    n = 32
    f = shepp_logan(n)
    coils = simulate_coils(n, 4)
    mask = draw_trajectory(TrajectorySpec(n, 0.35, seed=1))
    op = SenseOperator(coils, mask)
    b, _ = corrupt(simulate_acquisition(f, coils, mask), NoiseSpec(0.03, seed=2))
    return op, b, gridded_recon(b, coils)


@pytest.fixture(scope="module")
def sweep(problem):
    op, b, x0 = problem
    grid = 0.015 * np.logspace(-3, 1, 15)
    return grid, lcurve_select(op, b, grid, SOLVER, x0=x0, return_images=True)


class TestCurvature:
    @pytest.mark.parametrize("k", [1, 3, 6])
    def test_right_angle_corner(self, k):
        x, y = right_angle(k, 5)
        assert corner_index(x, y) == k

    def test_circle(self):
        th = np.linspace(0, np.pi / 2, 7)
        r = 2.5
        kappa = menger_curvature(r * np.cos(th), r * np.sin(th))
        np.testing.assert_allclose(kappa, 1 / r, rtol=1e-12)

    def test_ties_go_to_smaller_index(self):
        # two identical right angles
        x = np.array([0.0, 0.0, 1.0, 1.0, 2.0])
        y = np.array([2.0, 1.0, 1.0, 0.0, 0.0])
        k = menger_curvature(x, y)
        assert k[0] == k[2] > 0
        assert corner_index(x, y) == 1

    @pytest.mark.parametrize("y", [np.linspace(3, 0, 6), -np.linspace(0, 1, 6) ** 2])
    def test_no_corner(self, y):
        with pytest.raises(NoCornerError):
            corner_index(np.linspace(0, 1, 6), y)

    def test_too_short(self):
        with pytest.raises(NoCornerError):
            corner_index([0.0, 1.0], [1.0, 0.0])


class TestSelect:
    def test_selection_on_grid(self, sweep):
        grid, (lam_l, points, images) = sweep
        assert lam_l in grid
        assert [p.lam for p in points] == sorted(grid.tolist())
        assert len(images) == len(points)
        assert all(np.isfinite([p.log_residual, p.log_tv]).all() for p in points)

    def test_residual_nondecreasing(self, sweep):
        _, (_, points, _) = sweep
        r = np.exp([p.log_residual for p in points])
        assert np.all(np.diff(r) >= -1e-6 * r[1:])

    def test_tv_nonincreasing(self, sweep):
        _, (_, points, _) = sweep
        t = np.exp([p.log_tv for p in points])
        assert np.all(np.diff(t) <= 1e-6 * t[:-1])

    def test_grid_density_moves_at_most_one_octave(self, problem, sweep):
        op, b, x0 = problem
        grid, (lam_l, _, _) = sweep
        fine = 0.015 * np.logspace(-3, 1, 29)
        lam_fine, _ = lcurve_select(op, b, fine, SOLVER, x0=x0)
        assert 0.5 <= lam_fine / lam_l <= 2.0

    def test_invalid_grid(self, problem):
        op, b, _ = problem
        with pytest.raises(ValueError):
            lcurve_select(op, b, [0.1, 1.0], SOLVER)
        with pytest.raises(ValueError):
            lcurve_select(op, b, [0.0, 0.1, 1.0], SOLVER)

    def test_csv(self, sweep, tmp_path):
        _, (_, points, _) = sweep
        write_lcurve_csv(tmp_path / "l.csv", points)
        rows = list(csv.reader(open(tmp_path / "l.csv")))
        assert rows[0] == ["lambda", "log_residual", "log_tv"]
        assert float(rows[1][0]) == points[0].lam and len(rows) == len(points) + 1
