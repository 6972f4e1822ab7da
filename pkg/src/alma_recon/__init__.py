"""Approximate Lagrange multipliers for TV-regularized compressed-sensing MRI."""

from .core import dft2c, idft2c, inner_re, norm_p, dot_real
from .operators import (
    CoilSensitivities,
    MultiCoilKSpace,
    SamplingMask,
    SenseOperator,
    adjoint,
    forward,
    gridded_recon,
)
from .tv import GradientField, divergence, gradient, soft_threshold, tv_value
from .solvers import (
    IterationLimitError,
    SolverConfig,
    admm_tv_lasso,
    project_onto_lsq_set,
    solve_least_squares,
    tv_lasso_objective,
)
from .hull import DegenerateHullError, lower_convex_hull, tangent_slope_at_zero
from .alma import (
    AlmaConfig,
    AlmaTrace,
    ConstraintInfeasibleError,
    alma_run,
    sketch_scaled_curve,
    sketch_segment,
)
from .simulation import (
    NoiseSpec,
    TrajectorySpec,
    corrupt,
    draw_trajectory,
    gm_wm_masks,
    shepp_logan,
    simulate_acquisition,
    simulate_coils,
)
from .metrics import cjv, msssim, psnr
from .lcurve import LCurvePoint, NoCornerError, lcurve_select

__version__ = "0.1.0"
