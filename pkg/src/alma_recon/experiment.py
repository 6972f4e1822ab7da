"""Experiment grid: simulate, run ALMA and the L-curve, sweep lambda, tabulate."""

from concurrent.futures import ProcessPoolExecutor
import csv
from dataclasses import asdict, dataclass, field, fields, replace
import functools
import json
import logging
import math
from pathlib import Path

import numpy as np

from .alma import AlmaConfig, alma_run
from .core import save_magnitude_image
from .lcurve import lcurve_select, write_lcurve_csv
from .metrics import MetricReport, evaluate
from .operators import SenseOperator, gridded_recon
from .simulation import (
    NoiseSpec,
    TrajectorySpec,
    corrupt,
    derive_seed,
    draw_trajectory,
    gm_wm_masks,
    shepp_logan,
    simulate_acquisition,
    simulate_coils,
)
from .solvers import SolverConfig, admm_tv_lasso, solve_least_squares

__all__ = [
    "LambdaSweep",
    "ExperimentConfig",
    "ExperimentRecord",
    "Problem",
    "make_problem",
    "metric_sweep",
    "cjv_quality_threshold",
    "run_cell",
    "run_grid",
    "write_records",
    "read_records",
    "summarize",
]

log = logging.getLogger(__name__)

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
GALLERY_LAMBDAS = (1e-3, 1e-2, 1e-1, 1e0, 1e1)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class LambdaSweep:
    points: int = 40
    decades_below: float = 2.0
    decades_above: float = 1.0

    def factors(self):
        return np.logspace(-self.decades_below, self.decades_above, self.points)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce a grid of runs.

    ``solver`` defaults to a fixed 50-step CG budget for the least-squares
    solves (iterative SENSE), which does not raise when the budget ends.
    """

    n: int = 384
    n_coils: int = 8
    ur_list: tuple = (0.10, 0.15, 0.20)
    nl_list: tuple = (0.03, 0.05, 0.07)
    runs: int = 50
    master_seed: int = 20240601
    lambda_sweep: LambdaSweep = LambdaSweep()
    lcurve_points: int = 25
    lcurve_decades: tuple = (-3.0, 1.0)
    golden_iters: int = 3
    noise_convention: str = "power"
    images: str = "first"
    output_dir: str = "alma-output"
    threads: int = 1
    solver: SolverConfig = SolverConfig(cg_max_iter=50, cg_strict=False)
    alma: AlmaConfig = AlmaConfig()

    def __post_init__(self):
        if self.runs < 1:
            raise ConfigError("runs must be at least 1")
        if not self.ur_list or not self.nl_list:
            raise ConfigError("ur_list and nl_list must be non-empty")
        if self.images not in ("none", "first", "all"):
            raise ConfigError("images must be one of none, first, all")
        if self.n < 32 or self.n_coils < 1 or self.threads < 1:
            raise ConfigError("n >= 32, n_coils >= 1 and threads >= 1 are required")
        object.__setattr__(self, "ur_list", tuple(float(v) for v in self.ur_list))
        object.__setattr__(self, "nl_list", tuple(float(v) for v in self.nl_list))
        object.__setattr__(self, "lcurve_decades", tuple(float(v) for v in self.lcurve_decades))

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        nested = {"lambda_sweep": LambdaSweep, "solver": SolverConfig, "alma": AlmaConfig}
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            for key, typ in nested.items():
                if key in d and isinstance(d[key], dict):
                    base = cls.__dataclass_fields__[key].default
                    d[key] = replace(base, **d[key])
            return cls(**d)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, path):
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc

    def to_dict(self):
        return asdict(self)


@dataclass
class ExperimentRecord:
    ur_pct: float
    nl_pct: float
    run_index: int
    seed: int
    lambda_alm: float
    lambda_l: float
    iterations: int
    converged: bool
    eta: float
    mssim_alm: float
    psnr_alm: float
    cjv_alm: float
    mssim_l: float
    psnr_l: float
    cjv_l: float
    lambda_mssim: float
    lambda_psnr: float
    lambda_cjv: float
    ratio_mssim_alm: float = field(init=False)
    ratio_psnr_alm: float = field(init=False)
    ratio_cjv_alm: float = field(init=False)
    ratio_mssim_l: float = field(init=False)
    ratio_psnr_l: float = field(init=False)
    ratio_cjv_l: float = field(init=False)

    def __post_init__(self):
        for m in ("mssim", "psnr", "cjv"):
            opt = getattr(self, f"lambda_{m}")
            setattr(self, f"ratio_{m}_alm", opt / self.lambda_alm)
            setattr(self, f"ratio_{m}_l", opt / self.lambda_l)


RECORD_FIELDS = [f.name for f in fields(ExperimentRecord)]
SUMMARY_QUANTITIES = [
    "iterations", "lambda_alm", "lambda_l",
    "mssim_alm", "psnr_alm", "cjv_alm", "mssim_l", "psnr_l", "cjv_l",
    "ratio_mssim_alm", "ratio_psnr_alm", "ratio_cjv_alm",
    "ratio_mssim_l", "ratio_psnr_l", "ratio_cjv_l",
]


@dataclass
class Problem:
    """One simulated acquisition with everything needed to reconstruct it."""

    f: np.ndarray
    coils: object
    op: SenseOperator
    b: object
    eta: float
    mask_gm: np.ndarray
    mask_wm: np.ndarray
    seed: int


@functools.lru_cache(maxsize=4)
def _phantom_and_coils(n, n_coils):
    f = shepp_logan(n)
    return f, simulate_coils(n, n_coils), gm_wm_masks(f)


def _cell_keys(ur, nl):
    return int(round(ur * 10000)), int(round(nl * 10000))


def make_problem(ur, nl, run_index, cfg):
    """Simulate the data of one run; seeds derive from the master seed only."""
    seed = derive_seed(cfg.master_seed, *_cell_keys(ur, nl), run_index)
    f, coils, (gm, wm) = _phantom_and_coils(cfg.n, cfg.n_coils)
    mask = draw_trajectory(TrajectorySpec(cfg.n, ur, seed=derive_seed(seed, 0)))
    y = simulate_acquisition(f, coils, mask)
    b, eta = corrupt(y, NoiseSpec(nl, seed=derive_seed(seed, 1), convention=cfg.noise_convention))
    return Problem(f, coils, SenseOperator(coils, mask), b, eta, gm, wm, seed)


def _reports(images, prob):
    return [evaluate(x, prob.f, prob.mask_gm, prob.mask_wm) for x in images]


def metric_sweep(prob, lambdas, solver_cfg, x0=None):
    """Reconstruct at every ``lambda`` (continuation from the largest down).

    Returns ``(images, reports)`` in the order of ``lambdas`` (ascending).
    """
    lambdas = np.asarray(lambdas, dtype=float)
    order = np.argsort(lambdas)[::-1]
    images = [None] * len(lambdas)
    x = x0
    for i in order:
        x = admm_tv_lasso(prob.op, prob.b, lambdas[i], solver_cfg, x0=x)
        images[i] = x
    return images, _reports(images, prob)


def _score(report, metric):
    v = getattr(report, {"mssim": "mssim", "psnr": "psnr_db", "cjv": "cjv"}[metric])
    return -v if metric == "cjv" else v


def _refine(prob, metric, lambdas, images, reports, solver_cfg, iters):
    """Golden-section search in log-lambda around the best grid point."""
    scores = [_score(r, metric) for r in reports]
    k = int(np.argmax(scores))
    lo, hi = max(k - 1, 0), min(k + 1, len(lambdas) - 1)
    if iters <= 0 or lo == hi:
        return float(lambdas[k])
    best_lam, best_score = float(lambdas[k]), scores[k]
    a, c = math.log(lambdas[lo]), math.log(lambdas[hi])
    start = images[k]
    cache = {}

    def score_at(loglam):
        if loglam not in cache:
            x = admm_tv_lasso(prob.op, prob.b, math.exp(loglam), solver_cfg, x0=start)
            cache[loglam] = _score(evaluate(x, prob.f, prob.mask_gm, prob.mask_wm), metric)
        return cache[loglam]

    p = c - GOLDEN * (c - a)
    q = a + GOLDEN * (c - a)
    for _ in range(iters):
        if score_at(p) >= score_at(q):
            c, q = q, p
            p = c - GOLDEN * (c - a)
        else:
            a, p = p, q
            q = a + GOLDEN * (c - a)
    for loglam, s in cache.items():
        if s > best_score:
            best_lam, best_score = math.exp(loglam), s
    return best_lam


def cjv_quality_threshold(prob, solver_cfg, cjv_min=None, upper=2.0, points=41):
    """``min(CJV) + (max(CJV) - min(CJV)) / 10`` with the max over ``[0, upper]``.

    ``lambda = 0`` is the least-squares image. ``cjv_min`` defaults to the
    minimum over the same grid.
    """
    grid = np.linspace(0.0, upper, points)
    x_ls = solve_least_squares(prob.op, prob.b, solver_cfg)
    images, reports = metric_sweep(prob, grid[1:], solver_cfg, x0=x_ls)
    values = [evaluate(x_ls, prob.f, prob.mask_gm, prob.mask_wm).cjv] + [r.cjv for r in reports]
    finite = [v for v in values if math.isfinite(v)]
    lo = min(finite) if cjv_min is None else min(cjv_min, min(finite))
    return lo + (max(finite) - lo) / 10.0, grid, np.array(values)


def _write_curve(path, factors, reports):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lambda_over_alm", "mssim", "psnr", "cjv"])
        for fac, r in zip(factors, reports):
            w.writerow([repr(float(fac)), repr(r.mssim), repr(r.psnr_db), repr(r.cjv)])


def _cell_name(ur, nl):
    return f"ur{int(round(ur * 100)):02d}_nl{int(round(nl * 100)):02d}"


def run_cell(ur, nl, run_index, cfg, out_dir=None):
    """Full analysis of one run; returns an :class:`ExperimentRecord`.

    With ``out_dir`` set, the run's metric curve, L-curve, ALMA trace and
    (per ``cfg.images``) reconstruction images are written under
    ``out_dir/runs/``.
    """
    return _analyze_run(ur, nl, run_index, cfg, out_dir)[0]


def _analyze_run(ur, nl, run_index, cfg, out_dir=None):
    prob = make_problem(ur, nl, run_index, cfg)
    lam_alm, x_alm, trace = alma_run(prob.op, prob.b, prob.coils, prob.eta, cfg.alma, cfg.solver)
    rep_alm = evaluate(x_alm, prob.f, prob.mask_gm, prob.mask_wm)

    lam_ref = trace.records[0].lam
    lo, hi = cfg.lcurve_decades
    grid = lam_ref * np.logspace(lo, hi, cfg.lcurve_points)
    x0 = gridded_recon(prob.b, prob.coils)
    lam_l, lpoints, limages = lcurve_select(
        prob.op, prob.b, grid, cfg.solver, x0=x0, return_images=True
    )
    x_l = limages[[p.lam for p in lpoints].index(lam_l)]
    rep_l = evaluate(x_l, prob.f, prob.mask_gm, prob.mask_wm)

    factors = cfg.lambda_sweep.factors()
    lambdas = lam_alm * factors
    images, reports = metric_sweep(prob, lambdas, cfg.solver, x0=x_alm)
    opt = {
        m: _refine(prob, m, lambdas, images, reports, cfg.solver, cfg.golden_iters)
        for m in ("mssim", "psnr", "cjv")
    }
    rec = ExperimentRecord(
        ur_pct=ur, nl_pct=nl, run_index=run_index, seed=prob.seed,
        lambda_alm=lam_alm, lambda_l=lam_l, iterations=len(trace),
        converged=trace.converged, eta=prob.eta,
        mssim_alm=rep_alm.mssim, psnr_alm=rep_alm.psnr_db, cjv_alm=rep_alm.cjv,
        mssim_l=rep_l.mssim, psnr_l=rep_l.psnr_db, cjv_l=rep_l.cjv,
        lambda_mssim=opt["mssim"], lambda_psnr=opt["psnr"], lambda_cjv=opt["cjv"],
    )

    if out_dir is not None:
        run_dir = Path(out_dir) / "runs" / f"{_cell_name(ur, nl)}_run{run_index:03d}"
        run_dir.mkdir(parents=True, exist_ok=True)
        _write_curve(run_dir / "curve.csv", factors, reports)
        write_lcurve_csv(run_dir / "lcurve.csv", lpoints)
        trace.to_csv(run_dir / "alma_trace.csv")
        if cfg.images == "all" or (cfg.images == "first" and run_index == 0):
            peak = float(prob.f.max())
            save_magnitude_image(run_dir / "recon_alm.pgm", x_alm, peak)
            save_magnitude_image(run_dir / "recon_l.pgm", x_l, peak)
            x_ms = admm_tv_lasso(prob.op, prob.b, opt["mssim"], cfg.solver, x0=x_alm)
            save_magnitude_image(run_dir / "recon_mssim.pgm", x_ms, peak)
            x = x_alm
            for lam in sorted(GALLERY_LAMBDAS, reverse=True):
                x = admm_tv_lasso(prob.op, prob.b, lam, cfg.solver, x0=x)
                save_magnitude_image(run_dir / f"recon_lambda_1e{int(round(math.log10(lam))):+d}.pgm",
                                     x, peak)
    return rec, reports


def _run_one(args):
    ur, nl, run_index, cfg, out_dir = args
    try:
        rec, reports = _analyze_run(ur, nl, run_index, cfg, out_dir)
        return ur, nl, run_index, rec, [asdict(r) for r in reports], None
    except Exception as exc:  # quarantine the run, keep the grid going
        log.warning("run %s/%s/%d failed: %s", ur, nl, run_index, exc)
        return ur, nl, run_index, None, None, f"{type(exc).__name__}: {exc}"


def _fmt(v):
    if isinstance(v, bool):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_records(path, records):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RECORD_FIELDS)
        for r in records:
            w.writerow([_fmt(getattr(r, k)) for k in RECORD_FIELDS])


def read_records(path):
    """Records as a list of dicts with numeric values."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            d = {}
            for k, v in row.items():
                if v in ("True", "False"):
                    d[k] = v == "True"
                else:
                    d[k] = float(v) if k not in ("run_index", "seed", "iterations") else int(v)
            out.append(d)
    return out


def summarize(rows, ur_list=None, nl_list=None):
    """Mean and (sample) standard deviation per cell of every summary quantity."""
    cells = {}
    for r in rows:
        cells.setdefault((r["ur_pct"], r["nl_pct"]), []).append(r)
    if ur_list is not None and nl_list is not None:
        keys = [(u, n) for u in ur_list for n in nl_list]
    else:
        keys = sorted(cells)
    table = []
    for key in keys:
        rs = cells.get(key, [])
        row = {"ur_pct": key[0], "nl_pct": key[1], "runs": len(rs)}
        for q in SUMMARY_QUANTITIES:
            vals = np.array([float(r[q]) for r in rs], dtype=float)
            row[f"{q}_mean"] = float(vals.mean()) if len(vals) else math.nan
            row[f"{q}_sd"] = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
        table.append(row)
    return table


def write_summary(path, table):
    cols = ["ur_pct", "nl_pct", "runs"] + [
        f"{q}_{s}" for q in SUMMARY_QUANTITIES for s in ("mean", "sd")
    ]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for row in table:
            w.writerow([_fmt(row[c]) for c in cols])


def _write_cell_curves(path, factors, per_run_reports):
    arr = {m: np.array([[r[m] for r in rep] for rep in per_run_reports])
           for m in ("mssim", "psnr_db", "cjv")}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lambda_over_alm", "mssim_mean", "mssim_sd", "psnr_mean", "psnr_sd",
                    "cjv_mean", "cjv_sd"])
        for i, fac in enumerate(factors):
            row = [repr(float(fac))]
            for m in ("mssim", "psnr_db", "cjv"):
                col = arr[m][:, i]
                row += [repr(float(col.mean())),
                        repr(float(col.std(ddof=1)) if len(col) > 1 else 0.0)]
            w.writerow(row)


def run_grid(cfg, out_dir=None):
    """Run every cell and run index; returns ``(out_dir, exit_code)``.

    Exit code 2 means at least one cell lost all of its runs.
    """
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, default=list))
    jobs = [(ur, nl, k, cfg, str(out)) for ur in cfg.ur_list for nl in cfg.nl_list
            for k in range(cfg.runs)]
    if cfg.threads > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]

    records, failures, curves = [], [], {}
    for ur, nl, k, rec, reports, err in results:
        if rec is None:
            failures.append((ur, nl, k, err))
            continue
        records.append(rec)
        curves.setdefault((ur, nl), []).append(reports)
    write_records(out / "records.csv", records)
    with open(out / "failures.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["ur_pct", "nl_pct", "run_index", "error"])
        w.writerows(failures)
    rows = [{k: getattr(r, k) for k in RECORD_FIELDS} for r in records]
    write_summary(out / "summary.csv", summarize(rows, cfg.ur_list, cfg.nl_list))
    cdir = out / "curves"
    cdir.mkdir(exist_ok=True)
    factors = cfg.lambda_sweep.factors()
    for (ur, nl), reps in curves.items():
        _write_cell_curves(cdir / f"{_cell_name(ur, nl)}.csv", factors, reps)

    counts = {}
    for ur, nl, *_ in failures:
        counts[(ur, nl)] = counts.get((ur, nl), 0) + 1
    fully_failed = [c for c, v in counts.items() if v == cfg.runs]
    return out, (2 if fully_failed else 0)
