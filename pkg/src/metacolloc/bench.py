"""Experiment harness: suites over problems, seeds and basis variants, plus
precision, iteration, frequency and timing studies. Results are CSV rows."""

import csv
import json
import math
import statistics
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy import stats

from .errors import ConfigError, DivergedSolve, InvalidConfig
from .grf import GRFConfig, task_batch
from .linalg import lstsq
from .network import BasisBlock, BasisParams, basis_block, forward, init_params, load_checkpoint
from .pde import GEOMETRY_PROBLEMS, PROBLEMS_2D, PROBLEMS_3D, make_problem
from .solver import run

VARIANTS = ("full", "low_only", "high_only", "non_learning", "random_features")
EXPERIMENTS = ("suite", "ablate", "precision", "itersweep", "freqsweep", "geometry", "bench3d", "timing", "solve")
SIGMA_GRID = (0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0)
K_GRID = (1, 2, 4, 8, 16, 32, 64, 128, 256, 512)
FREQUENCIES = (1, 2, 4, 8, 16, 32, 64)
# validation fields for shape-parameter tuning come from their own stream
VALIDATION_SEED = 2**32 - 1
SUITE_PROBLEMS = ("poisson", "helmholtz", "varcoeff", "highfreq", "sinegordon", "kdv")


@dataclass
class ExperimentConfig:
    experiment: str = "suite"
    problems: tuple = SUITE_PROBLEMS
    variants: tuple = ("full",)
    widths: tuple = (256,)
    seeds: tuple = (0, 1, 2)
    precision: str = "fp64"
    K: object = None
    n_interior: object = None
    n_boundary: object = None
    n_eval: int = 10000
    checkpoint: object = None
    out: object = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise InvalidConfig(f"unknown experiment {self.experiment!r}")
        bad = [v for v in self.variants if v not in VARIANTS]
        if bad:
            raise InvalidConfig(f"unknown variants {bad}")
        if not self.seeds:
            raise InvalidConfig("at least one seed is required")


@dataclass
class ResultRow:
    experiment: str
    variant: str
    pde: str
    H: int
    seed: int
    precision: str
    K: int
    rmse: float
    cond: float
    solve_seconds: float
    train_seconds: float
    status: str = "ok"
    extra: dict = field(default_factory=dict)

    @classmethod
    def columns(cls):
        return [f.name for f in fields(cls)]

    def to_record(self):
        rec = asdict(self)
        rec["extra"] = json.dumps(self.extra, sort_keys=True)
        return rec

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)


def write_rows(rows, path, metadata=None):
    """RFC-4180 CSV with a header row; ``metadata`` goes to a ``.meta.json`` sidecar."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=ResultRow.columns())
        writer.writeheader()
        for row in rows:
            writer.writerow(row.to_record())
    if metadata:
        Path(str(path) + ".meta.json").write_text(json.dumps(metadata, indent=2, sort_keys=True))


def read_rows(path):
    out = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            out.append(
                ResultRow(
                    rec["experiment"],
                    rec["variant"],
                    rec["pde"],
                    int(rec["H"]),
                    int(rec["seed"]),
                    rec["precision"],
                    int(rec["K"]),
                    float(rec["rmse"]),
                    float(rec["cond"]),
                    float(rec["solve_seconds"]),
                    float(rec["train_seconds"]),
                    rec["status"],
                    json.loads(rec["extra"]),
                )
            )
    return out


def t_interval(values, level=0.95):
    """Mean and half-width of the two-sided Student-t interval; half-width is nan for n < 2."""
    values = [float(v) for v in values]
    n = len(values)
    mean = statistics.fmean(values)
    if n < 2:
        return mean, math.nan
    s = statistics.stdev(values)
    return mean, float(stats.t.ppf(0.5 + level / 2, n - 1) * s / math.sqrt(n))


def summarize(rows):
    """Per-cell (experiment, variant, pde, H, precision, K) mean and 95% CI over seeds."""
    cells = {}
    for r in rows:
        if r.status != "ok":
            continue
        cells.setdefault((r.experiment, r.variant, r.pde, r.H, r.precision, r.K), []).append(r.rmse)
    out = []
    for key, vals in cells.items():
        mean, half = t_interval(vals)
        out.append(dict(zip(("experiment", "variant", "pde", "H", "precision", "K"), key), n=len(vals), mean=mean, ci95=half, median=statistics.median(vals)))
    return out


def write_summary(summary, path):
    cols = ["experiment", "variant", "pde", "H", "precision", "K", "n", "mean", "ci95", "median"]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols)
        writer.writeheader()
        for cell in summary:
            rec = dict(cell)
            if math.isnan(rec["ci95"]):
                rec["ci95"] = ""
            writer.writerow(rec)


# basis variants ---------------------------------------------------------


def _as_params(checkpoint):
    if checkpoint is None:
        raise ConfigError("this variant needs a checkpoint")
    if isinstance(checkpoint, BasisParams):
        return checkpoint
    path = Path(checkpoint)
    if not path.exists():
        raise ConfigError(f"checkpoint {path} not found")
    return load_checkpoint(path)


def validation_tasks(d, n_tasks=32, config=None):
    cfg = config or GRFConfig(n_train=1000, n_test=0, input_dim=d, seed=VALIDATION_SEED)
    return [task_batch(cfg, 0, i) for i in range(n_tasks)]


def scale_first_layers(params, sigma):
    out = params.copy()
    for name in ("low0.W1", "low0.W2", "high0.W1", "high0.W2"):
        out.tensors[name] = sigma * out.tensors[name]
    out.metadata = {**out.metadata, "shape_parameter": sigma}
    return out


def tune_shape_parameter(params, tasks, grid=SIGMA_GRID):
    """Pick the first-layer scale with the lowest mean least-squares MSE; ties go to the smallest."""
    losses = []
    for sigma in sorted(grid):
        p = scale_first_layers(params, sigma)
        mse = []
        for task in tasks:
            phi = forward(p, task.X_train)
            fit = lstsq(phi, task.Y_train)
            mse.append(fit.residual_norm**2 / len(task.Y_train))
        losses.append((float(np.mean(mse)), sigma))
    best_loss = min(loss for loss, _ in losses)
    best = min(sigma for loss, sigma in losses if loss == best_loss)
    return best, losses


def make_variant_basis(variant, H, d, seed, checkpoint=None, grf_config=None, n_val_tasks=32):
    """Basis for one ablation variant; checkpoint-derived variants work on a copy."""
    if variant == "full":
        params = _as_params(checkpoint).copy()
    elif variant == "low_only":
        params = _as_params(checkpoint).with_branch_zeroed("high")
    elif variant == "high_only":
        params = _as_params(checkpoint).with_branch_zeroed("low")
    elif variant == "random_features":
        params = init_params(d, H, seed)
    elif variant == "non_learning":
        base = init_params(d, H, seed)
        sigma, _ = tune_shape_parameter(base, validation_tasks(d, n_val_tasks, grf_config))
        params = scale_first_layers(base, sigma)
    else:
        raise InvalidConfig(f"unknown variant {variant!r}")
    if variant in ("full", "low_only", "high_only") and (params.width != H or params.input_dim != d):
        raise ConfigError(f"checkpoint is d={params.input_dim}, H={params.width}; requested d={d}, H={H}")
    return params


# experiments ----------------------------------------------------------------


def _train_seconds(checkpoint):
    """Training wall time from the log written next to a checkpoint, if present."""
    if checkpoint is None or isinstance(checkpoint, BasisParams):
        return 0.0
    log = Path(str(checkpoint) + ".log.csv")
    if not log.exists():
        return 0.0
    rows = list(csv.DictReader(open(log, newline="")))
    return float(rows[-1]["wall_seconds"]) if rows else 0.0


def _checkpoint_for(config, H, d):
    ck = config.checkpoint
    if isinstance(ck, dict):
        return ck.get((d, H), ck.get(H))
    return ck


def solve_row(experiment, variant, problem, params, seed, config, K=None, train_seconds=0.0, **kw):
    K = config.K if K is None else K
    try:
        rep = run(
            problem,
            params,
            seed=seed,
            K=K,
            precision=config.precision,
            n_interior=config.n_interior,
            n_boundary=config.n_boundary,
            n_eval=config.n_eval,
            **kw,
        )
    except DivergedSolve as exc:
        return ResultRow(experiment, variant, problem.name, params.width, seed, config.precision,
                         K or problem.newton_iters, math.nan, math.nan, 0.0, train_seconds,
                         "diverged", {"iteration": exc.iteration}), None
    row = ResultRow(
        experiment,
        variant,
        problem.name,
        params.width,
        seed,
        config.precision,
        rep.K,
        rep.rmse,
        rep.cond,
        rep.wall_seconds["total"],
        train_seconds,
        extra={"final_residual": rep.final_residual},
    )
    return row, rep


def run_suite(config, sink=None):
    """Solve every (problem, H, seed, variant) cell; rows come out in deterministic cell order."""
    rows = []
    for name in config.problems:
        problem = make_problem(name)
        d = problem.input_dim
        for H in config.widths:
            ck = _checkpoint_for(config, H, d)
            bases = {}
            for seed in config.seeds:
                for variant in config.variants:
                    # checkpoint variants do not depend on the seed
                    key = variant if variant in ("full", "low_only", "high_only") else (variant, seed)
                    if key not in bases:
                        t0 = time.perf_counter()
                        bases[key] = make_variant_basis(variant, H, d, seed, ck)
                        tune = time.perf_counter() - t0 if variant == "non_learning" else 0.0
                        bases[key].metadata = {**bases[key].metadata, "_tune_seconds": tune}
                    params = bases[key]
                    train_s = _train_seconds(ck) if key == variant else params.metadata["_tune_seconds"]
                    row, _ = solve_row(config.experiment, variant, problem, params, seed, config, train_seconds=train_s)
                    if "shape_parameter" in params.metadata:
                        row.extra["shape_parameter"] = params.metadata["shape_parameter"]
                    rows.append(row)
                    if sink is not None:
                        sink(row)
    return rows


def precision_study(config, modes=("fp32", "mixed", "fp64"), sink=None):
    rows = []
    for mode in modes:
        cfg = ExperimentConfig(**{**asdict(config), "precision": mode, "experiment": "precision"})
        rows.extend(run_suite(cfg, sink))
    return rows


def iteration_sweep(config, K_grid=K_GRID, problems=("sinegordon", "kdv"), sink=None):
    """RMSE at every K of the grid; one long run per seed, since runs never exit early
    a shorter budget is an exact prefix of the longer one."""
    rows = []
    K_max = max(K_grid)
    for name in problems:
        problem = make_problem(name)
        for H in config.widths:
            params = make_variant_basis("full", H, problem.input_dim, 0, _checkpoint_for(config, H, problem.input_dim))
            for seed in config.seeds:
                row, rep = solve_row("itersweep", "full", problem, params, seed, config, K=K_max, record_at=K_grid)
                if rep is None:
                    rows.append(row)
                    continue
                for K in sorted(K_grid):
                    r = ResultRow("itersweep", "full", problem.name, H, seed, config.precision, K,
                                  rep.rmse_history[K], rep.cond, row.solve_seconds, 0.0,
                                  extra={"residual_norm": rep.residual_history[K] if K < K_max else rep.final_residual})
                    rows.append(r)
                    if sink is not None:
                        sink(r)
    return rows


def timing_bench(config, repeats=3, sink=None):
    """Median per-phase wall time over repeated solves of each problem."""
    rows = []
    for name in config.problems:
        problem = make_problem(name)
        for H in config.widths:
            params = make_variant_basis("full", H, problem.input_dim, 0, _checkpoint_for(config, H, problem.input_dim))
            for seed in config.seeds:
                reps = [solve_row("timing", "full", problem, params, seed, config)[1] for _ in range(repeats)]
                reps = [r for r in reps if r is not None]
                if not reps:
                    continue
                phases = {k: statistics.median(r.wall_seconds[k] for r in reps) for k in reps[0].wall_seconds}
                r = ResultRow("timing", "full", problem.name, H, seed, config.precision, reps[0].K,
                              reps[0].rmse, reps[0].cond, phases["total"], _train_seconds(_checkpoint_for(config, H, problem.input_dim)),
                              extra={"median_" + k: v for k, v in phases.items()} | {"repeats": repeats})
                rows.append(r)
                if sink is not None:
                    sink(r)
    return rows


# frequency sweep ----------------------------------------------------------

SWEEP_PROTOCOL = {
    "target": "u(x, y) = sin(w pi x) sin(w pi y) on the unit square",
    "laplacian": "-2 w^2 pi^2 u",
    "fit": "least squares on function values at uniform points",
    "held_out": "independent uniform points from the same seed's second stream",
}


def _sweep_block(basis, X):
    if callable(basis) and not isinstance(basis, BasisParams):
        return basis(X)
    return basis_block(basis, X, {0: 2, 1: 2})


def frequency_sweep(basis, frequencies=FREQUENCIES, n_fit=3000, n_eval=3000, seed=0):
    """Fit ``u_w`` by function values only, then compare the fitted Laplacian.

    ``basis`` is either a ``BasisParams`` or a callable mapping points to a
    ``BasisBlock`` with second derivatives along both axes.
    """
    rng_fit, rng_eval = np.random.default_rng([seed, 0]), np.random.default_rng([seed, 1])
    X_fit = rng_fit.uniform(size=(n_fit, 2))
    X_eval = rng_eval.uniform(size=(n_eval, 2))
    B_fit = _sweep_block(basis, X_fit)
    B_eval = _sweep_block(basis, X_eval)
    lap_eval = B_eval.d(0, 2) + B_eval.d(1, 2)
    out = []
    for omega in frequencies:
        def u(X):
            return np.sin(omega * np.pi * X[:, 0]) * np.sin(omega * np.pi * X[:, 1])

        w = lstsq(B_fit.phi, u(X_fit)).solution
        u_true = u(X_eval)
        rmse_u = float(np.sqrt(np.mean((B_eval.phi @ w - u_true) ** 2)))
        lap_true = -2.0 * omega**2 * np.pi**2 * u_true
        rmse_lap = float(np.sqrt(np.mean((lap_eval @ w - lap_true) ** 2)))
        out.append({"omega": omega, "rmse_u": rmse_u, "rmse_lap": rmse_lap})
    return out


def sweep_rows(sweep, H, seed=0, precision="fp64"):
    return [
        ResultRow("freqsweep", "full", "sinsin", H, seed, precision, 0, r["rmse_u"], math.nan, 0.0, 0.0,
                  extra={"omega": r["omega"], "rmse_lap": r["rmse_lap"]})
        for r in sweep
    ]


def sine_dictionary(frequencies):
    """Manufactured basis of products sin(a pi x) sin(b pi y); exact for in-span sweep targets."""
    def block(X):
        x, y = X[:, 0], X[:, 1]
        derivs = {0: [[], [], []], 1: [[], [], []]}
        cols = []
        for a in frequencies:
            for b in frequencies:
                ka, kb = a * np.pi, b * np.pi
                sx, cx, sy, cy = np.sin(ka * x), np.cos(ka * x), np.sin(kb * y), np.cos(kb * y)
                cols.append(sx * sy)
                for k, dx in enumerate((ka * cx, -ka**2 * sx, -ka**3 * cx)):
                    derivs[0][k].append(dx * sy)
                for k, dy in enumerate((kb * cy, -kb**2 * sy, -kb**3 * cy)):
                    derivs[1][k].append(sx * dy)
        stack = {a: [np.stack(m, 1) for m in ms] for a, ms in derivs.items()}
        return BasisBlock(np.stack(cols, 1), stack)

    return block


def default_problems(experiment):
    return {"geometry": GEOMETRY_PROBLEMS, "bench3d": PROBLEMS_3D}.get(experiment, PROBLEMS_2D)
