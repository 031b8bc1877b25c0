"""Collocation solves with a frozen basis: one least-squares step for linear
operators, undamped Newton--Raphson for nonlinear ones."""

import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import AssemblyError, DivergedSolve, InvalidInput
from .linalg import condition_number, lstsq
from .network import BasisBlock, basis_block, forward
from .pde import coefficients, boundary_target, exact_solution, forcing, jet_fields, sample_points

PRECISION_MODES = ("fp32", "mixed", "fp64")


def network_precision(mode):
    if mode not in PRECISION_MODES:
        raise InvalidInput(f"precision must be one of {PRECISION_MODES}, got {mode!r}")
    return "fp64" if mode == "fp64" else "fp32"


def solve_dtype(mode):
    return np.float32 if mode == "fp32" else np.float64


@dataclass
class FunctionDictionary:
    """A hand-built basis: columns are jet-valued functions of coordinate jets.

    Stands in for ``BasisParams`` anywhere the solver needs a basis, which makes
    manufactured checks with known exact representations possible.
    """

    functions: list
    input_dim: int = 2

    @property
    def width(self):
        return len(self.functions)

    def block(self, X, orders=None):
        fields = [jet_fields(fn, X) for fn in self.functions]
        phi = np.stack([f.value for f in fields], axis=1)
        derivs = {
            a: [np.stack([f.d(a, k) for f in fields], axis=1) for k in (1, 2, 3)] for a in range(self.input_dim)
        }
        return BasisBlock(phi, derivs)

    def values(self, X):
        return self.block(X).phi


def _basis_block(basis, X, orders, precision):
    if isinstance(basis, FunctionDictionary):
        return basis.block(X, orders)
    return basis_block(basis.with_precision(network_precision(precision)), X, orders)


def _basis_values(basis, X, precision):
    if isinstance(basis, FunctionDictionary):
        return basis.values(X)
    return forward(basis.with_precision(network_precision(precision)), X)


@dataclass
class CollocationSystem:
    A: np.ndarray
    R: np.ndarray
    tags: np.ndarray


@dataclass
class SolveReport:
    problem: str
    width: int
    seed: int
    precision: str
    K: int
    coefficients: np.ndarray
    rmse: float
    cond: float
    residual_history: list
    final_residual: float
    wall_seconds: dict = field(default_factory=dict)
    rmse_history: dict = field(default_factory=dict)

    def to_dict(self):
        out = asdict(self)
        out["coefficients"] = [float(v) for v in self.coefficients]
        return out

    def to_json(self):
        return json.dumps(self.to_dict(), allow_nan=True)


@dataclass
class PreparedSystem:
    """Everything about a solve that does not depend on the coefficients."""

    problem: object
    interior: BasisBlock
    boundary: BasisBlock
    f: np.ndarray
    g: np.ndarray
    coef: dict
    normals: np.ndarray
    tags: np.ndarray
    dtype: object
    boundary_weight: float = 1.0


def _block_orders(problem, tags):
    interior = problem.orders
    derivative_bc = np.any(tags != "dirichlet")
    boundary = {a: 1 for a in range(problem.input_dim)} if derivative_bc else {}
    return interior, boundary


def prepare(problem, params, points, precision="fp64", boundary_weight=1.0):
    """Evaluate the frozen basis and all problem data at the collocation points."""
    dtype = solve_dtype(precision)
    int_orders, bd_orders = _block_orders(problem, points.bc_tags)
    interior = _basis_block(params, points.interior, int_orders, precision).astype(dtype)
    boundary = _basis_block(params, points.boundary, bd_orders, precision).astype(dtype)
    coef = {k: v.astype(dtype) for k, v in coefficients(problem, points.interior).items()}
    return PreparedSystem(
        problem,
        interior,
        boundary,
        forcing(problem, points.interior).astype(dtype),
        boundary_target(problem, points.boundary, points.normals, points.bc_tags).astype(dtype),
        coef,
        points.normals.astype(dtype),
        points.bc_tags,
        dtype,
        boundary_weight,
    )


def _apply(block, w):
    return BasisBlock(block.phi @ w, {a: [m @ w for m in ms] for a, ms in block.derivs.items()})


def _check_orders(problem, block):
    for axis, order in problem.orders.items():
        if axis not in block.derivs or len(block.derivs[axis]) < order:
            raise AssemblyError(f"{problem.name}: missing derivative of order {order} along axis {axis}")


def _boundary_rows(system, B):
    n = system.normals
    tags = system.tags
    alpha = system.problem.constants.get("alpha", 1.0)
    rows = B.phi.copy()
    if np.any(tags != "dirichlet"):
        dn = sum(n[:, [a]] * B.d(a, 1) for a in range(n.shape[1]))
        neumann = tags == "neumann"
        robin = tags == "robin"
        rows[neumann] = dn[neumann]
        rows[robin] = B.phi[robin] + alpha * dn[robin]
    return rows


def assemble(system, w):
    """Stack the linearised interior rows and boundary rows at coefficients ``w``.

    Returns the Jacobian ``A`` and the residual ``R = [L(u) - f; B(u) - g]``.
    """
    problem = system.problem
    _check_orders(problem, system.interior)
    w = np.asarray(w, dtype=system.dtype)
    U = _apply(system.interior, w)
    A_eq = problem.jacobian(U, system.interior, system.coef)
    R_eq = problem.residual(U, system.coef) - system.f
    A_bd = _boundary_rows(system, system.boundary)
    R_bd = A_bd @ w - system.g
    if system.boundary_weight != 1.0:
        A_bd = system.boundary_weight * A_bd
        R_bd = system.boundary_weight * R_bd
    A = np.vstack([A_eq, A_bd])
    R = np.concatenate([R_eq, R_bd])
    tags = np.concatenate([np.full(len(R_eq), "interior", dtype=object), system.tags])
    return CollocationSystem(A, R, tags)


def newton(system, K, width, record=None):
    """Run exactly ``K`` undamped steps ``w <- w + lstsq(A, -R)`` from ``w = 0``.

    ``record`` may be a callable invoked as ``record(k, w)`` after every step.
    Returns ``(w, history, final_residual, cond, seconds)``.
    """
    w = np.zeros(width, dtype=system.dtype)
    history = []
    cond = float("nan")
    t_asm = t_solve = 0.0
    for k in range(K):
        t0 = time.perf_counter()
        sys_k = assemble(system, w)
        t1 = time.perf_counter()
        if k == 0:
            cond = condition_number(sys_k.A)
        step = lstsq(sys_k.A, -sys_k.R).solution
        t2 = time.perf_counter()
        t_asm += t1 - t0
        t_solve += t2 - t1
        history.append(float(np.linalg.norm(sys_k.R)))
        w = w + step
        if not np.all(np.isfinite(w)):
            raise DivergedSolve(f"non-finite coefficients after Newton step {k + 1}", k + 1)
        if record is not None:
            record(k + 1, w)
    final = float(np.linalg.norm(assemble(system, w).R))
    return w, history, final, cond, {"assembly": t_asm, "solve": t_solve}


def predict(params, w, X, precision="fp64"):
    phi = _basis_values(params, X, precision).astype(solve_dtype(precision))
    return phi @ np.asarray(w, dtype=phi.dtype)


def evaluate_rmse(params, w, problem, n_eval=10000, rng=None, precision="fp64", X=None):
    """RMSE of ``Phi(x) w`` against the exact solution at uniform interior points."""
    if X is None:
        if n_eval < 1:
            raise InvalidInput("n_eval must be positive")
        X = problem.geometry.sample_interior(rng if rng is not None else np.random.default_rng(), n_eval)
    err = predict(params, w, X, precision).astype(np.float64) - exact_solution(problem, X)
    return float(np.sqrt(np.mean(err**2)))


def solve(
    problem,
    params,
    points,
    K=None,
    precision="fp64",
    eval_points=None,
    seed=0,
    boundary_weight=1.0,
    record_at=(),
):
    """Solve ``problem`` on ``points`` with the frozen basis ``params``.

    Linear operators always use a single step. ``record_at`` lists iteration
    counts at which to also report RMSE on ``eval_points`` (used by sweeps).
    """
    if params.input_dim != problem.input_dim:
        raise InvalidInput(f"basis has input dimension {params.input_dim}, problem needs {problem.input_dim}")
    if K is None:
        K = 1 if problem.linear else problem.newton_iters
    if K < 1:
        raise InvalidInput("K must be at least 1")
    if problem.linear:
        K = 1
    t0 = time.perf_counter()
    system = prepare(problem, params, points, precision, boundary_weight)
    t_basis = time.perf_counter() - t0

    rmse_history = {}
    wanted = set(record_at)

    def record(k, w):
        if k in wanted and eval_points is not None:
            rmse_history[k] = evaluate_rmse(params, w, problem, precision=precision, X=eval_points)

    w, history, final, cond, timings = newton(system, K, params.width, record if wanted else None)
    rmse = float("nan")
    if eval_points is not None:
        rmse = evaluate_rmse(params, w, problem, precision=precision, X=eval_points)
    wall = {"basis": t_basis, **timings}
    wall["total"] = time.perf_counter() - t0
    return SolveReport(
        problem=problem.name,
        width=params.width,
        seed=seed,
        precision=precision,
        K=K,
        coefficients=w,
        rmse=rmse,
        cond=cond,
        residual_history=history,
        final_residual=final,
        wall_seconds=wall,
        rmse_history=rmse_history,
    )


def point_streams(seed):
    """Independent streams for collocation points and for evaluation points."""
    return np.random.default_rng([seed, 0]), np.random.default_rng([seed, 1])


def run(problem, params, seed=0, K=None, precision="fp64", n_interior=None, n_boundary=None, n_eval=10000, **kw):
    """Sample points from ``seed``, solve, and evaluate RMSE on fresh points."""
    pts_rng, eval_rng = point_streams(seed)
    points = sample_points(
        problem,
        n_interior or problem.n_interior,
        n_boundary or problem.n_boundary,
        pts_rng,
    )
    X_eval = problem.geometry.sample_interior(eval_rng, n_eval)
    return solve(problem, params, points, K, precision, eval_points=X_eval, seed=seed, **kw)
