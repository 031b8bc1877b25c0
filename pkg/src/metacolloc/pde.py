"""Benchmark problems: operators, geometries, boundary conditions, exact solutions.

Every exact solution is written once as a function of coordinate jets, so
the forcing term and all boundary data come from differentiating it; no
derivative is transcribed by hand.
"""

from dataclasses import dataclass, field

import numpy as np

from . import jet
from .errors import UnknownProblem
from .jet import Jet3

PI = np.pi


# geometry -----------------------------------------------------------------


@dataclass(frozen=True)
class Segment:
    """Straight edge ``start + t * (end - start)``, or a circle of ``radius`` when ``end`` is None."""

    name: str
    start: tuple
    end: tuple = None
    normal: tuple = None
    radius: float = 0.0
    outward: float = 1.0

    @property
    def length(self):
        if self.end is None:
            return 2 * PI * self.radius
        return float(np.linalg.norm(np.subtract(self.end, self.start)))

    def sample(self, rng, n):
        if self.end is None:
            theta = rng.uniform(0, 2 * PI, size=n)
            pts = self.radius * np.stack([np.cos(theta), np.sin(theta)], axis=1)
            return pts, self.outward * pts / self.radius
        t = rng.uniform(0, 1, size=(n, 1))
        start, end = np.asarray(self.start, float), np.asarray(self.end, float)
        pts = start + t * (end - start)
        # pin the fixed coordinate exactly
        fixed = start == end
        pts[:, fixed] = start[fixed]
        return pts, np.tile(np.asarray(self.normal, float), (n, 1))


@dataclass(frozen=True)
class Face:
    """Axis-aligned unit-cube face ``x[axis] = value``."""

    name: str
    axis: int
    value: float
    length: float = 1.0

    def sample(self, rng, n):
        pts = rng.uniform(0, 1, size=(n, 3))
        pts[:, self.axis] = self.value
        normal = np.zeros((n, 3))
        normal[:, self.axis] = 1.0 if self.value == 1.0 else -1.0
        return pts, normal


@dataclass(frozen=True)
class Geometry:
    name: str
    dim: int
    lower: tuple
    upper: tuple
    segments: tuple

    def contains(self, X):
        X = np.atleast_2d(X)
        inside = np.all((X > np.asarray(self.lower)) & (X < np.asarray(self.upper)), axis=1)
        if self.name == "l_shape":
            inside &= ~((X[:, 0] >= 0) & (X[:, 1] <= 0))
        elif self.name == "annulus":
            r = np.linalg.norm(X, axis=1)
            inside &= (r > 0.5) & (r < 1.0)
        return inside

    def sample_interior(self, rng, n):
        lower, upper = np.asarray(self.lower, float), np.asarray(self.upper, float)
        out = []
        have = 0
        while have < n:
            batch = rng.uniform(lower, upper, size=(2 * (n - have) + 16, self.dim))
            batch = batch[self.contains(batch)]
            out.append(batch)
            have += len(batch)
        return np.concatenate(out)[:n]

    def sample_boundary(self, rng, n):
        lengths = np.array([s.length for s in self.segments])
        counts = rng.multinomial(n, lengths / lengths.sum())
        pts, normals, names = [], [], []
        for seg, k in zip(self.segments, counts):
            p, nrm = seg.sample(rng, k)
            pts.append(p)
            normals.append(nrm)
            names += [seg.name] * k
        return np.concatenate(pts), np.concatenate(normals), np.array(names, dtype=object)


def _square():
    return Geometry(
        "unit_square",
        2,
        (0.0, 0.0),
        (1.0, 1.0),
        (
            Segment("left", (0.0, 0.0), (0.0, 1.0), (-1.0, 0.0)),
            Segment("right", (1.0, 0.0), (1.0, 1.0), (1.0, 0.0)),
            Segment("bottom", (0.0, 0.0), (1.0, 0.0), (0.0, -1.0)),
            Segment("top", (0.0, 1.0), (1.0, 1.0), (0.0, 1.0)),
        ),
    )


def _cube():
    faces = tuple(Face(f"{'xyz'[a]}{int(v)}", a, v) for a in range(3) for v in (0.0, 1.0))
    return Geometry("unit_cube", 3, (0.0,) * 3, (1.0,) * 3, faces)


def _l_shape():
    # [-1, 1]^2 minus [0, 1] x [-1, 0]; inner-edge normals point into the removed quadrant
    return Geometry(
        "l_shape",
        2,
        (-1.0, -1.0),
        (1.0, 1.0),
        (
            Segment("left", (-1.0, -1.0), (-1.0, 1.0), (-1.0, 0.0)),
            Segment("top", (-1.0, 1.0), (1.0, 1.0), (0.0, 1.0)),
            Segment("bottom_left", (-1.0, -1.0), (0.0, -1.0), (0.0, -1.0)),
            Segment("right_top", (1.0, 0.0), (1.0, 1.0), (1.0, 0.0)),
            Segment("inner_horizontal", (0.0, 0.0), (1.0, 0.0), (0.0, -1.0)),
            Segment("inner_vertical", (0.0, -1.0), (0.0, 0.0), (1.0, 0.0)),
        ),
    )


def _annulus():
    return Geometry(
        "annulus",
        2,
        (-1.0, -1.0),
        (1.0, 1.0),
        (
            Segment("inner", (0.0, 0.0), radius=0.5, outward=-1.0),
            Segment("outer", (0.0, 0.0), radius=1.0, outward=1.0),
        ),
    )


GEOMETRIES = {"unit_square": _square, "unit_cube": _cube, "l_shape": _l_shape, "annulus": _annulus}


# exact solutions (functions of coordinate jets) -----------------------------


def _poisson_u(c):
    x, y = c
    return jet.sin(2 * PI * x) * jet.sin(2 * PI * y) + jet.exp(-x - y)


def _helmholtz_u(k):
    kxy = k / np.sqrt(2.0)

    def u(c):
        x, y = c
        return jet.sin(kxy * x) * jet.cos(kxy * y) + jet.exp(-x - y)

    return u


def _varcoeff_u(c):
    x, y = c
    return jet.sin(PI * x) * jet.sin(PI * y) + jet.exp(-x - y)


def _varcoeff_a(c):
    x, y = c
    return 2.0 + jet.sin(PI * x) * jet.cos(PI * y)


def _highfreq_u(c):
    x, y = c
    return jet.sin(8 * PI * x) * jet.sin(8 * PI * y) + jet.exp(-(x * y))


def _sincos_u(c):
    x, y = c
    return jet.sin(PI * x) * jet.cos(PI * y)


def _poisson3d_u(c):
    x, y, z = c
    return jet.sin(PI * x) * jet.sin(PI * y) * jet.sin(PI * z)


def _burgers3d_u(c):
    x, y, z = c
    return jet.sin(PI * x) * jet.sin(PI * y) * jet.exp(-z)


def _allencahn3d_u(c):
    x, y, z = c
    return jet.sin(PI * x) * jet.sin(PI * y) * jet.cos(PI * z)


# operators ------------------------------------------------------------------
#
# ``F`` exposes ``F.d(axis, order)``; order 0 is the value. For the residual
# the entries are vectors (u and its derivatives); for the Jacobian ``B``
# holds basis matrices and ``U`` the current solution's derivatives.


def _lap(F, axes):
    return sum(F.d(a, 2) for a in axes)


def _col(v):
    return np.asarray(v)[:, None]


def _residual(problem, U, coef):
    op, c = problem.operator, problem.constants
    if op in ("poisson", "highfreq_poisson"):
        return -_lap(U, (0, 1))
    if op == "helmholtz":
        return -_lap(U, (0, 1)) - c["k"] ** 2 * U.d(0, 0)
    if op == "varcoeff":
        return -(coef["a"] * _lap(U, (0, 1)) + coef["a_x"] * U.d(0, 1) + coef["a_y"] * U.d(1, 1))
    if op == "sinegordon":
        return U.d(1, 2) - U.d(0, 2) + np.sin(U.d(0, 0))
    if op == "kdv":
        u = U.d(0, 0)
        return U.d(1, 1) + 6 * u * U.d(0, 1) + U.d(0, 3)
    if op == "poisson3d":
        return _lap(U, (0, 1, 2))
    if op == "burgers3d":
        u = U.d(0, 0)
        return U.d(2, 1) + u * U.d(0, 1) + u * U.d(1, 1) - c["nu"] * _lap(U, (0, 1))
    if op == "allencahn3d":
        u = U.d(0, 0)
        return U.d(2, 1) - c["nu"] * _lap(U, (0, 1)) - u * (1 - u * u)
    raise UnknownProblem(op)


def _jacobian(problem, U, B, coef):
    op, c = problem.operator, problem.constants
    if op in ("poisson", "highfreq_poisson"):
        return -_lap(B, (0, 1))
    if op == "helmholtz":
        return -_lap(B, (0, 1)) - c["k"] ** 2 * B.d(0, 0)
    if op == "varcoeff":
        return -(_col(coef["a"]) * _lap(B, (0, 1)) + _col(coef["a_x"]) * B.d(0, 1) + _col(coef["a_y"]) * B.d(1, 1))
    if op == "sinegordon":
        return B.d(1, 2) - B.d(0, 2) + _col(np.cos(U.d(0, 0))) * B.d(0, 0)
    if op == "kdv":
        u, ux = _col(U.d(0, 0)), _col(U.d(0, 1))
        return B.d(1, 1) + 6 * (ux * B.d(0, 0) + u * B.d(0, 1)) + B.d(0, 3)
    if op == "poisson3d":
        return _lap(B, (0, 1, 2))
    if op == "burgers3d":
        u = _col(U.d(0, 0))
        grad_sum = _col(U.d(0, 1) + U.d(1, 1))
        return B.d(2, 1) + grad_sum * B.d(0, 0) + u * (B.d(0, 1) + B.d(1, 1)) - c["nu"] * _lap(B, (0, 1))
    if op == "allencahn3d":
        u = _col(U.d(0, 0))
        return B.d(2, 1) - c["nu"] * _lap(B, (0, 1)) - B.d(0, 0) + 3 * u * u * B.d(0, 0)
    raise UnknownProblem(op)


OPERATOR_ORDERS = {
    "poisson": {0: 2, 1: 2},
    "highfreq_poisson": {0: 2, 1: 2},
    "helmholtz": {0: 2, 1: 2},
    "varcoeff": {0: 2, 1: 2},
    "sinegordon": {0: 2, 1: 2},
    "kdv": {0: 3, 1: 1},
    "poisson3d": {0: 2, 1: 2, 2: 2},
    "burgers3d": {0: 2, 1: 2, 2: 1},
    "allencahn3d": {0: 2, 1: 2, 2: 1},
}

LINEAR_OPERATORS = {"poisson", "highfreq_poisson", "helmholtz", "varcoeff", "poisson3d"}


# problem records ------------------------------------------------------------


@dataclass
class PDEProblem:
    name: str
    input_dim: int
    operator: str
    exact: object
    geometry: Geometry
    bc: dict
    constants: dict = field(default_factory=dict)
    coefficient: object = None
    n_interior: int = 2000
    n_boundary: int = 300
    newton_iters: int = 64

    @property
    def linear(self):
        return self.operator in LINEAR_OPERATORS

    @property
    def orders(self):
        return dict(OPERATOR_ORDERS[self.operator])

    @property
    def max_order(self):
        return max(self.orders.values())

    def residual(self, U, coef):
        return _residual(self, U, coef)

    def jacobian(self, U, B, coef):
        return _jacobian(self, U, B, coef)


@dataclass
class CollocationPoints:
    interior: np.ndarray
    boundary: np.ndarray
    normals: np.ndarray
    bc_tags: np.ndarray
    segments: np.ndarray


def _square_dirichlet():
    return {s.name: "dirichlet" for s in _square().segments}


def make_problem(name):
    """Look up a benchmark by CLI name (``poisson``, ``kdv``, ``poisson@lshape`` ...)."""
    base, _, geom = name.partition("@")
    if geom:
        if base != "poisson" or geom not in ("lshape", "annulus"):
            raise UnknownProblem(name)
        if geom == "lshape":
            bc = {
                "left": "dirichlet",
                "top": "dirichlet",
                "bottom_left": "dirichlet",
                "right_top": "neumann",
                "inner_horizontal": "neumann",
                "inner_vertical": "neumann",
            }
            g = _l_shape()
        else:
            bc = {"inner": "dirichlet", "outer": "robin"}
            g = _annulus()
        return PDEProblem(
            name, 2, "poisson", _poisson_u, g, bc, constants={"alpha": 1.0}, n_interior=3000, n_boundary=600
        )
    square = _square_dirichlet()
    if base == "poisson":
        return PDEProblem(name, 2, "poisson", _poisson_u, _square(), square)
    if base == "helmholtz":
        k = 64 * PI
        return PDEProblem(
            name, 2, "helmholtz", _helmholtz_u(k), _square(), square, constants={"k": k, "k_xy": k / np.sqrt(2.0)}
        )
    if base == "varcoeff":
        return PDEProblem(name, 2, "varcoeff", _varcoeff_u, _square(), square, coefficient=_varcoeff_a)
    if base == "highfreq":
        return PDEProblem(name, 2, "highfreq_poisson", _highfreq_u, _square(), square)
    if base == "sinegordon":
        return PDEProblem(name, 2, "sinegordon", _sincos_u, _square(), square)
    if base == "kdv":
        return PDEProblem(name, 2, "kdv", _sincos_u, _square(), square)
    cube = {f.name: "dirichlet" for f in _cube().segments}
    kw = dict(n_interior=8000, n_boundary=3600, newton_iters=8)
    if base == "poisson3d":
        return PDEProblem(name, 3, "poisson3d", _poisson3d_u, _cube(), cube, **kw)
    if base == "burgers3d":
        return PDEProblem(name, 3, "burgers3d", _burgers3d_u, _cube(), cube, constants={"nu": 0.01}, **kw)
    if base == "allencahn3d":
        return PDEProblem(name, 3, "allencahn3d", _allencahn3d_u, _cube(), cube, constants={"nu": 0.001}, **kw)
    raise UnknownProblem(name)


PROBLEMS_2D = ("poisson", "helmholtz", "varcoeff", "highfreq", "sinegordon", "kdv")
PROBLEMS_3D = ("poisson3d", "burgers3d", "allencahn3d")
GEOMETRY_PROBLEMS = ("poisson@lshape", "poisson@annulus")
PROBLEM_NAMES = PROBLEMS_2D + PROBLEMS_3D + GEOMETRY_PROBLEMS


# evaluation of exact fields --------------------------------------------------


@dataclass
class Fields:
    """Value plus per-axis derivative stacks; vectors or matrices alike."""

    value: np.ndarray
    derivs: dict

    def d(self, axis, order):
        if order == 0:
            return self.value
        return self.derivs[axis][order - 1]


def jet_fields(fn, X):
    """Evaluate a jet-valued function at points ``X`` with derivatives along every axis."""
    X = np.asarray(X, dtype=np.float64)
    d = X.shape[1]
    derivs = {}
    value = None
    for axis in range(d):
        coords = [jet.seed(X[:, a], a == axis) for a in range(d)]
        out = fn(coords)
        value = out.d0
        derivs[axis] = [out.d1, out.d2, out.d3]
    return Fields(value, derivs)


def exact_solution(problem, X):
    X = np.asarray(X, dtype=np.float64)
    coords = [jet.constant(X[:, a]) for a in range(X.shape[1])]
    return problem.exact(coords).d0


def coefficients(problem, X):
    if problem.coefficient is None:
        return {}
    a = jet_fields(problem.coefficient, X)
    return {"a": a.value, "a_x": a.d(0, 1), "a_y": a.d(1, 1)}


def forcing(problem, X):
    """Right-hand side ``f`` with ``operator(u_exact) = f`` at points ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    return problem.residual(jet_fields(problem.exact, X), coefficients(problem, X))


def boundary_target(problem, X, normals, tags):
    """Exact boundary data per row: u, grad(u).n, or u + alpha grad(u).n."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    normals = np.atleast_2d(normals)
    tags = np.broadcast_to(np.asarray(tags, dtype=object), (X.shape[0],))
    F = jet_fields(problem.exact, X)
    dn = sum(normals[:, a] * F.d(a, 1) for a in range(X.shape[1]))
    alpha = problem.constants.get("alpha", 1.0)
    out = np.where(tags == "dirichlet", F.value, 0.0)
    out = np.where(tags == "neumann", dn, out)
    out = np.where(tags == "robin", F.value + alpha * dn, out)
    return out.astype(np.float64)


def sample_points(problem, n_int, n_bd, rng):
    interior = problem.geometry.sample_interior(rng, n_int)
    boundary, normals, segments = problem.geometry.sample_boundary(rng, n_bd)
    tags = np.array([problem.bc[s] for s in segments], dtype=object)
    return CollocationPoints(interior, boundary, normals, tags, segments)
