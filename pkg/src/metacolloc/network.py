"""Dual-branch basis dictionary.

The low branch applies two SwiGLU layers to the raw coordinates; the high
branch applies two SwiGLU layers to a fixed, axis-aligned sin/cos encoding.
Outputs are concatenated as ``[low | high]``, each of width ``H/2``.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import jet
from .errors import CorruptCheckpoint, IncompatibleCheckpoint, InvalidConfig, InvalidInput
from .jet import Jet3
from .linalg import dtype_for

FOURIER_SCALES = (1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0)
BRANCHES = ("low", "high")
MAGIC = b"MCBD"
VERSION = 1
CHUNK_ROWS = 2048


def layer_shapes(d, H, n_scales=len(FOURIER_SCALES)):
    """Serialization order and shapes of every trainable tensor."""
    inputs = {"low": d, "high": 2 * d * n_scales}
    shapes = []
    for branch in BRANCHES:
        fan_in = inputs[branch]
        for layer, width in enumerate((H, H // 2)):
            prefix = f"{branch}{layer}"
            shapes += [
                (f"{prefix}.W1", (fan_in, width)),
                (f"{prefix}.b1", (width,)),
                (f"{prefix}.W2", (fan_in, width)),
                (f"{prefix}.b2", (width,)),
            ]
            fan_in = width
    return shapes


@dataclass
class BasisParams:
    input_dim: int
    width: int
    tensors: dict
    init_seed: int = 0
    fourier_scales: tuple = FOURIER_SCALES
    precision: str = "fp64"
    metadata: dict = field(default_factory=dict)

    @property
    def dtype(self):
        return dtype_for(self.precision)

    def names(self):
        return [name for name, _ in layer_shapes(self.input_dim, self.width, len(self.fourier_scales))]

    def with_precision(self, precision):
        """Copy evaluated in ``precision``; master values are kept in fp64 elsewhere."""
        dt = dtype_for(precision)
        return BasisParams(
            self.input_dim,
            self.width,
            {k: v.astype(dt) for k, v in self.tensors.items()},
            self.init_seed,
            self.fourier_scales,
            precision,
            dict(self.metadata),
        )

    def copy(self):
        return BasisParams(
            self.input_dim,
            self.width,
            {k: v.copy() for k, v in self.tensors.items()},
            self.init_seed,
            self.fourier_scales,
            self.precision,
            dict(self.metadata),
        )

    def with_branch_zeroed(self, branch):
        out = self.copy()
        for name in out.tensors:
            if name.startswith(branch):
                out.tensors[name] = np.zeros_like(out.tensors[name])
        return out


def init_params(d, H, seed, precision="fp64"):
    if d not in (2, 3):
        raise InvalidConfig(f"input dimension must be 2 or 3, got {d}")
    if H % 2 or H < 4:
        raise InvalidConfig(f"width must be even and at least 4, got {H}")
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in layer_shapes(d, H):
        if len(shape) == 2:
            limit = np.sqrt(6.0 / (shape[0] + shape[1]))
            tensors[name] = rng.uniform(-limit, limit, size=shape)
        else:
            tensors[name] = np.zeros(shape)
    params = BasisParams(d, H, tensors, init_seed=seed)
    return params if precision == "fp64" else params.with_precision(precision)


def _points(params, points):
    X = np.asarray(points, dtype=params.dtype)
    if X.ndim != 2 or X.shape[1] != params.input_dim:
        raise InvalidInput(f"points must have shape (N, {params.input_dim}), got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InvalidInput("non-finite coordinates")
    return X


def fourier_encode(x, scales=FOURIER_SCALES):
    """sin/cos encoding: all sines (axis-major, then scale) followed by all cosines.

    Accepts a single coordinate vector or an ``(N, d)`` batch.
    """
    x = np.asarray(x, dtype=float) if not isinstance(x, np.ndarray) else x
    k = np.pi * np.asarray(scales, dtype=x.dtype)
    arg = (x[..., :, None] * k).reshape(*x.shape[:-1], -1)
    return np.concatenate([np.sin(arg), np.cos(arg)], axis=-1)


def _encode_jets(X, axis, scales):
    """Jets of the Fourier encoding with respect to coordinate ``axis``."""
    N, d = X.shape
    k = np.pi * np.asarray(scales, dtype=X.dtype)
    arg = (X[:, :, None] * k).reshape(N, -1)
    s, c = np.sin(arg), np.cos(arg)
    # derivative of pi*k*x_a with respect to x_a is pi*k on the active axis only
    rate = np.zeros((d, k.size), dtype=X.dtype)
    rate[axis] = k
    rate = rate.reshape(-1)
    r2, r3 = rate**2, rate**3
    sin_j = Jet3(s, c * rate, -s * r2, -c * r3)
    cos_j = Jet3(c, -s * rate, -c * r2, s * r3)
    return Jet3(*(np.concatenate([a, b], axis=1) for a, b in zip(sin_j.parts, cos_j.parts)))


def _swiglu(h, T, prefix):
    z1 = h @ T[prefix + ".W1"] + T[prefix + ".b1"]
    z2 = h @ T[prefix + ".W2"] + T[prefix + ".b2"]
    if isinstance(h, Jet3):
        return jet.silu(z1) * z2
    return jet.silu_value(z1) * z2


def _branch(h, T, branch):
    return _swiglu(_swiglu(h, T, branch + "0"), T, branch + "1")


def forward(params, points):
    X = _points(params, points)
    T = params.tensors
    low = _branch(X, T, "low")
    high = _branch(fourier_encode(X, params.fourier_scales), T, "high")
    return np.concatenate([low, high], axis=1)


def _forward_jets_chunk(params, X, axis):
    T = params.tensors
    onehot = np.zeros_like(X)
    onehot[:, axis] = 1
    x_jet = Jet3(X, onehot, np.zeros_like(X), np.zeros_like(X))
    low = _branch(x_jet, T, "low")
    high = _branch(_encode_jets(X, axis, params.fourier_scales), T, "high")
    return [np.concatenate([a, b], axis=1) for a, b in zip(low.parts, high.parts)]


def forward_jets(params, points, axis, max_order=3):
    """Basis values and the first ``max_order`` derivatives along ``axis``.

    Returns a list ``[phi, phi_1, ..., phi_max_order]`` of ``(N, H)`` arrays.
    """
    X = _points(params, points)
    if not 0 <= axis < params.input_dim:
        raise InvalidInput(f"axis {axis} out of range for input dimension {params.input_dim}")
    if not 0 <= max_order <= 3:
        raise InvalidInput("max_order must lie in 0..3")
    pieces = [_forward_jets_chunk(params, X[i : i + CHUNK_ROWS], axis) for i in range(0, len(X), CHUNK_ROWS)]
    if not pieces:
        return [np.zeros((0, params.width), dtype=params.dtype) for _ in range(max_order + 1)]
    return [np.concatenate([p[k] for p in pieces], axis=0) for k in range(max_order + 1)]


@dataclass
class BasisBlock:
    """Basis values plus derivative stacks ``derivs[axis] = [phi_1, phi_2, phi_3]``."""

    phi: np.ndarray
    derivs: dict

    def d(self, axis, order):
        if order == 0:
            return self.phi
        return self.derivs[axis][order - 1]

    def astype(self, dtype):
        return BasisBlock(
            self.phi.astype(dtype),
            {a: [m.astype(dtype) for m in ms] for a, ms in self.derivs.items()},
        )


def basis_block(params, points, orders):
    """Evaluate the basis with derivatives; ``orders`` maps axis -> highest order needed."""
    orders = {a: o for a, o in orders.items() if o > 0}
    if not orders:
        return BasisBlock(forward(params, points), {})
    phi = None
    derivs = {}
    for axis in sorted(orders):
        stack = forward_jets(params, points, axis, 3)
        if phi is None:
            phi = stack[0]
        derivs[axis] = stack[1:]
    return BasisBlock(phi, derivs)


# reverse mode -----------------------------------------------------------


def _swiglu_fwd(h, T, prefix):
    z1 = h @ T[prefix + ".W1"] + T[prefix + ".b1"]
    z2 = h @ T[prefix + ".W2"] + T[prefix + ".b2"]
    a = jet.silu_value(z1)
    return a * z2, (h, z1, z2, a)


def _swiglu_bwd(G, cache, T, prefix, grads):
    h, z1, z2, a = cache
    dz2 = G * a
    dz1 = G * z2 * jet.silu_grad(z1)
    grads[prefix + ".W1"] = h.T @ dz1
    grads[prefix + ".b1"] = dz1.sum(axis=0)
    grads[prefix + ".W2"] = h.T @ dz2
    grads[prefix + ".b2"] = dz2.sum(axis=0)
    return dz1 @ T[prefix + ".W1"].T + dz2 @ T[prefix + ".W2"].T


def backward(params, points, upstream):
    """Gradients of ``sum(upstream * forward(params, points))`` for every trainable tensor."""
    X = _points(params, points)
    G = np.asarray(upstream, dtype=params.dtype)
    if G.shape != (X.shape[0], params.width):
        raise InvalidInput(f"upstream must have shape {(X.shape[0], params.width)}, got {G.shape}")
    T = params.tensors
    half = params.width // 2
    grads = {}
    inputs = {"low": X, "high": fourier_encode(X, params.fourier_scales)}
    for branch, G_branch in zip(BRANCHES, (G[:, :half], G[:, half:])):
        h1, c0 = _swiglu_fwd(inputs[branch], T, branch + "0")
        _, c1 = _swiglu_fwd(h1, T, branch + "1")
        dh1 = _swiglu_bwd(G_branch, c1, T, branch + "1", grads)
        _swiglu_bwd(dh1, c0, T, branch + "0", grads)
    return {name: grads[name] for name in params.names()}


def forward_and_backward(params, points, grad_fn):
    """Forward pass, then pull back ``grad_fn(phi)`` reusing the cached activations.

    ``grad_fn`` receives the basis matrix and must return ``(aux, upstream)``.
    Returns ``(aux, grads)``.
    """
    X = _points(params, points)
    T = params.tensors
    inputs = {"low": X, "high": fourier_encode(X, params.fourier_scales)}
    caches = {}
    outs = []
    for branch in BRANCHES:
        h1, c0 = _swiglu_fwd(inputs[branch], T, branch + "0")
        out, c1 = _swiglu_fwd(h1, T, branch + "1")
        caches[branch] = (c0, c1)
        outs.append(out)
    phi = np.concatenate(outs, axis=1)
    aux, G = grad_fn(phi)
    half = params.width // 2
    grads = {}
    for branch, G_branch in zip(BRANCHES, (G[:, :half], G[:, half:])):
        c0, c1 = caches[branch]
        dh1 = _swiglu_bwd(G_branch, c1, T, branch + "1", grads)
        _swiglu_bwd(dh1, c0, T, branch + "0", grads)
    return aux, {name: grads[name] for name in params.names()}


# checkpoints --------------------------------------------------------------


def save_checkpoint(params, path, metadata=None):
    names = params.names()
    shapes = dict(layer_shapes(params.input_dim, params.width, len(params.fourier_scales)))
    header = {
        "input_dim": params.input_dim,
        "H": params.width,
        "fourier_scales": list(params.fourier_scales),
        "layers": [[n, list(shapes[n])] for n in names],
        "init_seed": params.init_seed,
        "training": metadata if metadata is not None else params.metadata,
    }
    blob = b"".join(np.ascontiguousarray(params.tensors[n], dtype="<f8").tobytes() for n in names)
    with open(path, "wb") as fh:
        fh.write(MAGIC + bytes([VERSION]))
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        fh.write(blob)


def load_checkpoint(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise IncompatibleCheckpoint(f"{path}: bad magic {data[:4]!r}")
    if len(data) < 5 or data[4] != VERSION:
        raise IncompatibleCheckpoint(f"{path}: unsupported version")
    end = data.find(b"\n", 5)
    if end < 0:
        raise CorruptCheckpoint(f"{path}: header not terminated")
    try:
        header = json.loads(data[5:end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptCheckpoint(f"{path}: unreadable header") from exc
    offset = end + 1
    tensors = {}
    for name, shape in header["layers"]:
        count = int(np.prod(shape))
        nbytes = 8 * count
        if offset + nbytes > len(data):
            raise CorruptCheckpoint(f"{path}: truncated at tensor {name}")
        tensors[name] = np.frombuffer(data, dtype="<f8", count=count, offset=offset).astype(np.float64).reshape(shape)
        offset += nbytes
    if offset != len(data):
        raise CorruptCheckpoint(f"{path}: {len(data) - offset} trailing bytes")
    params = BasisParams(
        header["input_dim"],
        header["H"],
        tensors,
        init_seed=header["init_seed"],
        fourier_scales=tuple(header["fourier_scales"]),
        metadata=header.get("training", {}),
    )
    expected = [n for n, _ in layer_shapes(params.input_dim, params.width, len(params.fourier_scales))]
    if [n for n, _ in header["layers"]] != expected:
        raise IncompatibleCheckpoint(f"{path}: layer layout does not match this architecture")
    return params
