"""Order-3 truncated Taylor arithmetic along a single axis.

A :class:`Jet3` carries a value and its first three derivatives with
respect to one coordinate. Components may be scalars or numpy arrays of a
common shape, so one jet can hold a whole batch of points.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Jet3:
    d0: object
    d1: object
    d2: object
    d3: object

    @property
    def parts(self):
        return (self.d0, self.d1, self.d2, self.d3)

    def __add__(self, other):
        if isinstance(other, Jet3):
            return Jet3(self.d0 + other.d0, self.d1 + other.d1, self.d2 + other.d2, self.d3 + other.d3)
        return Jet3(self.d0 + other, self.d1, self.d2, self.d3)

    __radd__ = __add__

    def __neg__(self):
        return Jet3(-self.d0, -self.d1, -self.d2, -self.d3)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet3):
            return jet_mul(self, other)
        return Jet3(self.d0 * other, self.d1 * other, self.d2 * other, self.d3 * other)

    __rmul__ = __mul__

    def __matmul__(self, W):
        # linear maps act on every Taylor coefficient independently
        return Jet3(self.d0 @ W, self.d1 @ W, self.d2 @ W, self.d3 @ W)

    def map(self, fn):
        return Jet3(*(fn(p) for p in self.parts))


def seed(value, is_active_axis):
    """Identity jet of a coordinate: ``(x, 1, 0, 0)`` if active, constant otherwise."""
    value = np.asarray(value)
    zero = np.zeros_like(value)
    one = np.ones_like(value) if is_active_axis else zero
    if value.ndim == 0:
        value, zero, one = value[()], zero[()], one[()]
    return Jet3(value, one, zero, zero)


def constant(value):
    return seed(value, False)


def jet_mul(a, b):
    """Leibniz rule through third order."""
    a0, a1, a2, a3 = a.parts
    b0, b1, b2, b3 = b.parts
    return Jet3(
        a0 * b0,
        a1 * b0 + a0 * b1,
        a2 * b0 + 2 * a1 * b1 + a0 * b2,
        a3 * b0 + 3 * a2 * b1 + 3 * a1 * b2 + a0 * b3,
    )


def compose(a, f0, f1, f2, f3):
    """Faa di Bruno: jet of ``f(a)`` given ``f``'s derivatives at ``a.d0``."""
    _, a1, a2, a3 = a.parts
    return Jet3(
        f0,
        f1 * a1,
        f2 * a1 * a1 + f1 * a2,
        f3 * a1 * a1 * a1 + 3 * f2 * a1 * a2 + f1 * a3,
    )


def _sigmoid(z):
    # branch on sign so exp never overflows
    z = np.asarray(z)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1 / (1 + e), e / (1 + e))


def _sigmoid_derivs(z):
    s = _sigmoid(z)
    ds = s * (1 - s)
    d2s = ds * (1 - 2 * s)
    d3s = ds * (1 - 6 * s + 6 * s * s)
    return s, ds, d2s, d3s


def _derivs(name, z):
    if name == "sin":
        s, c = np.sin(z), np.cos(z)
        return s, c, -s, -c
    if name == "cos":
        s, c = np.sin(z), np.cos(z)
        return c, -s, -c, s
    if name == "exp":
        e = np.exp(z)
        return e, e, e, e
    if name == "sigmoid":
        return _sigmoid_derivs(z)
    if name == "silu":
        s, ds, d2s, d3s = _sigmoid_derivs(z)
        # (z s)' = s + z s', (z s)'' = 2 s' + z s'', (z s)''' = 3 s'' + z s'''
        return z * s, s + z * ds, 2 * ds + z * d2s, 3 * d2s + z * d3s
    if name == "tanh":
        t = np.tanh(z)
        dt = 1 - t * t
        return t, dt, -2 * t * dt, dt * (6 * t * t - 2)
    raise ValueError(f"unsupported function {name!r}")


UNARY = ("sin", "cos", "exp", "sigmoid", "silu", "tanh")


def jet_unary(f, a):
    derivs = _derivs(f, a.d0)
    if np.ndim(a.d0) == 0:
        derivs = tuple(np.asarray(d)[()] for d in derivs)
    return compose(a, *derivs)


def sin(a):
    return jet_unary("sin", a)


def cos(a):
    return jet_unary("cos", a)


def exp(a):
    return jet_unary("exp", a)


def silu(a):
    return jet_unary("silu", a)


def silu_value(z):
    return z * _sigmoid(z)


def silu_grad(z):
    s = _sigmoid(z)
    return s + z * s * (1 - s)
