"""Differentiable scalars.

Two carriers live here.

`Dual` is a tagged first-order dual number. Its primal and tangent parts may
be floats, numpy arrays or other `Dual`s with smaller tags, so perturbations
nest: differentiating a closure that itself differentiates another closure
just stacks one more tag. Array leaves let a whole tensor ride in one `Dual`.

`Jet2` carries a value together with its gradient and Hessian against a fixed
seed set. It is what `eval_jet2` propagates. Its entries may themselves be
`Dual`s, which is how transition matrices get differentiated at perturbed
points.
"""

from __future__ import annotations

import contextlib
import contextvars
import itertools
from typing import Any, Iterator, Sequence

import numpy as np

from .errors import DepthLimit, DomainError

_tags = itertools.count(1)

_depth: contextvars.ContextVar[int] = contextvars.ContextVar("depth", default=0)
_limit: contextvars.ContextVar[int] = contextvars.ContextVar("limit", default=2)


def new_tag() -> int:
    return next(_tags)


@contextlib.contextmanager
def derivative_order(limit: int) -> Iterator[None]:
    """Allow up to `limit` nested derivative evaluations inside the block."""
    token = _limit.set(limit)
    try:
        yield
    finally:
        _limit.reset(token)


@contextlib.contextmanager
def nested_derivative() -> Iterator[None]:
    depth = _depth.get() + 1
    if depth > _limit.get():
        raise DepthLimit(f"derivative nesting {depth} exceeds configured order {_limit.get()}")
    token = _depth.set(depth)
    try:
        yield
    finally:
        _depth.reset(token)


class Dual:
    __slots__ = ("tag", "p", "t")
    __array_ufunc__ = None  # keep numpy from turning us into object arrays

    def __init__(self, tag: int, p: Any, t: Any):
        self.tag = tag
        self.p = p
        self.t = t

    def __repr__(self) -> str:
        return f"Dual({self.tag}, {self.p!r}, {self.t!r})"

    def __add__(self, o):
        ot = o.tag if type(o) is Dual else 0
        if ot == self.tag:
            return Dual(self.tag, self.p + o.p, self.t + o.t)
        if ot < self.tag:
            return Dual(self.tag, self.p + o, self.t)
        return Dual(ot, self + o.p, o.t)

    __radd__ = __add__

    def __sub__(self, o):
        ot = o.tag if type(o) is Dual else 0
        if ot == self.tag:
            return Dual(self.tag, self.p - o.p, self.t - o.t)
        if ot < self.tag:
            return Dual(self.tag, self.p - o, self.t)
        return Dual(ot, self - o.p, -o.t)

    def __rsub__(self, o):
        return Dual(self.tag, o - self.p, -self.t)

    def __mul__(self, o):
        ot = o.tag if type(o) is Dual else 0
        if ot == self.tag:
            return Dual(self.tag, self.p * o.p, self.p * o.t + self.t * o.p)
        if ot < self.tag:
            return Dual(self.tag, self.p * o, self.t * o)
        return Dual(ot, self * o.p, self * o.t)

    __rmul__ = __mul__

    def __truediv__(self, o):
        ot = o.tag if type(o) is Dual else 0
        if ot == self.tag:
            q = self.p / o.p
            return Dual(self.tag, q, (self.t - q * o.t) / o.p)
        if ot < self.tag:
            return Dual(self.tag, self.p / o, self.t / o)
        q = self / o.p
        return Dual(ot, q, -(q * o.t) / o.p)

    def __rtruediv__(self, o):
        q = o / self.p
        return Dual(self.tag, q, -(q * self.t) / self.p)

    def __neg__(self):
        return Dual(self.tag, -self.p, -self.t)

    def __pos__(self):
        return self

    def __pow__(self, c):
        if type(c) is Dual:
            raise TypeError("exponent must be a constant")
        if c == 0:
            return 1.0
        return Dual(self.tag, self.p**c, c * self.p ** (c - 1) * self.t)

    def __getitem__(self, idx):
        t = self.t
        try:
            ti = t[idx]
        except (IndexError, TypeError):
            # tangent kept at a broadcastable lower rank
            shape = np.shape(primal(self.p))
            ti = linear(lambda a: np.broadcast_to(a, shape)[idx], t)
        return Dual(self.tag, self.p[idx], ti)

    @property
    def shape(self) -> tuple[int, ...]:
        return np.shape(primal(self))


def tag_of(x: Any) -> int:
    return x.tag if type(x) is Dual else 0


def primal(x: Any) -> Any:
    """Strip every perturbation and return the float or array underneath."""
    while True:
        tx = type(x)
        if tx is Dual:
            x = x.p
        elif tx is Jet2:
            x = x.v
        else:
            return x


def value_of(x: Any, tag: int) -> Any:
    """Set the perturbation `tag` to zero."""
    if type(x) is not Dual or x.tag < tag:
        return x
    if x.tag == tag:
        return x.p
    return Dual(x.tag, value_of(x.p, tag), value_of(x.t, tag))


def tangent_of(x: Any, tag: int) -> Any:
    """Coefficient of the perturbation `tag`."""
    if type(x) is not Dual or x.tag < tag:
        return np.zeros(np.shape(primal(x)))
    if x.tag == tag:
        return x.t
    return Dual(x.tag, tangent_of(x.p, tag), tangent_of(x.t, tag))


def prune(x: Any) -> Any:
    """Drop perturbation layers whose tangent is identically zero."""
    if type(x) is not Dual:
        return x
    p, t = prune(x.p), prune(x.t)
    tt = type(t)
    if tt is float or tt is np.float64:
        if t == 0.0:
            return p
    elif tt is not Dual and not np.any(t):
        return p
    return Dual(x.tag, p, t)


def perturb(x: Any, tag: int, direction: Any) -> Dual:
    return Dual(tag, x, direction)


# ---------------------------------------------------------------- lifted linear algebra


def linear(fn, x: Any) -> Any:
    """Apply a linear map that acts on plain arrays to a possibly perturbed value."""
    if type(x) is Dual:
        return Dual(x.tag, linear(fn, x.p), linear(fn, x.t))
    return fn(np.asarray(x))


def einsum(subscripts: str, *ops: Any) -> Any:
    """`numpy.einsum` extended multilinearly over `Dual` operands."""
    top = 0
    for o in ops:
        if type(o) is Dual and o.tag > top:
            top = o.tag
    if top == 0:
        return np.einsum(subscripts, *ops)
    ps: list[Any] = []
    ts: list[Any] = []
    for o in ops:
        if type(o) is Dual and o.tag == top:
            ps.append(o.p)
            ts.append(o.t)
        else:
            ps.append(o)
            ts.append(None)
    p = einsum(subscripts, *ps)
    t = None
    for k, tk in enumerate(ts):
        if tk is None:
            continue
        term = einsum(subscripts, *ps[:k], tk, *ps[k + 1 :])
        t = term if t is None else t + term
    return Dual(top, p, t)


def stack(values: Sequence[Any], axis: int = 0) -> Any:
    """Stack scalars or arrays, any of which may be perturbed."""
    top = 0
    for v in values:
        if type(v) is Dual and v.tag > top:
            top = v.tag
    if top == 0:
        if axis == 0 and all(type(v) is float or type(v) is np.float64 for v in values):
            return np.array(values, dtype=float)
        return np.stack(np.broadcast_arrays(*[np.asarray(v, dtype=float) for v in values]), axis=axis)
    ps = []
    ts = []
    for v in values:
        if type(v) is Dual and v.tag == top:
            ps.append(v.p)
            ts.append(v.t)
        else:
            ps.append(v)
            ts.append(0.0)
    return Dual(top, stack(ps, axis), stack(ts, axis))


def asdata(x: Any) -> Any:
    """Normalise leaves to float arrays."""
    if type(x) is Dual:
        return x
    return np.asarray(x, dtype=float)


# ---------------------------------------------------------------- second-order jets


class Jet2:
    """Value, gradient and Hessian against `m` seeds."""

    __slots__ = ("v", "g", "h")
    __array_ufunc__ = None

    def __init__(self, v: Any, g: Any, h: Any):
        self.v = v
        self.g = g
        self.h = h

    @classmethod
    def constant(cls, v: Any, m: int) -> Jet2:
        return cls(v, np.zeros(m), np.zeros((m, m)))

    @classmethod
    def seed(cls, v: Any, index: int, m: int) -> Jet2:
        g = np.zeros(m)
        g[index] = 1.0
        return cls(v, g, np.zeros((m, m)))

    @property
    def gradient(self) -> Any:
        return self.g

    @property
    def hessian(self) -> Any:
        return self.h

    def __repr__(self) -> str:
        return f"Jet2({self.v!r}, {self.g!r}, {self.h!r})"

    def _chain(self, f0, f1, f2) -> Jet2:
        g = self.g
        return Jet2(f0, f1 * g, f1 * self.h + f2 * _outer(g, g))

    def __add__(self, o):
        if type(o) is Jet2:
            return Jet2(self.v + o.v, self.g + o.g, self.h + o.h)
        return Jet2(self.v + o, self.g, self.h)

    __radd__ = __add__

    def __sub__(self, o):
        if type(o) is Jet2:
            return Jet2(self.v - o.v, self.g - o.g, self.h - o.h)
        return Jet2(self.v - o, self.g, self.h)

    def __rsub__(self, o):
        return Jet2(o - self.v, -self.g, -self.h)

    def __neg__(self):
        return Jet2(-self.v, -self.g, -self.h)

    def __pos__(self):
        return self

    def __mul__(self, o):
        if type(o) is Jet2:
            cross = _outer(self.g, o.g)
            return Jet2(
                self.v * o.v,
                self.g * o.v + o.g * self.v,
                self.h * o.v + o.h * self.v + cross + _transpose(cross),
            )
        return Jet2(self.v * o, self.g * o, self.h * o)

    __rmul__ = __mul__

    def reciprocal(self) -> Jet2:
        r = 1.0 / self.v
        return self._chain(r, -r * r, 2.0 * r * r * r)

    def __truediv__(self, o):
        if type(o) is Jet2:
            return self * o.reciprocal()
        return Jet2(self.v / o, self.g / o, self.h / o)

    def __rtruediv__(self, o):
        return self.reciprocal() * o

    def __pow__(self, c):
        if type(c) is Jet2 or type(c) is Dual:
            raise TypeError("exponent must be a constant")
        if c == 0:
            return 1.0
        v = self.v
        return self._chain(v**c, c * v ** (c - 1), c * (c - 1) * v ** (c - 2) if c != 1 else 0.0)


def _outer(a: Any, b: Any) -> Any:
    return linear(lambda x: x[:, None], a) * linear(lambda x: x[None, :], b)


def _transpose(a: Any) -> Any:
    return linear(lambda x: np.swapaxes(x, 0, 1), a)


# ---------------------------------------------------------------- elementary functions


def _check(cond_fail: Any, message: str) -> None:
    if np.any(cond_fail):
        raise DomainError(message)


def sin(x):
    tx = type(x)
    if tx is Dual:
        return Dual(x.tag, sin(x.p), cos(x.p) * x.t)
    if tx is Jet2:
        s = sin(x.v)
        return x._chain(s, cos(x.v), -s)
    return np.sin(x)


def cos(x):
    tx = type(x)
    if tx is Dual:
        return Dual(x.tag, cos(x.p), -sin(x.p) * x.t)
    if tx is Jet2:
        c = cos(x.v)
        return x._chain(c, -sin(x.v), -c)
    return np.cos(x)


def tan(x):
    _check(np.isclose(np.cos(primal(x)), 0.0, atol=1e-15), "tan at a pole")
    tx = type(x)
    if tx is Dual:
        t = tan(x.p)
        return Dual(x.tag, t, (1.0 + t * t) * x.t)
    if tx is Jet2:
        t = tan(x.v)
        d1 = 1.0 + t * t
        return x._chain(t, d1, 2.0 * t * d1)
    return np.tan(x)


def exp(x):
    tx = type(x)
    if tx is Dual:
        e = exp(x.p)
        return Dual(x.tag, e, e * x.t)
    if tx is Jet2:
        e = exp(x.v)
        return x._chain(e, e, e)
    return np.exp(x)


def log(x):
    _check(primal(x) <= 0, "log of a non-positive value")
    tx = type(x)
    if tx is Dual:
        return Dual(x.tag, log(x.p), x.t / x.p)
    if tx is Jet2:
        r = 1.0 / x.v
        return x._chain(log(x.v), r, -r * r)
    return np.log(x)


def sqrt(x):
    tx = type(x)
    if tx is Dual:
        _check(primal(x) <= 0, "sqrt is not differentiable at non-positive values")
        s = sqrt(x.p)
        return Dual(x.tag, s, x.t / (2.0 * s))
    if tx is Jet2:
        _check(primal(x) <= 0, "sqrt is not differentiable at non-positive values")
        s = sqrt(x.v)
        return x._chain(s, 0.5 / s, -0.25 / (s * s * s))
    _check(np.asarray(x) < 0, "sqrt of a negative value")
    return np.sqrt(x)


def atan2(y, x):
    py, px = primal(y), primal(x)
    _check((np.asarray(py) == 0) & (np.asarray(px) == 0), "atan2(0, 0)")
    if type(y) is Jet2 or type(x) is Jet2:
        return _atan2_jet(y, x)
    top = max(tag_of(y), tag_of(x))
    if top == 0:
        return np.arctan2(y, x)
    yp, yt = (y.p, y.t) if tag_of(y) == top else (y, None)
    xp, xt = (x.p, x.t) if tag_of(x) == top else (x, None)
    r2 = xp * xp + yp * yp
    t = 0.0
    if yt is not None:
        t = t + xp * yt / r2
    if xt is not None:
        t = t - yp * xt / r2
    return Dual(top, atan2(yp, xp), t)


def _atan2_jet(y, x) -> Jet2:
    if type(y) is not Jet2:
        y = Jet2.constant(y, len(x.g))
    if type(x) is not Jet2:
        x = Jet2.constant(x, len(y.g))
    r2 = x.v * x.v + y.v * y.v
    r4 = r2 * r2
    fy = x.v / r2
    fx = -y.v / r2
    fyy = -2.0 * x.v * y.v / r4
    fxx = 2.0 * x.v * y.v / r4
    fxy = (y.v * y.v - x.v * x.v) / r4
    cross = _outer(x.g, y.g)
    h = (
        fy * y.h
        + fx * x.h
        + fyy * _outer(y.g, y.g)
        + fxx * _outer(x.g, x.g)
        + fxy * (cross + _transpose(cross))
    )
    return Jet2(atan2(y.v, x.v), fy * y.g + fx * x.g, h)


def divide(a, b):
    _check(np.asarray(primal(b)) == 0, "division by zero")
    return a / b


def power(a, c: float):
    base = np.asarray(primal(a))
    if float(c).is_integer():
        if c < 0:
            _check(base == 0, "negative power of zero")
        return a ** int(c)
    _check(base < 0, "fractional power of a negative value")
    if type(a) is Dual or type(a) is Jet2:
        _check(base == 0, "fractional power is not differentiable at zero")
    return a**c


FUNCTIONS = {
    "sin": (sin, 1),
    "cos": (cos, 1),
    "tan": (tan, 1),
    "exp": (exp, 1),
    "log": (log, 1),
    "sqrt": (sqrt, 1),
    "atan2": (atan2, 2),
}
