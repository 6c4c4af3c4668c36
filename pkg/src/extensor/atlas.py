"""Charts, transition maps and their first and second derivatives.

For a transition from chart coordinates ``x`` to ``x~``:

* ``T[i, j] = d x~^i / d x^j`` and ``S[i, j] = d x^i / d x~^j``;
* ``theta[k, i, j]  = sum_h S[k, h] d^2 x~^h / dx^i dx^j``;
* ``theta_tilde[k, i, j] = sum_h T[k, h] d^2 x^h / dx~^i dx~^j``.

Both transition directions are written in the variables ``x1 .. xn`` of
their own source chart.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from . import jets
from .errors import SingularJacobian, ValidationError
from .smoothexpr import CompiledExpr, Expr, as_expr, check_variables, coordinate_variable, eval_jet2

SINGULAR_TOLERANCE = 1e-12


@dataclass(frozen=True)
class Chart:
    name: str
    dim: int
    sample_points: tuple[tuple[float, ...], ...] = ()
    box: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        pts = tuple(tuple(float(c) for c in p) for p in self.sample_points)
        for p in pts:
            if len(p) != self.dim:
                raise ValidationError(f"chart {self.name}: sample point {p} is not {self.dim}-dimensional")
        object.__setattr__(self, "sample_points", pts)
        if self.box is not None:
            box = tuple((float(lo), float(hi)) for lo, hi in self.box)
            if len(box) != self.dim or any(lo > hi for lo, hi in box):
                raise ValidationError(f"chart {self.name}: malformed box {self.box!r}")
            object.__setattr__(self, "box", box)

    @property
    def variables(self) -> list[str]:
        return [coordinate_variable(i + 1) for i in range(self.dim)]

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """`count` base points: uniform in the box, else cycled sample points."""
        if self.box is not None:
            lo = np.array([b[0] for b in self.box])
            hi = np.array([b[1] for b in self.box])
            return lo + (hi - lo) * rng.random((count, self.dim))
        if not self.sample_points:
            raise ValidationError(f"chart {self.name} has neither sample points nor a box")
        pts = np.array(self.sample_points)
        return pts[np.arange(count) % len(pts)]


@dataclass(frozen=True)
class Transition:
    source: str
    target: str
    dim: int
    forward: tuple[Expr, ...]
    backward: tuple[Expr, ...]
    _fwd: tuple[CompiledExpr, ...] = field(init=False, repr=False, compare=False)
    _bwd: tuple[CompiledExpr, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        fwd = tuple(as_expr(e) for e in self.forward)
        bwd = tuple(as_expr(e) for e in self.backward)
        if len(fwd) != self.dim or len(bwd) != self.dim:
            raise ValidationError(f"transition {self.source}->{self.target} needs {self.dim} expressions each way")
        allowed = [coordinate_variable(i + 1) for i in range(self.dim)]
        for e in fwd + bwd:
            check_variables(e, allowed, f"transition {self.source}->{self.target}")
        object.__setattr__(self, "forward", fwd)
        object.__setattr__(self, "backward", bwd)
        object.__setattr__(self, "_fwd", tuple(CompiledExpr(e) for e in fwd))
        object.__setattr__(self, "_bwd", tuple(CompiledExpr(e) for e in bwd))

    def inverse(self) -> Transition:
        inv = self.__dict__.get("_inverse")
        if inv is None:
            inv = Transition(self.target, self.source, self.dim, self.backward, self.forward)
            object.__setattr__(self, "_inverse", inv)
            object.__setattr__(inv, "_inverse", self)
        return inv

    def _env(self, point: Any) -> dict[str, Any]:
        return {coordinate_variable(i + 1): point[i] for i in range(self.dim)}

    def apply(self, point: Any) -> Any:
        """Image coordinates as an array (or perturbed array)."""
        env = self._env(point)
        return jets.stack([f(env) for f in self._fwd])

    def apply_inverse(self, point: Any) -> Any:
        env = self._env(point)
        return jets.stack([f(env) for f in self._bwd])


@dataclass(frozen=True)
class TransitionData:
    point: Any
    image: Any
    S: Any
    T: Any
    theta: Any
    theta_tilde: Any
    hess_forward: Any  # [h, i, j] = d^2 x~^h / dx^i dx^j
    hess_backward: Any  # [h, i, j] = d^2 x^h / dx~^i dx~^j


def _jets(exprs: Sequence[Expr], point: Any, dim: int):
    names = [coordinate_variable(i + 1) for i in range(dim)]
    env = {name: point[i] for i, name in enumerate(names)}
    out = [eval_jet2(e, env, names) for e in exprs]
    value = jets.stack([j.v for j in out])
    grad = jets.stack([j.g for j in out])
    hess = jets.stack([j.h for j in out])
    return value, grad, hess


def transition_data(t: Transition, point: Any) -> TransitionData:
    """Jacobians and theta-parameters of `t` at a (possibly perturbed) point."""
    image, T, hf = _jets(t.forward, point, t.dim)
    det = np.linalg.det(np.asarray(jets.primal(T), dtype=float))
    if not np.all(np.abs(det) >= SINGULAR_TOLERANCE):
        raise SingularJacobian(f"transition {t.source}->{t.target} is singular at {jets.primal(point)}")
    _, S, hb = _jets(t.backward, image, t.dim)
    theta = jets.einsum("kh...,hij...->kij...", S, hf)
    theta_tilde = jets.einsum("kh...,hij...->kij...", T, hb)
    return TransitionData(point, image, S, T, theta, theta_tilde, hf, hb)


def theta_from_jacobian_derivatives(d: TransitionData) -> tuple[Any, Any]:
    """theta and theta_tilde via minus the derivative of a Jacobian times the other one.

    Uses the forward second derivatives for theta_tilde and the backward ones
    for theta, the opposite pairing from `transition_data`.
    """
    dT = jets.einsum("kha...,ai...->khi...", d.hess_forward, d.S)  # d T[k,h] / d x~^i
    theta_tilde = -jets.einsum("khi...,hj...->kij...", dT, d.S)
    dS = jets.einsum("kha...,ai...->khi...", d.hess_backward, d.T)  # d S[k,h] / d x^i
    theta = -jets.einsum("khi...,hj...->kij...", dS, d.T)
    return theta, theta_tilde


def theta_duality_residuals(d: TransitionData) -> tuple[float, float]:
    """Residuals of expressing theta through theta_tilde and back."""
    r1 = d.theta + jets.einsum("hpq...,kh...,pi...,qj...->kij...", d.theta_tilde, d.S, d.T, d.T)
    r2 = d.theta_tilde + jets.einsum("hpq...,kh...,pi...,qj...->kij...", d.theta, d.T, d.S, d.S)
    return _max(r1), _max(r2)


def check_theta_duality(t: Transition, points: Sequence[Any]) -> list[dict[str, float]]:
    """Per-point residuals of the theta identities."""
    out = []
    for p in points:
        d = transition_data(t, np.asarray(p, dtype=float))
        th, tht = theta_from_jacobian_derivatives(d)
        du1, du2 = theta_duality_residuals(d)
        out.append(
            {
                "symmetry": max(_max(d.theta - np.swapaxes(d.theta, 1, 2)),
                                _max(d.theta_tilde - np.swapaxes(d.theta_tilde, 1, 2))),
                "jacobian_route": max(_max(th - d.theta), _max(tht - d.theta_tilde)),
                "duality": max(du1, du2),
                "inverse": max(_max(d.S @ d.T - np.eye(t.dim)), _max(d.T @ d.S - np.eye(t.dim))),
                "round_trip": _max(t.apply_inverse(d.image) - d.point),
            }
        )
    return out


def _max(x: Any) -> float:
    arr = np.asarray(jets.primal(x), dtype=float)
    return float(np.max(np.abs(arr))) if arr.size else 0.0
