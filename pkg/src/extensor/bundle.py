"""The composite bundle: base coordinates plus Q tensor arguments.

A point of the bundle is a base point ``x`` together with one tensor
``T[P]`` of valence ``(r_P, s_P)`` per argument slot ``P``. Tangent vectors
are written against the frame ``U_i`` (base directions) and ``V[P]`` (fiber
directions of slot P).
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

import numpy as np

from . import jets
from .atlas import Transition, TransitionData, transition_data
from .errors import ShapeMismatch, SlotOutOfRange, ValidationError
from .multitensor import Tensor, Valence, act, as_valence, change_basis, multi_indices
from .smoothexpr import coordinate_variable, fiber_variable


@dataclass(frozen=True)
class BundleSpec:
    dim: int
    types: tuple[Valence, ...] = ()

    def __post_init__(self):
        if self.dim < 1:
            raise ValidationError("dimension must be positive")
        object.__setattr__(self, "types", tuple(as_valence(v) for v in self.types))

    @property
    def Q(self) -> int:
        return len(self.types)

    def slot(self, P: int) -> Valence:
        if not 0 <= P < self.Q:
            raise SlotOutOfRange(f"argument slot {P} out of range (Q = {self.Q})")
        return self.types[P]

    def slot_shape(self, P: int) -> tuple[int, ...]:
        return (self.dim,) * self.slot(P).rank

    @property
    def fiber_dim(self) -> int:
        return sum(self.dim**v.rank for v in self.types)

    @property
    def total_dim(self) -> int:
        return self.dim + self.fiber_dim

    def coordinate_names(self) -> list[str]:
        return [coordinate_variable(i + 1) for i in range(self.dim)]

    def slot_names(self, P: int) -> list[tuple[tuple[int, ...], str]]:
        """(0-based multi-index, variable name) for each component of slot P."""
        self.slot(P)
        return list(self._slot_names[P])

    @functools.cached_property
    def _slot_names(self) -> tuple[tuple[tuple[tuple[int, ...], str], ...], ...]:
        out = []
        for r, s in self.types:
            names = []
            for idx in multi_indices(self.dim, r + s):
                names.append((idx, fiber_variable(len(out) + 1, [i + 1 for i in idx[:r]], [i + 1 for i in idx[r:]])))
            out.append(tuple(names))
        return tuple(out)

    @functools.cached_property
    def variable_names(self) -> tuple[str, ...]:
        names = self.coordinate_names()
        for P in range(self.Q):
            names.extend(name for _, name in self.slot_names(P))
        return tuple(names)

    def point(self, base: Any, args: Sequence[Any] = ()) -> FiberPoint:
        base = jets.asdata(base)
        if len(args) != self.Q:
            raise ShapeMismatch(f"expected {self.Q} fiber arguments, got {len(args)}")
        tensors = []
        for P, a in enumerate(args):
            if not isinstance(a, Tensor):
                a = Tensor(self.dim, self.types[P], np.asarray(a, dtype=float).reshape(self.slot_shape(P)))
            if a.valence != self.types[P] or a.dim != self.dim:
                raise ShapeMismatch(f"argument {P} has valence {a.valence}, expected {self.types[P]}")
            tensors.append(a)
        return FiberPoint(self, base, tuple(tensors))

    def unflatten(self, vector: Sequence[float]) -> FiberPoint:
        v = np.asarray(vector, dtype=float)
        if v.shape != (self.total_dim,):
            raise ShapeMismatch(f"expected {self.total_dim} coordinates, got {v.shape}")
        args = []
        offset = self.dim
        for P in range(self.Q):
            size = self.dim ** self.types[P].rank
            args.append(v[offset : offset + size].reshape(self.slot_shape(P)))
            offset += size
        return self.point(v[: self.dim], args)

    def random_point(self, rng: np.random.Generator, base: Sequence[float], scale: float = 1.0) -> FiberPoint:
        args = [rng.uniform(-scale, scale, self.slot_shape(P)) for P in range(self.Q)]
        return self.point(np.asarray(base, dtype=float), args)


@dataclass(frozen=True, eq=False)
class FiberPoint:
    spec: BundleSpec
    base: Any
    args: tuple[Tensor, ...]

    @functools.cached_property
    def bindings(self) -> dict[str, Any]:
        env: dict[str, Any] = {}
        prune = jets.prune
        for i, name in enumerate(self.spec.coordinate_names()):
            env[name] = prune(self.base[i])
        for P, arg in enumerate(self.args):
            data = arg.data
            for idx, name in self.spec._slot_names[P]:
                env[name] = prune(data[idx])
        return env

    def flatten(self) -> np.ndarray:
        parts = [np.asarray(jets.primal(self.base), dtype=float).reshape(-1)]
        parts.extend(a.components for a in self.args)
        return np.concatenate(parts)

    def displaced(self, w: BundleTangent, tag: int) -> FiberPoint:
        """The point perturbed by ``eps * w`` under perturbation `tag`."""
        base = jets.perturb(self.base, tag, w.u.data)
        args = tuple(
            Tensor(a.dim, a.valence, jets.perturb(a.data, tag, v.data)) for a, v in zip(self.args, w.v)
        )
        return FiberPoint(self.spec, base, args)


@dataclass(frozen=True)
class BundleTangent:
    """Components of a tangent vector against the frame (U_i, V[P])."""

    u: Tensor
    v: tuple[Tensor, ...]

    @classmethod
    def make(cls, spec: BundleSpec, u: Any = None, v: Sequence[Any] | None = None) -> BundleTangent:
        ut = u if isinstance(u, Tensor) else Tensor(spec.dim, Valence(1, 0), np.zeros(spec.dim) if u is None else u)
        vs = []
        for P in range(spec.Q):
            given = None if v is None else v[P]
            if isinstance(given, Tensor):
                vs.append(given)
            elif given is None:
                vs.append(Tensor.zeros(spec.dim, spec.types[P]))
            else:
                vs.append(Tensor(spec.dim, spec.types[P], given))
        return cls(ut, tuple(vs))

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.u.components] + [x.components for x in self.v])


def transform_tensor_components(x: Tensor, S: Any, T: Any, direction: str = "to_tilde") -> Tensor:
    """Change tensor components between charts.

    ``to_tilde`` applies T to upper slots and S to lower slots; ``from_tilde``
    does the reverse, recovering untilded components from tilded ones.
    """
    if direction == "to_tilde":
        return change_basis(x, T, S)
    if direction == "from_tilde":
        return change_basis(x, S, T)
    raise ValidationError(f"unknown direction {direction!r}")


def transform_fiber_point(spec: BundleSpec, t: Transition, q: FiberPoint) -> tuple[FiberPoint, TransitionData]:
    """Coordinates of `q` in the target chart of `t`, plus the transition data used."""
    d = transition_data(t, q.base)
    args = tuple(transform_tensor_components(a, d.S, d.T, "to_tilde") for a in q.args)
    return FiberPoint(spec, d.image, args), d


def theta_along(theta: Any, u: Any) -> Any:
    """The endomorphism ``k, h -> sum_a theta[k, a, h] u[a]``."""
    return jets.einsum("kah...,a...->kh...", theta, u)


def transform_bundle_tangent(
    spec: BundleSpec, t: Transition, q: FiberPoint, w: BundleTangent, direction: str = "to_tilde"
) -> BundleTangent:
    """Tangent components in the frame of the other chart.

    For ``to_tilde``, `q` is a point of the source chart and the result uses
    the target frame. For ``from_tilde``, `q` and `w` belong to the target
    chart and the result uses the source frame. Fiber components pick up a
    correction from the theta-parameters proportional to the base component.
    """
    if direction == "from_tilde":
        return transform_bundle_tangent(spec, t.inverse(), q, w, "to_tilde")
    if direction != "to_tilde":
        raise ValidationError(f"unknown direction {direction!r}")
    d = transition_data(t, q.base)
    theta_u = theta_along(d.theta, w.u.data)
    u = Tensor(spec.dim, Valence(1, 0), jets.einsum("ih...,h...->i...", d.T, w.u.data))
    v = tuple(
        transform_tensor_components(vp + act(theta_u, tp), d.S, d.T, "to_tilde") for vp, tp in zip(w.v, q.args)
    )
    return BundleTangent(u, v)


def native_field(spec: BundleSpec, P: int):
    """The field whose value at a bundle point is its own argument ``T[P]``."""
    from .extfield import FunctionField

    v = spec.slot(P)
    return FunctionField(spec, v, lambda q: q.args[P], name=f"T{P + 1}")


def vertical_lift(spec: BundleSpec, P: int, Y: Tensor) -> BundleTangent:
    """Tangent vector with fiber component `Y` in slot P and nothing else."""
    spec.slot(P)
    if Y.valence != spec.types[P]:
        raise ShapeMismatch(f"direction has valence {Y.valence}, slot {P} has {spec.types[P]}")
    v = [Y if k == P else Tensor.zeros(spec.dim, spec.types[k]) for k in range(spec.Q)]
    return BundleTangent(Tensor.zeros(spec.dim, Valence(1, 0)), tuple(v))


@dataclass(frozen=True)
class Section:
    """One base-dependent field per argument slot, selecting ``T[P] = T[P](x)``."""

    spec: BundleSpec
    fields: tuple[Any, ...]

    def __post_init__(self):
        if len(self.fields) != self.spec.Q:
            raise ShapeMismatch(f"section needs {self.spec.Q} fields, got {len(self.fields)}")
        for P, f in enumerate(self.fields):
            if f.valence != self.spec.types[P]:
                raise ShapeMismatch(f"section field {P} has valence {f.valence}, expected {self.spec.types[P]}")
            names = getattr(f, "variables", None)
            if names is not None and set(names) - set(self.spec.coordinate_names()):
                raise ValidationError(f"section field {P} depends on fiber variables")

    def point(self, base: Any) -> FiberPoint:
        """The bundle point above `base` selected by the section."""
        blank = FiberPoint(
            self.spec, jets.asdata(base), tuple(Tensor.zeros(self.spec.dim, v) for v in self.spec.types)
        )
        return FiberPoint(self.spec, blank.base, tuple(f.evaluate(blank) for f in self.fields))

    def fiber_independence(self, points: Iterable[FiberPoint]) -> float:
        """Largest change of any section field when only the fiber arguments move."""
        worst = 0.0
        for q in points:
            ref = self.point(q.base)
            for P, f in enumerate(self.fields):
                diff = np.asarray(jets.primal(f.evaluate(q).data - ref.args[P].data))
                worst = max(worst, float(np.max(np.abs(diff))) if diff.size else 0.0)
        return worst
