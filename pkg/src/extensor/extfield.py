"""Extended tensor fields: tensor-valued functions of a bundle point.

Every field exposes ``evaluate(q) -> Tensor``. Evaluation is written against
generic scalars, so a field can be evaluated at a perturbed point and its
derivatives read off the result. Derived fields (covariant derivatives,
commutators, ...) are plain closures over other fields and can therefore be
differentiated again.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np

from . import jets
from .atlas import Transition
from .bundle import BundleSpec, BundleTangent, FiberPoint, transform_fiber_point, transform_tensor_components
from .errors import ShapeMismatch, ValidationError
from .multitensor import (
    Tensor,
    Valence,
    act,
    as_valence,
    contract,
    multi_indices,
    parse_index_key,
    tensor_product,
)
from .smoothexpr import CompiledExpr, Num, as_expr, check_variables, variables


class ExtendedField(ABC):
    spec: BundleSpec
    valence: Valence
    name: str

    @abstractmethod
    def evaluate(self, q: FiberPoint) -> Tensor: ...

    def __call__(self, q: FiberPoint) -> Tensor:
        return self.evaluate(q)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.spec.dim,) * self.valence.rank

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.name} {self.valence}>"


class ExprField(ExtendedField):
    """Field with one smooth expression per component."""

    def __init__(self, spec: BundleSpec, valence: Any, components: np.ndarray, name: str = "field"):
        self.spec = spec
        self.valence = as_valence(valence)
        self.name = name
        comps = np.empty(self.shape, dtype=object)
        given = np.asarray(components, dtype=object)
        if given.shape != self.shape:
            raise ShapeMismatch(f"field {name}: expected component array of shape {self.shape}, got {given.shape}")
        allowed = spec.variable_names
        for idx in multi_indices(spec.dim, self.valence.rank):
            e = as_expr(given[idx])
            check_variables(e, allowed, f"field {name}")
            comps[idx] = e
        self.components = comps
        self._compiled = [CompiledExpr(e) for e in comps.reshape(-1)]

    @classmethod
    def from_map(cls, spec: BundleSpec, valence: Any, mapping: Mapping[str, Any], name: str = "field") -> ExprField:
        valence = as_valence(valence)
        comps = np.empty((spec.dim,) * valence.rank, dtype=object)
        comps.fill(Num(0.0))
        for key, value in mapping.items():
            comps[parse_index_key(key, valence, spec.dim)] = as_expr(value)
        return cls(spec, valence, comps, name)

    @property
    def variables(self) -> set[str]:
        out: set[str] = set()
        for e in self.components.reshape(-1):
            out |= variables(e)
        return out

    def evaluate(self, q: FiberPoint) -> Tensor:
        env = q.bindings
        values = [c.constant if c.constant is not None else c(env) for c in self._compiled]
        if self.valence.rank == 0:
            return Tensor(self.spec.dim, self.valence, values[0])
        shape = self.shape
        data = jets.linear(lambda a: a.reshape(shape + a.shape[1:]), jets.stack(values))
        return Tensor(self.spec.dim, self.valence, data)


class FunctionField(ExtendedField):
    """Field computed by a Python function of the bundle point."""

    def __init__(self, spec: BundleSpec, valence: Any, fn: Callable[[FiberPoint], Tensor], name: str = "derived"):
        self.spec = spec
        self.valence = as_valence(valence)
        self.fn = fn
        self.name = name

    def evaluate(self, q: FiberPoint) -> Tensor:
        out = self.fn(q)
        if not isinstance(out, Tensor):
            out = Tensor(self.spec.dim, self.valence, out)
        if out.valence != self.valence:
            raise ShapeMismatch(f"{self.name} produced valence {out.valence}, declared {self.valence}")
        return out


def constant_field(spec: BundleSpec, value: Tensor, name: str = "constant") -> ExtendedField:
    return FunctionField(spec, value.valence, lambda q: value, name)


def zero_field(spec: BundleSpec, valence: Any) -> ExtendedField:
    valence = as_valence(valence)
    return constant_field(spec, Tensor.zeros(spec.dim, valence), "zero")


def coordinate_field(spec: BundleSpec, i: int) -> ExtendedField:
    """The scalar field x^i (0-based i)."""
    return FunctionField(spec, Valence(0, 0), lambda q: Tensor(spec.dim, Valence(0, 0), q.base[i]), f"x{i + 1}")


def fiber_component_field(spec: BundleSpec, P: int, idx: Sequence[int]) -> ExtendedField:
    """The scalar field picking one component of T[P] (0-based)."""
    idx = tuple(idx)
    return FunctionField(spec, Valence(0, 0), lambda q: Tensor(spec.dim, Valence(0, 0), q.args[P].data[idx]), "T")


def basis_vector_field(spec: BundleSpec, i: int) -> ExtendedField:
    e = np.zeros(spec.dim)
    e[i] = 1.0
    return constant_field(spec, Tensor(spec.dim, Valence(1, 0), e), f"E{i + 1}")


# ---------------------------------------------------------------- pointwise algebra


def _same_spec(*fields: ExtendedField) -> BundleSpec:
    spec = fields[0].spec
    for f in fields[1:]:
        if f.spec != spec:
            raise ShapeMismatch("fields live on different bundles")
    return spec


def add_fields(a: ExtendedField, b: ExtendedField) -> ExtendedField:
    spec = _same_spec(a, b)
    if a.valence != b.valence:
        raise ShapeMismatch(f"cannot add valence {a.valence} and {b.valence}")
    return FunctionField(spec, a.valence, lambda q: a.evaluate(q) + b.evaluate(q), f"({a.name}+{b.name})")


def sub_fields(a: ExtendedField, b: ExtendedField) -> ExtendedField:
    spec = _same_spec(a, b)
    if a.valence != b.valence:
        raise ShapeMismatch(f"cannot subtract valence {b.valence} from {a.valence}")
    return FunctionField(spec, a.valence, lambda q: a.evaluate(q) - b.evaluate(q), f"({a.name}-{b.name})")


def scale_field(c: Any, a: ExtendedField) -> ExtendedField:
    """Multiply by a number or by a scalar field."""
    if isinstance(c, ExtendedField):
        if c.valence != Valence(0, 0):
            raise ShapeMismatch("scaling field must be a scalar")
        return FunctionField(a.spec, a.valence, lambda q: a.evaluate(q) * c.evaluate(q).data, f"{c.name}*{a.name}")
    return FunctionField(a.spec, a.valence, lambda q: a.evaluate(q) * c, f"{c}*{a.name}")


def product_fields(a: ExtendedField, b: ExtendedField) -> ExtendedField:
    spec = _same_spec(a, b)
    v = Valence(a.valence.r + b.valence.r, a.valence.s + b.valence.s)
    return FunctionField(spec, v, lambda q: tensor_product(a.evaluate(q), b.evaluate(q)), f"({a.name}*{b.name})")


def contract_field(a: ExtendedField, upper: int, lower: int) -> ExtendedField:
    v = Valence(a.valence.r - 1, a.valence.s - 1)
    if v.r < 0 or v.s < 0:
        raise ShapeMismatch(f"cannot contract valence {a.valence}")
    return FunctionField(a.spec, v, lambda q: contract(a.evaluate(q), upper, lower), f"C({a.name})")


def act_field(g: ExtendedField, a: ExtendedField) -> ExtendedField:
    """Pointwise algebraic action of a (1,1) field on another field."""
    if g.valence != Valence(1, 1):
        raise ShapeMismatch("acting field must have valence (1,1)")
    return FunctionField(a.spec, a.valence, lambda q: act(g.evaluate(q).data, a.evaluate(q)), f"{g.name}.{a.name}")


# ---------------------------------------------------------------- differentiation


def directional(f: ExtendedField, q: FiberPoint, w: BundleTangent) -> Tensor:
    """Derivative of `f` at `q` along the bundle tangent `w`."""
    return value_and_directional(f, q, w)[1]


def value_and_directional(f: ExtendedField, q: FiberPoint, w: BundleTangent) -> tuple[Tensor, Tensor]:
    tag = jets.new_tag()
    with jets.nested_derivative():
        out = f.evaluate(q.displaced(w, tag))
    n = f.spec.dim
    return (
        Tensor(n, f.valence, jets.value_of(out.data, tag)),
        Tensor(n, f.valence, jets.tangent_of(out.data, tag)),
    )


def _basis_tangent(spec: BundleSpec, slot: int | None, idx: tuple[int, ...]) -> BundleTangent:
    if slot is None:
        u = np.zeros(spec.dim)
        u[idx] = 1.0
        return BundleTangent.make(spec, u=u)
    v: list[Any] = [None] * spec.Q
    e = np.zeros(spec.slot_shape(slot))
    e[idx] = 1.0
    v[slot] = e
    return BundleTangent.make(spec, v=v)


def partials(f: ExtendedField, q: FiberPoint) -> tuple[Any, list[Any]]:
    """All first partial derivatives of `f` at `q`.

    Returns ``(dx, dT)`` where ``dx`` has the component axes of `f` followed
    by one base axis, and ``dT[P]`` has the component axes of `f` followed by
    the axes of slot P.
    """
    spec = f.spec
    rank = f.valence.rank
    dx = [directional(f, q, _basis_tangent(spec, None, (i,))).data for i in range(spec.dim)]
    dx_arr = jets.stack(dx, axis=rank)
    dT = []
    for P in range(spec.Q):
        shape = spec.slot_shape(P)
        cols = [directional(f, q, _basis_tangent(spec, P, idx)).data for idx in multi_indices(spec.dim, len(shape))]
        if not shape:
            dT.append(cols[0])
            continue
        stacked = jets.stack(cols, axis=rank)
        dT.append(jets.linear(lambda a, shape=shape: a.reshape(a.shape[:rank] + shape + a.shape[rank + 1 :]), stacked))
    return dx_arr, dT


def fiber_differential(f: ExtendedField, P: int) -> ExtendedField:
    """Derivatives of `f` against every component of T[P].

    Result valence is ``(a + s_P, b + r_P)`` with new upper slots holding the
    lower indices of T[P] and new lower slots holding its upper indices:
    component ``[I, K, J, H]`` is ``d f[I, J] / d T[P][H, K]``.
    """
    spec = f.spec
    rP, sP = spec.slot(P)
    a, b = f.valence
    out_v = Valence(a + sP, b + rP)

    def fn(q: FiberPoint) -> Tensor:
        cols = [directional(f, q, _basis_tangent(spec, P, idx)).data for idx in multi_indices(spec.dim, rP + sP)]
        if rP + sP == 0:
            return Tensor(spec.dim, out_v, cols[0])
        stacked = jets.stack(cols, axis=a + b)
        n = spec.dim

        def arrange(arr):
            arr = arr.reshape(arr.shape[: a + b] + (n,) * (rP + sP) + arr.shape[a + b + 1 :])
            # axes now: I (a), J (b), H (rP), K (sP), batch
            order = (
                list(range(a))
                + list(range(a + b + rP, a + b + rP + sP))
                + list(range(a, a + b))
                + list(range(a + b, a + b + rP))
            )
            order += list(range(a + b + rP + sP, arr.ndim))
            return np.transpose(arr, order)

        return Tensor(n, out_v, jets.linear(arrange, stacked))

    return FunctionField(spec, out_v, fn, f"dT{P + 1}({f.name})")


# ---------------------------------------------------------------- chart changes


def transport(f: ExtendedField, t: Transition, name: str | None = None) -> ExtendedField:
    """The same field written in the target chart of `t`."""
    back = t.inverse()

    def fn(q_tilde: FiberPoint) -> Tensor:
        q, d = transform_fiber_point(f.spec, back, q_tilde)
        return transform_tensor_components(f.evaluate(q), d.S, d.T, "from_tilde")

    return FunctionField(f.spec, f.valence, fn, name or f"{f.name}@{t.target}")


@dataclass(frozen=True)
class Residuals:
    check: str
    values: tuple[float, ...]

    @property
    def max(self) -> float:
        return max(self.values) if self.values else 0.0

    def passes(self, tol: float) -> bool:
        return all(np.isfinite(v) and v <= tol for v in self.values)


def tensor_residual(a: Tensor, b: Tensor) -> float:
    if a.valence != b.valence or a.dim != b.dim:
        raise ShapeMismatch(f"cannot compare valence {a.valence} with {b.valence}")
    diff = np.asarray(jets.primal(a.data), dtype=float) - np.asarray(jets.primal(b.data), dtype=float)
    return float(np.max(np.abs(diff))) if diff.size else 0.0


def check_tensoriality(
    f_untilded: ExtendedField, f_tilded: ExtendedField, t: Transition, probes: Iterable[FiberPoint]
) -> Residuals:
    """Do the two fields agree up to the tensor transformation law?"""
    values = []
    for q in probes:
        q_tilde, d = transform_fiber_point(f_untilded.spec, t, q)
        expected = transform_tensor_components(f_untilded.evaluate(q), d.S, d.T, "to_tilde")
        values.append(tensor_residual(f_tilded.evaluate(q_tilde), expected))
    return Residuals(f"tensoriality:{f_untilded.name}", tuple(values))


def field_from_map(spec: BundleSpec, valence: Any, mapping: Mapping[str, Any], name: str = "field") -> ExprField:
    try:
        return ExprField.from_map(spec, valence, mapping, name)
    except ValidationError as exc:
        raise ValidationError(f"field {name}: {exc}") from None
