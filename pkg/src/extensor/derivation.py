"""Differentiations of extended tensor fields.

A differentiation is fixed by three component fields:

* ``Z`` (valence (1,0)): the base part of its direction;
* ``ZP[P]`` (valence of slot P): the fiber part for each argument;
* ``G`` (valence (1,1)): the algebraic part.

It acts on a field ``X`` as the directional derivative of ``X`` along
``(Z, ZP)`` plus the action of ``G`` on every index of ``X``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Sequence

from . import jets
from .atlas import Transition
from .bundle import BundleSpec, BundleTangent, FiberPoint, theta_along, transform_fiber_point, transform_tensor_components
from .errors import ShapeMismatch, ValidationError
from .extfield import (
    ExtendedField,
    FunctionField,
    add_fields,
    basis_vector_field,
    contract_field,
    coordinate_field,
    fiber_component_field,
    product_fields,
    scale_field,
    tensor_residual,
    value_and_directional,
    zero_field,
)
from .multitensor import Tensor, Valence, act, contract, multi_indices, tensor_product


@dataclass(frozen=True)
class DerivationComponents:
    spec: BundleSpec
    Z: ExtendedField
    ZP: tuple[ExtendedField, ...]
    G: ExtendedField

    def __post_init__(self):
        spec = self.spec
        if self.Z.valence != Valence(1, 0):
            raise ShapeMismatch("Z must have valence (1,0)")
        if self.G.valence != Valence(1, 1):
            raise ShapeMismatch("G must have valence (1,1)")
        if len(self.ZP) != spec.Q:
            raise ShapeMismatch(f"expected {spec.Q} fiber components, got {len(self.ZP)}")
        for P, f in enumerate(self.ZP):
            if f.valence != spec.types[P]:
                raise ShapeMismatch(f"ZP[{P}] has valence {f.valence}, slot has {spec.types[P]}")
        object.__setattr__(self, "ZP", tuple(self.ZP))

    def at(self, q: FiberPoint) -> tuple[Tensor, tuple[Tensor, ...], Tensor]:
        return self.Z.evaluate(q), tuple(f.evaluate(q) for f in self.ZP), self.G.evaluate(q)

    def direction(self, q: FiberPoint) -> BundleTangent:
        return BundleTangent(self.Z.evaluate(q), tuple(f.evaluate(q) for f in self.ZP))


def apply_derivation(d: DerivationComponents, f: ExtendedField) -> ExtendedField:
    """The field obtained by differentiating `f` with `d`."""

    def fn(q: FiberPoint) -> Tensor:
        Z, ZP, G = d.at(q)
        value, slope = value_and_directional(f, q, BundleTangent(Z, ZP))
        return slope + act(G.data, value)

    return FunctionField(f.spec, f.valence, fn, f"D({f.name})")


def degenerate_from_tensor(S: ExtendedField) -> DerivationComponents:
    """The purely algebraic differentiation induced by a (1,1) field."""
    spec = S.spec
    if S.valence != Valence(1, 1):
        raise ShapeMismatch("degenerate differentiation needs a (1,1) field")
    return DerivationComponents(
        spec,
        zero_field(spec, Valence(1, 0)),
        tuple(zero_field(spec, v) for v in spec.types),
        S,
    )


def sum_derivations(*ds: DerivationComponents) -> DerivationComponents:
    if not ds:
        raise ValidationError("nothing to add")
    out = ds[0]
    for d in ds[1:]:
        out = DerivationComponents(
            out.spec,
            add_fields(out.Z, d.Z),
            tuple(add_fields(a, b) for a, b in zip(out.ZP, d.ZP)),
            add_fields(out.G, d.G),
        )
    return out


def commute(d1: DerivationComponents, d2: DerivationComponents, f: ExtendedField, q: FiberPoint) -> Tensor:
    """``(d1 d2 - d2 d1) f`` at `q`."""
    return commutator_field(d1, d2, f).evaluate(q)


def commutator_field(d1: DerivationComponents, d2: DerivationComponents, f: ExtendedField) -> ExtendedField:
    a = apply_derivation(d1, apply_derivation(d2, f))
    b = apply_derivation(d2, apply_derivation(d1, f))
    return FunctionField(f.spec, f.valence, lambda q: a.evaluate(q) - b.evaluate(q), f"[D,D]({f.name})")


# ---------------------------------------------------------------- transformation law


def transform_component_values(
    Z: Tensor, ZP: Sequence[Tensor], G: Tensor, theta_tilde: Any, S: Any, T: Any, target_args: Sequence[Tensor]
) -> tuple[Tensor, tuple[Tensor, ...], Tensor]:
    """Component values in the target chart.

    `S`, `T` and `theta_tilde` are transition data from source to target at
    the point; `target_args` are the fiber arguments in target coordinates.
    """
    n = Z.dim
    Zt = Tensor(n, Valence(1, 0), jets.einsum("ih...,h...->i...", T, Z.data))
    corr = theta_along(theta_tilde, Zt.data)
    ZPt = tuple(
        transform_tensor_components(zp, S, T, "to_tilde") - act(corr, arg) for zp, arg in zip(ZP, target_args)
    )
    Gt = transform_tensor_components(G, S, T, "to_tilde") + Tensor(n, Valence(1, 1), corr)
    return Zt, ZPt, Gt


def transform_derivation_components(
    d: DerivationComponents, t: Transition, q: FiberPoint, direction: str = "to_tilde"
) -> tuple[FiberPoint, tuple[Tensor, tuple[Tensor, ...], Tensor]]:
    """Component values of `d` in the other chart.

    For ``to_tilde``, `d` lives on the source chart of `t` and `q` is a source
    point; the values returned belong to the image point. For
    ``from_tilde``, `d` lives on the target chart, `q` is a target point, and
    the values returned are untilded, using the untilded theta-parameters.
    """
    if direction == "to_tilde":
        q_t, data = transform_fiber_point(d.spec, t, q)
        Z, ZP, G = d.at(q)
        return q_t, transform_component_values(Z, ZP, G, data.theta_tilde, data.S, data.T, q_t.args)
    if direction == "from_tilde":
        # the backward transition swaps the roles of S and T and of theta and theta_tilde
        q_u, data = transform_fiber_point(d.spec, t.inverse(), q)
        S, T, theta = data.T, data.S, data.theta_tilde
        Zt, ZPt, Gt = d.at(q)
        n = Zt.dim
        Z = Tensor(n, Valence(1, 0), jets.einsum("ih...,h...->i...", S, Zt.data))
        corr = theta_along(theta, Z.data)
        ZP = tuple(
            transform_tensor_components(zp, S, T, "from_tilde") - act(corr, arg) for zp, arg in zip(ZPt, q_u.args)
        )
        G = transform_tensor_components(Gt, S, T, "from_tilde") + Tensor(n, Valence(1, 1), corr)
        return q_u, (Z, ZP, G)
    raise ValidationError(f"unknown direction {direction!r}")


def transform_derivation(d: DerivationComponents, t: Transition) -> DerivationComponents:
    """The same differentiation with component fields written in the target chart."""
    back = t.inverse()
    spec = d.spec

    def values(q_t: FiberPoint):
        q, _ = transform_fiber_point(spec, back, q_t)
        return transform_derivation_components(d, t, q, "to_tilde")[1]

    Z = FunctionField(spec, Valence(1, 0), lambda q: values(q)[0], "Z~")
    ZP = tuple(
        FunctionField(spec, spec.types[P], lambda q, P=P: values(q)[1][P], f"ZP~{P + 1}") for P in range(spec.Q)
    )
    G = FunctionField(spec, Valence(1, 1), lambda q: values(q)[2], "G~")
    return DerivationComponents(spec, Z, ZP, G)


# ---------------------------------------------------------------- component recovery and axioms


def recover_components(d: DerivationComponents, q: FiberPoint) -> tuple[Tensor, tuple[Tensor, ...], Tensor]:
    """Read off components from the action on coordinate fields and basis vectors."""
    spec = d.spec
    n = spec.dim
    Z = jets.stack([apply_derivation(d, coordinate_field(spec, i)).evaluate(q).data for i in range(n)])
    ZP = []
    for P in range(spec.Q):
        shape = spec.slot_shape(P)
        vals = [
            apply_derivation(d, fiber_component_field(spec, P, idx)).evaluate(q).data
            for idx in multi_indices(n, len(shape))
        ]
        arr = jets.stack(vals) if shape else vals[0]
        ZP.append(Tensor(n, spec.types[P], jets.linear(lambda a, shape=shape: a.reshape(shape + a.shape[1:]), arr)))
    cols = [apply_derivation(d, basis_vector_field(spec, i)).evaluate(q).data for i in range(n)]
    G = Tensor(n, Valence(1, 1), jets.stack(cols, axis=1))
    return Tensor(n, Valence(1, 0), Z), tuple(ZP), G


def axiom_residuals(
    d: DerivationComponents, f: ExtendedField, g: ExtendedField, q: FiberPoint, a: float = 1.7, b: float = -0.6
) -> dict[str, float]:
    """Residuals of the product rule, commutation with contraction and linearity."""
    D = lambda h: apply_derivation(d, h)  # noqa: E731
    lhs = D(product_fields(f, g)).evaluate(q)
    rhs = tensor_product(D(f).evaluate(q), g.evaluate(q)) + tensor_product(f.evaluate(q), D(g).evaluate(q))
    out = {"leibniz": tensor_residual(lhs, rhs)}
    if f.valence.r >= 1 and f.valence.s >= 1:
        lhs = D(contract_field(f, 0, 0)).evaluate(q)
        rhs = contract(D(f).evaluate(q), 0, 0)
        out["contraction"] = tensor_residual(lhs, rhs)
    else:
        out["contraction"] = 0.0
    if f.valence == g.valence:
        combo = add_fields(scale_field(a, f), scale_field(b, g))
        lhs = D(combo).evaluate(q)
        rhs = D(f).evaluate(q) * a + D(g).evaluate(q) * b
        out["linearity"] = tensor_residual(lhs, rhs)
    else:
        out["linearity"] = 0.0
    return out


# ---------------------------------------------------------------- decomposition


@dataclass(frozen=True)
class Decomposition:
    X: ExtendedField
    Y: tuple[ExtendedField, ...]
    S: ExtendedField


def decompose(d: DerivationComponents, conn) -> Decomposition:
    """Split into covariant, vertical and degenerate parts relative to `conn`.

    The covariant direction is ``Z``; the vertical directions are
    ``ZP[P] + X^j L_j[P]`` with ``L`` the lift components of the connection;
    the degenerate remainder is ``G - X^j Gamma_j``.
    """
    from .connection import lift_components

    spec = d.spec

    def at(q: FiberPoint):
        Z, ZP, G = d.at(q)
        gamma = conn.gamma.evaluate(q).data
        lift = lift_components(conn, q)
        Y = tuple(
            zp + Tensor(spec.dim, zp.valence, jets.einsum(_lift_sum(zp.valence), Z.data, L.data))
            for zp, L in zip(ZP, lift)
        )
        Sdeg = G - Tensor(spec.dim, Valence(1, 1), jets.einsum("kji...,j...->ki...", gamma, Z.data))
        return Y, Sdeg

    Y = tuple(FunctionField(spec, spec.types[P], lambda q, P=P: at(q)[0][P], f"Y{P + 1}") for P in range(spec.Q))
    S = FunctionField(spec, Valence(1, 1), lambda q: at(q)[1], "S")
    return Decomposition(d.Z, Y, S)


def _lift_sum(v: Valence) -> str:
    """Subscripts contracting a direction with the direction slot of lift components."""
    r, s = v
    letters = "abcdefghiklmnopq"[: r + s]
    up, low = letters[:r], letters[r:]
    return f"j...,{up}j{low}...->{letters}..."


def reconstruct(dec: Decomposition, conn) -> DerivationComponents:
    """Differentiation ``nabla_X + sum_P vertical(Y[P]) + S`` built from parts."""
    from .connection import spatial_derivation

    spec = conn.spec
    cov = spatial_derivation(conn, dec.X)
    vert = DerivationComponents(spec, zero_field(spec, Valence(1, 0)), dec.Y, zero_field(spec, Valence(1, 1)))
    return sum_derivations(cov, vert, degenerate_from_tensor(dec.S))


def reconstruct_apply(dec: Decomposition, conn, f: ExtendedField) -> ExtendedField:
    """Apply the parts of a decomposition separately, each by its own operator."""
    from .connection import spatial_covariant, vertical_derivative

    parts = [spatial_covariant(conn, dec.X, f)]
    parts.extend(vertical_derivative(P, dec.Y[P], f) for P in range(conn.spec.Q))
    parts.append(apply_derivation(degenerate_from_tensor(dec.S), f))
    out = parts[0]
    for p in parts[1:]:
        out = add_fields(out, p)
    return out
