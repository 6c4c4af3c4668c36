"""Extended connections and the covariant derivatives they define.

An extended connection is a (1,2) field ``Gamma[k, j, i]`` on the bundle,
with ``j`` the differentiation direction. It induces, for every argument
slot P, lift components

    L_j[P] = sum over upper slots of Gamma_j acting - sum over lower slots

applied to ``T[P]`` (that is, ``act(Gamma[:, j, :], T[P])``). The horizontal
lift of a base direction ``Y`` is ``Y^j (U_j - sum_P L_j[P] . V[P])``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping, Sequence

import numpy as np

from . import jets
from .atlas import Transition
from .bundle import BundleSpec, BundleTangent, FiberPoint, transform_fiber_point, transform_tensor_components, vertical_lift
from .derivation import DerivationComponents, apply_derivation
from .errors import ShapeMismatch
from .extfield import ExprField, ExtendedField, FunctionField, fiber_differential, value_and_directional, zero_field
from .multitensor import Tensor, Valence, act, contract_all


@dataclass(frozen=True)
class ExtendedConnection:
    spec: BundleSpec
    gamma: ExtendedField
    name: str = "Gamma"

    def __post_init__(self):
        if self.gamma.valence != Valence(1, 2):
            raise ShapeMismatch("connection components must form a (1,2) array")

    @classmethod
    def from_map(cls, spec: BundleSpec, mapping: Mapping[str, Any], name: str = "Gamma") -> ExtendedConnection:
        """Sparse ``"k,j,i" -> expression`` map, 1-based, missing entries zero."""
        return cls(spec, ExprField.from_map(spec, Valence(1, 2), mapping, name), name)

    @classmethod
    def flat(cls, spec: BundleSpec) -> ExtendedConnection:
        return cls.from_map(spec, {}, "flat")

    def at(self, q: FiberPoint) -> Tensor:
        return self.gamma.evaluate(q)


# ---------------------------------------------------------------- lift components


def _lift_from(gamma: Any, arg: Tensor) -> Tensor:
    """``[I, j, J] = act(gamma[:, j, :], arg)[I, J]``, direction inserted first among lowers."""
    n = arg.dim
    r, s = arg.valence
    cols = [act(gamma[:, j], arg).data for j in range(n)]
    return Tensor(n, Valence(r, s + 1), jets.stack(cols, axis=r))


def lift_components(conn: ExtendedConnection, q: FiberPoint) -> tuple[Tensor, ...]:
    """Lift components of every slot at `q`; slot P has valence (r_P, s_P + 1)."""
    gamma = conn.gamma.evaluate(q).data
    return tuple(_lift_from(gamma, arg) for arg in q.args)


def lift_field(conn: ExtendedConnection, P: int) -> ExtendedField:
    r, s = conn.spec.slot(P)
    return FunctionField(conn.spec, Valence(r, s + 1), lambda q: lift_components(conn, q)[P], f"L{P + 1}")


def _contract_direction(y: Any, lift: Tensor) -> Tensor:
    """``sum_j y^j L[I, j, J]``."""
    r, s1 = lift.valence
    letters = "abcdefghiklmnopqrstuvwxyz"[: r + s1 - 1]
    sub = f"j...,{letters[:r]}j{letters[r:]}...->{letters}..."
    return Tensor(lift.dim, Valence(r, s1 - 1), jets.einsum(sub, y, lift.data))


def horizontal_lift(conn: ExtendedConnection, q: FiberPoint, y: Any, gamma: Any = None) -> BundleTangent:
    """Horizontal tangent over the base direction `y` (array or (1,0) tensor)."""
    if isinstance(y, Tensor):
        y = y.data
    if gamma is None:
        gamma = conn.gamma.evaluate(q).data
    gamma_y = jets.einsum("kji...,j...->ki...", gamma, y)
    u = Tensor(conn.spec.dim, Valence(1, 0), y)
    v = tuple(-act(gamma_y, arg) for arg in q.args)
    return BundleTangent(u, v)


# ---------------------------------------------------------------- covariant components


@dataclass(frozen=True)
class CovariantComponents:
    """Components of a covariant differentiation.

    ``Zij[i, j]`` is the base part as a (1,1) field, ``ZPj[P]`` has valence
    ``(r_P, s_P + 1)`` with the direction as its first lower slot, and
    ``G[k, j, i]`` is the algebraic part with direction ``j``.
    """

    spec: BundleSpec
    Zij: ExtendedField
    ZPj: tuple[ExtendedField, ...]
    G: ExtendedField

    def __post_init__(self):
        if self.Zij.valence != Valence(1, 1) or self.G.valence != Valence(1, 2):
            raise ShapeMismatch("covariant components need Zij of valence (1,1) and G of valence (1,2)")
        for P, f in enumerate(self.ZPj):
            r, s = self.spec.types[P]
            if f.valence != Valence(r, s + 1):
                raise ShapeMismatch(f"ZPj[{P}] must have valence ({r},{s + 1})")
        object.__setattr__(self, "ZPj", tuple(self.ZPj))

    def at(self, q: FiberPoint) -> tuple[Tensor, tuple[Tensor, ...], Tensor]:
        return self.Zij.evaluate(q), tuple(f.evaluate(q) for f in self.ZPj), self.G.evaluate(q)

    def along(self, direction: ExtendedField) -> DerivationComponents:
        """The differentiation obtained by fixing the direction field."""
        spec = self.spec
        n = spec.dim

        def z(q):
            return Tensor(n, Valence(1, 0), jets.einsum("ij...,j...->i...", self.Zij.evaluate(q).data, direction.evaluate(q).data))

        def zp(q, P):
            return _contract_direction(direction.evaluate(q).data, self.ZPj[P].evaluate(q))

        def g(q):
            return Tensor(n, Valence(1, 1), jets.einsum("kji...,j...->ki...", self.G.evaluate(q).data, direction.evaluate(q).data))

        return DerivationComponents(
            spec,
            FunctionField(spec, Valence(1, 0), z, "Z"),
            tuple(FunctionField(spec, spec.types[P], lambda q, P=P: zp(q, P), f"ZP{P + 1}") for P in range(spec.Q)),
            FunctionField(spec, Valence(1, 1), g, "G"),
        )


def covariant_apply(c: CovariantComponents, direction: ExtendedField, f: ExtendedField) -> ExtendedField:
    return apply_derivation(c.along(direction), f)


def degenerate_covariant(S3: ExtendedField) -> CovariantComponents:
    """Covariant differentiation with only an algebraic (1,2) part."""
    spec = S3.spec
    return CovariantComponents(
        spec,
        zero_field(spec, Valence(1, 1)),
        tuple(zero_field(spec, Valence(v.r, v.s + 1)) for v in spec.types),
        S3,
    )


def spatial_components(conn: ExtendedConnection) -> CovariantComponents:
    """Covariant components of the spatial covariant derivative of `conn`."""
    spec = conn.spec
    n = spec.dim
    delta = FunctionField(spec, Valence(1, 1), lambda q: Tensor.identity(n), "delta")
    zpj = tuple(
        FunctionField(spec, Valence(v.r, v.s + 1), lambda q, P=P: -lift_components(conn, q)[P], f"-L{P + 1}")
        for P, v in enumerate(spec.types)
    )
    return CovariantComponents(spec, delta, zpj, conn.gamma)


def spatial_derivation(conn: ExtendedConnection, direction: ExtendedField) -> DerivationComponents:
    return spatial_components(conn).along(direction)


# ---------------------------------------------------------------- covariant derivatives


def spatial_covariant(conn: ExtendedConnection, direction: ExtendedField, f: ExtendedField) -> ExtendedField:
    """Spatial covariant derivative of `f` along a (1,0) field."""
    if direction.valence != Valence(1, 0):
        raise ShapeMismatch("direction must be a (1,0) field")

    def fn(q: FiberPoint) -> Tensor:
        y = direction.evaluate(q).data
        gamma = conn.gamma.evaluate(q).data
        w = horizontal_lift(conn, q, y, gamma)
        value, slope = value_and_directional(f, q, w)
        return slope + act(jets.einsum("kji...,j...->ki...", gamma, y), value)

    return FunctionField(f.spec, f.valence, fn, f"nabla({f.name})")


def covariant_differential(conn: ExtendedConnection, f: ExtendedField) -> ExtendedField:
    """All spatial covariant derivatives at once; the direction is the last lower slot."""
    spec = f.spec
    n = spec.dim
    a, b = f.valence
    out_v = Valence(a, b + 1)

    def fn(q: FiberPoint) -> Tensor:
        gamma = conn.gamma.evaluate(q).data
        cols = []
        for j in range(n):
            e = np.zeros(n)
            e[j] = 1.0
            value, slope = value_and_directional(f, q, horizontal_lift(conn, q, e, gamma))
            cols.append((slope + act(gamma[:, j], value)).data)
        return Tensor(n, out_v, jets.stack(cols, axis=a + b))

    return FunctionField(spec, out_v, fn, f"nabla({f.name})")


def vertical_derivative(P: int, direction: ExtendedField, f: ExtendedField) -> ExtendedField:
    """Derivative of `f` along the fiber of slot P in the direction of a field."""
    spec = f.spec
    if direction.valence != spec.slot(P):
        raise ShapeMismatch(f"direction has valence {direction.valence}, slot {P} has {spec.types[P]}")

    def fn(q: FiberPoint) -> Tensor:
        w = vertical_lift(spec, P, direction.evaluate(q))
        return value_and_directional(f, q, w)[1]

    return FunctionField(spec, f.valence, fn, f"dv{P + 1}({f.name})")


def vertical_differential(f: ExtendedField, P: int) -> ExtendedField:
    """Vertical differential: new uppers are the lower indices of T[P], new lowers its upper ones."""
    return fiber_differential(f, P)


def contract_vertical(Y: Tensor, dX: Tensor, P_valence: Valence, x_valence: Valence) -> Tensor:
    """``sum_{H,K} Y[H, K] dX[I, K, J, H]`` for a vertical differential `dX`."""
    a, b = x_valence
    rP, sP = P_valence
    letters = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
    I = letters[:a]
    K = letters[a : a + sP]
    J = letters[a + sP : a + sP + b]
    H = letters[a + sP + b : a + sP + b + rP]
    sub = f"{H}{K}...,{I}{K}{J}{H}...->{I}{J}..."
    return Tensor(dX.dim, x_valence, jets.einsum(sub, Y.data, dX.data))


# ---------------------------------------------------------------- chart changes


def transform_connection_values(gamma: Tensor, S: Any, T: Any, theta_tilde: Any) -> Tensor:
    """Connection components in the target chart: tensorial part plus theta_tilde."""
    return transform_tensor_components(gamma, S, T, "to_tilde") + Tensor(gamma.dim, Valence(1, 2), theta_tilde)


def transform_connection(conn: ExtendedConnection, t: Transition, direction: str = "to_tilde") -> ExtendedConnection:
    """The connection written in the other chart.

    With ``to_tilde``, `conn` lives on the source chart of `t` and the result
    on its target; ``from_tilde`` is the reverse, using the untilded
    theta-parameters.
    """
    if direction == "from_tilde":
        t = t.inverse()
    elif direction != "to_tilde":
        raise ValueError(f"unknown direction {direction!r}")
    spec = conn.spec
    back = t.inverse()

    def fn(q_t: FiberPoint) -> Tensor:
        q, d_back = transform_fiber_point(spec, back, q_t)
        # forward data at q expressed through the backward data
        S, T, theta_tilde = d_back.T, d_back.S, d_back.theta
        return transform_connection_values(conn.gamma.evaluate(q), S, T, theta_tilde)

    return ExtendedConnection(spec, FunctionField(spec, Valence(1, 2), fn, f"{conn.name}@{t.target}"), f"{conn.name}@{t.target}")


def lift_transform_residual(conn: ExtendedConnection, conn_t: ExtendedConnection, t: Transition, q: FiberPoint) -> float:
    """Check lift components against their transformation law between two charts.

    Untilded lift components must equal the back-transformed tilded ones plus
    the lift built from the untilded theta-parameters.
    """
    q_t, d = transform_fiber_point(conn.spec, t, q)
    here = lift_components(conn, q)
    there = lift_components(conn_t, q_t)
    worst = 0.0
    for P, (L, Lt) in enumerate(zip(here, there)):
        expected = transform_tensor_components(Lt, d.S, d.T, "from_tilde") + _lift_from(d.theta, q.args[P])
        diff = np.asarray(jets.primal((L - expected).data))
        worst = max(worst, float(np.max(np.abs(diff))) if diff.size else 0.0)
    return worst


def transform_covariant_values(
    Zij: Tensor, ZPj: Sequence[Tensor], G: Tensor, S: Any, T: Any, theta_tilde: Any, target_args: Sequence[Tensor]
) -> tuple[Tensor, tuple[Tensor, ...], Tensor]:
    """Covariant component values in the target chart."""
    n = Zij.dim
    Zt = transform_tensor_components(Zij, S, T, "to_tilde")
    corr = jets.einsum("kiv...,ij...->kjv...", theta_tilde, Zt.data)
    ZPt = tuple(
        transform_tensor_components(zp, S, T, "to_tilde") - _lift_from(corr, arg) for zp, arg in zip(ZPj, target_args)
    )
    Gt = transform_tensor_components(G, S, T, "to_tilde") + Tensor(
        n, Valence(1, 2), jets.einsum("kai...,aj...->kji...", theta_tilde, Zt.data)
    )
    return Zt, ZPt, Gt


def transform_covariant_components(c: CovariantComponents, t: Transition) -> CovariantComponents:
    """Covariant components with fields written in the target chart."""
    spec = c.spec
    back = t.inverse()

    def values(q_t: FiberPoint):
        q, d_back = transform_fiber_point(spec, back, q_t)
        Zij, ZPj, G = c.at(q)
        return transform_covariant_values(Zij, ZPj, G, d_back.T, d_back.S, d_back.theta, q_t.args)

    return CovariantComponents(
        spec,
        FunctionField(spec, Valence(1, 1), lambda q: values(q)[0], "Zij~"),
        tuple(
            FunctionField(spec, Valence(v.r, v.s + 1), lambda q, P=P: values(q)[1][P], f"ZPj~{P + 1}")
            for P, v in enumerate(spec.types)
        ),
        FunctionField(spec, Valence(1, 2), lambda q: values(q)[2], "G~"),
    )


__all__ = [
    "ExtendedConnection",
    "CovariantComponents",
    "lift_components",
    "lift_field",
    "horizontal_lift",
    "covariant_apply",
    "degenerate_covariant",
    "spatial_components",
    "spatial_derivation",
    "spatial_covariant",
    "covariant_differential",
    "vertical_derivative",
    "vertical_differential",
    "contract_vertical",
    "transform_connection",
    "transform_connection_values",
    "lift_transform_residual",
    "transform_covariant_values",
    "transform_covariant_components",
    "contract_all",
]
