"""Torsion, curvature tensors and the commutation relations they control.

Index layouts (all arrays, upper slots first):

* torsion ``[k, i, j]``;
* static curvature ``R[k, h, i, j]``;
* dynamic curvature of slot P ``D[k, K, i, j, H]`` with ``K`` the lower
  indices and ``H`` the upper indices of ``T[P]``;
* ``Theta[P, R]`` ``[I_R, K_P, J_R, j, H_P]``;
* ``Omega[R]`` ``[I_R, i, j, J_R]``.

The second covariant differential stores the first derivative direction
before the second, so ``[nabla_i, nabla_j] X`` means ``ddX[..., j, i] -
ddX[..., i, j]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import jets
from .bundle import FiberPoint
from .connection import (
    ExtendedConnection,
    covariant_differential,
    lift_components,
    spatial_covariant,
    vertical_derivative,
    vertical_differential,
)
from .derivation import apply_derivation, degenerate_from_tensor
from .extfield import ExtendedField, FunctionField, add_fields, partials, sub_fields, tensor_residual
from .errors import ValidationError
from .multitensor import Tensor, Valence, act, multi_indices

_L = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"


def torsion(conn: ExtendedConnection) -> ExtendedField:
    def fn(q: FiberPoint) -> Tensor:
        g = conn.gamma.evaluate(q).data
        return Tensor(q.spec.dim, Valence(1, 2), g - jets.linear(lambda a: np.swapaxes(a, 1, 2), g))

    return FunctionField(conn.spec, Valence(1, 2), fn, "torsion")


def static_curvature(conn: ExtendedConnection) -> ExtendedField:
    """``R[k, h, i, j]`` from base and fiber partials of the connection.

    Besides the familiar derivative and quadratic terms, each fiber argument
    contributes its lift components contracted with the fiber partials of the
    connection.
    """
    spec = conn.spec

    def fn(q: FiberPoint) -> Tensor:
        gamma = conn.gamma.evaluate(q).data
        dx, dT = partials(conn.gamma, q)  # dx[k, j, h, i] = d_i Gamma[k, j, h]
        lifts = lift_components(conn, q)
        horiz = dx
        for P, L in enumerate(lifts):
            r, s = spec.types[P]
            H = _L[4 : 4 + r]
            K = _L[4 + r : 4 + r + s]
            # L[H, i, K] * dGamma[k, j, h, H, K]
            horiz = horiz - jets.einsum(f"{H}d{K}...,abc{H}{K}...->abcd...", L.data, dT[P])
        quad = jets.einsum("ajh...,kia...->khij...", gamma, gamma)
        first = jets.einsum("kjhi...->khij...", horiz)
        data = first - jets.linear(lambda a: np.swapaxes(a, 2, 3), first) + quad - jets.linear(
            lambda a: np.swapaxes(a, 2, 3), quad
        )
        return Tensor(spec.dim, Valence(1, 3), data)

    return FunctionField(spec, Valence(1, 3), fn, "R")


def dynamic_curvature(conn: ExtendedConnection, P: int) -> ExtendedField:
    """``D[k, K, i, j, H] = -d Gamma[k, j, i] / d T[P][H, K]``."""
    spec = conn.spec
    r, s = spec.slot(P)
    v = Valence(s + 1, r + 2)
    dg = vertical_differential(conn.gamma, P)  # layout [k, K, j, i, H]

    def fn(q: FiberPoint) -> Tensor:
        data = dg.evaluate(q).data
        return Tensor(spec.dim, v, -jets.linear(lambda a: np.swapaxes(a, 1 + s, 2 + s), data))

    return FunctionField(spec, v, fn, f"D{P + 1}")


def theta_from_dynamic(D: Tensor, arg: Tensor, P_valence: Valence) -> Tensor:
    """``Theta[P, R]`` from ``D[P]`` and the argument ``T[R]``."""
    rP, sP = P_valence
    rR, sR = arg.valence
    I = _L[:rR]
    J = _L[rR : rR + sR]
    K = _L[rR + sR : rR + sR + sP]
    H = _L[rR + sR + sP : rR + sR + sP + rP]
    j = "y"
    w = "z"
    out = f"{I}{K}{J}{j}{H}"
    total = None
    for m in range(sR):
        t_idx = J[:m] + w + J[m + 1 :]
        term = jets.einsum(f"{w}{K}{J[m]}{j}{H}...,{I}{t_idx}...->{out}...", D.data, arg.data)
        total = term if total is None else total + term
    for m in range(rR):
        t_idx = I[:m] + w + I[m + 1 :]
        term = -jets.einsum(f"{I[m]}{K}{w}{j}{H}...,{t_idx}{J}...->{out}...", D.data, arg.data)
        total = term if total is None else total + term
    n = arg.dim
    v = Valence(rR + sP, sR + rP + 1)
    if total is None:
        total = np.zeros((n,) * v.rank)
    return Tensor(n, v, total)


def theta_tensor(conn: ExtendedConnection, P: int, R: int) -> ExtendedField:
    spec = conn.spec
    rP, sP = spec.slot(P)
    rR, sR = spec.slot(R)
    D = dynamic_curvature(conn, P)
    v = Valence(rR + sP, sR + rP + 1)
    return FunctionField(spec, v, lambda q: theta_from_dynamic(D.evaluate(q), q.args[R], spec.types[P]), f"Theta{P + 1}{R + 1}")


def omega_from_static(Rt: Tensor, arg: Tensor) -> Tensor:
    """``Omega[R]`` from the static curvature and the argument ``T[R]``."""
    r, s = arg.valence
    I = _L[:r]
    J = _L[r : r + s]
    i, j, w = "x", "y", "z"
    out = f"{I}{i}{j}{J}"
    total = None
    for m in range(s):
        t_idx = J[:m] + w + J[m + 1 :]
        term = jets.einsum(f"{w}{J[m]}{i}{j}...,{I}{t_idx}...->{out}...", Rt.data, arg.data)
        total = term if total is None else total + term
    for m in range(r):
        t_idx = I[:m] + w + I[m + 1 :]
        term = -jets.einsum(f"{I[m]}{w}{i}{j}...,{t_idx}{J}...->{out}...", Rt.data, arg.data)
        total = term if total is None else total + term
    n = arg.dim
    v = Valence(r, s + 2)
    if total is None:
        total = np.zeros((n,) * v.rank)
    return Tensor(n, v, total)


def omega_tensor(conn: ExtendedConnection, R: int) -> ExtendedField:
    spec = conn.spec
    r, s = spec.slot(R)
    Rf = static_curvature(conn)
    return FunctionField(spec, Valence(r, s + 2), lambda q: omega_from_static(Rf.evaluate(q), q.args[R]), f"Omega{R + 1}")


# ---------------------------------------------------------------- commutation relations


def _rel_vertical(X: ExtendedField, P: int, R: int):
    """Evaluate both orders of two vertical differentials, aligned."""
    a, b = X.valence
    rP, sP = X.spec.types[P]
    rR, sR = X.spec.types[R]
    AP = vertical_differential(vertical_differential(X, P), R)  # [I, KP, KR, J, HP, HR]
    BP = vertical_differential(vertical_differential(X, R), P)  # [I, KR, KP, J, HR, HP]
    I = _L[:a]
    KP = _L[a : a + sP]
    KR = _L[a + sP : a + sP + sR]
    J = _L[a + sP + sR : a + sP + sR + b]
    HP = _L[a + sP + sR + b : a + sP + sR + b + rP]
    HR = _L[a + sP + sR + b + rP : a + sP + sR + b + rP + rR]
    sub = f"{I}{KR}{KP}{J}{HR}{HP}->{I}{KP}{KR}{J}{HP}{HR}"
    return AP, BP, sub


def commutator_residuals(
    conn: ExtendedConnection, X: ExtendedField, q: FiberPoint
) -> list[tuple[str, float, float]]:
    """Residuals of the component commutation relations for one field at one point.

    Returns ``(relation id, residual, magnitude of the left-hand side)``
    triples. The ids follow the field valence: scalar, contravariant vector
    and covariant vector fields get their dedicated ids; other valences use
    the same general right-hand sides under the vector ids.
    """
    spec = conn.spec
    n = spec.dim
    a, b = X.valence
    kind = {(0, 0): "scalar", (1, 0): "vector", (0, 1): "covector"}.get((a, b), "vector")
    out: list[tuple[str, float, float]] = []

    # two vertical differentials commute
    worst, size = 0.0, 0.0
    for P in range(spec.Q):
        for R in range(P, spec.Q):
            A, B, sub = _rel_vertical(X, P, R)
            av = np.asarray(jets.primal(A.evaluate(q).data))
            bv = np.einsum(sub, np.asarray(jets.primal(B.evaluate(q).data)))
            worst = max(worst, float(np.max(np.abs(av - bv))) if av.size else 0.0)
            size = max(size, float(np.max(np.abs(av))) if av.size else 0.0)
    if spec.Q:
        out.append(("16.1", worst, size))

    dX = covariant_differential(conn, X)
    dX_q = _arr(dX.evaluate(q))
    X_q = X.evaluate(q)
    dv = [vertical_differential(X, R) for R in range(spec.Q)]
    dv_q = [_arr(f.evaluate(q)) for f in dv]

    # covariant against vertical differentials
    rel = {"scalar": "16.3", "vector": "16.2", "covector": "16.4"}[kind]
    worst, size = 0.0, 0.0
    for P in range(spec.Q):
        rP, sP = spec.types[P]
        L1 = _arr(covariant_differential(conn, dv[P]).evaluate(q))  # [I, K, J, H, i]
        L2 = _arr(vertical_differential(dX, P).evaluate(q))  # [I, K, J, i, H]
        I = _L[:a]
        K = _L[a : a + sP]
        J = _L[a + sP : a + sP + b]
        H = _L[a + sP + b : a + sP + b + rP]
        i = "y"
        lhs = L1 - np.einsum(f"{I}{K}{J}{i}{H}->{I}{K}{J}{H}{i}", L2)
        Dq = _arr(dynamic_curvature(conn, P).evaluate(q))  # [k, K, i, j, H]
        rhs = np.zeros_like(lhs)
        for Kidx in multi_indices(n, sP):
            for Hidx in multi_indices(n, rP):
                for ii in range(n):
                    g = Dq[(slice(None),) + Kidx + (slice(None), ii) + Hidx]
                    val = act(g, Tensor(n, X.valence, np.asarray(jets.primal(X_q.data)))).data
                    rhs[_place(a, b, Kidx, Hidx, ii)] += val
        for R in range(spec.Q):
            rR, sR = spec.types[R]
            Th = _arr(theta_from_dynamic(Tensor(n, Valence(sP + 1, rP + 2), Dq), q.args[R], spec.types[P]))
            A_ = _L[30 : 30 + rR]
            B_ = _L[30 + rR : 30 + rR + sR]
            # Theta[A, K, B, i, H] * dvX[I, B, J, A] -> [I, K, J, H, i]
            rhs = rhs + np.einsum(f"{A_}{K}{B_}{i}{H},{I}{B_}{J}{A_}->{I}{K}{J}{H}{i}", Th, dv_q[R])
        worst = max(worst, float(np.max(np.abs(lhs - rhs))) if lhs.size else 0.0)
        size = max(size, float(np.max(np.abs(lhs))) if lhs.size else 0.0)
    if spec.Q:
        out.append((rel, worst, size))

    # two covariant derivatives
    rel = {"scalar": "16.6", "vector": "16.5", "covector": "16.7"}[kind]
    dd = _arr(covariant_differential(conn, dX).evaluate(q))  # [I, J, j, i]
    lhs = np.swapaxes(dd, -1, -2) - dd  # [I, J, i, j]
    Tq = _arr(torsion(conn).evaluate(q))
    Rq = _arr(static_curvature(conn).evaluate(q))
    rhs = -np.einsum("hij,...h->...ij", Tq, dX_q)
    for ii in range(n):
        for jj in range(n):
            rhs[..., ii, jj] += act(Rq[:, :, ii, jj], Tensor(n, X.valence, np.asarray(jets.primal(X_q.data)))).data
    for R in range(spec.Q):
        rR, sR = spec.types[R]
        Om = _arr(omega_from_static(Tensor(n, Valence(1, 3), Rq), q.args[R]))  # [A, i, j, B]
        I = _L[:a]
        J = _L[a : a + b]
        A_ = _L[30 : 30 + rR]
        B_ = _L[30 + rR : 30 + rR + sR]
        rhs = rhs + np.einsum(f"{A_}xy{B_},{I}{B_}{J}{A_}->{I}{J}xy", Om, dv_q[R])
    out.append((rel, float(np.max(np.abs(lhs - rhs))) if lhs.size else 0.0, float(np.max(np.abs(lhs))) if lhs.size else 0.0))
    return out


def _place(a: int, b: int, K, H, i) -> tuple:
    """Index into an array of layout [I, K, J, H, i] fixing K, H and i."""
    return (slice(None),) * a + tuple(K) + (slice(None),) * b + tuple(H) + (i,)


def _arr(t: Tensor) -> np.ndarray:
    return np.asarray(jets.primal(t.data), dtype=float)


# ---------------------------------------------------------------- operator identities


def operator_residuals(
    conn: ExtendedConnection,
    f: ExtendedField,
    q: FiberPoint,
    X: ExtendedField,
    Y: ExtendedField,
    A: Sequence[ExtendedField],
    S1: ExtendedField,
    S2: ExtendedField,
) -> list[tuple[str, float, float]]:
    """Commutators of differentiation operators applied to `f` at `q`.

    `X`, `Y` are (1,0) fields, `A[P]` a field of the valence of slot P, and
    `S1`, `S2` are (1,1) fields.
    """
    spec = conn.spec
    n = spec.dim
    out: list[tuple[str, float, float]] = []

    def res(name: str, lhs: ExtendedField, rhs: ExtendedField):
        lv, rv = lhs.evaluate(q), rhs.evaluate(q)
        out.append((name, tensor_residual(lv, rv), float(np.max(np.abs(_arr(lv))))))

    # algebraic parts commute like matrices
    d1, d2 = degenerate_from_tensor(S1), degenerate_from_tensor(S2)
    lhs = sub_fields(apply_derivation(d1, apply_derivation(d2, f)), apply_derivation(d2, apply_derivation(d1, f)))
    S3 = FunctionField(spec, Valence(1, 1), lambda p: Tensor(n, Valence(1, 1), jets.einsum("ka...,ah...->kh...", S1.evaluate(p).data, S2.evaluate(p).data) - jets.einsum("ka...,ah...->kh...", S2.evaluate(p).data, S1.evaluate(p).data)), "[S1,S2]")
    res("15.1", lhs, apply_derivation(degenerate_from_tensor(S3), f))

    # covariant derivative against an algebraic part
    dS = degenerate_from_tensor(S1)
    lhs = sub_fields(spatial_covariant(conn, X, apply_derivation(dS, f)), apply_derivation(dS, spatial_covariant(conn, X, f)))
    res("15.2", lhs, apply_derivation(degenerate_from_tensor(spatial_covariant(conn, X, S1)), f))

    # two vertical derivatives
    for P in range(spec.Q):
        for R in range(spec.Q):
            lhs = sub_fields(
                vertical_derivative(P, A[P], vertical_derivative(R, A[R], f)),
                vertical_derivative(R, A[R], vertical_derivative(P, A[P], f)),
            )
            U = vertical_derivative(P, A[P], A[R])
            V = vertical_derivative(R, A[R], A[P])
            rhs = sub_fields(vertical_derivative(R, U, f), vertical_derivative(P, V, f))
            res("15.3", lhs, rhs)

    # covariant against vertical
    for P in range(spec.Q):
        lhs = sub_fields(
            spatial_covariant(conn, X, vertical_derivative(P, A[P], f)),
            vertical_derivative(P, A[P], spatial_covariant(conn, X, f)),
        )
        U = spatial_covariant(conn, X, A[P])
        V = vertical_derivative(P, A[P], X)
        Dp = dynamic_curvature(conn, P)
        rP, sP = spec.types[P]

        def s_field(p, Dp=Dp, P=P, rP=rP, sP=sP):
            D = Dp.evaluate(p).data  # [k, K, i, j, H]
            K = _L[4 : 4 + sP]
            H = _L[4 + sP : 4 + sP + rP]
            return Tensor(
                n, Valence(1, 1), jets.einsum(f"a{K}bc{H}...,c...,{H}{K}...->ab...", D, X.evaluate(p).data, A[P].evaluate(p).data)
            )

        Sf = FunctionField(spec, Valence(1, 1), s_field, "S")
        rhs = add_fields(vertical_derivative(P, U, f), apply_derivation(degenerate_from_tensor(Sf), f))
        rhs = sub_fields(rhs, spatial_covariant(conn, V, f))
        for R in range(spec.Q):
            UR = FunctionField(spec, spec.types[R], lambda p, R=R, Sf=Sf: -act(Sf.evaluate(p).data, p.args[R]), f"U{R + 1}")
            rhs = add_fields(rhs, vertical_derivative(R, UR, f))
        res("15.5", lhs, rhs)

    # two covariant derivatives
    lhs = sub_fields(
        spatial_covariant(conn, X, spatial_covariant(conn, Y, f)),
        spatial_covariant(conn, Y, spatial_covariant(conn, X, f)),
    )
    Tf = torsion(conn)
    Rf = static_curvature(conn)
    Txy = FunctionField(spec, Valence(1, 0), lambda p: Tensor(n, Valence(1, 0), jets.einsum("kij...,i...,j...->k...", Tf.evaluate(p).data, X.evaluate(p).data, Y.evaluate(p).data)), "T(X,Y)")
    U = sub_fields(sub_fields(spatial_covariant(conn, X, Y), spatial_covariant(conn, Y, X)), Txy)
    Sf = FunctionField(spec, Valence(1, 1), lambda p: Tensor(n, Valence(1, 1), jets.einsum("khij...,i...,j...->kh...", Rf.evaluate(p).data, X.evaluate(p).data, Y.evaluate(p).data)), "R(X,Y)")
    rhs = add_fields(spatial_covariant(conn, U, f), apply_derivation(degenerate_from_tensor(Sf), f))
    for R in range(spec.Q):
        UR = FunctionField(spec, spec.types[R], lambda p, R=R: -act(Sf.evaluate(p).data, p.args[R]), f"U{R + 1}")
        rhs = add_fields(rhs, vertical_derivative(R, UR, f))
    res("15.13", lhs, rhs)
    return out


# ---------------------------------------------------------------- bundled access


@dataclass(frozen=True)
class CurvaturePack:
    torsion: ExtendedField
    static_R: ExtendedField
    dynamic_D: tuple[ExtendedField, ...]
    theta_PR: tuple[tuple[ExtendedField, ...], ...]
    omega_R: tuple[ExtendedField, ...]


def curvature_pack(conn: ExtendedConnection) -> CurvaturePack:
    Q = conn.spec.Q
    return CurvaturePack(
        torsion(conn),
        static_curvature(conn),
        tuple(dynamic_curvature(conn, P) for P in range(Q)),
        tuple(tuple(theta_tensor(conn, P, R) for R in range(Q)) for P in range(Q)),
        tuple(omega_tensor(conn, R) for R in range(Q)),
    )


COMMUTATOR_TOLERANCE = 1e-5


def verify_commutators(
    conn: ExtendedConnection,
    fields: Sequence[ExtendedField],
    probes: Sequence[FiberPoint],
    tolerance: float = COMMUTATOR_TOLERANCE,
) -> list[dict]:
    """One entry per (relation, probe, field) with its residual and pass flag.

    `fields` must contain a scalar, a contravariant and a covariant vector
    field so that every relation is exercised.
    """
    kinds = {f.valence for f in fields}
    missing = {Valence(0, 0), Valence(1, 0), Valence(0, 1)} - kinds
    if missing:
        raise ValidationError(f"commutator check needs fields of valence {sorted(missing)}")
    out = []
    for k, q in enumerate(probes):
        with jets.derivative_order(2):
            for f in fields:
                for rel, residual, size in commutator_residuals(conn, f, q):
                    out.append(
                        {
                            "id": rel,
                            "probe": k,
                            "field": f.name,
                            "residual": residual,
                            "lhs_size": size,
                            "tolerance": tolerance,
                            "pass": residual <= tolerance,
                        }
                    )
    return out
