"""Verification suites run against a manifest.

Every suite yields report entries ``{"id", "subject", "probe", "residual",
"tolerance", "pass"}``. A check that raises is recorded with an ``error``
message instead of a residual and counts as a failure; the remaining checks
still run.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Any, Callable, Iterator, Mapping

import numpy as np

from . import jets
from .atlas import check_theta_duality, transition_data
from .bundle import FiberPoint, Section, native_field, transform_bundle_tangent, transform_fiber_point, transform_tensor_components
from .chainrule import chain_rule_residual, drop_options
from .connection import (
    ExtendedConnection,
    covariant_differential,
    lift_transform_residual,
    transform_connection,
    vertical_derivative,
)
from .curvature import (
    COMMUTATOR_TOLERANCE,
    commutator_residuals,
    dynamic_curvature,
    operator_residuals,
    static_curvature,
    torsion,
)
from .derivation import (
    apply_derivation,
    axiom_residuals,
    decompose,
    reconstruct,
    reconstruct_apply,
    recover_components,
    transform_derivation,
    transform_derivation_components,
)
from .errors import ExtensorError
from .extfield import ExtendedField, check_tensoriality, tensor_residual, transport
from .manifest import Manifest, fiber_args
from .multitensor import Tensor, Valence, multi_indices, parse_index_key
from .testfields import random_connection, random_derivation, random_field

SUITES = (
    "transitions",
    "tensoriality",
    "derivation-axioms",
    "covariant",
    "curvature",
    "commutators",
    "decomposition",
    "chainrule",
)

SENSITIVITY_FLOOR = 1e-2

# check id -> (default tolerance, description)
CHECKS: dict[str, tuple[float, str]] = {
    "transitions.symmetry": (1e-10, "theta and theta_tilde symmetric in their lower pair"),
    "transitions.jacobian_route": (1e-9, "theta from second derivatives equals theta from differentiated Jacobians"),
    "transitions.duality": (1e-9, "theta expressed through theta_tilde and back"),
    "transitions.inverse": (1e-9, "S T = T S = identity"),
    "transitions.round_trip": (1e-9, "backward map undoes forward map"),
    "tensoriality.tensor_round_trip": (1e-10, "tensor components to the other chart and back"),
    "tensoriality.fiber_round_trip": (1e-9, "bundle point to the other chart and back"),
    "tensoriality.tangent_round_trip": (1e-9, "bundle tangent vector to the other chart and back"),
    "tensoriality.covariant": (1e-6, "spatial covariant differential transforms as a tensor"),
    "tensoriality.derivation": (1e-6, "transformed derivation components act like the original"),
    "derivation-axioms.leibniz": (1e-9, "product rule"),
    "derivation-axioms.contraction": (1e-9, "commutes with contraction"),
    "derivation-axioms.linearity": (1e-9, "real linearity"),
    "derivation-axioms.recover": (1e-9, "components read back from the action on probe fields"),
    "derivation-axioms.transform_round_trip": (1e-9, "component transformation to the other chart and back"),
    "covariant.native": (1e-12, "native fields are covariantly constant"),
    "covariant.vertical_native": (0.0, "vertical derivative of native field R along Y in slot P is delta_PR Y"),
    "covariant.connection_transform": (1e-8, "transformed connection matches the supplied components in the other chart"),
    "covariant.lift_transform": (1e-9, "lift components obey their transformation law"),
    "curvature.torsion_antisymmetry": (1e-12, "torsion antisymmetric in its lower pair"),
    "curvature.R_antisymmetry": (1e-12, "static curvature antisymmetric in its last two slots"),
    "curvature.flat": (1e-8, "static curvature of a flat connection vanishes in every chart"),
    "curvature.dynamic_fd": (1e-5, "dynamic curvature matches finite differences of the connection"),
    "curvature.expectation": (1e-8, "component value stated in the manifest"),
    "commutators.16.1": (COMMUTATOR_TOLERANCE, "two vertical differentials commute"),
    "commutators.16.2": (COMMUTATOR_TOLERANCE, "covariant against vertical differential, vector field"),
    "commutators.16.3": (COMMUTATOR_TOLERANCE, "covariant against vertical differential, scalar field"),
    "commutators.16.4": (COMMUTATOR_TOLERANCE, "covariant against vertical differential, covector field"),
    "commutators.16.5": (COMMUTATOR_TOLERANCE, "two covariant differentials, vector field"),
    "commutators.16.6": (COMMUTATOR_TOLERANCE, "two covariant differentials, scalar field"),
    "commutators.16.7": (COMMUTATOR_TOLERANCE, "two covariant differentials, covector field"),
    "commutators.15.1": (1e-10, "commutator of algebraic parts is the matrix commutator"),
    "commutators.15.2": (1e-9, "covariant derivative against an algebraic part"),
    "commutators.15.3": (1e-9, "commutator of two vertical derivatives"),
    "commutators.15.5": (1e-6, "covariant against vertical derivative"),
    "commutators.15.13": (1e-6, "commutator of two covariant derivatives"),
    "decomposition.components": (1e-9, "reconstructed components equal the original"),
    "decomposition.apply": (1e-9, "parts applied separately sum to the original action"),
    "chainrule.residual": (1e-6, "chain rule on the manifest's jobs"),
    "chainrule.random": (1e-6, "chain rule on random field, section and connection"),
    "chainrule.sensitivity": (1.0, "floor divided by the residual with one term dropped"),
}


@dataclass
class Context:
    manifest: Manifest
    seed: int
    probes: int
    overrides: Mapping[str, float] = field(default_factory=dict)

    def rng(self, suite: str) -> np.random.Generator:
        return np.random.default_rng([self.seed, zlib.crc32(suite.encode())])

    def override(self, check: str) -> float | None:
        """Tolerance given on the command line for `check`, by full or short id."""
        if check in self.overrides:
            return self.overrides[check]
        return self.overrides.get(check.split(".", 1)[1])

    def tolerance(self, check: str) -> float:
        tol = self.override(check)
        if tol is not None:
            return tol
        if check in self.manifest.params.tolerances:
            return self.manifest.params.tolerances[check]
        return CHECKS[check][0]

    def points(self, rng: np.random.Generator, chart: str, count: int | None = None) -> list[FiberPoint]:
        count = self.probes if count is None else count
        spec = self.manifest.spec
        bases = self.manifest.charts[chart].sample(rng, count)
        return [spec.random_point(rng, b, self.manifest.params.fiber_scale) for b in bases]


def _entry(ctx: Context, check: str, subject: str, probe: int, residual: float, tolerance: float | None = None, **extra) -> dict:
    tol = ctx.tolerance(check) if tolerance is None else tolerance
    residual = float(residual)
    out = {
        "id": check,
        "subject": subject,
        "probe": probe,
        "residual": residual,
        "tolerance": tol,
        "pass": bool(np.isfinite(residual) and residual <= tol),
    }
    out.update(extra)
    return out


def _guard(ctx: Context, check: str, subject: str, fn: Callable[[], list[dict]]) -> list[dict]:
    try:
        return fn()
    except (ExtensorError, ArithmeticError, ValueError, FloatingPointError) as exc:
        return [
            {
                "id": check,
                "subject": subject,
                "probe": None,
                "residual": None,
                "tolerance": ctx.tolerance(check),
                "pass": False,
                "error": f"{type(exc).__name__}: {exc}",
            }
        ]


def _max(x: Any) -> float:
    arr = np.asarray(jets.primal(x), dtype=float)
    return float(np.max(np.abs(arr))) if arr.size else 0.0


def _subject(name: str, chart: str) -> str:
    return f"{name}@{chart}"


def connection_in(m: Manifest, name: str, chart: str) -> ExtendedConnection:
    entry = m.connections[name]
    if chart == entry.chart:
        return entry.connection
    return transform_connection(entry.connection, m.transition(entry.chart, chart))


def field_in(m: Manifest, f: ExtendedField, home: str, chart: str) -> ExtendedField:
    return f if chart == home else transport(f, m.transition(home, chart))


def _chart_pairs(m: Manifest) -> list[tuple[str, str]]:
    out = []
    for t in m.transitions:
        out.append((t.source, t.target))
        out.append((t.target, t.source))
    return out


# ---------------------------------------------------------------- transitions


def run_transitions(ctx: Context) -> list[dict]:
    m = ctx.manifest
    rng = ctx.rng("transitions")
    out = []
    for src, dst in _chart_pairs(m):
        t = m.transition(src, dst)
        pts = m.charts[src].sample(rng, ctx.probes)

        def body(t=t, pts=pts, src=src, dst=dst):
            rows = check_theta_duality(t, pts)
            res = []
            for k, row in enumerate(rows):
                for key in ("symmetry", "jacobian_route", "duality", "inverse", "round_trip"):
                    res.append(_entry(ctx, f"transitions.{key}", f"{src}->{dst}", k, row[key]))
            return res

        out += _guard(ctx, "transitions.duality", f"{src}->{dst}", body)
    return out


# ---------------------------------------------------------------- tensoriality


def _valences(max_r: int = 2, max_s: int = 2) -> list[Valence]:
    return [Valence(r, s) for r in range(max_r + 1) for s in range(max_s + 1)]


def run_tensoriality(ctx: Context) -> list[dict]:
    m = ctx.manifest
    spec = m.spec
    rng = ctx.rng("tensoriality")
    out = []
    for src, dst in _chart_pairs(m):
        t = m.transition(src, dst)
        pair = f"{src}->{dst}"
        pts = ctx.points(rng, src)

        def round_trips(t=t, pts=pts, pair=pair):
            res = []
            for k, q in enumerate(pts):
                d = transition_data(t, q.base)
                worst = 0.0
                for v in _valences():
                    x = Tensor(spec.dim, v, rng.uniform(-1, 1, (spec.dim,) * v.rank))
                    there = transform_tensor_components(x, d.S, d.T, "to_tilde")
                    back = transform_tensor_components(there, d.S, d.T, "from_tilde")
                    worst = max(worst, tensor_residual(back, x))
                res.append(_entry(ctx, "tensoriality.tensor_round_trip", pair, k, worst))
                q_t, _ = transform_fiber_point(spec, t, q)
                q_b, _ = transform_fiber_point(spec, t.inverse(), q_t)
                res.append(_entry(ctx, "tensoriality.fiber_round_trip", pair, k, float(np.max(np.abs(q_b.flatten() - q.flatten())))))
                w = _random_tangent(rng, spec)
                w_t = transform_bundle_tangent(spec, t, q, w, "to_tilde")
                w_b = transform_bundle_tangent(spec, t, q_t, w_t, "from_tilde")
                res.append(_entry(ctx, "tensoriality.tangent_round_trip", pair, k, float(np.max(np.abs(w_b.flatten() - w.flatten())))))
            return res

        out += _guard(ctx, "tensoriality.fiber_round_trip", pair, round_trips)

        fields = [(p.name, p.value) for p in m.fields.values() if p.chart == src]
        fields += [(f"random{tuple(v)}", random_field(rng, spec, v, "random")) for v in (Valence(0, 0), Valence(1, 0), Valence(0, 1), Valence(1, 1))]
        for cname, entry in m.connections.items():
            if entry.chart != src:
                continue
            conn_a = entry.connection
            conn_b = transform_connection(conn_a, t)
            for fname, f in fields:
                subj = f"{cname}/{fname} {pair}"

                def cov(conn_a=conn_a, conn_b=conn_b, f=f, subj=subj):
                    r = check_tensoriality(
                        covariant_differential(conn_a, f), covariant_differential(conn_b, transport(f, t)), t, pts
                    )
                    return [_entry(ctx, "tensoriality.covariant", subj, k, v) for k, v in enumerate(r.values)]

                out += _guard(ctx, "tensoriality.covariant", subj, cov)

        derivs = [(p.name, p.value) for p in m.derivations.values() if p.chart == src]
        derivs.append(("random", random_derivation(rng, spec)))
        probe_field = random_field(rng, spec, Valence(1, 1), "probe")
        for dname, d in derivs:
            subj = f"{dname} {pair}"

            def der(d=d, subj=subj):
                fa = apply_derivation(d, probe_field)
                fb = apply_derivation(transform_derivation(d, t), transport(probe_field, t))
                r = check_tensoriality(fa, fb, t, pts)
                return [_entry(ctx, "tensoriality.derivation", subj, k, v) for k, v in enumerate(r.values)]

            out += _guard(ctx, "tensoriality.derivation", subj, der)
    return out


def _random_tangent(rng: np.random.Generator, spec):
    from .bundle import BundleTangent

    return BundleTangent.make(
        spec, rng.uniform(-1, 1, spec.dim), [rng.uniform(-1, 1, spec.slot_shape(P)) for P in range(spec.Q)]
    )


# ---------------------------------------------------------------- derivation axioms


def run_derivation_axioms(ctx: Context) -> list[dict]:
    m = ctx.manifest
    spec = m.spec
    rng = ctx.rng("derivation-axioms")
    out = []
    home = m.default_chart
    pts = ctx.points(rng, home)
    vals = [Valence(0, 0), Valence(1, 0), Valence(0, 1), Valence(1, 1)]
    for k, q in enumerate(pts):
        d = random_derivation(rng, spec)
        v = vals[k % len(vals)]
        f = random_field(rng, spec, v, "f")
        g = random_field(rng, spec, v, "g")

        def axioms(d=d, f=f, g=g, q=q, k=k):
            r = axiom_residuals(d, f, g, q)
            return [_entry(ctx, f"derivation-axioms.{key}", "random", k, r[key]) for key in ("leibniz", "contraction", "linearity")]

        out += _guard(ctx, "derivation-axioms.leibniz", "random", axioms)

    named = [(p.name, p.chart, p.value) for p in m.derivations.values()]
    named.append(("random", home, random_derivation(rng, spec)))
    for dname, chart, d in named:
        pts = ctx.points(rng, chart)

        def recover(d=d, pts=pts):
            res = []
            for k, q in enumerate(pts):
                got = recover_components(d, q)
                want = d.at(q)
                worst = max(tensor_residual(got[0], want[0]), tensor_residual(got[2], want[2]))
                for a, b in zip(got[1], want[1]):
                    worst = max(worst, tensor_residual(a, b))
                res.append(_entry(ctx, "derivation-axioms.recover", dname, k, worst))
            return res

        out += _guard(ctx, "derivation-axioms.recover", dname, recover)
        for src, dst in _chart_pairs(m):
            if src != chart:
                continue
            t = m.transition(src, dst)
            subj = f"{dname} {src}->{dst}"

            def trip(d=d, pts=pts, t=t):
                res = []
                dt = transform_derivation(d, t)
                for k, q in enumerate(pts):
                    q_t, _ = transform_fiber_point(spec, t, q)
                    _, (Z, ZP, G) = transform_derivation_components(dt, t, q_t, "from_tilde")
                    Z0, ZP0, G0 = d.at(q)
                    worst = max(tensor_residual(Z, Z0), tensor_residual(G, G0))
                    for a, b in zip(ZP, ZP0):
                        worst = max(worst, tensor_residual(a, b))
                    res.append(_entry(ctx, "derivation-axioms.transform_round_trip", subj, k, worst))
                return res

            out += _guard(ctx, "derivation-axioms.transform_round_trip", subj, trip)
    return out


# ---------------------------------------------------------------- covariant


def run_covariant(ctx: Context) -> list[dict]:
    m = ctx.manifest
    spec = m.spec
    rng = ctx.rng("covariant")
    out = []
    for cname, entry in m.connections.items():
        for chart in [entry.chart] + [b for a, b in _chart_pairs(m) if a == entry.chart]:
            subj = _subject(cname, chart)
            pts = ctx.points(rng, chart)

            def native(chart=chart, pts=pts):
                conn = connection_in(m, cname, chart)
                res = []
                diffs = [covariant_differential(conn, native_field(spec, P)) for P in range(spec.Q)]
                Y = [random_field(rng, spec, spec.types[P], f"Y{P + 1}") for P in range(spec.Q)]
                for k, q in enumerate(pts):
                    worst = max([_max(dfield.evaluate(q).data) for dfield in diffs], default=0.0)
                    res.append(_entry(ctx, "covariant.native", subj, k, worst))
                    worst = 0.0
                    for P in range(spec.Q):
                        y = Y[P].evaluate(q)
                        for R in range(spec.Q):
                            got = vertical_derivative(P, Y[P], native_field(spec, R)).evaluate(q)
                            want = y if P == R else Tensor.zeros(spec.dim, spec.types[R])
                            worst = max(worst, tensor_residual(got, want))
                    res.append(_entry(ctx, "covariant.vertical_native", subj, k, worst))
                return res

            out += _guard(ctx, "covariant.native", subj, native)

        for src, dst in _chart_pairs(m):
            if src != entry.chart:
                continue
            t = m.transition(src, dst)
            conn_t = transform_connection(entry.connection, t)
            pts = ctx.points(rng, src)
            subj = f"{cname} {src}->{dst}"

            def lift(conn_t=conn_t, pts=pts, t=t):
                return [
                    _entry(ctx, "covariant.lift_transform", subj, k, lift_transform_residual(entry.connection, conn_t, t, q))
                    for k, q in enumerate(pts)
                ]

            out += _guard(ctx, "covariant.lift_transform", subj, lift)
            if dst in entry.alternates:
                alt = entry.alternates[dst]

                def compare(conn_t=conn_t, alt=alt, pts=pts, t=t):
                    res = []
                    for k, q in enumerate(pts):
                        q_t, _ = transform_fiber_point(spec, t, q)
                        res.append(_entry(ctx, "covariant.connection_transform", subj, k, tensor_residual(conn_t.at(q_t), alt.at(q_t))))
                    return res

                out += _guard(ctx, "covariant.connection_transform", subj, compare)
    return out


# ---------------------------------------------------------------- curvature


def _connections_by_chart(m: Manifest) -> Iterator[tuple[str, str, ExtendedConnection]]:
    """Every manifest connection in its home chart, transformed charts and alternates."""
    for cname, entry in m.connections.items():
        yield cname, entry.chart, entry.connection
        for a, b in _chart_pairs(m):
            if a == entry.chart:
                yield cname, b, connection_in(m, cname, b)
        for chart, alt in entry.alternates.items():
            yield f"{cname}[supplied]", chart, alt


def run_curvature(ctx: Context) -> list[dict]:
    m = ctx.manifest
    spec = m.spec
    rng = ctx.rng("curvature")
    out = []
    for cname, chart, conn in _connections_by_chart(m):
        subj = _subject(cname, chart)
        pts = ctx.points(rng, chart)
        flat = m.connections[cname.split("[", 1)[0]].flat

        def body(conn=conn, pts=pts, flat=flat):
            res = []
            T = torsion(conn)
            R = static_curvature(conn)
            for k, q in enumerate(pts):
                tq = np.asarray(jets.primal(T.evaluate(q).data))
                res.append(_entry(ctx, "curvature.torsion_antisymmetry", subj, k, _max(tq + np.swapaxes(tq, 1, 2))))
                rq = np.asarray(jets.primal(R.evaluate(q).data))
                res.append(_entry(ctx, "curvature.R_antisymmetry", subj, k, _max(rq + np.swapaxes(rq, 2, 3))))
                if flat:
                    res.append(_entry(ctx, "curvature.flat", subj, k, _max(rq)))
            return res

        out += _guard(ctx, "curvature.R_antisymmetry", subj, body)

        if spec.Q:

            def fd(conn=conn, pts=pts):
                return [_entry(ctx, "curvature.dynamic_fd", subj, k, dynamic_fd_residual(conn, q)) for k, q in enumerate(pts)]

            out += _guard(ctx, "curvature.dynamic_fd", subj, fd)

    for k, ex in enumerate(m.expectations):
        chart = ex.chart or m.connections[ex.connection].chart
        subj = f"{ex.tensor}[{ex.index}] of {_subject(ex.connection, chart)}"

        def expect(ex=ex, chart=chart, k=k):
            conn = connection_in(m, ex.connection, chart)
            tol = ctx.override("curvature.expectation")
            tol = ex.tolerance if tol is None else tol
            q = spec.point(np.asarray(ex.point), fiber_args(spec, ex.args, "expectation"))
            fieldv = {"R": static_curvature(conn), "torsion": torsion(conn), "Gamma": conn.gamma}[ex.tensor]
            val = fieldv.evaluate(q)
            got = float(np.asarray(jets.primal(val.data))[parse_index_key(ex.index, val.valence, spec.dim)])
            return [_entry(ctx, "curvature.expectation", subj, k, abs(got - ex.value), tol, value=got, expected=ex.value)]

        out += _guard(ctx, "curvature.expectation", subj, expect)
    return out


def dynamic_fd_residual(conn: ExtendedConnection, q: FiberPoint, step: float = 1e-6) -> float:
    """Largest gap between dynamic curvature and central differences of the connection."""
    spec = conn.spec
    worst = 0.0
    for P in range(spec.Q):
        r, s = spec.types[P]
        D = np.asarray(jets.primal(dynamic_curvature(conn, P).evaluate(q).data))  # [k, K, i, j, H]
        for idx in multi_indices(spec.dim, r + s):
            H, K = idx[:r], idx[r:]
            args_p = [a.data.copy() for a in q.args]
            args_m = [a.data.copy() for a in q.args]
            args_p[P][idx] += step
            args_m[P][idx] -= step
            gp = np.asarray(jets.primal(conn.gamma.evaluate(spec.point(q.base, args_p)).data))
            gm = np.asarray(jets.primal(conn.gamma.evaluate(spec.point(q.base, args_m)).data))
            dg = (gp - gm) / (2 * step)  # [k, j, i]
            sel = D[(slice(None),) + tuple(K) + (slice(None), slice(None)) + tuple(H)]  # [k, i, j]
            worst = max(worst, _max(sel + np.swapaxes(dg, 1, 2)))
    return worst


# ---------------------------------------------------------------- commutators

_COMMUTATOR_VALENCES = (Valence(0, 0), Valence(1, 0), Valence(0, 1), Valence(1, 1))


def run_commutators(ctx: Context) -> list[dict]:
    m = ctx.manifest
    spec = m.spec
    rng = ctx.rng("commutators")
    out = []
    targets = [(cname, chart, conn) for cname, chart, conn in _connections_by_chart(m) if not cname.endswith("[supplied]")]
    for cname, chart, conn in targets:
        subj = _subject(cname, chart)
        pts = ctx.points(rng, chart)
        # fields quadratic in the fiber so that repeated vertical derivatives do not vanish
        fields = [random_field(rng, spec, v, f"F{tuple(v)}", fiber_degree=2) for v in _COMMUTATOR_VALENCES]
        X = random_field(rng, spec, Valence(1, 0), "X")
        Y = random_field(rng, spec, Valence(1, 0), "Y")
        A = [random_field(rng, spec, spec.types[P], f"A{P + 1}", fiber_degree=2) for P in range(spec.Q)]
        S1 = random_field(rng, spec, Valence(1, 1), "S1")
        S2 = random_field(rng, spec, Valence(1, 1), "S2")

        def body(conn=conn, pts=pts, fields=fields, X=X, Y=Y, A=A, S1=S1, S2=S2):
            res = []
            for k, q in enumerate(pts):
                worst: dict[str, float] = {}
                with jets.derivative_order(2):
                    for f in fields:
                        for rel, r, _ in commutator_residuals(conn, f, q):
                            worst[rel] = max(worst.get(rel, 0.0), r)
                    for f in fields[:3]:
                        for rel, r, _ in operator_residuals(conn, f, q, X, Y, A, S1, S2):
                            worst[rel] = max(worst.get(rel, 0.0), r)
                for rel in sorted(worst, key=_relation_key):
                    res.append(_entry(ctx, f"commutators.{rel}", subj, k, worst[rel]))
            return res

        out += _guard(ctx, "commutators.16.5", subj, body)
    return out


def _relation_key(rel: str) -> tuple[int, int]:
    a, b = rel.split(".")
    return int(a), int(b)


# ---------------------------------------------------------------- decomposition


def run_decomposition(ctx: Context) -> list[dict]:
    m = ctx.manifest
    spec = m.spec
    rng = ctx.rng("decomposition")
    out = []
    for cname, entry in m.connections.items():
        conn = entry.connection
        subj = _subject(cname, entry.chart)
        derivs = [(p.name, p.value) for p in m.derivations.values() if p.chart == entry.chart]
        derivs += [(f"random{k}", random_derivation(rng, spec)) for k in range(ctx.probes)]
        fields = [random_field(rng, spec, _COMMUTATOR_VALENCES[k % 4], f"f{k}") for k in range(ctx.probes)]
        pts = ctx.points(rng, entry.chart, len(derivs))

        def body(conn=conn, derivs=derivs, fields=fields, pts=pts):
            res = []
            for k, ((dname, d), q) in enumerate(zip(derivs, pts)):
                dec = decompose(d, conn)
                back = reconstruct(dec, conn)
                got, want = back.at(q), d.at(q)
                worst = max(tensor_residual(got[0], want[0]), tensor_residual(got[2], want[2]))
                for a, b in zip(got[1], want[1]):
                    worst = max(worst, tensor_residual(a, b))
                res.append(_entry(ctx, "decomposition.components", f"{subj}/{dname}", k, worst))
                worst = 0.0
                for f in fields:
                    worst = max(worst, tensor_residual(reconstruct_apply(dec, conn, f).evaluate(q), apply_derivation(d, f).evaluate(q)))
                res.append(_entry(ctx, "decomposition.apply", f"{subj}/{dname}", k, worst))
            return res

        out += _guard(ctx, "decomposition.apply", subj, body)
    return out


# ---------------------------------------------------------------- chain rule


def run_chainrule(ctx: Context) -> list[dict]:
    m = ctx.manifest
    spec = m.spec
    rng = ctx.rng("chainrule")
    out = []
    for k, job in enumerate(m.chainrule):
        f = m.fields[job.field].value
        sec = m.sections[job.section].value
        conn = m.connections[job.connection].connection
        chart = m.fields[job.field].chart
        direction = m.fields[job.direction].value if isinstance(job.direction, str) else np.asarray(job.direction, dtype=float)
        probes = [np.asarray(p) for p in job.probes] or list(m.charts[chart].sample(rng, ctx.probes))
        d_label = job.direction if isinstance(job.direction, str) else list(job.direction)
        subj = f"{job.field} along {job.section} with {job.connection}, direction {d_label}"

        def body(conn=conn, f=f, sec=sec, direction=direction, probes=probes, subj=subj):
            res = [
                _entry(ctx, "chainrule.residual", subj, i, chain_rule_residual(conn, f, sec, direction, [p]))
                for i, p in enumerate(probes)
            ]
            return res

        out += _guard(ctx, "chainrule.residual", subj, body)

    home = m.default_chart
    pts = m.charts[home].sample(rng, ctx.probes)
    dropped = {d: 0.0 for d in drop_options(spec)} if spec.Q else {}
    for k, base in enumerate(pts):
        conn = random_connection(rng, spec)
        f = random_field(rng, spec, _COMMUTATOR_VALENCES[k % 4], "f", fiber_degree=2)
        sec = Section(spec, tuple(random_field(rng, spec, spec.types[P], f"s{P + 1}", fiber_degree=0) for P in range(spec.Q)))
        y = rng.uniform(-1, 1, spec.dim)

        def rand(conn=conn, f=f, sec=sec, y=y, base=base, k=k):
            for drop in dropped:
                dropped[drop] = max(dropped[drop], chain_rule_residual(conn, f, sec, y, [base], drop=drop))
            return [_entry(ctx, "chainrule.random", f"random{k}", k, chain_rule_residual(conn, f, sec, y, [base]))]

        out += _guard(ctx, "chainrule.random", f"random{k}", rand)
    # a term matters when leaving it out breaks the identity somewhere among the random cases
    for drop, r in dropped.items():
        ratio = SENSITIVITY_FLOOR / r if r > 0 else float("inf")
        out.append(_entry(ctx, "chainrule.sensitivity", f"without {drop}", None, ratio, dropped_residual=r))
    return out


RUNNERS: dict[str, Callable[[Context], list[dict]]] = {
    "transitions": run_transitions,
    "tensoriality": run_tensoriality,
    "derivation-axioms": run_derivation_axioms,
    "covariant": run_covariant,
    "curvature": run_curvature,
    "commutators": run_commutators,
    "decomposition": run_decomposition,
    "chainrule": run_chainrule,
}
