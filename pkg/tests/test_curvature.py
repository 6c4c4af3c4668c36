import itertools

import numpy as np
import pytest
import sympy

from extensor import jets
from extensor.bundle import BundleSpec
from extensor.connection import ExtendedConnection, transform_connection
from extensor.curvature import (
    curvature_pack,
    dynamic_curvature,
    omega_tensor,
    operator_residuals,
    static_curvature,
    theta_tensor,
    torsion,
    verify_commutators,
)
from extensor.errors import DepthLimit, SlotOutOfRange, ValidationError

from extensor.multitensor import act
from extensor.testfields import random_connection, random_field

from helpers import fd_field_partials, riemann_oracle


def test_torsion_examples():
    spec = BundleSpec(2)
    sym = ExtendedConnection.from_map(spec, {"1;12": "x1", "1;21": "x1", "2;11": "x2^2"})
    q = spec.point([0.3, 0.7])
    assert not np.any(torsion(sym).evaluate(q).array)
    conn = ExtendedConnection.from_map(spec, {"1;12": "2.5", "1;21": "-1"})
    T = torsion(conn).evaluate(q).array
    assert T[0, 0, 1] == 3.5 and T[0, 1, 0] == -3.5
    assert np.count_nonzero(T) == 2


def test_torsion_antisymmetric(spec_q2):
    rng = np.random.default_rng(51)
    conn = random_connection(rng, spec_q2)
    for _ in range(50):
        T = torsion(conn).evaluate(spec_q2.random_point(rng, rng.normal(size=2))).array
        assert np.max(np.abs(T + np.swapaxes(T, 1, 2))) <= 1e-12


def test_zero_connection_has_no_curvature(spec_q2, rng):
    pack = curvature_pack(ExtendedConnection.flat(spec_q2))
    q = spec_q2.random_point(rng, [0.5, 0.5])
    for f in (pack.torsion, pack.static_R, *pack.dynamic_D, *pack.omega_R, *itertools.chain(*pack.theta_PR)):
        assert not np.any(f.evaluate(q).array)


def test_flat_in_polar(polar):
    rng = np.random.default_rng(52)
    entry = polar.connections["flat"]
    for conn in (entry.alternates["polar"], transform_connection(entry.connection, polar.transition("cart", "polar"))):
        R = static_curvature(conn)
        for _ in range(20):
            q = polar.spec.random_point(rng, [rng.uniform(0.6, 2), rng.uniform(-1, 1)])
            assert np.max(np.abs(R.evaluate(q).array)) < 1e-8


def test_sphere_riemann(sphere):
    th, ph = sympy.symbols("th ph")
    R_oracle = riemann_oracle([[1, 0], [0, sympy.sin(th) ** 2]], [th, ph])
    conn = sphere.connections["levi-civita"].connection
    R = static_curvature(conn)
    q = sphere.spec.point([np.pi / 4, 0.3])
    assert abs(R.evaluate(q).array[0, 1, 0, 1] - 0.5) < 1e-8
    for p in [(np.pi / 4, 0.3), (1.1, -2.0), (2.3, 0.4)]:
        got = R.evaluate(sphere.spec.point(list(p))).array
        for idx, fn in R_oracle.items():
            assert abs(got[idx] - float(fn(*p))) < 1e-8


def test_sphere_axial_curvature(sphere):
    # the same tensor in the second chart, from the supplied Christoffel symbols there
    t = sphere.transition("angles", "axial")
    R_ang = static_curvature(sphere.connections["levi-civita"].connection)
    R_ax = static_curvature(sphere.connections["levi-civita"].alternates["axial"])
    from extensor.extfield import check_tensoriality

    rng = np.random.default_rng(53)
    probes = [sphere.spec.point([rng.uniform(0.5, 2.6), rng.uniform(-3, 3)]) for _ in range(10)]
    assert check_tensoriality(R_ang, R_ax, t, probes).max < 1e-8


def fiber_riemann_oracle(gamma_src, n, fiber):
    """Static curvature for one vector argument, from sympy derivatives of the connection.

    The base derivative is replaced by the horizontal one,
    ``d_i - L^v_i d/dT^v`` with ``L^v_i = G^v_{i a} T^a``.
    """
    xs = sympy.symbols(f"x1:{n + 1}")
    ts = sympy.symbols(f"t1:{n + 1}")
    names = {f"x{i + 1}": xs[i] for i in range(n)} | {fiber[i]: ts[i] for i in range(n)}
    G = [[[sympy.sympify(gamma_src[k][j][i], locals=names) for i in range(n)] for j in range(n)] for k in range(n)]
    L = [[sum(G[v][i][a] * ts[a] for a in range(n)) for i in range(n)] for v in range(n)]

    def horiz(e, i):
        return sympy.diff(e, xs[i]) - sum(L[v][i] * sympy.diff(e, ts[v]) for v in range(n))

    R = {}
    for k, h, i, j in itertools.product(range(n), repeat=4):
        e = horiz(G[k][j][h], i) - horiz(G[k][i][h], j)
        e += sum(G[k][i][a] * G[a][j][h] - G[k][j][a] * G[a][i][h] for a in range(n))
        R[k, h, i, j] = sympy.lambdify(xs + ts, e)
    return R


def test_fiber_dependent_static_curvature_oracle():
    spec = BundleSpec(2, ((1, 0),))
    rng = np.random.default_rng(54)
    conn = random_connection(rng, spec, fiber_degree=2)
    from extensor.smoothexpr import to_source

    comps = conn.gamma.components
    src = [[[to_source(comps[k, j, i]).replace("^", "**").replace("T1_{1;}", "t1").replace("T1_{2;}", "t2")
             for i in range(2)] for j in range(2)] for k in range(2)]
    R_oracle = fiber_riemann_oracle(src, 2, ["t1", "t2"])
    R = static_curvature(conn)
    for _ in range(5):
        q = spec.random_point(rng, rng.normal(size=2))
        got = R.evaluate(q).array
        vals = list(q.base) + list(q.args[0].array)
        for idx, fn in R_oracle.items():
            assert abs(got[idx] - float(fn(*vals))) < 1e-10


def test_static_curvature_antisymmetric(spec_q2):
    rng = np.random.default_rng(55)
    R = static_curvature(random_connection(rng, spec_q2))
    for _ in range(10):
        a = R.evaluate(spec_q2.random_point(rng, rng.normal(size=2))).array
        assert np.max(np.abs(a + np.swapaxes(a, 2, 3))) <= 1e-12


def test_dynamic_curvature_linear_term():
    spec = BundleSpec(2, ((0, 2),))
    conn = ExtendedConnection.from_map(spec, {"2;12": "0.7*T1_{;21} + x1"})
    D = dynamic_curvature(conn, 0).evaluate(spec.point([0.1, 0.2], [np.zeros((2, 2))])).array
    # D[k, K1, K2, i, j] = -dGamma[k, j, i]/dT[K1, K2]; here k=2, j=1, i=2, T index (2,1)
    want = np.zeros((2,) * 5)
    want[1, 1, 0, 1, 0] = -0.7
    assert np.array_equal(D, want)


def test_dynamic_curvature_fiber_independent(sphere):
    with pytest.raises(SlotOutOfRange):
        dynamic_curvature(sphere.connections["levi-civita"].connection, 0)
    spec = BundleSpec(2, ((1, 0),))
    conn = ExtendedConnection.from_map(spec, {"1;22": "sin(x1)"})
    assert not np.any(dynamic_curvature(conn, 0).evaluate(spec.point([1.0, 2.0], [np.ones(2)])).array)


def test_dynamic_curvature_fd(spec_q2):
    rng = np.random.default_rng(56)
    conn = random_connection(rng, spec_q2, fiber_degree=2)
    for _ in range(5):
        q = spec_q2.random_point(rng, rng.normal(size=2))
        fd = fd_field_partials(conn.gamma, q)  # [k, j, i, coordinate]
        D0 = dynamic_curvature(conn, 0).evaluate(q).array  # [k, i, j, H]
        D1 = dynamic_curvature(conn, 1).evaluate(q).array  # [k, K1, K2, i, j]
        for k, j, i, h in itertools.product(range(2), repeat=4):
            assert abs(D0[k, i, j, h] + fd[k, j, i, 2 + h]) < 1e-5
            for h2 in range(2):
                assert abs(D1[k, h, h2, i, j] + fd[k, j, i, 4 + 2 * h + h2]) < 1e-5


def theta_loops(D, arg, rR, sR, n):
    """Theta[P, R] for slot P of type (0,2) and R of type (rR, sR) <= (1,0) or (0,2), by explicit loops.

    D is the dynamic curvature of slot P with layout [k, K1, K2, i, j].
    """
    out = {}
    for I in itertools.product(range(n), repeat=rR):
        for J in itertools.product(range(n), repeat=sR):
            for K in itertools.product(range(n), repeat=2):
                for j in range(n):
                    total = 0.0
                    for m in range(sR):
                        for w in range(n):
                            Jw = J[:m] + (w,) + J[m + 1 :]
                            total += D[(w,) + K + (J[m], j)] * arg[I + Jw]
                    for m in range(rR):
                        for w in range(n):
                            Iw = I[:m] + (w,) + I[m + 1 :]
                            total -= D[(I[m],) + K + (w, j)] * arg[Iw + J]
                    out[I + K + J + (j,)] = total
    return out


def test_theta_brute_force(spec_q2):
    rng = np.random.default_rng(57)
    conn = random_connection(rng, spec_q2, fiber_degree=2)
    q = spec_q2.random_point(rng, rng.normal(size=2))
    D = dynamic_curvature(conn, 1).evaluate(q).array
    for R, (rR, sR) in enumerate(spec_q2.types):
        Th = theta_tensor(conn, 1, R).evaluate(q).array
        for idx, val in theta_loops(D, q.args[R].array, rR, sR, 2).items():
            assert abs(Th[idx] - val) < 1e-12


def test_theta_contraction_matches_action(spec_q2):
    # contracting Theta with X and the slot-P direction A gives -S.T[R], with S = D(X, A)
    rng = np.random.default_rng(58)
    conn = random_connection(rng, spec_q2, fiber_degree=2)
    q = spec_q2.random_point(rng, rng.normal(size=2))
    X = rng.normal(size=2)
    for P in range(2):
        A = rng.normal(size=spec_q2.slot_shape(P))
        D = dynamic_curvature(conn, P).evaluate(q).array
        if P == 0:
            S = np.einsum("abch,c,h->ab", D, X, A)
        else:
            S = np.einsum("aklbc,c,kl->ab", D, X, A)
        for R in range(2):
            Th = theta_tensor(conn, P, R).evaluate(q).array
            rR, sR = spec_q2.types[R]
            if P == 0:  # [I_R, J_R, j, H]
                U = np.einsum("...jh,j,h->...", Th, X, A)
            else:  # [I_R, K1, K2, J_R, j]
                U = np.moveaxis(Th, (rR, rR + 1), (-3, -2))
                U = np.einsum("...klj,kl,j->...", U, A, X)
            want = -act(S, q.args[R]).array
            assert np.max(np.abs(U - want)) < 1e-10


def test_theta_single_vector_slot():
    spec = BundleSpec(2, ((1, 0),))
    rng = np.random.default_rng(59)
    conn = random_connection(rng, spec, fiber_degree=2)
    q = spec.random_point(rng, rng.normal(size=2))
    D = dynamic_curvature(conn, 0).evaluate(q).array  # [k, i, j, H]
    Th = theta_tensor(conn, 0, 0).evaluate(q).array  # [I, j, H]
    assert np.allclose(Th, -np.einsum("awjh,w->ajh", D, q.args[0].array), atol=1e-14)


def test_omega_brute_force(spec_q2):
    rng = np.random.default_rng(60)
    conn = random_connection(rng, spec_q2)
    q = spec_q2.random_point(rng, rng.normal(size=2))
    Rq = static_curvature(conn).evaluate(q).array
    X, Y = rng.normal(size=2), rng.normal(size=2)
    S = np.einsum("khij,i,j->kh", Rq, X, Y)
    for R in range(2):
        Om = omega_tensor(conn, R).evaluate(q).array  # [I, i, j, J]
        r = spec_q2.types[R].r
        Om = np.moveaxis(Om, (r, r + 1), (-2, -1))
        got = np.einsum("...ij,i,j->...", Om, X, Y)
        assert np.max(np.abs(got + act(S, q.args[R]).array)) < 1e-10
    # one vector argument: a single term
    Om = omega_tensor(conn, 0).evaluate(q).array
    assert np.allclose(Om, -np.einsum("awij,w->aij", Rq, q.args[0].array), atol=1e-14)


def test_omega_flat(polar):
    conn = polar.connections["flat"].alternates["polar"]
    q = polar.spec.random_point(np.random.default_rng(61), [1.0, 0.2])
    assert all(np.max(np.abs(omega_tensor(conn, R).evaluate(q).array)) < 1e-8 for R in range(2))


def _fields(spec, rng, degree=2):
    return [random_field(rng, spec, v, f"F{v[0]}{v[1]}", fiber_degree=degree) for v in [(0, 0), (1, 0), (0, 1), (1, 1)]]


def test_commutators_random_q2(spec_q2):
    rng = np.random.default_rng(62)
    conn = random_connection(rng, spec_q2)
    probes = [spec_q2.random_point(rng, rng.normal(size=2)) for _ in range(3)]
    rows = verify_commutators(conn, _fields(spec_q2, rng), probes)
    ids = {r["id"] for r in rows}
    assert ids == {"16.1", "16.2", "16.3", "16.4", "16.5", "16.6", "16.7"}
    assert all(r["pass"] for r in rows)
    assert max(r["residual"] for r in rows if r["id"] == "16.1") < 1e-10
    # the relations are not vacuous
    assert max(r["lhs_size"] for r in rows if r["id"] == "16.5") > 1e-3


def test_commutators_flat_fiber_independent():
    spec = BundleSpec(2, ((1, 0),))
    rng = np.random.default_rng(63)
    phi = random_field(rng, spec, (0, 0), fiber_degree=0)
    X = random_field(rng, spec, (1, 0), fiber_degree=0)
    w = random_field(rng, spec, (0, 1), fiber_degree=0)
    rows = verify_commutators(ExtendedConnection.flat(spec), [phi, X, w], [spec.random_point(rng, [0.1, 0.2])])
    assert all(r["residual"] < 1e-12 for r in rows)


def test_sphere_ricci_identity(sphere):
    th, ph = sympy.symbols("th ph")
    R_oracle = riemann_oracle([[1, 0], [0, sympy.sin(th) ** 2]], [th, ph])
    conn = sphere.connections["levi-civita"].connection
    X = sphere.fields["X"].value
    from extensor.connection import covariant_differential

    dd = covariant_differential(conn, covariant_differential(conn, X))
    for p in [(0.8, 0.3), (1.9, -1.0)]:
        q = sphere.spec.point(list(p))
        a = dd.evaluate(q).array  # [k, j, i]
        lhs = np.swapaxes(a, 1, 2) - a
        Rq = np.array([[[[R_oracle[k, h, i, j](*p) for j in range(2)] for i in range(2)] for h in range(2)] for k in range(2)])
        rhs = np.einsum("khij,h->kij", Rq, X.evaluate(q).array)
        assert np.max(np.abs(lhs - rhs)) < 1e-6
    rows = verify_commutators(conn, [sphere.fields[k].value for k in ("f", "X", "w")], [q])
    assert all(r["pass"] for r in rows)


def test_commutators_need_all_kinds(spec_q2, rng):
    conn = random_connection(rng, spec_q2)
    with pytest.raises(ValidationError):
        verify_commutators(conn, [random_field(rng, spec_q2, (1, 0))], [])


def test_commutators_depth_limit(spec_q2, rng):
    from extensor.curvature import commutator_residuals

    conn = random_connection(rng, spec_q2)
    q = spec_q2.random_point(rng, [0.1, 0.1])
    with jets.derivative_order(1):
        with pytest.raises(DepthLimit):
            commutator_residuals(conn, random_field(rng, spec_q2, (1, 0)), q)


def test_operator_identities(spec_q2):
    rng = np.random.default_rng(64)
    conn = random_connection(rng, spec_q2)
    X = random_field(rng, spec_q2, (1, 0), "X")
    Y = random_field(rng, spec_q2, (1, 0), "Y")
    A = [random_field(rng, spec_q2, v, f"A{P}") for P, v in enumerate(spec_q2.types)]
    S1, S2 = random_field(rng, spec_q2, (1, 1), "S1"), random_field(rng, spec_q2, (1, 1), "S2")
    tol = {"15.1": 1e-10, "15.2": 1e-9, "15.3": 1e-9, "15.5": 1e-6, "15.13": 1e-6}
    for f in _fields(spec_q2, rng)[1:3]:
        q = spec_q2.random_point(rng, rng.normal(size=2))
        with jets.derivative_order(2):
            rows = operator_residuals(conn, f, q, X, Y, A, S1, S2)
        assert {r[0] for r in rows} == set(tol)
        for rel, res, size in rows:
            assert res < tol[rel], (rel, res)


def test_torsion_in_commutator(polar):
    # a connection with torsion still satisfies the two-covariant relation
    conn = polar.connections["fiber"].connection
    rng = np.random.default_rng(65)
    q = polar.spec.random_point(rng, [1.0, 0.3])
    assert np.max(np.abs(torsion(conn).evaluate(q).array)) > 1e-2
    fields = [polar.fields[k].value for k in ("phi", "X", "w", "A")]
    rows = verify_commutators(conn, fields, [q])
    assert all(r["pass"] for r in rows)


def test_wrong_connection_fails_commutators(spec_q2):
    # feeding the relation a curvature from a different connection must be caught
    rng = np.random.default_rng(66)
    c1 = random_connection(rng, spec_q2)
    X = random_field(rng, spec_q2, (1, 0))
    q = spec_q2.random_point(rng, rng.normal(size=2))
    from extensor.connection import covariant_differential

    dd = covariant_differential(c1, covariant_differential(c1, X)).evaluate(q).array
    lhs = np.swapaxes(dd, -1, -2) - dd
    assert np.max(np.abs(lhs)) > 1e-3
