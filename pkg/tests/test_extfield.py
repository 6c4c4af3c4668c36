import numpy as np
import pytest

from extensor.atlas import Transition
from extensor.bundle import BundleSpec, native_field
from extensor.errors import ShapeMismatch, ValidationError
from extensor.extfield import (
    ExprField,
    add_fields,
    check_tensoriality,
    constant_field,
    contract_field,
    fiber_differential,
    partials,
    product_fields,
    scale_field,
    transport,
    zero_field,
)
from extensor.multitensor import Tensor, Valence
from extensor.testfields import random_field

from helpers import fd_field_partials

POLAR = Transition("cart", "polar", 2, ("sqrt(x1^2 + x2^2)", "atan2(x2, x1)"), ("x1*cos(x2)", "x1*sin(x2)"))
ETA = np.diag([1.0, -1.0, -1.0, -1.0])


def lagrangian_oracle(F):
    total = 0.0
    for i in range(4):
        for j in range(4):
            for a in range(4):
                for b in range(4):
                    total += ETA[i, j] * ETA[a, b] * F[i, a] * F[j, b]
    return -total / (16 * np.pi)


def field_strength(E, H):
    E1, E2, E3 = E
    H1, H2, H3 = H
    return np.array(
        [[0, -E1, -E2, -E3], [E1, 0, -H3, H2], [E2, H3, 0, -H1], [E3, -H2, H1, 0]], dtype=float
    )


def test_constant_field(spec_q2, rng):
    c = constant_field(spec_q2, Tensor(2, (1, 1), np.arange(4.0).reshape(2, 2)))
    for _ in range(5):
        assert np.array_equal(c.evaluate(spec_q2.random_point(rng, rng.normal(size=2))).array, [[0, 1], [2, 3]])
    dx, dT = partials(c, spec_q2.random_point(rng, [0.1, 0.2]))
    assert not np.any(dx) and not any(np.any(d) for d in dT)


def test_em_lagrangian_value(em):
    L = em.fields["L"].value
    q = em.spec.point(np.zeros(4), [field_strength((1, 0, 0), (0, 0, 0))])
    assert L.evaluate(q).data == pytest.approx(1 / (8 * np.pi), abs=1e-15)


def test_em_lagrangian_quadruple_sum(em, rng):
    L = em.fields["L"].value
    for _ in range(10):
        F = field_strength(rng.normal(size=3), rng.normal(size=3))
        q = em.spec.point(rng.normal(size=4), [F])
        assert abs(L.evaluate(q).data - lagrangian_oracle(F)) < 1e-12


def test_product_rule_example():
    spec = BundleSpec(2, ((1, 0),))
    f = ExprField(spec, (0, 0), np.array("x1*T1_{1;}", dtype=object))
    rng = np.random.default_rng(0)
    for _ in range(5):
        q = spec.random_point(rng, rng.normal(size=2))
        dx, (dT,) = partials(f, q)
        T1, x1 = q.args[0].array[0], q.base[0]
        assert np.allclose(dx, [T1, 0]) and np.allclose(dT, [x1, 0])


def test_native_partials(spec_q2, rng):
    q = spec_q2.random_point(rng, [0.5, 0.5])
    dx, dT = partials(native_field(spec_q2, 1), q)
    assert dx.shape == (2, 2, 2) and not np.any(dx)
    assert np.array_equal(dT[1].reshape(4, 4), np.eye(4))


def test_partials_against_fd(spec_q2):
    rng = np.random.default_rng(21)
    worst = 0.0
    for _ in range(50):
        v = [(0, 0), (1, 0), (0, 1), (1, 1)][int(rng.integers(4))]
        f = random_field(rng, spec_q2, v, fiber_degree=2)
        q = spec_q2.random_point(rng, rng.uniform(-1, 1, 2))
        dx, dT = partials(f, q)
        rank = Valence(*v).rank
        got = [np.asarray(dx).reshape((2,) * rank + (2,))]
        got += [np.asarray(d).reshape((2,) * rank + (-1,)) for d in dT]
        got = np.concatenate(got, axis=-1)
        want = fd_field_partials(f, q, h=1e-5)
        worst = max(worst, float(np.max(np.abs(got - want)) / max(1.0, np.max(np.abs(want)))))
    assert worst < 1e-5


def test_fiber_differential_layout():
    spec = BundleSpec(2, ((1, 1),))
    f = ExprField.from_map(spec, (1, 0), {"1;": "T1_{1;2}", "2;": "3*T1_{2;1}*x1"})
    q = spec.point([2.0, 0.0], [np.zeros((2, 2))])
    d = fiber_differential(f, 0).evaluate(q)  # [I, K, H] = d f[I] / d T[H, K]
    assert d.valence == (2, 1)
    want = np.zeros((2, 2, 2))
    want[0, 1, 0] = 1.0
    want[1, 0, 1] = 6.0
    assert np.array_equal(d.array, want)


def test_pointwise_action_via_contraction(spec_q2, rng):
    S = random_field(rng, spec_q2, (1, 1), "S")
    X = random_field(rng, spec_q2, (1, 0), "X")
    q = spec_q2.random_point(rng, [0.3, 0.9])
    C = contract_field(product_fields(S, X), 1, 0).evaluate(q)
    assert np.allclose(C.array, S.evaluate(q).array @ X.evaluate(q).array, atol=1e-15)


def test_add_zero(spec_q2):
    rng = np.random.default_rng(2)
    f = random_field(rng, spec_q2, (1, 1))
    g = add_fields(f, zero_field(spec_q2, (1, 1)))
    for _ in range(20):
        q = spec_q2.random_point(rng, rng.normal(size=2))
        assert np.array_equal(g.evaluate(q).array, f.evaluate(q).array)


def test_leibniz_against_fd(spec_q2):
    rng = np.random.default_rng(3)
    f = random_field(rng, spec_q2, (1, 0), "f")
    g = random_field(rng, spec_q2, (0, 1), "g")
    fg = product_fields(f, g)
    for _ in range(5):
        q = spec_q2.random_point(rng, rng.normal(size=2))
        dfg = fd_field_partials(fg, q)
        df, dg = fd_field_partials(f, q), fd_field_partials(g, q)
        want = np.einsum("ak,b->abk", df, g.evaluate(q).array) + np.einsum("a,bk->abk", f.evaluate(q).array, dg)
        assert np.max(np.abs(dfg - want)) < 1e-9


def test_algebra_laws(spec_q2):
    rng = np.random.default_rng(4)
    a, b, c = (random_field(rng, spec_q2, (1, 0), k) for k in "abc")
    h = random_field(rng, spec_q2, (0, 1), "h")
    for _ in range(10):
        q = spec_q2.random_point(rng, rng.normal(size=2))
        left = add_fields(add_fields(a, b), c).evaluate(q).array
        right = add_fields(a, add_fields(b, c)).evaluate(q).array
        assert np.max(np.abs(left - right)) < 1e-12
        left = product_fields(add_fields(a, b), h).evaluate(q).array
        right = add_fields(product_fields(a, h), product_fields(b, h)).evaluate(q).array
        assert np.max(np.abs(left - right)) < 1e-12
        left = product_fields(product_fields(a, h), b).evaluate(q).array
        right = product_fields(a, product_fields(h, b)).evaluate(q).array
        assert np.max(np.abs(left - right)) < 1e-12


def test_algebra_shape_errors(spec_q2):
    rng = np.random.default_rng(5)
    with pytest.raises(ShapeMismatch):
        add_fields(random_field(rng, spec_q2, (1, 0)), random_field(rng, spec_q2, (0, 1)))
    with pytest.raises(ShapeMismatch):
        contract_field(random_field(rng, spec_q2, (2, 0)), 0, 0)
    with pytest.raises(ShapeMismatch):
        scale_field(random_field(rng, spec_q2, (1, 0)), random_field(rng, spec_q2, (1, 0)))


def test_expr_field_validation(spec_q2):
    with pytest.raises(ShapeMismatch):
        ExprField(spec_q2, (1, 0), np.array(["x1", "x2", "x1"], dtype=object))
    with pytest.raises(ValidationError):
        ExprField(spec_q2, (0, 0), np.array("T3_{1;}", dtype=object))


def _probes(spec, rng, count=10):
    return [spec.random_point(rng, [rng.uniform(0.5, 2), rng.uniform(-1, 1)]) for _ in range(count)]


def test_scalar_invariant_pair(spec_q2):
    src = "T2_{;11}*T1_{1;}^2 + T2_{;12}*T1_{1;}*T1_{2;} + T2_{;21}*T1_{2;}*T1_{1;} + T2_{;22}*T1_{2;}^2"
    f = ExprField(spec_q2, (0, 0), np.array(src, dtype=object), "quad")
    res = check_tensoriality(f, f, POLAR, _probes(spec_q2, np.random.default_rng(6)))
    assert res.max < 1e-9


def test_native_fields_are_tensorial(spec_q2):
    rng = np.random.default_rng(7)
    for P in range(2):
        f = native_field(spec_q2, P)
        assert check_tensoriality(f, f, POLAR, _probes(spec_q2, rng)).max < 1e-9


def test_mismatched_pair_flagged(spec_q2):
    rng = np.random.default_rng(8)
    f = ExprField(spec_q2, (0, 0), np.array("1 + x1^2", dtype=object))
    probes = _probes(spec_q2, rng)
    res = check_tensoriality(f, scale_field(2.0, transport(f, POLAR)), POLAR, probes)
    want = [abs(f.evaluate(q).data) for q in probes]
    assert np.allclose(res.values, want) and not res.passes(1e-6)


def test_transport_is_tensorial(spec_q2):
    rng = np.random.default_rng(9)
    f = random_field(rng, spec_q2, (1, 2))
    assert check_tensoriality(f, transport(f, POLAR), POLAR, _probes(spec_q2, rng)).max < 1e-12
