import numpy as np
import pytest

from extensor.atlas import Transition
from extensor.bundle import (
    BundleSpec,
    BundleTangent,
    Section,
    native_field,
    transform_bundle_tangent,
    transform_fiber_point,
    transform_tensor_components,
    vertical_lift,
)
from extensor.errors import ShapeMismatch, SlotOutOfRange
from extensor.extfield import ExprField, directional, partials
from extensor.multitensor import Tensor, Valence

from helpers import fd_field_partials

POLAR = Transition("cart", "polar", 2, ("sqrt(x1^2 + x2^2)", "atan2(x2, x1)"), ("x1*cos(x2)", "x1*sin(x2)"))


def linear_transition(A, name="b"):
    Ai = np.linalg.inv(A)
    n = len(A)
    row = lambda M, i: " + ".join(f"({float(M[i, j])!r})*x{j + 1}" for j in range(n))  # noqa: E731
    return Transition("a", name, n, tuple(row(A, i) for i in range(n)), tuple(row(Ai, i) for i in range(n)))


def test_dimension_bookkeeping():
    spec = BundleSpec(3, ((1, 0), (0, 2), (1, 1)))
    assert spec.fiber_dim == 3 + 9 + 9
    assert spec.total_dim == 3 + 21
    q = spec.random_point(np.random.default_rng(0), [0.1, 0.2, 0.3])
    assert q.flatten().size == spec.total_dim
    assert np.array_equal(spec.unflatten(q.flatten()).flatten(), q.flatten())
    assert len(spec.variable_names) == spec.total_dim


def test_q_zero():
    spec = BundleSpec(2)
    assert spec.Q == 0 and spec.total_dim == 2
    q, _ = transform_fiber_point(spec, POLAR, spec.point([1.0, 1.0]))
    assert np.allclose(q.base, [np.sqrt(2), np.pi / 4])


def test_point_shape_checks():
    spec = BundleSpec(2, ((1, 0),))
    with pytest.raises(ShapeMismatch):
        spec.point([1, 2], [])
    with pytest.raises(ShapeMismatch):
        spec.point([1, 2], [Tensor(2, (0, 1), np.zeros(2))])
    with pytest.raises(SlotOutOfRange):
        spec.slot(1)


def test_identity_transition_fixes_point():
    spec = BundleSpec(2, ((1, 1),))
    q = spec.random_point(np.random.default_rng(1), [0.5, 0.5])
    t = Transition("a", "b", 2, ("x1", "x2"), ("x1", "x2"))
    q2, _ = transform_fiber_point(spec, t, q)
    assert np.array_equal(q2.flatten(), q.flatten())


def test_linear_vector_argument():
    A = np.array([[2.0, 1.0], [0.0, 3.0]])
    spec = BundleSpec(2, ((1, 0),))
    q = spec.point([1.0, 1.0], [np.array([0.5, -1.0])])
    q2, _ = transform_fiber_point(spec, linear_transition(A), q)
    assert np.allclose(q2.args[0].array, A @ [0.5, -1.0], atol=1e-15)


def test_fiber_point_round_trip():
    spec = BundleSpec(2, ((1, 0), (0, 2), (2, 1)))
    rng = np.random.default_rng(2)
    for _ in range(20):
        q = spec.random_point(rng, [rng.uniform(0.5, 2), rng.uniform(-1, 1)])
        q2, _ = transform_fiber_point(spec, POLAR, q)
        back, _ = transform_fiber_point(spec, POLAR.inverse(), q2)
        assert np.max(np.abs(back.flatten() - q.flatten())) < 1e-9


def test_inverse_law_oracle():
    # untilded components rebuilt from tilded ones with S on uppers and T on lowers
    spec = BundleSpec(2, ((1, 1),))
    q = spec.random_point(np.random.default_rng(3), [1.2, 0.3])
    q2, d = transform_fiber_point(spec, POLAR, q)
    X = q2.args[0].array
    want = np.einsum("ia,ab,bj->ij", d.S, X, d.T)
    assert np.allclose(want, q.args[0].array, atol=1e-12)


def test_group_action_on_linear_charts():
    A = np.array([[1.0, 2.0], [0.5, 1.5]])
    B = np.array([[0.3, -1.0], [2.0, 0.1]])
    spec = BundleSpec(2, ((1, 0), (1, 2)))
    q = spec.random_point(np.random.default_rng(4), [0.4, -0.2])
    step, _ = transform_fiber_point(spec, linear_transition(A), q)
    twice, _ = transform_fiber_point(spec, linear_transition(B), step)
    once, _ = transform_fiber_point(spec, linear_transition(B @ A), q)
    assert np.max(np.abs(twice.flatten() - once.flatten())) < 1e-9


def test_transform_components_examples():
    x = Tensor(2, (1, 0), np.array([1.0, 1.0]))
    S, T = np.diag([2.0, 3.0]), np.diag([0.5, 1 / 3])
    assert np.array_equal(transform_tensor_components(x, S, T, "from_tilde").array, [2, 3])
    I = np.eye(2)
    y = Tensor(2, (1, 1), np.arange(4.0).reshape(2, 2))
    assert np.array_equal(transform_tensor_components(y, I, I, "to_tilde").array, y.array)


def test_transform_components_round_trip():
    rng = np.random.default_rng(5)
    for _ in range(100):
        n = int(rng.integers(1, 5))
        v = Valence(int(rng.integers(0, 3)), int(rng.integers(0, 3)))
        T = rng.normal(size=(n, n)) + 3 * np.eye(n)
        S = np.linalg.inv(T)
        x = Tensor(n, v, rng.normal(size=(n,) * v.rank))
        back = transform_tensor_components(transform_tensor_components(x, S, T, "to_tilde"), S, T, "from_tilde")
        assert np.max(np.abs(back.array - x.array)) < 1e-10


def test_bundle_tangent_affine_and_vertical():
    A = np.array([[2.0, 1.0], [0.0, 3.0]])
    t = linear_transition(A)
    spec = BundleSpec(2, ((1, 0),))
    q = spec.point([1.0, 1.0], [np.array([0.2, 0.4])])
    w = BundleTangent.make(spec, u=[1.0, -1.0], v=[np.array([0.5, 0.5])])
    w2 = transform_bundle_tangent(spec, t, q, w)
    assert np.allclose(w2.u.array, A @ [1, -1]) and np.allclose(w2.v[0].array, A @ [0.5, 0.5])
    vert = vertical_lift(spec, 0, Tensor(2, (1, 0), np.array([1.0, 2.0])))
    assert not vertical_free_u(transform_bundle_tangent(spec, POLAR, q, vert))


def vertical_free_u(w):
    return np.any(w.u.array)


def test_tangent_transform_is_pushforward():
    # the transformed tangent equals the derivative of the transformed point
    spec = BundleSpec(2, ((1, 0), (0, 2)))
    rng = np.random.default_rng(6)
    q = spec.random_point(rng, [1.1, 0.4])
    w = BundleTangent.make(spec, u=rng.normal(size=2), v=[rng.normal(size=2), rng.normal(size=(2, 2))])
    got = transform_bundle_tangent(spec, POLAR, q, w).flatten()
    h = 1e-6
    hi, lo = spec.unflatten(q.flatten() + h * w.flatten()), spec.unflatten(q.flatten() - h * w.flatten())
    want = (transform_fiber_point(spec, POLAR, hi)[0].flatten() - transform_fiber_point(spec, POLAR, lo)[0].flatten()) / (2 * h)
    assert np.max(np.abs(got - want)) < 1e-7


def test_tangent_round_trip():
    spec = BundleSpec(2, ((1, 0), (0, 2)))
    rng = np.random.default_rng(7)
    q = spec.random_point(rng, [1.4, -0.3])
    w = BundleTangent.make(spec, u=rng.normal(size=2), v=[rng.normal(size=2), rng.normal(size=(2, 2))])
    q2, _ = transform_fiber_point(spec, POLAR, q)
    w2 = transform_bundle_tangent(spec, POLAR, q, w)
    back = transform_bundle_tangent(spec, POLAR, q2, w2, "from_tilde")
    assert np.max(np.abs(back.flatten() - w.flatten())) < 1e-9


def test_native_field():
    spec = BundleSpec(2, ((1, 0), (0, 2)))
    q = spec.random_point(np.random.default_rng(8), [0.7, 0.2])
    for P in range(2):
        f = native_field(spec, P)
        assert f.evaluate(q) is q.args[P]
        dx, dT = partials(f, q)
        assert not np.any(dx)
        for R in range(2):
            if R != P:
                assert not np.any(dT[R])
        block = np.asarray(dT[P]).reshape((spec.dim ** spec.types[P].rank,) * 2)
        assert np.array_equal(block, np.eye(block.shape[0]))
    with pytest.raises(SlotOutOfRange):
        native_field(spec, 2)


def test_vertical_lift_slots():
    spec = BundleSpec(2, ((1, 0), (0, 1)))
    a = vertical_lift(spec, 0, Tensor(2, (1, 0), np.array([1.0, 2.0])))
    b = vertical_lift(spec, 1, Tensor(2, (0, 1), np.array([3.0, 4.0])))
    assert not a.u.array.any() and not b.u.array.any()
    assert np.array_equal(a.flatten() + b.flatten(), [0, 0, 1, 2, 3, 4])
    with pytest.raises(ShapeMismatch):
        vertical_lift(spec, 0, Tensor(2, (0, 1), np.zeros(2)))


def test_section_fiber_independence():
    spec = BundleSpec(2, ((1, 0),))
    sec = Section(spec, (ExprField(spec, (1, 0), np.array(["x2", "x1^2"], dtype=object)),))
    rng = np.random.default_rng(9)
    q1, q2 = spec.random_point(rng, [0.3, 0.4]), spec.random_point(rng, [0.3, 0.4])
    assert np.array_equal(sec.fields[0].evaluate(q1).array, sec.fields[0].evaluate(q2).array)
    assert sec.fiber_independence([q1, q2]) == 0.0
    assert np.array_equal(sec.point([0.3, 0.4]).args[0].array, [0.4, 0.09])


def test_directional_matches_fd():
    spec = BundleSpec(2, ((1, 0),))
    f = ExprField(spec, (0, 0), np.array("sin(x1)*T1_{2;} + x2*T1_{1;}^2", dtype=object))
    q = spec.random_point(np.random.default_rng(10), [0.6, 0.1])
    jac = fd_field_partials(f, q)
    for k in range(spec.total_dim):
        e = np.zeros(spec.total_dim)
        e[k] = 1
        w = BundleTangent.make(spec, u=e[:2], v=[e[2:]])
        assert abs(float(directional(f, q, w).data) - jac[k]) < 1e-8
