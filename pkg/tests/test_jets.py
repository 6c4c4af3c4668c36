import numpy as np
import pytest

from extensor import jets
from extensor.errors import DepthLimit, DomainError
from extensor.jets import Dual, Jet2


def derivative(fn, x):
    tag = jets.new_tag()
    out = fn(jets.perturb(x, tag, 1.0))
    return jets.tangent_of(out, tag)


def test_first_derivative():
    assert derivative(lambda x: x * x * x, 2.0) == 12.0
    assert derivative(lambda x: 1.0 / x, 2.0) == -0.25
    assert np.isclose(derivative(jets.sin, 0.3), np.cos(0.3))


def test_nested_second_derivative():
    # d/dx d/dy (x^2 y^3) = 6 x y^2
    def inner(x):
        return derivative(lambda y: x * x * y**3, 1.5)

    assert np.isclose(derivative(inner, 0.7), 6 * 0.7 * 1.5**2)


def test_perturbation_confusion_avoided():
    # d/dx [x * d/dy (x + y)] = 1
    got = derivative(lambda x: x * derivative(lambda y: x + y, 1.0), 3.0)
    assert np.isclose(got, 1.0)


def test_array_leaves_through_einsum():
    A = np.array([[1.0, 2.0], [3.0, 4.0]])
    tag = jets.new_tag()
    v = jets.perturb(np.array([1.0, -1.0]), tag, np.array([0.5, 0.0]))
    out = jets.einsum("ij,j->i", A, v)
    assert np.array_equal(jets.primal(out), A @ [1, -1])
    assert np.array_equal(jets.tangent_of(out, tag), A @ [0.5, 0])


def test_stack_mixed():
    tag = jets.new_tag()
    s = jets.stack([Dual(tag, 1.0, 2.0), 3.0])
    assert np.array_equal(jets.primal(s), [1, 3]) and np.array_equal(jets.tangent_of(s, tag), [2, 0])


def test_prune_drops_zero_tangents():
    tag = jets.new_tag()
    assert jets.prune(Dual(tag, 1.5, 0.0)) == 1.5
    assert jets.prune(Dual(tag, np.ones(2), np.zeros(2))).shape == (2,)
    kept = jets.prune(Dual(tag, 1.5, 1.0))
    assert type(kept) is Dual


def test_depth_limit():
    with jets.derivative_order(1):
        with jets.nested_derivative():
            with pytest.raises(DepthLimit):
                with jets.nested_derivative():
                    pass
    with jets.derivative_order(3):
        with jets.nested_derivative(), jets.nested_derivative(), jets.nested_derivative():
            pass


def test_jet2_chain_rules():
    x = Jet2.seed(0.4, 0, 1)
    for fn, d1, d2 in [
        (jets.exp, np.exp, np.exp),
        (jets.log, lambda v: 1 / v, lambda v: -1 / v**2),
        (jets.sqrt, lambda v: 0.5 / np.sqrt(v), lambda v: -0.25 * v**-1.5),
        (jets.tan, lambda v: 1 / np.cos(v) ** 2, lambda v: 2 * np.tan(v) / np.cos(v) ** 2),
    ]:
        j = fn(x)
        assert np.isclose(j.g[0], d1(0.4)) and np.isclose(j.h[0, 0], d2(0.4))


def test_atan2_jet():
    y, x = Jet2.seed(0.3, 0, 2), Jet2.seed(-0.8, 1, 2)
    j = jets.atan2(y, x)
    r2 = 0.3**2 + 0.8**2
    assert np.isclose(j.v, np.arctan2(0.3, -0.8))
    assert np.allclose(j.g, [-0.8 / r2, -0.3 / r2])
    assert np.allclose(j.h, j.h.T)


def test_domain_checks():
    with pytest.raises(DomainError):
        jets.log(0.0)
    with pytest.raises(DomainError):
        jets.sqrt(Dual(jets.new_tag(), -1.0, 1.0))
    with pytest.raises(DomainError):
        jets.divide(1.0, 0.0)
    with pytest.raises(DomainError):
        jets.atan2(0.0, 0.0)
