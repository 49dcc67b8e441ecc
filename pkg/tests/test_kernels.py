import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hybridgp.kernels import (
    RBF,
    Constant,
    Linear,
    Periodic,
    Sum,
    composite_kc,
    gram_matrix,
    kernel_eval,
)

pos = st.floats(min_value=0.05, max_value=20.0)
coord = st.floats(min_value=-50.0, max_value=50.0)


def test_rbf_zero_distance_is_scale_squared():
    assert kernel_eval(RBF(2.0, 1.0), 0.3, 0.3) == pytest.approx(4.0)


def test_linear_product():
    assert kernel_eval(Linear(1.0), 2.0, 3.0) == pytest.approx(6.0)


def test_linear_divides_by_scale_squared():
    assert kernel_eval(Linear(2.0), 2.0, 3.0) == pytest.approx(1.5)


def test_periodic_full_period():
    assert kernel_eval(Periodic(1.5, 10.0, 1.0), 3.0, 13.0) == pytest.approx(2.25)


def test_periodic_half_period():
    k = kernel_eval(Periodic(1.0, 10.0, 2.0), 0.0, 5.0)
    assert k == pytest.approx(np.exp(-2.0 / 4.0))


def test_constant_gram():
    K = gram_matrix(Constant(3.0), [[0.0], [1.0]], [[5.0], [7.0]])
    np.testing.assert_array_equal(K, np.full((2, 2), 3.0))


def test_sum_is_elementwise_sum():
    X = np.array([0.0, 1.5, 4.0])
    a, b = RBF(1.3, 2.0), Linear(0.7)
    np.testing.assert_allclose(gram_matrix(Sum((a, b)), X), a(X) + b(X))


def test_sum_of_kernel_operator_flattens():
    k = RBF() + Linear() + Constant()
    assert isinstance(k, Sum) and len(k.children) == 3


def test_nested_sum_rejected():
    with pytest.raises(ValueError):
        Sum((Sum((RBF(),)), Linear()))


def test_empty_sum_rejected():
    with pytest.raises(ValueError):
        Sum(())


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        kernel_eval(RBF(), [1.0, 2.0], [1.0])


def test_rbf_gram_is_psd():
    X = np.linspace(0, 4, 5)
    assert np.linalg.eigvalsh(RBF(1.0, 1.0)(X)).min() >= -1e-10


def test_multidimensional_rbf():
    x, y = np.array([1.0, 2.0, 3.0]), np.array([1.5, 1.0, 3.0])
    expected = 4.0 * np.exp(-0.5 * np.sum((x - y) ** 2) / 9.0)
    assert kernel_eval(RBF(2.0, 3.0), x, y) == pytest.approx(expected)


def test_theta_round_trip():
    k = composite_kc(2.0, 3.0, 40.0, 0.5, 1.2)
    np.testing.assert_allclose(k.with_theta(k.theta).theta, k.theta, rtol=1e-14)
    assert k.n_params == 5


def test_invalid_parameters():
    with pytest.raises(ValueError):
        RBF(-1.0, 1.0).validate()
    Constant(0.0).validate()
    with pytest.raises(ValueError):
        Constant(-0.1).validate()


@pytest.mark.parametrize(
    "kernel",
    [RBF(1.3, 2.1), Linear(0.8), Periodic(1.1, 7.0, 0.9), Constant(0.6),
     composite_kc(3.0, 1.2, 9.0, 0.7, 0.4)],
    ids=["rbf", "linear", "periodic", "constant", "kc"],
)
def test_gradients_match_finite_differences(kernel):
    X = np.array([-3.0, -1.2, 0.0, 0.7, 2.5])
    eps = 1e-6
    theta = kernel.theta
    for j, g in enumerate(kernel.gradients(X)):
        tp, tm = theta.copy(), theta.copy()
        tp[j] += eps
        tm[j] -= eps
        fd = (kernel.with_theta(tp)(X) - kernel.with_theta(tm)(X)) / (2 * eps)
        np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-8)


@settings(max_examples=100, deadline=None)
@given(scale=pos, length=pos, period=pos, rough=pos, level=pos, x=coord, y=coord)
def test_symmetry_all_variants(scale, length, period, rough, level, x, y):
    for k in (RBF(scale, length), Linear(scale), Periodic(scale, period, rough),
              Constant(level), composite_kc(scale, length, period, rough, level)):
        assert kernel_eval(k, x, y) == pytest.approx(kernel_eval(k, y, x), rel=1e-12, abs=1e-300)


def test_psd_random_grids():
    rng = np.random.default_rng(11)
    for _ in range(200):
        n = int(rng.integers(1, 21))
        X = rng.uniform(-20, 20, n)
        p = np.exp(rng.uniform(-1.5, 2.5, 5))
        k = Sum((RBF(p[0], p[1]), Linear(p[2]), Periodic(p[0], p[3], p[4]), Constant(p[2])))
        K = gram_matrix(k, X)
        assert np.linalg.eigvalsh(K).min() >= -1e-9 * np.trace(K)
