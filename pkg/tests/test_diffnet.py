import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cail import diffnet, oracle

LAYOUT = diffnet.Layout(6, 3, (7, 5))


def _theta(seed=0, layout=LAYOUT):
    return 1.5 * diffnet.init_params(layout, seed)


def test_default_layout_has_two_hidden_layers_of_100():
    layout = diffnet.Layout(25, 4)
    assert layout.widths == (29, 100, 100, 1)
    assert layout.n_params == 29 * 100 + 100 + 100 * 100 + 100 + 100 + 1


def test_zero_parameters_give_zero_logit():
    assert diffnet.forward(LAYOUT, np.zeros(LAYOUT.n_params), [3], [1])[0] == 0.0


def test_forward_is_pure():
    theta = _theta()
    out = diffnet.forward(LAYOUT, theta, [2, 2, 4], [1, 1, 0])
    assert out[0] == out[1]
    assert np.array_equal(out, diffnet.forward(LAYOUT, theta, [2, 2, 4], [1, 1, 0]))


def test_forward_matches_independent_implementation():
    rng = np.random.default_rng(1)
    theta = _theta(1)
    s, a = rng.integers(0, 6, size=20), rng.integers(0, 3, size=20)
    ref = [oracle.forward_reference(LAYOUT, theta, si, ai) for si, ai in zip(s, a)]
    np.testing.assert_allclose(diffnet.forward(LAYOUT, theta, s, a), ref, rtol=0, atol=1e-12)


def test_forward_all_agrees_with_forward():
    theta = _theta(2)
    table = diffnet.forward_all(LAYOUT, theta)
    assert table.shape == (6, 3)
    assert table[4, 2] == diffnet.forward(LAYOUT, theta, [4], [2])[0]


def test_out_of_range_indices_raise():
    with pytest.raises(IndexError):
        diffnet.forward(LAYOUT, _theta(), [6], [0])
    with pytest.raises(IndexError):
        diffnet.forward(LAYOUT, _theta(), [0], [-1])
    with pytest.raises(ValueError):
        diffnet.forward(LAYOUT, np.zeros(3), [0], [0])


def test_zero_coefficients_give_zero_gradient():
    g = diffnet.grad_params(LAYOUT, _theta(), [0, 1, 2], [0, 1, 2], [0.0, 0.0, 0.0])
    assert not np.any(g)


def test_single_sample_gradient_matches_differences():
    theta = _theta(3)
    g = diffnet.grad_params(LAYOUT, theta, [5], [2], [1.0])
    fd = diffnet.finite_difference_grad(lambda th: diffnet.forward(LAYOUT, th, [5], [2])[0], theta)
    assert oracle.relative_error(g, fd) <= 1e-5


def test_batch_gradient_is_sum_of_sample_gradients():
    rng = np.random.default_rng(4)
    theta = _theta(4)
    s, a, c = rng.integers(0, 6, 64), rng.integers(0, 3, 64), rng.normal(size=64)
    total = diffnet.grad_params(LAYOUT, theta, s, a, c)
    parts = sum(diffnet.grad_params(LAYOUT, theta, [si], [ai], [ci]) for si, ai, ci in zip(s, a, c))
    np.testing.assert_allclose(total, parts, rtol=0, atol=1e-10)


def test_directional_derivative_matches_gradient():
    rng = np.random.default_rng(5)
    theta = _theta(5)
    v = rng.normal(size=LAYOUT.n_params)
    s, a = rng.integers(0, 6, 10), rng.integers(0, 3, 10)
    jv = diffnet.directional_derivative(LAYOUT, theta, v, s, a)
    ref = [diffnet.grad_params(LAYOUT, theta, [si], [ai], [1.0]) @ v for si, ai in zip(s, a)]
    np.testing.assert_allclose(jv, ref, rtol=1e-10, atol=1e-12)


def test_finite_differences_on_simple_losses():
    theta = np.random.default_rng(6).normal(size=12)
    g = diffnet.finite_difference_grad(lambda th: 0.5 * th @ th, theta, h=1e-5)
    np.testing.assert_allclose(g, theta, atol=1e-8)
    assert not np.any(diffnet.finite_difference_grad(lambda th: 3.0, theta))
    with pytest.raises(ValueError):
        diffnet.finite_difference_grad(lambda th: 0.0, theta, h=0.0)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), S=st.integers(1, 8), A=st.integers(1, 4),
       h1=st.integers(1, 9), h2=st.integers(1, 9))
def test_gradient_linearity_and_finiteness(seed, S, A, h1, h2):
    layout = diffnet.Layout(S, A, (h1, h2))
    rng = np.random.default_rng(seed)
    theta = 2.0 * diffnet.init_params(layout, seed)
    s, a = rng.integers(0, S, 12), rng.integers(0, A, 12)
    c1, c2 = rng.normal(size=12), rng.normal(size=12)
    g1 = diffnet.grad_params(layout, theta, s, a, c1)
    g2 = diffnet.grad_params(layout, theta, s, a, c2)
    g12 = diffnet.grad_params(layout, theta, s, a, 2.0 * c1 - 3.0 * c2)
    np.testing.assert_allclose(g12, 2.0 * g1 - 3.0 * g2, rtol=0, atol=1e-10)
    assert np.all(np.isfinite(diffnet.forward(layout, theta, s, a)))


def test_init_is_seeded_and_scaled():
    a, b = diffnet.init_params(LAYOUT, 9), diffnet.init_params(LAYOUT, 9)
    assert np.array_equal(a, b)
    (W0, b0), *_ = LAYOUT.unpack(a)
    assert np.max(np.abs(W0)) <= 1 / np.sqrt(LAYOUT.widths[0])


def test_params_text_round_trip():
    theta = _theta(7)
    layout, back = diffnet.parse_params(diffnet.format_params(LAYOUT, theta))
    assert layout == LAYOUT and np.array_equal(back, theta)
    with pytest.raises(ValueError):
        diffnet.parse_params(LAYOUT.header() + "\n1.0\n")
