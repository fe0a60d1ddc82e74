import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kdvcascade import transform as tf
from kdvcascade.errors import InputError
from kdvcascade.transform import SampledState

N = 128


def smooth(x, X):
    return SampledState(X, np.cos(np.pi * x) + 0.3 * np.sin(2 * np.pi * x) + x**2, 1.0)


def test_h_norm_examples():
    z = np.zeros(N + 1)
    assert tf.h_norm(SampledState([0.0, 0.0], z)) == 0.0
    assert tf.h_norm(SampledState([3.0, 4.0], z)) == pytest.approx(5.0)
    assert tf.h_norm(SampledState([0.0, 0.0], np.ones(N + 1))) == pytest.approx(1.0, abs=1e-14)


def test_state_validation():
    with pytest.raises(InputError):
        SampledState([0.0], np.zeros(8))
    with pytest.raises(InputError):
        SampledState([np.nan], np.zeros(9))


def test_tail_weights_are_exact_for_linear_data():
    h = 1.0 / 16
    x = np.linspace(0, 1, 17)
    for odd in ("trapezoid", "trap_simpson"):
        W = tf.tail_weights(16, h, odd)
        np.testing.assert_allclose(W @ x, (1 - x**2) / 2, atol=1e-14)


def test_table_invariants(demo, demo_table):
    assert np.abs(np.diag(demo_table.q_grid)).max() <= 1e-10
    assert np.abs(np.diag(demo_table.h_grid)).max() <= 1e-10
    np.testing.assert_allclose(demo_table.phi_grid[-1], demo.K.ravel(), atol=1e-12)
    assert not demo_table.Fq.flags.writeable


def test_forward_inverse_examples(demo, demo_table):
    x = np.linspace(0, 1, N + 1)
    zero = SampledState([0.0, 0.0], np.zeros(N + 1))
    assert not np.any(tf.forward(zero, demo_table).u)
    assert not np.any(tf.inverse(zero, demo_table).u)
    s = smooth(x, [0.7, -1.2])
    w = tf.forward(s, demo_table)
    np.testing.assert_array_equal(w.X, s.X)
    assert w.u[-1] == pytest.approx(s.u[-1] - demo.K.ravel() @ s.X, abs=1e-12)
    u = tf.inverse(s, demo_table)
    assert u.u[-1] == pytest.approx(s.u[-1] + demo.K.ravel() @ s.X, abs=1e-12)


def test_w_vanishes_at_zero_under_feedback(demo_table):
    x = np.linspace(0, 1, N + 1)
    s = smooth(x, [0.7, -1.2])
    U = tf.feedback_U(s, demo_table)
    u = s.u.copy()
    u[0] = U
    w = tf.forward(SampledState(s.X, u), demo_table)
    # Fq[0] is Simpson on the full grid, same as the feedback weights
    assert abs(w.u[0]) <= 1e-12


def test_feedback_examples(demo, demo_table):
    assert tf.feedback_U(SampledState([0.0, 0.0], np.zeros(N + 1)), demo_table) == 0.0
    X = np.array([0.4, -2.0])
    U = tf.feedback_U(SampledState(X, np.zeros(N + 1)), demo_table)
    assert U == pytest.approx(demo_table.phi0 @ X)


def test_feedback_quadrature_refinement(demo, demo_kernels):
    q, h = demo_kernels
    vals = {}
    for n in (32, 128):
        t = tf.build_table(demo, q, h, n)
        x = np.linspace(0, 1, n + 1)
        vals[n] = tf.feedback_U(SampledState([0.0, 0.0], np.exp(x) * np.sin(3 * x)), t)
    dx = 1 / 32
    assert abs(vals[32] - vals[128]) / abs(vals[128]) <= dx**3


def test_grid_mismatch(demo_table):
    with pytest.raises(InputError):
        tf.forward(SampledState([0.0, 0.0], np.zeros(65)), demo_table)
    with pytest.raises(InputError):
        tf.feedback_U(SampledState([0.0, 0.0], np.zeros(129), l=2.0), demo_table)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=8, max_size=8), st.floats(-2, 2), st.floats(-2, 2))
def test_linearity(demo_table, c, a, b):
    x = np.linspace(0, 1, N + 1)
    c = np.asarray(c)
    s1 = SampledState(c[:2], c[2] * np.cos(x) + c[3] * x, 1.0)
    s2 = SampledState(c[4:6], c[6] * np.sin(3 * x) + c[7], 1.0)
    for op in (tf.forward, tf.inverse):
        lhs = op(a * s1 + b * s2, demo_table)
        rhs = a * op(s1, demo_table) + b * op(s2, demo_table)
        scale = 1.0 + tf.h_norm(lhs)
        assert tf.h_norm(lhs - rhs) <= 1e-12 * scale


def test_operator_norm_estimates_finite(demo, demo_table):
    d1, d2 = tf.operator_norm_estimates(demo_table, demo.n)
    assert 0 < d1 < 100 and 0 < d2 < 100
