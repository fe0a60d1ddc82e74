import json
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from kdvcascade import gains, kernels
from kdvcascade.errors import ConvergenceError, DomainError
from kdvcascade.gains import Plant
from kdvcascade.poly2 import Poly2


def test_iterate_once_zero_fixed_point(demo):
    z = Poly2.zeros(40)
    assert kernels.iterate_once(z, np.zeros(41), demo, -1).is_zero()
    assert kernels.iterate_once(z, np.zeros(41), demo, +1).is_zero()
    with pytest.raises(ValueError):
        kernels.iterate_once(z, np.zeros(41), demo, 0)


def test_second_iterate_t2_coefficient(demo):
    th = gains.theta_series(demo, "direct", 40)
    G2 = kernels.iterate_once(kernels.seed_poly(1.0, 1.0), th, demo, -1)
    assert G2.coeffs[0, 2] - th.coeffs[2] == pytest.approx(-1.0 / 6.0, abs=1e-15)


@pytest.mark.parametrize("lam,l", [(1.0, 1.0), (3.0, 1.0), (1.0, 2.0)])
def test_second_iterate_closed_form(demo, lam, l):
    p = demo.replace(lam=lam, l=l)
    th = gains.theta_series(p, "direct", 40)
    G2 = kernels.iterate_once(kernels.seed_poly(lam, l), th, p, -1)
    s, t = np.meshgrid(np.linspace(0, 2 * l, 9), np.linspace(0, l, 9))
    ref = kernels.second_iterate_reference(s, t, th, lam, l)
    assert np.abs(G2.eval(s, t) - ref).max() <= 1e-12 * np.abs(ref).max()


def test_boundary_conditions_at_t0():
    p = Plant([[0, 1], [1, 0]], [0, 1], [-3, -4], l=1.0, lam=3.0)
    sol = kernels.solve_kernel(p, "direct")
    s = np.linspace(0, 2, 21)
    assert np.abs(sol.G.eval(s, 0 * s)).max() <= 1e-10
    Gt = sol.G.diff("t")
    np.testing.assert_allclose(Gt.eval(s, 0 * s), 3.0 / 6.0 * (s - 2.0), atol=1e-10)
    assert Gt.eval(0.0, 0.0) == pytest.approx(-1.0)


def test_converged_solution_is_fixed_point(demo, demo_kernels):
    for sol, sign in zip(demo_kernels, (-1, 1)):
        th = gains.theta_series(demo, sol.which, 40)
        F = kernels.iterate_once(sol.G, th, demo, sign) + kernels.seed_poly(demo.lam, demo.l)
        assert np.abs(F.coeffs - sol.G.coeffs).max() <= 1e-13
        assert sol.iterations <= 40 and not sol.truncation_flag


def test_contraction_after_three_iterations(demo_kernels):
    for sol in demo_kernels:
        h = np.array(sol.history)
        assert np.all(np.diff(h[3:]) < 0)


def test_q_eval_diagonal_and_derivative():
    p = Plant([[0, 1], [1, 0]], [0, 1], [-3, -4], l=1.0, lam=3.0)
    sol = kernels.solve_kernel(p, "direct")
    x = np.linspace(0, 1, 11)
    assert np.abs(sol(x, x)).max() <= 1e-10
    # q(x, x) = 0 gives q_x = -q_y on the diagonal; one-sided difference in y
    hh = 1e-4
    for x0 in (0.0, 0.25, 0.5, 0.75):
        qy = (-3 * sol(x0, x0) + 4 * sol(x0, x0 + hh) - sol(x0, x0 + 2 * hh)) / (2 * hh)
        assert -qy == pytest.approx(3.0 / 3.0 * (1.0 - x0), abs=1e-6)
    assert np.all(np.isfinite(sol(0.0, x)))
    with pytest.raises(DomainError):
        sol(0.6, 0.5)


def test_residuals_scalar_plant():
    p = Plant([[0.5]], [[1.0]], [[-2.0]], l=1.0, lam=1.0)
    for which in ("direct", "inverse"):
        r = kernels.solve_kernel(p, which).residual_report
        assert r["pde_sup"] <= 1e-6 and r["bc_yl_sup"] <= 1e-6
        assert r["diag_sup"] <= 1e-10 and r["diagx_sup"] <= 1e-6


def test_residuals_of_zero_candidate(demo):
    zero = kernels.KernelSolution(Poly2.zeros(40), "direct", demo.lam, demo.l, 0, 0.0)
    r = kernels.kernel_residuals(zero, demo, "direct", 41)
    x = np.linspace(0, 1, 41)
    assert r["pde_sup"] == 0.0 and r["diag_sup"] == 0.0
    assert r["bc_yl_sup"] == pytest.approx(np.abs(gains.phi(demo, x) @ demo.B).max())
    assert r["diagx_sup"] == pytest.approx(demo.lam * demo.l / 3)


def test_reciprocity(demo, demo_kernels):
    rc = kernels.reciprocity_check(*demo_kernels, demo)
    assert rc["kernel_sup"] <= 1e-6 and rc["gain_sup"] <= 1e-6


def test_reciprocity_small_lambda(demo):
    p = demo.replace(lam=0.01)
    q, h = kernels.solve_kernel(p, "direct"), kernels.solve_kernel(p, "inverse")
    rc = kernels.reciprocity_check(q, h, p)
    assert max(rc.values()) <= 1e-6


@given(st.floats(-10, 10), st.floats(-10, 10))
def test_change_of_variables_is_involutive(x, y):
    xx, yy = kernels.to_xy(*kernels.to_st(x, y))
    assert xx == pytest.approx(x, abs=1e-14) and yy == pytest.approx(y, abs=1e-14)


def test_convergence_error_carries_history(demo):
    with pytest.raises(ConvergenceError) as ei:
        kernels.solve_kernel(demo, "direct", max_iter=3)
    assert len(ei.value.history) == 3
    with pytest.raises(ValueError):
        kernels.solve_kernel(demo, "direct", tol=0.0)
    with pytest.raises(ValueError):
        kernels.solve_kernel(demo, "direct", D=5)


def test_truncation_warning(demo):
    with pytest.warns(RuntimeWarning, match="dropped"):
        sol = kernels.solve_kernel(demo, "direct", D=10)
    assert sol.truncation_flag and "truncation_warning" in sol.residual_report


def test_json_round_trip(demo_kernels):
    q = demo_kernels[0]
    text = kernels.kernel_to_json(q)
    d = json.loads(text)
    assert set(d) == {"which", "lambda", "l", "deg_cap", "iterations", "coeffs", "residuals"}
    back = kernels.kernel_from_json(text)
    assert back.G == q.G and back.which == "direct"
