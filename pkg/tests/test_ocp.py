import logging

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from _oracles import exact_single, exact_two
from corridor_cav.errors import DomainError, OracleError, SingularSystemError
from corridor_cav.geometry import ConstraintConfig
from corridor_cav.ocp import (
    bound_check,
    energy,
    evaluate,
    hamiltonian,
    hamiltonian_jump_residual,
    oracle_direct,
    planned_trajectory,
    solve_single_arc,
    solve_two_arc,
    speed_range,
    system_residuals,
)

logging.getLogger("corridor_cav").setLevel(logging.ERROR)


def coeffs(arc):
    return [arc.a, arc.b, arc.c, arc.d]


# ---------------------------------------------------------------- single arc
def test_constant_speed_arc():
    s = solve_single_arc(0.0, 10.0, 10.0, 100.0)
    np.testing.assert_allclose(coeffs(s.arc), [0, 0, 10, 0], atol=1e-12)
    assert energy(s) == pytest.approx(0.0, abs=1e-15)


def test_derived_single_arc_against_symbolic_oracle():
    s = solve_single_arc(0.0, 10.0, 8.0, 100.0)
    ref = exact_single(10, 8, 100)
    np.testing.assert_allclose(coeffs(s.arc), [float(x) for x in ref["coeffs"]], atol=1e-12)
    np.testing.assert_allclose(coeffs(s.arc), [-0.1171875, 0.9375, 10.0, 0.0], atol=1e-12)
    assert float(s.arc.v(8.0)) == pytest.approx(13.75, abs=1e-12)
    assert energy(s) == pytest.approx(1.171875, abs=1e-12)
    assert float(ref["energy"]) == pytest.approx(1.171875, abs=1e-15)
    assert np.max(np.abs(system_residuals(s))) < 1e-12


def test_energy_matches_quadrature():
    s = solve_single_arc(0.0, 10.0, 8.0, 100.0)
    val, _ = quad(lambda t: 0.5 * float(s.arc.u(t)) ** 2, 0.0, 8.0)
    assert energy(s) == pytest.approx(val, rel=1e-10)


def test_shifted_entry_time():
    a = solve_single_arc(0.0, 10.0, 8.0, 100.0)
    b = solve_single_arc(37.5, 10.0, 45.5, 100.0)
    assert energy(a) == pytest.approx(energy(b), rel=1e-12)
    assert float(b.arc.p(45.5)) == pytest.approx(100.0, abs=1e-9)


def test_evaluate():
    s = solve_single_arc(0.0, 10.0, 8.0, 100.0)
    st0 = evaluate(s, 0.0)
    assert st0.u == pytest.approx(0.9375)
    assert st0.lambda_v == pytest.approx(-0.9375)
    assert evaluate(s, 8.0).u == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(DomainError):
        evaluate(s, 8.5)


def test_singular_single_arc():
    with pytest.raises(SingularSystemError):
        solve_single_arc(3.0, 10.0, 3.0, 100.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(1.0, 18.0), st.floats(0.1, 3.0), st.floats(20.0, 400.0))
def test_single_arc_properties(v0, ratio, L):
    T_nat = L / v0
    T = T_nat * ratio
    assume(T < 3 * L / v0 * 0.999)
    s = solve_single_arc(0.0, v0, T, L)
    assert abs(float(s.arc.p(T)) - L) < 1e-8 * L
    assert abs(float(s.arc.u(T))) < 1e-9
    assert float(s.arc.v(T)) == pytest.approx(1.5 * L / T - 0.5 * v0, rel=1e-9, abs=1e-9)
    assert energy(s) >= -1e-15


# ------------------------------------------------------------------- two arc
def test_two_arc_constant_speed():
    s = solve_two_arc(0.0, 10.0, 10.0, 100.0, 26.8, 268.0)
    assert max(abs(x) for x in (s.arc1.a, s.arc1.b, s.g, s.h)) < 1e-12
    assert s.pi0 == pytest.approx(0.0, abs=1e-12)
    assert hamiltonian_jump_residual(s) == pytest.approx(0.0, abs=1e-10)


def test_derived_two_arc_against_symbolic_oracle():
    s = solve_two_arc(0.0, 10.0, 9.0, 100.0, 20.0, 268.0)
    ref = exact_two(10, 9, 100, 20, 268)
    got = coeffs(s.arc1) + coeffs(s.arc2)
    np.testing.assert_allclose(got, [float(x) for x in ref["coeffs"]], atol=1e-10)
    assert np.max(np.abs(system_residuals(s))) < 1e-9
    assert float(s.arc1.u(9.0)) == pytest.approx(float(s.arc2.u(9.0)), abs=1e-10)
    assert s.arc1.a != pytest.approx(s.g)
    assert s.pi0 == pytest.approx(s.arc1.a - s.g, abs=1e-12)
    assert energy(s) == pytest.approx(float(ref["energy"]), rel=1e-10)


def test_derived_two_arc_with_interior_speed():
    s = solve_two_arc(0.0, 10.0, 9.0, 100.0, 20.0, 268.0, v1=12.0)
    ref = exact_two(10, 9, 100, 20, 268, v1=12)
    got = coeffs(s.arc1) + coeffs(s.arc2)
    np.testing.assert_allclose(got, [float(x) for x in ref["coeffs"]], atol=1e-10)
    assert float(s.arc1.v(9.0)) == pytest.approx(12.0, abs=1e-10)
    assert float(s.arc2.v(9.0)) == pytest.approx(12.0, abs=1e-10)
    assert abs(s.pi1) > 1e-3
    assert np.max(np.abs(system_residuals(s))) < 1e-9


def test_hamiltonian_jump_residual_equals_twice_pi0_v():
    # The stated relation keeps +pi0 v; the conditions actually imply
    # H- - H+ = pi0 v, so the stated residual is 2 pi0 v.
    s = solve_two_arc(0.0, 10.0, 9.0, 100.0, 20.0, 268.0)
    v = float(s.arc2.v(9.0))
    assert hamiltonian_jump_residual(s) == pytest.approx(2 * s.pi0 * v, rel=1e-10)
    assert hamiltonian_jump_residual(s) == pytest.approx(3.0204769743, abs=1e-8)
    jump = hamiltonian(s.arc1, 9.0) - hamiltonian(s.arc2, 9.0)
    assert jump - s.pi0 * v == pytest.approx(0.0, abs=1e-9)


def test_hamiltonian_jump_with_interior_speed():
    s = solve_two_arc(0.0, 10.0, 9.0, 100.0, 20.0, 268.0, v1=12.0)
    jump = hamiltonian(s.arc1, 9.0) - hamiltonian(s.arc2, 9.0)
    u_sum = float(s.arc1.u(9.0)) + float(s.arc2.u(9.0))
    assert jump - s.pi0 * 12.0 - 0.5 * s.pi1 * u_sum == pytest.approx(0.0, abs=1e-9)


def test_hamiltonian_jump_needs_two_arcs():
    with pytest.raises(DomainError):
        hamiltonian_jump_residual(solve_single_arc(0.0, 10.0, 8.0, 100.0))


def test_two_arc_bad_times():
    with pytest.raises(SingularSystemError):
        solve_two_arc(0.0, 10.0, 9.0, 100.0, 9.0, 268.0)
    with pytest.raises(DomainError):
        solve_two_arc(0.0, 10.0, 9.0, 300.0, 20.0, 268.0)


@settings(max_examples=150, deadline=None)
@given(st.floats(5.0, 15.0), st.floats(0.7, 1.5), st.floats(0.7, 1.5))
def test_two_arc_properties(v0, r1, r2):
    t1 = 100.0 / v0 * r1
    t2 = t1 + 168.0 / v0 * r2
    s = solve_two_arc(0.0, v0, t1, 100.0, t2, 268.0)
    assert np.max(np.abs(system_residuals(s))) < 1e-9
    assert float(s.arc2.u(t2)) == pytest.approx(0.0, abs=1e-9)
    assert abs(s.arc2.lambda_v(t1) - s.arc1.lambda_v(t1)) < 1e-9


# -------------------------------------------------------------------- bounds
def test_bound_check():
    cfg = ConstraintConfig()
    assert bound_check(solve_single_arc(0.0, 10.0, 10.0, 100.0), cfg).ok
    rep = bound_check(solve_single_arc(0.0, 10.0, 8.0, 100.0), cfg)
    assert rep.ok and rep.u_max == pytest.approx(0.9375)
    rep = bound_check(solve_single_arc(0.0, 10.0, 3.0, 100.0), cfg)
    assert not rep.ok and any("u_max" in m for m in rep.violations)


def test_speed_range_exact():
    s = solve_two_arc(0.0, 10.0, 9.0, 100.0, 20.0, 268.0)
    lo, hi = speed_range(s)
    t = np.linspace(0.0, 20.0, 20001)
    v = np.concatenate([s.arc1.v(t[t <= 9]), s.arc2.v(t[t >= 9])])
    assert lo <= v.min() + 1e-12 and hi >= v.max() - 1e-12
    assert lo == pytest.approx(v.min(), abs=1e-6)


def test_planned_trajectory_crosses_zone():
    s = solve_single_arc(0.0, 10.0, 8.0, 100.0)
    traj = planned_trajectory(s, 18.0)
    assert traj.t_end == pytest.approx(8.0 + 18.0 / 13.75)
    assert float(traj.p(traj.t_end)) == pytest.approx(118.0)


# -------------------------------------------------------------------- oracle
def test_oracle_single_arc():
    res = oracle_direct(0.0, 10.0, [(8.0, 100.0)], n_steps=400)
    assert res.energy == pytest.approx(1.171875, rel=5e-3)
    assert res.energy >= 1.171875 * (1 - 1e-12)
    assert res.p[-1] == pytest.approx(100.0, abs=1e-8)


def test_oracle_constant_speed():
    assert oracle_direct(0.0, 10.0, [(10.0, 100.0)]).energy < 1e-12


def test_oracle_two_arc():
    s = solve_two_arc(0.0, 10.0, 9.0, 100.0, 20.0, 268.0)
    res = oracle_direct(0.0, 10.0, [(9.0, 100.0), (20.0, 268.0)], n_steps=400)
    assert res.energy >= energy(s) * (1 - 5e-3)
    assert res.energy == pytest.approx(energy(s), rel=5e-3)


def test_oracle_errors():
    with pytest.raises(OracleError):
        oracle_direct(0.0, 10.0, [(8.0, 100.0)], n_steps=10)
    with pytest.raises(OracleError):
        oracle_direct(0.0, 10.0, [(8.0, 100.0), (5.0, 200.0)])
