import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from canonical_bomd.borndyn import (PhasePoint, PhaseSpaceGrid, ReliabilityWarning, SurfaceError,
                                    VerletParams, gibbs_weights, md_correlation, md_correlation_curve,
                                    md_equilibrium_density, steps_for, surface_energy, surface_force,
                                    verlet_flow, verlet_trajectory, weighted_moment)
from canonical_bomd.model import (build_avoided_crossing, diagonal_potential, from_matrix_function,
                                  harmonic, scalar_potential)
from canonical_bomd.quantum import SpatialGrid

GRID = SpatialGrid(-6.0, 6.0, 751)


def test_upper_surface_force_vanishes_at_origin(crossing):
    assert surface_force(crossing, 1, 0.0) == 0.0


def test_force_matches_central_difference(crossing):
    h = 1e-5
    for j in (0, 1):
        fd = -(crossing.eigenvalues(0.3 + h)[j] - crossing.eigenvalues(0.3 - h)[j]) / (2 * h)
        assert surface_force(crossing, j, 0.3) == pytest.approx(fd, abs=1e-7)


def test_force_without_analytic_gradient(crossing):
    numeric = from_matrix_function(crossing.evaluate, 2)
    x = np.linspace(-2, 2, 9) + 0.01
    assert np.allclose(surface_force(numeric, 0, x), surface_force(crossing, 0, x), atol=1e-6)


def test_constant_potential_has_no_force():
    pot = scalar_potential(lambda x: 0 * x + 4.0)
    assert np.all(surface_force(pot, 0, np.linspace(-1, 1, 5)) == 0.0)


def test_degenerate_surfaces_rejected():
    pot = diagonal_potential([lambda x: 0 * x, lambda x: 0 * x])
    with pytest.raises(SurfaceError, match="degenerate"):
        surface_force(pot, 0, 0.5)


def test_free_flight_is_exact():
    pot = scalar_potential(lambda x: 0 * x + 1.0, lambda x: 0 * x)
    z = verlet_trajectory(pot, 0, PhasePoint(0.25, -1.5), 0.8, VerletParams.for_tau(0.8))
    assert z.p == -1.5
    assert z.x == pytest.approx(0.25 - 1.5 * 0.8, abs=1e-13)


def test_harmonic_quarter_period():
    tau = math.pi / 2
    # dt must divide tau exactly
    n = 1571
    z = verlet_trajectory(harmonic(), 0, PhasePoint(1.0, 0.0), tau, VerletParams(tau / n, n))
    assert z.x == pytest.approx(0.0, abs=1e-5)
    assert z.p == pytest.approx(-1.0, abs=1e-5)


def _harmonic_error(dt, tau=1.0):
    x, p, _ = verlet_flow(lambda y: -y, 1.0, 0.0, dt, steps_for(tau, dt))
    return math.hypot(x - math.cos(tau), p + math.sin(tau))


def test_second_order_convergence():
    ratio = _harmonic_error(0.02) / _harmonic_error(0.01)
    assert 4 * 0.75 <= ratio <= 4 * 1.25


def test_energy_drift_ratio(crossing):
    def drift(dt):
        x, p, _ = verlet_flow(lambda y: surface_force(crossing, 0, y), 0.4, 1.2, dt, steps_for(2.0, dt))
        return abs(surface_energy(crossing, 0, x, p) - surface_energy(crossing, 0, 0.4, 1.2))

    assert 3 < drift(2e-3) / drift(1e-3) < 5


@settings(max_examples=40, deadline=None)
@given(st.floats(-2, 2), st.floats(-3, 3))
def test_time_reversal(x0, p0):
    pot = build_avoided_crossing(0.1)
    params = VerletParams(1e-3, 200)
    fwd = verlet_trajectory(pot, 0, PhasePoint(x0, p0), 0.2, params)
    back = verlet_trajectory(pot, 0, fwd, -0.2, params)
    assert abs(back.x - x0) < 1e-10 and abs(back.p - p0) < 1e-10


def test_symplectic_area(crossing):
    eps = 1e-5
    x0 = np.array([0.3, 0.3 + eps, 0.3])
    p0 = np.array([0.5, 0.5, 0.5 + eps])
    x, p, _ = verlet_flow(lambda y: surface_force(crossing, 0, y), x0, p0, 1e-3, 200)
    jac = np.array([[x[1] - x[0], x[2] - x[0]], [p[1] - p[0], p[2] - p[0]]]) / eps
    assert abs(np.linalg.det(jac) - 1) < 1e-6 * 100  # finite-difference noise ~ eps


def test_duration_mismatch_rejected(crossing):
    with pytest.raises(ValueError, match="does not match"):
        verlet_trajectory(crossing, 0, PhasePoint(0, 0), 0.3, VerletParams(1e-3, 200))
    with pytest.raises(ValueError, match="tau = 0.3"):
        steps_for(0.3, 0.007)


def test_weights_reference_value(crossing):
    gw = gibbs_weights(crossing, 1.9947, GRID)
    assert 0.79 <= gw.q[0] <= 0.81
    assert gw.q.sum() == pytest.approx(1.0, abs=1e-12)


def test_weights_against_adaptive_quadrature(crossing):
    T = 1.9947
    z = [quad(lambda x, j=j: math.exp(-crossing.eigenvalues(x)[j] / T), -6, 6, limit=400)[0] for j in (0, 1)]
    gw = gibbs_weights(crossing, T, SpatialGrid(-6, 6, 6000))
    assert gw.q[0] == pytest.approx(z[0] / sum(z), abs=1e-6)


def test_degenerate_weights():
    pot = diagonal_potential([lambda x: x * x, lambda x: x * x])
    assert np.allclose(gibbs_weights(pot, 1.0, GRID).q, [0.5, 0.5], atol=1e-14)


def test_md_density(crossing):
    rho = md_equilibrium_density(crossing, 1.9946, GRID)
    assert GRID.trapezoid_weights() @ rho == pytest.approx(1.0, abs=1e-10)
    osc = harmonic()
    rho1 = md_equilibrium_density(osc, 0.7, GRID)
    ref = np.exp(-0.5 * GRID.nodes**2 / 0.7)
    assert np.allclose(rho1, ref / (GRID.trapezoid_weights() @ ref), rtol=1e-12)


PHASE = PhaseSpaceGrid.square(4.5, 201)


def test_md_correlation_zero_time_is_quadrature(crossing):
    T = 1.9947
    md0 = md_correlation(crossing, T, 0.0, PHASE)
    assert md0 == pytest.approx(weighted_moment(crossing, T, PHASE.x_grid), rel=1e-10)


def test_harmonic_md_correlation():
    T = 0.7
    grid = PhaseSpaceGrid.square(6.0, 241)
    for tau in (0.4, 1.0):
        assert md_correlation(harmonic(), T, tau, grid) == pytest.approx(T * math.cos(tau), abs=1e-4)


def test_md_correlation_symmetric_in_tau(crossing):
    rep = md_correlation_curve(crossing, 1.9947, [-0.2, 0.2], PHASE)
    assert rep.values[0] == pytest.approx(rep.values[1], rel=1e-9)


def test_curve_matches_single_runs(crossing):
    rep = md_correlation_curve(crossing, 1.9947, [0.1, 0.2], PHASE, dt=1e-3)
    single = md_correlation(crossing, 1.9947, 0.2, PHASE, VerletParams(1e-3, 200))
    assert rep.values[1] == pytest.approx(single, rel=1e-14)


def test_threads_do_not_change_bits(crossing):
    a = md_correlation_curve(crossing, 1.9947, [0.2], PHASE, threads=1).values
    b = md_correlation_curve(crossing, 1.9947, [0.2], PHASE, threads=4).values
    assert a.tobytes() == b.tobytes()


def test_phase_grid_self_convergence(crossing):
    coarse = md_correlation(crossing, 1.9947, 0.2, PhaseSpaceGrid.square(4.5, 201))
    fine = md_correlation(crossing, 1.9947, 0.2, PhaseSpaceGrid.square(4.5, 401))
    assert abs(coarse - fine) < 1e-6


def test_escape_flag():
    pot = scalar_potential(lambda x: -x * x, lambda x: -2 * x)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rep = md_correlation_curve(pot, 1.0, [1.0], PhaseSpaceGrid.square(3.0, 31), dt=1e-2, x_escape=3.0)
    assert not rep.reliable
    assert any(issubclass(w.category, ReliabilityWarning) for w in caught)
