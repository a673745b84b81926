import numpy as np
import pytest

from semiclassical.errors import TrajectoryEscapeError, UnsupportedTopologyError
from semiclassical.symbols import HamiltonianSpec, PotentialSpec
from semiclassical.torus import (action_integrals, build_torus_1d, build_torus_separable,
                                 frequencies, integrate_flow, load_chart, save_chart)


def test_harmonic_flow_returns(harmonic):
    traj = integrate_flow(harmonic, (0.0, 1.0), (0.0, np.pi), tol=1e-12)
    assert abs(traj.x[-1, 0] - 1.0) < 1e-8 and abs(traj.p[-1, 0]) < 1e-8


def test_fixed_point(harmonic):
    traj = integrate_flow(harmonic, (0.0, 0.0), (0.0, 5.0))
    assert np.all(traj.x == 0.0) and np.all(traj.p == 0.0)


def test_quartic_energy_drift(quartic):
    traj = integrate_flow(quartic, (0.0, 1.0), (0.0, 10 * 2.622), tol=1e-10)
    assert traj.energy_drift < 1e-9


def test_escape():
    spec = HamiltonianSpec.one_dim(PotentialSpec.harmonic(1.0, domain=(-1.0, 1.0)))
    with pytest.raises(TrajectoryEscapeError):
        integrate_flow(spec, (2.0, 0.0), (0.0, 3.0))


def test_harmonic_torus(harmonic):
    chart = build_torus_1d(harmonic, 1.0)
    assert chart.periods[0] == pytest.approx(np.pi, rel=1e-10)
    phi = chart.orbits[0].grid()
    x = chart.orbits[0].x_samples
    # origin at the left turning point: X = -cos(phi)
    np.testing.assert_allclose(x, -np.cos(phi), atol=1e-8)
    assert frequencies(chart)[0] == pytest.approx(2.0, rel=1e-10)


def test_below_minimum(harmonic):
    with pytest.raises(UnsupportedTopologyError):
        build_torus_1d(harmonic, -0.5)


def test_morse_closure(morse):
    chart = build_torus_1d(morse, 0.5)
    assert chart.orbits[0].closure_error < 1e-8
    assert chart.validate()["energy_error"] < 1e-7


@pytest.mark.parametrize("E", [0.2, 0.5, 0.9])
def test_morse_action(morse, E):
    I = action_integrals(build_torus_1d(morse, E)).I[0]
    assert I == pytest.approx(2 * np.pi * (1 - np.sqrt(1 - E)), rel=1e-6)


def test_harmonic_action_scaling(harmonic):
    I1 = action_integrals(build_torus_1d(harmonic, 1.0)).I[0]
    I4 = action_integrals(build_torus_1d(harmonic, 4.0)).I[0]
    assert I1 == pytest.approx(np.pi, rel=1e-10)
    assert I4 == pytest.approx(4 * I1, rel=1e-10)


def test_separable_frequencies():
    spec = HamiltonianSpec.separable([PotentialSpec.harmonic(1.0), PotentialSpec.harmonic(2.0)])
    chart = build_torus_separable(spec, [0.5, 1.0])
    np.testing.assert_allclose(frequencies(chart), [2.0, 4.0], rtol=1e-10)
    assert chart.energy == pytest.approx(1.5)


def test_separable_mixed_closure(quartic):
    spec = HamiltonianSpec.separable([quartic.potential, PotentialSpec.harmonic(1.0)])
    chart = build_torus_separable(spec, [0.7, 0.4])
    assert max(o.closure_error for o in chart.orbits) < 1e-8
    assert chart.validate()["lagrangian_error"] < 1e-8


def test_separable_axis_failure(harmonic_2d):
    with pytest.raises(UnsupportedTopologyError):
        build_torus_separable(harmonic_2d, [0.5, -1.0])


def test_quartic_frequency_increases(quartic):
    omegas = [frequencies(build_torus_1d(quartic, E))[0] for E in (0.2, 0.5, 1.0, 2.0)]
    assert np.all(np.diff(omegas) > 0)


@pytest.mark.parametrize("E", [0.3, 1.0])
def test_action_derivative_is_period(quartic, E):
    dE = 1e-4 * E
    Ip = action_integrals(build_torus_1d(quartic, E + dE)).I[0]
    Im = action_integrals(build_torus_1d(quartic, E - dE)).I[0]
    T = build_torus_1d(quartic, E).periods[0]
    assert (Ip - Im) / (2 * dE) == pytest.approx(T, rel=1e-3)


def test_reparametrization_invariance(quartic):
    chart = build_torus_1d(quartic, 1.0)
    I0 = action_integrals(chart).I[0]
    assert abs(action_integrals(chart.refined(2)).I[0] - I0) < 1e-9 * I0


def test_save_load(tmp_path, morse):
    chart = build_torus_1d(morse, 0.4)
    back = load_chart(save_chart(chart, tmp_path))
    np.testing.assert_array_equal(back.orbits[0].x_samples, chart.orbits[0].x_samples)
    assert back.periods[0] == chart.periods[0]
