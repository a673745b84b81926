import numpy as np
import pytest

from semiclassical.errors import CausticProximityError, ResonanceError
from semiclassical.symbols import HamiltonianSpec, PotentialSpec, Subprincipal
from semiclassical.torus import build_torus_1d, build_torus_separable
from semiclassical.transport import (amplitude_field, amplitude_momentum, amplitude_position,
                                     cycle_corrections, lie_derivative_residual,
                                     momentum_transport_residual, normalization,
                                     position_transport_residual, solve_cohomological,
                                     subprincipal_average, subprincipal_periodic_part,
                                     subprincipal_phase_residual)

SPECS = {
    "harmonic": HamiltonianSpec.one_dim(PotentialSpec.harmonic(1.0)),
    "quartic": HamiltonianSpec.one_dim(PotentialSpec.polynomial([0, 0, 0, 0, 1], domain=(-4, 4))),
    "morse": HamiltonianSpec.one_dim(PotentialSpec.morse(1.0, 1.0, domain=(-3, 30))),
}


def test_equal_jacobian_equal_amplitude(harmonic):
    chart = build_torus_1d(harmonic, 1.0)
    # |sin| is symmetric about pi/2
    a1 = amplitude_position(chart, np.pi / 2 - 0.4)
    a2 = amplitude_position(chart, np.pi / 2 + 0.4)
    assert a1 == pytest.approx(a2, rel=1e-10)


def test_amplitude_normalization(harmonic):
    chart = build_torus_1d(harmonic, 1.0)
    assert amplitude_position(chart, np.pi / 2) == pytest.approx(normalization(1), rel=1e-8)


def test_caustic_proximity(harmonic):
    chart = build_torus_1d(harmonic, 1.0)
    with pytest.raises(CausticProximityError):
        amplitude_position(chart, np.pi + 1e-3)
    with pytest.raises(CausticProximityError):
        amplitude_momentum(chart, np.pi / 2)


def test_field_masks_caustics(harmonic):
    field = amplitude_field(build_torus_1d(harmonic, 1.0))
    assert np.isnan(field.values).any() and np.isfinite(field.values).any()
    dens = field.density()
    ok = np.isfinite(dens)
    np.testing.assert_allclose(dens[ok], dens[ok][0], rtol=1e-6)


@pytest.mark.parametrize("name", SPECS)
@pytest.mark.parametrize("E", [0.3, 0.8])
def test_transport_residuals(name, E):
    spec = SPECS[name]
    chart = build_torus_1d(spec, E)
    assert position_transport_residual(chart) < 1e-6
    assert momentum_transport_residual(spec, chart) < 1e-5
    assert lie_derivative_residual(chart) < 1e-6


def test_separable_density_constant(harmonic_2d):
    chart = build_torus_separable(harmonic_2d, [0.5, 0.8])
    dens = amplitude_field(chart).density()
    ok = np.isfinite(dens)
    np.testing.assert_allclose(dens[ok], dens[ok].flat[0], rtol=1e-6)


def test_average_zero_and_constant(harmonic):
    chart = build_torus_1d(harmonic, 1.0)
    assert subprincipal_average(harmonic, chart) == 0.0
    spec = harmonic.with_subprincipal(Subprincipal.constant(0.4))
    assert subprincipal_average(spec, chart) == pytest.approx(0.4)
    G = subprincipal_periodic_part(spec, chart)
    assert np.all(np.abs(G.coeffs) < 1e-14)


def test_space_and_time_average_agree(harmonic):
    spec = harmonic.with_subprincipal(Subprincipal.cosine())
    chart = build_torus_1d(spec, 1.0)
    a = subprincipal_average(spec, chart, "space")
    b = subprincipal_average(spec, chart, "time")
    assert a == pytest.approx(b, abs=1e-8)


def test_single_harmonic_solution():
    omega = 1.7
    phi = 2 * np.pi * np.arange(64) / 64
    G = solve_cohomological(np.cos(phi), [omega])
    assert G.sigma_avg == pytest.approx(0.0, abs=1e-15)
    np.testing.assert_allclose(G(phi), np.sin(phi) / omega, atol=1e-13)
    assert G.coefficient(0) == 0


# near dissociation the orbit's spectrum outruns K_max = 64, so the bound is looser
@pytest.mark.parametrize("E,bound", [(0.5, 1e-6), (0.99, 1e-3)])
def test_phase_ode_residual(morse, E, bound):
    spec = morse.with_subprincipal(Subprincipal.cosine(0.3, 1.0))
    chart = build_torus_1d(spec, E)
    G = subprincipal_periodic_part(spec, chart)
    assert subprincipal_phase_residual(spec, chart, G) < bound


def test_gauge_shift(quartic):
    spec = quartic.with_subprincipal(Subprincipal.polynomial([0, 0.5, 0.2]))
    chart = build_torus_1d(spec, 1.0)
    G = subprincipal_periodic_part(spec, chart)
    delta = 0.41
    assert subprincipal_average(spec, chart.shifted(delta)) == pytest.approx(
        subprincipal_average(spec, chart), abs=1e-12)
    Gs = subprincipal_periodic_part(spec, chart.shifted(delta))
    phi = np.linspace(0, 2 * np.pi, 11)
    np.testing.assert_allclose(Gs(phi), G.shifted(delta)(phi), atol=1e-10)


def test_resonance_reported():
    spec = HamiltonianSpec.separable([PotentialSpec.harmonic(1.0)] * 2, Subprincipal.cosine(0.2))
    chart = build_torus_separable(spec, [0.5, 0.5])
    with pytest.raises(ResonanceError) as info:
        subprincipal_periodic_part(spec, chart)
    k = info.value.k
    assert k[0] == -k[1]


def test_cycle_corrections():
    np.testing.assert_allclose(cycle_corrections(0.5, [np.pi]), 0.25)
    np.testing.assert_allclose(cycle_corrections(1.0, [np.pi, np.pi]), [0.25, 0.25])
