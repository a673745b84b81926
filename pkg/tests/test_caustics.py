import numpy as np
import pytest

from semiclassical.caustics import find_crossings, jacobian_det, maslov_index, maslov_vector
from semiclassical.errors import DegenerateCausticError
from semiclassical.symbols import HamiltonianSpec, PotentialSpec
from semiclassical.torus import build_torus_1d, build_torus_separable


def test_jacobian_at_fold_and_midpoint(harmonic):
    chart = build_torus_1d(harmonic, 1.0)
    assert abs(jacobian_det(chart, 0.0)) < 1e-8
    assert abs(jacobian_det(chart, np.pi)) < 1e-8
    # X = -cos(phi): X' = sin(phi), largest at phi = pi/2
    assert jacobian_det(chart, np.pi / 2) == pytest.approx(1.0, rel=1e-8)


def test_product_jacobian(harmonic_2d):
    chart = build_torus_separable(harmonic_2d, [0.5, 1.0])
    phi = np.array([0.4, 1.3])
    expected = chart.orbits[0].X(phi[0], 1) * chart.orbits[1].X(phi[1], 1)
    assert jacobian_det(chart, phi) == pytest.approx(float(expected), rel=1e-12)


def test_harmonic_crossing_angles(harmonic):
    chart = build_torus_1d(harmonic, 1.0)
    angles = sorted(c.angle % (2 * np.pi) for c in find_crossings(chart, 0))
    assert len(angles) == 2
    # the left fold at the origin is reported as 2 pi
    assert min(abs(angles[0] - np.pi), abs(angles[1] - np.pi)) < 1e-10
    assert min(abs(a) for a in angles) < 1e-10 or min(abs(a - 2 * np.pi) for a in angles) < 1e-10


@pytest.mark.parametrize("V", [PotentialSpec.harmonic(1.0),
                               PotentialSpec.polynomial([0, 0, 0, 0, 1], domain=(-4, 4)),
                               PotentialSpec.morse(1.0, 1.0, domain=(-3, 30))],
                         ids=["harmonic", "quartic", "morse"])
def test_two_crossings_alpha_two(V):
    chart = build_torus_1d(HamiltonianSpec.one_dim(V), 0.6)
    assert maslov_index(chart, 0) == 2
    assert maslov_vector(chart.refined(2)).alpha == (2,)
    assert maslov_vector(chart.shifted(0.9)).alpha == (2,)


def test_sign_change_at_crossings(quartic):
    chart = build_torus_1d(quartic, 1.0)
    o = chart.orbits[0]
    for c in find_crossings(chart, 0):
        assert o.X(c.angle - 1e-3, 1) * o.X(c.angle + 1e-3, 1) < 0


def test_separable_alpha(harmonic_2d):
    chart = build_torus_separable(harmonic_2d, [0.5, 1.0])
    mv = maslov_vector(chart)
    assert mv.alpha == (2, 2)
    assert len(mv.crossings) == 4


def test_degenerate_level():
    spec = HamiltonianSpec.one_dim(PotentialSpec.polynomial([1, 0, -2, 0, 1], domain=(-3, 3)))
    with pytest.raises(DegenerateCausticError):
        build_torus_1d(spec, 1.0)


def test_quartic_momentum_caustic_is_degenerate(quartic):
    # P' ~ V'(X) has a triple zero at x = 0
    chart = build_torus_1d(quartic, 1.0)
    with pytest.raises(DegenerateCausticError):
        find_crossings(chart, 0, momentum=True)
    assert len(find_crossings(chart, 0, momentum=True, strict=False)) == 2
