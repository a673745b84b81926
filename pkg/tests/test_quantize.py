import numpy as np
import pytest

from semiclassical.caustics import maslov_vector
from semiclassical.errors import NoSolutionError
from semiclassical.quantize import (TorusFamily, quantization_defect, solve_eigenvalue, spectrum)
from semiclassical.oracle import solve_1d
from semiclassical.symbols import HamiltonianSpec, PotentialSpec, Subprincipal
from semiclassical.torus import action_integrals, build_torus_1d

from conftest import morse_levels


@pytest.mark.parametrize("n,h,E", [(0, 0.1, 0.1), (3, 0.05, 0.35)])
def test_harmonic_values(harmonic, n, h, E):
    assert solve_eigenvalue(harmonic, n, h).E == pytest.approx(E, abs=1e-9)


def test_harmonic_defect_zero(harmonic):
    h = 0.1
    chart = build_torus_1d(harmonic, 5 * h)
    d = quantization_defect(harmonic, action_integrals(chart), maslov_vector(chart), 0.0, 2, h)
    assert abs(d[0]) < 1e-10


def test_defect_linearization(quartic):
    h, n = 0.1, 3
    r = solve_eigenvalue(quartic, n, h)
    delta = 1e-6
    chart = build_torus_1d(quartic, r.E + delta)
    d = quantization_defect(quartic, action_integrals(chart), (2,), 0.0, n, h)[0]
    assert d == pytest.approx(r.periods[0] * delta / (2 * np.pi * h), rel=1e-4)


def test_morse_levels(morse):
    h = 0.05
    for n in range(6):
        assert solve_eigenvalue(morse, n, h).E == pytest.approx(morse_levels(h, n), abs=1e-8)


def test_morse_above_dissociation(morse):
    with pytest.raises(NoSolutionError):
        solve_eigenvalue(morse, 12, 0.1)


def test_bracket_without_sign_change(harmonic):
    with pytest.raises(NoSolutionError):
        solve_eigenvalue(harmonic, 0, 0.1, E_bracket=(0.5, 0.9))


def test_bracketed_solve(harmonic):
    assert solve_eigenvalue(harmonic, 2, 0.1, E_bracket=(0.3, 0.7)).E == pytest.approx(0.5, abs=1e-9)


def test_quartic_spectrum_monotone(quartic):
    table = spectrum(quartic, [(n,) for n in range(11)], 0.1)
    assert not table.failures
    assert np.all(np.diff(table.energies) > 0)
    assert max(r.defect_max for r in table.results) < 1e-10


def test_spectrum_records_failures(morse):
    table = spectrum(morse, [(n,) for n in range(12)], 0.1)
    assert len(table.results) == 10
    assert set(table.failures) == {(10,), (11,)}


def test_two_dim_degeneracy(harmonic_2d):
    table = spectrum(harmonic_2d, [(a, b) for a in (0, 1) for b in (0, 1)], 0.1)
    for r in table.results:
        assert r.E == pytest.approx(0.2 * (sum(r.n) + 1), abs=1e-9)
        assert r.alpha == (2, 2)


@pytest.mark.parametrize("c", [0.3, -0.5])
def test_constant_shift(harmonic, c):
    spec = harmonic.with_subprincipal(Subprincipal.constant(c))
    for n in (0, 4):
        shifted = solve_eigenvalue(spec, n, 0.1).E
        assert shifted - solve_eigenvalue(harmonic, n, 0.1).E == pytest.approx(0.1 * c, abs=1e-8)


def test_linear_response(quartic):
    c, h = 1e-3, 0.1
    Ep = solve_eigenvalue(quartic.with_subprincipal(Subprincipal.constant(c)), 2, h).E
    Em = solve_eigenvalue(quartic.with_subprincipal(Subprincipal.constant(-c)), 2, h).E
    assert (Ep - Em) / (2 * c) == pytest.approx(h, rel=1e-6)


def test_general_sigma_against_oracle():
    # first-order shift h<sigma> is the leading correction; the residual is O(h^2)
    V = PotentialSpec.harmonic(1.0)
    sub = Subprincipal.cosine(0.3, 1.0)
    spec = HamiltonianSpec.one_dim(V, sub)
    h = 0.05
    orc = solve_1d(V, h, 3, subprincipal=sub)
    for n in range(3):
        assert abs(solve_eigenvalue(spec, n, h).E - orc.energies[n]) < 5 * h ** 2


def test_family_reuse_is_deterministic(quartic):
    a = [solve_eigenvalue(quartic, n, 0.05, family=TorusFamily()).E for n in range(4)]
    fam = TorusFamily()
    b = [solve_eigenvalue(quartic, n, 0.05, family=fam).E for n in range(4)]
    c = [solve_eigenvalue(quartic, n, 0.05, family=TorusFamily()).E for n in range(4)]
    assert a == c
    np.testing.assert_allclose(a, b, rtol=1e-12)
    assert len(fam) > 0


def test_threaded_spectrum_matches(quartic):
    pts = [(n,) for n in range(6)]
    a = spectrum(quartic, pts, 0.1, jobs=3).energies
    b = spectrum(quartic, pts, 0.1, jobs=3).energies
    np.testing.assert_array_equal(a, b)
    np.testing.assert_allclose(a, spectrum(quartic, pts, 0.1).energies, rtol=1e-12)
