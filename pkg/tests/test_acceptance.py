"""Acceptance criteria at their stated tolerances, one pass/fail line each.

Criteria 2 and 6 fail on this model; the numbers they print are the measured values.
"""

import csv
import time
from pathlib import Path

import numpy as np

from semiclassical.caustics import find_crossings, maslov_vector
from semiclassical.cli.checks import run_check
from semiclassical.cli.config import load_config
from semiclassical.cli.runs import _oracle_energies
from semiclassical.lagdist import (PhaseFunction, branch_phase_winding, damped_fresnel, loglog_slope,
                                   oscillatory_integral, overlap, phase_consistency, residual_norm,
                                   signature, smooth_cutoff, stationary_phase_errors,
                                   stationary_phase_leading, transition_factor, wkb_eigenfunction,
                                   wkb_grid)
from semiclassical.oracle import solve_1d
from semiclassical.quantize import solve_eigenvalue
from semiclassical.symbols import HamiltonianSpec, PotentialSpec, Subprincipal
from semiclassical.torus import build_torus_1d, build_torus_separable
from semiclassical.transport import (amplitude_field, momentum_transport_residual,
                                     position_transport_residual)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
HARMONIC = HamiltonianSpec.one_dim(PotentialSpec.harmonic(1.0))
MORSE = HamiltonianSpec.one_dim(PotentialSpec.morse(1.0, 1.0, domain=(-3.0, 30.0)))
QUARTIC = HamiltonianSpec.one_dim(PotentialSpec.polynomial([0, 0, 0, 0, 1], domain=(-4.0, 4.0)))


def _levels_vs_oracle(spec, h, ns):
    pts = [(n,) for n in ns]
    oracle, _ = _oracle_energies(spec, h, pts, 1e-6)
    return [(solve_eigenvalue(spec, n, h), oracle[n]) for n in pts]


def test_criterion_1_exact_potentials(acceptance):
    t0 = time.perf_counter()
    worst = 0.0
    for h in (0.2, 0.1, 0.05):
        # Morse bound levels: n + 1/2 < sqrt(D) / (h a)
        n_morse = range(int(np.ceil(1.0 / h - 0.5)))
        for spec, ns in ((HARMONIC, range(11)), (MORSE, n_morse)):
            for r, e in _levels_vs_oracle(spec, h, ns):
                worst = max(worst, abs(r.E - e) / max(1.0, abs(e)))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-6 and dt < 30.0
    assert acceptance(1, ok, f"max |E_ebk - E_oracle|/max(1,E) = {worst:.2e} (<= 1e-6), "
                             f"runtime {dt:.1f} s (< 30 s)")


def test_criterion_2_quartic_order(acceptance):
    hs = (0.2, 0.1, 0.05, 0.025)
    errs = np.array([[abs(r.E - e) for r, e in _levels_vs_oracle(QUARTIC, h, range(6))] for h in hs])
    slopes = [loglog_slope(hs, errs[:, n]) for n in range(6)]
    ok = all(1.8 <= s <= 2.2 for s in slopes)
    assert acceptance(2, ok, "eigenvalue error slopes n=0..5: "
                      + ", ".join(f"{s:.3f}" for s in slopes) + " (in [1.8, 2.2])")


def test_criterion_3_subprincipal_shift(acceptance):
    worst_shift = worst_oracle = 0.0
    for c in (0.3, -0.5):
        spec = HARMONIC.with_subprincipal(Subprincipal.constant(c))
        for h in (0.2, 0.1, 0.05):
            for r, e in _levels_vs_oracle(spec, h, range(11)):
                E0 = solve_eigenvalue(HARMONIC, r.n, h).E
                worst_shift = max(worst_shift, abs(r.E - E0 - c * h))
                worst_oracle = max(worst_oracle, abs(r.E - e) / max(1.0, abs(e)))
    ok = worst_shift <= 1e-8 and worst_oracle <= 1e-6
    assert acceptance(3, ok, f"max |dE - c h| = {worst_shift:.2e} (<= 1e-8), "
                             f"oracle rel. err {worst_oracle:.2e} (<= 1e-6)")


def _test_tori():
    for spec, energies in ((HARMONIC, (0.5, 2.0)), (QUARTIC, (0.3, 1.5)), (MORSE, (0.2, 0.8))):
        for E in energies:
            yield spec, build_torus_1d(spec, E)


def _spread(field):
    d = field.density()
    d = d[np.isfinite(d)]
    return float((d.max() - d.min()) / d.mean())


def test_criterion_4_transport(acceptance):
    density = ode = 0.0
    for spec, chart in _test_tori():
        density = max(density, _spread(amplitude_field(chart, "position")),
                      _spread(amplitude_field(chart, "momentum")))
        ode = max(ode, position_transport_residual(chart),
                  momentum_transport_residual(spec, chart))
    chart2 = build_torus_separable(
        HamiltonianSpec.separable([PotentialSpec.harmonic(1.0), PotentialSpec.harmonic(1.5)]), (0.7, 1.1))
    density = max(density, _spread(amplitude_field(chart2, "position")),
                  _spread(amplitude_field(chart2, "momentum")))
    ok = density <= 1e-6 and ode < 1e-5
    assert acceptance(4, ok, f"density spread {density:.2e} (<= 1e-6), "
                             f"transport ODE residual {ode:.2e} (< 1e-5)")


def test_criterion_5_stationary_phase(acceptance):
    sweep = (0.1, 0.05, 0.025, 0.0125)
    fresnel = max(abs(n - e) / abs(e) for n, e in (damped_fresnel(h) for h in sweep))
    slope = loglog_slope(sweep, stationary_phase_errors(sweep))
    # two generating functions of p = x with opposite Hessian signatures
    x = np.array([0.4])
    Sa = PhaseFunction(1, 1, lambda x, th: x[..., 0] * th[..., 0] - 0.5 * th[..., 0] ** 2)
    Sb = PhaseFunction(1, 1, lambda x, th: 0.5 * x[..., 0] ** 2 + 0.5 * (th[..., 0] - x[..., 0]) ** 2)
    amp = lambda x, th: np.exp(-(th[..., 0] - x[..., 0]) ** 2)  # noqa: E731
    t = transition_factor(signature(Sa.hess_theta(x, x)), signature(Sb.hess_theta(x, x)))
    lead_gap = num_gap = 0.0
    for h in (0.05, 0.02):
        la = stationary_phase_leading(Sa, amp, h, x, x=x)
        lb = stationary_phase_leading(Sb, amp, h, x, x=x)
        lead_gap = max(lead_gap, abs(la - t * lb))
        na = oscillatory_integral(Sa, amp, h, (-5.6, 6.4), x=x)
        nb = oscillatory_integral(Sb, amp, h, (-5.6, 6.4), x=x)
        num_gap = max(num_gap, abs(na - t * nb) / h)
    ok = fresnel <= 1e-10 and 0.8 <= slope <= 1.2 and lead_gap < 1e-8 and num_gap < 3.0
    assert acceptance(5, ok, f"Fresnel rel. err {fresnel:.1e} (<= 1e-10), SP slope {slope:.3f} "
                             f"(in [0.8, 1.2]), transition factor gap {lead_gap:.1e} leading, "
                             f"{num_gap:.2f} h numeric")


def test_criterion_6_wkb_residual(acceptance):
    hs = (0.2, 0.1, 0.05)
    res = np.zeros((len(hs), 6))
    for i, h in enumerate(hs):
        for n in range(6):
            r = solve_eigenvalue(QUARTIC, n, h)
            u = wkb_eigenfunction(QUARTIC, r.chart, r.E, h, wkb_grid(r.chart, h))
            res[i, n] = residual_norm(QUARTIC, u, r.E, h)
    slopes = [loglog_slope(hs, res[:, n]) for n in range(6)]
    h = 0.05
    r = solve_eigenvalue(HARMONIC, 0, h)
    u = wkb_eigenfunction(HARMONIC, r.chart, r.E, h, wkb_grid(r.chart, h))
    orc = solve_1d(HARMONIC.axes[0], h, 1)
    ov = overlap(u.x, u.values, orc.x, orc.vectors[:, 0])
    ok = all(1.7 <= s <= 2.3 for s in slopes) and ov >= 0.99
    assert acceptance(6, ok, "residual slopes n=0..5: " + ", ".join(f"{s:.3f}" for s in slopes)
                      + f" (2.0 +- 0.3); harmonic n=0 overlap {ov:.4f} (>= 0.99)")


def test_criterion_7_topology(acceptance):
    counts, alpha_bad, phase = [], 0, 0.0
    charts = [c for _, c in _test_tori()]
    charts.append(build_torus_separable(
        HamiltonianSpec.separable([PotentialSpec.harmonic(1.0), PotentialSpec.morse(1.0, 1.0)]),
        (0.7, 0.4)))
    for c in charts:
        counts += [len(find_crossings(c, k)) for k in range(c.dim)]
        base = maslov_vector(c).alpha
        alpha_bad += maslov_vector(c.refined(2)).alpha != base
    for spec, hs, ns in ((HARMONIC, (0.2, 0.1, 0.05), range(11)), (QUARTIC, (0.2, 0.1, 0.05, 0.025), range(6)),
                         (MORSE, (0.1, 0.05), range(10))):
        for h in hs:
            for n in ns:
                r = solve_eigenvalue(spec, n, h)
                phase = max(phase, phase_consistency(r.chart, h, r.sigma_avg),
                            abs(branch_phase_winding(r.chart, h, r.sigma_avg)))
    ok = all(k == 2 for k in counts) and alpha_bad == 0 and phase < 1e-8
    assert acceptance(7, ok, f"crossings per cycle {sorted(set(counts))} (all 2), alpha changes under "
                             f"refinement {alpha_bad} (0), max phase defect {phase:.1e} (< 1e-8)")


def _check_rows(path):
    with open(path / "check.csv", newline="") as f:
        return list(csv.DictReader(f))


def test_criterion_8_checks(acceptance, tmp_path):
    bad = []
    for name in ("check_harmonic.toml", "harmonic.toml", "morse.toml"):
        report = run_check(load_config(CONFIGS / name, mode="check"), tmp_path / name, jobs=1)
        bad += [f"{name}:{f['check']}" for f in report.failures]
    typed = {}
    for name, err in (("check_resonance.toml", "ResonanceError"),
                      ("check_degenerate.toml", "DegenerateCausticError")):
        report = run_check(load_config(CONFIGS / name), tmp_path / name, jobs=1)
        bad += [f"{name}:{f['check']}" for f in report.failures]
        typed[err] = any(r["check"] == f"expected_{err}" and r["status"] == "pass"
                         for r in _check_rows(tmp_path / name))
    ok = not bad and all(typed.values())
    assert acceptance(8, ok, f"default-config check failures {bad or 'none'}; typed errors raised "
                             + ", ".join(f"{k}={v}" for k, v in typed.items()))
