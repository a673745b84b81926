"""Maslov quantization of invariant tori: eigenvalues at fixed h.

Each basis cycle k must satisfy
    I_k / (2 pi h) = n_k + alpha_k / 4 + <sigma_H> T_k / (2 pi d)
with I_k the action, alpha_k the Maslov index and T_k the cycle period.
"""

from __future__ import annotations

import bisect
import itertools
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import brentq

from .caustics import MaslovVector, maslov_vector
from .errors import NoSolutionError, SemiclassicalError
from .symbols import HamiltonianSpec, PotentialSpec
from .torus import (ActionProfile, TorusChart, action_integrals, build_axis_orbit,
                    escape_energy)
from .transport import cycle_corrections, subprincipal_average

TOL_Q = 1e-10
MAX_ITER = 60
# keep the solver off the escape energy, where orbits stop closing
_EDGE = 1e-9


@dataclass
class QuantizationResult:
    n: tuple[int, ...]
    h: float
    E: float
    defect: np.ndarray
    iterations: int
    axis_energies: np.ndarray = None
    alpha: tuple[int, ...] = ()
    actions: np.ndarray = None
    periods: np.ndarray = None
    sigma_avg: float = 0.0
    chart: Optional[TorusChart] = field(default=None, repr=False)

    @property
    def defect_max(self) -> float:
        return float(np.max(np.abs(self.defect)))


def _wrap(v):
    return (np.asarray(v, dtype=float) + 0.5) % 1.0 - 0.5


def quantization_defect(spec: HamiltonianSpec, actions: ActionProfile, alpha, sigma_avg: float,
                        n, h: float) -> np.ndarray:
    """Per-cycle residual of the quantization condition, mapped to [-1/2, 1/2)."""
    if h <= 0:
        raise ValueError("h must be positive")
    alpha = np.asarray(alpha.alpha if isinstance(alpha, MaslovVector) else alpha, dtype=float)
    n = np.atleast_1d(np.asarray(n, dtype=float))
    I = np.atleast_1d(actions.I)
    corr = cycle_corrections(sigma_avg, actions.T, spec.dim)
    return _wrap(I / (2.0 * np.pi * h) - (n + alpha / 4.0 + corr))


# --------------------------------------------------------------------------
# torus family cache


class TorusFamily:
    """Thread-safe store of solved axis orbits, keyed by (potential, E).

    Stored (E, I, T) triples give interpolated initial guesses; orbits are
    reused verbatim on exact hits. Concurrent inserts of the same key may
    duplicate work but never disagree, since orbits are deterministic in E.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._orbits = {}
        self._tables = {}  # fingerprint -> (sorted energies, actions)

    def orbit(self, potential: PotentialSpec, E: float):
        key = (potential.fingerprint(), float(E))
        with self._lock:
            hit = self._orbits.get(key)
        if hit is not None:
            return hit
        orbit = build_axis_orbit(potential, float(E))
        with self._lock:
            orbit = self._orbits.setdefault(key, orbit)
            Es, Is = self._tables.setdefault(key[0], ([], []))
            i = bisect.bisect_left(Es, key[1])
            if i == len(Es) or Es[i] != key[1]:
                Es.insert(i, key[1])
                Is.insert(i, 2.0 * np.pi * float(np.mean(orbit.p_samples * orbit.X.derivative_samples(1))))
        return orbit

    def interpolate_energy(self, potential: PotentialSpec, I_target: float) -> Optional[float]:
        """E with I(E) = I_target by linear interpolation between stored orbits."""
        with self._lock:
            Es, Is = self._tables.get(potential.fingerprint(), ([], []))
            Es, Is = list(Es), list(Is)
        if len(Es) < 2 or not Is[0] <= I_target <= Is[-1]:
            return None
        return float(np.interp(I_target, Is, Es))

    def __len__(self):
        with self._lock:
            return len(self._orbits)


_DEFAULT_FAMILY = TorusFamily()


def _area_table(potential: PotentialSpec, samples: int = 20001):
    """Cheap I(E) by sampled area, used only for initial guesses and existence checks."""
    lo, hi = potential.domain
    xs = np.linspace(lo, hi, samples)
    vs = potential.value(xs)

    def action(E):
        return 2.0 * trapezoid(np.sqrt(np.clip(E - vs, 0.0, None)), xs)

    return action


def _axis_solve(potential, target, h, family, bracket=None, corr_fn=None, tol=TOL_Q):
    """Solve I(E)/(2 pi h) - corr(E) = target on one axis by safeguarded Newton.

    dI/dE = T supplies the derivative; steps leaving the current bracket fall
    back to bisection.
    """
    e_min = potential.v_min
    e_max = escape_energy(potential)
    e_max -= _EDGE * max(1.0, abs(e_max - e_min))
    corr_fn = corr_fn or (lambda orbit: 0.0)

    def g(E):
        orbit = family.orbit(potential, E)
        I = 2.0 * np.pi * float(np.mean(orbit.p_samples * orbit.X.derivative_samples(1)))
        return I / (2.0 * np.pi * h) - corr_fn(orbit) - target, orbit

    lo, hi = e_min, e_max
    if bracket is not None:
        lo, hi = float(bracket[0]), float(bracket[1])
        g_lo, _ = g(lo)
        g_hi, _ = g(hi)
        if np.sign(g_lo) == np.sign(g_hi):
            raise NoSolutionError(f"no sign change of the defect in [{lo:g}, {hi:g}]")
        E = None
    else:
        area = _area_table(potential)
        if area(e_max) / (2.0 * np.pi * h) < target - 0.05:
            raise NoSolutionError(
                f"no bound torus: maximal action {area(e_max):.6g} is below 2 pi h ({target:.4g})")
        E = family.interpolate_energy(potential, 2.0 * np.pi * h * target)
        if E is None:
            if area(e_max) / (2.0 * np.pi * h) <= target:
                E = e_max - 1e-6 * (e_max - e_min)
            else:
                E = brentq(lambda e: area(e) / (2.0 * np.pi * h) - target, e_min, e_max, xtol=1e-12)
    if E is None or not lo < E < hi:
        E = 0.5 * (lo + hi)

    for it in range(1, MAX_ITER + 1):
        val, orbit = g(E)
        if abs(val) <= tol:
            return E, orbit, it
        if val < 0:
            lo = E
        else:
            hi = E
        step = val / (orbit.period / (2.0 * np.pi * h))
        E_new = E - step
        if not lo < E_new < hi:
            E_new = 0.5 * (lo + hi)
        if abs(E_new - E) <= 1e-15 * max(1.0, abs(E)):
            return E, orbit, it
        E = E_new
    raise NoSolutionError(f"quantization solve did not converge (last defect {val:.3e})")


def _sigma_kind(spec):
    sub = spec.subprincipal
    if sub is None:
        return "none", 0.0
    if sub.kind == "constant":
        return "constant", float(sub.params["value"])
    return "general", None


def solve_eigenvalue(spec: HamiltonianSpec, n, h: float, E_bracket=None, tol_q: float = TOL_Q,
                     family: Optional[TorusFamily] = None) -> QuantizationResult:
    """Semiclassical eigenvalue for quantum numbers ``n`` at fixed h.

    ``E_bracket`` is an axis-energy interval (one pair, or one pair per axis);
    without it the admissible well interval is used.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    family = _DEFAULT_FAMILY if family is None else family
    n = tuple(int(v) for v in np.atleast_1d(n))
    d = spec.dim
    if len(n) != d:
        raise ValueError(f"need {d} quantum numbers, got {len(n)}")
    if any(v < 0 for v in n):
        raise NoSolutionError("quantum numbers must be non-negative")
    if E_bracket is not None:
        br = np.asarray(E_bracket, dtype=float).reshape(-1, 2)
        brackets = [tuple(br[k if br.shape[0] > 1 else 0]) for k in range(d)]
    else:
        brackets = [None] * d

    # a librational cycle of a simple well always carries two folds; the
    # value is confirmed on the final torus below
    alpha = np.full(d, 2)
    kind, c = _sigma_kind(spec)
    sigma = 0.0 if kind == "none" else (c if kind == "constant" else 0.0)
    total_iter = 0
    energies = np.zeros(d)
    orbits = [None] * d
    for sweep in range(MAX_ITER):
        for k, pot in enumerate(spec.axes):
            target = n[k] + alpha[k] / 4.0
            corr = (lambda o, s=sigma: s * o.period / (2.0 * np.pi * d)) if sigma else None
            energies[k], orbits[k], it = _axis_solve(pot, target, h, family, brackets[k], corr, tol_q)
            total_iter += it
        if kind != "general":
            break
        chart = TorusChart(spec, tuple(orbits))
        new_sigma = subprincipal_average(spec, chart)
        shift = abs(new_sigma - sigma) * float(np.max(chart.periods)) / (2.0 * np.pi * d)
        sigma = new_sigma
        if shift <= 0.1 * tol_q:
            break
    else:
        raise NoSolutionError("subprincipal fixed-point iteration did not converge")

    chart = TorusChart(spec, tuple(orbits))
    mv = maslov_vector(chart)
    actions = action_integrals(chart)
    if kind == "general":
        sigma = subprincipal_average(spec, chart)
    defect = quantization_defect(spec, actions, mv, sigma, n, h)
    if tuple(mv.alpha) != tuple(int(a) for a in alpha):
        raise SemiclassicalError(f"Maslov vector {mv.alpha} differs from the librational value")
    if np.max(np.abs(defect)) > tol_q:
        raise NoSolutionError(f"defect {np.max(np.abs(defect)):.3e} above tolerance at n={n}")
    return QuantizationResult(n, float(h), float(np.sum(energies)), defect, total_iter,
                              energies.copy(), tuple(mv.alpha), np.atleast_1d(actions.I),
                              np.atleast_1d(actions.T), float(sigma), chart)


def lattice(ranges) -> list[tuple[int, ...]]:
    """Product lattice from per-axis ranges (ints or (lo, hi) inclusive pairs)."""
    axes = []
    for r in ranges:
        if isinstance(r, (int, np.integer)):
            axes.append(range(int(r) + 1))
        else:
            lo, hi = r
            axes.append(range(int(lo), int(hi) + 1))
    return [tuple(t) for t in itertools.product(*axes)]


@dataclass
class SpectrumTable:
    h: float
    results: list[QuantizationResult]
    failures: dict  # n -> "ErrorType: message"

    @property
    def energies(self) -> np.ndarray:
        return np.array([r.E for r in self.results])

    def by_n(self, n) -> Optional[QuantizationResult]:
        n = tuple(np.atleast_1d(n))
        return next((r for r in self.results if r.n == n), None)


def spectrum(spec: HamiltonianSpec, n_range: Sequence, h: float, tol_q: float = TOL_Q,
             family: Optional[TorusFamily] = None, jobs: int = 1) -> SpectrumTable:
    """Solve every lattice point; failures are recorded per n, never raised."""
    points = [tuple(int(v) for v in np.atleast_1d(n)) for n in n_range]
    if not points:
        raise ValueError("empty quantum-number lattice")
    family = TorusFamily() if family is None else family

    def one(n, fam):
        try:
            return n, solve_eigenvalue(spec, n, h, tol_q=tol_q, family=fam), None
        except SemiclassicalError as exc:
            return n, None, f"{type(exc).__name__}: {exc}"

    # increasing n per axis lets later solves start from interpolated guesses
    order = sorted(points, key=lambda t: (sum(t), t))
    if jobs > 1:
        # private caches keep each result independent of thread scheduling
        with ThreadPoolExecutor(jobs) as pool:
            out = list(pool.map(lambda n: one(n, TorusFamily()), order))
    else:
        out = [one(n, family) for n in order]
    results = sorted((r for _, r, _ in out if r is not None), key=lambda r: (r.E, r.n))
    failures = {n: msg for n, _, msg in out if msg is not None}
    return SpectrumTable(float(h), results, failures)
