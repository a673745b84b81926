"""Hamiltonian flow, invariant tori of librational wells, actions and frequencies.

The angle on each axis is the rescaled flow time phi = 2*pi*t/T measured from
the left turning point, so the flow on the torus is exactly
phi_dot = omega = 2*pi/T.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .errors import IntegrationError, StiffnessError, TrajectoryEscapeError, UnsupportedTopologyError
from .fourier import PeriodicSamples, angle_grid
from .symbols import HamiltonianSpec, PotentialSpec, eval_h0, potential_from_dict, potential_to_dict

TOL_E = 1e-7
TOL_CLOSURE = 1e-8
TOL_LAG = 1e-8
ODE_RTOL = 1e-12

_N_MIN = 64
_N_MAX = 1 << 14


@dataclass
class Trajectory:
    t: np.ndarray
    p: np.ndarray  # (n_t, d)
    x: np.ndarray  # (n_t, d)
    energy_drift: float
    sol: object = field(default=None, repr=False)


def _rhs(spec: HamiltonianSpec):
    d = spec.dim
    axes = spec.axes

    def f(t, y):
        p, x = y[:d], y[d:]
        out = np.empty(2 * d)
        for k in range(d):
            out[k] = -axes[k]._dv(x[k])
        out[d:] = 2.0 * p
        return out

    return f


def _escape_events(spec: HamiltonianSpec):
    d = spec.dim
    events = []
    for k, v in enumerate(spec.axes):
        lo, hi = v.domain

        def low(t, y, k=k, lo=lo):
            return y[d + k] - lo

        def high(t, y, k=k, hi=hi):
            return hi - y[d + k]

        for ev in (low, high):
            ev.terminal = True
            ev.direction = -1
            events.append(ev)
    return events


def integrate_flow(spec: HamiltonianSpec, y0, t_span, tol: float = 1e-10,
                   t_eval=None) -> Trajectory:
    """Integrate x' = dH0/dp, p' = -dH0/dx with adaptive DOP853.

    ``y0`` is ``(p0, x0)``. The local tolerance is tightened until the energy
    drift along the output is at most ``tol * |E|``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    p0, x0 = (np.atleast_1d(np.asarray(a, dtype=float)) for a in y0)
    d = spec.dim
    if p0.size != d or x0.size != d:
        raise ValueError(f"initial point must have {d} momentum and {d} position entries")
    for k, v in enumerate(spec.axes):
        v.check_domain(x0[k])
    E = float(eval_h0(spec, p0, x0))
    y = np.concatenate([p0, x0])
    budget = tol * max(abs(E), np.finfo(float).tiny)
    rtol = min(tol / 10.0, 1e-8)
    while True:
        sol = solve_ivp(_rhs(spec), t_span, y, method="DOP853", rtol=rtol,
                        atol=rtol * max(1.0, np.abs(y).max()), dense_output=True,
                        events=_escape_events(spec), t_eval=t_eval)
        if sol.status == -1:
            raise StiffnessError(f"flow integration failed: {sol.message}")
        if sol.status == 1:
            raise TrajectoryEscapeError(f"trajectory left the domain at t={sol.t[-1]:.6g}")
        p, x = sol.y[:d].T, sol.y[d:].T
        drift = float(np.max(np.abs(eval_h0(spec, p, x) - E))) if sol.t.size else 0.0
        if drift <= budget or rtol <= 1e-14:
            break
        rtol = max(rtol / 100.0, 1e-14)
    if drift > budget:
        raise IntegrationError(f"energy drift {drift:.3e} exceeds {budget:.3e}")
    return Trajectory(sol.t, p, x, drift, sol)


# --------------------------------------------------------------------------
# one-dimensional wells


def turning_points(potential: PotentialSpec, E: float, samples: int = 20001):
    """Bracket and bisect the two roots of V(x) = E around the well.

    Raises UnsupportedTopologyError unless exactly two simple roots exist in the
    domain, and DegenerateCausticError if E touches a critical value of V.
    """
    from .caustics import check_energy_level

    lo, hi = potential.domain
    xs = np.linspace(lo, hi, samples)
    g = potential.value(xs) - E
    check_energy_level(potential, E, xs, g)
    allowed = g < 0
    changes = np.flatnonzero(allowed[1:] != allowed[:-1])
    if changes.size != 2 or allowed[0] or allowed[-1]:
        if not allowed.any():
            why = f"E={E:g} lies below the potential minimum {potential.v_min:g}"
        elif allowed[0] or allowed[-1]:
            why = f"E={E:g} is above the domain escape energy"
        else:
            why = f"E={E:g} has {changes.size} turning points (need exactly 2)"
        raise UnsupportedTopologyError(why)
    f = lambda x: float(potential.value(x)) - E  # noqa: E731
    roots = [brentq(f, xs[i], xs[i + 1], xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)
             for i in changes]
    return roots[0], roots[1]


def escape_energy(potential: PotentialSpec) -> float:
    """Lowest energy at which the allowed region reaches a domain edge."""
    lo, hi = potential.domain
    return float(min(potential.value(lo), potential.value(hi)))


@dataclass(frozen=True, eq=False)
class AxisOrbit:
    """One closed librational orbit sampled uniformly in angle."""

    potential: PotentialSpec
    energy: float
    period: float
    turning: tuple[float, float]
    x_samples: np.ndarray
    p_samples: np.ndarray
    closure_error: float

    def __post_init__(self):
        object.__setattr__(self, "X", PeriodicSamples(self.x_samples))
        object.__setattr__(self, "P", PeriodicSamples(self.p_samples))

    @property
    def n(self) -> int:
        return self.x_samples.size

    @property
    def omega(self) -> float:
        return 2.0 * np.pi / self.period

    def grid(self) -> np.ndarray:
        return angle_grid(self.n)

    def refined(self, n: int) -> "AxisOrbit":
        """Same orbit resampled on ``n`` nodes by trigonometric interpolation."""
        phi = angle_grid(n)
        return AxisOrbit(self.potential, self.energy, self.period, self.turning,
                         self.X(phi), self.P(phi), self.closure_error)

    def shifted(self, delta: float) -> "AxisOrbit":
        """Orbit with angle origin moved by ``delta`` (phi_new = phi_old - delta)."""
        phi = angle_grid(self.n) + delta
        return AxisOrbit(self.potential, self.energy, self.period, self.turning,
                         self.X(phi), self.P(phi), self.closure_error)


def build_axis_orbit(potential: PotentialSpec, E: float, n: Optional[int] = None,
                     rtol: float = ODE_RTOL, tol_E: float = TOL_E,
                     tol_closure: float = TOL_CLOSURE) -> AxisOrbit:
    x_lo, x_hi = turning_points(potential, E)
    spec = HamiltonianSpec.one_dim(potential)
    rhs = _rhs(spec)
    scale = max(1.0, abs(x_lo), abs(x_hi), np.sqrt(max(E - potential.v_min, 0.0)))
    opts = dict(method="DOP853", rtol=rtol, atol=rtol * scale, dense_output=True)

    def p_zero(t, y):
        return y[0]

    p_zero.terminal = True
    p_zero.direction = -1
    # a half period is bounded by the time to cross the well at the slowest
    # reasonable speed; the event stops integration long before this
    t_max = 1e3 * (x_hi - x_lo) / max(np.sqrt(E - potential.v_min), 1e-12)
    first = solve_ivp(rhs, (0.0, t_max), [0.0, x_lo], events=p_zero, **opts)
    if first.status != 1 or not first.t_events[0].size:
        raise IntegrationError(f"orbit at E={E:g} did not reach the right turning point")
    t_half = float(first.t_events[0][0])
    y_half = first.y_events[0][0]
    p_zero.direction = 1
    second = solve_ivp(rhs, (t_half, t_half + 10.0 * t_half), y_half, events=p_zero, **opts)
    if second.status != 1 or not second.t_events[0].size:
        raise IntegrationError(f"orbit at E={E:g} did not close")
    period = float(second.t_events[0][0])
    y_end = second.y_events[0][0]
    closure = float(max(abs(y_end[0]), abs(y_end[1] - x_lo)))
    if closure > tol_closure * max(1.0, abs(x_lo)):
        raise IntegrationError(f"non-closing orbit at E={E:g}: closure error {closure:.3e}")

    def sample(m):
        t = period * np.arange(m) / m
        y = np.empty((2, m))
        a = t <= t_half
        y[:, a] = first.sol(t[a])
        y[:, ~a] = second.sol(t[~a])
        return y

    m = n if n is not None else _N_MIN
    while True:
        y = sample(m)
        if n is not None:
            break
        tail = max(PeriodicSamples(y[1]).tail_ratio(), PeriodicSamples(y[0]).tail_ratio())
        if tail < 1e-13 or m >= _N_MAX:
            break
        m *= 2
    orbit = AxisOrbit(potential, float(E), period, (x_lo, x_hi), y[1].copy(), y[0].copy(), closure)
    drift = float(np.max(np.abs(orbit.p_samples ** 2 + potential.value(orbit.x_samples) - E)))
    if drift > tol_E * max(1.0, abs(E)):
        raise IntegrationError(f"chart leaves the energy surface: |H0-E|={drift:.3e}")
    return orbit


# --------------------------------------------------------------------------
# charts


@dataclass(frozen=True, eq=False)
class TorusChart:
    """Product of per-axis orbits: phi in T^d -> (P(phi), X(phi))."""

    spec: HamiltonianSpec
    orbits: tuple[AxisOrbit, ...]

    @property
    def dim(self) -> int:
        return len(self.orbits)

    @property
    def energy(self) -> float:
        return float(sum(o.energy for o in self.orbits))

    @property
    def axis_energies(self) -> np.ndarray:
        return np.array([o.energy for o in self.orbits])

    @property
    def omega(self) -> np.ndarray:
        return np.array([o.omega for o in self.orbits])

    @property
    def periods(self) -> np.ndarray:
        return np.array([o.period for o in self.orbits])

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(o.n for o in self.orbits)

    def _phi(self, phi):
        phi = np.asarray(phi, dtype=float)
        if self.dim == 1 and (phi.ndim == 0 or phi.shape[-1] != 1):
            phi = phi[..., None]
        if phi.shape[-1] != self.dim:
            raise ValueError(f"angles must have trailing dimension {self.dim}")
        return phi

    def X(self, phi, order: int = 0) -> np.ndarray:
        phi = self._phi(phi)
        return np.stack([o.X(phi[..., k], order) for k, o in enumerate(self.orbits)], axis=-1)

    def P(self, phi, order: int = 0) -> np.ndarray:
        phi = self._phi(phi)
        return np.stack([o.P(phi[..., k], order) for k, o in enumerate(self.orbits)], axis=-1)

    def dX(self, phi) -> np.ndarray:
        """Jacobian dX_i/dphi_j, shape (..., d, d)."""
        diag = self.X(phi, 1)
        return diag[..., :, None] * np.eye(self.dim)

    def dP(self, phi) -> np.ndarray:
        diag = self.P(phi, 1)
        return diag[..., :, None] * np.eye(self.dim)

    def mesh(self) -> np.ndarray:
        """All product-grid angles, shape (N_1, ..., N_d, d)."""
        grids = np.meshgrid(*[o.grid() for o in self.orbits], indexing="ij")
        return np.stack(grids, axis=-1)

    def mesh_samples(self) -> tuple[np.ndarray, np.ndarray]:
        """(P, X) on the product grid of ``mesh()``, taken from the stored samples."""
        xs = np.meshgrid(*[o.x_samples for o in self.orbits], indexing="ij")
        ps = np.meshgrid(*[o.p_samples for o in self.orbits], indexing="ij")
        return np.stack(ps, axis=-1), np.stack(xs, axis=-1)

    def refined(self, factor: int = 2) -> "TorusChart":
        return TorusChart(self.spec, tuple(o.refined(o.n * factor) for o in self.orbits))

    def shifted(self, delta) -> "TorusChart":
        delta = np.broadcast_to(np.asarray(delta, dtype=float), (self.dim,))
        return TorusChart(self.spec, tuple(o.shifted(float(s)) for o, s in zip(self.orbits, delta)))

    def validate(self, tol_E: float = TOL_E, tol_closure: float = TOL_CLOSURE,
                 tol_lag: float = TOL_LAG) -> dict:
        """Measure the chart invariants; raises IntegrationError on violation."""
        report = {}
        err = sum(float(np.max(np.abs(o.p_samples ** 2 + o.potential.value(o.x_samples) - o.energy)))
                  for o in self.orbits)
        if self.dim <= 2:
            h = eval_h0(self.spec.with_subprincipal(None), *self.mesh_samples())
            err = max(err, float(np.max(np.abs(h - self.energy))))
        report["energy_error"] = err
        report["closure_error"] = float(max(o.closure_error for o in self.orbits))
        if self.dim == 2:
            dX, dP = (np.stack(np.meshgrid(*[getattr(o, name).derivative_samples(1)
                                             for o in self.orbits], indexing="ij"), axis=-1)
                      [..., :, None] * np.eye(2) for name in ("X", "P"))
            omega2 = np.einsum("...i,...i->...", dX[..., :, 0], dP[..., :, 1]) - \
                np.einsum("...i,...i->...", dX[..., :, 1], dP[..., :, 0])
            report["lagrangian_error"] = float(np.max(np.abs(omega2)))
        if report["energy_error"] > tol_E * max(1.0, abs(self.energy)):
            raise IntegrationError(f"energy error {report['energy_error']:.3e}")
        if report["closure_error"] > tol_closure * max(1.0, max(abs(o.turning[0]) for o in self.orbits)):
            raise IntegrationError(f"closure error {report['closure_error']:.3e}")
        if report.get("lagrangian_error", 0.0) > tol_lag:
            raise IntegrationError(f"pullback of the symplectic form is {report['lagrangian_error']:.3e}")
        return report


def build_torus_1d(spec: HamiltonianSpec, E: float, n: Optional[int] = None, **kw) -> TorusChart:
    if spec.dim != 1:
        raise ValueError("build_torus_1d needs a one-dimensional Hamiltonian")
    return TorusChart(spec, (build_axis_orbit(spec.potential, E, n=n, **kw),))


def build_torus_separable(spec: HamiltonianSpec, energies: Sequence[float],
                          n: Optional[int] = None, **kw) -> TorusChart:
    """Product torus with energy ``energies[k]`` on axis k (total E = sum)."""
    energies = np.atleast_1d(np.asarray(energies, dtype=float))
    if energies.size != spec.dim:
        raise ValueError(f"need {spec.dim} axis energies, got {energies.size}")
    orbits = tuple(build_axis_orbit(v, float(e), n=n, **kw) for v, e in zip(spec.axes, energies))
    return TorusChart(spec, orbits)


# --------------------------------------------------------------------------
# actions


@dataclass(frozen=True)
class ActionProfile:
    I: np.ndarray
    T: np.ndarray
    E: float


def axis_action(orbit: AxisOrbit) -> float:
    """Closed-cycle integral of p dx by the periodic trapezoid rule."""
    dx = orbit.X.derivative_samples(1)
    return float(2.0 * np.pi * np.mean(orbit.p_samples * dx))


def action_integrals(chart: TorusChart) -> ActionProfile:
    I = np.array([axis_action(o) for o in chart.orbits])
    return ActionProfile(I, chart.periods, chart.energy)


def frequencies(chart: TorusChart) -> np.ndarray:
    return 2.0 * np.pi / chart.periods


# --------------------------------------------------------------------------
# persistence


def save_chart(chart: TorusChart, directory) -> Path:
    """Write ``chart.json`` (manifest) and ``chart.npz`` (grids) into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        "dim": chart.dim,
        "form": chart.spec.form,
        "energy": chart.energy,
        "axes": [
            {
                "potential": potential_to_dict(o.potential),
                "energy": o.energy,
                "period": o.period,
                "omega": o.omega,
                "turning_points": list(o.turning),
                "closure_error": o.closure_error,
                "n": o.n,
            }
            for o in chart.orbits
        ],
    }
    (directory / "chart.json").write_text(json.dumps(manifest, indent=2))
    arrays = {}
    for k, o in enumerate(chart.orbits):
        arrays[f"x{k}"] = o.x_samples
        arrays[f"p{k}"] = o.p_samples
    np.savez(directory / "chart.npz", **arrays)
    return directory


def load_chart(directory, subprincipal=None) -> TorusChart:
    directory = Path(directory)
    manifest = json.loads((directory / "chart.json").read_text())
    arrays = np.load(directory / "chart.npz")
    orbits = []
    for k, ax in enumerate(manifest["axes"]):
        pot = potential_from_dict(ax["potential"])
        orbits.append(AxisOrbit(pot, ax["energy"], ax["period"], tuple(ax["turning_points"]),
                                arrays[f"x{k}"], arrays[f"p{k}"], ax["closure_error"]))
    spec = HamiltonianSpec(tuple(o.potential for o in orbits), subprincipal, manifest["form"])
    return TorusChart(spec, tuple(orbits))
