"""Leading transport amplitudes on torus charts and the subprincipal phase.

Amplitudes are normalised to unit invariant mass,
    integral over T^d of |A0|^2 |det(d xi/d phi)| dphi = 1,
so A0 = (2*pi)^(-d/2) |det(d xi/d phi)|^(-1/2) with xi = x (position chart)
or xi = p (momentum chart).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import quad

from .caustics import find_crossings
from .errors import CausticProximityError, ResonanceError
from .fourier import angle_grid
from .symbols import HamiltonianSpec, eval_subprincipal
from .torus import TorusChart, integrate_flow

# fraction of a cycle excluded around each caustic crossing
CAUSTIC_MARGIN = 0.05
DIVISOR_FLOOR = 1e-6
K_MAX = 64


def normalization(dim: int) -> float:
    return (2.0 * np.pi) ** (-dim / 2.0)


@lru_cache(maxsize=128)
def _crossing_angles(chart: TorusChart, momentum: bool):
    return tuple(np.array([c.angle for c in find_crossings(chart, k, momentum=momentum, strict=not momentum)])
                 for k in range(chart.dim))


def caustic_distance(chart: TorusChart, phi, momentum: bool = False) -> np.ndarray:
    """Smallest angular distance (per point, over all axes) to a crossing, in cycles."""
    phi = chart._phi(phi)
    dist = np.full(phi.shape[:-1], np.inf)
    for k, angles in enumerate(_crossing_angles(chart, momentum)):
        if angles.size == 0:
            continue
        diff = (phi[..., k, None] - angles + np.pi) % (2.0 * np.pi) - np.pi
        dist = np.minimum(dist, np.min(np.abs(diff), axis=-1) / (2.0 * np.pi))
    return dist


def _amplitude(chart, phi, momentum, margin):
    phi = chart._phi(phi)
    dist = caustic_distance(chart, phi, momentum)
    if np.any(dist < margin):
        side = "momentum" if momentum else "position"
        raise CausticProximityError(
            f"angle within {margin:.3g} cycles of a {side} caustic; switch charts")
    deriv = chart.P(phi, 1) if momentum else chart.X(phi, 1)
    det = np.prod(deriv, axis=-1)
    out = normalization(chart.dim) * np.abs(det) ** -0.5
    return out if out.ndim else float(out)


def amplitude_position(chart: TorusChart, phi, margin: float = CAUSTIC_MARGIN):
    """a0 = C |det dX/dphi|^(-1/2) away from position caustics."""
    return _amplitude(chart, phi, False, margin)


def amplitude_momentum(chart: TorusChart, phi, margin: float = CAUSTIC_MARGIN):
    """b0 = C |det dP/dphi|^(-1/2) away from momentum caustics."""
    return _amplitude(chart, phi, True, margin)


@dataclass
class AmplitudeField:
    chart: TorusChart
    kind: str  # "position" or "momentum"
    phi: np.ndarray  # (..., d) grid angles
    values: np.ndarray  # complex; NaN inside caustic margins
    G: "PeriodicPart | None" = None
    sigma_avg: float = 0.0

    def density(self) -> np.ndarray:
        """|A0|^2 |det(d xi/d phi)|, constant on caustic-free nodes."""
        deriv = self.chart.P(self.phi, 1) if self.kind == "momentum" else self.chart.X(self.phi, 1)
        return np.abs(self.values) ** 2 * np.abs(np.prod(deriv, axis=-1))


def amplitude_field(chart: TorusChart, kind: str = "position", spec=None,
                    margin: float = CAUSTIC_MARGIN, k_max: int = K_MAX) -> AmplitudeField:
    """Sample the chart amplitude on the torus grid, times exp(-i G) if ``spec`` has sigma_H."""
    momentum = kind == "momentum"
    if kind not in ("position", "momentum"):
        raise ValueError("kind must be 'position' or 'momentum'")
    phi = chart.mesh() if chart.dim > 1 else angle_grid(chart.orbits[0].n)[:, None]
    dist = caustic_distance(chart, phi, momentum)
    ok = dist >= margin
    values = np.full(phi.shape[:-1], np.nan, dtype=complex)
    values[ok] = _amplitude(chart, phi[ok], momentum, 0.0)
    G, avg = None, 0.0
    if spec is not None and spec.subprincipal is not None:
        G = subprincipal_periodic_part(spec, chart, k_max)
        avg = G.sigma_avg
        values = values * np.exp(-1j * G(phi))
    return AmplitudeField(chart, kind, phi, values, G, avg)


# --------------------------------------------------------------------------
# explicit transport residuals (1-d)


def _caustic_free_nodes(chart, momentum, margin):
    o = chart.orbits[0]
    phi = o.grid()
    keep = caustic_distance(chart, phi, False) >= margin
    if momentum:
        keep &= caustic_distance(chart, phi, True) >= margin
    return phi[keep]


def position_transport_residual(chart: TorusChart, margin: float = CAUSTIC_MARGIN) -> float:
    """Relative residual of p da0/dx + (1/2) (dp/dx) a0 = 0 on caustic-free nodes."""
    if chart.dim != 1:
        raise ValueError("explicit transport residual is implemented for d = 1")
    o = chart.orbits[0]
    phi = _caustic_free_nodes(chart, False, margin)
    x1, x2 = o.X(phi, 1), o.X(phi, 2)
    p, p1 = o.P(phi), o.P(phi, 1)
    a = normalization(1) * np.abs(x1) ** -0.5
    da_dphi = -0.5 * a * x2 / x1
    da_dx = da_dphi / x1
    dp_dx = p1 / x1
    # scale by the largest term: both vanish together where dp/dx = 0
    scale = np.max(np.abs(p * da_dx)) + np.max(np.abs(0.5 * dp_dx * a))
    return float(np.max(np.abs(p * da_dx + 0.5 * dp_dx * a)) / scale)


def momentum_transport_residual(spec: HamiltonianSpec, chart: TorusChart,
                                margin: float = CAUSTIC_MARGIN) -> float:
    """Relative residual of V'(x) db0/dp - (1/2) psi''(p) V''(x) b0 = 0 with x = -psi'(p).

    psi'' = -dx/dp is read off the chart, and V', V'' come from the potential.
    """
    if chart.dim != 1:
        raise ValueError("explicit transport residual is implemented for d = 1")
    o = chart.orbits[0]
    V = spec.axes[0]
    phi = _caustic_free_nodes(chart, True, margin)
    x, x1 = o.X(phi), o.X(phi, 1)
    p1, p2 = o.P(phi, 1), o.P(phi, 2)
    b = normalization(1) * np.abs(p1) ** -0.5
    db_dp = (-0.5 * b * p2 / p1) / p1
    psi2 = -x1 / p1
    t1 = V.derivative(x) * db_dp
    t2 = -0.5 * psi2 * V.second_derivative(x) * b
    return float(np.max(np.abs(t1 + t2)) / (np.max(np.abs(t1)) + np.max(np.abs(t2))))


def lie_derivative_residual(chart: TorusChart, margin: float = CAUSTIC_MARGIN) -> float:
    """max |d/dt (a0^2 xdot)| / max |a0^2 xdot| over caustic-free nodes (1-d)."""
    o = chart.orbits[0]
    phi = _caustic_free_nodes(chart, False, margin)
    omega = o.omega
    x1, x2 = o.X(phi, 1), o.X(phi, 2)
    a2 = normalization(1) ** 2 / np.abs(x1)
    xdot = omega * x1
    # d/dt = omega d/dphi ; d(a2 * xdot)/dphi by the product rule
    da2 = -a2 * x2 / x1
    deriv = omega * (da2 * xdot + a2 * omega * x2)
    return float(np.max(np.abs(deriv)) / np.max(np.abs(a2 * xdot)))


# --------------------------------------------------------------------------
# subprincipal symbol


def _sigma_on_mesh(spec, chart):
    return eval_subprincipal(spec, *chart.mesh_samples())


def subprincipal_average(spec: HamiltonianSpec, chart: TorusChart, method: str = "space") -> float:
    """Torus average of sigma_H; ``method='time'`` integrates along the flow (d = 1)."""
    if spec.subprincipal is None:
        return 0.0
    if method == "space":
        return float(np.mean(_sigma_on_mesh(spec, chart)))
    if method != "time":
        raise ValueError("method must be 'space' or 'time'")
    if chart.dim != 1:
        raise ValueError("time averaging is implemented for d = 1")
    o = chart.orbits[0]
    traj = integrate_flow(spec, (0.0, o.turning[0]), (0.0, o.period), tol=1e-11)
    sol = traj.sol.sol

    def sigma_t(t):
        y = sol(t)
        return float(eval_subprincipal(spec, y[0], y[1]))

    # split at the turning-point half period to keep quad's panels smooth
    half = o.period / 2.0
    total = sum(quad(sigma_t, a, b, epsabs=1e-13, epsrel=1e-13, limit=400)[0]
                for a, b in ((0.0, half), (half, o.period)))
    return total / o.period


@dataclass
class PeriodicPart:
    """G(phi) = sum_k G_k exp(i k.phi) with <G> = 0, and the average <sigma_H>."""

    modes: np.ndarray  # (m, d) integer wave vectors
    coeffs: np.ndarray  # (m,) complex
    omega: np.ndarray
    sigma_avg: float

    def __call__(self, phi) -> np.ndarray:
        phi = np.asarray(phi, dtype=float)
        if phi.ndim == 0 or phi.shape[-1] != self.omega.size:
            phi = phi[..., None]
        phase = np.tensordot(phi, self.modes.T, axes=([-1], [0]))
        return (np.exp(1j * phase) @ self.coeffs).real

    def shifted(self, delta) -> "PeriodicPart":
        """G(phi + delta) expressed in the shifted angle."""
        delta = np.broadcast_to(np.asarray(delta, dtype=float), self.omega.shape)
        return PeriodicPart(self.modes, self.coeffs * np.exp(1j * self.modes @ delta),
                            self.omega, self.sigma_avg)

    def coefficient(self, k) -> complex:
        k = np.atleast_1d(k)
        hit = np.flatnonzero(np.all(self.modes == k, axis=1))
        return complex(self.coeffs[hit[0]]) if hit.size else 0j


def solve_cohomological(sigma_values: np.ndarray, omega, k_max: int = K_MAX,
                        divisor_floor: float = DIVISOR_FLOOR) -> PeriodicPart:
    """Solve omega . grad G = sigma - <sigma> on a uniform torus grid by Fourier division."""
    sigma_values = np.asarray(sigma_values, dtype=float)
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    d = omega.size
    if sigma_values.ndim != d:
        raise ValueError("sample array rank must equal the number of frequencies")
    shape = sigma_values.shape
    spec = np.fft.fftn(sigma_values) / sigma_values.size
    floor = divisor_floor * np.linalg.norm(omega)
    limits = [min(k_max, (n - 1) // 2) for n in shape]
    ranges = [np.arange(-L, L + 1) for L in limits]
    modes = np.stack(np.meshgrid(*ranges, indexing="ij"), axis=-1).reshape(-1, d)
    modes = modes[np.any(modes != 0, axis=1)]
    divisors = modes @ omega
    bad = np.flatnonzero(np.abs(divisors) <= floor)
    if bad.size:
        k = tuple(int(v) for v in modes[bad[0]])
        raise ResonanceError(
            f"small divisor |k.omega| = {abs(divisors[bad[0]]):.3g} <= {floor:.3g} at k={k}",
            k=k, divisor=float(divisors[bad[0]]))
    idx = tuple((modes[:, j] % shape[j]) for j in range(d))
    sig_k = spec[idx]
    coeffs = sig_k / (1j * divisors)
    return PeriodicPart(modes, coeffs, omega, float(spec.flat[0].real))


def subprincipal_periodic_part(spec: HamiltonianSpec, chart: TorusChart, k_max: int = K_MAX,
                               divisor_floor: float = DIVISOR_FLOOR) -> PeriodicPart:
    """G with d/dt G(omega t + phi) = sigma_H(orbit) - <sigma_H>, <G> = 0."""
    if spec.subprincipal is None:
        return PeriodicPart(np.zeros((0, chart.dim), dtype=int), np.zeros(0, dtype=complex),
                            chart.omega, 0.0)
    return solve_cohomological(_sigma_on_mesh(spec, chart), chart.omega, k_max, divisor_floor)


def subprincipal_phase_residual(spec: HamiltonianSpec, chart: TorusChart, G: PeriodicPart,
                                phi0=None, samples: int = 257) -> float:
    """max over one period of |d/dt G(omega t + phi0) + <sigma> - sigma(orbit(t))|."""
    phi0 = np.zeros(chart.dim) if phi0 is None else np.atleast_1d(phi0)
    T = float(np.max(chart.periods))
    t = np.linspace(0.0, T, samples)
    phi = phi0 + np.outer(t, chart.omega)
    # dG/dt = sum_k i (k.omega) G_k e^{i k.phi}
    phase = phi @ G.modes.T
    dG = (np.exp(1j * phase) @ (1j * (G.modes @ G.omega) * G.coeffs)).real
    sigma = eval_subprincipal(spec, chart.P(phi), chart.X(phi))
    return float(np.max(np.abs(dG + G.sigma_avg - sigma)))


def cycle_corrections(sigma_avg: float, periods, dim=None) -> np.ndarray:
    """Per-cycle shift of the quantization condition from exp(-i <sigma_H> t).

    Traversing basis cycle k takes flow time T_k; the weights 1/d make the
    corrections sum (against the frequencies) to one unit of flow time.
    """
    periods = np.atleast_1d(np.asarray(periods, dtype=float))
    d = periods.size if dim is None else dim
    return sigma_avg * periods / (2.0 * np.pi * d)
