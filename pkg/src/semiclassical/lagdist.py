"""Oscillatory integrals, stationary phase and WKB synthesis with caustic patches.

Conventions: a phase function S(x, theta) takes arrays with trailing axes
d (for x) and l (for theta) that broadcast against each other, and returns
the broadcast leading shape. Amplitudes follow the same convention.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy.integrate import trapezoid

from .caustics import find_crossings, maslov_vector
from .errors import (AccuracyError, DegenerateSignatureError, InconsistentInputError,
                     ResolutionError)
from .oracle import Grid, GridOperator, apply_operator
from .symbols import HamiltonianSpec
from .torus import TorusChart, action_integrals, build_torus_1d
from .transport import cycle_corrections, normalization, subprincipal_periodic_part

SIGNATURE_TOL = 1e-10
DET_TOL = 1e-10
QUAD_TOL = 1e-11
QUAD_BUDGET = 2_000_000
GAUSS_LOW, GAUSS_HIGH = 16, 24
KAPPA = 3.0
# patch extent into the classically forbidden side, in Airy lengths
FORBIDDEN_REACH = 13.0
# momentum-chart window around a fold, as fractions of the angular distance
# to the nearest momentum caustic: flat part, then smooth taper to zero
WINDOW_FLAT, WINDOW_END = 0.3, 0.999
DEFECT_TOL = 1e-8


# --------------------------------------------------------------------------
# signatures and phase functions


def signature(M) -> int:
    """#positive - #negative eigenvalues of a symmetric matrix."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1] or not np.allclose(M, M.T, rtol=1e-12, atol=1e-14 * np.abs(M).max()):
        raise ValueError("signature needs a symmetric matrix")
    ev = np.linalg.eigvalsh(M)
    if np.min(np.abs(ev)) <= SIGNATURE_TOL * max(np.linalg.norm(M, 2), 1e-300):
        raise DegenerateSignatureError(f"near-singular matrix, eigenvalues {ev}")
    return int(np.sum(ev > 0) - np.sum(ev < 0))


def transition_factor(sgn_a: int, sgn_b: int) -> complex:
    """Factor carrying a stationary-phase value from representation b to a."""
    return complex(np.exp(1j * np.pi * (sgn_a - sgn_b) / 4.0))


def _fd_step(theta):
    return 1e-4 * np.maximum(1.0, np.abs(theta))


@dataclass(frozen=True, eq=False)
class PhaseFunction:
    d: int
    ell: int
    fn: Callable
    grad: Optional[Callable] = None  # d_theta S, trailing axis l
    hess: Optional[Callable] = None  # d_theta^2 S, trailing axes (l, l)
    tag: str = ""

    def __call__(self, x, theta):
        return self.fn(np.asarray(x, dtype=float), np.asarray(theta, dtype=float))

    def grad_theta(self, x, theta):
        x, theta = np.asarray(x, dtype=float), np.asarray(theta, dtype=float)
        if self.grad is not None:
            return self.grad(x, theta)
        out = []
        for j in range(self.ell):
            e = np.zeros(self.ell)
            e[j] = 1.0
            step = _fd_step(theta[..., j])[..., None] * e
            out.append((self.fn(x, theta + step) - self.fn(x, theta - step)) / (2.0 * step[..., j]))
        return np.stack(out, axis=-1)

    def hess_theta(self, x, theta):
        x, theta = np.asarray(x, dtype=float), np.asarray(theta, dtype=float)
        if self.hess is not None:
            return self.hess(x, theta)
        cols = []
        for j in range(self.ell):
            e = np.zeros(self.ell)
            e[j] = 1.0
            step = _fd_step(theta[..., j])[..., None] * e
            g1 = self.grad_theta(x, theta + step)
            g0 = self.grad_theta(x, theta - step)
            cols.append((g1 - g0) / (2.0 * step[..., j, None]))
        H = np.stack(cols, axis=-1)
        return 0.5 * (H + np.swapaxes(H, -1, -2))

    def full_derivative(self, x, theta) -> np.ndarray:
        """d_{x,theta}(d_theta S): an l x (d + l) matrix at one point."""
        x, theta = np.atleast_1d(np.asarray(x, float)), np.atleast_1d(np.asarray(theta, float))
        cols = []
        for j in range(self.d):
            e = np.zeros(self.d)
            e[j] = 1.0
            s = 1e-5 * max(1.0, abs(x[j]))
            cols.append((self.grad_theta(x + s * e, theta) - self.grad_theta(x - s * e, theta)) / (2 * s))
        H = self.hess_theta(x, theta)
        return np.column_stack(cols + [H]) if cols else np.atleast_2d(H)

    def check_nondegenerate(self, x, theta):
        """Rank of d(d_theta S) and |det| of the theta-Hessian at a critical point."""
        J = self.full_derivative(x, theta)
        rank = int(np.linalg.matrix_rank(J, tol=1e-8 * max(np.abs(J).max(), 1e-300)))
        if rank < self.ell:
            raise DegenerateSignatureError(f"d(d_theta S) has rank {rank} < {self.ell}")
        det = float(np.linalg.det(np.atleast_2d(self.hess_theta(x, theta))))
        return rank, det

    @classmethod
    def quadratic(cls, A, b=None, c: float = 0.0):
        """S(theta) = theta.A.theta / 2 + b.theta + c, no x dependence."""
        A = np.atleast_2d(np.asarray(A, dtype=float))
        ell = A.shape[0]
        b = np.zeros(ell) if b is None else np.asarray(b, dtype=float)

        def fn(x, th):
            return 0.5 * np.einsum("...i,ij,...j->...", th, A, th) + th @ b + c

        def grad(x, th):
            return th @ A.T + b

        def hess(x, th):
            return np.broadcast_to(A, th.shape[:-1] + A.shape)

        return cls(0, ell, fn, grad, hess, "quadratic")


def critical_point(S: PhaseFunction, theta0, x=None, tol: float = 1e-13, max_iter: int = 50):
    """Newton iteration for d_theta S(x, theta) = 0."""
    x = np.zeros(S.d) if x is None else np.atleast_1d(np.asarray(x, dtype=float))
    th = np.atleast_1d(np.asarray(theta0, dtype=float)).copy()
    for _ in range(max_iter):
        g = np.atleast_1d(S.grad_theta(x, th))
        step = np.linalg.solve(np.atleast_2d(S.hess_theta(x, th)), g)
        th -= step
        if np.max(np.abs(step)) <= tol * max(1.0, np.max(np.abs(th))):
            return th
    raise DegenerateSignatureError("Newton iteration for the critical point did not converge")


# --------------------------------------------------------------------------
# oscillatory integrals (l = 1)


@lru_cache(maxsize=8)
def _gauss(n):
    return np.polynomial.legendre.leggauss(n)


def smooth_cutoff(t, a: float, b: float, ramp: float):
    """C-infinity function equal to 1 on [a + ramp, b - ramp], vanishing outside [a, b]."""
    t = np.asarray(t, dtype=float)

    def step(s):
        s = np.clip(s, 0.0, 1.0)
        f0 = np.where(s > 0, np.exp(-1.0 / np.maximum(s, 1e-300)), 0.0)
        f1 = np.where(s < 1, np.exp(-1.0 / np.maximum(1.0 - s, 1e-300)), 0.0)
        return f0 / (f0 + f1)

    return step((t - a) / ramp) * step((b - t) / ramp)


def _panel_integrals(S, a, xx, h, edges, n):
    z, w = _gauss(n)
    lo, hi = edges[:-1], edges[1:]
    half = 0.5 * (hi - lo)
    nodes = (0.5 * (hi + lo))[:, None] + half[:, None] * z[None, :]
    th = nodes.reshape(1, -1, 1)
    vals = np.exp(1j * S(xx, th) / h) * a(xx, th)
    vals = np.broadcast_to(vals, (xx.shape[0], th.shape[1])).reshape(xx.shape[0], lo.size, n)
    mag = np.broadcast_to(np.abs(a(xx, th)), (xx.shape[0], th.shape[1])).reshape(xx.shape[0], lo.size, n)
    return (vals @ w) * half, (mag @ w) * half


def oscillatory_integral(S: PhaseFunction, a: Callable, h: float, domain, x=None,
                         budget: int = QUAD_BUDGET, tol: float = QUAD_TOL,
                         return_error: bool = False):
    """(2 pi h)^(-1/2) * integral over ``domain`` of exp(i S(x, theta)/h) a(x, theta) dtheta.

    ``x`` may hold a batch of points (shape (m, d)); all share one panel
    layout, chosen so each panel spans at most one local oscillation of S/h.
    Panels are split until 16- and 24-point Gauss rules agree to ``tol``
    relative to the integral of |a|.
    """
    if S.ell != 1:
        raise NotImplementedError("adaptive quadrature is implemented for one phase variable")
    if h <= 0:
        raise ValueError("h must be positive")
    lo, hi = map(float, domain)
    scalar = x is None or np.ndim(x) <= (1 if S.d else 0) and np.size(x) == S.d
    xx = np.zeros((1, 1, S.d)) if x is None else np.asarray(x, dtype=float).reshape(-1, 1, S.d)

    def osc(edges):
        # oscillations per panel from |d_theta S| sampled at 9 points
        t = np.linspace(0.0, 1.0, 9)
        pts = edges[:-1, None] + np.diff(edges)[:, None] * t[None, :]
        g = np.abs(S.grad_theta(xx, pts.reshape(1, -1, 1))[..., 0])
        g = np.broadcast_to(g, (xx.shape[0], pts.size)).max(axis=0).reshape(pts.shape)
        return g.max(axis=1) * np.diff(edges) / (2.0 * np.pi * h)

    edges = np.linspace(lo, hi, 9)
    for _ in range(40):
        k = np.ceil(osc(edges)).astype(int)
        if np.all(k <= 1):
            break
        edges = np.concatenate([np.linspace(edges[i], edges[i + 1], max(k[i], 1) + 1)[:-1]
                                for i in range(k.size)] + [[edges[-1]]])
        if edges.size * (GAUSS_LOW + GAUSS_HIGH) > budget:
            break

    while True:
        nodes = (edges.size - 1) * (GAUSS_LOW + GAUSS_HIGH)
        I_lo, _ = _panel_integrals(S, a, xx, h, edges, GAUSS_LOW)
        I_hi, mag = _panel_integrals(S, a, xx, h, edges, GAUSS_HIGH)
        err_panel = np.max(np.abs(I_hi - I_lo), axis=0)
        scale = max(float(np.max(mag.sum(axis=1))), 1e-300)
        est = float(np.max(np.sum(np.abs(I_hi - I_lo), axis=1)))
        if est <= tol * scale and nodes <= budget:
            break
        if 2 * nodes > budget:
            raise AccuracyError(
                f"quadrature budget {budget} exhausted: error estimate {est / scale:.3e}",
                estimate=est / scale, bound=tol)
        bad = err_panel > tol * scale / (edges.size - 1)
        mids = 0.5 * (edges[:-1] + edges[1:])[bad]
        edges = np.sort(np.concatenate([edges, mids]))

    pref = (2.0 * np.pi * h) ** -0.5
    value = pref * I_hi.sum(axis=1)
    if scalar:
        value = complex(value[0])
    if return_error:
        return value, pref * est
    return value


def stationary_phase_leading(S: PhaseFunction, a: Callable, h: float, theta_c, x=None,
                             grad_tol: float = 1e-8) -> complex:
    """exp(i S_c/h) |det S''|^(-1/2) exp(i pi sgn S''/4) a_c at a critical point."""
    x = np.zeros(S.d) if x is None else np.atleast_1d(np.asarray(x, dtype=float))
    th = np.atleast_1d(np.asarray(theta_c, dtype=float))
    g = np.atleast_1d(S.grad_theta(x, th))
    H = np.atleast_2d(S.hess_theta(x, th))
    if np.max(np.abs(g)) > grad_tol * max(1.0, np.abs(H).max() * np.max(np.abs(th)) + 1.0):
        raise ValueError(f"theta_c is not a critical point: |d_theta S| = {np.max(np.abs(g)):.3e}")
    sg = signature(H)
    det = abs(float(np.linalg.det(H)))
    if det <= DET_TOL:
        raise DegenerateSignatureError(f"|det S''| = {det:.3e} at the critical point")
    Sc = float(S(x, th))
    return complex(np.exp(1j * Sc / h) * det ** -0.5 * np.exp(1j * np.pi * sg / 4.0) * a(x, th))


# --------------------------------------------------------------------------
# Maslov index by the signature route


def maslov_signature_route(chart: TorusChart, delta: float = 1e-3):
    """alpha_k = sum over folds on cycle k of (sgn psi''_before - sgn psi''_after) / 2.

    psi'' = -dx/dp is the Hessian of the momentum-chart phase xp + psi(p);
    its signature jumps across each fold of the position projection.
    """
    alpha = []
    for k, o in enumerate(chart.orbits):
        total = 0
        for c in find_crossings(chart, k):
            s = []
            for phi in (c.angle - delta, c.angle + delta):
                s.append(signature([[-float(o.X(phi, 1) / o.P(phi, 1))]]))
            total += (s[0] - s[1]) // 2
        alpha.append(total)
    return tuple(alpha)


# --------------------------------------------------------------------------
# WKB synthesis in one dimension


def _action_phase(orbit):
    """Phi(phi) = integral_0^phi P X' dphi', as (callable, I)."""
    f = orbit.p_samples * orbit.X.derivative_samples(1)
    n = f.size
    F = np.fft.rfft(f) / n
    I = 2.0 * np.pi * F[0].real
    k = np.arange(F.size)
    G = np.zeros_like(F)
    G[1:] = F[1:] / (1j * k[1:])
    if n % 2 == 0:
        G[-1] = 0.0
    from .fourier import PeriodicSamples
    Q = PeriodicSamples(np.fft.irfft(G * n, n=n))
    q0 = float(Q(0.0))

    def phase(phi):
        phi = np.asarray(phi, dtype=float)
        return I * phi / (2.0 * np.pi) + Q(phi) - q0

    return phase, I


def _invert_branch(orbit, x, branch):
    """Angles in (0, pi) (branch 1) or (pi, 2 pi) (branch 2) with X(phi) = x."""
    m = 4 * orbit.n
    phis = 2.0 * np.pi * np.arange(m + 1) / m
    xs = np.append(orbit.X.upsampled(m), orbit.X.values[0])
    sel = (phis <= np.pi) if branch == 1 else (phis >= np.pi)
    ps, xv = phis[sel], xs[sel]
    if branch == 2:
        ps, xv = ps[::-1], xv[::-1]
    phi = np.interp(x, xv, ps)
    for _ in range(3):
        d1 = orbit.X(phi, 1)
        ok = np.abs(d1) > 1e-12
        phi = np.where(ok, phi - (orbit.X(phi) - x) / np.where(ok, d1, 1.0), phi)
    return phi


def _smoothstep(s):
    """C^2 ramp from 0 (s <= 0) to 1 (s >= 1)."""
    s = np.clip(s, 0.0, 1.0)
    return s ** 3 * (10.0 - 15.0 * s + 6.0 * s ** 2)


@dataclass
class Patch:
    angle: float  # fold angle on the cycle
    x_turn: float
    side: int  # -1: forbidden region lies to the left, +1 to the right
    airy_length: float
    r_match: float
    clamped: bool
    maslov_factor: complex
    window: tuple[float, float]  # flat half-width and end of the momentum window
    mismatch: float = np.nan


@dataclass
class WkbFunction:
    x: np.ndarray
    values: np.ndarray
    h: float
    E: float
    n: int
    defect: float
    branches: list = field(default_factory=list)
    patches: list = field(default_factory=list)
    turning: tuple = ()

    @property
    def norm(self) -> float:
        return float(np.sqrt(trapezoid(np.abs(self.values) ** 2, self.x)))

    def normalized(self) -> np.ndarray:
        """Values scaled to unit L2 norm with the global phase chosen to make them real."""
        u = self.values / self.norm
        rot = np.exp(-0.5j * np.angle(np.sum(u ** 2)))
        return u * rot

    def node_count(self) -> int:
        """Sign changes of the real-gauge function between the turning points.

        The forbidden-side tails carry small oscillating leakage from the
        momentum window, so zeros there are not counted.
        """
        r = self.normalized().real
        if self.turning:
            lo, hi = self.turning
            r = r[(self.x > lo) & (self.x < hi)]
        r = r[r != 0.0]
        return int(np.sum(np.sign(r[1:]) != np.sign(r[:-1])))


class _Synthesis:
    """Branch and patch representations of the Lagrangian distribution of one orbit."""

    def __init__(self, spec, chart, h, sigma_avg, G, kappa):
        self.o = chart.orbits[0]
        self.V = spec.axes[0]
        self.h = h
        self.sigma_rate = sigma_avg / self.o.omega  # phase per unit angle
        self.G = G
        self.Phi, self.I = _action_phase(self.o)
        self.C = normalization(1)
        self.kappa = kappa
        self.mom_angles = np.array([c.angle for c in find_crossings(chart, 0, momentum=True,
                                                                    strict=False)])

    def theta(self, phi):
        """Total phase Phi/h - <sigma> t - G along the cycle (continuous in phi)."""
        out = self.Phi(phi) / self.h - self.sigma_rate * np.asarray(phi)
        if self.G is not None:
            out = out - self.G(np.asarray(phi)[..., None])
        return out

    def branch(self, x, which):
        phi = _invert_branch(self.o, x, which)
        a = self.C * np.abs(self.o.X(phi, 1)) ** -0.5
        m = which  # folds met on [0, phi]
        return a * np.exp(1j * self.theta(phi) - 0.5j * np.pi * m)

    def branch_sum(self, x):
        return self.branch(x, 1) + self.branch(x, 2)

    def patch_geometry(self, angle):
        o = self.o
        x_t = float(o.X(angle))
        dv = abs(float(self.V.derivative(x_t)))
        ell = (self.h ** 2 / dv) ** (1.0 / 3.0)
        dist = np.abs((self.mom_angles - angle + np.pi) % (2.0 * np.pi) - np.pi)
        phi_p = float(dist.min()) if dist.size else np.pi / 2
        flat, end = WINDOW_FLAT * phi_p, WINDOW_END * phi_p
        room = min(abs(float(o.X(angle + flat)) - x_t), abs(float(o.X(angle - flat)) - x_t))
        r_m = KAPPA * ell if self.kappa is None else self.kappa * ell
        clamped = 2.0 * r_m > room
        if clamped:
            r_m = 0.5 * room
        m_c = int(round(angle / np.pi))  # folds strictly before this one
        # sgn psi'' = +1 just before each fold for p^2 + V
        factor = np.exp(-0.5j * np.pi * m_c - 0.25j * np.pi)
        side = -1 if float(o.X(angle + 0.5 * flat)) > x_t else 1
        return Patch(angle, x_t, side, ell, r_m, clamped, complex(factor), (flat, end))

    def patch_values(self, patch, x):
        o, h = self.o, self.h
        flat, end = patch.window
        c = patch.angle
        # Psi = Phi - X P, continuous across the fold at angle 0
        def S_fn(xx, th):
            return xx[..., 0] * o.P(th[..., 0]) + (self.Phi(th[..., 0]) - o.X(th[..., 0]) * o.P(th[..., 0]))

        def grad(xx, th):
            t = th[..., 0]
            return ((xx[..., 0] - o.X(t)) * o.P(t, 1))[..., None]

        S = PhaseFunction(1, 1, S_fn, grad, tag="momentum (angle-parametrised)")
        ramp = end - flat

        def amp(xx, th):
            t = th[..., 0]
            chi = smooth_cutoff(t, c - end, c + end, ramp)
            extra = -self.sigma_rate * t
            if self.G is not None:
                extra = extra - self.G(t[..., None])
            return self.C * np.abs(o.P(t, 1)) ** 0.5 * chi * np.exp(1j * extra)

        vals = oscillatory_integral(S, amp, h, (c - end, c + end), x=np.asarray(x)[:, None])
        return patch.maslov_factor * vals


def _cycle_sigma(spec, chart, k_max=64):
    if spec.subprincipal is None:
        return 0.0, None
    G = subprincipal_periodic_part(spec, chart, k_max)
    return G.sigma_avg, G


def wkb_eigenfunction(spec: HamiltonianSpec, chart: Optional[TorusChart], E: float, h: float,
                      x_grid, tol: float = DEFECT_TOL, kappa: float = KAPPA) -> WkbFunction:
    """Synthesize the WKB eigenfunction on ``x_grid`` from the torus at energy E.

    Beyond the match radius of each turning point the two branches
    p = +-sqrt(E - V) are summed; inside it the momentum-side representation
    is integrated numerically, and the two are blended over [r_m, 2 r_m].
    """
    if spec.dim != 1:
        raise ValueError("use wkb_separable for d > 1")
    if chart is None:
        chart = build_torus_1d(spec, E)
    elif abs(chart.energy - E) > 1e-9 * max(1.0, abs(E)):
        raise InconsistentInputError(f"chart energy {chart.energy:g} differs from E={E:g}")
    return _synthesize(spec, chart, h, x_grid, tol, kappa)


def _synthesize(spec, chart, h, x_grid, tol, kappa, sigma_override=None):
    x = np.asarray(x_grid, dtype=float)
    alpha = maslov_vector(chart).alpha[0]
    if sigma_override is None:
        sigma_avg, G = _cycle_sigma(spec, chart)
        corr = float(cycle_corrections(sigma_avg, chart.periods, 1)[0])
    else:
        sigma_avg, G = sigma_override, None
        corr = sigma_avg * float(chart.periods[0]) / (2.0 * np.pi)
    I = float(action_integrals(chart).I[0])
    raw = I / (2.0 * np.pi * h) - alpha / 4.0 - corr
    n = int(np.round(raw))
    defect = raw - n
    if abs(defect) > tol or n < 0:
        raise InconsistentInputError(
            f"(E, h) = ({chart.energy:g}, {h:g}) violates the quantization condition: defect {defect:.3e}")

    syn = _Synthesis(spec, chart, h, sigma_avg, G, kappa)
    patches = [syn.patch_geometry(c.angle) for c in find_crossings(chart, 0)]
    u = np.zeros(x.shape, dtype=complex)
    x_lo, x_hi = sorted(p.x_turn for p in patches)
    weight_branch = np.zeros(x.shape)
    inside = (x > x_lo) & (x < x_hi)
    weight_branch[inside] = 1.0
    patch_parts = []
    for p in patches:
        s = (x - p.x_turn) * (-p.side)  # distance into the allowed region
        w = _smoothstep((s - p.r_match) / p.r_match)  # 0 inside r_m, 1 beyond 2 r_m
        use = (s > -FORBIDDEN_REACH * p.airy_length) & (s < 2.0 * p.r_match)
        weight_branch = np.where(use & (s > 0), np.minimum(weight_branch, w), weight_branch)
        pv = np.zeros(x.shape, dtype=complex)
        if np.any(use):
            pv[use] = syn.patch_values(p, x[use])
        patch_parts.append((p, use, 1.0 - w, pv))
    br = np.zeros(x.shape, dtype=complex)
    if np.any(inside):
        br[inside] = syn.branch_sum(x[inside])
    u += weight_branch * br
    for p, use, wp, pv in patch_parts:
        u += np.where(use, np.where((x - p.x_turn) * (-p.side) > 0, wp, 1.0), 0.0) * pv
        ann = use & ((x - p.x_turn) * (-p.side) >= p.r_match) & inside
        if np.any(ann):
            p.mismatch = float(np.max(np.abs(pv[ann] - br[ann])) / np.max(np.abs(br[ann])))
    return WkbFunction(x, u, float(h), float(chart.energy), n, float(defect),
                       branches=[{"branch": 1, "maslov_phase": -0.5 * np.pi},
                                 {"branch": 2, "maslov_phase": -np.pi}],
                       patches=patches, turning=(x_lo, x_hi))


def patch_mismatch(spec, chart, h, samples: int = 41, kappa: float = KAPPA) -> list[float]:
    """max |patch - branch| / max |branch| over each matching annulus [r_m, 2 r_m]."""
    sigma_avg, G = _cycle_sigma(spec, chart)
    syn = _Synthesis(spec, chart, h, sigma_avg, G, kappa)
    out = []
    for c in find_crossings(chart, 0):
        p = syn.patch_geometry(c.angle)
        s = np.linspace(p.r_match, 2.0 * p.r_match, samples)
        x = p.x_turn - p.side * s
        pv = syn.patch_values(p, x)
        bv = syn.branch_sum(x)
        out.append(float(np.max(np.abs(pv - bv)) / np.max(np.abs(bv))))
    return out


def phase_consistency(chart: TorusChart, h: float, sigma_avg: float = 0.0) -> float:
    """Wrapped total phase of the branch sum around one cycle, minus 2 pi (I/2 pi h - alpha/4 - corr).

    The Maslov count uses the signature route, independent of the crossing
    count used for quantization. At quantized (E, h) the phase itself
    vanishes mod 2 pi; the returned mismatch should vanish for any (E, h).
    """
    o = chart.orbits[0]
    Phi, I = _action_phase(o)
    alpha = maslov_signature_route(chart)[0]
    total = Phi(2.0 * np.pi) / h - sigma_avg * o.period - 0.5 * np.pi * alpha
    expected = 2.0 * np.pi * (I / (2.0 * np.pi * h) - alpha / 4.0
                              - sigma_avg * o.period / (2.0 * np.pi))
    return float(abs((total - expected + np.pi) % (2.0 * np.pi) - np.pi))


def branch_phase_winding(chart: TorusChart, h: float, sigma_avg: float = 0.0) -> float:
    """Total branch-sum phase around the cycle, wrapped to (-pi, pi]."""
    o = chart.orbits[0]
    Phi, _ = _action_phase(o)
    alpha = maslov_signature_route(chart)[0]
    total = Phi(2.0 * np.pi) / h - sigma_avg * o.period - 0.5 * np.pi * alpha
    return float((total + np.pi) % (2.0 * np.pi) - np.pi)


def wkb_separable(spec: HamiltonianSpec, result, h: float, grids, tol: float = DEFECT_TOL):
    """Product of per-axis syntheses for a separable spec with constant or no sigma_H."""
    sub = spec.subprincipal
    if sub is not None and sub.kind != "constant":
        raise ValueError("separable synthesis supports constant sigma_H only")
    c = 0.0 if sub is None else float(sub.params["value"])
    factors = []
    for k, comp in enumerate(spec.components()):
        chart_k = TorusChart(comp.with_subprincipal(None), (result.chart.orbits[k],))
        factors.append(_synthesize(comp.with_subprincipal(None), chart_k, h, grids[k], tol,
                                   KAPPA, sigma_override=c / spec.dim))
    return factors


# --------------------------------------------------------------------------
# residuals and comparisons


def residual_norm(spec: HamiltonianSpec, u: WkbFunction, E: float, h: float, region=None,
                  order: int = 8, points_per_wavelength: int = 10) -> float:
    """||(-h^2 D2 + V + h sigma_H - E) u|| / ||u|| on ``region`` (default: whole grid)."""
    x = np.asarray(u.x, dtype=float)
    dx = np.diff(x)
    if not np.allclose(dx, dx[0], rtol=1e-9, atol=0.0):
        raise ResolutionError("residual needs a uniform grid", suggested_n=x.size)
    step = float(dx[0])
    pot = spec.axes[0]
    p_max = np.sqrt(max(E - float(np.min(pot.value(x))), 1e-300))
    limit = 2.0 * np.pi * h / p_max / points_per_wavelength
    if step > limit:
        suggested = int(np.ceil((x[-1] - x[0]) / limit)) + 1
        raise ResolutionError(f"grid step {step:.3g} exceeds wavelength/{points_per_wavelength}"
                              f" = {limit:.3g}; use n >= {suggested}", suggested_n=suggested)
    grid = Grid((x[0] - step, x[-1] + step), x.size)
    opr = GridOperator.assemble(pot, h, grid, order, spec.subprincipal)
    r = apply_operator(opr, u.values) - E * u.values
    mask = np.ones(x.shape, dtype=bool)
    if region is not None:
        mask = (x >= region[0]) & (x <= region[1])
    # skip stencil-closure rows next to the sample edges
    mask[: order // 2] = False
    mask[-(order // 2):] = False
    return float(np.sqrt(np.sum(np.abs(r[mask]) ** 2) / np.sum(np.abs(u.values[mask]) ** 2)))


def overlap(x_u, u, x_v, v) -> float:
    """|<u, v>| / (||u|| ||v||) after interpolating v onto the grid of u."""
    v_on = np.interp(x_u, x_v, np.real(v)) + 1j * np.interp(x_u, x_v, np.imag(v))
    num = abs(trapezoid(np.conj(u) * v_on, x_u))
    return float(num / np.sqrt(trapezoid(np.abs(u) ** 2, x_u) * trapezoid(np.abs(v_on) ** 2, x_u)))


# --------------------------------------------------------------------------
# reference integrals shared by the check suite and the convergence runs


def damped_fresnel(h: float, width: float = 0.5, tol: float = 1e-12):
    """Numeric and closed-form values of (2 pi h)^(-1/2) int exp(i t^2/2h - t^2/2w^2) dt.

    The closed form is (h/w^2 - i)^(-1/2); the Gaussian factor replaces the
    compactly supported cutoff so the quadratic phase has an exact answer.
    """
    S = PhaseFunction.quadratic([[1.0]])
    a = lambda x, th: np.exp(-0.5 * (th[..., 0] / width) ** 2)  # noqa: E731
    span = 9.0 * width
    num = oscillatory_integral(S, a, h, (-span, span), tol=tol)
    exact = complex((h / width ** 2 - 1j) ** -0.5)
    return num, exact


def quartic_test_phase() -> PhaseFunction:
    """S(theta) = theta^2/2 + theta^4/4, a non-quadratic phase with one critical point."""
    return PhaseFunction(
        0, 1,
        lambda x, th: 0.5 * th[..., 0] ** 2 + 0.25 * th[..., 0] ** 4,
        lambda x, th: (th[..., 0] + th[..., 0] ** 3)[..., None],
        lambda x, th: (1.0 + 3.0 * th[..., 0] ** 2)[..., None, None],
        "quartic-perturbed quadratic")


def stationary_phase_errors(hs, S: Optional[PhaseFunction] = None, amplitude=None,
                            domain=(-6.0, 6.0), theta_c=0.0, budget: int = QUAD_BUDGET) -> np.ndarray:
    """|numeric - leading| / |leading| for each h."""
    S = S or quartic_test_phase()
    amplitude = amplitude or (lambda x, th: np.exp(-th[..., 0] ** 2))
    errs = []
    for h in hs:
        num = oscillatory_integral(S, amplitude, h, domain, budget=budget)
        lead = stationary_phase_leading(S, amplitude, h, theta_c)
        errs.append(abs(num - lead) / abs(lead))
    return np.array(errs)


def loglog_slope(hs, values) -> float:
    """Least-squares slope of log(values) against log(h)."""
    return float(np.polyfit(np.log(np.asarray(hs, float)), np.log(np.asarray(values, float)), 1)[0])


def wkb_grid(chart: TorusChart, h: float, extent: float = 1.6, points: int = 2001) -> np.ndarray:
    """Uniform grid over ``extent`` times the well width, at least 20 points per wavelength."""
    x_lo, x_hi = chart.orbits[0].turning
    mid, half = 0.5 * (x_lo + x_hi), 0.5 * (x_hi - x_lo) * extent
    p_max = np.sqrt(max(chart.energy - chart.orbits[0].potential.v_min, 1e-300))
    needed = int(np.ceil(2.0 * half / (2.0 * np.pi * h / p_max / 20.0))) + 1
    return np.linspace(mid - half, mid + half, max(points, needed))


def fixed_energy_residuals(spec: HamiltonianSpec, E: float, h_targets, inner: float = 0.7,
                           extent: float = 1.6, points: int = 2001):
    """Residual norms on the branch region at one fixed energy as h decreases.

    Each target h is moved to the nearest h_n = I(E) / (2 pi (n + 1/2 + corr))
    so that (E, h_n) is quantized and the torus stays the same. The region
    is the middle ``inner`` fraction of the well, away from the turning
    point patches. Returns (h values, quantum numbers, residuals).
    """
    chart = build_torus_1d(spec, E)
    acts = action_integrals(chart)
    I, T = float(acts.I[0]), float(acts.T[0])
    sigma_avg, _ = _cycle_sigma(spec, chart)
    corr = float(cycle_corrections(sigma_avg, [T], 1)[0])
    x_lo, x_hi = chart.orbits[0].turning
    mid, half = 0.5 * (x_lo + x_hi), 0.5 * (x_hi - x_lo) * inner
    hs, ns, res = [], [], []
    for h in h_targets:
        n = max(0, int(round(I / (2.0 * np.pi * h) - 0.5 - corr)))
        h_n = I / (2.0 * np.pi * (n + 0.5 + corr))
        u = wkb_eigenfunction(spec, chart, E, h_n, wkb_grid(chart, h_n, extent, points))
        hs.append(h_n)
        ns.append(n)
        res.append(residual_norm(spec, u, E, h_n, region=(mid - half, mid + half)))
    return np.array(hs), ns, np.array(res)
