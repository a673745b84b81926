"""Caustic detection on torus charts and Maslov indices of basis cycles."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import DegenerateCausticError

ROOT_TOL = 1e-10
# |d/dphi det| at a zero, relative to its maximum along the cycle, below which
# the zero is treated as a double (non-fold) zero
FOLD_TOL = 1e-6
LEVEL_TOL = 1e-9


@dataclass(frozen=True)
class CausticCrossing:
    cycle: int
    angle: float
    sign: int  # sign of d/dphi det(dX/dphi) through the zero
    rank: int  # rank of d pi_x on the caustic


@dataclass(frozen=True)
class MaslovVector:
    alpha: tuple[int, ...]
    crossings: tuple[CausticCrossing, ...] = field(default=())

    def as_dict(self):
        return {
            "alpha": list(self.alpha),
            "crossings": [
                {"cycle": c.cycle, "angle": c.angle, "sign": c.sign, "rank": c.rank}
                for c in self.crossings
            ],
        }


def check_energy_level(potential, E, xs=None, g=None):
    """Reject energies equal to a non-minimal critical value of V.

    At such a level a turning point has V' = 0 and the fold degenerates
    (separatrix / crease); the torus construction does not apply.
    """
    if xs is None:
        lo, hi = potential.domain
        xs = np.linspace(lo, hi, 20001)
    if g is None:
        g = potential.value(xs) - E
    dv = potential.derivative(xs)
    # sign changes of V' bracket the interior critical points
    idx = np.flatnonzero(np.sign(dv[1:]) != np.sign(dv[:-1]))
    scale = LEVEL_TOL * max(1.0, abs(E))
    for i in idx:
        a, b = xs[i], xs[i + 1]
        if dv[i] == 0.0:
            xc = a
        elif dv[i + 1] == 0.0:
            xc = b
        else:
            xc = brentq(lambda x: float(potential.derivative(x)), a, b, xtol=1e-14)
        if float(potential.second_derivative(xc)) > 0 and abs(xc - potential.x_min) < 1e-6 * potential.width:
            continue
        if abs(float(potential.value(xc)) - E) <= scale and float(potential.second_derivative(xc)) <= 0:
            raise DegenerateCausticError(
                f"energy {E:g} equals the critical value V({xc:.6g}) with V'=0: "
                "the turning point is not a simple fold")


def jacobian_det(chart, phi):
    """det(dX/dphi) at angle(s) ``phi`` (trailing axis d for d > 1)."""
    return np.prod(chart.X(phi, 1), axis=-1)


def jacobian_det_momentum(chart, phi):
    """det(dP/dphi); its zeros are the momentum-side caustics."""
    return np.prod(chart.P(phi, 1), axis=-1)


def _reference_angles(chart):
    """Angles for the non-cycle axes where their X' is extremal (far from folds)."""
    ref = []
    for o in chart.orbits:
        d1 = o.X.derivative_samples(1)
        ref.append(float(o.grid()[int(np.argmax(np.abs(d1)))]))
    return np.array(ref)


def _simple_zeros(S, n_samples, cycle, sign_scale, momentum=False, strict=True):
    phi = 2.0 * np.pi * np.arange(n_samples) / n_samples
    vals = S.upsampled(n_samples, 1)
    vmax = float(np.max(np.abs(vals)))
    slope_max = float(np.max(np.abs(S.upsampled(n_samples, 2))))
    f = lambda t: S(t, 1)  # noqa: E731
    f1 = lambda t: S(t, 2)  # noqa: E731
    nxt = np.roll(vals, -1)
    crossings = []
    for i in np.flatnonzero(np.sign(vals) != np.sign(nxt)):
        a, b = phi[i], phi[i] + 2.0 * np.pi / n_samples
        if vals[i] == 0.0:
            root = a
        else:
            root = brentq(lambda t: float(f(t)), a, b, xtol=ROOT_TOL * 1e-2, rtol=1e-15)
        slope = float(f1(root))
        if strict and abs(slope) < FOLD_TOL * slope_max:
            raise DegenerateCausticError(
                f"non-simple zero of the {'momentum ' if momentum else ''}projection Jacobian "
                f"on cycle {cycle} at angle {root:.6g}")
        crossings.append(CausticCrossing(cycle, float(root % (2.0 * np.pi)),
                                         int(np.sign(slope) * sign_scale), 0))
    # a touching zero (no sign change) shows up as a tiny local minimum of |f|
    mag = np.abs(vals)
    local_min = (mag <= np.roll(mag, 1)) & (mag <= np.roll(mag, -1))
    for i in np.flatnonzero(local_min & (mag < FOLD_TOL * vmax) if strict else []):
        if not any(abs((c.angle - phi[i] + np.pi) % (2 * np.pi) - np.pi) < 4 * np.pi / n_samples
                   for c in crossings):
            raise DegenerateCausticError(
                f"projection Jacobian touches zero without changing sign on cycle {cycle} "
                f"near angle {phi[i]:.6g}")
    return sorted(crossings, key=lambda c: c.angle)


def find_crossings(chart, k: int, momentum: bool = False, strict: bool = True):
    """Simple zeros of det(dX/dphi) along basis cycle k.

    Cycle k varies phi_k over [0, 2*pi) with the other angles held at points
    where their own projection is regular. With ``strict=False`` degenerate
    sign-changing zeros are reported instead of raising (used to locate
    regions to avoid, not to count Maslov contributions).
    """
    if not 0 <= k < chart.dim:
        raise IndexError(f"cycle {k} out of range for a {chart.dim}-torus")
    o = chart.orbits[k]
    S = o.P if momentum else o.X
    ref = _reference_angles(chart)
    others = 1.0
    for j, oj in enumerate(chart.orbits):
        if j != k:
            others *= float((oj.P if momentum else oj.X)(ref[j], 1))
    out = _simple_zeros(S, 4 * o.n, k, np.sign(others) or 1.0, momentum, strict)
    rank = chart.dim - 1
    return [CausticCrossing(c.cycle, c.angle, c.sign, rank) for c in out]


def maslov_index(chart, k: int) -> int:
    """Each simple fold met along cycle k contributes +1."""
    return len(find_crossings(chart, k))


def maslov_vector(chart) -> MaslovVector:
    crossings = []
    alpha = []
    for k in range(chart.dim):
        ck = find_crossings(chart, k)
        crossings.extend(ck)
        alpha.append(len(ck))
    return MaslovVector(tuple(alpha), tuple(crossings))
