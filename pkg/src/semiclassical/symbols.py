"""Hamiltonian symbols H0(p, x) = |p|^2 + V(x) and optional subprincipal parts.

Potentials are one-dimensional; a d-dimensional Hamiltonian is either the
plain Schrodinger form (d = 1) or a separable sum of one-dimensional axes.
All evaluators are vectorised and pure.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.polynomial import Polynomial
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize_scalar

from .errors import DomainError

EPS_CBRT = np.finfo(float).eps ** (1.0 / 3.0)

KINDS = ("polynomial", "morse", "harmonic", "tabulated")
FORMS = ("schrodinger", "separable-sum")


@dataclass(frozen=True, eq=False)
class PotentialSpec:
    """A one-dimensional potential V(x) on a closed interval.

    Use the ``polynomial``, ``morse``, ``harmonic``, ``tabulated`` or
    ``from_csv`` constructors rather than calling this directly.
    """

    kind: str
    params: dict
    domain: tuple[float, float]
    _v: Callable = field(repr=False)
    _dv: Callable = field(repr=False)
    _d2v: Callable = field(repr=False)
    x_min: float = 0.0
    v_min: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown potential kind {self.kind!r}")
        lo, hi = self.domain
        if not hi > lo:
            raise ValueError(f"empty domain {self.domain}")
        x_min, v_min = _locate_minimum(self._v, lo, hi)
        object.__setattr__(self, "x_min", x_min)
        object.__setattr__(self, "v_min", v_min)

    # constructors ---------------------------------------------------------
    @classmethod
    def polynomial(cls, coefficients: Sequence[float], domain=(-10.0, 10.0)):
        """V(x) = sum_k c_k x^k (ascending coefficients)."""
        coefficients = [float(c) for c in coefficients]
        if not coefficients:
            raise ValueError("polynomial coefficient list must be non-empty")
        poly = Polynomial(coefficients)
        d1, d2 = poly.deriv(1), poly.deriv(2)
        return cls("polynomial", {"coefficients": coefficients}, _interval(domain),
                   poly, d1, d2)

    @classmethod
    def morse(cls, depth: float, width: float, offset: float = 0.0, domain=None):
        """V(x) = D (1 - exp(-a (x - x0)))^2."""
        D, a, x0 = float(depth), float(width), float(offset)
        if D <= 0 or a <= 0:
            raise ValueError("Morse depth and width must be positive")
        if domain is None:
            domain = (x0 - 2.0 / a, x0 + 40.0 / a)

        def v(x):
            return D * (1.0 - np.exp(-a * (np.asarray(x) - x0))) ** 2

        def dv(x):
            e = np.exp(-a * (np.asarray(x) - x0))
            return 2.0 * D * a * e * (1.0 - e)

        def d2v(x):
            e = np.exp(-a * (np.asarray(x) - x0))
            return 2.0 * D * a * a * e * (2.0 * e - 1.0)

        return cls("morse", {"depth": D, "width": a, "offset": x0},
                   _interval(domain), v, dv, d2v)

    @classmethod
    def harmonic(cls, omega: float = 1.0, domain=(-10.0, 10.0)):
        """V(x) = omega^2 x^2, so H0 = p^2 + omega^2 x^2 has flow frequency 2 omega."""
        w2 = float(omega) ** 2
        if w2 <= 0:
            raise ValueError("harmonic frequency must be non-zero")
        return cls("harmonic", {"omega": float(omega)}, _interval(domain),
                   lambda x: w2 * np.asarray(x) ** 2,
                   lambda x: 2.0 * w2 * np.asarray(x),
                   lambda x: 2.0 * w2 * np.ones_like(np.asarray(x, dtype=float)))

    @classmethod
    def tabulated(cls, x: Sequence[float], v: Sequence[float], domain=None):
        """Cubic-spline interpolant of sampled values."""
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        if x.ndim != 1 or x.shape != v.shape or x.size < 4:
            raise ValueError("tabulated potential needs matching 1-d arrays of >= 4 samples")
        if np.any(np.diff(x) <= 0):
            raise ValueError("tabulated grid must be strictly increasing")
        spline = CubicSpline(x, v)
        if domain is None:
            domain = (x[0], x[-1])
        if domain[0] < x[0] or domain[1] > x[-1]:
            raise ValueError("domain exceeds tabulated range")
        return cls("tabulated", {"x": x.tolist(), "v": v.tolist()}, _interval(domain),
                   spline, spline.derivative(1), spline.derivative(2))

    @classmethod
    def from_csv(cls, path, domain=None):
        """Load a two-column (x, V) CSV; a non-numeric header row is skipped."""
        xs, vs = [], []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].lstrip().startswith("#"):
                    continue
                try:
                    xs.append(float(row[0]))
                    vs.append(float(row[1]))
                except ValueError:
                    if xs:
                        raise
        return cls.tabulated(xs, vs, domain=domain)

    # evaluation -------------------------------------------------------------
    @property
    def width(self) -> float:
        return self.domain[1] - self.domain[0]

    def check_domain(self, x):
        x = np.asarray(x, dtype=float)
        lo, hi = self.domain
        if np.any(x < lo) or np.any(x > hi) or np.any(~np.isfinite(x)):
            bad = x[(x < lo) | (x > hi) | ~np.isfinite(x)]
            raise DomainError(f"x={bad.ravel()[0]!r} outside domain [{lo}, {hi}]")
        return x

    def value(self, x):
        return self._v(self.check_domain(x))

    def derivative(self, x):
        return self._dv(self.check_domain(x))

    def second_derivative(self, x):
        return self._d2v(self.check_domain(x))

    def __call__(self, x):
        return self.value(x)

    def fingerprint(self) -> str:
        """Stable hash of kind, parameters and domain (used as a cache key)."""
        blob = json.dumps({"kind": self.kind, "params": self.params,
                           "domain": list(self.domain)}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _interval(domain) -> tuple[float, float]:
    lo, hi = domain
    return float(lo), float(hi)


def _locate_minimum(v, lo, hi, samples=4001):
    xs = np.linspace(lo, hi, samples)
    vals = np.asarray(v(xs), dtype=float)
    i = int(np.argmin(vals))
    if i == 0 or i == samples - 1:
        raise ValueError(
            f"potential has no interior minimum on [{lo}, {hi}] (declared domain must contain a well)")
    res = minimize_scalar(lambda x: float(v(x)), bracket=(xs[i - 1], xs[i], xs[i + 1]),
                          method="brent", options={"xtol": 1e-12})
    x_min = float(res.x) if lo < res.x < hi and res.fun <= vals[i] else float(xs[i])
    return x_min, float(v(x_min))


@dataclass(frozen=True, eq=False)
class Subprincipal:
    """Order-h symbol sigma_H(p, x).

    ``multiplication`` marks symbols that depend on x only; those are the ones
    the grid oracle can represent.
    """

    kind: str
    params: dict
    fn: Callable = field(repr=False)
    multiplication: bool = True

    @classmethod
    def constant(cls, c: float):
        c = float(c)
        return cls("constant", {"value": c},
                   lambda p, x: np.full(np.shape(np.asarray(x, dtype=float))[:-1], c))

    @classmethod
    def cosine(cls, amplitude: float = 1.0, wavenumber: float = 1.0, phase: float = 0.0,
               axis: int = 0):
        """amplitude * cos(wavenumber * x[axis] + phase)."""
        A, k, ph = float(amplitude), float(wavenumber), float(phase)
        return cls("cosine", {"amplitude": A, "wavenumber": k, "phase": ph, "axis": axis},
                   lambda p, x: A * np.cos(k * np.asarray(x)[..., axis] + ph))

    @classmethod
    def polynomial(cls, coefficients: Sequence[float], axis: int = 0):
        poly = Polynomial([float(c) for c in coefficients])
        return cls("polynomial", {"coefficients": list(poly.coef), "axis": axis},
                   lambda p, x: poly(np.asarray(x)[..., axis]))

    @classmethod
    def from_callable(cls, fn, multiplication: bool = False):
        """Wrap ``fn(p, x)`` taking arrays with trailing axis d."""
        return cls("callable", {}, fn, multiplication)

    def __call__(self, p, x):
        return np.asarray(self.fn(p, x), dtype=float)


@dataclass(frozen=True, eq=False)
class HamiltonianSpec:
    """H(p, x, h) = sum_k p_k^2 + V_k(x_k) + h sigma_H(p, x)."""

    axes: tuple[PotentialSpec, ...]
    subprincipal: Optional[Subprincipal] = None
    form: str = "schrodinger"

    def __post_init__(self):
        axes = tuple(self.axes)
        object.__setattr__(self, "axes", axes)
        if not axes:
            raise ValueError("at least one axis is required")
        if self.form not in FORMS:
            raise ValueError(f"unknown form {self.form!r}")
        if self.form == "schrodinger" and len(axes) != 1:
            raise ValueError("schrodinger form takes a single 1-d potential; "
                             "use separable-sum for d > 1")

    @classmethod
    def one_dim(cls, potential: PotentialSpec, subprincipal=None):
        return cls((potential,), subprincipal, "schrodinger")

    @classmethod
    def separable(cls, potentials: Sequence[PotentialSpec], subprincipal=None):
        return cls(tuple(potentials), subprincipal, "separable-sum")

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def potential(self) -> PotentialSpec:
        if self.dim != 1:
            raise AttributeError("multi-axis Hamiltonian has no single potential")
        return self.axes[0]

    def components(self) -> list["HamiltonianSpec"]:
        """One-dimensional factors (without subprincipal part)."""
        return [HamiltonianSpec.one_dim(v) for v in self.axes]

    def with_subprincipal(self, subprincipal):
        return HamiltonianSpec(self.axes, subprincipal, self.form)


def _points(spec: HamiltonianSpec, p, x):
    """Normalise to arrays with a trailing axis of length d."""
    p = np.asarray(p, dtype=float)
    x = np.asarray(x, dtype=float)
    if spec.dim == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        p, x = p[..., None], x[..., None]
    if p.shape[-1] != spec.dim or x.shape[-1] != spec.dim:
        raise ValueError(f"points must have trailing dimension {spec.dim}")
    return p, x


def _unpoint(spec, arr, like):
    like = np.asarray(like)
    if spec.dim == 1 and (like.ndim == 0 or like.shape[-1] != 1):
        return arr[..., 0]
    return arr


def axis_energies(spec: HamiltonianSpec, p, x):
    """Per-axis energies p_k^2 + V_k(x_k); trailing axis d."""
    p, x = _points(spec, p, x)
    out = np.empty(np.broadcast_shapes(p.shape, x.shape))
    for k, v in enumerate(spec.axes):
        out[..., k] = p[..., k] ** 2 + v.value(x[..., k])
    return out


def eval_h0(spec: HamiltonianSpec, p, x):
    """Principal symbol |p|^2 + V(x); sums per-axis energies for separable specs."""
    e = axis_energies(spec, p, x)
    total = e[..., 0]
    for k in range(1, spec.dim):
        total = total + e[..., k]
    return total


def eval_gradients(spec: HamiltonianSpec, p, x):
    """(dH0/dp, dH0/dx), shaped like the inputs."""
    p_, x_ = _points(spec, p, x)
    dx = np.empty(np.broadcast_shapes(p_.shape, x_.shape))
    for k, v in enumerate(spec.axes):
        dx[..., k] = v.derivative(x_[..., k])
    dp = np.broadcast_to(2.0 * p_, dx.shape).copy()
    return _unpoint(spec, dp, x), _unpoint(spec, dx, x)


def eval_subprincipal(spec: HamiltonianSpec, p, x):
    """sigma_H(p, x); identically zero when the spec carries none."""
    p_, x_ = _points(spec, p, x)
    shape = np.broadcast_shapes(p_.shape, x_.shape)[:-1]
    if spec.subprincipal is None:
        return np.zeros(shape) if shape else 0.0
    val = np.broadcast_to(spec.subprincipal(p_, x_), shape)
    return val.copy() if shape else float(val)


def fd_derivative(f, x, width, order: int = 1):
    """Centered finite difference with step width * eps^(1/3).

    Raises DomainError via ``f`` when a stencil point leaves the domain.
    """
    x = np.asarray(x, dtype=float)
    step = width * EPS_CBRT
    if order == 1:
        return (f(x + step) - f(x - step)) / (2.0 * step)
    if order == 2:
        step = width * np.finfo(float).eps ** 0.25
        return (f(x + step) - 2.0 * f(x) + f(x - step)) / step ** 2
    raise ValueError("order must be 1 or 2")


def fd_gradients(spec: HamiltonianSpec, p, x):
    """Finite-difference counterpart of ``eval_gradients``."""
    p_, x_ = _points(spec, p, x)
    dx = np.empty(np.broadcast_shapes(p_.shape, x_.shape))
    for k, v in enumerate(spec.axes):
        dx[..., k] = fd_derivative(v.value, x_[..., k], v.width)
    dp = np.empty_like(dx)
    for k in range(spec.dim):
        dp[..., k] = fd_derivative(lambda q: q ** 2, p_[..., k], max(1.0, abs(float(np.max(np.abs(p_[..., k]))))))
    return _unpoint(spec, dp, x), _unpoint(spec, dx, x)


def potential_to_dict(v: PotentialSpec) -> dict:
    return {"kind": v.kind, "domain": list(v.domain), **v.params}


def potential_from_dict(d: dict) -> PotentialSpec:
    """Inverse of ``potential_to_dict``; also the config-file potential schema."""
    d = dict(d)
    kind = d.pop("kind", None)
    domain = d.pop("domain", None)
    extra = {} if domain is None else {"domain": tuple(domain)}
    try:
        if kind == "polynomial":
            out = PotentialSpec.polynomial(d.pop("coefficients"), **extra)
        elif kind == "morse":
            out = PotentialSpec.morse(d.pop("depth"), d.pop("width"), d.pop("offset", 0.0), **extra)
        elif kind == "harmonic":
            out = PotentialSpec.harmonic(d.pop("omega", 1.0), **extra)
        elif kind == "tabulated":
            if "path" in d:
                out = PotentialSpec.from_csv(d.pop("path"), **extra)
            else:
                out = PotentialSpec.tabulated(d.pop("x"), d.pop("v"), **extra)
        else:
            raise ValueError(f"unknown potential kind {kind!r}; expected one of {KINDS}")
    except KeyError as exc:
        raise ValueError(f"{kind} potential is missing {exc.args[0]!r}") from None
    if d:
        raise ValueError(f"unexpected keys for a {kind} potential: {sorted(d)}")
    return out


def subprincipal_from_dict(d: dict) -> Subprincipal:
    """Config-file schema for sigma_H: constant, cosine or polynomial."""
    d = dict(d)
    kind = d.pop("kind", None)
    try:
        if kind == "constant":
            out = Subprincipal.constant(d.pop("value"))
        elif kind == "cosine":
            out = Subprincipal.cosine(d.pop("amplitude", 1.0), d.pop("wavenumber", 1.0),
                                      d.pop("phase", 0.0), int(d.pop("axis", 0)))
        elif kind == "polynomial":
            out = Subprincipal.polynomial(d.pop("coefficients"), int(d.pop("axis", 0)))
        else:
            raise ValueError(f"unknown subprincipal kind {kind!r}")
    except KeyError as exc:
        raise ValueError(f"{kind} subprincipal is missing {exc.args[0]!r}") from None
    if d:
        raise ValueError(f"unexpected keys for a {kind} subprincipal: {sorted(d)}")
    return out
