"""Reference spectra of -h^2 d^2/dx^2 + V(x) (+ h W(x)) by finite differences.

Dirichlet boxes, 2nd/4th order stencils (6th/8th available for operator
application), banded symmetric eigensolvers and two-grid Richardson
extrapolation.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import trapezoid
from scipy.linalg import eig_banded, eigh_tridiagonal, solve_banded
from scipy.optimize import brentq

from .errors import GridMismatchError, ResolutionError
from .symbols import HamiltonianSpec, PotentialSpec, Subprincipal

POINTS_PER_WAVELENGTH = 10
# tunnelling action (in units of h) kept inside the box beyond each turning point
TAIL_ACTION = 40.0


def fornberg_weights(z: float, x: np.ndarray, m: int) -> np.ndarray:
    """Finite-difference weights for the m-th derivative at z on nodes x."""
    n = len(x)
    c = np.zeros((n, m + 1))
    c1, c4 = 1.0, x[0] - z
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2, c5, c4 = 1.0, c4, x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, m]


def central_second_difference(order: int) -> np.ndarray:
    if order not in (2, 4, 6, 8):
        raise ValueError("stencil order must be 2, 4, 6 or 8")
    half = order // 2
    return fornberg_weights(0.0, np.arange(-half, half + 1, dtype=float), 2)


@dataclass(frozen=True)
class Grid:
    """Uniform grid of ``n`` interior nodes strictly inside ``interval``."""

    interval: tuple[float, float]
    n: int

    @property
    def step(self) -> float:
        a, b = self.interval
        return (b - a) / (self.n + 1)

    def nodes(self) -> np.ndarray:
        a, b = self.interval
        return np.linspace(a, b, self.n + 2)[1:-1]

    def refined(self) -> "Grid":
        return Grid(self.interval, 2 * self.n + 1)


@dataclass(frozen=True, eq=False)
class GridOperator:
    """-h^2 D2 + V + h W on a Dirichlet grid."""

    grid: Grid
    h: float
    v: np.ndarray
    w: Optional[np.ndarray] = None
    order: int = 4

    @classmethod
    def assemble(cls, potential: PotentialSpec, h: float, grid: Grid, order: int = 4,
                 subprincipal: Optional[Subprincipal] = None) -> "GridOperator":
        x = grid.nodes()
        w = None
        if subprincipal is not None:
            if not subprincipal.multiplication:
                raise ValueError("the oracle only represents multiplication-operator subprincipal symbols")
            w = np.broadcast_to(subprincipal(np.zeros_like(x)[:, None], x[:, None]), x.shape).astype(float)
        return cls(grid, float(h), potential.value(x), w, order)

    @property
    def x(self) -> np.ndarray:
        return self.grid.nodes()

    def diagonal_potential(self) -> np.ndarray:
        d = np.array(self.v, dtype=float)
        if self.w is not None:
            d = d + self.h * self.w
        return d

    def banded_upper(self) -> np.ndarray:
        """Upper banded storage (as used by scipy.linalg.eig_banded)."""
        wts = central_second_difference(self.order)
        half = self.order // 2
        n = self.grid.n
        coef = -self.h ** 2 / self.grid.step ** 2
        ab = np.zeros((half + 1, n))
        ab[half] = coef * wts[half] + self.diagonal_potential()
        for off in range(1, half + 1):
            ab[half - off, off:] = coef * wts[half + off]
        return ab

    def dense(self) -> np.ndarray:
        ab = self.banded_upper()
        half = ab.shape[0] - 1
        n = self.grid.n
        m = np.diag(ab[half])
        for off in range(1, half + 1):
            band = ab[half - off, off:]
            m += np.diag(band, off) + np.diag(band, -off)
        return m

    def apply(self, u) -> np.ndarray:
        return apply_operator(self, u)


def apply_operator(opr: GridOperator, u) -> np.ndarray:
    """(-h^2 D2 + V + h W) u with one-sided stencils next to the box edges."""
    u = np.asarray(u)
    n = opr.grid.n
    if u.shape[0] != n:
        raise GridMismatchError(f"samples have {u.shape[0]} nodes, operator grid has {n}")
    half = opr.order // 2
    width = opr.order + 1
    dx = opr.grid.step
    wts = central_second_difference(opr.order)
    d2 = np.zeros_like(u, dtype=np.result_type(u, float))
    if n < width + 1:
        raise GridMismatchError("grid too small for the stencil")
    for j, wj in enumerate(wts):
        d2[half:n - half] += wj * u[j:n - 2 * half + j]
    # one-sided closures use one extra node for the same formal order
    for i in list(range(half)) + list(range(n - half, n)):
        lo = 0 if i < half else n - width - 1
        nodes = np.arange(lo, lo + width + 1)
        d2[i] = fornberg_weights(float(i), nodes.astype(float), 2) @ u[nodes]
    d2 /= dx ** 2
    return -opr.h ** 2 * d2 + (opr.diagonal_potential().reshape((-1,) + (1,) * (u.ndim - 1)) * u)


# --------------------------------------------------------------------------
# automatic grids


def _weyl_energy(potential: PotentialSpec, h: float, count: int) -> float:
    """Energy whose phase-space area holds ``count`` states (rough bound for level count-1)."""
    from .torus import escape_energy

    lo, hi = potential.domain
    xs = np.linspace(lo, hi, 20001)
    vs = potential.value(xs)
    target = 2.0 * np.pi * h * count

    def area(E):
        return 2.0 * trapezoid(np.sqrt(np.clip(E - vs, 0.0, None)), xs)

    e_lo = potential.v_min
    e_hi = escape_energy(potential)
    if area(e_hi) <= target:
        return e_hi
    return brentq(lambda E: area(E) - target, e_lo, e_hi, xtol=1e-10)


def auto_grid(potential: PotentialSpec, h: float, e_max: float,
              points_per_wavelength: int = 40) -> Grid:
    """Box whose edges carry tunnelling action TAIL_ACTION*h beyond the turning points."""
    lo, hi = potential.domain
    e_ref = e_max
    xs = np.linspace(lo, hi, 20001)
    vs = potential.value(xs)
    allowed = np.flatnonzero(vs < e_ref)
    if allowed.size == 0:
        raise ResolutionError("no classically allowed region below e_max")
    i0, i1 = allowed[0], allowed[-1]
    kappa = np.sqrt(np.clip(vs - e_ref, 0.0, None))
    dxs = xs[1] - xs[0]
    left = i0
    acc = 0.0
    while left > 0 and acc < TAIL_ACTION * h:
        acc += kappa[left] * dxs
        left -= 1
    right = i1
    acc = 0.0
    while right < xs.size - 1 and acc < TAIL_ACTION * h:
        acc += kappa[right] * dxs
        right += 1
    a, b = xs[left], xs[right]
    wavelength = 2.0 * np.pi * h / np.sqrt(max(e_ref - potential.v_min, 1e-300))
    n = int(np.ceil((b - a) / (wavelength / points_per_wavelength)))
    return Grid((float(a), float(b)), max(n, 64))


def check_resolution(potential: PotentialSpec, h: float, grid: Grid, e_max: float):
    wavelength = 2.0 * np.pi * h / np.sqrt(max(e_max - potential.v_min, 1e-300))
    limit = wavelength / POINTS_PER_WAVELENGTH
    if grid.step > limit:
        a, b = grid.interval
        suggested = int(np.ceil((b - a) / limit))
        raise ResolutionError(
            f"grid step {grid.step:.3g} exceeds wavelength/{POINTS_PER_WAVELENGTH} = {limit:.3g}; "
            f"use n >= {suggested}", suggested_n=suggested)


# --------------------------------------------------------------------------
# eigensolvers


@dataclass
class OracleSpectrum:
    energies: np.ndarray  # Richardson-extrapolated
    error_estimate: np.ndarray
    vectors: np.ndarray  # (n, k) on the fine grid, L2-normalised
    grid: Grid  # fine grid
    h: float
    order: int

    @property
    def x(self) -> np.ndarray:
        return self.grid.nodes()


def _lowest(opr: GridOperator, k: int, vectors: bool = True):
    ab = opr.banded_upper()
    if ab.shape[0] == 2:
        w = eigh_tridiagonal(ab[1], ab[0, 1:], eigvals_only=True, select="i", select_range=(0, k - 1))
    else:
        w = eig_banded(ab, lower=False, eigvals_only=True, select="i", select_range=(0, k - 1))
    if not vectors:
        return w, None
    return w, _inverse_iteration(ab, w)


def _inverse_iteration(ab: np.ndarray, w: np.ndarray, sweeps: int = 3) -> np.ndarray:
    """Eigenvectors of a banded symmetric matrix for known, well-separated eigenvalues."""
    half = ab.shape[0] - 1
    n = ab.shape[1]
    # full (upper + lower) banded storage for solve_banded
    full = np.zeros((2 * half + 1, n))
    full[:half + 1] = ab
    for off in range(1, half + 1):
        full[half + off, :n - off] = ab[half - off, off:]
    rng = np.random.default_rng(0)
    vecs = np.empty((n, w.size))
    gaps = np.diff(w)
    for j, lam in enumerate(w):
        gap = min(gaps[j - 1] if j > 0 else np.inf, gaps[j] if j < gaps.size else np.inf)
        shift = lam - 1e-10 * (gap if np.isfinite(gap) else max(abs(lam), 1.0))
        shifted = full.copy()
        shifted[half] -= shift
        v = rng.standard_normal(n)
        for _ in range(sweeps):
            v = solve_banded((half, half), shifted, v)
            v /= np.linalg.norm(v)
        vecs[:, j] = v
    return vecs


def _cache_key(potential, h, grid, order, subprincipal) -> str:
    blob = json.dumps({
        "potential": potential.fingerprint(), "h": repr(float(h)), "n": grid.n,
        "interval": [repr(v) for v in grid.interval], "order": order,
        "sub": None if subprincipal is None else [subprincipal.kind, subprincipal.params],
    }, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:24]


def solve_1d(potential: PotentialSpec, h: float, k_lowest: int, grid: Optional[Grid] = None,
             order: int = 4, subprincipal: Optional[Subprincipal] = None,
             cache_dir=None) -> OracleSpectrum:
    """The ``k_lowest`` eigenpairs, extrapolated from grids n and 2n+1."""
    if isinstance(potential, HamiltonianSpec):
        subprincipal = subprincipal if subprincipal is not None else potential.subprincipal
        potential = potential.potential
    if k_lowest < 1:
        raise ValueError("k_lowest must be positive")
    e_max = _weyl_energy(potential, h, k_lowest + 2)
    if grid is None:
        grid = auto_grid(potential, h, e_max)
    else:
        check_resolution(potential, h, grid, e_max)

    path = None
    if cache_dir is not None:
        path = Path(cache_dir) / f"oracle_{_cache_key(potential, h, grid, order, subprincipal)}_{k_lowest}.npz"
        if path.exists():
            data = np.load(path)
            return OracleSpectrum(data["energies"], data["error"], data["vectors"],
                                  Grid(tuple(data["interval"]), int(data["n"])), float(h), order)

    coarse = GridOperator.assemble(potential, h, grid, order, subprincipal)
    fine_grid = grid.refined()
    fine = GridOperator.assemble(potential, h, fine_grid, order, subprincipal)
    e_c, _ = _lowest(coarse, k_lowest, vectors=False)
    e_f, vecs = _lowest(fine, k_lowest)
    r = 2.0 ** order
    energies = (r * e_f - e_c) / (r - 1.0)
    error = np.abs(energies - e_f)
    vecs = vecs / np.sqrt(fine_grid.step)
    for j in range(vecs.shape[1]):
        big = np.flatnonzero(np.abs(vecs[:, j]) > 1e-3 * np.abs(vecs[:, j]).max())
        if vecs[big[0], j] < 0:
            vecs[:, j] *= -1.0
    out = OracleSpectrum(energies, error, vecs, fine_grid, float(h), order)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savez(path, energies=energies, error=error, vectors=vecs,
                 interval=np.array(fine_grid.interval), n=fine_grid.n)
        # cached grid is the fine one; store under the requested key
    return out


def solve_separable(spec: HamiltonianSpec, h: float, n_lattice: Sequence[Sequence[int]],
                    grids: Optional[Sequence[Grid]] = None, order: int = 4,
                    cache_dir=None) -> dict[tuple[int, ...], float]:
    """Tensor-sum eigenvalues E_n = sum_k E_{k, n_k}."""
    lattice = [tuple(int(v) for v in n) for n in n_lattice]
    if not lattice:
        return {}
    shift = 0.0
    if spec.subprincipal is not None:
        if spec.subprincipal.kind != "constant":
            raise ValueError("separable oracle supports only constant subprincipal symbols")
        shift = h * spec.subprincipal.params["value"]
    per_axis = []
    for k, v in enumerate(spec.axes):
        kk = max(n[k] for n in lattice) + 1
        g = None if grids is None else grids[k]
        per_axis.append(solve_1d(v, h, kk, grid=g, order=order, cache_dir=cache_dir).energies)
    return {n: float(sum(per_axis[k][n[k]] for k in range(spec.dim)) + shift) for n in lattice}


def lattice(ranges: Sequence[Sequence[int]]):
    """Cartesian product of inclusive per-axis ranges [(lo, hi), ...]."""
    return list(itertools.product(*[range(lo, hi + 1) for lo, hi in ranges]))
