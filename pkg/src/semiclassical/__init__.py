"""Semiclassical (EBK / Maslov) quantization of integrable Hamiltonians.

Modules: symbols (Hamiltonians), torus (invariant tori and actions), caustics
(folds and Maslov indices), transport (amplitudes and the subprincipal
phase), quantize (eigenvalues), lagdist (oscillatory integrals and WKB
eigenfunctions), oracle (finite-difference reference solver) and cli.
"""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .symbols import HamiltonianSpec, PotentialSpec, Subprincipal  # noqa: F401
from .quantize import solve_eigenvalue, spectrum  # noqa: F401
