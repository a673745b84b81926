"""Run configuration: a TOML file validated into a ``RunConfig``.

Schema (all sections except [potential] are optional)::

    mode = "spectrum"            # spectrum | converge | eigfn | check
    h = [0.2, 0.1, 0.05]
    n = [[0, 10]]                # inclusive range per axis
    out = "runs/harmonic"
    seed = 0

    [potential]                  # one axis; use [[potentials]] for separable sums
    kind = "harmonic"            # polynomial | morse | harmonic | tabulated
    omega = 1.0

    [subprincipal]
    kind = "constant"            # constant | cosine | polynomial
    value = 0.3

    [tolerances]
    tol_E = 1e-7
    tol_q = 1e-10
    tol_transport = 1e-6
    tol_oracle = 1e-6
    quad_budget = 2000000

    [eigfn]
    points = 2001
    extent = 1.6                 # x range as a multiple of the outer turning point
    detune = 0.0                 # energy offset added before synthesis

    [check]
    energies = []                # torus energies to probe (default: from the spectrum)
    expect_errors = []           # error type names that mark a rigged configuration
"""

from __future__ import annotations

import sys
from pathlib import Path
from typing import Literal, Optional

from pydantic import (BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, ValidationError,
                      field_validator, model_validator)

from ..errors import ConfigError
from ..symbols import HamiltonianSpec, potential_from_dict, subprincipal_from_dict

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

MODES = ("spectrum", "converge", "eigfn", "check")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class Tolerances(_Strict):
    tol_E: PositiveFloat = 1e-7
    tol_q: PositiveFloat = 1e-10
    tol_transport: PositiveFloat = 1e-6
    tol_oracle: PositiveFloat = 1e-6
    quad_budget: PositiveInt = 2_000_000


class EigfnOptions(_Strict):
    points: int = Field(2001, ge=101)
    extent: float = Field(1.6, gt=1.0)
    detune: float = 0.0


class CheckOptions(_Strict):
    energies: list[float] = Field(default_factory=list)
    expect_errors: list[str] = Field(default_factory=list)


class RunConfig(_Strict):
    mode: Literal["spectrum", "converge", "eigfn", "check"] = "spectrum"
    potential: Optional[dict] = None
    potentials: Optional[list[dict]] = None
    subprincipal: Optional[dict] = None
    h: list[PositiveFloat] = Field(default_factory=lambda: [0.1])
    n: list[list[int]] = Field(default_factory=lambda: [[0, 5]])
    out: str = "runs/out"
    seed: int = 0
    tolerances: Tolerances = Field(default_factory=Tolerances)
    eigfn: EigfnOptions = Field(default_factory=EigfnOptions)
    check: CheckOptions = Field(default_factory=CheckOptions)

    @field_validator("h")
    @classmethod
    def _h_nonempty(cls, v):
        if not v:
            raise ValueError("h list is empty")
        return v

    @field_validator("n")
    @classmethod
    def _ranges(cls, v):
        if not v:
            raise ValueError("quantum-number ranges are empty")
        for r in v:
            if len(r) != 2 or r[0] < 0 or r[1] < r[0]:
                raise ValueError(f"range {r} must be [lo, hi] with 0 <= lo <= hi")
        return v

    @model_validator(mode="after")
    def _consistent(self):
        if (self.potential is None) == (self.potentials is None):
            raise ValueError("give exactly one of [potential] or [[potentials]]")
        if len(self.n) != self.dim:
            raise ValueError(f"n has {len(self.n)} ranges for a {self.dim}-axis problem")
        if self.mode == "converge":
            if len(self.h) < 3:
                raise ValueError("converge mode needs at least 3 h values")
            if list(self.h) != sorted(self.h, reverse=True):
                raise ValueError("converge mode needs h sorted in descending order")
        # build once so bad potential parameters surface as config errors
        self.hamiltonian()
        return self

    @property
    def dim(self) -> int:
        return 1 if self.potential is not None else len(self.potentials)

    def hamiltonian(self) -> HamiltonianSpec:
        pots = [self.potential] if self.potential is not None else self.potentials
        axes = [potential_from_dict(p) for p in pots]
        sub = None if self.subprincipal is None else subprincipal_from_dict(self.subprincipal)
        if len(axes) == 1:
            return HamiltonianSpec.one_dim(axes[0], sub)
        return HamiltonianSpec.separable(axes, sub)


def _describe(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"  {loc}: {err['msg']}")
    return "invalid configuration:\n" + "\n".join(lines)


def parse_config(data: dict, base: Optional[Path] = None, **overrides) -> RunConfig:
    data = dict(data)
    data.update({k: v for k, v in overrides.items() if v is not None})
    if base is not None:
        # relative tabulated-potential paths are taken from the config's folder
        for key in ("potential", "potentials"):
            items = data.get(key)
            items = [items] if isinstance(items, dict) else (items or [])
            for p in items:
                if isinstance(p, dict) and "path" in p and not Path(p["path"]).is_absolute():
                    p["path"] = str(base / p["path"])
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_describe(exc)) from None
    except (ValueError, TypeError, OSError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from None


def load_config(path, **overrides) -> RunConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return parse_config(data, base=path.parent, **overrides)
