"""Run orchestration: spectrum, converge and eigfn reports (CSV + JSON manifest)."""

from __future__ import annotations

import csv
import json
import logging
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from .. import __version__
from ..errors import ConfigError, InconsistentInputError, SemiclassicalError
from ..lagdist import (fixed_energy_residuals, loglog_slope, overlap, residual_norm,
                       stationary_phase_errors, wkb_eigenfunction, wkb_grid)
from ..oracle import solve_1d, solve_separable
from ..quantize import TorusFamily, lattice, quantization_defect, solve_eigenvalue, spectrum
from ..caustics import maslov_vector
from ..symbols import potential_to_dict
from ..torus import action_integrals, build_torus_1d
from ..transport import subprincipal_average
from .config import RunConfig

log = logging.getLogger("semiclassical")

# eigenvalue errors below this are at the solver/oracle floor
FLOOR = 1e-9
SP_SWEEP = (0.1, 0.05, 0.025, 0.0125)


@dataclass
class RunReport:
    command: str
    out: Path
    files: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        return 1 if self.failures else 0


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def write_manifest(report: RunReport, cfg: RunConfig, columns: dict, timings: dict, extra=None):
    manifest = {
        "command": report.command,
        "package_version": __version__,
        "versions": {"python": platform.python_version(), "numpy": np.__version__,
                     "scipy": scipy.__version__},
        "config": cfg.model_dump(),
        "tolerances": cfg.tolerances.model_dump(),
        "files": sorted(report.files),
        "columns": columns,
        "failures": report.failures,
        "summary": report.summary,
        "timings_s": {k: round(v, 4) for k, v in timings.items()},
    }
    if extra:
        manifest.update(extra)
    path = report.out / f"{report.command}_manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_fmt) + "\n")
    return path


def _pool_map(fn, items, jobs):
    if jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def _oracle_energies(spec, h, points, tol):
    """Oracle eigenvalues keyed by n, or raises."""
    if spec.dim == 1:
        k = max(p[0] for p in points) + 1
        sub = spec.subprincipal
        res = solve_1d(spec.axes[0], h, k, subprincipal=sub)
        return {p: float(res.energies[p[0]]) for p in points}, float(np.max(res.error_estimate))
    return solve_separable(spec, h, points), float("nan")


# --------------------------------------------------------------------------
# spectrum


SPECTRUM_COLUMNS = {
    "n": ("quantize", "spectrum", "lattice point"),
    "h": ("config", "h list", "exact"),
    "E_ebk": ("quantize", "solve_eigenvalue", "tol_q"),
    "E_oracle": ("oracle", "solve_1d/solve_separable (Richardson)", "tol_oracle"),
    "abs_err": ("cli", "|E_ebk - E_oracle|", "tol_oracle"),
    "err_over_h2": ("cli", "|E_ebk - E_oracle| / h^2", "tol_oracle"),
    "defect_max": ("quantize", "quantization_defect", "tol_q"),
    "alpha": ("caustics", "maslov_vector", "exact integer"),
    "I": ("torus", "action_integrals", "tol_E"),
    "status": ("cli", "per-level outcome", "none"),
}


def _axis_columns(columns: dict, dim: int, per_axis) -> dict:
    """Expand per-axis entries (n -> n1..nd) so the manifest matches the CSV header."""
    out = {}
    for k, v in columns.items():
        if k in per_axis:
            out.update({f"{k}{i + 1}": v for i in range(dim)})
        else:
            out[k] = v
    return out


def run_spectrum(cfg: RunConfig, out: Path, jobs: int = 1) -> RunReport:
    out.mkdir(parents=True, exist_ok=True)
    spec = cfg.hamiltonian()
    points = lattice(cfg.n)
    d = spec.dim
    report = RunReport("spectrum", out)
    timings = {}

    def per_h(h):
        t0 = time.perf_counter()
        # one cache per h so results do not depend on the pool's ordering
        table = spectrum(spec, points, h, cfg.tolerances.tol_q, TorusFamily())
        t1 = time.perf_counter()
        try:
            oracle, oracle_err = _oracle_energies(spec, h, points, cfg.tolerances.tol_oracle)
            oracle_msg = None
        except (SemiclassicalError, ValueError) as exc:
            oracle, oracle_err, oracle_msg = {}, float("nan"), f"{type(exc).__name__}: {exc}"
        t2 = time.perf_counter()
        return h, table, oracle, oracle_err, oracle_msg, (t1 - t0, t2 - t1)

    rows = []
    for h, table, oracle, oracle_err, oracle_msg, (t_ebk, t_orc) in _pool_map(per_h, list(cfg.h), jobs):
        timings[f"ebk_h={h!r}"] = t_ebk
        timings[f"oracle_h={h!r}"] = t_orc
        if oracle_msg:
            report.failures.append({"h": h, "n": None, "error": oracle_msg})
        for r in table.results:
            e_orc = oracle.get(r.n)
            err = None if e_orc is None else abs(r.E - e_orc)
            rows.append([*r.n, h, r.E, e_orc, err, None if err is None else err / h ** 2,
                         r.defect_max, *r.alpha, *r.actions, "ok"])
        for n, msg in sorted(table.failures.items()):
            report.failures.append({"h": h, "n": list(n), "error": msg})
            rows.append([*n, h, None, oracle.get(n), None, None, None, *([None] * d),
                         *([None] * d), "failed"])
        log.info("h=%g: %d levels solved, %d failed", h, len(table.results), len(table.failures))
    header = ([f"n{k + 1}" for k in range(d)] + ["h", "E_ebk", "E_oracle", "abs_err", "err_over_h2",
              "defect_max"] + [f"alpha{k + 1}" for k in range(d)] + [f"I{k + 1}" for k in range(d)]
              + ["status"])
    path = out / "spectrum.csv"
    write_csv(path, header, rows)
    report.files.append(path.name)
    errs = [r[d + 3] for r in rows if r[d + 3] is not None]
    report.summary = {"levels": len(rows), "failed": len(report.failures),
                      "max_abs_err": max(errs) if errs else None}
    write_manifest(report, cfg, _axis_columns(SPECTRUM_COLUMNS, spec.dim, ("n", "alpha", "I")),
                   timings)
    return report


# --------------------------------------------------------------------------
# converge


def run_converge(cfg: RunConfig, out: Path, jobs: int = 1) -> RunReport:
    out.mkdir(parents=True, exist_ok=True)
    spec = cfg.hamiltonian()
    points = lattice(cfg.n)
    report = RunReport("converge", out)
    timings = {}
    hs = list(cfg.h)
    t0 = time.perf_counter()

    def per_h(h):
        vals = {}
        fails = []
        try:
            oracle, _ = _oracle_energies(spec, h, points, cfg.tolerances.tol_oracle)
        except (SemiclassicalError, ValueError) as exc:
            return h, vals, [{"h": h, "n": None, "error": f"{type(exc).__name__}: {exc}"}]
        for n in points:
            try:
                r = solve_eigenvalue(spec, n, h, tol_q=cfg.tolerances.tol_q)
                vals[("eigenvalue_error", n)] = abs(r.E - oracle[n])
                if spec.dim == 1:
                    x = wkb_grid(r.chart, h, cfg.eigfn.extent, cfg.eigfn.points)
                    u = wkb_eigenfunction(spec, r.chart, r.E, h, x, tol=1e-8)
                    vals[("residual_norm", n)] = residual_norm(spec, u, r.E, h)
            except SemiclassicalError as exc:
                fails.append({"h": h, "n": list(n), "error": f"{type(exc).__name__}: {exc}"})
        return h, vals, fails

    results = _pool_map(per_h, hs, jobs)
    timings["sweep"] = time.perf_counter() - t0
    table = {}
    for h, vals, fails in results:
        report.failures.extend(fails)
        for (obs, n), v in vals.items():
            table.setdefault((obs, n), {})[h] = v
    if spec.dim == 1:
        # fixed-torus companion: one energy, h stepped through quantized values
        try:
            E0 = solve_eigenvalue(spec, points[0], hs[0], tol_q=cfg.tolerances.tol_q).E
            h_fix, _, res_fix = fixed_energy_residuals(spec, E0, hs, extent=cfg.eigfn.extent,
                                                       points=cfg.eigfn.points)
            for h, v in zip(h_fix, res_fix):
                table.setdefault(("residual_norm_fixed_E", points[0]), {})[float(h)] = float(v)
        except SemiclassicalError as exc:
            report.failures.append({"observable": "residual_norm_fixed_E",
                                    "error": f"{type(exc).__name__}: {exc}"})
    try:
        sp = stationary_phase_errors(SP_SWEEP, budget=cfg.tolerances.quad_budget)
        for h, v in zip(SP_SWEEP, sp):
            table.setdefault(("stationary_phase_error", ()), {})[h] = float(v)
    except SemiclassicalError as exc:
        report.failures.append({"observable": "stationary_phase_error",
                                "error": f"{type(exc).__name__}: {exc}"})

    rows, slope_rows = [], []
    for (obs, n) in sorted(table, key=lambda k: (k[0], k[1])):
        series = table[(obs, n)]
        hh = sorted(series, reverse=True)
        label = "-".join(str(v) for v in n) if n else "-"
        for h in hh:
            rows.append([obs, label, h, series[h]])
        vals = np.array([series[h] for h in hh])
        if len(hh) < 3:
            report.failures.append({"observable": obs, "n": label,
                                    "error": "insufficient points for a slope fit"})
            continue
        floor = bool(np.max(vals) < FLOOR)
        slope = loglog_slope(hh, np.maximum(vals, 1e-300))
        slope_rows.append([obs, label, slope, len(hh), floor])
    write_csv(out / "converge.csv", ["observable", "n", "h", "value"], rows)
    write_csv(out / "slopes.csv", ["observable", "n", "slope", "points", "floor_limited"], slope_rows)
    report.files += ["converge.csv", "slopes.csv"]
    report.summary = {"slopes": {f"{r[0]}[{r[1]}]": r[2] for r in slope_rows}}
    columns = {
        "eigenvalue_error": ("quantize+oracle", "|E_ebk - E_oracle|", "tol_q, tol_oracle"),
        "residual_norm": ("lagdist", "residual_norm of wkb_eigenfunction", "order-8 stencil"),
        "residual_norm_fixed_E": ("lagdist", "fixed_energy_residuals (branch region, E of first n "
                                  "at the largest h)", "order-8 stencil"),
        "stationary_phase_error": ("lagdist", "oscillatory_integral vs stationary_phase_leading",
                                   "quad tol 1e-11"),
        "slope": ("cli", "least-squares log-log fit", "none"),
        "floor_limited": ("cli", f"max value < {FLOOR:g}", "none"),
    }
    write_manifest(report, cfg, columns, timings)
    return report


# --------------------------------------------------------------------------
# eigfn


def run_eigfn(cfg: RunConfig, out: Path, jobs: int = 1) -> RunReport:
    spec = cfg.hamiltonian()
    if spec.dim != 1:
        raise ConfigError("eigfn runs synthesize one-axis problems only")
    out.mkdir(parents=True, exist_ok=True)
    points = lattice(cfg.n)
    report = RunReport("eigfn", out)
    timings = {}
    tasks = [(h, n) for h in cfg.h for n in points]
    oracles = {}
    for h in cfg.h:
        try:
            oracles[h] = solve_1d(spec.axes[0], h, max(p[0] for p in points) + 1,
                                  subprincipal=spec.subprincipal)
        except (SemiclassicalError, ValueError) as exc:
            report.failures.append({"h": h, "n": None, "error": f"oracle: {type(exc).__name__}: {exc}"})

    def one(task):
        h, n = task
        t0 = time.perf_counter()
        try:
            r = solve_eigenvalue(spec, n, h, tol_q=cfg.tolerances.tol_q)
            E = r.E + cfg.eigfn.detune
            chart = r.chart if cfg.eigfn.detune == 0.0 else build_torus_1d(spec, E)
            actions = action_integrals(chart)
            sigma = subprincipal_average(spec, chart)
            defect = float(quantization_defect(spec, actions, maslov_vector(chart), sigma, n, h)[0])
            x = wkb_grid(chart, h, cfg.eigfn.extent, cfg.eigfn.points)
            try:
                u = wkb_eigenfunction(spec, chart, E, h, x)
            except InconsistentInputError as exc:
                return task, dict(E=E, defect=defect, status="inconsistent", error=str(exc)), None, \
                    time.perf_counter() - t0
            res = residual_norm(spec, u, E, h)
            orc = oracles.get(h)
            ov = None if orc is None else overlap(x, u.values, orc.x, orc.vectors[:, n[0]])
            row = dict(E=E, defect=defect, residual=res, nodes=u.node_count(), overlap=ov,
                       status="ok")
            return task, row, u, time.perf_counter() - t0
        except SemiclassicalError as exc:
            return task, dict(status="failed", error=f"{type(exc).__name__}: {exc}"), None, \
                time.perf_counter() - t0

    rows = []
    for (h, n), row, u, dt in _pool_map(one, tasks, jobs):
        tag = f"h={h!r}_n={n[0]}"
        timings[tag] = dt
        if row["status"] != "ok":
            report.failures.append({"h": h, "n": list(n), "error": row.get("error", row["status"])})
        if u is not None:
            name = f"eigfn_{tag}.csv"
            un = u.normalized()
            write_csv(out / name, ["x", "re_u", "im_u", "abs2_u"],
                      zip(u.x, un.real, un.imag, np.abs(un) ** 2))
            meta = {"E": row["E"], "h": h, "n": n[0], "residual": row["residual"],
                    "defect": row["defect"], "node_count": row["nodes"], "overlap": row["overlap"],
                    "patches": [{"x_turn": p.x_turn, "r_match": p.r_match, "airy_length": p.airy_length,
                                 "clamped": p.clamped, "mismatch": p.mismatch} for p in u.patches]}
            (out / f"eigfn_{tag}.json").write_text(json.dumps(meta, indent=2, sort_keys=True,
                                                              default=_fmt) + "\n")
            report.files += [name, f"eigfn_{tag}.json"]
        rows.append([n[0], h, row.get("E"), row.get("defect"), row.get("residual"),
                     row.get("nodes"), row.get("overlap"), row["status"]])
    write_csv(out / "eigfn_summary.csv",
              ["n", "h", "E", "defect", "residual", "node_count", "oracle_overlap", "status"], rows)
    report.files.append("eigfn_summary.csv")
    columns = {
        "E": ("quantize", "solve_eigenvalue (+ detune)", "tol_q"),
        "defect": ("quantize", "quantization_defect", "tol_q"),
        "residual": ("lagdist", "residual_norm", "order-8 stencil"),
        "node_count": ("lagdist", "WkbFunction.node_count", "exact integer"),
        "oracle_overlap": ("lagdist+oracle", "overlap", "tol_oracle"),
        "x,re_u,im_u,abs2_u": ("lagdist", "wkb_eigenfunction (normalized, real gauge)", "quad tol"),
    }
    write_manifest(report, cfg, columns, timings,
                   {"potential": [potential_to_dict(v) for v in spec.axes]})
    return report
