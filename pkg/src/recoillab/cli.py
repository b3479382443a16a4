"""Configuration-driven scenario runner.

``recoillab run spec.cfg`` builds the configured scenario, executes every
requested route (closed-form fields, particle ensemble, Fokker-Planck,
wave pair), cross-validates the routes against each other, and writes
plot-ready CSV artifacts plus a machine-readable report and a content-hash
manifest.  ``recoillab list`` prints the built-in scenarios; ``recoillab
compare A B`` diffs two finished run directories by content hash.

Exit codes: 0 every tolerance gate passed; 1 at least one gate failed;
2 invalid spec or usage; 3 solver failure.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import logging
import os
import sys
from dataclasses import dataclass, field

logger = logging.getLogger(__name__)

ROUTES = ("analytic", "schrodinger", "fp", "sde")
SCENARIOS = ("free_brownian", "free_recoil", "harmonic_recoil",
             "smoluchowski_ou", "custom")

# routes a scenario can serve; harmonic fp/sde additionally need the wave
# route in the same run to supply their drift table
_ALLOWED_ROUTES = {
    "free_brownian": ("analytic", "fp", "sde"),
    "free_recoil": ("analytic", "schrodinger", "fp", "sde"),
    "harmonic_recoil": ("analytic", "schrodinger", "fp", "sde"),
    "smoluchowski_ou": ("analytic", "fp", "sde"),
    "custom": ("schrodinger", "fp", "sde"),
}

_DEFAULTS = {
    "free_brownian": dict(x_min=-16.0, x_max=16.0, n=2001, dt=1e-3,
                          t_end=1.0, snapshot_stride=100, drift_stride=0),
    "free_recoil": dict(x_min=-40.0, x_max=40.0, n=4001, dt=1e-4,
                        t_end=1.0, snapshot_stride=1000, drift_stride=100),
    "harmonic_recoil": dict(x_min=-12.0, x_max=12.0, n=8001, dt=1e-3,
                            t_end=4.712, snapshot_stride=250, drift_stride=10),
    "smoluchowski_ou": dict(x_min=-12.0, x_max=12.0, n=2401, dt=1e-3,
                            t_end=10.0, snapshot_stride=1000, drift_stride=0),
    "custom": dict(x_min=-10.0, x_max=10.0, n=1001, dt=1e-3,
                   t_end=1.0, snapshot_stride=100, drift_stride=0),
}

_TOLERANCE_DEFAULTS = dict(linf_rho=1e-4, l1_rho=2e-2, msd_rel=1e-3,
                           msd_nsigma=3.0, energy_drift=1e-3)

_SCENARIO_SUMMARIES = {
    "free_brownian": "b = 0; <x^2> = alpha^2/2 + 2*D*t per axis",
    "free_recoil": ("b = 2D(2Dt - alpha^2) x / (alpha^4 + 4 D^2 t^2); "
                    "<x^2> = alpha^2/2 + 2 D^2 t^2 / alpha^2"),
    "harmonic_recoil": ("Omega = gamma^2 x^2 / 2 - D gamma; width oscillates "
                        "with period pi/gamma, frozen when alpha^2 = 2D/gamma"),
    "smoluchowski_ou": "b = -gamma x; variance relaxes to D/gamma",
}

_SPARSE_FRAC = 1e-12  # hydro columns are blanked where rho < frac * peak


class SpecError(ValueError):
    """Unusable scenario specification; maps to exit code 2."""


@dataclass(frozen=True)
class ScenarioSpec:
    """Fully resolved run configuration."""

    name: str
    kind: str
    routes: tuple
    params: object            # PhysicalParams
    dim: int
    x_min: float
    x_max: float
    n: int
    dt: float                 # wave / field-solver step
    fp_dt: float
    t_end: float
    snapshot_stride: int
    drift_stride: int
    sde_n: int
    sde_dt: float
    sde_stride: int
    seed: int
    out_dir: str
    fmt: str                  # csv | binary
    strict: bool
    tolerances: dict
    min_half_sigmas: float
    drift_file: str = ""
    omega_file: str = ""


def _get(cfg, section, key, cast, default):
    if cfg.has_option(section, key):
        raw = cfg.get(section, key)
        try:
            return cast(raw)
        except ValueError as exc:
            raise SpecError(f"[{section}] {key} = {raw!r}: {exc}") from exc
    if default is None:
        raise SpecError(f"missing required option [{section}] {key}")
    return default


def load_spec(path: str, *, out_dir=None, seed=None, fmt=None,
              strict=False) -> ScenarioSpec:
    """Parse and validate a spec file; CLI flags override file values."""
    from .core import PhysicalParams

    cfg = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = cfg.read(path)
    if not read:
        raise SpecError(f"cannot read spec file {path!r}")
    if not cfg.has_section("scenario"):
        raise SpecError("spec needs a [scenario] section")

    kind = _get(cfg, "scenario", "kind", str, None).strip()
    if kind not in SCENARIOS:
        raise SpecError(f"unknown scenario kind {kind!r}; choose from {SCENARIOS}")
    name = _get(cfg, "scenario", "name", str, kind).strip()

    routes_raw = _get(cfg, "scenario", "routes", str, None)
    routes = tuple(r.strip() for r in routes_raw.split(",") if r.strip())
    if not routes:
        raise SpecError("at least one route is required")
    bad = [r for r in routes if r not in ROUTES]
    if bad:
        raise SpecError(f"unknown routes {bad}; choose from {ROUTES}")
    routes = tuple(r for r in ROUTES if r in routes)  # canonical order
    for r in routes:
        if r not in _ALLOWED_ROUTES[kind]:
            raise SpecError(f"route {r!r} is not available for scenario {kind!r}"
                            + (" (the wave linearization evolves the recoil "
                               "dynamics, not this scenario)"
                               if r == "schrodinger" else ""))

    try:
        params = PhysicalParams(
            D=_get(cfg, "params", "D", float, 1.0),
            m=_get(cfg, "params", "m", float, 1.0),
            beta=_get(cfg, "params", "beta", float, 1.0),
            alpha=_get(cfg, "params", "alpha", float, 1.0),
            gamma=_get(cfg, "params", "gamma", float, 0.0),
        )
    except ValueError as exc:
        raise SpecError(f"bad [params]: {exc}") from exc
    dim = _get(cfg, "params", "dim", int, 1)
    if dim not in (1, 3):
        raise SpecError("dim must be 1 or 3")
    if dim == 3 and (kind != "free_brownian" or routes != ("analytic",)):
        raise SpecError("dim = 3 is closed-form only: scenario free_brownian "
                        "with routes = analytic")
    if kind in ("harmonic_recoil", "smoluchowski_ou") and params.gamma <= 0:
        raise SpecError(f"scenario {kind!r} needs gamma > 0")
    if kind == "harmonic_recoil":
        for r in ("fp", "sde"):
            if r in routes and "schrodinger" not in routes:
                raise SpecError(f"harmonic_recoil route {r!r} takes its drift "
                                "from the wave route; add schrodinger to routes")

    d = _DEFAULTS[kind]
    x_min = _get(cfg, "grid", "x_min", float, d["x_min"])
    x_max = _get(cfg, "grid", "x_max", float, d["x_max"])
    n = _get(cfg, "grid", "n", int, d["n"])
    min_half_sigmas = _get(cfg, "grid", "min_half_sigmas", float, 8.0)

    dt = _get(cfg, "time", "dt", float, d["dt"])
    t_end = _get(cfg, "time", "t_end", float, d["t_end"])
    snapshot_stride = _get(cfg, "time", "snapshot_stride", int, d["snapshot_stride"])
    drift_stride = _get(cfg, "time", "drift_stride", int, d["drift_stride"])
    fp_dt = _get(cfg, "time", "fp_dt", float, max(dt, 1e-3))
    if dt <= 0 or fp_dt <= 0 or t_end <= 0:
        raise SpecError("dt, fp_dt and t_end must be > 0")
    if snapshot_stride < 1:
        raise SpecError("snapshot_stride must be >= 1")

    sde_n = _get(cfg, "sde", "n_particles", int, 100000)
    sde_dt = _get(cfg, "sde", "dt", float, 1e-3)
    sde_stride = _get(cfg, "sde", "snapshot_stride", int,
                      max(1, int(round(0.25 / sde_dt))))

    tolerances = dict(_TOLERANCE_DEFAULTS)
    if cfg.has_section("tolerances"):
        for key in cfg.options("tolerances"):
            if key not in tolerances:
                raise SpecError(f"unknown tolerance {key!r}; "
                                f"known: {sorted(tolerances)}")
            tolerances[key] = _get(cfg, "tolerances", key, float, None)

    out = out_dir or _get(cfg, "output", "dir", str, os.path.join("runs", name))
    fmt_val = (fmt or _get(cfg, "output", "format", str, "csv")).strip()
    if fmt_val not in ("csv", "binary"):
        raise SpecError("output format must be csv or binary")
    seed_val = seed if seed is not None else _get(cfg, "scenario", "seed", int, 0)

    drift_file = _get(cfg, "tables", "drift_file", str, "").strip()
    omega_file = _get(cfg, "tables", "omega_file", str, "").strip()
    if kind == "custom":
        if not drift_file and not omega_file:
            raise SpecError("custom scenario needs [tables] drift_file and/or "
                            "omega_file")
        if "schrodinger" in routes and not omega_file:
            raise SpecError("custom schrodinger route needs an omega_file")
        if not drift_file and ("fp" in routes or "sde" in routes) \
                and "schrodinger" not in routes:
            raise SpecError("custom fp/sde routes need a drift_file (or the "
                            "schrodinger route to tabulate one)")
        base = os.path.dirname(os.path.abspath(path))
        if drift_file and not os.path.isabs(drift_file):
            drift_file = os.path.join(base, drift_file)
        if omega_file and not os.path.isabs(omega_file):
            omega_file = os.path.join(base, omega_file)

    spec = ScenarioSpec(
        name=name, kind=kind, routes=routes, params=params, dim=dim,
        x_min=x_min, x_max=x_max, n=n, dt=dt, fp_dt=fp_dt, t_end=t_end,
        snapshot_stride=snapshot_stride, drift_stride=drift_stride,
        sde_n=sde_n, sde_dt=sde_dt, sde_stride=sde_stride, seed=seed_val,
        out_dir=out, fmt=fmt_val, strict=strict, tolerances=tolerances,
        min_half_sigmas=min_half_sigmas,
        drift_file=drift_file, omega_file=omega_file,
    )
    _check_domain(spec)
    return spec


def _expected_sigma_max(spec) -> float:
    """Largest per-axis standard deviation the scenario reaches by t_end."""
    import numpy as np

    p = spec.params
    if spec.kind == "free_brownian":
        return float(np.sqrt(p.alpha**2 / 2 + 2 * p.D * spec.t_end))
    if spec.kind == "free_recoil":
        return float(np.sqrt(p.alpha**2 / 2 + 2 * p.D**2 * spec.t_end**2 / p.alpha**2))
    if spec.kind == "harmonic_recoil":
        s0 = p.alpha**2 / 2
        return float(np.sqrt(max(s0, (p.D / p.gamma) ** 2 / s0)))
    if spec.kind == "smoluchowski_ou":
        return float(np.sqrt(max(p.alpha**2 / 2, p.D / p.gamma)))
    return 0.0  # custom: caller knows best


def _check_domain(spec):
    sigma = _expected_sigma_max(spec)
    half = min(-spec.x_min, spec.x_max)
    if sigma > 0 and half < spec.min_half_sigmas * sigma:
        raise SpecError(
            f"domain half-width {half:g} is below {spec.min_half_sigmas:g} x "
            f"the expected peak standard deviation {sigma:.3g}; widen [grid] "
            f"or lower min_half_sigmas")


# ---------------------------------------------------------------------------
# route execution


@dataclass
class RouteData:
    """Everything one route contributes to artifacts and gates."""

    slices: list = field(default_factory=list)   # (t, {col: array}) for CSV
    msd: object = None                           # MsdSeries
    energy: object = None                        # EnergyReport or None
    verdict: dict = None
    rho_final: object = None                     # ScalarField at t_end
    snapshots: list = field(default_factory=list)  # sde EnsembleStates


def _mask_sparse(rho, cols):
    """Blank derived hydro columns where the density carries no information."""
    import numpy as np

    thin = rho < _SPARSE_FRAC * float(np.max(rho))
    return {k: np.where(thin, np.nan, v) for k, v in cols.items()}


def _gaussian_cols(x, var, dvar_dt, D):
    """Closed-form hydro fields of a centered Gaussian with width history
    var(t): v = (dvar/2var) x, u = -D x / var, S the quadratic v-potential."""
    import numpy as np

    rho = np.exp(-(x**2) / (2.0 * var)) / np.sqrt(2.0 * np.pi * var)
    S = dvar_dt / (4.0 * var) * x**2
    v = dvar_dt / (2.0 * var) * x
    u = -D * x / var
    Q = D**2 * x**2 / (2.0 * var**2) - D**2 / var
    return {"rho": rho, "S": S, "v": v, "u": u, "b": v + u, "Q": Q}


def _snap_times(spec):
    import numpy as np

    n_steps = int(round(spec.t_end / spec.dt))
    ks = np.arange(spec.snapshot_stride, n_steps + 1, spec.snapshot_stride)
    times = [0.0] + [k * spec.dt for k in ks]
    if abs(times[-1] - spec.t_end) > 1e-12:
        times.append(spec.t_end)
    return np.asarray(times)


def _run_analytic(spec) -> RouteData:
    import numpy as np

    from . import analytic
    from .core import Grid1D, ScalarField
    from .diagnostics import energy_report, msd_from_fields
    from .fieldcalc import hydro_from_arrays

    p = spec.params
    grid = Grid1D(spec.x_min, spec.x_max, spec.n)
    x = grid.x
    times = _snap_times(spec)
    out = RouteData()

    omega = np.zeros_like(x)
    if spec.kind == "harmonic_recoil":
        omega = 0.5 * p.gamma**2 * x**2 - p.D * p.gamma
    elif spec.kind == "smoluchowski_ou":
        force = ScalarField(grid, -p.m * p.beta * p.gamma * x)
        omega = analytic.smoluchowski_omega(force, p).values

    if spec.kind == "free_brownian":
        sol = analytic.FreeBrownianSolution(p, dim=spec.dim)
    elif spec.kind == "free_recoil":
        sol = analytic.FreeRecoilSolution(p)
    elif spec.kind == "harmonic_recoil":
        sol = analytic.HarmonicRecoilSolution(p)

    hydro = []
    for t in times:
        if spec.kind in ("free_brownian", "free_recoil"):
            cols = sol.fields(x, t)
            cols.pop("P")
        elif spec.kind == "harmonic_recoil":
            var = sol.msd(t)
            s0 = sol.sigma0_sq
            dvar = p.gamma * np.sin(2 * p.gamma * t) * ((p.D / p.gamma) ** 2 / s0 - s0)
            cols = _gaussian_cols(x, var, dvar, p.D)
        else:  # smoluchowski_ou
            var = analytic.ou_variance(p, t)
            dvar = -2.0 * p.gamma * var + 2.0 * p.D
            cols = _gaussian_cols(x, var, dvar, p.D)
        out.slices.append((float(t), cols))
        if spec.dim == 1:
            hydro.append(hydro_from_arrays(
                float(t), grid, p.D, rho=cols["rho"], S=cols["S"], v=cols["v"],
                u=cols["u"], Q=cols["Q"], b=cols["b"], Omega=omega))

    rhos = [ScalarField(grid, c["rho"]) for _, c in out.slices]
    out.msd = msd_from_fields(times, rhos, dim=spec.dim, source="analytic")
    # 1D quadrature misstates energies of radial (dim=3) profiles; skip them
    out.energy = energy_report(hydro) if spec.dim == 1 else None
    out.rho_final = rhos[-1]
    return out


def _analytic_msd_fn(spec):
    """Closed-form msd of the built-in scenarios, or None."""
    from . import analytic

    p = spec.params
    if spec.kind == "free_brownian":
        return analytic.FreeBrownianSolution(p, dim=spec.dim).msd
    if spec.kind == "free_recoil":
        return analytic.FreeRecoilSolution(p).msd
    if spec.kind == "harmonic_recoil":
        return analytic.HarmonicRecoilSolution(p).msd
    if spec.kind == "smoluchowski_ou":
        return lambda t: analytic.ou_variance(p, t)
    return None


def _initial_density(spec, grid):
    import numpy as np

    from .core import ScalarField

    p = spec.params
    x = grid.x
    rho0 = np.exp(-(x**2) / p.alpha**2) / (np.sqrt(np.pi) * p.alpha)
    rho0 = rho0 / np.trapezoid(rho0, x)
    return ScalarField(grid, rho0)


def _run_schrodinger(spec) -> tuple:
    """Returns (RouteData, WaveSolution); the wave also feeds drift tables."""
    import numpy as np

    from .core import Grid1D, ScalarField
    from .diagnostics import energy_report, msd_from_fields
    from .pde import build_recoil_problem, madelung_decompose, solve_schrodinger

    p = spec.params
    grid = Grid1D(spec.x_min, spec.x_max, spec.n)
    omega = None
    if spec.kind == "harmonic_recoil":
        omega = ScalarField(grid, 0.5 * p.gamma**2 * grid.x**2 - p.D * p.gamma)
    elif spec.kind == "custom":
        omega = _load_omega_table(spec.omega_file, grid)

    prob = build_recoil_problem(
        _initial_density(spec, grid), omega, D=p.D, dt=spec.dt,
        t_end=spec.t_end, snapshot_stride=spec.snapshot_stride,
        drift_stride=spec.drift_stride if spec.drift_stride >= 1 else None)
    wave = solve_schrodinger(prob)
    logger.info("wave route: %d slices, norm drift %.2e",
                len(wave.times), wave.norm_drift_max)

    out = RouteData()
    hydro = []
    for t in wave.times:
        h = madelung_decompose(wave, float(t))
        hydro.append(h)
        cols = {"S": h.S.values, "v": h.v.values, "u": h.u.values,
                "b": h.b.values, "Q": h.Q.values}
        cols = _mask_sparse(h.rho.values, cols)
        cols["rho"] = h.rho.values
        out.slices.append((float(t), cols))
    rhos = [h.rho for h in hydro]
    out.msd = msd_from_fields(wave.times, rhos, source="pde")
    out.energy = energy_report(hydro)
    out.rho_final = rhos[-1]
    return out, wave


def _resolve_drift(spec, wave):
    from .analytic import FreeRecoilSolution
    from .sde import AnalyticRecoilDrift, SmoluchowskiDrift, ZeroDrift, ou_drift

    if spec.kind == "free_brownian":
        return ZeroDrift()
    if spec.kind == "smoluchowski_ou":
        return ou_drift(spec.params)
    if spec.kind in ("free_recoil", "harmonic_recoil"):
        if wave is not None:
            if wave.drift_table is None:
                raise SpecError("drift_stride must be >= 1 to tabulate the "
                                "wave drift for fp/sde routes")
            return wave.drift_table
        return AnalyticRecoilDrift(spec.params)
    return _load_drift_table(spec.drift_file)


def _load_drift_table(path):
    """Drift table CSV: first row `nan, x_0, ..., x_m`; then `t_i, b_i0, ...`."""
    import numpy as np

    from .core import Grid1D
    from .sde import TabulatedDrift

    try:
        data = np.loadtxt(path, delimiter=",", ndmin=2)
    except OSError as exc:
        raise SpecError(f"cannot read drift table {path!r}: {exc}") from exc
    if data.shape[0] < 3 or data.shape[1] < 9:
        raise SpecError("drift table needs >= 2 times and >= 8 grid points")
    xs, ts, values = data[0, 1:], data[1:, 0], data[1:, 1:]
    dxs = np.diff(xs)
    if np.any(dxs <= 0) or np.ptp(dxs) > 1e-9 * dxs[0]:
        raise SpecError("drift table x row must be uniformly increasing")
    grid = Grid1D(float(xs[0]), float(xs[-1]), xs.size)
    try:
        return TabulatedDrift(ts, grid, values)
    except ValueError as exc:
        raise SpecError(f"bad drift table: {exc}") from exc


def _load_omega_table(path, grid):
    """Omega table CSV: rows `x, omega`; interpolated onto the run grid."""
    import numpy as np

    from .core import ScalarField

    try:
        data = np.loadtxt(path, delimiter=",", ndmin=2)
    except OSError as exc:
        raise SpecError(f"cannot read omega table {path!r}: {exc}") from exc
    if data.ndim != 2 or data.shape[1] != 2:
        raise SpecError("omega table must have two columns: x, omega")
    xs, vals = data[:, 0], data[:, 1]
    if xs[0] > grid.x_min or xs[-1] < grid.x_max:
        raise SpecError("omega table must cover the run grid")
    return ScalarField(grid, np.interp(grid.x, xs, vals))


def _run_fp(spec, drift) -> RouteData:
    import numpy as np

    from .core import Grid1D, ScalarField
    from .diagnostics import msd_from_fields
    from .fieldcalc import osmotic_velocity, pressure_potential
    from .pde import FokkerPlanckProblem, solve_fokker_planck

    p = spec.params
    grid = Grid1D(spec.x_min, spec.x_max, spec.n)
    stride = max(1, int(round(spec.snapshot_stride * spec.dt / spec.fp_dt)))
    prob = FokkerPlanckProblem(grid=grid, drift=drift, D=p.D,
                               rho0=_initial_density(spec, grid),
                               t_end=spec.t_end, dt=spec.fp_dt,
                               snapshot_stride=stride)
    sol = solve_fokker_planck(prob)
    logger.info("fp route: %d slices, mass drift %.2e",
                len(sol.times), sol.mass_drift_max)

    out = RouteData()
    for t, rho in zip(sol.times, sol.rhos):
        u = osmotic_velocity(rho, p.D).values
        b = np.asarray(drift(grid.x, float(t)), dtype=float)
        Q, _ = pressure_potential(rho, p.D)
        cols = _mask_sparse(rho.values, {
            "S": np.full(grid.n, np.nan), "v": b - u, "u": u, "b": b,
            "Q": Q.values})
        cols["rho"] = rho.values
        out.slices.append((float(t), cols))
    out.msd = msd_from_fields(sol.times, sol.rhos, source="pde")
    out.rho_final = sol.rhos[-1]
    return out


def _run_sde(spec, drift) -> RouteData:
    from .core import Grid1D
    from .diagnostics import msd_from_ensemble
    from .sde import SdeConfig, evolve, kde_density, sample_initial

    p = spec.params
    state0 = sample_initial(p.alpha, spec.sde_n, seed=spec.seed)
    config = SdeConfig(n_particles=spec.sde_n, dt=spec.sde_dt,
                       t_end=spec.t_end, seed=spec.seed,
                       snapshot_stride=spec.sde_stride)
    snaps = evolve(state0, drift, p, config)
    logger.info("sde route: %d particles, %d snapshots", spec.sde_n, len(snaps))

    out = RouteData()
    out.snapshots = snaps
    out.msd = msd_from_ensemble(snaps)
    grid = Grid1D(spec.x_min, spec.x_max, spec.n)
    for s in snaps:
        kde = kde_density(s, grid)
        out.slices.append((float(s.t), {"rho": kde.values}))
    out.rho_final = kde_density(snaps[-1], grid)
    return out


def _dispersion_entry(spec, msd_series) -> dict:
    from .diagnostics import DispersionFitError, classify_dispersion

    crossover = spec.params.alpha**2 / (2.0 * spec.params.D)
    try:
        v = classify_dispersion(msd_series, crossover)
        return v.as_dict()
    except DispersionFitError as exc:
        if exc.exponent is not None:
            return {"regime": "ambiguous", "exponent": float(exc.exponent)}
        return {"regime": "too_short", "detail": str(exc)}


# ---------------------------------------------------------------------------
# gates and report


def _evaluate_gates(spec, results) -> list:
    """Ordered tolerance checks; each entry is a dict with a pass flag."""
    import numpy as np

    from .diagnostics import compare_fields

    tol = spec.tolerances
    gates = []

    def add(name, value, tolerance):
        gates.append({"name": name, "value": float(value),
                      "tolerance": float(tolerance),
                      "passed": bool(value <= tolerance)})
        if not gates[-1]["passed"]:
            logger.warning("gate %s failed: %.3e > %.3e", name, value, tolerance)
        return gates[-1]["passed"]

    def halt(ok):
        return spec.strict and not ok

    analytic = results.get("analytic")
    for route in ("schrodinger", "fp"):
        if analytic and route in results:
            cmp = compare_fields(results[route].rho_final, analytic.rho_final)
            if halt(add(f"linf_rho_{route}", cmp.linf, tol["linf_rho"])):
                return gates
    if analytic and "sde" in results:
        cmp = compare_fields(results["sde"].rho_final, analytic.rho_final)
        if halt(add("l1_rho_sde", cmp.l1, tol["l1_rho"])):
            return gates

    numeric = [r for r in ("schrodinger", "fp", "sde") if r in results]
    for i, a in enumerate(numeric):
        for b in numeric[i + 1:]:
            cmp = compare_fields(results[a].rho_final, results[b].rho_final)
            if halt(add(f"l1_rho_{a}_{b}", cmp.l1, tol["l1_rho"])):
                return gates

    msd_fn = _analytic_msd_fn(spec)
    if msd_fn is not None and "analytic" in spec.routes:
        for route in ("schrodinger", "fp"):
            if route in results:
                series = results[route].msd
                exact = float(msd_fn(series.times[-1]))
                rel = abs(series.values[-1] - exact) / abs(exact)
                if halt(add(f"msd_rel_{route}", rel, tol["msd_rel"])):
                    return gates
        if "sde" in results:
            series = results["sde"].msd
            exact = float(msd_fn(series.times[-1]))
            nsig = abs(series.values[-1] - exact) / float(series.stderr[-1])
            if halt(add("msd_nsigma_sde", nsig, tol["msd_nsigma"])):
                return gates

    if spec.kind in ("free_recoil", "harmonic_recoil"):
        for route in ("analytic", "schrodinger"):
            if route in results and results[route].energy is not None:
                tot = results[route].energy.total
                spread = float(np.max(tot) - np.min(tot))
                if halt(add(f"energy_drift_{route}", spread, tol["energy_drift"])):
                    return gates
    return gates


def _build_report(spec, results, gates) -> dict:
    p = spec.params
    report = {
        "name": spec.name,
        "scenario": spec.kind,
        "routes": list(spec.routes),
        "seed": spec.seed,
        "params": {"D": p.D, "m": p.m, "beta": p.beta, "alpha": p.alpha,
                   "gamma": p.gamma, "t0": p.t0, "dim": spec.dim},
        "grid": {"x_min": spec.x_min, "x_max": spec.x_max, "n": spec.n},
        "time": {"dt": spec.dt, "fp_dt": spec.fp_dt, "t_end": spec.t_end,
                 "sde_dt": spec.sde_dt},
        "tolerances": dict(spec.tolerances),
        "series": {}, "energy": {}, "dispersion": {},
        "comparisons": [],
        "gates": gates,
        "passed": all(g["passed"] for g in gates),
    }
    for route, data in results.items():
        report["series"][route] = data.msd.as_dict()
        if data.energy is not None:
            report["energy"][route] = data.energy.as_dict()
        report["dispersion"][route] = _dispersion_entry(spec, data.msd)

    from .diagnostics import compare_fields

    routes = [r for r in spec.routes if results[r].rho_final is not None]
    for i, a in enumerate(routes):
        for b in routes[i + 1:]:
            cmp = compare_fields(results[b].rho_final, results[a].rho_final)
            entry = {"a": a, "b": b, "t": spec.t_end}
            entry.update(cmp.as_dict())
            report["comparisons"].append(entry)
    return report


# ---------------------------------------------------------------------------
# artifact writing


def _fields_csv(slices, x) -> bytes:
    import numpy as np

    order = ("rho", "S", "v", "u", "b", "Q")
    lines = ["t,x,rho,S,v,u,b,Q"]
    for t, cols in slices:
        block = np.column_stack(
            [np.full(x.size, t), x]
            + [np.asarray(cols.get(k, np.full(x.size, np.nan)), dtype=float)
               for k in order])
        lines.extend(",".join("%.17g" % v for v in row) for row in block)
    return ("\n".join(lines) + "\n").encode()


def _msd_csv(series) -> bytes:
    err = series.stderr
    lines = ["t,msd,stderr"]
    for i, t in enumerate(series.times):
        e = 0.0 if err is None else float(err[i])
        lines.append("%.17g,%.17g,%.17g" % (t, series.values[i], e))
    return ("\n".join(lines) + "\n").encode()


def _energy_csv(report) -> bytes:
    lines = ["t,kinetic,osmotic,potential,total"]
    tot = report.total
    for i, t in enumerate(report.times):
        lines.append("%.17g,%.17g,%.17g,%.17g,%.17g" % (
            t, report.kinetic[i], report.osmotic[i], report.potential[i], tot[i]))
    return ("\n".join(lines) + "\n").encode()


def _particles_csv(snapshots) -> bytes:
    chunks = ["t,particle_index,x"]
    for s in snapshots:
        t = float(s.t)
        chunks.extend("%.17g,%d,%.17g" % (t, i, v)
                      for i, v in enumerate(s.positions))
    return ("\n".join(chunks) + "\n").encode()


PARTICLE_MAGIC = b"RLABPT01"


def _particles_binary(snapshots) -> bytes:
    """Magic, uint64 snapshot count, then per snapshot: float64 t, uint64 n,
    n little-endian float64 positions."""
    import struct

    import numpy as np

    parts = [PARTICLE_MAGIC, struct.pack("<Q", len(snapshots))]
    for s in snapshots:
        parts.append(struct.pack("<dQ", float(s.t), s.positions.size))
        parts.append(np.ascontiguousarray(s.positions, dtype="<f8").tobytes())
    return b"".join(parts)


def read_particles_binary(path):
    """Inverse of the binary writer; returns a list of (t, positions)."""
    import struct

    import numpy as np

    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != PARTICLE_MAGIC:
        raise ValueError(f"{path!r} is not a particle snapshot file")
    (count,) = struct.unpack_from("<Q", blob, 8)
    offset = 16
    out = []
    for _ in range(count):
        t, n = struct.unpack_from("<dQ", blob, offset)
        offset += 16
        xs = np.frombuffer(blob, dtype="<f8", count=n, offset=offset).copy()
        offset += 8 * n
        out.append((t, xs))
    return out


def _write_artifacts(spec, results, report) -> dict:
    import numpy as np

    from .core import Grid1D

    os.makedirs(spec.out_dir, exist_ok=True)
    x = Grid1D(spec.x_min, spec.x_max, spec.n).x
    files = {}

    for route, data in results.items():
        if data.slices:
            files[f"fields_{route}.csv"] = _fields_csv(data.slices, x)
        files[f"msd_{route}.csv"] = _msd_csv(data.msd)
        if data.energy is not None:
            files[f"energy_{route}.csv"] = _energy_csv(data.energy)
    if "sde" in results:
        if spec.fmt == "binary":
            files["particles_sde.bin"] = _particles_binary(results["sde"].snapshots)
        else:
            files["particles_sde.csv"] = _particles_csv(results["sde"].snapshots)

    files["report.json"] = (json.dumps(report, indent=2, sort_keys=True) + "\n").encode()

    manifest = {"name": spec.name, "seed": spec.seed, "files": {}}
    for name in sorted(files):
        blob = files[name]
        with open(os.path.join(spec.out_dir, name), "wb") as fh:
            fh.write(blob)
        manifest["files"][name] = {
            "sha256": hashlib.sha256(blob).hexdigest(), "bytes": len(blob)}
    blob = (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode()
    with open(os.path.join(spec.out_dir, "manifest.json"), "wb") as fh:
        fh.write(blob)
    return manifest


# ---------------------------------------------------------------------------
# subcommands


def run_scenario(spec: ScenarioSpec) -> int:
    from .pde import SolverError
    from .sde import DriftDomainError

    results = {}
    wave = None
    try:
        if "schrodinger" in spec.routes:
            results["schrodinger"], wave = _run_schrodinger(spec)
        drift = None
        if "fp" in spec.routes or "sde" in spec.routes:
            drift = _resolve_drift(spec, wave)
        if "fp" in spec.routes:
            results["fp"] = _run_fp(spec, drift)
        if "sde" in spec.routes:
            results["sde"] = _run_sde(spec, drift)
        if "analytic" in spec.routes:
            results["analytic"] = _run_analytic(spec)
    except SpecError:
        raise
    except (SolverError, DriftDomainError, ValueError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3

    gates = _evaluate_gates(spec, results)
    report = _build_report(spec, results, gates)
    _write_artifacts(spec, results, report)

    for g in gates:
        status = "pass" if g["passed"] else "FAIL"
        print(f"{status}  {g['name']}: {g['value']:.3e} (tolerance {g['tolerance']:.3e})")
    n_fail = sum(not g["passed"] for g in gates)
    print(f"{spec.name}: {len(gates) - n_fail}/{len(gates)} gates passed; "
          f"artifacts in {spec.out_dir}")
    return 0 if n_fail == 0 else 1


def list_scenarios(as_json: bool) -> int:
    rows = [{"name": kind, "routes": list(_ALLOWED_ROUTES[kind]),
             "summary": _SCENARIO_SUMMARIES[kind]}
            for kind in SCENARIOS if kind != "custom"]
    if as_json:
        print(json.dumps(rows, indent=2))
        return 0
    widths = (16, 30)
    print(f"{'scenario':<{widths[0]}} {'routes':<{widths[1]}} dynamics")
    for r in rows:
        print(f"{r['name']:<{widths[0]}} {','.join(r['routes']):<{widths[1]}} "
              f"{r['summary']}")
    return 0


def compare_runs(dir_a: str, dir_b: str) -> int:
    manifests = []
    for d in (dir_a, dir_b):
        path = os.path.join(d, "manifest.json")
        try:
            with open(path, "rb") as fh:
                manifests.append(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            print(f"cannot read {path}: {exc}", file=sys.stderr)
            return 2
    fa, fb = manifests[0]["files"], manifests[1]["files"]
    names = sorted(set(fa) | set(fb))
    identical = True
    for name in names:
        if name not in fa:
            status, same = "only in B", False
        elif name not in fb:
            status, same = "only in A", False
        elif fa[name]["sha256"] == fb[name]["sha256"]:
            status, same = "identical", True
        else:
            status, same = "DIFFERS", False
        identical &= same
        print(f"{name:<24} {status}")
    print("runs are byte-identical" if identical else "runs differ")
    return 0 if identical else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="recoillab",
        description="cross-validated scenario runner for overdamped and "
                    "recoil Brownian dynamics")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="log solver progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a scenario spec file")
    p_run.add_argument("spec", help="path to the .cfg spec")
    p_run.add_argument("--out", help="output directory (overrides spec)")
    p_run.add_argument("--seed", type=int, help="run seed (overrides spec)")
    p_run.add_argument("--format", choices=("csv", "binary"),
                       help="particle snapshot format (overrides spec)")
    p_run.add_argument("--strict", action="store_true",
                       help="stop at the first failed tolerance gate")

    p_list = sub.add_parser("list", help="show built-in scenarios")
    p_list.add_argument("--json", action="store_true",
                        help="machine-readable output")

    p_cmp = sub.add_parser("compare", help="diff two run directories by hash")
    p_cmp.add_argument("run_a")
    p_cmp.add_argument("run_b")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "list":
        return list_scenarios(args.json)
    if args.command == "compare":
        return compare_runs(args.run_a, args.run_b)
    try:
        spec = load_spec(args.spec, out_dir=args.out, seed=args.seed,
                         fmt=args.format, strict=args.strict)
        return run_scenario(spec)
    except SpecError as exc:
        print(f"invalid spec: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
