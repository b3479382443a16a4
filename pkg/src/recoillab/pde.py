"""Grid solvers: Fokker-Planck in flux form and the linearizing wave equation.

Both march with Crank-Nicolson. The Fokker-Planck operator uses Chang-Cooper
flux weights, which keep the density positive without clipping and reproduce
the exact nodal Boltzmann profile for linear drift. The wave solver is the
Cayley form (I + i dt/2 H) psi' = (I - i dt/2 H) psi, unitary in the discrete
l2 norm, so the norm ledger holds to solver roundoff.

The bridge between the two descriptions is ``madelung_decompose``: rho = |psi|^2
and S = 2D * theta with the phase theta unwrapped from x = 0 outward, giving
v = grad S and the full hydrodynamic slice.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import trapezoid
from scipy.sparse import diags
from scipy.sparse.linalg import splu

from .core import ComplexField, Grid1D, ScalarField, gradient
from .fieldcalc import HydroFields, hydro_from_rho_S
from .sde import DriftSource, TabulatedDrift

logger = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """A stability or conservation ledger was violated mid-run."""


class MadelungError(RuntimeError):
    """The wave phase is too poorly resolved to define velocities."""


# ---------------------------------------------------------------------------
# Fokker-Planck
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FokkerPlanckProblem:
    """d(rho)/dt = -d/dx [ b rho - D d(rho)/dx ] with zero-flux boundaries."""

    grid: Grid1D
    rho0: ScalarField
    drift: DriftSource
    D: float
    dt: float
    t_end: float
    snapshot_stride: int = 1

    def __post_init__(self):
        if self.D <= 0:
            raise ValueError("D must be > 0")
        if self.dt <= 0 or self.t_end <= 0:
            raise ValueError("dt and t_end must be > 0")
        if self.snapshot_stride < 1:
            raise ValueError("snapshot_stride must be >= 1")
        if np.any(self.rho0.values < 0):
            raise ValueError("rho0 must be >= 0")
        mass = trapezoid(self.rho0.values, dx=self.grid.dx)
        if abs(mass - 1.0) > 1e-8:
            raise ValueError(f"rho0 must be normalized, integral = {mass}")
        explicit_bound = self.grid.dx**2 / (2.0 * self.D)
        logger.info(
            "fokker-planck dt=%.3g, explicit-predictor stability bound dx^2/(2D)=%.3g (%s)",
            self.dt, explicit_bound,
            "respected" if self.dt <= explicit_bound else "exceeded; implicit scheme relaxes it",
        )


@dataclass(frozen=True)
class FpSolution:
    grid: Grid1D
    times: np.ndarray
    rhos: list
    mass_drift_max: float
    min_density: float

    def rho_at(self, t: float) -> ScalarField:
        idx = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[idx] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"no stored slice at t={t}; stored: {self.times}")
        return self.rhos[idx]


def _chang_cooper_delta(w: np.ndarray) -> np.ndarray:
    """Weight of the left node in the advective flux
    F = b [(1-delta) rho_{i+1} + delta rho_i] - D (rho_{i+1}-rho_i)/dx,

        delta(w) = 1 + 1/expm1(w) - 1/w,     w = b dx / D,

    the unique choice whose zero-flux state has the exact nodal ratio
    rho_{i+1}/rho_i = e^w (discrete Boltzmann profile). Upwind in both
    limits; series value 1/2 + w/12 near w = 0."""
    w = np.clip(w, -500.0, 500.0)  # overflow guard; weights saturate anyway
    small = np.abs(w) < 1e-6
    ws = np.where(small, 1.0, w)
    delta = 1.0 + 1.0 / np.expm1(ws) - 1.0 / ws
    return np.where(small, 0.5 + w / 12.0, delta)


def _fp_operator(bhalf: np.ndarray, D: float, dx: float, n: int):
    """Tridiagonal flux-divergence operator A with rho_dot = A rho.

    Returns (lower, diag, upper): lower[i] = A[i+1, i], upper[i] = A[i, i+1].
    Zero-flux boundaries; columns of A sum to zero, so Sum(rho)*dx is
    conserved by any consistent time integrator.
    """
    delta = _chang_cooper_delta(bhalf * dx / D)
    inflow = (bhalf * delta + D / dx) / dx          # coefficient of rho_i in F_{i+1/2}
    outflow = (D / dx - bhalf * (1.0 - delta)) / dx  # coefficient of -rho_{i+1} in F_{i+1/2}
    lower = inflow
    upper = outflow
    diag = np.zeros(n)
    diag[:-1] -= inflow
    diag[1:] += bhalf * (1.0 - delta) / dx - D / dx**2
    return lower, diag, upper


def _tridiag_matvec(lower, diag, upper, v):
    out = diag * v
    out[1:] += lower * v[:-1]
    out[:-1] += upper * v[1:]
    return out


def solve_fokker_planck(p: FokkerPlanckProblem) -> FpSolution:
    """Crank-Nicolson over the Chang-Cooper operator.

    For time-dependent drift the implicit side uses A(t+dt) and the explicit
    side A(t), which keeps the march second order. Raises SolverError when
    the mass ledger moves more than 1e-12 in a step or the density undershoots
    below -1e-12.
    """
    grid, dx, n = p.grid, p.grid.dx, p.grid.n
    x_half = grid.x[:-1] + 0.5 * dx
    kappa = 0.5 * p.dt
    n_steps = int(round(p.t_end / p.dt))
    if n_steps < 1 or abs(n_steps * p.dt - p.t_end) > 1e-9 * p.t_end:
        raise ValueError("t_end must be a positive integer multiple of dt")

    time_dependent = getattr(p.drift, "time_dependent", True)

    def operator(t):
        return _fp_operator(p.drift(x_half, t), p.D, dx, n)

    def factorize(tri):
        lower, diag, upper = tri
        M = diags([-kappa * lower, 1.0 - kappa * diag, -kappa * upper], [-1, 0, 1], format="csc")
        return splu(M)

    tri_now = operator(0.0)
    lu = factorize(tri_now) if not time_dependent else None

    rho = p.rho0.values.copy()
    mass = float(np.sum(rho) * dx)
    mass_drift_max = 0.0
    min_density = float(np.min(rho))
    times = [0.0]
    rhos = [ScalarField(grid, rho)]
    for k in range(n_steps):
        t_next = (k + 1) * p.dt
        rhs = rho + kappa * _tridiag_matvec(*tri_now, rho)
        if time_dependent:
            tri_next = operator(t_next)
            rho = factorize(tri_next).solve(rhs)
            tri_now = tri_next
        else:
            rho = lu.solve(rhs)
        new_mass = float(np.sum(rho) * dx)
        mass_drift_max = max(mass_drift_max, abs(new_mass - mass))
        if abs(new_mass - mass) > 1e-12:
            raise SolverError(f"mass ledger moved {new_mass - mass:.3e} in one step at t={t_next}")
        mass = new_mass
        lo = float(np.min(rho))
        min_density = min(min_density, lo)
        if lo < -1e-12:
            raise SolverError(f"density undershoot {lo:.3e} at t={t_next}")
        if (k + 1) % p.snapshot_stride == 0 or k == n_steps - 1:
            times.append(t_next)
            rhos.append(ScalarField(grid, rho))
    return FpSolution(grid=grid, times=np.asarray(times), rhos=rhos,
                      mass_drift_max=mass_drift_max, min_density=min_density)


# ---------------------------------------------------------------------------
# Linearizing wave equation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SchrodingerProblem:
    """i d(psi)/dt = -D d^2(psi)/dx^2 + (Omega/(2D)) psi, homogeneous Dirichlet.

    Omega must be a static field (or None for free dynamics); time-dependent
    potentials are not supported by this solver. psi0 must be normalized:
    integral |psi0|^2 dx = 1.
    """

    grid: Grid1D
    psi0: ComplexField
    Omega: Optional[ScalarField]
    D: float
    dt: float
    t_end: float
    snapshot_stride: int = 1
    drift_stride: Optional[int] = None
    edge_tol: float = 1e-10

    def __post_init__(self):
        if self.D <= 0:
            raise ValueError("D must be > 0")
        if self.dt <= 0 or self.t_end <= 0:
            raise ValueError("dt and t_end must be > 0")
        if self.snapshot_stride < 1:
            raise ValueError("snapshot_stride must be >= 1")
        if self.drift_stride is not None and self.drift_stride < 1:
            raise ValueError("drift_stride must be >= 1")
        norm = trapezoid(np.abs(self.psi0.values) ** 2, dx=self.grid.dx)
        if abs(norm - 1.0) > 1e-8:
            raise ValueError(f"psi0 must be l2-normalized, integral = {norm}")
        if self.Omega is not None and self.Omega.grid != self.grid:
            raise ValueError("Omega must live on the problem grid")


@dataclass(frozen=True)
class WaveSolution:
    grid: Grid1D
    times: np.ndarray
    psis: list
    D: float
    Omega: Optional[ScalarField]
    drift_table: Optional[TabulatedDrift]
    norm_drift_max: float

    def psi_at(self, t: float) -> ComplexField:
        idx = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[idx] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"no stored slice at t={t}; stored: {self.times}")
        return self.psis[idx]


def solve_schrodinger(p: SchrodingerProblem) -> WaveSolution:
    """Cayley (Crank-Nicolson) march; unitary, so the norm ledger drifts only
    by solver roundoff (<= 1e-12 per step enforced). Aborts when probability
    reaches the Dirichlet boundary (edge density above edge_tol * peak)."""
    grid, dx, n = p.grid, p.grid.dx, p.grid.n
    omega = np.zeros(n) if p.Omega is None else p.Omega.values
    h_diag = 2.0 * p.D / dx**2 + omega / (2.0 * p.D)
    h_off = -p.D / dx**2
    kappa = 0.5j * p.dt
    M = diags([kappa * h_off * np.ones(n - 1), 1.0 + kappa * h_diag,
               kappa * h_off * np.ones(n - 1)], [-1, 0, 1], format="csc")
    lu = splu(M)

    n_steps = int(round(p.t_end / p.dt))
    if n_steps < 1 or abs(n_steps * p.dt - p.t_end) > 1e-9 * p.t_end:
        raise ValueError("t_end must be a positive integer multiple of dt")

    psi = p.psi0.values.copy()
    norm = float(np.sum(np.abs(psi) ** 2) * dx)
    norm_drift_max = 0.0
    times = [0.0]
    psis = [ComplexField(grid, psi)]
    drift_times, drift_rows = [], []

    def record_drift(t, values):
        drift_times.append(t)
        drift_rows.append(_drift_slice(values, grid, p.D))

    if p.drift_stride is not None:
        record_drift(0.0, psi)

    for k in range(n_steps):
        t_next = (k + 1) * p.dt
        hpsi = h_diag * psi
        hpsi[1:] += h_off * psi[:-1]
        hpsi[:-1] += h_off * psi[1:]
        psi = lu.solve(psi - kappa * hpsi)

        prob = np.abs(psi) ** 2
        new_norm = float(np.sum(prob) * dx)
        norm_drift_max = max(norm_drift_max, abs(new_norm - norm))
        if abs(new_norm - norm) > 1e-12:
            raise SolverError(f"norm ledger moved {new_norm - norm:.3e} in one step at t={t_next}")
        norm = new_norm
        peak = float(np.max(prob))
        if max(prob[0], prob[-1]) > p.edge_tol * peak:
            raise SolverError(
                f"wave reached the boundary at t={t_next} "
                f"(edge density {max(prob[0], prob[-1]) / peak:.2e} of peak); widen the domain"
            )
        if p.drift_stride is not None and ((k + 1) % p.drift_stride == 0 or k == n_steps - 1):
            record_drift(t_next, psi)
        if (k + 1) % p.snapshot_stride == 0 or k == n_steps - 1:
            times.append(t_next)
            psis.append(ComplexField(grid, psi))

    table = None
    if p.drift_stride is not None:
        table = TabulatedDrift(np.asarray(drift_times), grid, np.asarray(drift_rows))
    return WaveSolution(grid=grid, times=np.asarray(times), psis=psis, D=p.D,
                        Omega=p.Omega, drift_table=table, norm_drift_max=norm_drift_max)


def _unwrap_from_center(theta_raw: np.ndarray, grid: Grid1D) -> np.ndarray:
    """Unwrap the phase starting at the node closest to x = 0 and walking
    outward in both directions, so the anchor is where the density (and thus
    the raw phase) is most trustworthy."""
    i0 = int(np.argmin(np.abs(grid.x)))
    theta = np.empty_like(theta_raw)
    theta[i0:] = np.unwrap(theta_raw[i0:])
    theta[: i0 + 1] = np.unwrap(theta_raw[i0::-1])[::-1]
    return theta


def _check_phase_resolution(theta: np.ndarray, rho: np.ndarray,
                            dense_frac: float = 1e-6, jump_tol: float = 0.95 * np.pi):
    """Under-resolution aliases neighbouring phase differences toward the
    +-pi boundary. Jumps at or beyond pi are unrecoverable, so anything within
    5% of the limit inside the high-density region is treated as an error."""
    dense = rho > dense_frac * np.max(rho)
    pair = dense[1:] & dense[:-1]
    if not np.any(pair):
        return
    jumps = np.abs(np.diff(theta))[pair]
    worst = float(np.max(jumps))
    if worst >= jump_tol:
        raise MadelungError(
            f"phase jump {worst:.3f} rad between adjacent high-density nodes "
            f"(aliasing limit pi = {np.pi:.3f}); refine the grid"
        )


def _drift_slice(psi: np.ndarray, grid: Grid1D, D: float, mask_frac: float = 1e-12) -> np.ndarray:
    """Forward drift b = v + u of one wave slice, zeroed where rho < mask_frac
    of peak (the phase there is numerical noise; the region carries a mass
    fraction below mask_frac, invisible at the tested tolerances)."""
    rho = np.abs(psi) ** 2
    peak = float(np.max(rho))
    floor = mask_frac * peak
    theta = _unwrap_from_center(np.angle(psi), grid)
    S = ScalarField(grid, 2.0 * D * theta)
    v = np.gradient(S.values, grid.dx, edge_order=2)
    u = D * np.gradient(np.log(np.maximum(rho, floor)), grid.dx, edge_order=2)
    return np.where(rho >= floor, v + u, 0.0)


def madelung_decompose(w: WaveSolution, t: float,
                       dense_frac: float = 1e-6, jump_tol: float = 0.95 * np.pi) -> HydroFields:
    """Hydrodynamic slice of the wave at a stored time: rho = |psi|^2,
    S = 2D * theta (phase unwrapped from the center), everything else derived
    on the mesh. Raises MadelungError when the phase is under-resolved."""
    psi = w.psi_at(t).values
    rho = np.abs(psi) ** 2
    theta = _unwrap_from_center(np.angle(psi), w.grid)
    _check_phase_resolution(theta, rho, dense_frac, jump_tol)
    return hydro_from_rho_S(
        t=float(w.times[int(np.argmin(np.abs(w.times - t)))]),
        rho=ScalarField(w.grid, rho),
        S=ScalarField(w.grid, 2.0 * w.D * theta),
        D=w.D,
        Omega=w.Omega,
    )


def build_recoil_problem(rho0: ScalarField, Omega: Optional[ScalarField], D: float,
                         dt: float, t_end: float, snapshot_stride: int = 1,
                         drift_stride: Optional[int] = None,
                         edge_tol: float = 1e-10) -> SchrodingerProblem:
    """Wave problem for back-reacting dynamics started from density rho0 with
    zero initial velocity potential: psi0 = sqrt(rho0), so the initial drift
    is purely osmotic, b(x, 0) = D grad(ln rho0)."""
    psi0 = ComplexField(rho0.grid, np.sqrt(rho0.values).astype(complex))
    return SchrodingerProblem(grid=rho0.grid, psi0=psi0, Omega=Omega, D=D, dt=dt,
                              t_end=t_end, snapshot_stride=snapshot_stride,
                              drift_stride=drift_stride, edge_tol=edge_tol)


def tabulate_drift(w: WaveSolution, mask_frac: float = 1e-12) -> TabulatedDrift:
    """Drift table from the stored slices of a wave solution (for solves run
    without drift_stride)."""
    rows = [_drift_slice(f.values, w.grid, w.D, mask_frac) for f in w.psis]
    return TabulatedDrift(w.times, w.grid, np.asarray(rows))
