"""Session fixtures for the expensive solver runs shared across test modules.

Every fixture here is deterministic: fixed grids, steps, and seeds. The
acceptance tests and the module tests deliberately consume the same runs so
the suite exercises one set of artifacts from several angles.
"""

import numpy as np
import pytest

from recoillab.core import Grid1D, PhysicalParams, ScalarField
from recoillab.analytic import FreeRecoilSolution, HarmonicRecoilSolution
from recoillab import pde, sde

from helpers import normalized_density


@pytest.fixture(scope="session")
def recoil_params():
    return PhysicalParams(D=1.0, alpha=1.0)


@pytest.fixture(scope="session")
def free_recoil(recoil_params):
    return FreeRecoilSolution(recoil_params)


@pytest.fixture(scope="session")
def recoil_wave(free_recoil):
    """Free back-reacting run on [-40, 40], n=4001, dt=1e-4, to t=2.

    Slices are stored every 0.25 time units; the forward drift is tabulated
    every 100 steps for the ensemble and Fokker-Planck consumers.
    """
    grid = Grid1D(-40.0, 40.0, 4001)
    rho0 = normalized_density(grid, free_recoil.rho(grid.x, 0.0))
    problem = pde.build_recoil_problem(rho0, None, 1.0, 1e-4, 2.0,
                                       snapshot_stride=2500, drift_stride=100)
    return pde.solve_schrodinger(problem)


@pytest.fixture(scope="session")
def recoil_fp(recoil_wave, free_recoil):
    """Fokker-Planck evolution under the wave run's tabulated drift, to t=1."""
    grid = recoil_wave.grid
    rho0 = normalized_density(grid, free_recoil.rho(grid.x, 0.0))
    problem = pde.FokkerPlanckProblem(
        grid=grid, rho0=rho0, drift=recoil_wave.drift_table, D=1.0,
        dt=1e-3, t_end=1.0, snapshot_stride=1000)
    return pde.solve_fokker_planck(problem)


@pytest.fixture(scope="session")
def recoil_ensemble(recoil_wave, recoil_params):
    """10^5-particle ensemble driven by the wave run's tabulated drift.

    Snapshots every 0.25 time units up to t=2; seed 1.
    """
    config = sde.SdeConfig(n_particles=100000, dt=1e-3, t_end=2.0, seed=1,
                           snapshot_stride=250)
    initial = sde.sample_initial(recoil_params.alpha, config.n_particles,
                                 seed=config.seed)
    return sde.evolve(initial, recoil_wave.drift_table, recoil_params, config)


@pytest.fixture(scope="session")
def wide_wave(free_recoil):
    """Long free-recoil wave run to t=20 on [-250, 250] (kinetic asymptote)."""
    grid = Grid1D(-250.0, 250.0, 10001)
    rho0 = normalized_density(grid, free_recoil.rho(grid.x, 0.0))
    problem = pde.build_recoil_problem(rho0, None, 1.0, 1e-3, 20.0,
                                       snapshot_stride=1000)
    return pde.solve_schrodinger(problem)


@pytest.fixture(scope="session")
def breathing_solution():
    return HarmonicRecoilSolution(PhysicalParams(D=1.0, alpha=1.0, gamma=1.0))


@pytest.fixture(scope="session")
def breathing_wave(breathing_solution):
    """Unmatched harmonic run (gamma=1, alpha=1): width breathes with period
    pi. Three periods, slices every 25 steps."""
    sol = breathing_solution
    grid = Grid1D(-12.0, 12.0, 4801)
    rho0 = normalized_density(grid, sol.rho(grid.x, 0.0))
    omega = ScalarField(grid, sol.omega(grid.x))
    problem = pde.build_recoil_problem(rho0, omega, sol.params.D, 1e-3, 9.425,
                                       snapshot_stride=25)
    return pde.solve_schrodinger(problem)


@pytest.fixture(scope="session")
def matched_solution():
    return HarmonicRecoilSolution(PhysicalParams(D=1.0, alpha=1.0, gamma=2.0))


@pytest.fixture(scope="session")
def matched_wave(matched_solution):
    """Matched harmonic run (alpha^2 = 2D/gamma): stationary width over
    three periods."""
    sol = matched_solution
    grid = Grid1D(-12.0, 12.0, 8001)
    rho0 = normalized_density(grid, sol.rho(grid.x, 0.0))
    omega = ScalarField(grid, sol.omega(grid.x))
    problem = pde.build_recoil_problem(rho0, omega, sol.params.D, 1e-3, 4.712,
                                       snapshot_stride=25)
    return pde.solve_schrodinger(problem)


@pytest.fixture(scope="session")
def zero_drift_snapshots(recoil_params):
    """10^6 drift-free particles from the alpha=1 cloud, snapshots every 0.1."""
    config = sde.SdeConfig(n_particles=1000000, dt=1e-3, t_end=1.0,
                           seed=20260814, snapshot_stride=100)
    initial = sde.sample_initial(recoil_params.alpha, config.n_particles,
                                 seed=config.seed)
    return sde.evolve(initial, sde.ZeroDrift(), recoil_params, config)


@pytest.fixture(scope="session")
def ou_params():
    return PhysicalParams(D=1.0, alpha=2.0, gamma=1.0)


@pytest.fixture(scope="session")
def ou_fp(ou_params):
    """Linear-drift (b = -gamma x) Fokker-Planck run to t=10, long enough to
    reach the stationary profile from the alpha=2 cloud."""
    grid = Grid1D(-12.0, 12.0, 2401)
    rho0 = normalized_density(grid, np.exp(-grid.x**2 / ou_params.alpha**2))
    problem = pde.FokkerPlanckProblem(
        grid=grid, rho0=rho0, drift=sde.ou_drift(ou_params), D=ou_params.D,
        dt=1e-3, t_end=10.0, snapshot_stride=1000)
    return pde.solve_fokker_planck(problem)
