"""Shared fixtures.  Expensive runs (benchmark, fine reference, sweep) are
session-scoped and reused by the module tests and the acceptance suite."""

from dataclasses import replace

import numpy as np
import pytest

from euler_align import Grid, SolverConfig, State, run
from euler_align.alignment import AlignmentForm
from euler_align.dynamics import make_reference
from euler_align.kernel import KernelConfig, build_kernel_table
from euler_align.measures import collect_ensemble

BENCH_RHO_AMPS = (0.05, 0.02)
BENCH_U_AMPS = (0.05,)
SWEEP_EPSILONS = (1e-2, 3e-3, 1e-3, 3e-4, 1e-4)


def cosine_state(grid, rho_amps=BENCH_RHO_AMPS, u_amps=BENCH_U_AMPS):
    x = grid.coords()[0]
    rho = np.ones(grid.shape)
    u = np.zeros((grid.d,) + grid.shape)
    for k, a in enumerate(rho_amps, start=1):
        rho += a * np.cos(k * x)
    for k, b in enumerate(u_amps, start=1):
        u[0] += b * np.sin(k * x)
    return State(0.0, rho, u)


def smooth_random_field(grid, rng, kmax=5, amp=1.0):
    x = grid.coords()
    f = np.zeros(grid.shape)
    for k in range(1, kmax + 1):
        f += amp * (rng.normal() * np.cos(k * x[0]) + rng.normal() * np.sin(k * x[0]))
        if grid.d == 2:
            f += amp * rng.normal() * np.cos(k * x[1])
    return f


@pytest.fixture(scope="session")
def grid64():
    return Grid(1, 64)


@pytest.fixture(scope="session")
def form64(grid64):
    cfg = KernelConfig(d=1, lam=0.5, M=8, N=64)
    return AlignmentForm(build_kernel_table(cfg, grid64), grid64)


@pytest.fixture(scope="session")
def grid8():
    return Grid(1, 8)


@pytest.fixture(scope="session")
def form8(grid8):
    cfg = KernelConfig(d=1, lam=0.5, M=2, N=8, near_shells=1)
    return AlignmentForm(build_kernel_table(cfg, grid8), grid8)


@pytest.fixture(scope="session")
def bench_cfg():
    return SolverConfig(d=1, N=256, gamma=2.0, lam=0.5, epsilon=1e-3, m=1,
                        t_end=1.0, n_snapshots=50)


@pytest.fixture(scope="session")
def bench_initial(bench_cfg):
    return cosine_state(bench_cfg.grid())


@pytest.fixture(scope="session")
def bench_traj(bench_cfg, bench_initial):
    return run(bench_cfg, bench_initial)


@pytest.fixture(scope="session")
def bench_traj_half_dt(bench_cfg, bench_initial, bench_traj):
    # fixed dt at half the adaptive step observed in the full run
    dt_half = 0.5 * float(np.min(bench_traj.diag["dt"][1:]))
    cfg = replace(bench_cfg, dt_fixed=dt_half)
    return run(cfg, bench_initial)


@pytest.fixture(scope="session")
def fine_reference(bench_cfg):
    cfg_fine = replace(bench_cfg, N=1024, epsilon=0.0)
    return make_reference(cfg_fine, cosine_state(cfg_fine.grid()))


@pytest.fixture(scope="session")
def bench_form(bench_cfg):
    return bench_cfg.build_form()


@pytest.fixture(scope="session")
def sweep_measure(bench_cfg, bench_initial):
    return collect_ensemble(bench_cfg, SWEEP_EPSILONS, bench_initial)
