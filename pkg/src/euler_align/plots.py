"""Figure rendering for the report paths.

Figures are written next to the delimited output; every plot has a CSV
twin, so disabling plots loses no data.
"""

import math

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
_FIGSIZE = (6.0, 6.0 * _GOLDEN)

plt.rcParams["figure.figsize"] = _FIGSIZE
plt.rcParams["font.size"] = 9
plt.rcParams["axes.grid"] = True
plt.rcParams["grid.alpha"] = 0.3


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_diagnostics(path, traj):
    d = traj.diag
    fig, axes = plt.subplots(1, 3, figsize=(_FIGSIZE[0] * 1.8, _FIGSIZE[1]))
    axes[0].plot(d["t"], d["energy"], label="E(t)")
    axes[0].plot(d["t"], d["energy"] + d["acc_align"] + d["acc_visc"],
                 "--", label="E + dissip")
    axes[0].set_xlabel("t")
    axes[0].set_ylabel("energy")
    axes[0].legend()
    axes[1].plot(d["t"], np.abs(d["residual"]) / max(d["energy"][0], 1e-300))
    axes[1].set_yscale("log")
    axes[1].set_xlabel("t")
    axes[1].set_ylabel("|budget residual| / E(0)")
    axes[2].plot(d["t"], d["min_rho"])
    axes[2].set_xlabel("t")
    axes[2].set_ylabel("min density")
    return _save(fig, path)


def plot_relative_energy(path, report):
    fig, axes = plt.subplots(1, 2, figsize=(_FIGSIZE[0] * 1.4, _FIGSIZE[1]))
    axes[0].semilogy(report.times, np.maximum(report.E_rel, 1e-300), label="E_rel")
    axes[0].semilogy(report.times, np.maximum(report.D_rel_accum, 1e-300),
                     "--", label="D_rel accum")
    axes[0].set_xlabel("t")
    axes[0].legend()
    if not report.zero_test_mode:
        axes[1].plot(report.times, report.sigma, label="Sigma measured")
        axes[1].plot(report.times, report.gronwall_bound, "--", label="bound")
        axes[1].set_xlabel("t")
        axes[1].legend()
    else:
        axes[1].semilogy(report.times, np.maximum(report.E_rel, 1e-300))
        axes[1].set_title("zero test")
        axes[1].set_xlabel("t")
    return _save(fig, path)


def plot_sweep(path, epsilons, final_E_rel):
    fig, ax = plt.subplots()
    ax.loglog(epsilons, final_E_rel, "o-")
    ax.set_xlabel("epsilon")
    ax.set_ylabel("final relative energy vs inviscid reference")
    return _save(fig, path)


def plot_defect(path, report):
    fig, ax = plt.subplots()
    ax.plot(report.times, report.defect, label="defect D")
    ax.axhline(-report.tolerance, ls="--", c="r", label="-tol")
    ax.set_xlabel("t")
    ax.legend()
    return _save(fig, path)


def plot_kernel_certificate(path, form, calibration, lam, kmax):
    from .fields import fractional_seminorm_fourier
    grid = form.grid
    x = grid.coords()
    ks = np.arange(1, kmax + 1)
    quad = np.array([form.quadrature_seminorm(np.cos(k * x[0])) for k in ks])
    four = np.array([calibration * fractional_seminorm_fourier(
        grid, np.cos(k * x[0]), lam) for k in ks])
    fig, axes = plt.subplots(1, 2, figsize=(_FIGSIZE[0] * 1.4, _FIGSIZE[1]))
    axes[0].loglog(ks, quad, "o", ms=3, label="kernel quadrature")
    axes[0].loglog(ks, four, "-", label="calibrated spectral")
    axes[0].set_xlabel("mode k")
    axes[0].legend()
    axes[1].semilogy(ks, np.abs(quad - four) / quad)
    axes[1].set_xlabel("mode k")
    axes[1].set_ylabel("relative deviation")
    return _save(fig, path)
