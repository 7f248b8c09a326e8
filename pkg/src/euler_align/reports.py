"""Delimited report files.

Every CSV is written with repr-exact floats so that reruns of identical
configurations produce byte-identical outputs.
"""

import os

import numpy as np

from .dynamics import diag_columns


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return repr(float(x))


def write_csv(path, columns, rows):
    with open(path, "w") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return path


def write_diagnostics(run_dir, traj):
    cols = diag_columns(traj.config.d)
    rows = zip(*(traj.diag[c] for c in cols))
    return write_csv(os.path.join(run_dir, "diagnostics.csv"), cols, rows)


def write_relative_energy(run_dir, report, name="relative_energy.csv"):
    cols = ("t", "E_rel", "D_rel_accum", "sigma_measured", "gronwall_bound")
    rows = zip(report.times, report.E_rel, report.D_rel_accum,
               report.sigma, report.gronwall_bound)
    return write_csv(os.path.join(run_dir, name), cols, rows)


def write_defect(run_dir, report, name="defect.csv"):
    cols = ("t", "measure_energy", "tensor_dissipation_accum", "defect")
    rows = zip(report.times, report.measure_energy,
               report.tensor_dissipation_accum, report.defect)
    return write_csv(os.path.join(run_dir, name), cols, rows)


def write_compatibility(run_dir, report, name="compatibility.csv"):
    cols = ("t", "lhs_accum", "rhs_core_accum")
    rows = zip(report.times, report.lhs, report.rhs_core)
    return write_csv(os.path.join(run_dir, name), cols, rows)


def write_kernel_certificates(path, certs):
    cols = ("lambda", "M", "N", "tail_bound", "calibration_c",
            "max_symmetry_defect", "spectral_rel_error", "monotone", "status")
    rows = [(c.lam, c.M, c.N, c.tail_bound, c.calibration,
             c.max_symmetry_defect, c.spectral_rel_error, c.monotone, c.status)
            for c in certs]
    return write_csv(path, cols, rows)


def write_sweep_summary(path, epsilons, final_E_rel):
    cols = ("epsilon", "final_E_rel")
    return write_csv(path, cols, zip(epsilons, final_E_rel))
