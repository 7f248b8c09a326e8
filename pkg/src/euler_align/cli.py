"""Command-line interface: reproducible experiment drivers.

    euler-align run             --config FILE --out DIR
    euler-align weak-strong     --config FILE --out DIR
    euler-align sweep-eps       --config FILE --out DIR [--jobs K]
    euler-align kernel-selftest --config FILE --out DIR
    euler-align measure-report  --ensemble DIR --out DIR

Every invocation creates a self-describing run directory (manifest,
config copy, delimited reports, snapshots, figures).  Exit codes are a
stable contract:

    0  success          3  CFL violation        5  reference rejected
    2  config error     4  density-floor abort  6  a check failed
"""

import argparse
import json
import os
import shutil
import sys
from dataclasses import replace

import numpy as np

from . import config as cfgmod
from . import manifest as manifestmod
from . import plots, reports
from .alignment import AlignmentForm
from .dynamics import (CflViolation, ConfigError, DensityFloorAbort,
                       ReferenceRejected, SolverConfig, Trajectory,
                       make_reference, run)
from .fields import Grid, State, load_snapshot, save_snapshot, snapshot_to_csv
from .functionals import gronwall_certificate
from .kernel import KernelConfig, build_kernel_table, certify_kernel
from .measures import (EnsembleError, EnsembleMeasure, collect_ensemble,
                       compatibility_check, dissipation_defect, support_check)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CFL = 3
EXIT_FLOOR = 4
EXIT_REFERENCE = 5
EXIT_CHECK = 6

OUT_ROOT_ENV = "EULER_ALIGN_OUT"


def _out_root(args):
    if args.out:
        return args.out
    return os.environ.get(OUT_ROOT_ENV, "runs")


def _prepare_dir(args, kind, tree, config_path=None):
    root = _out_root(args)
    os.makedirs(root, exist_ok=True)
    run_dir = manifestmod.new_run_dir(root, kind, tree)
    os.makedirs(os.path.join(run_dir, "reports"), exist_ok=True)
    if config_path:
        shutil.copy(config_path, os.path.join(run_dir, "config.ini"))
    return run_dir


def _write_snapshots(run_dir, traj, subdir="snapshots"):
    snap_dir = os.path.join(run_dir, subdir)
    os.makedirs(snap_dir, exist_ok=True)
    paths = []
    grid = traj.grid
    for i, state in enumerate(traj.states):
        p = os.path.join(snap_dir, f"snap_{i:04d}.fld")
        save_snapshot(p, grid, state)
        paths.append(p)
    if grid.d == 1:
        snapshot_to_csv(os.path.join(snap_dir, "final.csv"), grid,
                        traj.states[-1])
    return paths


def _want_plots(tree):
    return tree.get("output", {}).get("plots", True)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_run(args):
    tree = cfgmod.load_config(args.config)
    cfg = cfgmod.solver_config(tree)
    initial = cfgmod.initial_state(tree, cfg)
    run_dir = _prepare_dir(args, "run", tree, args.config)
    traj = run(cfg, initial)
    outputs = [reports.write_diagnostics(run_dir, traj)]
    outputs += _write_snapshots(run_dir, traj)
    if _want_plots(tree):
        outputs.append(plots.plot_diagnostics(
            os.path.join(run_dir, "reports", "diagnostics.png"), traj))
    res = traj.diag["residual"]
    metrics = {
        "final_energy": float(traj.diag["energy"][-1]),
        "max_budget_residual": float(np.max(np.abs(res))),
        "min_density": float(np.min(traj.diag["min_rho"])),
        "n_steps": traj.n_steps,
    }
    manifestmod.write_manifest(run_dir, "run", tree, "complete", metrics, outputs)
    print(f"run complete: {run_dir}")
    return EXIT_OK


def cmd_weak_strong(args):
    tree = cfgmod.load_config(args.config)
    cfg = cfgmod.solver_config(tree)
    ws = tree.get("weak_strong", {})
    fine_factor = ws.get("fine_factor", 4)
    amp = ws.get("perturb_amplitude", 1e-2)
    mode = ws.get("perturb_mode", 3)
    run_dir = _prepare_dir(args, "weak-strong", tree, args.config)

    cfg_fine = replace(cfg, N=cfg.N * fine_factor, epsilon=0.0)
    initial_fine = cfgmod.initial_state(tree, cfg_fine)
    reference = make_reference(cfg_fine, initial_fine)

    form = cfg.build_form()
    grid = cfg.grid()
    ref_states = reference.restricted_states(grid)
    base = State(0.0, ref_states[0].rho.copy(), ref_states[0].u.copy())

    cfg_inviscid = replace(cfg, epsilon=0.0)
    zero_traj = run(cfg_inviscid, base, form=form)
    zero_report = gronwall_certificate(zero_traj, reference, form)

    x = grid.coords()
    pert = base.copy()
    pert.rho = pert.rho + amp * np.cos(mode * x[0])
    pert.u[0] = pert.u[0] + amp * np.sin(max(mode - 1, 1) * x[0])
    pert_traj = run(cfg_inviscid, pert, form=form)
    pert_report = gronwall_certificate(pert_traj, reference, form)

    outputs = [
        reports.write_relative_energy(os.path.join(run_dir, "reports"),
                                      zero_report, "zero_test.csv"),
        reports.write_relative_energy(os.path.join(run_dir, "reports"),
                                      pert_report, "relative_energy.csv"),
    ]
    if _want_plots(tree):
        outputs.append(plots.plot_relative_energy(
            os.path.join(run_dir, "reports", "relative_energy.png"), pert_report))
    rel_dissip_ok = bool(np.all(np.diff(pert_report.D_rel_accum) >= -1e-12))
    passed = (not zero_report.violation) and pert_report.sigma_ok and rel_dissip_ok
    metrics = {
        "zero_test_max_E_rel": zero_report.max_E_rel(),
        "perturbed_E_rel_final": float(pert_report.E_rel[-1]),
        "sigma_max": float(np.nanmax(pert_report.sigma)),
        "grad_sup": pert_report.grad_sup,
        "reference_tail": reference.tail,
        "passed": passed,
    }
    manifestmod.write_manifest(run_dir, "weak-strong", tree,
                               "complete" if passed else "check-failed",
                               metrics, outputs)
    print(f"weak-strong report: {run_dir} (passed={passed})")
    return EXIT_OK if passed else EXIT_CHECK


def _ensemble_store(run_dir, measure, tree):
    members_dir = os.path.join(run_dir, "members")
    outputs = []
    for eps, member in zip(measure.epsilons, measure.members):
        sub = os.path.join(members_dir, f"eps_{eps:.3e}")
        os.makedirs(sub, exist_ok=True)
        for i, state in enumerate(member.states):
            p = os.path.join(sub, f"snap_{i:04d}.fld")
            save_snapshot(p, member.grid, state)
            outputs.append(p)
    doc = {
        "epsilons": list(measure.epsilons),
        "snapshot_times": [float(t) for t in measure.times],
        "gamma": measure.gamma,
        "config_hash": manifestmod.config_hash(tree),
        "d": measure.grid.d, "N": measure.grid.N,
        "lambda": measure.members[0].config.lam,
        "M": measure.members[0].config.M,
        "near_shells": measure.members[0].config.near_shells,
        "density_floor": measure.members[0].config.density_floor,
    }
    path = os.path.join(run_dir, "ensemble.json")
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    outputs.append(path)
    return outputs


def _measure_reports(run_dir, measure, form, reference, tree, floor):
    rep_dir = os.path.join(run_dir, "reports")
    os.makedirs(rep_dir, exist_ok=True)
    outputs = []
    defect = dissipation_defect(measure, form)
    outputs.append(reports.write_defect(rep_dir, defect))
    c_rho, support_ok = support_check(measure, floor)
    cert = certify_kernel(form.kernel.config)
    c_lambda = cert.poincare_constant
    if reference is not None:
        U_states = [s.u for s in reference.restricted_states(measure.grid)]
        compat = compatibility_check(measure, form, U_states, c_lambda,
                                     defect_report=defect)
        outputs.append(reports.write_compatibility(rep_dir, compat))
        compat_ok = compat.passed
        ratio = compat.ratio
    else:
        compat_ok, ratio = True, float("nan")
    if _want_plots(tree):
        outputs.append(plots.plot_defect(os.path.join(rep_dir, "defect.png"),
                                         defect))
    passed = defect.nonnegative and defect.nondecreasing and support_ok and compat_ok
    metrics = {
        "c_rho": c_rho,
        "support_ok": support_ok,
        "defect_final": float(defect.defect[-1]),
        "defect_tolerance": defect.tolerance,
        "compatibility_ratio": ratio,
        "linf_bound": defect.linf_bound,
        "passed": passed,
    }
    return outputs, metrics, passed


def cmd_sweep_eps(args):
    tree = cfgmod.load_config(args.config)
    cfg = cfgmod.solver_config(tree)
    sweep = tree.get("sweep", {})
    eps_list = [float(e) for e in sweep.get(
        "epsilons", "1e-2,3e-3,1e-3,3e-4,1e-4").split(",")]
    ws = tree.get("weak_strong", {})
    fine_factor = ws.get("fine_factor", 4)
    run_dir = _prepare_dir(args, "sweep-eps", tree, args.config)

    initial = cfgmod.initial_state(tree, cfg)
    measure = collect_ensemble(cfg, eps_list, initial, jobs=args.jobs)
    form = cfg.build_form()

    cfg_fine = replace(cfg, N=cfg.N * fine_factor, epsilon=0.0)
    initial_fine = cfgmod.initial_state(tree, cfg_fine)
    reference = make_reference(cfg_fine, initial_fine)

    outputs = _ensemble_store(run_dir, measure, tree)
    rep_out, metrics, meas_ok = _measure_reports(
        run_dir, measure, form, reference, tree, cfg.density_floor)
    outputs += rep_out

    finals = []
    for member in measure.members:
        rep = gronwall_certificate(member, reference, form)
        finals.append(float(rep.E_rel[-1]))
    outputs.append(reports.write_sweep_summary(
        os.path.join(run_dir, "reports", "sweep.csv"), measure.epsilons, finals))
    if _want_plots(tree):
        outputs.append(plots.plot_sweep(
            os.path.join(run_dir, "reports", "sweep.png"),
            measure.epsilons, finals))
    mono = all(finals[i + 1] <= finals[i] * 1.05 for i in range(len(finals) - 1))
    mono = mono and finals[-1] < finals[0]
    passed = meas_ok and mono
    metrics.update({"final_E_rel": finals, "monotone_trend": mono,
                    "passed": passed})
    manifestmod.write_manifest(run_dir, "sweep-eps", tree,
                               "complete" if passed else "check-failed",
                               metrics, outputs)
    print(f"sweep-eps report: {run_dir} (passed={passed})")
    return EXIT_OK if passed else EXIT_CHECK


def cmd_kernel_selftest(args):
    tree = cfgmod.load_config(args.config)
    st = tree.get("selftest", {})
    lambdas = [float(x) for x in st.get("lambdas", "0.25,0.5,0.75").split(",")]
    Ns = [int(x) for x in str(st.get("Ns", "256")).split(",")]
    M = st.get("M", 8)
    run_dir = _prepare_dir(args, "kernel-selftest", tree, args.config)
    certs = []
    failed = []
    for lam in lambdas:
        for N in Ns:
            cert = certify_kernel(KernelConfig(d=1, lam=lam, M=M, N=N))
            certs.append(cert)
            if cert.status == "fail":
                failed.append(f"lambda={lam} N={N}")
    path = reports.write_kernel_certificates(
        os.path.join(run_dir, "reports", "kernel_certificate.csv"), certs)
    outputs = [path]
    if _want_plots(tree):
        lam, N = lambdas[0], Ns[0]
        grid = Grid(1, N)
        form = AlignmentForm(build_kernel_table(
            KernelConfig(d=1, lam=lam, M=M, N=N), grid), grid)
        outputs.append(plots.plot_kernel_certificate(
            os.path.join(run_dir, "reports", "kernel_certificate.png"),
            form, certs[0].calibration, lam, max(8, N // 4)))
    status = "complete" if not failed else "check-failed"
    metrics = {"certificates": len(certs), "failed": failed}
    manifestmod.write_manifest(run_dir, "kernel-selftest", tree, status,
                               metrics, outputs)
    if failed:
        print(f"kernel self-test FAILED: {', '.join(failed)}", file=sys.stderr)
        return EXIT_CHECK
    print(f"kernel self-test passed: {run_dir}")
    return EXIT_OK


def load_ensemble_store(ensemble_dir):
    """Reconstruct an EnsembleMeasure from a sweep-eps sample store."""
    with open(os.path.join(ensemble_dir, "ensemble.json")) as fh:
        doc = json.load(fh)
    times = np.asarray(doc["snapshot_times"])
    cfg = SolverConfig(
        d=doc["d"], N=doc["N"], gamma=doc["gamma"], lam=doc["lambda"],
        M=doc.get("M", 8), near_shells=doc.get("near_shells", 6),
        density_floor=doc.get("density_floor", 0.1),
        t_end=float(times[-1]) if times[-1] > 0 else 1.0,
        n_snapshots=max(len(times) - 1, 1))
    members = []
    for eps in doc["epsilons"]:
        sub = os.path.join(ensemble_dir, "members", f"eps_{eps:.3e}")
        states = []
        for i in range(len(times)):
            _, state = load_snapshot(os.path.join(sub, f"snap_{i:04d}.fld"))
            states.append(state)
        mcfg = replace(cfg, epsilon=eps)
        diag = {c: np.array([]) for c in ("t", "energy")}
        members.append(Trajectory(mcfg, times, states, diag, 0))
    return EnsembleMeasure(tuple(doc["epsilons"]), members, doc["gamma"]), doc


def cmd_measure_report(args):
    measure, doc = load_ensemble_store(args.ensemble)
    tree = {"grid": {"d": doc["d"], "N": doc["N"]},
            "physics": {"gamma": doc["gamma"], "lambda": doc["lambda"]}}
    run_dir = _prepare_dir(args, "measure-report", tree)
    form = measure.members[0].config.build_form()
    outputs, metrics, passed = _measure_reports(
        run_dir, measure, form, None, tree,
        doc.get("density_floor", 0.1))
    manifestmod.write_manifest(run_dir, "measure-report", tree,
                               "complete" if passed else "check-failed",
                               metrics, outputs)
    print(f"measure report: {run_dir} (passed={passed})")
    return EXIT_OK if passed else EXIT_CHECK


# ---------------------------------------------------------------------------

def build_parser():
    ap = argparse.ArgumentParser(
        prog="euler-align",
        description="Numerical laboratory for the pressured Euler alignment "
                    "system on the periodic torus.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="INI config file")
        p.add_argument("--out", default=None,
                       help=f"output root (default $"
                            f"{OUT_ROOT_ENV} or ./runs)")
        p.add_argument("--jobs", type=int, default=1,
                       help="parallel workers for independent runs")

    common(sub.add_parser("run", help="integrate one configuration"))
    common(sub.add_parser("weak-strong",
                          help="reference + zero test + perturbed stability"))
    common(sub.add_parser("sweep-eps",
                          help="viscosity ensemble with measure reports"))
    common(sub.add_parser("kernel-selftest", help="kernel certificates"))
    mr = sub.add_parser("measure-report",
                        help="post-process an existing ensemble store")
    mr.add_argument("--ensemble", required=True, help="sweep-eps run directory")
    mr.add_argument("--out", default=None)
    mr.add_argument("--jobs", type=int, default=1)
    return ap


_DISPATCH = {
    "run": cmd_run,
    "weak-strong": cmd_weak_strong,
    "sweep-eps": cmd_sweep_eps,
    "kernel-selftest": cmd_kernel_selftest,
    "measure-report": cmd_measure_report,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return _DISPATCH[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CflViolation as exc:
        print(f"CFL abort: {exc}", file=sys.stderr)
        return EXIT_CFL
    except DensityFloorAbort as exc:
        print(f"density-floor abort: {exc}", file=sys.stderr)
        return EXIT_FLOOR
    except ReferenceRejected as exc:
        print(f"reference rejected: {exc}", file=sys.stderr)
        return EXIT_REFERENCE
    except EnsembleError as exc:
        print(f"ensemble rejected: {exc}", file=sys.stderr)
        if isinstance(exc.__cause__, DensityFloorAbort):
            return EXIT_FLOOR
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
