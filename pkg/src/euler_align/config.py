"""Run configuration files.

Plain INI sections ([grid], [physics], [kernel], [time], [init], [output]
plus experiment-specific [weak_strong] / [sweep] / [selftest]); unknown
sections or keys are errors.  A commented reference file ships with the
repository (docs/reference-config.ini).
"""

import configparser
import io

import numpy as np

from .dynamics import ConfigError, SolverConfig
from .fields import Grid, State

_SCHEMA = {
    "grid": {"d": int, "N": int},
    "physics": {"gamma": float, "lambda": float, "epsilon": float, "m": int,
                "density_floor": float},
    "kernel": {"M": int, "near_shells": int},
    "time": {"cfl": float, "t_end": float, "dt_fixed": float},
    "init": {"kind": str, "rho_amplitudes": str, "u_amplitudes": str,
             "mollify_width": float},
    "output": {"n_snapshots": int, "diag_every": int, "plots": bool},
    "weak_strong": {"fine_factor": int, "perturb_amplitude": float,
                    "perturb_mode": int},
    "sweep": {"epsilons": str},
    "selftest": {"lambdas": str, "Ns": str, "M": int},
}

_DEFAULT_INIT = {"kind": "cosine", "rho_amplitudes": "0.05,0.02",
                 "u_amplitudes": "0.05", "mollify_width": 0.0}


def _parse_bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _float_list(text):
    return [float(x) for x in text.split(",") if x.strip()]


def load_config(path):
    """Parse and validate a config file; returns a plain nested dict."""
    parser = configparser.ConfigParser()
    parser.optionxform = str  # keys are case sensitive (N vs n)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}")
    tree = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        tree[section] = {}
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            typ = _SCHEMA[section][key]
            try:
                if typ is bool:
                    tree[section][key] = _parse_bool(raw)
                else:
                    tree[section][key] = typ(raw)
            except ConfigError:
                raise
            except ValueError:
                raise ConfigError(
                    f"bad value for {key!r} in [{section}]: {raw!r}")
    return tree


def solver_config(tree):
    """Build a SolverConfig from the parsed tree (validation included)."""
    g = tree.get("grid", {})
    p = tree.get("physics", {})
    k = tree.get("kernel", {})
    t = tree.get("time", {})
    o = tree.get("output", {})
    init = {**_DEFAULT_INIT, **tree.get("init", {})}
    kwargs = dict(
        d=g.get("d", 1), N=g.get("N", 256),
        gamma=p.get("gamma", 2.0), lam=p.get("lambda", 0.5),
        epsilon=p.get("epsilon", 1e-3), m=p.get("m", 1),
        density_floor=p.get("density_floor", 0.1),
        cfl=t.get("cfl", 0.45), t_end=t.get("t_end", 1.0),
        dt_fixed=t.get("dt_fixed"),
        M=k.get("M", 8),
        mollify_width=init.get("mollify_width", 0.0),
        n_snapshots=o.get("n_snapshots", 50),
        diag_every=o.get("diag_every", 1),
    )
    if "near_shells" in k:
        kwargs["near_shells"] = k["near_shells"]
    try:
        return SolverConfig(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc))


def initial_state(tree, cfg):
    """Construct the configured initial data on the solver grid.

    kind = "cosine": rho = 1 + sum_k a_k cos(k x_1), u_1 = sum_k b_k sin(k x_1)
    (amplitude lists a, b from rho_amplitudes / u_amplitudes);
    kind = "constant": rho = 1, u = 0.
    """
    init = {**_DEFAULT_INIT, **tree.get("init", {})}
    grid = cfg.grid()
    x = grid.coords()
    rho = np.ones(grid.shape)
    u = np.zeros((grid.d,) + grid.shape)
    kind = init["kind"]
    if kind == "constant":
        pass
    elif kind == "cosine":
        for k, a in enumerate(_float_list(init["rho_amplitudes"]), start=1):
            rho += a * np.cos(k * x[0])
        for k, b in enumerate(_float_list(init["u_amplitudes"]), start=1):
            u[0] += b * np.sin(k * x[0])
    else:
        raise ConfigError(f"unknown init kind {kind!r}")
    return State(0.0, rho, u)


def reference_config_text():
    """The commented reference configuration, also used by docs."""
    return """\
# Reference configuration for euler-align.  Unknown keys are errors.

[grid]
d = 1            # spatial dimension (1 or 2)
N = 256          # grid points per axis (even, >= 8)

[physics]
gamma = 2.0      # adiabatic exponent, >= 2
lambda = 0.5     # alignment kernel exponent, in (0, 1)
epsilon = 1e-3   # hyperviscosity strength, >= 0
m = 1            # hyperviscosity order (term eps (-Lap)^(2m) u)
density_floor = 0.1

[kernel]
M = 8            # periodization images kept exactly (far part completed analytically)
near_shells = 6  # cells treated by the moment-preserving near-field quadrature

[time]
cfl = 0.45
t_end = 1.0
# dt_fixed = 1e-3   # optional; omit for the adaptive CFL step

[init]
kind = cosine              # cosine | constant
rho_amplitudes = 0.05,0.02 # rho = 1 + sum_k a_k cos(k x)
u_amplitudes = 0.05        # u = sum_k b_k sin(k x)
mollify_width = 0.0

[output]
n_snapshots = 50
diag_every = 1
plots = true

[weak_strong]
fine_factor = 4        # reference grid refinement
perturb_amplitude = 1e-2
perturb_mode = 3

[sweep]
epsilons = 1e-2,3e-3,1e-3,3e-4,1e-4

[selftest]
lambdas = 0.25,0.5,0.75
Ns = 256
M = 8
"""


def parse_config_text(text):
    parser = configparser.ConfigParser()
    parser.optionxform = str
    parser.read_file(io.StringIO(text))
    return parser
