"""Experiment manifests: config hash, version, outputs, headline metrics.

The hash covers every physics- and numerics-relevant field; two manifests
with equal hashes imply bitwise-equal diagnostics (the solver is
deterministic given config and initial data).
"""

import hashlib
import json
import os
import uuid
from dataclasses import asdict

from . import __version__

HASHED_SECTIONS = ("grid", "physics", "kernel", "time", "init",
                   "weak_strong", "sweep", "selftest")


def config_hash(tree):
    """sha256 over the canonicalized physics/numerics config subtree."""
    relevant = {s: tree[s] for s in HASHED_SECTIONS if s in tree}
    blob = json.dumps(relevant, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def new_run_dir(out_root, kind, tree):
    """Create a unique, collision-free run directory."""
    short = config_hash(tree)[:10]
    for _ in range(100):
        run_id = f"{kind}-{short}-{uuid.uuid4().hex[:8]}"
        path = os.path.join(out_root, run_id)
        try:
            os.makedirs(path)
            return path
        except FileExistsError:
            continue
    raise RuntimeError("could not allocate a unique run directory")


def write_manifest(run_dir, kind, tree, status, metrics, outputs):
    doc = {
        "kind": kind,
        "tool": "euler-align",
        "version": __version__,
        "config": tree,
        "config_hash": config_hash(tree),
        "status": status,
        "headline_metrics": metrics,
        "outputs": sorted(outputs),
    }
    path = os.path.join(run_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")
    return path


def _jsonable(obj):
    try:
        return asdict(obj)
    except TypeError:
        pass
    if hasattr(obj, "tolist"):
        return obj.tolist()
    if isinstance(obj, float):
        return obj
    return str(obj)
