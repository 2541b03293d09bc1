"""JSON/CSV serialization of fit and bootstrap results.

All writers produce deterministic bytes (sorted keys, repr-based floats)
so identical runs yield identical files.
"""

from __future__ import annotations

import json
import os
import tempfile

import numpy as np

from .bootstrap import BootstrapResult
from .engine import FitResult
from .models import model_from_dict, model_to_dict

__all__ = [
    "fit_result_to_dict",
    "write_json",
    "write_membership_csv",
    "write_bootstrap_csv",
    "bootstrap_result_to_dict",
    "atomic_write_text",
    "load_fit_document",
]


def _jsonify(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, dict):
        return {str(k): _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    return obj


def atomic_write_text(path: str, text: str) -> None:
    """Write via a temp file in the same directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path: str, doc: dict) -> None:
    atomic_write_text(path, json.dumps(_jsonify(doc), sort_keys=True, indent=2) + "\n")


def fit_result_to_dict(result: FitResult) -> dict:
    state = result.state
    doc = {
        "model": model_to_dict(state.model),
        "gamma": state.gamma.tolist(),
        "n": int(state.alpha.shape[0]),
        "lb": result.lb,
        "lb_trace": list(result.lb_trace),
        "sweeps_used": result.sweeps_used,
        "restart_index": result.restart_index,
        "converged": result.converged,
        "diagnostics": {k: v for k, v in result.diagnostics.items()
                        if k != "lb_steps"},
    }
    return doc


def load_fit_document(path: str) -> dict:
    with open(path) as handle:
        doc = json.load(handle)
    doc["model_object"] = model_from_dict(doc["model"])
    return doc


def write_membership_csv(path: str, alpha: np.ndarray,
                         hard: np.ndarray) -> None:
    n, K = alpha.shape
    lines = ["node_id," + ",".join(f"alpha_{k}" for k in range(K))
             + ",hard_assignment"]
    for i in range(n):
        probs = ",".join(repr(float(v)) for v in alpha[i])
        lines.append(f"{i},{probs},{int(hard[i])}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def bootstrap_result_to_dict(result: BootstrapResult) -> dict:
    return {
        "names": result.names,
        "ci_lower": result.ci[:, 0].tolist(),
        "ci_upper": result.ci[:, 1].tolist(),
        "failures": result.failures,
        "replicate_lb": result.replicate_lb.tolist(),
        "warning": result.warning,
        "num_replicates": int(result.samples.shape[0]),
    }


def write_bootstrap_csv(path: str, result: BootstrapResult) -> None:
    lines = ["replicate," + ",".join(result.names)]
    for bi in range(result.samples.shape[0]):
        row = ",".join(repr(float(v)) for v in result.samples[bi])
        lines.append(f"{bi},{row}")
    atomic_write_text(path, "\n".join(lines) + "\n")
