"""Command-line front end.

Commands: ``fit``, ``simulate``, ``bootstrap``, ``compare``.  Every command
writes its primary outputs atomically into --out plus a manifest.json
recording the resolved configuration, input digests and seed, which
suffices to reproduce the run.  Exit codes: 0 success, 2 sweep budget
exhausted without convergence, 64 usage error, 66 unreadable input.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .bootstrap import BootstrapConfig, run_bootstrap
from .engine import FitConfig, FitResult, VariationalState, fit, fit_from_alpha, init_random
from .models import (
    TabularBlockModel,
    build_excess_trust,
    build_p1_mixture,
    model_to_dict,
)
from .network import (
    binary_alphabet,
    load_edge_list,
    make_dyad_alphabet,
    save_edge_list,
    signed_alphabet,
)
from .serialize import (
    atomic_write_text,
    bootstrap_result_to_dict,
    fit_result_to_dict,
    load_fit_document,
    write_bootstrap_csv,
    write_json,
    write_membership_csv,
)
from .simulator import SimSpec, sample_network

EXIT_OK = 0
EXIT_NO_CONVERGENCE = 2
EXIT_USAGE = 64
EXIT_NOINPUT = 66


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(EXIT_USAGE)


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _read_config_file(path: str) -> dict:
    values = {}
    try:
        with open(path) as handle:
            for raw in handle:
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise CliError(f"bad config line: {line!r}", EXIT_USAGE)
                key, value = line.split("=", 1)
                values[key.strip().replace("-", "_")] = value.strip()
    except OSError as exc:
        raise CliError(f"cannot read config file {path}: {exc}", EXIT_NOINPUT)
    return values


def _apply_config(args: argparse.Namespace, defaults: dict) -> None:
    """Fill None-valued args from config file, then defaults."""
    file_values = {}
    if getattr(args, "config", None):
        file_values = _read_config_file(args.config)
    for key, default in defaults.items():
        if getattr(args, key, None) is None:
            if key in file_values:
                raw = file_values[key]
                caster = type(default) if default is not None else str
                if caster is bool:
                    value = raw.lower() in ("1", "true", "yes")
                else:
                    value = caster(raw)
                setattr(args, key, value)
            else:
                setattr(args, key, default)


def _digest(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_dir: str, command: str, args: argparse.Namespace,
                    inputs: list[str], started: float) -> None:
    config = {k: v for k, v in sorted(vars(args).items())
              if k not in ("func", "config") and not k.startswith("_")}
    manifest = {
        "command": command,
        "config": config,
        "input_digests": {p: _digest(p) for p in inputs},
        "seed": getattr(args, "seed", None),
        "tool_version": __version__,
        "wall_time_seconds": round(time.perf_counter() - started, 3),
    }
    write_json(os.path.join(out_dir, "manifest.json"), manifest)


def _load_network(path: str, alphabet_name: str, directed: bool):
    if alphabet_name == "binary":
        edge = binary_alphabet()
    elif alphabet_name == "signed":
        edge = signed_alphabet()
    else:
        raise CliError(f"unknown alphabet {alphabet_name!r}", EXIT_USAGE)
    try:
        with open(path) as handle:
            return load_edge_list(handle, edge, directed=directed)
    except OSError as exc:
        raise CliError(f"cannot read input {path}: {exc}", EXIT_NOINPUT)


def _make_model(name: str, K: int, alphabet):
    if name == "tabular":
        return TabularBlockModel.uniform(K, alphabet)
    if name == "p1":
        return build_p1_mixture(K, alphabet)
    if name == "excess-trust":
        return build_excess_trust(K)
    raise CliError(f"unknown model {name!r}", EXIT_USAGE)


def _ensure_out(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def _default_jobs() -> int:
    return int(os.environ.get("BLOCKMIX_JOBS", "1"))


def cmd_fit(args) -> int:
    started = time.perf_counter()
    _apply_config(args, {
        "alphabet": "signed", "directed": True, "e_step": "mm",
        "restarts": 1, "max_sweeps": 6000, "rel_tol": 1e-10, "seed": 0,
    })
    network = _load_network(args.input, args.alphabet, args.directed)
    alphabet = (network.alphabet if args.model != "excess-trust"
                else make_dyad_alphabet(signed_alphabet(), True))
    model = _make_model(args.model, args.K, network.alphabet)
    config = FitConfig(max_sweeps=args.max_sweeps, rel_tol=args.rel_tol,
                       restarts=args.restarts, e_step=args.e_step,
                       seed=args.seed)
    result = fit(network, model, config)
    out = _ensure_out(args.out)
    write_json(os.path.join(out, "fit.json"), fit_result_to_dict(result))
    write_membership_csv(os.path.join(out, "memberships.csv"),
                         result.state.alpha, result.hard_assignment)
    _write_manifest(out, "fit", args, [args.input], started)
    return EXIT_OK if result.converged else EXIT_NO_CONVERGENCE


def cmd_simulate(args) -> int:
    started = time.perf_counter()
    _apply_config(args, {"seed": 0, "relabel": True})
    try:
        with open(args.params) as handle:
            doc = json.load(handle)
    except OSError as exc:
        raise CliError(f"cannot read params {args.params}: {exc}", EXIT_NOINPUT)
    from .models import model_from_dict
    model = model_from_dict(doc)
    gamma = np.array(doc.get("gamma", np.full(model.K, 1.0 / model.K)))
    spec = SimSpec(n=args.n, gamma=gamma, model=model, seed=args.seed,
                   relabel=args.relabel)
    network, truth = sample_network(spec)
    out = _ensure_out(args.out)
    sink = io.StringIO()
    save_edge_list(network, sink)
    atomic_write_text(os.path.join(out, "network.tsv"), sink.getvalue())
    lines = ["node_id,component"] + [f"{i},{int(z)}" for i, z in enumerate(truth)]
    atomic_write_text(os.path.join(out, "memberships.csv"), "\n".join(lines) + "\n")
    _write_manifest(out, "simulate", args, [args.params], started)
    return EXIT_OK


def cmd_bootstrap(args) -> int:
    started = time.perf_counter()
    _apply_config(args, {"seed": 0, "refit_max_sweeps": 1000,
                         "jobs": _default_jobs()})
    try:
        doc = load_fit_document(args.fit)
    except OSError as exc:
        raise CliError(f"cannot read fit {args.fit}: {exc}", EXIT_NOINPUT)
    model = doc["model_object"]
    gamma = np.array(doc["gamma"])
    n = doc["n"]
    # rebuild the minimal fit state the bootstrap needs
    alpha = np.tile(gamma, (n, 1))
    state = VariationalState(alpha=alpha, gamma=gamma, model=model)
    fit_result = FitResult(state=state, lb=doc["lb"], lb_trace=doc["lb_trace"],
                           hard_assignment=np.argmax(alpha, axis=1),
                           sweeps_used=doc["sweeps_used"], restart_index=0,
                           converged=True)
    config = BootstrapConfig(B=args.B, seed=args.seed, jobs=args.jobs,
                             refit_max_sweeps=args.refit_max_sweeps)
    result = run_bootstrap(fit_result, config)
    out = _ensure_out(args.out)
    write_json(os.path.join(out, "bootstrap.json"),
               bootstrap_result_to_dict(result))
    write_bootstrap_csv(os.path.join(out, "samples.csv"), result)
    _write_manifest(out, "bootstrap", args, [args.fit], started)
    return EXIT_OK


def cmd_compare(args) -> int:
    started = time.perf_counter()
    _apply_config(args, {
        "alphabet": "signed", "directed": True, "runs": 1,
        "budget_sweeps": 100, "seed": 0,
    })
    network = _load_network(args.input, args.alphabet, args.directed)
    model = _make_model(args.model, args.K, network.alphabet)
    seeds = np.random.SeedSequence(args.seed).spawn(args.runs)
    lines = ["strategy,run,sweep,lb"]
    for strategy in ("mm", "fp"):
        for run, seq in enumerate(seeds):
            config = FitConfig(max_sweeps=args.budget_sweeps, rel_tol=0.0,
                               e_step=strategy, seed=0)
            alpha0 = init_random(network.n, args.K, seq)
            result = fit_from_alpha(network, model, alpha0, config)
            for sweep, lb in enumerate(result.lb_trace):
                lines.append(f"{strategy},{run},{sweep},{repr(float(lb))}")
    out = _ensure_out(args.out)
    atomic_write_text(os.path.join(out, "traces.csv"), "\n".join(lines) + "\n")
    _write_manifest(out, "compare", args, [args.input], started)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="blockmix",
                     description="Model-based clustering of discrete-valued networks")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit a block model")
    p_fit.add_argument("--input", required=True)
    p_fit.add_argument("--model", required=True,
                       choices=["tabular", "p1", "excess-trust"])
    p_fit.add_argument("--K", type=int, required=True)
    p_fit.add_argument("--e-step", dest="e_step", choices=["mm", "fp"])
    p_fit.add_argument("--restarts", type=int)
    p_fit.add_argument("--max-sweeps", dest="max_sweeps", type=int)
    p_fit.add_argument("--rel-tol", dest="rel_tol", type=float)
    p_fit.add_argument("--seed", type=int)
    p_fit.add_argument("--alphabet", choices=["binary", "signed"])
    p_fit.add_argument("--directed", type=int, choices=[0, 1], default=None)
    p_fit.add_argument("--config")
    p_fit.add_argument("--out", required=True)
    p_fit.set_defaults(func=cmd_fit)

    p_sim = sub.add_parser("simulate", help="sample a network from a model")
    p_sim.add_argument("--params", required=True)
    p_sim.add_argument("--n", type=int, required=True)
    p_sim.add_argument("--seed", type=int)
    p_sim.add_argument("--relabel", type=int, choices=[0, 1], default=None)
    p_sim.add_argument("--config")
    p_sim.add_argument("--out", required=True)
    p_sim.set_defaults(func=cmd_simulate)

    p_boot = sub.add_parser("bootstrap", help="parametric bootstrap of a fit")
    p_boot.add_argument("--fit", required=True)
    p_boot.add_argument("--B", type=int, required=True)
    p_boot.add_argument("--seed", type=int)
    p_boot.add_argument("--jobs", type=int)
    p_boot.add_argument("--refit-max-sweeps", dest="refit_max_sweeps", type=int)
    p_boot.add_argument("--config")
    p_boot.add_argument("--out", required=True)
    p_boot.set_defaults(func=cmd_bootstrap)

    p_cmp = sub.add_parser("compare",
                           help="trace MM vs FP E-steps on matched seeds")
    p_cmp.add_argument("--input", required=True)
    p_cmp.add_argument("--model", required=True,
                       choices=["tabular", "p1", "excess-trust"])
    p_cmp.add_argument("--K", type=int, required=True)
    p_cmp.add_argument("--runs", type=int)
    p_cmp.add_argument("--budget-sweeps", dest="budget_sweeps", type=int)
    p_cmp.add_argument("--seed", type=int)
    p_cmp.add_argument("--alphabet", choices=["binary", "signed"])
    p_cmp.add_argument("--directed", type=int, choices=[0, 1], default=None)
    p_cmp.add_argument("--config")
    p_cmp.add_argument("--out", required=True)
    p_cmp.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if hasattr(args, "directed") and args.directed is not None:
        args.directed = bool(args.directed)
    if hasattr(args, "relabel") and args.relabel is not None:
        args.relabel = bool(args.relabel)
    try:
        return args.func(args)
    except CliError as exc:
        sys.stderr.write(f"blockmix: {exc}\n")
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
