"""Command-line driver: solve, sweep, check, and simulate from JSON configs.

Config documents are versioned ("schema": 1) and fail closed: unknown fields
anywhere raise a config error so reproduction runs cannot silently carry a
typo.  Every output file embeds the SHA-256 of the resolved config (JSON
field `config_sha256`, or a leading `#` comment line in CSVs), and each run
writes a manifest tying the outputs together.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import SingleThreshold, analyze_exponential, analyze_slices
from .errors import ConfigError, NoConvergence
from .evaluation import sweep_thresholds
from .mdp import check_smdp_equivalence, solve_mdp
from .model import (
    ACTIONS,
    Exponential,
    ValidatedModel,
    model_from_config,
    service_from_config,
)
from .simulate import SimConfig, simulate
from .solver import operator_for, value_iterate

ENVELOPE_FIELDS = {"schema", "kind", "model", "service", "service_table", "simulation"}
SIMULATION_FIELDS = {"horizon", "replications", "seed", "thresholds"}
KINDS = ("exponential", "deterministic-sized", "ge-uniform", "general")


def _load_config(path: str) -> tuple[dict, str]:
    try:
        raw = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}")
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    unknown = set(doc) - ENVELOPE_FIELDS
    if unknown:
        raise ConfigError(f"{path}: unknown field(s) {sorted(unknown)}")
    if doc.get("schema") != 1:
        raise ConfigError(f"{path}: unsupported schema {doc.get('schema')!r}, expected 1")
    if "model" not in doc:
        raise ConfigError(f"{path}: missing 'model' section")
    digest = hashlib.sha256(
        json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()
    return doc, digest


def _model_from_doc(doc: dict, gamma_override: float | None) -> ValidatedModel:
    model_doc = dict(doc["model"])
    if gamma_override is not None:
        model_doc["gamma"] = gamma_override
    return model_from_config(model_doc)


def _per_action_service(doc: dict, model: ValidatedModel) -> dict:
    """Per-action laws for sweep/simulate; defaults to exponential at mu_u."""
    out = {u: Exponential(model.action(u).mu) for u in ACTIONS}
    if "service" in doc:
        section = doc["service"]
        unknown = set(section) - set(ACTIONS)
        if unknown:
            raise ConfigError(f"service: unknown key(s) {sorted(unknown)}")
        for u, sdoc in section.items():
            out[u] = service_from_config(sdoc, f"service[{u}]")
    return out


def _service_table(doc: dict, model: ValidatedModel):
    if "service_table" not in doc:
        return None
    table = {}
    for i, entry in enumerate(doc["service_table"]):
        unknown = set(entry) - {"h", "k", "action", "service"}
        if unknown:
            raise ConfigError(f"service_table[{i}]: unknown field(s) {sorted(unknown)}")
        try:
            key = (int(entry["h"]), int(entry["k"]), str(entry["action"]))
            table[key] = service_from_config(entry["service"], f"service_table[{i}]")
        except KeyError as exc:
            raise ConfigError(f"service_table[{i}]: missing field {exc}")
    return table


def _sim_settings(doc: dict, seed_override: int | None) -> dict:
    section = dict(doc.get("simulation", {}))
    unknown = set(section) - SIMULATION_FIELDS
    if unknown:
        raise ConfigError(f"simulation: unknown field(s) {sorted(unknown)}")
    out = {
        "horizon": float(section.get("horizon", 100_000.0)),
        "replications": int(section.get("replications", 30)),
        "seed": int(section.get("seed", 20260809)),
        "thresholds": section.get("thresholds"),
    }
    if seed_override is not None:
        out["seed"] = seed_override
    return out


class _RunWriter:
    """Collects output files and writes the run manifest."""

    def __init__(self, command: str, config_path: str, config_sha256: str, out_dir: str, options: dict):
        self.command = command
        self.config_path = config_path
        self.sha = config_sha256
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.options = options
        self.outputs: list[str] = []
        self.start = time.perf_counter()

    def write_json(self, name: str, payload: dict) -> Path:
        path = self.out / name
        body = {"config_sha256": self.sha, "tool": f"txpolicy/{__version__}", **payload}
        path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")
        self.outputs.append(name)
        return path

    def write_csv(self, name: str, header: list[str], rows: list[list]) -> Path:
        path = self.out / name
        with path.open("w") as fh:
            fh.write(f"# config_sha256={self.sha} tool=txpolicy/{__version__}\n")
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(_csv_cell(x) for x in row) + "\n")
        self.outputs.append(name)
        return path

    def finish(self) -> None:
        manifest = {
            "command": self.command,
            "config_path": str(self.config_path),
            "config_sha256": self.sha,
            "outputs": self.outputs,
            "options": self.options,
            "tool_version": __version__,
            "duration_seconds": round(time.perf_counter() - self.start, 6),
        }
        (self.out / f"{self.command}_manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n"
        )


def _csv_cell(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _descriptor_json(descriptor) -> dict:
    if isinstance(descriptor, SingleThreshold):
        return {"type": "single", "t": descriptor.t}
    return {"type": "switch-list", "switches": list(descriptor.switches)}


# -------- commands --------


def cmd_solve(args) -> int:
    doc, sha = _load_config(args.config)
    kind = doc.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"solve needs \"kind\" in {KINDS}, got {kind!r}")
    model = _model_from_doc(doc, args.gamma)
    op = operator_for(model, kind, _service_table(doc, model))
    writer = _RunWriter(
        "solve", args.config, sha, args.out,
        {"tol": args.tol, "gamma": args.gamma, "max_iter": args.max_iter},
    )
    try:
        report = value_iterate(op, tol=args.tol, max_iter=args.max_iter)
    except NoConvergence as exc:
        print(f"solve: {exc}", file=sys.stderr)
        return 1
    grid = report.value.grid()
    rows = []
    for s in model.states():
        action = "" if s.n == 0 else report.policy.action_of(s)
        rows.append([s.n, s.h, s.k, float(grid[s.n, s.h, s.k]), action])
    writer.write_csv("value_curve.csv", ["n", "h", "k", "value", "action"], rows)
    thresholds = {
        f"h{h}/k{k}": _descriptor_json(d)
        for (h, k), d in report.policy.threshold_descriptor().items()
    }
    writer.write_json(
        "solution.json",
        {
            "kind": kind,
            "iterations": report.iterations,
            "final_residual": report.final_residual,
            "contraction_estimate": report.contraction_estimate,
            "thresholds": thresholds,
            "values": [float(v) for v in report.value.values],
        },
    )
    writer.finish()
    print(f"solve: converged in {report.iterations} sweeps, residual {report.final_residual:.3e}")
    return 0


def cmd_sweep(args) -> int:
    doc, sha = _load_config(args.config)
    model = _model_from_doc(doc, args.gamma)
    service = _per_action_service(doc, model)
    writer = _RunWriter(
        "sweep",
        args.config,
        sha,
        args.out,
        {"simulate": bool(args.simulate), "seed": args.seed, "threads": args.threads},
    )
    result = sweep_thresholds(model, service["a"], service["b"])

    header = ["threshold", "throughput_analytic", "throughput_alt", "agreement_gap"]
    rows = [
        [r.threshold, r.throughput, r.alt_throughput, r.agreement_gap]
        for r in result.reports
    ]
    if args.simulate:
        sim = _sim_settings(doc, args.seed)
        header += ["sim_mean", "sim_ci_half_width"]
        for row, r in zip(rows, result.reports):
            res = simulate(
                SimConfig(
                    model=model,
                    dist_a=service["a"],
                    dist_b=service["b"],
                    threshold=r.threshold,
                    horizon=sim["horizon"],
                    replications=sim["replications"],
                    base_seed=sim["seed"],
                ),
                threads=args.threads,
            )
            row += [res.mean, res.ci_half_width]
    writer.write_csv("sweep.csv", header, rows)
    writer.write_json(
        "sweep_summary.json",
        {
            "best_threshold": result.best_threshold,
            "best_throughput": float(result.curve.max()),
            "is_flat": result.is_flat,
            "is_unimodal": result.is_unimodal,
        },
    )
    writer.finish()
    flat_note = " (flat curve)" if result.is_flat else ""
    print(f"sweep: best threshold {result.best_threshold}{flat_note}")
    return 0


def cmd_check(args) -> int:
    doc, sha = _load_config(args.config)
    kind = doc.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"check needs \"kind\" in {KINDS}, got {kind!r}")
    model = _model_from_doc(doc, args.gamma)
    writer = _RunWriter("check", args.config, sha, args.out, {"tol": args.tol, "gamma": args.gamma})
    if kind == "exponential":
        values, policy = solve_mdp(model, tol=args.tol, max_iter=args.max_iter)
        report = analyze_exponential(model, values, policy)
        smdp = value_iterate(operator_for(model, "exponential"), tol=args.tol, max_iter=args.max_iter)
        equivalence = check_smdp_equivalence(values, policy, smdp)
        payload = report.to_json()
        payload["smdp_equivalence"] = {
            "sup_diff": equivalence.sup_diff,
            "policies_match": equivalence.policies_match,
        }
        writer.write_json("structure_report.json", payload)
        writer.finish()
        if not report.passed:
            failed = sorted(k for k, ok in report.property_flags.items() if not ok)
            print(f"check: FAILED properties: {failed}", file=sys.stderr)
            return 1
        print("check: all structural properties hold")
        return 0
    op = operator_for(model, kind, _service_table(doc, model))
    solve = value_iterate(op, tol=args.tol, max_iter=args.max_iter)
    report = analyze_slices(model, solve.value.grid(), solve.policy)
    writer.write_json("structure_report.json", report.to_json())
    writer.finish()
    print("check: per-slice thresholds reported (no optimality assertion)")
    return 0


def cmd_simulate(args) -> int:
    doc, sha = _load_config(args.config)
    model = _model_from_doc(doc, None)
    service = _per_action_service(doc, model)
    sim = _sim_settings(doc, args.seed)
    thresholds = sim["thresholds"]
    if thresholds is None:
        thresholds = list(range(model.buffer_size))
    writer = _RunWriter(
        "simulate",
        args.config,
        sha,
        args.out,
        {"seed": sim["seed"], "threads": args.threads},
    )
    rows = []
    summary = []
    for T in thresholds:
        res = simulate(
            SimConfig(
                model=model,
                dist_a=service["a"],
                dist_b=service["b"],
                threshold=int(T),
                horizon=sim["horizon"],
                replications=sim["replications"],
                base_seed=sim["seed"],
            ),
            threads=args.threads,
        )
        for rep in range(sim["replications"]):
            rows.append(
                [T, rep, float(res.throughputs[rep])]
                + [int(res.counts[k][rep]) for k in (
                    "arrivals", "accepted", "blocked", "served_success",
                    "served_fail", "in_system_at_horizon",
                )]
            )
        summary.append(
            {
                "threshold": int(T),
                "mean": res.mean,
                "ci_half_width": res.ci_half_width,
                "seed": sim["seed"],
                "horizon": sim["horizon"],
                "replications": sim["replications"],
            }
        )
    writer.write_csv(
        "simulation.csv",
        [
            "threshold", "replication", "throughput", "arrivals", "accepted",
            "blocked", "served_success", "served_fail", "in_system_at_horizon",
        ],
        rows,
    )
    writer.write_json("simulation.json", {"runs": summary})
    writer.finish()
    print(f"simulate: {len(thresholds)} threshold(s) x {sim['replications']} replications")
    return 0


# -------- entry point --------


def _add_common(p: argparse.ArgumentParser, *, tol=False, gamma=False, seed=False, simulate_flag=False):
    p.add_argument("--config", required=True, help="path to a JSON config (schema 1)")
    p.add_argument("--out", default=".", help="output directory (default: current)")
    p.add_argument(
        "--threads",
        type=int,
        default=int(os.environ.get("SMDP_THREADS", "1")),
        help="worker threads for sweeps/replications (env SMDP_THREADS)",
    )
    if tol:
        p.add_argument("--tol", type=float, default=1e-10, help="value-iteration residual tolerance")
        p.add_argument("--max-iter", type=int, default=10**6, help="sweep budget before giving up")
    if gamma:
        p.add_argument("--gamma", type=float, default=None, help="override the model's discount rate")
    if seed:
        p.add_argument("--seed", type=int, default=None, help="override the simulation base seed")
    if simulate_flag:
        p.add_argument("--simulate", action="store_true", help="add simulated CIs per threshold")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="txpolicy",
        description="Solve, evaluate and simulate threshold transmit-path policies.",
    )
    parser.add_argument("--version", action="version", version=f"txpolicy {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="value-iterate a config; emit value curve and policy")
    _add_common(p, tol=True, gamma=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="throughput vs threshold curve (CSV: threshold,throughput_analytic,throughput_alt,agreement_gap)")
    _add_common(p, gamma=True, seed=True, simulate_flag=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("check", help="structural property report (JSON)")
    _add_common(p, tol=True, gamma=True)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("simulate", help="event-driven simulation with confidence intervals")
    _add_common(p, seed=True)
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NoConvergence as exc:
        print(f"no convergence: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
