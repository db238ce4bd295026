"""Command-line front end: list, rollout, compare, serve."""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import os
import socket
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .env import EnvConfig, make_env
from .errors import ConfigurationError, EngineError, PolicyError, ProtocolError
from .eval import (EvaluationReport, attach_gap, build_report, rollout)
from .models import available_models, model_registry
from .oracle import OcpSpec, mpc_policy
from .policy import constant_policy, external_policy, random_policy
from .report import (render_return_histogram, render_trajectory_figure,
                     write_report_json, write_returns_csv, write_trajectory_csv)
from .scenario import Scenario, bundled_scenarios, load_bundled_scenario, load_scenario
from .wire import serve_environment

OUT_DIR_ENV = "PROCBENCH_OUT"
SCENARIO_DIR_ENV = "PROCBENCH_SCENARIOS"

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_PROTOCOL = 3

_ORACLE_KEYS = ("max_iterations", "tolerance", "fd_step", "penalty_weight",
                "penalty_escalations", "constraint_margin_frac", "multistart")


def _resolve_scenario(spec: str) -> Scenario:
    path = Path(spec)
    if path.exists():
        return load_scenario(path)
    custom_dir = os.environ.get(SCENARIO_DIR_ENV)
    if custom_dir:
        candidate = Path(custom_dir) / f"{spec}.yaml"
        if candidate.exists():
            return load_scenario(candidate)
    return load_bundled_scenario(spec)


def _oracle_overrides(sc: Scenario) -> dict:
    doc = sc.oracle or {}
    out = {}
    for key in _ORACLE_KEYS:
        if key in doc:
            value = doc[key]
            out[key] = int(value) if key in ("max_iterations", "penalty_escalations",
                                             "multistart") else float(value)
    return out


def _policy_factory(spec: str, sc: Scenario, config: EnvConfig, timeout: float):
    """Translate a --policy spec string into (label, factory)."""
    probe = make_env(config)
    if spec == "oracle":
        horizon = int((sc.oracle or {}).get("horizon", 10))
        ocp = OcpSpec.from_environment(probe, horizon, **_oracle_overrides(sc))
        return "oracle", lambda: mpc_policy(ocp)
    if spec == "random":
        return "random", lambda: random_policy(probe.a_low, probe.a_high)
    if spec.startswith("constant:"):
        values = [float(v) for v in spec.split(":", 1)[1].split(",")]
        label = spec
        try:
            constant_policy(values, probe.a_low, probe.a_high)
        except ValueError as exc:
            raise ConfigurationError("policy", str(exc))
        return label, lambda: constant_policy(values, probe.a_low, probe.a_high)
    if spec.startswith("external:") or spec.startswith("external-tcp:"):
        tcp = spec.startswith("external-tcp:")
        target = spec.split(":", 1)[1]
        label = spec
        kwargs = dict(env_name=probe.model.name, obs_dim=probe.n_obs,
                      action_dim=probe.model.n_u, T=probe.config.T,
                      timeout=timeout, tcp=tcp)
        return label, lambda: external_policy(target, **kwargs)
    raise ConfigurationError(
        "policy", f"unknown policy spec {spec!r}; use oracle | random | "
                  "constant:<v1,v2,...> | external:<command> | external-tcp:<host:port>")


def _write_manifest(out: Path, command: str, sc: Scenario, policies: list[str],
                    args) -> None:
    manifest = {
        "engine_version": __version__,
        "command": command,
        "scenario": {"path": sc.path, "name": sc.name, "document": sc.document},
        "policies": policies,
        "episodes": args.episodes,
        "seed": args.seed,
        "jobs": args.jobs,
        "gamma": args.gamma,
        "normalization": getattr(args, "normalization", "per_step"),
        "output_dir": str(out),
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True)
                                       + "\n")


def _out_dir(args) -> Path:
    base = args.out or os.environ.get(OUT_DIR_ENV) or "runs"
    out = Path(base)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _run_policy(label, factory, config, args) -> tuple[EvaluationReport, list]:
    result = rollout(config, factory, n_episodes=args.episodes,
                     master_seed=args.seed, parallelism=args.jobs,
                     gamma=args.gamma, keep_trajectories=True)
    report = build_report(label, result, steps=config.T, gamma=args.gamma)
    return report, result.trajectories


def cmd_list(args) -> int:
    print("models:")
    for name in available_models():
        m = model_registry(name)
        dist = ", ".join(m.disturbance_names) if m.n_d else "none"
        print(f"  {name}  (states={m.n_x}, inputs={m.n_u}, disturbances: {dist})")
    print("scenarios (bundled):")
    for name in bundled_scenarios():
        sc = load_bundled_scenario(name)
        line = f"  {name}  (model={sc.model}, T={sc.T}, tsim={sc.tsim}"
        if sc.constraints:
            cons = ", ".join(f"{c.state} {c.sense} {c.bound:g}"
                             for c in sc.constraints)
            line += f", constraints: {cons}"
        print(line + ")")
    custom_dir = os.environ.get(SCENARIO_DIR_ENV)
    if custom_dir and Path(custom_dir).is_dir():
        files = sorted(Path(custom_dir).glob("*.yaml"))
        if files:
            print(f"scenarios ({custom_dir}):")
            for f in files:
                print(f"  {f.stem}")
    return EXIT_OK


def cmd_rollout(args) -> int:
    sc = _resolve_scenario(args.scenario)
    config = EnvConfig.from_scenario(sc)
    label, factory = _policy_factory(args.policy, sc, config, args.timeout)
    out = _out_dir(args)
    _write_manifest(out, "rollout", sc, [args.policy], args)

    report, trajectories = _run_policy(label, factory, config, args)
    for traj in trajectories:
        write_trajectory_csv(out / f"trajectory_ep{traj.episode:04d}.csv", traj)
    write_returns_csv(out / "returns.csv", [report])
    write_report_json(out / "report.json", sc.name, [report])
    if trajectories:
        m = model_registry(sc.model)
        render_trajectory_figure(out / "fig_trajectory.png", trajectories[0], sc,
                                 list(m.state_names), list(m.input_names))
    render_return_histogram(out / "fig_returns.png", [report], sc.name)

    print(f"policy {label}: median={report.median_return:.6g} "
          f"mad={report.mad:.6g} violation_p={report.violation_probability:.4f} "
          f"episodes={report.returns.size}/{report.n_episodes}")
    if report.solver_diagnostics:
        flags = [s for d in report.solver_diagnostics for s in d["solves"]
                 if not s["converged"]]
        if flags:
            print(f"warning: {len(flags)} oracle solves hit the iteration limit")
    print(f"outputs in {out}")
    if report.failures:
        return EXIT_PROTOCOL
    return EXIT_OK


def _format_table(reports: list[EvaluationReport]) -> str:
    headers = ["policy", "median", "MAD", "std", "gap", "violation_p"]
    rows = []
    for rep in reports:
        rows.append([
            rep.policy_label,
            f"{rep.median_return:.6g}",
            f"{rep.mad:.6g}",
            "-" if rep.std is None else f"{rep.std:.6g}",
            "-" if rep.optimality_gap is None else f"{rep.optimality_gap:.6g}",
            f"{rep.violation_probability:.4f}",
        ])
    widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    for r in rows:
        lines.append("  ".join(v.ljust(w) for v, w in zip(r, widths)))
    return "\n".join(lines)


def cmd_compare(args) -> int:
    sc = _resolve_scenario(args.scenario)
    config = EnvConfig.from_scenario(sc)
    if len(args.policies) < 2:
        raise ConfigurationError("policies", "compare needs at least two policies")
    if "oracle" not in args.policies and not args.reference:
        raise ConfigurationError(
            "policies", "include the oracle or name a --reference policy")
    reference_label = "oracle" if "oracle" in args.policies else args.reference
    if reference_label not in args.policies:
        raise ConfigurationError("reference", f"{reference_label!r} not among policies")

    out = _out_dir(args)
    _write_manifest(out, "compare", sc, list(args.policies), args)

    reports: list[EvaluationReport] = []
    protocol_failures = False
    for spec in args.policies:
        label, factory = _policy_factory(spec, sc, config, args.timeout)
        report, trajectories = _run_policy(label, factory, config, args)
        reports.append(report)
        protocol_failures = protocol_failures or bool(report.failures)
        if trajectories:
            safe = label.replace(":", "_").replace("/", "_").replace(" ", "_")
            write_trajectory_csv(out / f"trajectory_{safe}_ep0000.csv",
                                 trajectories[0])
    reference = next(r for r in reports if r.policy_label == reference_label)
    for rep in reports:
        attach_gap(rep, reference, normalization=args.normalization, steps=config.T)

    write_returns_csv(out / "returns.csv", reports)
    write_report_json(out / "report.json", sc.name, reports)
    render_return_histogram(out / "fig_returns.png", reports, sc.name)
    table = _format_table(reports)
    (out / "table.txt").write_text(table + "\n")
    print(table)
    print(f"outputs in {out}")
    return EXIT_PROTOCOL if protocol_failures else EXIT_OK


def cmd_serve(args) -> int:
    sc = _resolve_scenario(args.scenario)
    env = make_env(EnvConfig.from_scenario(sc))
    if args.port is not None:
        server = socket.create_server(("127.0.0.1", args.port))
        try:
            conn, _ = server.accept()
            with conn:
                rfile = conn.makefile("r")
                wfile = conn.makefile("w")
                serve_environment(env, rfile, wfile)
        finally:
            server.close()
    else:
        serve_environment(env, sys.stdin, sys.stdout)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="procbench",
        description="Benchmark engine for learning-based process control")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("list", help="show models and bundled scenarios")

    def common(p):
        p.add_argument("--scenario", required=True,
                       help="scenario file path or bundled scenario name")
        p.add_argument("--episodes", type=int, default=10)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=None,
                       help=f"output directory (default ${OUT_DIR_ENV} or ./runs)")
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--gamma", type=float, default=1.0)
        p.add_argument("--timeout", type=float, default=10.0,
                       help="external policy reply timeout [s]")
        p.add_argument("--normalization", default="per_step",
                       choices=("none", "per_step", "minmax"))

    p_roll = sub.add_parser("rollout", help="evaluate one policy on a scenario")
    common(p_roll)
    p_roll.add_argument("--policy", required=True,
                        help="oracle | random | constant:<v,..> | external:<cmd> "
                             "| external-tcp:<host:port>")

    p_cmp = sub.add_parser("compare", help="side-by-side policy comparison")
    common(p_cmp)
    p_cmp.add_argument("--policies", nargs="+", required=True)
    p_cmp.add_argument("--reference", default=None,
                       help="gap reference when the oracle is not included")

    p_srv = sub.add_parser("serve",
                           help="serve episodes over stdio or TCP (wire protocol)")
    p_srv.add_argument("--scenario", required=True)
    p_srv.add_argument("--port", type=int, default=None,
                       help="listen on 127.0.0.1:PORT instead of stdio")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"list": cmd_list, "rollout": cmd_rollout, "compare": cmd_compare,
                "serve": cmd_serve}
    try:
        return handlers[args.command](args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ProtocolError, PolicyError) as exc:
        print(f"protocol error: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
