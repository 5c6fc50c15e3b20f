"""Command-line entry points.

Exit codes: 0 on success/pass, 1 when the requested design is infeasible,
2 when a run fails (simulation blowup or non-convergence, solver stall,
steady-state mismatch), 3 on bad input (unreadable file, invalid JSON,
schema violation).
"""

import argparse
import json
import sys

import numpy as np

from .errors import (
    ConfigError,
    NetpassError,
    NotPassivizableError,
    NumericalBlowupError,
)
from .harness import (
    _round_floats,
    build_system_parts,
    config_from_dict,
    generate_case_study,
    load_config,
    synthesize_certified,
    verify,
    emit_report,
)
from .netopt import SolveStatus, solve
from .passivation import check_design, passivation_feasible
from .sim import ClosedLoopSystem, simulate

__all__ = ["main"]

EXIT_OK = 0
EXIT_INFEASIBLE = 1
EXIT_RUN_FAILED = 2
EXIT_BAD_INPUT = 3


def _print_json(payload, path=None):
    text = json.dumps(_round_floats(payload), indent=2, sort_keys=True) + "\n"
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    sys.stdout.write(text)


def _load(path):
    try:
        return load_config(path)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}")


def _apply_overrides(config, args):
    updates = {}
    if getattr(args, "hybrid", False):
        updates["gain_mode"] = "hybrid"
    if getattr(args, "vsr", None) is not None:
        try:
            vsr = tuple(int(v) for v in args.vsr.split(",") if v != "")
        except ValueError:
            raise ConfigError(f"--vsr must be a comma-separated list of "
                              f"integers, got {args.vsr!r}")
        updates["self_regulating"] = vsr
    if getattr(args, "epsilon", None) is not None:
        if args.epsilon <= 0:
            raise ConfigError("--epsilon must be positive")
        updates["epsilon"] = args.epsilon
    if not updates:
        return config
    data = config.to_dict()
    if "gain_mode" in updates:
        data["gain_mode"] = updates["gain_mode"]
    if "self_regulating" in updates:
        data["self_regulating"] = list(updates["self_regulating"])
    if "epsilon" in updates:
        data["epsilon"] = updates["epsilon"]
    return config_from_dict(data)


def _cmd_check(args):
    config = _load(args.config)
    graph, agents, _ = build_system_parts(config)
    rho = agents.rho_vector
    components = graph.connected_components()
    sums = [float(np.sum(rho[list(c)])) for c in components]
    feasible = passivation_feasible(rho, graph)
    _print_json({
        "feasible": feasible,
        "rho": rho.tolist(),
        "component_vertices": [list(c) for c in components],
        "component_shortage_sums": sums,
    }, getattr(args, "out", None))
    return EXIT_OK if feasible else EXIT_INFEASIBLE


def _cmd_synthesize(args):
    config = _apply_overrides(_load(args.config), args)
    graph, agents, controllers = build_system_parts(config)
    rho = agents.rho_vector
    try:
        design, _, probe, escalations = synthesize_certified(
            config, graph, agents, controllers)
    except NotPassivizableError as exc:
        _print_json({"feasible": False, "reason": str(exc)},
                    getattr(args, "out", None))
        return EXIT_INFEASIBLE
    certificate = check_design(rho, design.alpha, design.beta, graph)
    _print_json({
        "feasible": True,
        "mode": config.gain_mode,
        "threshold": design.threshold,
        "epsilon": design.epsilon,
        "escalations": escalations,
        "alpha": design.alpha.tolist(),
        "beta": design.beta.tolist(),
        "min_eig": certificate.min_eig,
        "positive_definite": certificate.positive_definite,
        "convexity_probe": probe,
    }, getattr(args, "out", None))
    return EXIT_OK if certificate.positive_definite else EXIT_RUN_FAILED


def _cmd_simulate(args):
    config = _apply_overrides(_load(args.config), args)
    graph, agents, controllers = build_system_parts(config)
    try:
        design, _, _, _ = synthesize_certified(config, graph, agents,
                                               controllers)
    except NotPassivizableError as exc:
        _print_json({"feasible": False, "reason": str(exc)})
        return EXIT_INFEASIBLE
    system = ClosedLoopSystem(graph, agents, controllers, design)
    try:
        trajectory = simulate(system, x0=config.x0, dt=config.dt,
                              t_max=config.t_max,
                              steady_tol=config.steady_tol, seed=config.seed)
    except NumericalBlowupError as exc:
        _print_json({"converged": False, "blowup": True, "reason": str(exc)})
        return EXIT_RUN_FAILED
    if args.out_csv:
        _write_trajectory(trajectory, args.out_csv)
    _print_json({
        "converged": trajectory.converged,
        "residual": trajectory.residual,
        "t_end": float(trajectory.times[-1]),
        "y_ss": None if trajectory.y_ss is None else trajectory.y_ss.tolist(),
    }, getattr(args, "out", None))
    return EXIT_OK if trajectory.converged else EXIT_RUN_FAILED


def _write_trajectory(trajectory, path):
    n = trajectory.x_states.shape[0]
    m = trajectory.eta_states.shape[0]
    with open(path, "w") as fh:
        header = ["t"] + [f"x_{i}" for i in range(n)] \
            + [f"eta_{e}" for e in range(m)]
        fh.write(",".join(header) + "\n")
        for col, t in enumerate(trajectory.times):
            row = [f"{t:.12g}"]
            row += [f"{v:.12g}" for v in trajectory.x_states[:, col]]
            row += [f"{v:.12g}" for v in trajectory.eta_states[:, col]]
            fh.write(",".join(row) + "\n")


def _cmd_optimize(args):
    config = _apply_overrides(_load(args.config), args)
    graph, agents, controllers = build_system_parts(config)
    try:
        _, problem, probe, _ = synthesize_certified(config, graph, agents,
                                                    controllers)
    except NotPassivizableError as exc:
        _print_json({"feasible": False, "reason": str(exc)})
        return EXIT_INFEASIBLE
    minimizer = solve(problem, step=config.solver_step,
                      max_iter=config.solver_max_iter, tol=config.solver_tol)
    _print_json({
        "status": minimizer.status.value,
        "iterations": minimizer.iterations,
        "objective": minimizer.objective_value,
        "primal_residual": minimizer.primal_residual,
        "dual_residual": minimizer.dual_residual,
        "convexity_probe": probe,
        "y_star": minimizer.y_star.tolist(),
        "zeta_star": minimizer.zeta_star.tolist(),
    }, getattr(args, "out", None))
    return EXIT_OK if minimizer.status is SolveStatus.OPTIMAL \
        else EXIT_RUN_FAILED


def _verify_exit(report):
    if report.passed:
        return EXIT_OK
    if report.verdict == "infeasible":
        return EXIT_INFEASIBLE
    return EXIT_RUN_FAILED


def _cmd_verify(args):
    config = _load(args.config)
    report = verify(config)
    emit_report(report, json_path=args.out_json,
                trajectory_csv=args.out_trajectory, pairs_csv=args.out_pairs)
    _print_json(report.to_dict())
    return _verify_exit(report)


def _cmd_casestudy(args):
    config = generate_case_study(args.n, args.seed)
    if args.config_out:
        _dump_config(config, args.config_out)
    report = verify(config)
    emit_report(report, json_path=args.out_json,
                trajectory_csv=args.out_trajectory, pairs_csv=args.out_pairs)
    _print_json(report.to_dict())
    return _verify_exit(report)


def _dump_config(config, path):
    with open(path, "w") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="netpass",
        description="Passivation, simulation, and steady-state optimization "
                    "for diffusively coupled networks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="report whether a scenario admits a "
                                     "passivizing network gain")
    p.add_argument("config")
    p.add_argument("--out", help="also write the JSON result to this file")
    p.set_defaults(func=_cmd_check)

    p = sub.add_parser("synthesize", help="compute network (and optional "
                                          "vertex) gains with a certificate")
    p.add_argument("config")
    p.add_argument("--hybrid", action="store_true",
                   help="force hybrid mode regardless of the config")
    p.add_argument("--vsr", help="comma-separated self-regulating vertices")
    p.add_argument("--epsilon", type=float, help="override the gain margin")
    p.add_argument("--out", help="also write the JSON result to this file")
    p.set_defaults(func=_cmd_synthesize)

    p = sub.add_parser("simulate", help="integrate the closed loop until it "
                                        "settles")
    p.add_argument("config")
    p.add_argument("--hybrid", action="store_true")
    p.add_argument("--vsr")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--out-csv", help="write the trajectory CSV here")
    p.add_argument("--out", help="also write the JSON summary to this file")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("optimize", help="solve the regularized steady-state "
                                        "optimization")
    p.add_argument("config")
    p.add_argument("--hybrid", action="store_true")
    p.add_argument("--vsr")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--out", help="also write the JSON result to this file")
    p.set_defaults(func=_cmd_optimize)

    p = sub.add_parser("verify", help="synthesize, simulate, optimize, and "
                                      "compare steady states")
    p.add_argument("config")
    p.add_argument("--out-json", help="write the JSON report here")
    p.add_argument("--out-trajectory", help="write the trajectory CSV here")
    p.add_argument("--out-pairs", help="write the per-vertex pair CSV here")
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("casestudy", help="generate the randomized traffic "
                                         "scenario and verify it")
    p.add_argument("--n", type=int, required=True,
                   help="number of vehicles (complete graph)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--config-out", help="write the generated scenario here")
    p.add_argument("--out-json")
    p.add_argument("--out-trajectory")
    p.add_argument("--out-pairs")
    p.set_defaults(func=_cmd_casestudy)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_BAD_INPUT
    except NetpassError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_RUN_FAILED


if __name__ == "__main__":
    sys.exit(main())
