"""Command-line front end: ``loadcoupling {gen,solve,sweep,gadget,oracle}``.

Every subcommand writes its result to ``--out`` (stdout when omitted) and
returns 0; failures print a single ``error: ...`` line on stderr and return
a nonzero exit code.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .coupling import AssociationError, fixed_point
from .harness import load_sweep_spec, run_sweep
from .optimizer import (SUBSET_POLICIES, AlgorithmConfig, InfeasibleError, SearchSpaceError,
                        baseline_association, brute_force, relay_selection)
from .scenario import (GADGET_MC_UE_GAIN, HexNetParams, ScenarioError, generate_hexnet,
                       load_graph, load_scenario, mis_gadget, scenario_to_dict)

EXIT_ERROR = 1
EXIT_INFEASIBLE = 3


class CliError(Exception):
    def __init__(self, message, code=EXIT_ERROR):
        super().__init__(message)
        self.code = code


def _emit(text, out):
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _emit_json(doc, out):
    _emit(json.dumps(doc, indent=1) + "\n", out)


def _config(args, base=None):
    """AlgorithmConfig from ``base`` with the flags that were given applied."""
    base = base or AlgorithmConfig()
    over = {k: getattr(args, k) for k in ("tol", "eta", "eps1", "eps2")
            if getattr(args, k) is not None}
    if args.subset_policy is not None:
        over["subset_policy"] = args.subset_policy
    return replace(base, **over)


def load_association(s, path):
    """Association file: ``{"ue0": "mc1", ...}`` by name, or a list of cell ids."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: not valid JSON ({exc.msg})") from exc
    if isinstance(doc, list):
        return [int(c) for c in doc]
    if not isinstance(doc, dict):
        raise CliError(f"{path}: association must be an object or a list")
    cells = {s.cell_name(c): c for c in range(s.n_cells)}
    out = []
    for j in range(s.n_nodes):
        name = s.node_name(j)
        if name not in doc:
            raise CliError(f"{path}: no association for {name}")
        if doc[name] not in cells:
            raise CliError(f"{path}: {name} associated to unknown cell {doc[name]!r}")
        out.append(cells[doc[name]])
    return out


def solution_doc(s, a, res, method):
    topo = res.topology
    return {
        "method": method,
        "association": {s.node_name(j): s.cell_name(int(c)) for j, c in enumerate(a)},
        "energy": res.energy,
        "feasible": res.feasible,
        "converged": res.converged,
        "iterations": res.iterations,
        "cell_load": {s.cell_name(c): float(v) for c, v in enumerate(res.cell_load)},
        "loads": {f"{s.cell_name(c)}->{s.node_name(j)}": float(res.loads[s.link_index[(c, j)]])
                  for c, j in topo.links()},
    }


# -- subcommands ---------------------------------------------------------------------

def cmd_gen(args):
    params = HexNetParams(rcs_per_region=args.rcs_per_region,
                          ues_per_region=args.ues_per_region, demand_bps=args.demand,
                          candidate_set_size=args.candidates, rng_seed=args.seed)
    _emit_json(scenario_to_dict(generate_hexnet(params)), args.out)
    return 0


def cmd_solve(args):
    s = load_scenario(args.scenario)
    cfg = _config(args)
    if args.assoc is not None:
        a, method = load_association(s, args.assoc), "file"
    else:
        a, method = baseline_association(s), "baseline"
    if args.algo:
        a = relay_selection(s, a, cfg)
        method = "relay_selection"
    res = fixed_point(s, a, **cfg.solver)
    _emit_json(solution_doc(s, res.association, res, method), args.out)
    if not res.feasible:
        raise CliError("association is infeasible", EXIT_INFEASIBLE)
    return 0


def cmd_oracle(args):
    s = load_scenario(args.scenario)
    cfg = _config(args)
    a, _ = brute_force(s, guard=args.guard, **cfg.solver)
    res = fixed_point(s, a, **cfg.solver)
    _emit_json(solution_doc(s, a, res, "brute_force"), args.out)
    return 0


def cmd_gadget(args):
    s = mis_gadget(load_graph(args.graph), eps=args.eps, mc_ue_gain=args.mc_ue_gain)
    _emit_json(scenario_to_dict(s), args.out)
    return 0


def cmd_sweep(args):
    spec = load_sweep_spec(args.spec)
    over = {"config": _config(args, spec.config)}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.trials is not None:
        over["trials"] = args.trials
    spec = replace(spec, **over)
    report = run_sweep(spec, jobs=args.jobs)
    _emit(report.to_csv(), args.out)
    for p in report.points:
        if not p.trials_ok:
            print(f"warning: every trial infeasible at {p.demand_bps:g} bit/s",
                  file=sys.stderr)
    return 0


# -- parser ----------------------------------------------------------------------------------

def build_parser():
    algo = argparse.ArgumentParser(add_help=False)
    g = algo.add_argument_group("solver / algorithm")
    g.add_argument("--tol", type=float, help="fixed-point convergence tolerance")
    g.add_argument("--eta", type=int, help="maximum relay-selection rounds")
    g.add_argument("--eps1", type=float, help="energy-condition slack")
    g.add_argument("--eps2", type=float, help="pinned-load-condition slack")
    g.add_argument("--subset-policy", choices=SUBSET_POLICIES,
                   help="how the node subset of the improvement test is chosen")
    out = argparse.ArgumentParser(add_help=False)
    out.add_argument("--out", help="output file (default: stdout)")

    parser = argparse.ArgumentParser(
        prog="loadcoupling",
        description="Load-coupled energy minimization by relay and cell selection.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[out], help="generate a hexagonal scenario file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rcs-per-region", type=int, default=2)
    p.add_argument("--ues-per-region", type=int, default=20)
    p.add_argument("--demand", type=float, default=1e6, help="per-UE demand, bit/s")
    p.add_argument("--candidates", type=int, default=4, help="candidate set size")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("solve", parents=[algo, out],
                       help="energy, loads and feasibility of an association")
    p.add_argument("scenario")
    p.add_argument("--assoc", help="association file (default: best received power)")
    p.add_argument("--algo", action="store_true",
                   help="run relay selection starting from the association")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", parents=[algo, out], help="demand sweep to CSV")
    p.add_argument("spec", help="sweep spec file")
    p.add_argument("--seed", type=int, help="override the spec's seed base")
    p.add_argument("--trials", type=int, help="override the spec's trials per point")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gadget", parents=[out], help="independent-set gadget from a graph")
    p.add_argument("graph", help="graph file with num_nodes and edges")
    p.add_argument("--eps", type=float, default=0.05)
    p.add_argument("--mc-ue-gain", type=float, default=GADGET_MC_UE_GAIN)
    p.set_defaults(func=cmd_gadget)

    p = sub.add_parser("oracle", parents=[algo, out], help="brute-force optimum")
    p.add_argument("scenario")
    p.add_argument("--guard", type=int, default=10**6,
                   help="largest search space to enumerate")
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except InfeasibleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ScenarioError, AssociationError, SearchSpaceError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
