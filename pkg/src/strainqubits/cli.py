"""Command-line entry point: ``strainqubits <command> [--config ...]``.

Exit codes: 0 success, 2 configuration error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .coupling import QubitEnsemble, effective_matrices, geometry_hash
from .elasticity import NumericalError, SolverError
from .liouville import ConditioningError, CutoffError, LindbladFormError, MultipleSteadyStatesError
from .scenarios import (
    ConfigError,
    ResultTable,
    bundled_configs,
    load_config,
    resolve_positions,
    run_dicke,
    run_graph,
    run_scan,
    run_validate,
    spectrum_for,
)

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3

DEFAULT_CONFIGS = {
    "modes": "fig2a",
    "couplings": "fig2a",
    "scan": "fig2a",
    "graph": "fig4",
    "dicke": "fig5",
    "validate": "validate",
}

SOLVER_ERRORS = (SolverError, NumericalError, MultipleSteadyStatesError, ConditioningError, CutoffError,
                 LindbladFormError)


class SolverFailure(RuntimeError):
    pass


def _modes(cfg, args):
    spectrum = spectrum_for(cfg)
    path = Path(args.out) / f"{cfg.name}_modes.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    spectrum.to_csv(path)
    return [path]


def _couplings(cfg, args):
    spectrum = spectrum_for(cfg)
    z = resolve_positions(cfg, spectrum)
    q = cfg.qubits
    cm = effective_matrices(QubitEnsemble(z, q.detuning, q.rabi, q.kappa), spectrum)
    cm.metadata["geometry_hash"] = geometry_hash(cfg.device)
    path = Path(args.out) / f"{cfg.name}_couplings.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    cm.to_csv(path)
    return [path]


def _scan(cfg, args):
    return [run_scan(cfg, args.threads, args.seed).write(Path(args.out) / f"{cfg.name}.csv")]


def _graph(cfg, args):
    return [run_graph(cfg, args.threads).write(Path(args.out) / f"{cfg.name}_graph.csv")]


def _dicke(cfg, args):
    sweep, crit = run_dicke(cfg, args.threads)
    out = Path(args.out)
    return [sweep.write(out / f"{cfg.name}_dicke.csv"), crit.write(out / f"{cfg.name}_critical.csv")]


def _validate(cfg, args):
    table: ResultTable = run_validate(cfg, args.threads)
    path = table.write(Path(args.out) / f"{cfg.name}_validate.csv")
    for row in table.rows:
        print(f"modes={row[0]} cutoff={row[1]} E_N reduced={row[2]:.5f} full={row[3]:.5f} "
              f"pop.err={row[5]:.2e} {'ok' if row[6] else 'FAIL'}")
    if not all(row[-1] for row in table.rows):
        raise SolverFailure("reduced and explicit-boson models disagree")
    return [path]


COMMANDS = {
    "modes": (_modes, "dump the flexural mode spectrum"),
    "couplings": (_couplings, "dump lambda, G and Gamma for the configured qubits"),
    "scan": (_scan, "grid run over the [scan] block"),
    "graph": (_graph, "multipartite entanglement and QFI versus register size"),
    "dicke": (_dicke, "mean-field superradiance sweeps and critical couplings"),
    "validate": (_validate, "reduced model against the explicit-boson model"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="strainqubits", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=DEFAULT_CONFIGS[name],
                       help=f"INI file or bundled name ({', '.join(bundled_configs())})")
        p.add_argument("--out", default="results", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="sampling seed (unsigned 64-bit)")
        p.add_argument("--threads", type=int, default=1, help="worker threads for grid points")
        p.add_argument("--override", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override a config value; repeatable")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = list(args.override)
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
            return EXIT_CONFIG
        overrides.append(f"sampling.seed={args.seed}")
    if args.threads < 1:
        print("error: --threads must be positive", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config, overrides)
        written = COMMANDS[args.command][0](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverFailure, *SOLVER_ERRORS) as exc:
        print(f"solver failure in {type(exc).__module__.split('.')[-1]}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for path in written:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
