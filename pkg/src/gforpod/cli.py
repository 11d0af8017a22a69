"""Command-line front end.

Every verb reads JSON inputs, writes CSV/JSON into ``--out`` and returns 0
only when everything it was asked to do succeeded.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .assembly import AssemblyError, Event, SimulationError, assemble, simulate
from .design import DesignError, DesignSpec, design_pod
from .kernels import available_backends
from .modal import eigen_analysis, linearize, modes_csv
from .perunit import NetworkError, PowerFlowError, solve_powerflow
from .scenarios import (
    ScenarioMatrix, SweepSpec, comparison_csv, parse_grid, run_scenarios, run_sweep,
)
from .system import SystemSpec

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2


def _write(out: Path, name: str, text: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    with open(path, "w", newline="\n") as fh:
        fh.write(text)
    return path


def _design_json(pod, report) -> str:
    return json.dumps({"pod": pod.to_dict(), "report": report.to_dict()}, indent=2) + "\n"


def cmd_pf(args) -> int:
    spec = SystemSpec.load(args.spec)
    spec.validate()
    buses, branches = spec.network()
    sol = solve_powerflow(buses, branches, tol=spec.solver.pf_tol)
    _write(args.out, "pf.csv", sol.to_csv())
    return EXIT_OK


def cmd_modes(args) -> int:
    spec = SystemSpec.load(args.spec)
    model = assemble(spec, backend=args.backend)
    lin = linearize(model, inputs=[])
    _write(args.out, "modes.csv", modes_csv(eigen_analysis(lin), lin.state_labels))
    return EXIT_OK


def cmd_sim(args) -> int:
    spec = SystemSpec.load(args.spec)
    model = assemble(spec, backend=args.backend)
    events = sorted((Event.parse(e) for e in args.event), key=lambda e: e.time)
    dt = args.dt if args.dt is not None else spec.solver.dt
    rec = args.record_interval if args.record_interval is not None else spec.solver.record_interval
    ts = simulate(model, events, t_end=args.T, dt=dt, record_interval=rec,
                  method=args.method or spec.solver.method)
    _write(args.out, "timeseries.csv", ts.to_csv())
    return EXIT_OK


def cmd_sweep(args) -> int:
    spec = SystemSpec.load(args.spec)
    sweep = SweepSpec(args.param, parse_grid(args.grid))
    res = run_sweep(spec, sweep, workers=args.workers, backend=args.backend)
    _write(args.out, "sweep.csv", res.to_csv())
    failed = [p for p in res.points if not p.result.ok]
    for p in failed:
        print(f"sweep point {p.value:g}: {p.result.error}", file=sys.stderr)
    return EXIT_FAILED if failed else EXIT_OK


def cmd_design(args) -> int:
    spec = SystemSpec.load(args.spec)
    ds = DesignSpec(channel=args.channel, converter=args.converter, dzeta=args.dzeta,
                    zeta_target=args.zeta_target, dk=args.dk, k_min=args.kmin,
                    k_max=args.kmax, n_s=args.ns, t_f=args.tf, t_w=args.tw,
                    limit=args.limit)
    pod, report = design_pod(spec, ds)
    _write(args.out, "design.json", _design_json(pod, report))
    return EXIT_OK


def cmd_compare(args) -> int:
    path = Path(args.matrix)
    raw = json.loads(path.read_text())
    matrix = ScenarioMatrix.from_dict(raw, base_dir=path.parent)
    code = EXIT_OK
    if matrix.pod_p is None or matrix.pod_q is None:
        ds = DesignSpec(**raw.get("design", {}))
        designed, reports = matrix.with_designs(ds, backend=args.backend)
        matrix = replace(matrix, pod_p=matrix.pod_p or designed.pod_p,
                         pod_q=matrix.pod_q or designed.pod_q)
        for ch, rep in reports.items():
            pod = designed.pod_p if ch == "P" else designed.pod_q
            _write(args.out, f"design_{ch}.json", _design_json(pod, rep))
    results = run_scenarios(matrix, workers=args.workers, backend=args.backend)
    _write(args.out, "compare.csv", comparison_csv(results))
    for r in results:
        if not r.ok:
            print(f"scenario {r.scenario}: {r.error}", file=sys.stderr)
            code = EXIT_FAILED
    sw = raw.get("sweep")
    if sw:
        sweep = SweepSpec(sw["param"], parse_grid(str(sw["grid"])), matrix.selection)
        for name in sw.get("scenarios", list(matrix.scenarios)):
            res = run_sweep(matrix.variant(name), sweep, workers=args.workers,
                            backend=args.backend)
            _write(args.out, f"sweep_{name}.csv", res.to_csv())
            if any(not p.result.ok for p in res.points):
                code = EXIT_FAILED
    return code


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gforpod", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")
    common.add_argument("--backend", choices=sorted(available_backends()), default=None,
                        help="derivative kernel (default: compiled when available)")
    sub = p.add_subparsers(dest="verb", required=True)

    s = sub.add_parser("pf", parents=[common], help="power flow -> pf.csv")
    s.add_argument("spec")
    s.set_defaults(func=cmd_pf)

    s = sub.add_parser("modes", parents=[common], help="modal analysis -> modes.csv")
    s.add_argument("spec")
    s.set_defaults(func=cmd_modes)

    s = sub.add_parser("sim", parents=[common], help="time simulation -> timeseries.csv")
    s.add_argument("spec")
    s.add_argument("--event", action="append", default=[],
                   help="e.g. load:bus=2,factor=1.01,t=1 (repeatable)")
    s.add_argument("--dt", type=float, default=None)
    s.add_argument("--T", type=float, default=10.0, help="end time [s]")
    s.add_argument("--record-interval", type=float, default=None)
    s.add_argument("--method", choices=("rk4", "trapezoidal"), default=None)
    s.set_defaults(func=cmd_sim)

    s = sub.add_parser("sweep", parents=[common], help="parameter sweep -> sweep.csv")
    s.add_argument("spec")
    s.add_argument("--param", required=True, help="kind:id:field, e.g. branch:2-3:x")
    s.add_argument("--grid", required=True, help="start:stop:count or a comma list")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("design", parents=[common], help="POD design -> design.json")
    s.add_argument("spec")
    s.add_argument("--channel", choices=("P", "Q"), default="P")
    s.add_argument("--converter", default=None)
    s.add_argument("--dzeta", type=float, default=0.10)
    s.add_argument("--zeta-target", type=float, default=None)
    s.add_argument("--dk", type=float, default=1.0)
    s.add_argument("--kmin", type=float, default=200.0)
    s.add_argument("--kmax", type=float, default=400.0)
    s.add_argument("--ns", type=int, default=2)
    s.add_argument("--tf", type=float, default=0.1)
    s.add_argument("--tw", type=float, default=5.0)
    s.add_argument("--limit", type=float, default=0.2)
    s.set_defaults(func=cmd_design)

    s = sub.add_parser("compare", parents=[common], help="scenario matrix -> compare.csv")
    s.add_argument("matrix")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_compare)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NetworkError, PowerFlowError, AssemblyError, SimulationError, DesignError,
            LookupError, ValueError, RuntimeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
