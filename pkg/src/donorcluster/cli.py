"""Command-line entry point.

Exit codes: 0 success, 2 configuration or usage error, 3 runtime failure.
The default output directory is ``$DONORCLUSTER_OUT_DIR`` or ``./results``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
OUT_DIR_ENV = "DONORCLUSTER_OUT_DIR"


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _print_json(data) -> None:
    print(json.dumps(data, indent=2, sort_keys=True, default=float))


def cmd_list(args) -> int:
    from .experiments import checked_config, list_scenarios

    for name in list_scenarios():
        cfg = checked_config(name)
        print(f"{name:40s} {cfg['kernel']:22s} {cfg.get('description', '')}")
    return EXIT_OK


def cmd_validate(args) -> int:
    from .experiments import ConfigError, load_config, validate_config

    try:
        config, text = load_config(args.config)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"{args.config}: {e}", file=sys.stderr)
        return EXIT_CONFIG
    errors = validate_config(config, text)
    for e in errors:
        print(f"{args.config}: {e}", file=sys.stderr)
    if errors:
        return EXIT_CONFIG
    print(f"{args.config}: ok")
    return EXIT_OK


def cmd_run(args) -> int:
    from .experiments import ConfigError, run_scenario

    out_dir = args.out_dir or os.environ.get(OUT_DIR_ENV, "results")
    try:
        result = run_scenario(args.config, out_dir, seed=args.seed, jobs=args.jobs)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"{args.config}: {e}", file=sys.stderr)
        return EXIT_CONFIG
    m = result.manifest
    print(f"{result.name}: {m['cells']} cells, {len(result.failed)} failed, {m['wall_time_s']:.1f} s -> {result.out_dir}")
    for f in m["files"]:
        print(f"  {f['path']}  {f['rows']} rows  sha256 {f['sha256'][:16]}")
    return EXIT_RUNTIME if result.failed and len(result.failed) == m["cells"] else EXIT_OK


def cmd_sample_donors(args) -> int:
    from .error_model import sample_feasible_donor_count

    stats = sample_feasible_donor_count(
        (args.low, args.high), args.min_gap, args.trials, args.seed if args.seed is not None else 0
    )
    _print_json(stats.to_dict())
    return EXIT_OK


def _system(args):
    from .spins import SpinSystem

    return SpinSystem.from_hyperfine(*args.hyperfine, b0=args.b0, j_exchange=args.j, gradient_db=args.gradient)


def cmd_compile_gate(args) -> int:
    from .compiler import CompileOptions, GateSpec, compile_gate, pulse_inventory, verify_compiled

    sys_ = _system(args)
    gate = GateSpec(args.gate, tuple(args.controls), tuple(args.targets), scheme=args.scheme)
    gate.validate_for(sys_)
    opts = CompileOptions(esr_rabi_mhz=args.rabi, nmr_b1_t=args.nmr_b1, driven_electron=args.driven_electron)
    seq = compile_gate(gate, sys_, options=opts)
    if args.json:
        print(seq.to_json())
    else:
        print(f"{'#':>3s}  {'kind':4s} {'carrier_MHz':>16s} {'rabi_MHz':>10s} {'dur_us':>9s}  label")
        for i, p in enumerate(seq):
            print(f"{i:3d}  {p.kind:4s} {p.carrier_mhz:16.6f} {p.rabi_mhz:10.5f} {p.duration_us:9.3f}  {p.label}")
        inv = pulse_inventory(seq)
        print(f"ESR {inv['esr']}  NMR {inv['nmr']} (segments {inv['nmr_segments']})  duration {inv['duration_us']:.3f} us")
    if args.verify:
        v = verify_compiled(gate, seq, sys_, steps_per_cycle=args.steps_per_cycle)
        print(f"verify: fidelity {v.fidelity:.6f} leakage {v.leakage:.2e} {'PASS' if v.passed else 'FAIL'}", file=sys.stderr)
        if not v.passed:
            return EXIT_RUNTIME
    return EXIT_OK


def cmd_qec(args) -> int:
    from .qec import assign_to_chain, build_xzzx_toric, code_distance, schedule_is_local, syndrome_schedule

    code = build_xzzx_toric(args.l1, args.l2)
    if args.action == "build":
        data = code.to_dict()
        if args.chain:
            a = assign_to_chain(code, args.chain, shared_ancillas=not args.dedicated, closed=args.ring, locality=args.locality)
            data["assignment"] = a.to_dict()
            data["schedule"] = [
                {"check": g.check, "gate": g.spec.to_dict(), "clusters": list(g.clusters)} for g in syndrome_schedule(code, a)
            ]
        _print_json(data)
        return EXIT_OK
    report = {
        "n": code.n_qubits,
        "k": code.k,
        "checks_commute": code.checks_commute(),
        "distance": code_distance(code, max_weight=args.max_weight),
    }
    ok = report["checks_commute"] and report["distance"] is not None
    if args.chain:
        a = assign_to_chain(code, args.chain, shared_ancillas=not args.dedicated, closed=args.ring, locality=args.locality)
        sched = syndrome_schedule(code, a)
        report["schedule_gates"] = len(sched)
        report["schedule_local"] = schedule_is_local(sched, a)
        ok = ok and report["schedule_local"]
    _print_json(report)
    return EXIT_OK if ok else EXIT_RUNTIME


def build_parser() -> argparse.ArgumentParser:
    from . import __version__

    parser = argparse.ArgumentParser(prog="donorcluster", description="Donor-cluster spin-qubit modelling toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("list", help="list built-in scenarios")
    p.set_defaults(func=cmd_list)

    p = sub.add_parser("validate", help="check a scenario config without running it")
    p.add_argument("config", help="path or built-in scenario name")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="run a scenario sweep")
    p.add_argument("config", help="path or built-in scenario name")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--jobs", type=int, default=None, help="worker processes")
    p.add_argument("--out-dir", default=None, help=f"output directory (default ${OUT_DIR_ENV} or ./results)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sample-donors", help="Monte Carlo of resolvable hyperfine couplings per cluster")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--min-gap", type=float, default=10.0)
    p.add_argument("--low", type=float, default=0.6)
    p.add_argument("--high", type=float, default=304.0)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_sample_donors)

    p = sub.add_parser("compile-gate", help="compile a nuclear gate into ESR/NMR pulses")
    p.add_argument("--hyperfine", type=_floats, action="append", required=True, help="couplings of one cluster (MHz); repeat per cluster")
    p.add_argument("--gate", choices=["CZ", "CNOT", "Toffoli", "CXX"], required=True)
    p.add_argument("--controls", type=_ints, default=[])
    p.add_argument("--targets", type=_ints, default=[])
    p.add_argument("--scheme", choices=["direct", "esr_assisted", "nmr_assisted"], default="direct")
    p.add_argument("--b0", type=float, default=1.35, help="static field (T)")
    p.add_argument("--j", type=float, default=0.0, help="exchange (MHz)")
    p.add_argument("--gradient", type=float, default=0.0, help="field offset of the second cluster (T)")
    p.add_argument("--rabi", type=float, default=0.5, help="ESR Rabi frequency (MHz)")
    p.add_argument("--nmr-b1", type=float, default=1e-3, help="NMR drive amplitude (T)")
    p.add_argument("--driven-electron", type=int, default=None)
    p.add_argument("--json", action="store_true", help="print the pulse sequence as JSON")
    p.add_argument("--verify", action="store_true", help="simulate the sequence against the ideal gate")
    p.add_argument("--steps-per-cycle", type=int, default=50)
    p.set_defaults(func=cmd_compile_gate)

    p = sub.add_parser("qec", help="XZZX toric code construction and checks")
    p.add_argument("action", choices=["build", "verify"])
    p.add_argument("--l1", type=int, default=3)
    p.add_argument("--l2", type=int, default=2)
    p.add_argument("--max-weight", type=int, default=None, help="distance search limit")
    p.add_argument("--chain", type=_ints, default=None, help="cluster sizes, e.g. 4,4,4,4,4,4")
    p.add_argument("--ring", action="store_true", help="close the chain into a ring")
    p.add_argument("--dedicated", action="store_true", help="one ancilla per check")
    p.add_argument("--locality", choices=["gate", "check"], default="gate")
    p.set_defaults(func=cmd_qec)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    from .compiler import CompileError
    from .experiments import ConfigError
    from .qec import InfeasibleLayoutError
    from .spins import InvalidSystemError

    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, InvalidSystemError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CompileError, InfeasibleLayoutError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
