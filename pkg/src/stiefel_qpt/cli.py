"""Command-line entry point: generate channels, simulate data, fit, evaluate, run studies.

Exit codes: 0 success, 1 usage or validation error, 2 file I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

from . import io
from .channel import random_channel
from .experiments import STUDIES, run_study
from .experiments.common import resolve_threads
from .optimizer import STEPS, FitConfig, fit
from .tomography import evaluate, pauli_eigenstate_set, simulate_dataset, subsample

EXIT_USAGE = 1
EXIT_IO = 2


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _show_config(args):
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    print("config:", json.dumps(cfg, sort_keys=True, default=str))


def _writable(path):
    parent = Path(path).resolve().parent
    if not parent.is_dir():
        raise OSError(f"output directory does not exist: {parent}")


def cmd_gen_channel(args):
    if args.dim < 1:
        raise UsageError("--dim must be positive")
    if not 1 <= args.rank <= args.dim**2:
        raise UsageError(f"--rank must lie in [1, {args.dim**2}] for dim {args.dim}")
    _writable(args.out)
    ch = random_channel(args.dim, args.rank, args.seed)
    io.write_channel(args.out, ch)
    print(f"tp_defect {io.channel_file_defect(args.out):.3e}")


def cmd_simulate(args):
    ch = io.read_channel(args.channel)
    if not 1 <= args.qubits <= 6:
        raise UsageError("--qubits must lie in [1, 6]")
    if ch.dim != 2**args.qubits:
        raise UsageError(f"channel dimension {ch.dim} does not match {args.qubits} qubit(s)")
    if args.epsilon < 0 or not 0 < args.nu <= 1:
        raise UsageError("--epsilon must be >= 0 and --nu in (0, 1]")
    _writable(args.out)
    probes, meas = pauli_eigenstate_set(args.qubits)
    data = simulate_dataset(ch, probes, meas, args.epsilon, args.seed)
    if args.nu < 1:
        data = subsample(data, args.nu, args.seed + 1)
    io.write_dataset(args.out, data)
    print(f"records {len(data)}")


def cmd_fit(args):
    data = io.read_dataset(args.data)
    cfg = FitConfig(
        rank=args.rank,
        max_iters=args.max_iters,
        batch_size=args.batch_size,
        loss_tol=args.loss_tol,
        seed=args.seed,
        optimizer=args.optimizer,
        lr=args.lr,
    )
    try:
        cfg.validate(data.dim, len(data))
    except ValueError as e:
        raise UsageError(str(e)) from e
    _writable(args.out)
    report = fit(data, cfg)
    io.write_report(args.out, report)
    print(f"final_loss {report.final_loss:.6g}")
    print(f"wall_time {report.wall_time_seconds:.3f}s")
    print(f"stop_reason {report.stop_reason} after {report.iterations_run} iterations")


def cmd_eval(args):
    fitted = io.read_report(args.fit).final_channel
    truth = io.read_channel(args.truth)
    if fitted.dim != truth.dim:
        raise UsageError(f"dimension mismatch: fit {fitted.dim} vs truth {truth.dim}")
    m = evaluate(fitted, truth)
    print(f"fidelity {m['fidelity']:.6f}")
    print(f"choi_distance {m['choi_distance']:.6g}")
    if args.csv:
        path = Path(args.csv)
        new = not path.exists() or path.stat().st_size == 0
        with open(path, "a", newline="") as fh:
            w = csv.writer(fh)
            if new:
                w.writerow(["fit", "truth", "fidelity", "choi_distance"])
            w.writerow([args.fit, args.truth, repr(m["fidelity"]), repr(m["choi_distance"])])


def cmd_study(args):
    if args.name not in STUDIES:
        raise UsageError(f"unknown study {args.name!r}; valid names: {', '.join(STUDIES)}")
    try:
        config = json.loads(Path(args.config).read_text()) if args.config else {}
    except json.JSONDecodeError as e:
        raise UsageError(f"config is not valid JSON: {e}") from e
    if not isinstance(config, dict):
        raise UsageError("config must be a JSON object")
    t0 = time.perf_counter()
    try:
        out = run_study(args.name, config, args.out, args.threads)
    except (TypeError, ValueError) as e:
        raise UsageError(str(e)) from e
    print(f"wrote {out} in {time.perf_counter() - t0:.1f}s")


def build_parser() -> Parser:
    p = Parser(prog="stiefel-qpt", description=__doc__.splitlines()[0])
    p.add_argument("--threads", type=int, default=None, help="worker processes for studies (default: $QPT_THREADS or all cores)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=Parser)

    g = sub.add_parser("gen-channel", help="random CPTP channel")
    g.add_argument("--dim", type=int, required=True)
    g.add_argument("--rank", type=int, required=True)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_channel)

    s = sub.add_parser("simulate", help="Pauli-eigenstate dataset from a channel file")
    s.add_argument("--channel", required=True)
    s.add_argument("--qubits", type=int, required=True)
    s.add_argument("--epsilon", type=float, default=0.0, help="std of Gaussian readout error")
    s.add_argument("--nu", type=float, default=1.0, help="data fraction")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fit", help="fit a Kraus channel to a dataset")
    f.add_argument("--data", required=True)
    f.add_argument("--rank", type=int, required=True)
    f.add_argument("--optimizer", choices=sorted(STEPS), default="adam")
    f.add_argument("--max-iters", type=int, default=20_000)
    f.add_argument("--batch-size", type=int, default=None)
    f.add_argument("--lr", type=float, default=1e-2)
    f.add_argument("--loss-tol", type=float, default=0.0)
    f.add_argument("--seed", type=int, required=True)
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_fit)

    e = sub.add_parser("eval", help="compare a fit report with a true channel")
    e.add_argument("--fit", required=True)
    e.add_argument("--truth", required=True)
    e.add_argument("--csv", default=None, help="append the metrics to this CSV")
    e.set_defaults(func=cmd_eval)

    st = sub.add_parser("study", help="run a configured study")
    st.add_argument("--name", required=True, help=f"one of: {', '.join(STUDIES)}")
    st.add_argument("--config", default=None, help="JSON config (default: study defaults)")
    st.add_argument("--out", required=True)
    st.set_defaults(func=cmd_study)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "study":
        args.threads = resolve_threads(args.threads)
    _show_config(args)
    try:
        args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except io.FormatError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())
