"""Command line entry point.

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .circuit import to_text
from .harness import ConfigError, ExperimentConfig, atomic_write, grid, load_config, load_record, run

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x]


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON experiment configuration")
    p.add_argument("--experiment")
    p.add_argument("--protocol", help="comma-separated protocols")
    p.add_argument("--policy", help="comma-separated schedule policies")
    p.add_argument("--d", type=_ints, help="comma-separated distances")
    p.add_argument("--profile")
    p.add_argument("--p", type=_floats, help="comma-separated rates (Uniform, InterfaceOnly, Phenomenological)")
    p.add_argument("--p-loc", type=_floats)
    p.add_argument("--p-link", type=_floats)
    p.add_argument("--shots", type=int)
    p.add_argument("--max-failures", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")


def _config(args, default_experiment: str) -> ExperimentConfig:
    overrides = {
        "experiment": args.experiment,
        "protocols": args.protocol.split(",") if args.protocol else None,
        "policies": args.policy.split(",") if args.policy else None,
        "d": args.d,
        "profile": args.profile,
        "p": args.p,
        "p_loc": args.p_loc,
        "p_link": args.p_link,
        "shots": args.shots,
        "max_failures": args.max_failures,
        "seed": args.seed,
        "out": args.out,
    }
    if args.config:
        return load_config(args.config, overrides)
    raw = {k: v for k, v in overrides.items() if v is not None}
    raw.setdefault("experiment", default_experiment)
    return ExperimentConfig.from_dict(raw)


def _single_point(cfg: ExperimentConfig):
    points = grid(cfg)
    if not points:
        raise ConfigError("noise: no grid point")
    return points[0]


def cmd_build(args) -> int:
    cfg = _config(args, "BellPrep")
    from .dem import extract

    point = _single_point(cfg)
    circuit = point.circuit()
    out = cfg.run_dir()
    atomic_write(out / "circuit.txt", to_text(circuit))
    dem = extract(circuit)
    atomic_write(out / "dem.txt", dem.to_text())
    print(f"{out / 'circuit.txt'}: {circuit.num_qubits} qubits, {circuit.num_detectors} detectors, "
          f"{len(dem.mechanisms)} mechanisms")
    return EXIT_OK


def cmd_sample(args) -> int:
    from .sim import sample

    cfg = _config(args, "BellPrep")
    point = _single_point(cfg)
    batch = sample(point.circuit(), cfg.shots, point.seed(cfg.seed))
    path = Path(args.shots_file) if args.shots_file else cfg.run_dir() / "shots.01"
    atomic_write(path, batch.to_csv())
    print(f"{path}: {batch.shots} shots")
    return EXIT_OK


def cmd_decode(args) -> int:
    from .decoder import BatchDecoder
    from .dem import extract

    cfg = _config(args, "BellPrep")
    point = _single_point(cfg)
    path = Path(args.shots_file) if args.shots_file else cfg.run_dir() / "shots.01"
    lines = [ln for ln in path.read_text().splitlines() if ln]
    circuit = point.circuit()
    dem = extract(circuit)
    dets = np.array([[c == "1" for c in ln.split(",")[0]] for ln in lines], dtype=bool).reshape(len(lines), -1)
    obs = np.array([[c == "1" for c in ln.split(",")[1]] for ln in lines], dtype=bool).reshape(len(lines), -1)
    if dets.shape[1] != dem.num_detectors or obs.shape[1] != dem.num_observables:
        raise ConfigError("shots-file: width does not match the configured circuit")
    fails = BatchDecoder(dem).failures(dets, obs)
    print(json.dumps({"shots": len(lines), "failures": int(fails.any(axis=1).sum()),
                      "failures_per_observable": [int(x) for x in fails.sum(axis=0)]}))
    return EXIT_OK


def cmd_distance(args) -> int:
    cfg = _config(args, "DistanceSearch")
    cfg.experiment = "DistanceSearch"
    cfg.validate()
    record = run(cfg)
    sys.stdout.write(record.csv())
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _config(args, "BellPrep")
    record = run(cfg)
    print(cfg.run_dir())
    if record.summary:
        print(json.dumps(record.summary.get("thresholds", {}), indent=1))
    return EXIT_OK


def cmd_report(args) -> int:
    from .figures import FIGURES, render

    record = load_record(args.run)
    figures = args.figure or list(FIGURES)
    out = Path(args.out) if args.out else Path(args.run) / "figures"
    status = EXIT_OK
    for fig in figures:
        try:
            paths = render(record, fig, out)
            print(" ".join(str(p) for p in paths))
        except ValueError as exc:
            print(f"{fig}: {exc}", file=sys.stderr)
            status = EXIT_RUNTIME
    return status


def parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bellsurgery", description="Lattice-surgery Bell-state sweeps across a module interface")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, fn, help_text in (
        ("build", cmd_build, "compile one grid point to circuit and error-model text"),
        ("sample", cmd_sample, "sample detector shots for one grid point"),
        ("decode", cmd_decode, "decode a shots file for one grid point"),
        ("distance", cmd_distance, "shortest undetectable logical chains over the grid"),
        ("sweep", cmd_sweep, "run the configured sweep"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        if name in ("sample", "decode"):
            p.add_argument("--shots-file")
        p.set_defaults(func=fn)
    p = sub.add_parser("report", help="render figure tables and plots from a run directory")
    p.add_argument("run", help="run directory or record.json")
    p.add_argument("--figure", action="append", help="figure name (repeatable); default all")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    ap = parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except KeyboardInterrupt:
        print("interrupted; partial results kept", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001
        logging.getLogger(__name__).debug("runtime failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
