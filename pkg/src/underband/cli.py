"""Command line entry point: ``underband detect ...``.

Exit status is 0 on success, 1 for configuration errors and 2 for
failures while running the experiment.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .factorize import SolverConfig
from .harness import ConfigError, ExperimentConfig, run_experiment, thread_count
from .signal_io import FaultSignalSpec
from .tfr import StftParams

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="underband", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    d = sub.add_parser("detect", help="select an informative frequency band and filter the signal")
    src = d.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", help="WAV or single-column CSV signal file")
    src.add_argument("--synthetic", metavar="SPEC_JSON",
                     help="JSON file with synthetic fault-signal parameters ({} for defaults)")
    d.add_argument("--method", choices=("nmu", "nmf", "sk"), default="nmu")
    d.add_argument("--rank-min", type=int, default=2)
    d.add_argument("--rank-max", type=int, default=15)
    d.add_argument("--trials", type=int, default=100)
    d.add_argument("--seed", type=int, default=0, help="base seed of the trial schedule")
    d.add_argument("--window", type=int, default=128)
    d.add_argument("--overlap", type=int, default=100)
    d.add_argument("--nfft", type=int, default=512)
    d.add_argument("--max-iters", type=int, default=500)
    d.add_argument("--out", required=True, help="output directory")
    d.add_argument("--dump-factors", action="store_true", help="also write W and V of the chosen trial")
    d.add_argument("--channel", type=int, default=0, help="WAV channel to analyse")
    d.add_argument("--sample-rate", type=float, help="sampling rate for CSV input (Hz)")
    d.add_argument("--env-lo", type=float, help="lower edge of the cyclic-peak search band (Hz)")
    d.add_argument("--env-hi", type=float, help="upper edge of the cyclic-peak search band (Hz)")
    d.add_argument("-v", "--verbose", action="store_true")
    return parser


def config_from_args(args) -> ExperimentConfig:
    if args.synthetic is not None:
        try:
            with open(args.synthetic, encoding="utf-8") as fh:
                source = FaultSignalSpec.from_dict(json.load(fh))
        except (OSError, json.JSONDecodeError, TypeError) as exc:
            raise ConfigError(f"cannot read synthetic spec {args.synthetic}: {exc}") from exc
    else:
        source = args.input
    try:
        return ExperimentConfig(
            method=args.method,
            rank_min=args.rank_min,
            rank_max=args.rank_max,
            trials=args.trials,
            stft=StftParams(args.window, args.overlap, args.nfft),
            solver=SolverConfig(max_outer_iters=args.max_iters),
            base_seed=args.seed,
            input=source,
            sample_rate_hz=args.sample_rate,
            channel=args.channel,
            envelope_lo_hz=args.env_lo,
            envelope_hi_hz=args.env_hi,
            dump_factors=args.dump_factors,
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = config_from_args(args)
        workers = thread_count()
    except ConfigError as exc:
        print(f"underband: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        report = run_experiment(cfg, args.out, workers)
    except ConfigError as exc:
        print(f"underband: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - reported through the exit status
        print(f"underband: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    c = report.chosen
    rank = "-" if c.rank is None else c.rank
    print(f"{report.method}: rank {rank}, trial {c.trial}, column {c.column}, "
          f"kurtosis {c.kurtosis:.4g} (raw {report.raw_kurtosis:.4g}), "
          f"band peak {c.filter.peak_freq_hz:.1f} Hz, envelope peak {c.envelope_peak_hz:.2f} Hz")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
