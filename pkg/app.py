"""
qkdrand command line.

    python app.py simulate --photons 100000 --rounds 3 --seed 42 --out report.json
    python app.py test --in bits.txt --tests frequency,serial --alpha 0.01
    python app.py fetch --n 100000 --out anu.txt
    python app.py sweep --photons 10000,50000,100000 --out sweep.csv --format csv

Exit codes: 0 success, 1 battery failures under --strict, 2 invalid
configuration, 3 I/O, bit file or remote source errors.
"""
import argparse
import json
import logging
import sys
from typing import Any, Dict, List, Literal, Optional, Sequence

from pydantic import BaseModel, Field, ValidationError, field_validator

import config
from battery import BatteryConfig, BatteryReport, run_battery
from bitstream import FORMATS, BitSequence, load_bits, save_bits
from errors import BitstreamError, RemoteSourceError, SimulationError
from qkd_sim import ChannelConfig, InterceptResend, ReconConfig, run_pipeline, run_sweep
from remote_source import fetch_remote_bits
from report import CSV, REPORT_FORMATS, ReportDocument, build_report, emit_report, render_csv, render_json

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURES = 1
EXIT_CONFIG = 2
EXIT_IO = 3

# Reconciliation preset for full runs: Cascade-style doubling blocks with back-tracking
PRESET_RECON = {"K": 16, "N": 3, "permute_between_rounds": True, "schedule": "doubling", "cascade": True}


class RunConfig(BaseModel):
    photons: int = Field(default=100000, ge=0, description="Photons pumped per round")
    rounds: int = Field(default=3, ge=1, le=1000, description="Number of QKD rounds")
    channel: ChannelConfig = Field(default_factory=ChannelConfig)
    recon: ReconConfig = Field(default_factory=lambda: ReconConfig(**PRESET_RECON))
    E_max: float = Field(default=config.DEFAULT_E_MAX, gt=0.0, lt=0.5, description="QBER abort threshold")
    sample_fraction: float = Field(default=config.DEFAULT_SAMPLE_FRACTION, gt=0.0, lt=1.0)
    s: int = Field(default=config.DEFAULT_SECURITY_BITS, ge=0, description="Security parameter in bits")
    seed: int = Field(default=0, ge=0, lt=2 ** 64, description="Master seed")
    series: int = Field(default=1, ge=1, description="Battery sub-series per round key")
    battery: BatteryConfig = Field(default_factory=BatteryConfig)
    out: Optional[str] = None
    format: Literal["json", "csv"] = "json"
    csv_out: Optional[str] = None

    def echo(self) -> Dict[str, Any]:
        """Configuration as written into reports; output locations are left out."""
        return self.model_dump(mode="json", exclude={"out", "format", "csv_out"})


class SweepConfig(BaseModel):
    photon_counts: List[int] = Field(..., min_length=1)
    run: RunConfig

    @field_validator("photon_counts")
    @classmethod
    def _non_negative(cls, counts: List[int]) -> List[int]:
        if any(c < 0 for c in counts):
            raise ValueError("photon counts must be non-negative")
        return counts


def _split_list(text: Optional[str]) -> Optional[List[str]]:
    if text is None:
        return None
    return [item.strip() for item in text.split(",") if item.strip()]


def _battery_config(args) -> BatteryConfig:
    fields: Dict[str, Any] = {"alpha": args.alpha, "workers": args.workers}
    tests = _split_list(args.tests)
    if tests is not None:
        fields["tests"] = tests
    if args.params:
        fields["params"] = json.loads(args.params)
    return BatteryConfig(**fields)


def _run_config(args, photons: int) -> RunConfig:
    eve = InterceptResend(fraction=args.eve) if args.eve is not None else None
    recon = dict(PRESET_RECON)
    for key, value in (("K", args.block_size), ("N", args.parity_rounds), ("schedule", args.schedule)):
        if value is not None:
            recon[key] = value
    if args.no_cascade:
        recon["cascade"] = False
    if args.no_permute:
        recon["permute_between_rounds"] = False
    return RunConfig(
        photons=photons,
        rounds=args.rounds,
        channel=ChannelConfig(flip_prob=args.flip_prob, loss_prob=args.loss_prob, eve=eve),
        recon=ReconConfig(**recon),
        E_max=args.e_max,
        sample_fraction=args.sample_fraction,
        s=args.security_bits,
        seed=args.seed,
        series=getattr(args, "series", 1),
        battery=_battery_config(args),
        out=args.out,
        format=args.format,
        csv_out=getattr(args, "csv_out", None),
    )


def _write(doc: ReportDocument, fmt: str, path: Optional[str]) -> None:
    if path is None:
        sys.stdout.write(render_csv(doc) if fmt == CSV else render_json(doc))
    else:
        emit_report(doc, fmt, path)


def _strict_exit(args, reports: Sequence[BatteryReport]) -> int:
    failures = [r.test_id for report in reports for r in report.failures]
    if failures:
        logger.warning(f"{len(failures)} battery verdicts failed: {', '.join(sorted(set(failures)))}")
        if args.strict:
            return EXIT_FAILURES
    return EXIT_OK


def split_series(key: BitSequence, series: int) -> List[BitSequence]:
    """``series`` equal consecutive chunks of ``key``; the remainder is dropped."""
    size = len(key) // series
    return [key.slice(i * size, size) for i in range(series)]


def cmd_simulate(args) -> int:
    run = _run_config(args, args.photons)
    logger.info(f"Simulating {run.rounds} rounds of {run.photons} photons (seed {run.seed})")
    pipeline = run_pipeline(
        run.rounds, run.photons, run.channel, run.recon, run.E_max, run.sample_fraction, run.s, run.seed,
    )

    reports = []
    for record in pipeline.rounds:
        for index, chunk in enumerate(split_series(record.alice_key, run.series), start=1):
            metadata = {"source": "pipeline", "seed": run.seed, "round": record.round_index, "series": index}
            reports.append(run_battery(chunk, run.battery, metadata))

    doc = build_report(run.echo(), [pipeline], reports)
    _write(doc, run.format, run.out)
    if run.csv_out:
        emit_report(doc, "csv", run.csv_out)
    return _strict_exit(args, reports)


def cmd_test(args) -> int:
    cfg = _battery_config(args)
    seq = load_bits(args.input, args.input_format)
    logger.info(f"Testing {len(seq)} bits from {args.input}")
    report = run_battery(seq, cfg, {"source": args.input, "round": 0, "series": 1})
    echo = {"input": args.input, "input_format": args.input_format, "battery": cfg.model_dump(mode="json")}
    _write(build_report(echo, batteries=[report]), args.report_format, args.out)
    return _strict_exit(args, [report])


def cmd_fetch(args) -> int:
    if args.n < 0:
        logger.error("--n must be non-negative")
        return EXIT_CONFIG
    endpoint = args.endpoint or config.ENDPOINT
    seq = fetch_remote_bits(endpoint, args.n, args.timeout)
    save_bits(seq, args.out, args.format)
    logger.info(f"Saved {len(seq)} bits to {args.out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    counts = [int(c) for c in _split_list(args.photons) or []]
    sweep = SweepConfig(photon_counts=counts, run=_run_config(args, max(counts, default=0)))
    run = sweep.run
    pipelines = run_sweep(
        sweep.photon_counts, run.rounds, run.channel, run.recon, run.E_max, run.sample_fraction, run.s, run.seed,
    )
    echo = {**run.echo(), "photons": sweep.photon_counts}
    _write(build_report(echo, pipelines), run.format, run.out)
    return EXIT_OK


def _add_channel_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--rounds", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0, help="Master seed")
    parser.add_argument("--flip-prob", type=float, default=0.03)
    parser.add_argument("--loss-prob", type=float, default=0.0)
    parser.add_argument("--eve", type=float, default=None, metavar="FRACTION",
                        help="Intercept-resend attack on this share of photons")
    parser.add_argument("--block-size", type=int, default=None, help="Initial reconciliation block size K")
    parser.add_argument("--parity-rounds", type=int, default=None, help="Reconciliation rounds N")
    parser.add_argument("--schedule", choices=("halving", "doubling"), default=None)
    parser.add_argument("--no-cascade", action="store_true", help="Disable back-tracking to earlier blocks")
    parser.add_argument("--no-permute", action="store_true")
    parser.add_argument("--e-max", type=float, default=config.DEFAULT_E_MAX)
    parser.add_argument("--sample-fraction", type=float, default=config.DEFAULT_SAMPLE_FRACTION)
    parser.add_argument("--security-bits", type=int, default=config.DEFAULT_SECURITY_BITS)


def _add_battery_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--tests", default=None, help="Comma separated test ids (default: all)")
    parser.add_argument("--alpha", type=float, default=config.DEFAULT_ALPHA)
    parser.add_argument("--params", default=None, help='Per-test parameters as JSON, e.g. {"serial": {"m": 4}}')
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--strict", action="store_true", help="Exit 1 when any runnable test fails")


def _add_output_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out", default=None, help="Report path (default: JSON on stdout)")
    parser.add_argument("--format", choices=REPORT_FORMATS, default="json")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=config.TOOL_NAME, description="BB84 simulation and randomness testing")
    parser.add_argument("--version", action="version", version=f"%(prog)s {config.__version__}")
    parser.add_argument("--log-level", default=config.LOG_LEVEL)
    sub = parser.add_subparsers(dest="command", required=True)

    simulate = sub.add_parser("simulate", help="Run the BB84 pipeline and test each round's key")
    simulate.add_argument("--photons", type=int, default=100000, help="Photons pumped per round")
    simulate.add_argument("--series", type=int, default=1, help="Battery sub-series per round key")
    simulate.add_argument("--csv-out", default=None, help="Also write the CSV tables here")
    _add_channel_args(simulate)
    _add_battery_args(simulate)
    _add_output_args(simulate)
    simulate.set_defaults(func=cmd_simulate)

    test = sub.add_parser("test", help="Run the battery on a bit file")
    test.add_argument("--in", dest="input", required=True)
    test.add_argument("--format", "--input-format", dest="input_format", choices=FORMATS, default="ascii01",
                      help="Bit file format")
    _add_battery_args(test)
    test.add_argument("--out", default=None, help="Report path (default: JSON on stdout)")
    test.add_argument("--report-format", choices=REPORT_FORMATS, default="json")
    test.set_defaults(func=cmd_test)

    fetch = sub.add_parser("fetch", help="Download bits from the remote quantum RNG")
    fetch.add_argument("--n", type=int, required=True, help="Number of bits")
    fetch.add_argument("--out", required=True)
    fetch.add_argument("--format", choices=FORMATS, default="ascii01")
    fetch.add_argument("--endpoint", default=None, help="Overrides QKDRAND_ENDPOINT")
    fetch.add_argument("--timeout", type=float, default=config.REQUEST_TIMEOUT)
    fetch.set_defaults(func=cmd_fetch)

    sweep = sub.add_parser("sweep", help="Attrition table for several photon counts")
    sweep.add_argument("--photons", required=True, help="Comma separated photon counts per round")
    _add_channel_args(sweep)
    _add_battery_args(sweep)
    _add_output_args(sweep)
    sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format='%(asctime)s - %(levelname)s - %(message)s',
        stream=sys.stderr,
    )

    try:
        return args.func(args)
    except ValidationError as e:
        logger.error(f"Invalid configuration: {str(e)}")
        return EXIT_CONFIG
    except (OSError, BitstreamError, RemoteSourceError) as e:
        logger.error(f"{args.command} failed: {str(e)}")
        return EXIT_IO
    except (ValueError, SimulationError) as e:
        logger.error(f"Invalid configuration: {str(e)}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
