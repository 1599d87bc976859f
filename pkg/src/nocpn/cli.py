"""Command-line driver: single runs and injection-rate sweeps written as CSV.

CSV columns (one row per rate point)::

    algo,pattern,k,seed,injection_rate,avg_latency,throughput,packets_delivered,avg_hops,drain_completed
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional, Sequence, TextIO, Union

from .core import ALGORITHMS, BIT_PATTERNS, PATTERNS, ConfigError, SimConfig, is_power_of_two
from .router import FlowControlError
from .sim import SimStats, SweepResult, frange, run_simulation, sweep

CSV_COLUMNS = (
    "algo",
    "pattern",
    "k",
    "seed",
    "injection_rate",
    "avg_latency",
    "throughput",
    "packets_delivered",
    "avg_hops",
    "drain_completed",
)

SEED_ENV = "NOCPN_SEED"

# flag name -> SimConfig field
_FLAG_FIELDS = {
    "k": "k",
    "vcs": "vcs_per_port",
    "buf": "buffer_depth_flits",
    "algo": "routing_algorithm",
    "pattern": "traffic_pattern",
    "rate": "injection_rate",
    "seed": "rng_seed",
    "warmup": "warmup_cycles",
    "measure": "measure_cycles",
    "drain_limit": "drain_limit_cycles",
    "router_delay": "router_delay_cycles",
    "link_delay": "link_delay_cycles",
    "threshold": "congestion_threshold",
    "min_len": "min_packet_flits",
    "max_len": "max_packet_flits",
}


@dataclass
class RunSpec:
    config: SimConfig
    rates: Optional[list[float]] = None  # None: single run at config.injection_rate
    out: Optional[Path] = None
    stop_at_saturation: bool = False


def build_parser(suppress_defaults: bool = False) -> argparse.ArgumentParser:
    defaults = SimConfig()
    p = argparse.ArgumentParser(
        prog="nocpn",
        description="Mesh NoC simulator with congestion-piggybacking adaptive routing.",
        argument_default=argparse.SUPPRESS if suppress_defaults else None,
    )

    def dflt(value):
        return argparse.SUPPRESS if suppress_defaults else value

    p.add_argument("--config", type=Path, help="flat key=value file; command-line flags win")
    p.add_argument("--k", type=int, default=dflt(defaults.k), help="mesh radix (nodes per dimension)")
    p.add_argument("--vcs", type=int, default=dflt(defaults.vcs_per_port), help="virtual channels per port")
    p.add_argument("--buf", type=int, default=dflt(defaults.buffer_depth_flits), help="flit buffers per VC")
    p.add_argument("--algo", choices=ALGORITHMS, default=dflt(defaults.routing_algorithm))
    p.add_argument("--pattern", choices=PATTERNS, default=dflt(defaults.traffic_pattern))
    load = p.add_mutually_exclusive_group()
    load.add_argument("--rate", type=float, help="injection rate, flits/node/cycle")
    load.add_argument("--sweep", metavar="START:STOP:STEP", help="inclusive rate range")
    p.add_argument("--seed", type=int, help=f"base seed (falls back to ${SEED_ENV}, then 0)")
    p.add_argument("--warmup", type=int, default=dflt(defaults.warmup_cycles))
    p.add_argument("--measure", type=int, default=dflt(defaults.measure_cycles))
    p.add_argument("--drain-limit", type=int, default=dflt(defaults.drain_limit_cycles))
    p.add_argument("--router-delay", type=int, default=dflt(defaults.router_delay_cycles))
    p.add_argument("--link-delay", type=int, default=dflt(defaults.link_delay_cycles))
    p.add_argument("--threshold", type=int, default=dflt(defaults.congestion_threshold), help="busy VCs above which a port is congested")
    p.add_argument("--min-len", type=int, default=dflt(defaults.min_packet_flits))
    p.add_argument("--max-len", type=int, default=dflt(defaults.max_packet_flits))
    p.add_argument("--stop-at-saturation", action="store_true", help="end a sweep at the first saturated rate")
    p.add_argument("--out", type=Path, help="CSV output path (default: stdout)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def read_config_file(path: Path, parser: argparse.ArgumentParser) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment. Keys use flag names."""
    known = {a.dest: a for a in parser._actions if a.option_strings}
    out = {}
    try:
        text = path.read_text()
    except OSError as exc:
        parser.error(f"--config: cannot read {path}: {exc.strerror}")
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            parser.error(f"--config: {path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        dest = key.lstrip("-").replace("-", "_")
        if dest not in known or dest in ("config", "help", "verbose"):
            parser.error(f"--config: {path}:{lineno}: unknown key --{key.lstrip('-')}")
        action = known[dest]
        if isinstance(action, argparse._StoreTrueAction):
            out[dest] = value.lower() in ("1", "true", "yes", "on")
            continue
        try:
            conv = action.type(value) if action.type else value
        except (TypeError, ValueError):
            parser.error(f"--config: {path}:{lineno}: bad value for --{dest.replace('_', '-')}: {value!r}")
        if action.choices and conv not in action.choices:
            parser.error(f"--config: {path}:{lineno}: invalid choice for --{dest.replace('_', '-')}: {value!r}")
        out[dest] = conv
    if out.get("rate") is not None and out.get("sweep") is not None:
        parser.error("--config: rate and sweep are mutually exclusive")
    return out


def parse_range(text: str, parser: argparse.ArgumentParser) -> list[float]:
    try:
        start, stop, step = (float(x) for x in text.split(":"))
        return frange(start, stop, step)
    except ValueError:
        parser.error(f"--sweep: malformed range {text!r}, expected START:STOP:STEP with STEP > 0")


def parse_args(argv: Optional[Sequence[str]] = None) -> RunSpec:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config is not None:
        # precedence: built-in defaults < config file < flags given on the command line
        file_values = read_config_file(args.config, parser)
        explicit = vars(build_parser(suppress_defaults=True).parse_args(argv))
        if "rate" in explicit or "sweep" in explicit:
            file_values.pop("rate", None)
            file_values.pop("sweep", None)
        merged = vars(args)
        merged.update(file_values)
        merged.update(explicit)
        args = argparse.Namespace(**merged)

    if args.seed is None:
        env = os.environ.get(SEED_ENV)
        if env is not None:
            try:
                args.seed = int(env)
            except ValueError:
                parser.error(f"--seed: ${SEED_ENV}={env!r} is not an integer")
        else:
            args.seed = 0

    if args.pattern in BIT_PATTERNS and not is_power_of_two(args.k):
        parser.error(f"--k: pattern {args.pattern!r} needs a power-of-two radix, got {args.k}")

    rates = None
    if args.sweep is not None:
        rates = parse_range(args.sweep, parser)
        if any(not 0 <= r <= 1 for r in rates):
            parser.error("--sweep: rates must lie in [0, 1]")
    elif args.rate is None:
        parser.error("one of --rate or --sweep is required")

    kwargs = {cfg_field: getattr(args, flag) for flag, cfg_field in _FLAG_FIELDS.items()}
    if kwargs["injection_rate"] is None:
        kwargs["injection_rate"] = rates[0] if rates else 0.0
    try:
        config = SimConfig(**kwargs)
    except ConfigError as exc:
        parser.error(_blame(str(exc)))
    if args.verbose:
        logging.basicConfig(level=logging.DEBUG, format="%(name)s: %(message)s")
    return RunSpec(config=config, rates=rates, out=args.out, stop_at_saturation=args.stop_at_saturation)


def _blame(message: str) -> str:
    """Prefix a config error with the flag most likely responsible."""
    by_field = {v: k for k, v in _FLAG_FIELDS.items()}
    for f in sorted((f.name for f in fields(SimConfig)), key=len, reverse=True):
        if f in message:
            return f"--{by_field.get(f, f).replace('_', '-')}: {message}"
    return message


def csv_rows(result: Union[SweepResult, SimStats], config: Optional[SimConfig] = None) -> list[list[str]]:
    if isinstance(result, SimStats):
        if config is None:
            raise ValueError("a single SimStats needs its config")
        points = [(config.injection_rate, result)]
    else:
        config = result.config
        points = result.points
    rows = []
    for rate, s in points:
        rows.append(
            [
                config.routing_algorithm,
                config.traffic_pattern,
                str(config.k),
                str(config.rng_seed),
                f"{rate:.4f}",
                f"{s.avg_packet_latency:.4f}",
                f"{s.throughput_accepted:.4f}",
                str(s.packets_delivered),
                f"{s.avg_hop_count:.4f}",
                "true" if s.drain_completed else "false",
            ]
        )
    return rows


def write_csv(result: Union[SweepResult, SimStats], stream: TextIO, config: Optional[SimConfig] = None) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    w.writerows(csv_rows(result, config))


def emit_csv(result: Union[SweepResult, SimStats], path: Path, config: Optional[SimConfig] = None) -> None:
    buf = io.StringIO()
    write_csv(result, buf, config)
    Path(path).write_text(buf.getvalue())


def execute(spec: RunSpec) -> Union[SweepResult, SimStats]:
    if spec.rates is None:
        return run_simulation(spec.config)
    return sweep(spec.config, spec.rates, stop_at_saturation=spec.stop_at_saturation)


def main(argv: Optional[Sequence[str]] = None) -> int:
    spec = parse_args(argv)
    try:
        result = execute(spec)
    except FlowControlError as exc:
        print(f"nocpn: flow-control violation: {exc}", file=sys.stderr)
        return 3
    try:
        if spec.out is None:
            write_csv(result, sys.stdout, spec.config)
        else:
            emit_csv(result, spec.out, spec.config)
    except OSError as exc:
        print(f"nocpn: cannot write {spec.out}: {exc.strerror}", file=sys.stderr)
        return 4
    if isinstance(result, SweepResult):
        sat = "none" if result.saturation_rate is None else f"{result.saturation_rate:.4f}"
        print(f"saturation_rate={sat} zero_load_latency={result.zero_load_latency:.4f}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
