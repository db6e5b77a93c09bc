"""Command-line driver: ``pncrelay ber-sweep | energy-table | cir-convert``.

Configuration is a JSON object with optional sections ``receiver``,
``sweep``, ``ofdm``, ``channel``, ``code``, ``energy_table`` and ``output``
plus a top-level ``master_seed``.  Unknown keys are rejected.  Every
output file starts with ``#`` lines carrying the tool version, the master
seed and the fully resolved configuration, which is enough to rerun it.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .channel import ChannelStatParams, MeasuredCir, OfdmParams, cir_to_frequency, read_cir
from .receiver import ReceiverConfig
from .sim import CodeParams, SimConfig, SimRecord, energy_contribution_table, iter_sweep

__all__ = [
    "ConfigError",
    "EnergyTableConfig",
    "ExperimentSpec",
    "CSV_COLUMNS",
    "parse_config",
    "resolved_config",
    "format_record",
    "run",
    "main",
]

log = logging.getLogger("pncrelay")

CSV_COLUMNS = (
    "scheme", "snr_db", "sigma_u", "relay_count", "outer_iters", "decode_iters", "refinement",
    "cer_db", "frames", "bits", "bit_errors", "frame_errors", "ber", "fer", "wall_time_s",
)
FORMATS = ("csv", "jsonl")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EnergyTableConfig:
    sigma_u_list: tuple = (0.1, 0.5, 1.0, 1.5)
    depth_list: tuple = (0, 1, 2)
    realizations: int = 5000
    subtract_overlap: bool = False

    def __post_init__(self):
        if self.realizations < 1:
            raise ValueError("realizations must be >= 1")
        if not self.sigma_u_list or not self.depth_list:
            raise ValueError("sigma_u_list and depth_list must be nonempty")
        if any(d < 0 for d in self.depth_list):
            raise ValueError("depth_list entries must be >= 0")


@dataclass(frozen=True)
class OutputConfig:
    format: str = "csv"
    timing: bool = False
    workers: int = 1
    verbosity: int = 0

    def __post_init__(self):
        if self.format not in FORMATS:
            raise ValueError(f"format must be one of {FORMATS}, got {self.format!r}")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")


@dataclass(frozen=True)
class SweepConfig:
    snr_grid_db: tuple = (8.0,)
    sigma_u_grid: tuple = (0.1,)
    relay_counts: tuple = (1,)
    cer_grid_db: tuple = (None,)
    frames_per_point: int = 500


@dataclass
class ExperimentSpec:
    sim: SimConfig
    energy_table: EnergyTableConfig = field(default_factory=EnergyTableConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    out_path: Path | None = None

    @property
    def master_seed(self) -> int:
        return self.sim.master_seed


# ---------------------------------------------------------------------------
# parsing


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _coerce(section: str, key: str, value, default):
    where = f"{section}.{key}"
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected a boolean, got {value!r}")
        return value
    if isinstance(default, int):
        if not (isinstance(value, int) and not isinstance(value, bool)):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if not _is_number(value):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list, got {value!r}")
        if key == "cer_grid_db":
            if not all(v is None or _is_number(v) for v in value):
                raise ConfigError(f"{where}: entries must be numbers or null (perfect CSI)")
            return tuple(None if v is None else float(v) for v in value)
        if key in ("relay_counts", "depth_list"):
            if not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
                raise ConfigError(f"{where}: entries must be integers")
            return tuple(value)
        if not all(_is_number(v) for v in value):
            raise ConfigError(f"{where}: entries must be numbers")
        return tuple(float(v) for v in value)
    raise ConfigError(f"{where}: unsupported setting")


def _build_section(cls, section: str, raw):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{section}: expected an object, got {type(raw).__name__}")
    defaults = {f.name: f.default for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - set(defaults))
    if unknown:
        raise ConfigError(
            f"{section}.{unknown[0]}: unknown key (allowed: {', '.join(sorted(defaults))})"
        )
    kwargs = {k: _coerce(section, k, v, defaults[k]) for k, v in raw.items()}
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{section}: {exc}") from exc


_SECTIONS = {
    "receiver": ReceiverConfig,
    "sweep": SweepConfig,
    "ofdm": OfdmParams,
    "channel": ChannelStatParams,
    "code": CodeParams,
    "energy_table": EnergyTableConfig,
    "output": OutputConfig,
}


def parse_config(source=None, *, seed=None, frames=None, workers=None, fmt=None, out=None) -> ExperimentSpec:
    """Build a validated ExperimentSpec from a JSON file path, a dict, or nothing.

    Keyword arguments mirror the command-line overrides.
    """
    if source is None:
        raw = {}
    elif isinstance(source, dict):
        raw = source
    else:
        try:
            raw = json.loads(Path(source).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{source}: malformed JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = sorted(set(raw) - set(_SECTIONS) - {"master_seed"})
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown top-level key")
    sec = {name: _build_section(cls, name, raw.get(name)) for name, cls in _SECTIONS.items()}

    master_seed = raw.get("master_seed", 0) if seed is None else seed
    if not isinstance(master_seed, int) or isinstance(master_seed, bool) or not 0 <= master_seed < 2**64:
        raise ConfigError(f"master_seed: expected an integer in [0, 2^64), got {master_seed!r}")
    sweep = sec["sweep"]
    if frames is not None:
        sweep = dataclasses.replace(sweep, frames_per_point=frames)
    output = sec["output"]
    try:
        if workers is not None:
            output = dataclasses.replace(output, workers=workers)
        if fmt is not None:
            output = dataclasses.replace(output, format=fmt)
        sim = SimConfig(
            ofdm=sec["ofdm"],
            channel=sec["channel"],
            receiver=sec["receiver"],
            code=sec["code"],
            snr_grid_db=sweep.snr_grid_db,
            sigma_u_grid=sweep.sigma_u_grid,
            relay_counts=sweep.relay_counts,
            cer_grid_db=sweep.cer_grid_db,
            frames_per_point=sweep.frames_per_point,
            master_seed=master_seed,
            timing=output.timing,
        )
    except ValueError as exc:
        raise ConfigError(f"sweep: {exc}") from exc
    return ExperimentSpec(sim, sec["energy_table"], output, None if out is None else Path(out))


def resolved_config(spec: ExperimentSpec) -> dict:
    """The complete configuration, in the same shape parse_config accepts."""
    s = spec.sim
    asdict = dataclasses.asdict
    return {
        "master_seed": s.master_seed,
        "receiver": asdict(s.receiver),
        "sweep": {
            "snr_grid_db": list(s.snr_grid_db),
            "sigma_u_grid": list(s.sigma_u_grid),
            "relay_counts": list(s.relay_counts),
            "cer_grid_db": list(s.cer_grid_db),
            "frames_per_point": s.frames_per_point,
        },
        "ofdm": asdict(s.ofdm),
        "channel": asdict(s.channel),
        "code": asdict(s.code),
        "energy_table": {k: list(v) if isinstance(v, tuple) else v
                         for k, v in asdict(spec.energy_table).items()},
        "output": asdict(spec.output),
    }


# ---------------------------------------------------------------------------
# output


def _num(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def format_record(rec: SimRecord) -> dict:
    return {
        "scheme": rec.scheme,
        "snr_db": rec.snr_db,
        "sigma_u": rec.sigma_u,
        "relay_count": rec.relay_count,
        "outer_iters": rec.outer_iterations,
        "decode_iters": rec.decode_iterations,
        "refinement": rec.refinement,
        "cer_db": rec.cer_db,
        "frames": rec.frames_total,
        "bits": rec.bits_total,
        "bit_errors": rec.bit_errors,
        "frame_errors": rec.frame_errors,
        "ber": rec.ber,
        "fer": rec.fer,
        "wall_time_s": rec.wall_time_s,
    }


def _header_lines(spec: ExperimentSpec, command: str) -> list[str]:
    cfg = json.dumps(resolved_config(spec), sort_keys=True)
    return [
        f"# pncrelay {__version__} {command}",
        f"# master_seed: {spec.master_seed}",
        f"# config: {cfg}",
    ]


class _Writer:
    def __init__(self, fh, fmt: str, columns):
        self.fh, self.fmt, self.columns = fh, fmt, columns
        if fmt == "csv":
            fh.write(",".join(columns) + "\n")

    def row(self, values: dict):
        if self.fmt == "csv":
            self.fh.write(",".join(_num(values[c]) for c in self.columns) + "\n")
        else:
            clean = {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in values.items()}
            self.fh.write(json.dumps(clean) + "\n")
        self.fh.flush()


def _open_out(path):
    return sys.stdout if path is None or str(path) == "-" else open(path, "w", encoding="utf-8", newline="\n")


def run_ber_sweep(spec: ExperimentSpec) -> int:
    failed = 0
    fh = _open_out(spec.out_path)
    try:
        for line in _header_lines(spec, "ber-sweep"):
            fh.write(line + "\n")
        w = _Writer(fh, spec.output.format, CSV_COLUMNS)
        for rec in iter_sweep(spec.sim, spec.output.workers):
            if rec.error:
                failed += 1
                log.error("point snr=%s sigma_u=%s mr=%s failed: %s",
                          rec.snr_db, rec.sigma_u, rec.relay_count, rec.error)
                fh.write(f"# failed: snr_db={rec.snr_db} sigma_u={rec.sigma_u} relay_count="
                         f"{rec.relay_count} cer_db={rec.cer_db}: {rec.error}\n")
            log.info("snr=%s sigma_u=%s mr=%s ber=%.3g", rec.snr_db, rec.sigma_u, rec.relay_count, rec.ber)
            w.row(format_record(rec))
    finally:
        if fh is not sys.stdout:
            fh.close()
    return 1 if failed else 0


def run_energy_table(spec: ExperimentSpec) -> int:
    et = spec.energy_table
    rng = np.random.default_rng(spec.master_seed)
    table = energy_contribution_table(
        et.sigma_u_list, et.depth_list, et.realizations, rng,
        spec.sim.ofdm, spec.sim.channel, et.subtract_overlap,
    )
    fh = _open_out(spec.out_path)
    try:
        for line in _header_lines(spec, "energy-table"):
            fh.write(line + "\n")
        w = _Writer(fh, spec.output.format, ("sigma_u", "depth", "energy_pct", "realizations"))
        for i, s in enumerate(et.sigma_u_list):
            for j, d in enumerate(et.depth_list):
                w.row({"sigma_u": float(s), "depth": int(d), "energy_pct": float(table[i, j]),
                       "realizations": et.realizations})
    finally:
        if fh is not sys.stdout:
            fh.close()
    return 0


def _load_cir(path: Path) -> MeasuredCir:
    if path.suffix == ".npz":
        with np.load(path) as z:
            return MeasuredCir(
                z["samples"],
                float(z["time_sample_rate_hz"]) if "time_sample_rate_hz" in z else 0.0,
                float(z["delay_sample_rate_hz"]) if "delay_sample_rate_hz" in z else 0.0,
            )
    return read_cir(path)


def run_cir_convert(spec: ExperimentSpec, input_path) -> int:
    cir = _load_cir(Path(input_path))
    ofdm = spec.sim.ofdm if spec.sim.ofdm.fft_size == cir.fft_size else None
    if ofdm is None:
        log.warning("CIR N_F=%d differs from configured fft_size; converting all bins", cir.fft_size)
    H = cir_to_frequency(cir, ofdm)
    if spec.out_path is None:
        raise ConfigError("cir-convert needs --out")
    bins = ofdm.active_bins if ofdm is not None else np.arange(cir.fft_size)
    meta = "\n".join(_header_lines(spec, "cir-convert"))
    with open(spec.out_path, "wb") as fh:
        np.savez(fh, H=H.entries, bins=bins, header=np.array(meta))
    return 0


def run(spec: ExperimentSpec, command: str = "ber-sweep", input_path=None) -> int:
    """Execute one subcommand; returns the process exit code."""
    if command == "ber-sweep":
        return run_ber_sweep(spec)
    if command == "energy-table":
        return run_energy_table(spec)
    if command == "cir-convert":
        return run_cir_convert(spec, input_path)
    raise ValueError(f"unknown command {command!r}")


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pncrelay", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"pncrelay {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("ber-sweep", "Monte-Carlo BER/FER sweep over the configured grid"),
        ("energy-table", "percentage of channel energy inside uniform ICI depths"),
        ("cir-convert", "convert a measured time-varying CIR to a coupling matrix (.npz)"),
    ):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", type=Path, help="JSON configuration file")
        s.add_argument("--out", help="output path (default: stdout)")
        s.add_argument("--seed", type=int, help="override master_seed")
        s.add_argument("--frames", type=int, help="override frames_per_point")
        s.add_argument("--workers", type=int, help="worker processes")
        s.add_argument("--format", choices=FORMATS, help="output format")
        s.add_argument("-v", "--verbose", action="count", default=0)
        if name == "cir-convert":
            s.add_argument("--input", required=True, type=Path, help="CIR file (.cir or .npz)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(message)s")
    try:
        spec = parse_config(
            args.config, seed=args.seed, frames=args.frames, workers=args.workers,
            fmt=args.format, out=args.out,
        )
        return run(spec, args.command, getattr(args, "input", None))
    except (ConfigError, OSError, ValueError) as exc:
        print(f"pncrelay: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
