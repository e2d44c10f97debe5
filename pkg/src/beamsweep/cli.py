"""Command-line front end: ``beamsweep {codebook,synth,analyze}``.

A single JSON config drives every subcommand; ``--out``, ``--seed`` and
``--jobs`` override the file. Exit status is 0 on success, 2 for invalid
configuration or inputs, 3 for runtime and I/O failures.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from . import metrics
from .channel import default_nlos_ensemble, load_scenario, load_trace, scenario_from_dict, synthesize_trace, write_trace
from .errors import BeamSweepError, ConfigError, TraceFormatError
from .geometry import DEFAULT_FACE_BORESIGHTS, build_codebook, covering_radius_deg, write_codebook_csv

log = logging.getLogger("beamsweep")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 2, 3

_CODEBOOK_KEYS = {"face_boresights_deg", "beams_per_face", "az_halfspan_deg", "el_halfspan_deg", "row_counts"}
_ENSEMBLE_KEYS = {"n_runs", "duration_s", "speed_mps"}
_TOP_KEYS = {
    "codebook", "ensemble", "scenarios", "traces", "periods_ms", "n_chains", "out_dir", "seed",
    "bandwidth_hz", "outage_margin_db", "dwell_ms", "jobs",
}


@dataclass
class ExperimentConfig:
    codebook: dict = field(default_factory=dict)
    ensemble: dict = field(default_factory=dict)
    scenarios: list = field(default_factory=list)
    traces: list = field(default_factory=list)
    periods_ms: list = field(default_factory=lambda: list(metrics.DEFAULT_PERIODS_MS))
    n_chains: list = field(default_factory=lambda: [1, 2, 4])
    out_dir: str = "out"
    seed: int = 0
    bandwidth_hz: float = 100e6
    outage_margin_db: float = 5.0
    dwell_ms: float = 0.125
    jobs: int = 1
    base_dir: Path = field(default=Path("."), repr=False)

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path = Path(".")) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config", "top level must be a JSON object")
        unknown = sorted(set(d) - _TOP_KEYS)
        if unknown:
            raise ConfigError(unknown[0], "unknown config key")
        cfg = cls(**d, base_dir=base_dir)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        unknown = sorted(set(self.codebook) - _CODEBOOK_KEYS)
        if unknown:
            raise ConfigError(f"codebook.{unknown[0]}", "unknown key")
        unknown = sorted(set(self.ensemble) - _ENSEMBLE_KEYS)
        if unknown:
            raise ConfigError(f"ensemble.{unknown[0]}", "unknown key")
        if self.ensemble.get("n_runs", 6) < 1:
            raise ConfigError("ensemble.n_runs", "must be >= 1")
        if self.ensemble.get("duration_s", 15.0) <= 0:
            raise ConfigError("ensemble.duration_s", "must be > 0")
        if not self.n_chains or any(n not in (1, 2, 4) for n in self.n_chains):
            raise ConfigError("n_chains", f"entries must be 1, 2 or 4, got {self.n_chains}")
        if not self.bandwidth_hz > 0:
            raise ConfigError("bandwidth_hz", "must be > 0")
        if not self.outage_margin_db >= 0:
            raise ConfigError("outage_margin_db", "must be >= 0")
        if not self.dwell_ms > 0:
            raise ConfigError("dwell_ms", "must be > 0")
        if int(self.jobs) != self.jobs or self.jobs < 1:
            raise ConfigError("jobs", "must be a positive integer")
        for p in self.traces:
            path = self.resolve(p)
            if not path.is_file():
                raise ConfigError("traces", f"trace file not found: {path}")
        for s in self.scenarios:
            if isinstance(s, str) and not self.resolve(s).is_file():
                raise ConfigError("scenarios", f"scenario file not found: {self.resolve(s)}")

    def resolve(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    def canonical(self) -> dict:
        """Settings that determine results (output location and worker count excluded)."""
        return {
            "codebook": self.codebook,
            "ensemble": self.ensemble,
            "scenarios": self.scenarios,
            "traces": [str(p) for p in self.traces],
            "periods_ms": [float(p) for p in self.periods_ms],
            "n_chains": sorted(int(n) for n in self.n_chains),
            "seed": int(self.seed),
            "bandwidth_hz": float(self.bandwidth_hz),
            "outage_margin_db": float(self.outage_margin_db),
            "dwell_ms": float(self.dwell_ms),
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def build_codebook(self):
        kw = dict(self.codebook)
        kw.setdefault("face_boresights_deg", list(DEFAULT_FACE_BORESIGHTS))
        kw["face_boresights"] = kw.pop("face_boresights_deg")
        return build_codebook(**kw)

    def build_scenarios(self):
        if self.scenarios:
            out = []
            for s in self.scenarios:
                out.append(load_scenario(self.resolve(s)) if isinstance(s, str) else scenario_from_dict(s))
            return out
        n_runs = int(self.ensemble.get("n_runs", 6))
        kw = {k: v for k, v in self.ensemble.items() if k != "n_runs"}
        return default_nlos_ensemble(seeds=range(self.seed, self.seed + n_runs), **kw)

    def engine_kwargs(self) -> dict:
        return {
            "dwell_ms": float(self.dwell_ms),
            "outage_margin_db": float(self.outage_margin_db),
            "bandwidth_hz": float(self.bandwidth_hz),
        }


def load_config(path: str | None, overrides: dict) -> ExperimentConfig:
    if path is None:
        raw, base = {}, Path(".")
    else:
        p = Path(path)
        if not p.is_file():
            raise ConfigError("--config", f"config file not found: {p}")
        try:
            raw = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError("--config", f"{p} is not valid JSON: {exc}") from None
        base = p.parent
    raw = dict(raw)
    raw.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_dict(raw, base_dir=base)


class AtomicOutputs:
    """Collect output files in temporaries and move them into place together.

    If the block raises, every temporary is deleted and no target is touched.
    """

    def __init__(self, out_dir: Path):
        self.out_dir = Path(out_dir)
        self._pending: list[tuple[Path, Path]] = []

    def __enter__(self):
        self.out_dir.mkdir(parents=True, exist_ok=True)
        return self

    def path(self, name: str) -> Path:
        fd, tmp = tempfile.mkstemp(prefix=f".{name}.", suffix=".tmp", dir=self.out_dir)
        os.close(fd)
        tmp = Path(tmp)
        self._pending.append((tmp, self.out_dir / name))
        return tmp

    def write_text(self, name: str, text: str) -> None:
        self.path(name).write_text(text, encoding="utf-8", newline="\n")

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            for tmp, final in self._pending:
                os.replace(tmp, final)
        else:
            for tmp, _ in self._pending:
                tmp.unlink(missing_ok=True)
        return False


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


# ---------------------------------------------------------------- subcommands


def cmd_codebook(cfg: ExperimentConfig) -> int:
    cb = cfg.build_codebook()
    radius = covering_radius_deg(cb)
    with AtomicOutputs(Path(cfg.out_dir)) as out:
        write_codebook_csv(cb, out.path("codebook.csv"))
    print(f"beams: {len(cb)} ({cb.n_faces} faces x {cb.beams_per_face})")
    print(f"covering radius: {radius:.4f} deg")
    return EXIT_OK


def _synth_one(args):
    scenario, cb = args
    return synthesize_trace(scenario, cb)


def _synthesize_all(scenarios, cb, jobs: int):
    if jobs > 1 and len(scenarios) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_synth_one, [(s, cb) for s in scenarios]))
    return [synthesize_trace(s, cb) for s in scenarios]


def cmd_synth(cfg: ExperimentConfig) -> int:
    cb = cfg.build_codebook()
    scenarios = cfg.build_scenarios()
    ids = [s.run_id for s in scenarios]
    if len(set(ids)) != len(ids):
        raise ConfigError("scenarios", f"duplicate run ids: {ids}")
    traces = _synthesize_all(scenarios, cb, int(cfg.jobs))
    manifest = {
        "tool": {"name": "beamsweep", "version": __version__},
        "config_hash": cfg.config_hash(),
        "runs": [
            {"run_id": s.run_id, "seed": s.seed, "file": f"{s.run_id}.csv", "n_samples": t.n_samples,
             "n_beams": t.n_beams, "dt_ms": t.dt_ms}
            for s, t in zip(scenarios, traces)
        ],
    }
    with AtomicOutputs(Path(cfg.out_dir)) as out:
        for t in traces:
            write_trace(t, out.path(f"{t.run_id}.csv"))
        out.write_text("manifest.json", _dumps(manifest))
    print(f"wrote {len(traces)} trace(s) to {cfg.out_dir}")
    return EXIT_OK


def _gather_traces(cfg: ExperimentConfig, cb):
    if cfg.traces:
        traces = [load_trace(cfg.resolve(p), expected_n_beams=len(cb)) for p in cfg.traces]
        return traces, {"kind": "files", "files": [str(p) for p in cfg.traces], "seeds": []}
    scenarios = cfg.build_scenarios()
    traces = _synthesize_all(scenarios, cb, int(cfg.jobs))
    kind = "scenarios" if cfg.scenarios else "default_nlos"
    return traces, {"kind": kind, "run_ids": [s.run_id for s in scenarios], "seeds": [s.seed for s in scenarios]}


def analyze(cfg: ExperimentConfig) -> tuple[str, dict]:
    """Run the full grid experiment; returns (results CSV text, summary dict)."""
    cb = cfg.build_codebook()
    traces, source = _gather_traces(cfg, cb)
    periods = [float(p) for p in cfg.periods_ms]
    n_list = sorted(set(int(n) for n in cfg.n_chains))
    points = metrics.evaluate_grid(traces, cb, periods, n_list, jobs=int(cfg.jobs), **cfg.engine_kwargs())
    curve = metrics.curve_from_points(points, periods)
    best = metrics.optimal_period(curve)
    chains = metrics.summarize_chains(metrics.curve_from_points(points, periods, cross_chain=True))

    lines = ["run_id,n_chains,T_ms,mean_rate_bps,normalized_rate,outage_fraction"]
    for run_id, n, T, rate, norm, outage in curve.rows():
        lines.append(f"{run_id},{n},{T!r},{rate!r},{norm!r},{outage!r}")
    results_csv = "\n".join(lines) + "\n"

    per_chain = {}
    for n in n_list:
        c = chains[n]
        per_chain[str(n)] = {
            "ensemble_normalized_curve": [float(v) for v in curve.ensemble[n]],
            "optimal_period_ms": best[n],
            "unimodal_within_2pct": metrics.is_unimodal(curve.ensemble[n], 0.02),
            "cross_chain_curve": [float(v) for v in c.curve],
            "cross_chain_peak": c.peak,
            "cross_chain_best_period_ms": c.best_period_ms,
            "plateau_points": c.plateau_points,
            "plateau_span_ms": list(c.plateau_span_ms),
            "mean_outage_fraction": [
                float(sum(p.outage_fraction for p in points if p.n_chains == n and p.T_ms == T)
                      / len(traces))
                for T in periods
            ],
        }
    summary = {
        "tool": {"name": "beamsweep", "version": __version__},
        "config_hash": cfg.config_hash(),
        "config": cfg.canonical(),
        "provenance": {"config_hash": cfg.config_hash(), "source": source, "seeds": source["seeds"]},
        "periods_ms": periods,
        "n_chains": n_list,
        "n_runs": len(traces),
        "per_chain": per_chain,
    }
    return results_csv, summary


def cmd_analyze(cfg: ExperimentConfig) -> int:
    started = time.time()
    results_csv, summary = analyze(cfg)
    run_info = {"started_unix": started, "finished_unix": time.time(), "config_hash": summary["config_hash"]}
    with AtomicOutputs(Path(cfg.out_dir)) as out:
        out.write_text("results.csv", results_csv)
        out.write_text("summary.json", _dumps(summary))
        out.write_text("run_info.json", _dumps(run_info))
    for n, info in summary["per_chain"].items():
        print(
            f"n_chains={n}: T*={info['optimal_period_ms']:g} ms, cross-chain peak={info['cross_chain_peak']:.4f}, "
            f"plateau {info['plateau_points']} pts {info['plateau_span_ms']}"
        )
    return EXIT_OK


COMMANDS = {"codebook": cmd_codebook, "synth": cmd_synth, "analyze": cmd_analyze}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="beamsweep", description="mmWave beam sweep period simulator")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("codebook", "export the receive codebook as CSV"),
        ("synth", "synthesize per-beam SNR traces"),
        ("analyze", "sweep-period / RX-chain throughput analysis"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="experiment config (JSON)")
        p.add_argument("--out", dest="out_dir", help="output directory")
        p.add_argument("--seed", type=int, help="base seed for the generated ensemble")
        p.add_argument("--jobs", type=int, help="worker processes")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, {"out_dir": args.out_dir, "seed": args.seed, "jobs": args.jobs})
        return COMMANDS[args.command](cfg)
    except (ConfigError, TraceFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (BeamSweepError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
