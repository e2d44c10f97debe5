"""Slot-level P3 beam-sweeping simulation over an SNR trace.

Time advances in slots of ``dwell_ms`` (125 us). Every ``sweep_period_ms`` the
UE sweeps the whole codebook, one beam per slot on each RX chain, and then
serves data on the best beam until the next sweep. A serving slot is in outage
when the serving beam's SNR drops more than ``outage_margin_db`` below the
value recorded at selection. Outage is latched until the next sweep, except
that with several RX chains the UE may hop to another monitored beam.

The simulation horizon covers ``n_samples * dt_ms`` of trace time: every trace
sample holds for one full sample interval, including the last one.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import metrics as _metrics
from .channel import SnrTrace
from .errors import ConfigError, SimulationError
from .geometry import BeamCodebook

SWEEP, SERVING = 0, 1
_PHASE_NAMES = {SWEEP: "sweeping", SERVING: "serving"}
_EPS = 1e-9


@dataclass(frozen=True)
class SweepConfig:
    sweep_period_ms: float
    dwell_ms: float = 0.125
    n_chains: int = 1
    outage_margin_db: float = 5.0
    bandwidth_hz: float = 100e6
    switch_cost_slots: int = 0

    def sweep_slots(self, n_beams: int) -> int:
        return n_beams // self.n_chains

    def validate(self, codebook: BeamCodebook) -> None:
        if int(self.n_chains) != self.n_chains or self.n_chains < 1 or codebook.n_faces % self.n_chains:
            raise ConfigError("n_chains", f"{self.n_chains} does not divide the {codebook.n_faces} faces")
        if not self.dwell_ms > 0:
            raise ConfigError("dwell_ms", f"must be > 0, got {self.dwell_ms}")
        if not self.outage_margin_db >= 0:
            raise ConfigError("outage_margin_db", f"must be >= 0, got {self.outage_margin_db}")
        if not self.bandwidth_hz > 0:
            raise ConfigError("bandwidth_hz", f"must be > 0, got {self.bandwidth_hz}")
        if self.switch_cost_slots < 0:
            raise ConfigError("switch_cost_slots", "must be >= 0")
        sweep_ms = self.sweep_slots(len(codebook)) * self.dwell_ms
        if not self.sweep_period_ms > sweep_ms + _EPS:
            raise ConfigError(
                "sweep_period_ms",
                f"{self.sweep_period_ms} ms leaves no time for data after a {sweep_ms} ms sweep "
                f"({len(codebook)} beams, {self.n_chains} chain(s))",
            )


@dataclass
class LinkState:
    """Mutable link bookkeeping carried between slots within one run."""

    serving_beam: int = -1
    ref_snr_db: float = -math.inf
    monitored: dict[int, float] = field(default_factory=dict)
    phase: int = SWEEP
    slots_into_cycle: int = 0


@dataclass(frozen=True)
class SimResult:
    run_id: str
    config: SweepConfig
    t_ms: np.ndarray
    phase: np.ndarray
    serving_beam: np.ndarray
    actual_snr_db: np.ndarray
    outage: np.ndarray
    rate_bps: np.ndarray
    n_sweeps: int
    n_reactive_switches: int

    @property
    def n_slots(self) -> int:
        return len(self.t_ms)

    @property
    def mean_rate_bps(self) -> float:
        return float(self.rate_bps.mean())

    @property
    def outage_fraction(self) -> float:
        """Outage slots over all slots."""
        return float(self.outage.sum()) / self.n_slots

    @property
    def serving_outage_fraction(self) -> float:
        """Outage slots over serving-phase slots only (0 when nothing was served)."""
        serving = int((self.phase == SERVING).sum())
        return float(self.outage.sum()) / serving if serving else 0.0

    @property
    def sweep_fraction(self) -> float:
        return float((self.phase == SWEEP).sum()) / self.n_slots

    def aggregates(self) -> dict:
        return {
            "run_id": self.run_id,
            "sweep_period_ms": self.config.sweep_period_ms,
            "n_chains": self.config.n_chains,
            "mean_rate_bps": self.mean_rate_bps,
            "outage_fraction": self.outage_fraction,
            "serving_outage_fraction": self.serving_outage_fraction,
            "n_sweeps": self.n_sweeps,
            "n_reactive_switches": self.n_reactive_switches,
        }

    def write_slot_log(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t_ms", "phase", "serving_beam", "actual_snr_db", "outage", "rate_bps"])
            for row in zip(
                self.t_ms.tolist(),
                self.phase.tolist(),
                self.serving_beam.tolist(),
                self.actual_snr_db.tolist(),
                self.outage.tolist(),
                self.rate_bps.tolist(),
            ):
                t, ph, beam, snr, out, rate = row
                w.writerow([repr(t), _PHASE_NAMES[ph], beam, "" if math.isnan(snr) else repr(snr), int(out), repr(rate)])

    def write_aggregates_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.aggregates(), sort_keys=True, indent=2) + "\n", encoding="utf-8")


def sweep_schedule(codebook: BeamCodebook, n_chains: int) -> list[list[int]]:
    """Split the codebook's faces evenly over the RX chains.

    Chain ``c`` sweeps faces ``[c*F/n, (c+1)*F/n)`` with beams in id order.
    """
    n_faces = codebook.n_faces
    if n_chains not in (1, 2, 4) or n_faces % n_chains:
        raise ConfigError("n_chains", f"must be 1, 2 or 4 and divide {n_faces} faces, got {n_chains}")
    per = n_faces // n_chains
    schedule = []
    for c in range(n_chains):
        beams: list[int] = []
        for f in range(c * per, (c + 1) * per):
            beams.extend(codebook.face_beams(f))
        schedule.append(beams)
    return schedule


def select_beam(measurements: Sequence[tuple[int, float]]) -> tuple[int, float]:
    """Best (beam id, SNR) from a sweep; ties go to the lowest beam id."""
    if not measurements:
        raise SimulationError("select_beam needs at least one measurement")
    best = min(measurements, key=lambda m: (-m[1], m[0]))
    return int(best[0]), float(best[1])


def detect_outage(ref_snr_db: float, actual_snr_db: float, margin_db: float) -> bool:
    if margin_db < 0:
        raise ConfigError("outage_margin_db", f"must be >= 0, got {margin_db}")
    if not math.isfinite(ref_snr_db):
        # nothing usable was found during the sweep
        return ref_snr_db == -math.inf or actual_snr_db < ref_snr_db - margin_db
    return actual_snr_db < ref_snr_db - margin_db


def _slot_sample_index(trace: SnrTrace, dwell_ms: float) -> np.ndarray:
    n_slots = int(math.floor(trace.n_samples * trace.dt_ms / dwell_ms + _EPS))
    k = np.floor(np.arange(n_slots) * dwell_ms / trace.dt_ms + _EPS).astype(np.int64)
    return np.minimum(k, trace.n_samples - 1)


def run_simulation(trace: SnrTrace, codebook: BeamCodebook, config: SweepConfig) -> SimResult:
    """Simulate periodic exhaustive sweeping on ``trace`` and log every slot."""
    if trace.n_beams != len(codebook):
        raise SimulationError(f"trace has {trace.n_beams} beams but the codebook has {len(codebook)}")
    config.validate(codebook)
    schedule = sweep_schedule(codebook, config.n_chains)
    sweep_len = len(schedule[0])
    idx = _slot_sample_index(trace, config.dwell_ms)
    n_slots = len(idx)
    if n_slots < sweep_len:
        raise SimulationError(
            f"trace {trace.run_id!r} spans {n_slots} slots, shorter than one {sweep_len}-slot sweep"
        )
    samples = trace.samples
    margin = config.outage_margin_db
    n_chains = config.n_chains

    phase = np.full(n_slots, SWEEP, dtype=np.int8)
    serving_log = np.full(n_slots, -1, dtype=np.int64)
    actual_log = np.full(n_slots, np.nan)
    outage_log = np.zeros(n_slots, dtype=bool)
    rate_log = np.zeros(n_slots)

    # beam measured by each chain in each sweep slot, shape (n_chains, sweep_len)
    sched = np.asarray(schedule, dtype=np.int64)
    starts = []
    c = 0
    while True:
        s = int(math.ceil(c * config.sweep_period_ms / config.dwell_ms - _EPS))
        if s >= n_slots:
            break
        starts.append(s)
        c += 1
    bounds = starts[1:] + [n_slots]

    def rate_for(ref: float) -> float:
        return _metrics.shannon_rate(ref, config.bandwidth_hz, 1.0)

    state = LinkState()
    n_switches = 0
    for start, stop in zip(starts, bounds):
        sweep_end = start + sweep_len
        if sweep_end > stop:
            # sweep cut short by the end of the trace
            continue
        rows = idx[start:sweep_end]
        measured = samples[rows[None, :], sched]
        beams = sched.ravel()
        values = measured.ravel()
        order = np.lexsort((beams, -values))
        state.serving_beam = int(beams[order[0]])
        state.ref_snr_db = float(values[order[0]])
        state.monitored = {int(beams[o]): float(values[o]) for o in order[:n_chains]}
        state.phase = SERVING

        pos = sweep_end
        while pos < stop:
            b = state.serving_beam
            ref = state.ref_snr_db
            act = samples[idx[pos:stop], b]
            if ref == -math.inf:
                bad = np.ones(len(act), dtype=bool)
            else:
                bad = act < ref - margin
            hit = np.flatnonzero(bad)
            j = int(hit[0]) if hit.size else len(act)
            seg = slice(pos, pos + j)
            phase[seg] = SERVING
            serving_log[seg] = b
            actual_log[seg] = act[:j]
            rate_log[seg] = rate_for(ref)
            pos += j
            if pos >= stop:
                break

            switched = False
            if n_chains > 1 and ref != -math.inf:
                cands = sorted(state.monitored)
                current = samples[idx[pos], cands]
                best = None
                for beam, cur in zip(cands, current.tolist()):
                    if cur >= state.monitored[beam] - margin and cur != -math.inf:
                        if best is None or cur > best[1]:
                            best = (beam, cur)
                if best is not None:
                    n_switches += 1
                    state.serving_beam, state.ref_snr_db = best
                    state.monitored[best[0]] = best[1]
                    switched = True
                    cost = min(int(config.switch_cost_slots), stop - pos)
                    if cost:
                        seg = slice(pos, pos + cost)
                        phase[seg] = SERVING
                        serving_log[seg] = best[0]
                        actual_log[seg] = samples[idx[seg], best[0]]
                        pos += cost
            if not switched:
                seg = slice(pos, stop)
                phase[seg] = SERVING
                serving_log[seg] = b
                actual_log[seg] = samples[idx[seg], b]
                outage_log[seg] = True
                pos = stop

    return SimResult(
        run_id=trace.run_id,
        config=config,
        t_ms=np.arange(n_slots) * config.dwell_ms,
        phase=phase,
        serving_beam=serving_log,
        actual_snr_db=actual_log,
        outage=outage_log,
        rate_bps=rate_log,
        n_sweeps=len(starts),
        n_reactive_switches=n_switches,
    )
