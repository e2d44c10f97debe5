"""Throughput formulas, sweep-period curves and RX-chain comparison.

Rates follow R = eta * B * log2(1 + SNR) with the data fraction

    eta = 1 - M * Ts / (n_chains * T)

for M beams, dwell Ts, sweep period T and n_chains parallel RX chains.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import engine as _engine
from .errors import ConfigError, SimulationError

DEFAULT_PERIODS_MS = (50.0, 75.0, 100.0, 150.0, 200.0, 300.0, 500.0, 700.0, 1000.0, 1500.0, 2000.0)
PLATEAU_FRACTION = 0.95


def transmission_fraction(M: int, Ts_ms: float, T_ms: float, n_chains: int = 1, with_flag: bool = False):
    """Fraction of each sweep period left for data.

    Negative values are clamped to 0. With ``with_flag=True`` returns
    ``(eta, clamped)``.
    """
    if not T_ms > 0:
        raise ConfigError("T_ms", f"must be > 0, got {T_ms}")
    if M < 1 or n_chains < 1:
        raise ConfigError("M/n_chains", "must be >= 1")
    eta = 1.0 - (M * Ts_ms) / (n_chains * T_ms)
    clamped = eta < 0.0
    eta = max(eta, 0.0)
    return (eta, clamped) if with_flag else eta


def shannon_rate(snr_db: float, bandwidth_hz: float, eta: float = 1.0) -> float:
    """eta * B * log2(1 + 10**(snr_db/10)); -inf dB gives 0."""
    if not bandwidth_hz > 0:
        raise ConfigError("bandwidth_hz", f"must be > 0, got {bandwidth_hz}")
    if not 0.0 <= eta <= 1.0:
        raise ConfigError("eta", f"must lie in [0, 1], got {eta}")
    if snr_db == -math.inf:
        return 0.0
    return eta * bandwidth_hz * math.log2(1.0 + 10.0 ** (snr_db / 10.0))


def outage_likelihood(trace, codebook, T_ms: float, n_chains: int, **config) -> float:
    """Share of data (serving-phase) slots spent in outage."""
    cfg = _engine.SweepConfig(sweep_period_ms=T_ms, n_chains=n_chains, **config)
    return _engine.run_simulation(trace, codebook, cfg).serving_outage_fraction


@dataclass(frozen=True)
class GridPoint:
    run_id: str
    n_chains: int
    T_ms: float
    mean_rate_bps: float
    outage_fraction: float


@dataclass
class ThroughputCurve:
    """Normalized mean-rate curves over a sweep-period grid.

    ``runs[(run_id, n)]`` holds ``(T_ms, mean_rate_bps, normalized_rate,
    outage_fraction)`` tuples in grid order; ``ensemble[n]`` is the mean of the
    per-run normalized curves for ``n`` chains.
    """

    periods_ms: tuple[float, ...]
    runs: dict[tuple[str, int], list[tuple[float, float, float, float]]] = field(default_factory=dict)
    ensemble: dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def run_ids(self) -> list[str]:
        return sorted({r for r, _ in self.runs})

    def normalized(self, run_id: str, n_chains: int) -> np.ndarray:
        return np.array([row[2] for row in self.runs[(run_id, n_chains)]])

    def rows(self) -> list[tuple]:
        """Flat rows ``(run_id, n_chains, T_ms, mean_rate, normalized, outage)`` in key order."""
        out = []
        for (run_id, n) in sorted(self.runs):
            for T, rate, norm, outage in self.runs[(run_id, n)]:
                out.append((run_id, n, T, rate, norm, outage))
        return out


def validate_grid(periods_ms: Sequence[float], n_beams: int, dwell_ms: float, n_chains: Iterable[int]) -> tuple:
    periods = tuple(float(p) for p in periods_ms)
    if not periods:
        raise ConfigError("periods_ms", "grid is empty")
    if any(b <= a for a, b in zip(periods, periods[1:])):
        raise ConfigError("periods_ms", "must be strictly increasing")
    longest = max(n_beams * dwell_ms / n for n in n_chains)
    if periods[0] <= longest:
        raise ConfigError("periods_ms", f"{periods[0]} ms does not exceed the {longest} ms sweep")
    return periods


def _simulate_run(args) -> list[GridPoint]:
    trace, codebook, periods, n_list, config = args
    out = []
    for n in n_list:
        for T in periods:
            res = _engine.run_simulation(trace, codebook, _engine.SweepConfig(sweep_period_ms=T, n_chains=n, **config))
            out.append(GridPoint(trace.run_id, n, T, res.mean_rate_bps, res.serving_outage_fraction))
    return out


def evaluate_grid(traces, codebook, periods_ms, n_chains_list, jobs: int = 1, **config) -> list[GridPoint]:
    """Run the engine for every (trace, n_chains, T) and return points in key order."""
    traces = list(traces)
    if not traces:
        raise ConfigError("traces", "ensemble is empty")
    ids = [t.run_id for t in traces]
    if len(set(ids)) != len(ids):
        raise ConfigError("traces", f"duplicate run ids in ensemble: {ids}")
    n_list = sorted(set(int(n) for n in n_chains_list))
    periods = validate_grid(periods_ms, len(codebook), config.get("dwell_ms", 0.125), n_list)
    tasks = [(t, codebook, periods, n_list, config) for t in traces]
    if jobs and jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_simulate_run, tasks))
    else:
        chunks = [_simulate_run(t) for t in tasks]
    points = [p for chunk in chunks for p in chunk]
    return sorted(points, key=lambda p: (p.run_id, p.n_chains, p.T_ms))


def curve_from_points(points: Sequence[GridPoint], periods_ms: Sequence[float], cross_chain: bool = False) -> ThroughputCurve:
    """Normalize grid points per run and average across runs.

    With ``cross_chain=False`` each (run, n) curve is divided by its own
    maximum. With ``cross_chain=True`` every curve of a run is divided by that
    run's maximum over all n, so gaps between chain counts survive.
    """
    periods = tuple(float(p) for p in periods_ms)
    by_key: dict[tuple[str, int], dict[float, GridPoint]] = {}
    for p in points:
        by_key.setdefault((p.run_id, p.n_chains), {})[p.T_ms] = p
    run_max: dict[str, float] = {}
    for (run_id, _), pts in by_key.items():
        run_max[run_id] = max(run_max.get(run_id, 0.0), max(p.mean_rate_bps for p in pts.values()))

    curve = ThroughputCurve(periods_ms=periods)
    per_n: dict[int, list[np.ndarray]] = {}
    for key in sorted(by_key):
        run_id, n = key
        pts = by_key[key]
        missing = [T for T in periods if T not in pts]
        if missing:
            raise SimulationError(f"run {run_id!r}, n={n}: no result for T={missing}")
        rates = np.array([pts[T].mean_rate_bps for T in periods])
        denom = run_max[run_id] if cross_chain else rates.max()
        if not denom > 0:
            raise SimulationError(f"run {run_id!r} (n_chains={n}) has zero throughput at every sweep period")
        norm = rates / denom
        curve.runs[key] = [
            (T, float(r), float(v), pts[T].outage_fraction) for T, r, v in zip(periods, rates, norm)
        ]
        per_n.setdefault(n, []).append(norm)
    curve.ensemble = {n: np.mean(np.vstack(v), axis=0) for n, v in sorted(per_n.items())}
    return curve


def throughput_curve(traces, codebook, grid=DEFAULT_PERIODS_MS, n_chains=1, jobs: int = 1, **config) -> ThroughputCurve:
    """Per-run self-normalized mean-rate curves and their ensemble mean."""
    n_list = [n_chains] if isinstance(n_chains, int) else list(n_chains)
    points = evaluate_grid(traces, codebook, grid, n_list, jobs=jobs, **config)
    return curve_from_points(points, grid)


def optimal_period(curve: ThroughputCurve) -> dict[int, float]:
    """Grid period maximizing the ensemble curve, per n_chains; ties go to the shorter period."""
    if not curve.ensemble:
        raise SimulationError("optimal_period needs a non-empty curve")
    out = {}
    for n, values in curve.ensemble.items():
        # np.argmax returns the first (smallest-T) maximum
        out[n] = curve.periods_ms[int(np.argmax(values))]
    return out


@dataclass(frozen=True)
class ChainSummary:
    n_chains: int
    curve: np.ndarray
    peak: float
    best_period_ms: float
    plateau_points: int
    plateau_span_ms: tuple[float, float]


def summarize_chains(curve: ThroughputCurve, plateau_fraction: float = PLATEAU_FRACTION) -> dict[int, ChainSummary]:
    out = {}
    periods = np.asarray(curve.periods_ms)
    for n, values in curve.ensemble.items():
        peak = float(values.max())
        on = values >= plateau_fraction * peak
        span = (float(periods[on].min()), float(periods[on].max()))
        out[n] = ChainSummary(
            n_chains=n,
            curve=values,
            peak=peak,
            best_period_ms=float(periods[int(np.argmax(values))]),
            plateau_points=int(on.sum()),
            plateau_span_ms=span,
        )
    return out


def chain_comparison(traces, codebook, grid=DEFAULT_PERIODS_MS, n_chains_list=(1, 2, 4), jobs: int = 1,
                     points: Sequence[GridPoint] | None = None, **config) -> dict[int, ChainSummary]:
    """Compare RX-chain counts on a shared per-run scale.

    Each run is normalized by its maximum over every (n, T), then averaged
    across runs per n. Reports the peak of each ensemble curve and the grid
    points reaching 95% of that peak.
    """
    if points is None:
        points = evaluate_grid(traces, codebook, grid, n_chains_list, jobs=jobs, **config)
    return summarize_chains(curve_from_points(points, grid, cross_chain=True))


def is_unimodal(values: Sequence[float], tol: float = 0.0) -> bool:
    """True when ``values`` rises to its maximum and then falls, allowing dips/bumps up to ``tol``."""
    v = np.asarray(values, dtype=float)
    peak = int(np.argmax(v))
    rising = np.all(np.diff(v[: peak + 1]) >= -tol)
    falling = np.all(np.diff(v[peak:]) <= tol)
    return bool(rising and falling)
