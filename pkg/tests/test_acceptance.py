"""Acceptance criteria, one test per criterion.

Every test prints a single ``ACCEPTANCE <n> PASS|FAIL ...`` line; the lines are
repeated in the pytest terminal summary (see conftest).
"""

import math
from fractions import Fraction

import numpy as np
import pytest

from beamsweep.channel import load_trace, write_trace
from beamsweep.cli import main
from beamsweep.engine import SweepConfig, run_simulation
from beamsweep.geometry import covering_radius_deg, min_separation_deg
from beamsweep.metrics import (
    DEFAULT_PERIODS_MS,
    chain_comparison,
    is_unimodal,
    optimal_period,
    outage_likelihood,
    throughput_curve,
    transmission_fraction,
)

import oracles
from conftest import constant_trace, report

GRID = DEFAULT_PERIODS_MS


def test_1_transmission_fraction_exact():
    worst = 0.0
    for T in (100, 300, 1000):
        for n in (1, 2, 4):
            exact = 1 - Fraction(200) * Fraction(1, 8) / (n * T)
            worst = max(worst, abs(transmission_fraction(200, 0.125, T, n) - float(exact)))
    zero = transmission_fraction(200, 0.125, 25, 1)
    ok = worst <= 1e-12 and zero == 0.0
    report(1, ok, f"max |eta - exact| = {worst:.2e} (tol 1e-12); eta(n=1, T=25) = {zero!r}")
    assert ok


def test_2_codebook(codebook):
    per_face = [len(codebook.face_beams(f)) for f in range(4)]
    contained = True
    for b in codebook.beams:
        off = (b.boresight.azimuth_deg - codebook.face_boresights_deg[b.face] + 180.0) % 360.0 - 180.0
        contained &= abs(off) <= 45.0 and abs(b.boresight.elevation_deg) <= 30.0
    radius = oracles.dense_grid_covering_radius(codebook.azimuths_deg, codebook.elevations_deg, step=0.25)
    sep = min_separation_deg(codebook)
    ok = len(codebook) == 200 and per_face == [50] * 4 and contained and radius <= 8.0 and sep >= 8.9
    report(2, ok, f"{len(codebook)} beams {per_face}, contained={contained}, covering radius {radius:.4f} deg "
                  f"(<= 8.0), min separation {sep:.4f} deg (>= 8.9)")
    assert abs(covering_radius_deg(codebook) - radius) <= 1e-6
    assert ok


def test_3_static_closed_form(codebook, const_trace):
    worst, max_outage = 0.0, 0.0
    for n in (1, 2, 4):
        for T in GRID:
            res = run_simulation(const_trace, codebook, SweepConfig(sweep_period_ms=T, n_chains=n))
            eta = transmission_fraction(200, 0.125, T, n)
            expected = eta * 100e6 * math.log2(1 + 10 ** 2.5)
            worst = max(worst, abs(res.mean_rate_bps - expected) / expected)
            max_outage = max(max_outage, res.outage_fraction)
    ok = worst <= 1e-9 and max_outage == 0.0
    report(3, ok, f"{len(GRID)} periods x n in (1,2,4): max rel error {worst:.2e} (tol 1e-9), "
                  f"max outage {max_outage!r}")
    assert ok


def test_4_step_drop_timeline(codebook, step_trace):
    res = run_simulation(step_trace, codebook, SweepConfig(sweep_period_ms=200.0, n_chains=1))
    phase, serving, outage = oracles.step_drop_expected_timeline()
    bad = int(np.sum((res.phase != phase) | (res.serving_beam != serving) | (res.outage != outage)))
    onset = int(np.flatnonzero(res.outage)[0]) if res.outage.any() else -1
    recovered = int(np.flatnonzero(res.serving_beam == 1)[0]) if (res.serving_beam == 1).any() else -1
    ok = bad == 0 and res.n_slots == len(phase)
    report(4, ok, f"{bad} slot discrepancies; outage onset slot {onset} (t={onset * 0.125} ms), "
                  f"recovery on beam 1 at slot {recovered}")
    assert ok


@pytest.fixture(scope="module")
def chains(codebook, nlos_ensemble):
    return chain_comparison(nlos_ensemble, codebook, GRID, (1, 2, 4))


def test_5_interior_optimum(codebook, nlos_ensemble):
    curve = throughput_curve(nlos_ensemble, codebook, GRID, n_chains=1)
    best = optimal_period(curve)[1]
    unimodal = is_unimodal(curve.ensemble[1], 0.02)
    ok = GRID[0] < best < GRID[-1] and unimodal
    shape = ", ".join(f"{v:.3f}" for v in curve.ensemble[1])
    report(5, ok, f"T*(n=1) = {best:g} ms, unimodal within 2%: {unimodal}; curve [{shape}]")
    assert ok


def test_6_chain_gap_and_plateau(chains):
    p1, p4 = chains[1].peak, chains[4].peak
    w1, w4 = chains[1].plateau_points, chains[4].plateau_points
    ok = p1 <= p4 - 0.02 and w4 >= w1
    report(6, ok, f"peak n=1 {p1:.4f} vs n=4 {p4:.4f} (gap {p4 - p1:.4f} >= 0.02); "
                  f"95% plateau points n=1 {w1} {chains[1].plateau_span_ms}, n=4 {w4} {chains[4].plateau_span_ms}")
    assert ok


def test_7_outage_monotonicity(codebook, nlos_ensemble, const_trace):
    lines, ok = [], True
    for tr in nlos_ensemble:
        lo = outage_likelihood(tr, codebook, 100.0, 1)
        hi = outage_likelihood(tr, codebook, 1000.0, 1)
        ok &= hi >= lo
        lines.append(f"{tr.run_id}: {lo:.4f}->{hi:.4f}")
    const = max(outage_likelihood(const_trace, codebook, T, n) for T in GRID for n in (1, 2, 4))
    ok &= const == 0.0
    report(7, ok, f"outage T=100 -> T=1000: {'; '.join(lines)}; constant trace max {const!r}")
    assert ok


def test_8_determinism_and_roundtrip(tmp_path, nlos_ensemble, const_trace, step_trace):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["analyze", "--out", str(out), "--jobs", "2" if name == "b" else "1"]) == 0
        outs.append({f: (out / f).read_bytes() for f in ("results.csv", "summary.json")})
    identical = outs[0] == outs[1]

    worst, inf_ok = 0.0, True
    fixtures = list(nlos_ensemble) + [const_trace, step_trace, constant_trace(n_samples=3, run_id="tiny")]
    for tr in fixtures:
        p = tmp_path / f"{tr.run_id}.csv"
        write_trace(tr, p)
        back = load_trace(p, expected_n_beams=tr.n_beams)
        finite = np.isfinite(tr.samples)
        inf_ok &= bool(np.array_equal(np.isneginf(back.samples), np.isneginf(tr.samples)))
        if finite.any():
            worst = max(worst, float(np.max(np.abs(back.samples[finite] - tr.samples[finite]))))
    ok = identical and worst <= 1e-9 and inf_ok
    report(8, ok, f"analyze outputs byte-identical across runs: {identical}; round trip on {len(fixtures)} "
                  f"fixtures max |err| {worst:.1e} dB (tol 1e-9), -inf preserved: {inf_ok}")
    assert ok
