import json
import subprocess
import sys

import pytest

from beamsweep import __version__
from beamsweep.channel import load_trace, write_trace
from beamsweep.cli import AtomicOutputs, ExperimentConfig, main

from conftest import constant_trace


def _config(path, **kw):
    path.write_text(json.dumps(kw), encoding="utf-8")
    return str(path)


def test_codebook_defaults(tmp_path, capsys):
    assert main(["codebook", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "codebook.csv").read_text().splitlines()
    assert len(lines) == 201
    out = capsys.readouterr().out
    assert "beams: 200" in out and "covering radius: 7.05" in out


def test_codebook_one_beam_per_face(tmp_path):
    cfg = _config(tmp_path / "c.json", codebook={"beams_per_face": 1})
    assert main(["codebook", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    assert len((tmp_path / "o" / "codebook.csv").read_text().splitlines()) == 5


def test_codebook_invalid_span(tmp_path, capsys):
    cfg = _config(tmp_path / "c.json", codebook={"el_halfspan_deg": -3})
    assert main(["codebook", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "el_halfspan_deg" in capsys.readouterr().err
    assert not (tmp_path / "o" / "codebook.csv").exists()


def test_unknown_key_and_bad_json(tmp_path, capsys):
    cfg = _config(tmp_path / "c.json", period_ms=[100])
    assert main(["analyze", "--config", cfg]) == 2
    assert "period_ms" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text("{", encoding="utf-8")
    assert main(["analyze", "--config", str(bad)]) == 2
    assert main(["analyze", "--config", str(tmp_path / "nope.json")]) == 2


def test_synth_small_ensemble_is_reproducible(tmp_path):
    cfg = _config(tmp_path / "c.json", ensemble={"n_runs": 2, "duration_s": 1.0})
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["synth", "--config", cfg, "--out", str(a), "--seed", "3"]) == 0
    assert main(["synth", "--config", cfg, "--out", str(b), "--seed", "3"]) == 0
    manifest = json.loads((a / "manifest.json").read_text())
    assert [r["seed"] for r in manifest["runs"]] == [3, 4]
    for r in manifest["runs"]:
        assert (a / r["file"]).read_bytes() == (b / r["file"]).read_bytes()
        tr = load_trace(a / r["file"], expected_n_beams=200)
        assert tr.n_samples == 160 and tr.run_id == r["run_id"]


def test_synth_default_ensemble(tmp_path):
    assert main(["synth", "--out", str(tmp_path), "--jobs", "2"]) == 0
    files = sorted(tmp_path.glob("*.csv"))
    assert len(files) == 6
    for f in files:
        # header + 2400 samples x 200 beams
        with f.open() as fh:
            assert sum(1 for _ in fh) == 1 + 2400 * 200
    assert [r["seed"] for r in json.loads((tmp_path / "manifest.json").read_text())["runs"]] == list(range(6))


def test_synth_zero_duration(tmp_path, capsys):
    cfg = _config(tmp_path / "c.json", ensemble={"duration_s": 0})
    assert main(["synth", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "duration_s" in capsys.readouterr().err


def _const_fixture(tmp_path):
    p = tmp_path / "const.csv"
    write_trace(constant_trace(n_samples=1920), p)  # 12 s
    return p


def test_analyze_constant_trace(tmp_path):
    _const_fixture(tmp_path)
    cfg = _config(tmp_path / "c.json", traces=["const.csv"], n_chains=[4],
                  periods_ms=[50, 100, 300, 1000, 2000])
    out = tmp_path / "out"
    assert main(["analyze", "--config", cfg, "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["per_chain"]["4"]["optimal_period_ms"] == 2000.0
    assert summary["tool"]["version"] == __version__
    assert len(summary["config_hash"]) == 64
    rows = (out / "results.csv").read_text().splitlines()
    assert rows[0] == "run_id,n_chains,T_ms,mean_rate_bps,normalized_rate,outage_fraction"
    assert len(rows) == 1 + 5
    assert all(r.endswith(",0.0") for r in rows[1:])
    assert "finished_unix" in json.loads((out / "run_info.json").read_text())


def test_config_hash_ignores_output_location(tmp_path):
    a = ExperimentConfig.from_dict({"out_dir": "x", "jobs": 2})
    b = ExperimentConfig.from_dict({"out_dir": "y"})
    c = ExperimentConfig.from_dict({"seed": 1})
    assert a.config_hash() == b.config_hash() != c.config_hash()


def test_analyze_missing_trace(tmp_path, capsys):
    cfg = _config(tmp_path / "c.json", traces=["absent.csv"])
    assert main(["analyze", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "absent.csv" in capsys.readouterr().err


def test_analyze_bad_trace_leaves_no_outputs(tmp_path):
    _const_fixture(tmp_path)
    (tmp_path / "bad.csv").write_text("t_ms,beam_id,snr_db\n0,0,1\n", encoding="utf-8")
    cfg = _config(tmp_path / "c.json", traces=["const.csv", "bad.csv"], n_chains=[4])
    out = tmp_path / "out"
    assert main(["analyze", "--config", cfg, "--out", str(out)]) == 2
    assert not out.exists() or list(out.iterdir()) == []


def test_runtime_error_exit_code(tmp_path, capsys):
    # a run with zero throughput at every period cannot be normalized
    dead = constant_trace(n_samples=400, best_db=-1e300, run_id="dead")
    write_trace(dead, tmp_path / "dead.csv")
    cfg = _config(tmp_path / "c.json", traces=["dead.csv"], n_chains=[1], periods_ms=[100, 200])
    assert main(["analyze", "--config", cfg, "--out", str(tmp_path / "o")]) == 3
    assert "dead" in capsys.readouterr().err
    assert not (tmp_path / "o" / "summary.json").exists()


def test_atomic_outputs_cleanup(tmp_path):
    with pytest.raises(RuntimeError):
        with AtomicOutputs(tmp_path) as out:
            out.write_text("a.txt", "partial")
            raise RuntimeError("boom")
    assert list(tmp_path.iterdir()) == []
    with AtomicOutputs(tmp_path) as out:
        out.write_text("a.txt", "done")
    assert [p.name for p in tmp_path.iterdir()] == ["a.txt"]


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "beamsweep", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and __version__ in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "beamsweep", "frobnicate"], capture_output=True, text=True)
    assert proc.returncode == 2
