import csv
import json

import numpy as np
import pytest

from optising.cli import main


def run(args):
    return main(list(args))


def test_oracle_mobius(capsys):
    assert run(["oracle", "--mobius", "12"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["h_min"] == -14.0
    assert len(doc["state"]) == 12


def test_oracle_refuses_oversized():
    assert run(["oracle", "--glass", "30"]) == 3  # over the brute-force cap


def test_solve_exact_artifacts(tmp_path):
    manifest = tmp_path / "manifest.json"
    outdir = tmp_path / "out"
    manifest.write_text(json.dumps({
        "problem": {"type": "mobius", "n": 8},
        "tier": "exact",
        "runs": 5,
        "seed": 1,
        "anneal": {"t0": 2.0, "n_step": 10, "n_temp": 10},
        "outdir": str(outdir),
    }))
    assert run(["solve", "--manifest", str(manifest)]) == 0
    for name in ("runs.csv", "probability.csv", "summary.json",
                 "hamiltonian.png", "probability.png"):
        assert (outdir / name).exists(), name

    summary = json.loads((outdir / "summary.json").read_text())
    assert summary["runs"] == 5
    assert summary["schema_version"] == 1

    with open(outdir / "runs.csv") as fh:
        header = fh.readline()
        assert header.startswith("#")  # provenance comment with manifest hash
        rows = list(csv.DictReader(fh))
    assert len(rows) == 5 * 100  # one row per run and iteration
    assert {r["run"] for r in rows} == {str(i) for i in range(5)}


def test_solve_noisy_tier(tmp_path):
    manifest = tmp_path / "manifest.json"
    outdir = tmp_path / "out"
    manifest.write_text(json.dumps({
        "problem": {"type": "glass", "n": 8, "seed": 0},
        "tier": "noisy",
        "runs": 3,
        "seed": 1,
        "anneal": {"n_step": 10, "n_temp": 10},
        "outdir": str(outdir),
    }))
    assert run(["solve", "--manifest", str(manifest)]) == 0
    summary = json.loads((outdir / "summary.json").read_text())
    assert "k_mean" in summary and summary["k_mean"] > 0


def test_solve_rejects_bad_manifest(tmp_path):
    manifest = tmp_path / "manifest.json"
    manifest.write_text(json.dumps({"problem": {"type": "unknown"}}))
    assert run(["solve", "--manifest", str(manifest)]) == 2


def test_report_noise(tmp_path):
    outdir = tmp_path / "noise"
    assert run(["report", "noise", "--n", "20",
                "--outdir", str(outdir)]) == 0
    doc = json.loads((outdir / "noise.json").read_text())
    assert doc["delta_h"] == pytest.approx(2276, rel=0.01)
    assert (outdir / "noise.png").exists()
    assert (outdir / "noise.csv").exists()


def test_report_geometry(tmp_path):
    outdir = tmp_path / "geom"
    assert run(["report", "geometry", "--outdir", str(outdir)]) == 0
    doc = json.loads((outdir / "geometry.json").read_text())
    assert doc["w0_m"] == pytest.approx(431e-6, rel=0.005)
    assert (outdir / "geometry.png").exists()


def test_report_perf(tmp_path):
    outdir = tmp_path / "perf"
    assert run(["report", "perf", "--n", "30",
                "--outdir", str(outdir)]) == 0
    doc = json.loads((outdir / "perf.json").read_text())
    assert doc["flops"] == 1860
    assert (outdir / "perf.png").exists()


def test_calibrate_command(tmp_path):
    outdir = tmp_path / "cal"
    assert run(["calibrate", "--n", "6", "--inject", "3",
                "--outdir", str(outdir)]) == 0
    report = json.loads((outdir / "calibration_report.json").read_text())
    assert report["fidelity_after"] > report["fidelity_before"]
    assert report["fidelity_after"] > 0.999
    for name in ("calibration.png", "calibration_phases.csv",
                 "calibration_tables.json"):
        assert (outdir / name).exists(), name


def test_holo_command(tmp_path):
    outdir = tmp_path / "holo"
    assert run(["holo", "--mobius", "4", "--outdir", str(outdir)]) == 0
    for slm in ("slm0", "slm1", "slm2"):
        assert (outdir / f"{slm}.pgm").exists()
        assert (outdir / f"{slm}.png").exists()
    with open(outdir / "slm1.pgm", "rb") as fh:
        assert fh.read(2) == b"P5"
