import json
import subprocess
import sys

import numpy as np
import pytest

from maxent_align import cli

GOLDEN_E5 = np.array([0.02053, 0.03854, 0.07232, 0.13574, 0.25475, 0.47812])


def run_cli(args, capsys):
    code = cli.main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_maxent_json(capsys):
    code, out, _ = run_cli(["maxent", "--epsilon", "5.0"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert np.max(np.abs(np.array(doc["result"]["probs"]) - GOLDEN_E5)) <= 5e-6
    prov = doc["provenance"]
    assert prov["subcommand"] == "maxent" and prov["seed"] == 0
    assert prov["parameters"]["epsilon"] == 5.0


def test_maxent_csv(capsys):
    code, out, _ = run_cli(["maxent", "--epsilon", "5.0", "--format", "csv"], capsys)
    assert code == 0
    lines = out.splitlines()
    header = [l for l in lines if not l.startswith("#")]
    assert header[0] == "value,prob"
    assert len(header) == 7
    assert any(l.startswith("# seed:") for l in lines)


def test_maxent_infeasible_exit_2(capsys):
    code, _, err = run_cli(["maxent", "--epsilon", "7.0"], capsys)
    assert code == 2
    assert "outside the support range" in err


def test_maxent_boundary(capsys):
    code, out, _ = run_cli(["maxent", "--epsilon", "6"], capsys)
    assert code == 0
    res = json.loads(out)["result"]
    assert res["boundary"] is True and res["beta"] == "-inf"


def test_no_survivors_exit_4(capsys):
    code, _, err = run_cli(
        ["condition", "--n", "200", "--target-mean", "5", "--window", "0.01",
         "--method", "rejection", "--max-draws", "1000"],
        capsys,
    )
    assert code == 4
    assert "tilted" in err


def test_unknown_flag_exit_2(capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(["maxent", "--epsilon", "5", "--bogus"])
    assert info.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_missing_window_for_sampler(capsys):
    code, _, _ = run_cli(["condition", "--n", "10", "--target-mean", "4", "--method", "tilted"], capsys)
    assert code == 2


def test_unattainable_exact_conditioning(capsys):
    code, _, _ = run_cli(["condition", "--n", "3", "--target-mean", "1.0", "--window", "1e-9", "--exact"], capsys)
    assert code == 0
    code, _, _ = run_cli(["condition", "--n", "3", "--target-mean", "7.0", "--window", "0.1"], capsys)
    assert code == 2


def test_condition_exact(capsys):
    code, out, _ = run_cli(["condition", "--n", "300", "--target-mean", "5", "--exact"], capsys)
    assert code == 0
    res = json.loads(out)["result"]
    assert res["target_sum"] == 1500
    assert np.max(np.abs(np.array(res["probs"]) - GOLDEN_E5)) < 0.01


def test_condition_tilted(capsys):
    args = ["condition", "--n", "200", "--target-mean", "5", "--window", "0.05",
            "--method", "tilted", "--draws", "20000", "--seed", "7"]
    code, out, _ = run_cli(args, capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["provenance"]["seed"] == 7
    assert doc["result"]["effective_sample_size"] > 10
    code2, out2, _ = run_cli(args + ["--jobs", "3"], capsys)
    assert out2 == out


def test_evidence_csv(capsys):
    code, out, _ = run_cli(
        ["evidence", "--source", "sequences", "--n", "100", "--samples", "5000",
         "--bin", "0.01", "--seed", "7", "--format", "csv"],
        capsys,
    )
    assert code == 0
    rows = [l for l in out.splitlines() if not l.startswith("#")]
    assert rows[0] == "bin_left,bin_right,count,frequency"
    assert sum(int(r.split(",")[2]) for r in rows[1:]) == 5000


def test_align_report(capsys):
    code, out, _ = run_cli(
        ["align", "--kernel", "maxent", "--grid-points", "101",
         "--report", "concentration,cdf-bounds"],
        capsys,
    )
    assert code == 0
    res = json.loads(out)["result"]
    assert res["residual"] <= 1e-9 and res["concentration"] >= 0.99
    assert [b["threshold"] for b in res["cdf_bounds"]] == [2.0, 3.0, 4.0, 5.0]


def test_align_forced_integrals(capsys):
    code, out, _ = run_cli(
        ["align", "--kernel", "piecewise", "--grid-points", "101", "--no-center-exception",
         "--report", "forced-integrals"],
        capsys,
    )
    res = json.loads(out)["result"]
    for f in res["forced_integrals"]:
        assert f["lower"] == pytest.approx(f["expected"], abs=1e-9)
        assert f["upper"] == pytest.approx(f["expected"], abs=1e-9)


def test_appendix(capsys):
    code, out, _ = run_cli(["appendix", "--grid-points", "101"], capsys)
    assert code == 0
    variants = json.loads(out)["result"]["variants"]
    assert set(variants) == {"rule-at-center", "uniform-atom-at-center"}


def test_output_file_and_env(tmp_path, monkeypatch, capsys):
    target = tmp_path / "a.json"
    assert cli.main(["maxent", "--epsilon", "4", "--output", str(target)]) == 0
    assert json.loads(target.read_text())["result"]["epsilon"] == pytest.approx(4.0)
    monkeypatch.setenv(cli.OUTPUT_DIR_ENV, str(tmp_path / "env"))
    assert cli.main(["maxent", "--epsilon", "4", "--format", "csv"]) == 0
    assert (tmp_path / "env" / "maxent.csv").exists()
    assert capsys.readouterr().out == ""


def test_run_config_validation():
    with pytest.raises(ValueError):
        cli.RunConfig("nope")
    with pytest.raises(ValueError):
        cli.RunConfig("maxent", output_format="xml")


def test_run_returns_code():
    cfg = cli.RunConfig("maxent", {"epsilon": 0.0})
    assert cli.run(cfg) == 2


def test_reproduce(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.reproduce_all(a) == 0
    assert cli.reproduce_all(b) == 0
    manifest = json.loads((a / "manifest.json").read_text())
    assert len(manifest["entries"]) == 5
    assert all(e["status"] == "ok" for e in manifest["entries"])
    e5 = next(e for e in manifest["entries"] if e["name"] == "maxent-e5")
    assert e5["reference_values"] == GOLDEN_E5.tolist()
    for entry in manifest["entries"]:
        assert (a / entry["file"]).read_bytes() == (b / entry["file"]).read_bytes()


def test_reproduce_marks_failures(tmp_path, monkeypatch):
    def boom(seed):
        raise RuntimeError("broken")

    exps = list(cli.EXPERIMENTS)
    exps[0] = (exps[0][0], exps[0][1], exps[0][2], boom)
    monkeypatch.setattr(cli, "EXPERIMENTS", tuple(exps))
    assert cli.reproduce_all(tmp_path) != 0
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["entries"][0]["status"] == "failed"
    assert manifest["entries"][1]["status"] == "ok"


def test_console_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "maxent_align.cli", "maxent", "--epsilon", "5", "--format", "csv"],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0
    assert "\r" not in proc.stdout
