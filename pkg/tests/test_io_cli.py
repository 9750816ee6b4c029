import json

import numpy as np
import pytest

from rcskit.bitspace import SampleRecord, generate_porter_thomas
from rcskit.cli import main
from rcskit.experiment import ConfigError, ExperimentConfig, run_experiment
from rcskit.io import FormatError, read_any_samples, read_plain_bitstrings, read_ptable, read_samples, write_ptable, write_samples


def test_ptable_round_trip_text_and_binary(tmp_path):
    t = generate_porter_thomas(3, 6)
    write_ptable(tmp_path / "t.txt", t)
    write_ptable(tmp_path / "t.bin", t, binary=True)
    assert (tmp_path / "t.txt").read_text().startswith("ptable v1 n=6\n")
    assert (tmp_path / "t.bin").read_bytes()[:4] == b"PTB1"
    for name in ("t.txt", "t.bin"):
        assert np.array_equal(read_ptable(tmp_path / name).probs, t.probs)


def test_ptable_errors(tmp_path):
    (tmp_path / "bad.txt").write_text("nonsense\n0.5\n0.5\n")
    with pytest.raises(FormatError):
        read_ptable(tmp_path / "bad.txt")
    (tmp_path / "short.txt").write_text("ptable v1 n=2\n0.5\n0.5\n")
    with pytest.raises(FormatError):
        read_ptable(tmp_path / "short.txt")


def test_sample_round_trip(tmp_path):
    s = SampleRecord(5, np.array([0, 1, 16, 31, 7]))
    write_samples(tmp_path / "s.txt", s)
    lines = (tmp_path / "s.txt").read_text().splitlines()
    assert lines[0] == "sample v1 n=5"
    assert lines[2] == "00001" and lines[3] == "10000"
    back = read_samples(tmp_path / "s.txt")
    assert back.draws.tolist() == s.draws.tolist()


def test_plain_adapter(tmp_path):
    (tmp_path / "p.txt").write_text("0101\n1111\n\n0000\n")
    s = read_plain_bitstrings(tmp_path / "p.txt")
    assert s.n == 4 and s.draws.tolist() == [5, 15, 0]
    assert read_any_samples(tmp_path / "p.txt").draws.tolist() == [5, 15, 0]
    (tmp_path / "q.txt").write_text("0101\n11\n")
    with pytest.raises(FormatError):
        read_plain_bitstrings(tmp_path / "q.txt")


def _cfg(**over):
    d = {"schema_version": 1, "master_seed": 5, "source": {"kind": "porter_thomas", "n": 8},
         "noise": {"kind": "google", "phi": 0.4}, "N": 3000, "R": 3,
         "analyses": [{"name": "xeb"}, {"name": "t"}, {"name": "distances"}]}
    d.update(over)
    return d


def test_config_validation_reports_field_path():
    with pytest.raises(ConfigError) as e:
        ExperimentConfig.from_dict(_cfg(N=0))
    assert e.value.path == "$.N"
    with pytest.raises(ConfigError) as e:
        ExperimentConfig.from_dict(_cfg(source={"kind": "tape"}))
    assert e.value.path == "$.source.kind"
    with pytest.raises(ConfigError) as e:
        ExperimentConfig.from_dict(_cfg(analyses=[{"name": "magic"}]))
    assert e.value.path == "$.analyses[0].name"
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(_cfg(schema_version=9))


def test_run_is_byte_identical_and_thread_independent(tmp_path):
    cfg = ExperimentConfig.from_dict(_cfg())
    m1 = run_experiment(cfg, out_dir=tmp_path / "a")
    m2 = run_experiment(cfg, threads=3, out_dir=tmp_path / "b")
    assert m1.config_hash == m2.config_hash
    for f in ("results.csv", "summary.json", "manifest.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    text = (tmp_path / "a" / "results.csv").read_text()
    assert text.startswith(f"# config_hash={m1.config_hash}\n")
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert summary["config_hash"] == m1.config_hash
    assert set(summary["metrics"]) >= {"xeb", "t", "chi2"}


def test_run_reps_use_distinct_seeds(tmp_path):
    cfg = ExperimentConfig.from_dict(_cfg(R=4, source={"kind": "porter_thomas", "n": 8, "circuits": 2}))
    m = run_experiment(cfg, out_dir=tmp_path)
    seeds = [s["sample"] for s in m.seeds]
    assert len(set(seeds)) == 4


def test_run_simulated_circuit_with_trajectories(tmp_path):
    circuit = {"n": 6, "depth": 4, "pattern": "EFGH", "seed": 1}
    cfg = ExperimentConfig.from_dict(_cfg(source={"kind": "simulate", "circuit": circuit,
                                                  "trajectories": {"e1": 0.001, "e2": 0.01, "eq": 0.02}},
                                          noise=None, N=500, R=2, analyses=[{"name": "xeb"}]))
    run_experiment(cfg, out_dir=tmp_path)
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert 0 < summary["metrics"]["p_no_err"]["mean"] < 1


def test_run_missing_file_fails(tmp_path):
    cfg = ExperimentConfig.from_dict(_cfg(source={"kind": "file", "path": str(tmp_path / "nope.txt")}))
    with pytest.raises(FileNotFoundError):
        run_experiment(cfg, out_dir=tmp_path / "o")


def test_cli_pipeline(tmp_path, capsys):
    t, s = str(tmp_path / "t.txt"), str(tmp_path / "s.txt")
    assert main(["gen-pt", "--n", "8", "--seed", "2", "-o", t]) == 0
    assert main(["sample", "--table", t, "--phi", "0.5", "--N", "20000", "--seed", "3", "-o", s]) == 0
    capsys.readouterr()
    assert main(["analyze", "--table", t, "--sample", s, "--phi", "0.5"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert abs(out["xeb"] - 0.5) < 0.1 and out["dof"] == 255
    assert main(["--format", "csv", "diagnose", "--table", t, "--sample", s, "--out-dir", str(tmp_path / "d")]) == 0
    header = (tmp_path / "d" / "histogram.csv").read_text().splitlines()[0]
    assert header == "bin_left,bin_right,count,overlay_density"


def test_cli_predict_csv(capsys):
    assert main(["predict", "--n", "12", "--g1", "180", "--g2", "60", "--format", "csv"]) == 0
    head, row = capsys.readouterr().out.splitlines()
    vals = dict(zip(head.split(","), row.split(",")))
    assert round(float(vals["formula77_per_gate"]), 4) == 0.3242
    assert round(float(vals["formula77_cycle"]), 4) == 0.3586


def test_cli_simulate_and_calib(tmp_path, capsys):
    out = str(tmp_path / "c.txt")
    assert main(["simulate", "--n", "6", "--depth", "4", "-o", out]) == 0
    assert read_ptable(out).n == 6
    assert main(["calib-experiment", "--n", "6", "--depth", "4", "--gates", "2", "--N", "500", "--total"]) == 0


def test_cli_run_and_report(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(_cfg()))
    assert main(["run", str(cfg), "--out-dir", str(tmp_path / "r")]) == 0
    assert main(["report", str(tmp_path / "r"), "--format", "csv"]) == 0
    assert "config_hash" in capsys.readouterr().out


def test_cli_exit_codes(tmp_path):
    assert main(["analyze", "--table", str(tmp_path / "missing"), "--sample", "x"]) == 3
    bad = tmp_path / "bad.json"
    bad.write_text('{"master_seed": 1}')
    assert main(["run", str(bad)]) == 2
    assert main(["no-such-command"]) == 2
    (tmp_path / "broken.json").write_text("{")
    assert main(["run", str(tmp_path / "broken.json")]) == 2
