import json
from pathlib import Path

import pytest

from sfq.catalog import builtin_catalog, dump_config, load_config
from sfq.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "small.toml"
    path.write_text(dump_config(builtin_catalog()).replace(
        "runs_per_policy = 2000", "runs_per_policy = 40").replace(
        "bootstrap_resamples = 10000", "bootstrap_resamples = 200"), encoding="utf-8")
    return path


def test_simulate_artifacts(capsys, tmp_path, small_config):
    out = tmp_path / "out"
    code, text, _ = run(capsys, "simulate", "--config", str(small_config), "--seed", "42",
                        "--out", str(out))
    assert code == 0
    assert "Combined Controls" in text
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["master_seed"] == 42
    for name in manifest["artifacts"]:
        assert (out / name).exists()
    assert {"runs.csv", "summary.csv", "manifest.json", "sfq_by_policy.png"} <= set(manifest["artifacts"])
    summary = (out / "summary.csv").read_text().splitlines()
    assert summary[0] == "policy,mean,ci_lower,ci_upper,effect_d"
    assert len(summary) == 6
    assert (out / "runs.csv").read_bytes().count(b"\n") == 1 + 5 * 40


def test_manifest_hash_tracks_config(capsys, tmp_path, small_config):
    hashes = []
    for seed in ("1", "1", "2"):
        out = tmp_path / f"o{len(hashes)}"
        run(capsys, "simulate", "--config", str(small_config), "--seed", seed, "--out", str(out),
            "--no-figures")
        hashes.append(json.loads((out / "manifest.json").read_text())["config_hash"])
    assert hashes[0] == hashes[1] != hashes[2]


def test_simulate_bad_weights(capsys, tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("[weights]\nw_l=0.3\nw_f=0.3\nw_p=0.3\nw_h=0.3\nw_r=0.3\n")
    code, _, err = run(capsys, "simulate", "--config", str(bad), "--out", str(tmp_path / "o"))
    assert code == 1
    assert "weights" in err


def test_unknown_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--frobnicate"])
    assert exc.value.code == 2


def test_missing_config_file(capsys, tmp_path):
    code, _, err = run(capsys, "simulate", "--config", str(tmp_path / "nope.toml"))
    assert code == 1


def test_score_baseline(capsys):
    code, out, _ = run(capsys, "score", "--latency", "0.82", "--failure", "2.0", "--prompts", "0.30",
                       "--tickets", "12.8", "--risk", "1.0")
    assert code == 0
    assert out.splitlines()[0] == "sfq 0.180653"
    assert "l_hat 0.063265" in out


def test_score_field_observations(capsys):
    code, out, _ = run(capsys, "score", "--failure", "2.0", "--prompts", "0.85", "--tickets", "0.6",
                       "--risk", "0.05")
    assert code == 0
    assert abs(float(out.split()[1]) - 0.285320) <= 1e-6


def test_score_policy_risk_and_weights(capsys):
    cfg = builtin_catalog()
    code, out, _ = run(capsys, "score", "--failure", "2", "--prompts", "0.3", "--tickets", "12.8",
                       "--policy", "combined_controls", "--weights", "0,0,0,0,1")
    assert code == 0
    from sfq.metric import risk_index
    r = risk_index(cfg.scenarios, cfg.policy("combined_controls").effectiveness)
    assert out.splitlines()[0] == f"sfq {1 - r:.6f}"


@pytest.mark.parametrize("argv", [
    ("--risk", "1.2"),
    ("--risk", "0.5", "--weights", "0.5,0.5,0.5,0.5,0.5"),
    ("--policy", "nope"),
    (),
])
def test_score_errors(capsys, argv):
    code, _, _ = run(capsys, "score", "--failure", "2", "--prompts", "0.3", "--tickets", "1", *argv)
    assert code == 1


def test_sensitivity_artifacts(capsys, tmp_path, small_config):
    out = tmp_path / "sens"
    code, text, _ = run(capsys, "sensitivity", "--config", str(small_config), "--draws", "200",
                        "--seed", "5", "--out", str(out))
    assert code == 0
    assert "preserved fraction: " in text
    assert "top-swing component: " in text
    for name in ("rank_stability.csv", "tornado.csv", "manifest.json", "tornado.png",
                 "rank_stability.png", "sensitivity_summary.txt"):
        assert (out / name).exists()


def test_sensitivity_from_runs_csv(capsys, tmp_path, small_config):
    sim = tmp_path / "sim"
    run(capsys, "simulate", "--config", str(small_config), "--out", str(sim), "--no-figures")
    a, b = tmp_path / "a", tmp_path / "b"
    run(capsys, "sensitivity", "--config", str(small_config), "--draws", "100", "--out", str(a),
        "--no-figures")
    run(capsys, "sensitivity", "--config", str(small_config), "--draws", "100", "--out", str(b),
        "--runs-csv", str(sim / "runs.csv"), "--no-figures")
    # runs.csv keeps 9 significant digits, so compare the ordering, not the bytes
    sa = (a / "sensitivity_summary.txt").read_text().splitlines()
    sb = (b / "sensitivity_summary.txt").read_text().splitlines()
    assert sa[1:3] == sb[1:3]


def test_sensitivity_single_policy(capsys, tmp_path):
    cfg = tmp_path / "one.toml"
    cfg.write_text("[run]\nbaseline_policy='only'\n[[policy]]\nid='only'\n"
                   "effectiveness={spray=0,theft=0,travel=0,legacy=0,aitm=0}\n")
    code, _, err = run(capsys, "sensitivity", "--config", str(cfg), "--draws", "10", "--runs", "5",
                       "--out", str(tmp_path / "o"))
    assert code == 1
    assert "2 policies" in err


def _targets(tmp_path, means, sd=None):
    path = tmp_path / "targets.toml"
    lines = [] if sd is None else [f"run_sd = {sd}"]
    lines.append("[means]")
    lines += [f"{k} = {v}" for k, v in means.items()]
    path.write_text("\n".join(lines) + "\n")
    return path


def test_calibrate_fixed_point(capsys, tmp_path):
    from sfq.calibrate import evaluate
    cfg = builtin_catalog()
    means, sd = evaluate(cfg)
    out = tmp_path / "fitted.toml"
    code, text, _ = run(capsys, "calibrate", "--targets", str(_targets(tmp_path, means, sd)),
                        "--out", str(out))
    assert code == 0
    assert load_config(out) == cfg
    assert "residual +0.000000" in text


def test_calibrate_rejects_out_of_range_target(capsys, tmp_path):
    means = dict.fromkeys(builtin_catalog().policy_ids, 0.4)
    means["baseline"] = 1.5
    code, _, err = run(capsys, "calibrate", "--targets", str(_targets(tmp_path, means)),
                       "--out", str(tmp_path / "f.toml"))
    assert code == 1


def test_calibrate_missing_policy(capsys, tmp_path):
    code, _, _ = run(capsys, "calibrate", "--targets", str(_targets(tmp_path, {"baseline": 0.3})),
                     "--out", str(tmp_path / "f.toml"))
    assert code == 1


def test_calibrate_tolerance_miss_writes_config(capsys, tmp_path):
    means = dict.fromkeys(builtin_catalog().policy_ids, 0.999)
    out = tmp_path / "f.toml"
    code, _, _ = run(capsys, "calibrate", "--runs", "100",
                     "--targets", str(_targets(tmp_path, means)), "--out", str(out))
    assert code == 3
    assert Path(out).exists()
