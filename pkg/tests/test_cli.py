import json
import subprocess
import sys

import jsonschema
import pytest

from sentinel.authenticator import PROFILE_SCHEMA
from sentinel.cli import main
from sentinel.ingest import write_trace
from sentinel.syngen import ScenarioSpec, generate_trace

SCENARIO = {"population": {"n_users": 4, "separation": 6.0}, "duration_s": 14400, "seed": 8,
            "takeovers": [{"time_s": 40, "from_user": "user0", "to_user": "user2"}]}


@pytest.fixture(scope="module")
def gen_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "scenario.json").write_text(json.dumps(SCENARIO))
    assert main(["gen", str(root / "scenario.json"), "--out", str(root / "data")]) == 0
    return root


@pytest.fixture(scope="module")
def profile_path(gen_dir):
    out = gen_dir / "profile.json"
    assert main(["train", "--manifest", str(gen_dir / "data" / "manifest.json"), "--owner", "user0",
                 "--trained-at", "2026-01-01", "--out", str(out)]) == 0
    return out


def tree(path):
    return {p.relative_to(path).as_posix(): p.read_bytes() for p in sorted(path.rglob("*")) if p.is_file()}


def run_cli(*args, stdin=None):
    return subprocess.run([sys.executable, "-m", "sentinel", *args], input=stdin, capture_output=True, text=True)


def test_gen_writes_dataset(gen_dir):
    files = tree(gen_dir / "data")
    assert sorted(files) == ["manifest.json", "session.csv", "user0.csv", "user1.csv", "user2.csv", "user3.csv"]
    manifest = json.loads(files["manifest.json"])
    assert manifest["seed"] == 8 and len(manifest["users"]) == 4


def test_gen_is_deterministic(gen_dir, tmp_path):
    assert main(["gen", str(gen_dir / "scenario.json"), "--out", str(tmp_path / "again")]) == 0
    assert tree(tmp_path / "again") == tree(gen_dir / "data")


def test_gen_seed_override(gen_dir, tmp_path, monkeypatch):
    monkeypatch.setenv("SENTINEL_SEED", "99")
    assert main(["gen", str(gen_dir / "scenario.json"), "--out", str(tmp_path / "env")]) == 0
    assert json.loads((tmp_path / "env" / "manifest.json").read_text())["seed"] == 99
    assert main(["gen", str(gen_dir / "scenario.json"), "--out", str(tmp_path / "flag"), "--seed", "7"]) == 0
    assert json.loads((tmp_path / "flag" / "manifest.json").read_text())["seed"] == 7


def test_gen_missing_spec(tmp_path, capsys):
    missing = tmp_path / "nope.json"
    assert main(["gen", str(missing), "--out", str(tmp_path / "x")]) == 2
    assert str(missing) in capsys.readouterr().err


def test_gen_bad_spec(tmp_path):
    (tmp_path / "bad.json").write_text('{"duration_s": 10}')
    assert main(["gen", str(tmp_path / "bad.json"), "--out", str(tmp_path / "x")]) == 2


def test_train_profile_validates(profile_path):
    obj = json.loads(profile_path.read_text())
    jsonschema.validate(obj, PROFILE_SCHEMA)
    assert obj["owner"] == "user0" and len(obj["w"]) == 9 and obj["seed"] == 0


def test_train_sensor_subset(gen_dir, capsys):
    assert main(["train", "--manifest", str(gen_dir / "data" / "manifest.json"), "--owner", "user1",
                 "--sensors", "acc,mag", "--trained-at", "2026-01-01"]) == 0
    obj = json.loads(capsys.readouterr().out)
    assert len(obj["w"]) == 6 and obj["sensor_set"] == ["acc", "mag"]


def test_train_unknown_owner(gen_dir):
    assert main(["train", "--manifest", str(gen_dir / "data" / "manifest.json"), "--owner", "mallory"]) == 2


def test_train_runtime_failure(gen_dir, capsys):
    code = main(["train", "--manifest", str(gen_dir / "data" / "manifest.json"), "--owner", "user0",
                 "--interval", "1200", "--detection-window", "1200"])
    assert code == 1
    assert "insufficient owner data" in capsys.readouterr().err


def test_usage_error_exit_code():
    assert run_cli("train").returncode == 2
    assert run_cli("frobnicate").returncode == 2


def test_eval_modes_in_header(gen_dir, capsys):
    heads = {}
    for mode in ("standard", "paper-literal"):
        assert main(["eval", "--manifest", str(gen_dir / "data" / "manifest.json"), "--owner", "user0",
                     "--interval", "60", "--mode", mode]) == 0
        heads[mode] = capsys.readouterr().out.splitlines()[:3]
    for mode, lines in heads.items():
        assert f"# mode: {mode}" in lines
        assert json.loads(lines[2].split(":", 1)[1])["mode"] == mode


def test_sweep_default_grid(gen_dir, tmp_path):
    out = tmp_path / "sweep.csv"
    assert main(["sweep", "--manifest", str(gen_dir / "data" / "manifest.json"), "--owner", "user0",
                 "--out", str(out), "--plot-data", str(tmp_path / "plots"), "--figures", "single,pairs"]) == 0
    rows = [l for l in out.read_text().splitlines() if not l.startswith("#")]
    assert len(rows) == 1 + 84
    assert sorted(p.name for p in (tmp_path / "plots").iterdir()) == ["accuracy_sensor_pairs.csv",
                                                                     "accuracy_single_sensor.csv"]


def test_sweep_json(gen_dir, capsys):
    assert main(["sweep", "--manifest", str(gen_dir / "data" / "manifest.json"), "--owner", "user3",
                 "--intervals", "120", "--sensor-sets", "acc;ori,mag", "--format", "json", "--seed", "4"]) == 0
    obj = json.loads(capsys.readouterr().out)
    assert [r["sensor_set"] for r in obj["records"]] == ["acc", "ori+mag"]
    assert obj["config"]["seed"] == 4


def test_timing_command(gen_dir, capsys):
    assert main(["timing", "--manifest", str(gen_dir / "data" / "manifest.json"), "--owner", "user0",
                 "--intervals", "10,20", "--repeats", "1"]) == 0
    assert "non_increasing" in capsys.readouterr().out


def owner_like_csv(seconds, seed=123):
    spec = ScenarioSpec.from_dict(SCENARIO)
    return write_trace(generate_trace(spec.users[0], seconds, 5.0, seed=seed)).decode()


def test_monitor_owner_stream(profile_path):
    res = run_cli("monitor", "--profile", str(profile_path), stdin=owner_like_csv(60.0))
    assert res.returncode == 0, res.stderr
    verdicts = [json.loads(l) for l in res.stdout.splitlines()]
    assert [v["decision"] for v in verdicts] == ["AUTHENTIC"] * 3


def test_monitor_takeover(gen_dir, profile_path):
    session = (gen_dir / "data" / "session.csv").read_text().splitlines()[: 1 + 5 * 120]
    res = run_cli("monitor", "--profile", str(profile_path), stdin="\n".join(session) + "\n")
    verdicts = [json.loads(l) for l in res.stdout.splitlines()]
    first_bad = next(v for v in verdicts if v["decision"] == "ANOMALOUS")
    assert first_bad["window_end"] - 40.0 <= 40.0
    assert all(v["decision"] == "AUTHENTIC" for v in verdicts if v["window_end"] <= 40.0)


def test_monitor_skips_malformed_lines(profile_path):
    lines = owner_like_csv(40.0).splitlines()
    lines.insert(30, "this,is,not,a,row")
    lines.insert(60, "1e9,nan,0,0,0,0,0,0,0,0")
    res = run_cli("monitor", "--profile", str(profile_path), stdin="\n".join(lines) + "\n")
    assert res.returncode == 0
    assert res.stderr.count("warning") >= 2
    assert len(res.stdout.splitlines()) == 2


def test_monitor_missing_profile(tmp_path):
    assert main(["monitor", "--profile", str(tmp_path / "none.json")]) == 2


def test_validate(gen_dir, profile_path, tmp_path, capsys):
    for path in (profile_path, gen_dir / "data" / "manifest.json", gen_dir / "scenario.json",
                 gen_dir / "data" / "user1.csv"):
        assert main(["validate", str(path)]) == 0
    assert capsys.readouterr().out.count("ok:") == 4
    bad = tmp_path / "bad.csv"
    bad.write_text("t,acc_x,acc_y,acc_z,ori_x,ori_y,ori_z,mag_x,mag_y,mag_z\n0,1,2\n")
    assert main(["validate", str(bad)]) == 1
    assert "line 2" in capsys.readouterr().err
    broken = json.loads(profile_path.read_text())
    broken["w"] = "oops"
    (tmp_path / "p.json").write_text(json.dumps(broken))
    assert main(["validate", str(tmp_path / "p.json"), "--kind", "profile"]) == 1
    assert main(["validate", str(tmp_path / "missing.json")]) == 2
