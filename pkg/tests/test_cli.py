import csv
import math
import subprocess
import sys

import pytest

from shrinkers.cli import main
from shrinkers.report import Table, fmt, structured_text


def run(tmp_path, *argv, name="out"):
    out = tmp_path / name
    return main([*argv, "--out", str(out)]), out


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_verify_cylinder(tmp_path, capsys):
    status, out = run(tmp_path, "verify", "--builtin", "cylinder", "--k", "1", "--n", "2", "--resolution", "256")
    assert status == 0
    assert "ok: verify" in capsys.readouterr().out
    table = rows(out / "verify.csv")
    assert list(table[0]) == ["check", "norm", "h", "observed_order", "pass", "seed"]
    assert all(r["pass"] == "true" for r in table)


def test_entropy_sphere(tmp_path):
    status, out = run(tmp_path, "entropy", "--builtin", "sphere", "--n", "2")
    assert status == 0
    r = rows(out / "entropy.csv")[0]
    assert abs(float(r["F"]) - 4 / math.e) <= 1e-3
    assert r["seed"] == "0"
    assert "[result]" in (out / "entropy.txt").read_text()


def test_corrupted_profile(tmp_path, capsys):
    bad = tmp_path / "corrupted.profile"
    bad.write_text("signature 1 0\n1.0 0.5\n1.0 zz\n")
    status, _ = run(tmp_path, "classify", "--input", str(bad))
    assert status == 2
    assert "line 3, column 5" in capsys.readouterr().err


def test_flow_schema(tmp_path):
    status, out = run(tmp_path, "flow", "--builtin", "circle", "--radius", "1.2", "--resolution", "64",
                      "--s-max", "0.3")
    assert status == 0
    table = rows(out / "flow.csv")
    assert list(table[0]) == ["s", "F", "minH", "maxA", "dV", "seed"]
    assert len(list((out / "snapshots").iterdir())) == len(table)


def test_classify_outputs(tmp_path):
    status, out = run(tmp_path, "classify", "--builtin", "cylinder", "--amplitude", "0.01", "--resolution", "256",
                      "--rounds", "2")
    assert status == 0
    cert = (out / "certificate.txt").read_text()
    assert "verdict: cylinder-1" in cert
    assert (out / "spectrum.csv").exists() and len(rows(out / "iteration.csv")) == 2


def test_classify_failure_names_stage(tmp_path, capsys):
    status, _ = run(tmp_path, "classify", "--builtin", "abresch-langer", "--resolution", "400")
    assert status == 1
    assert "classify:embedded" in capsys.readouterr().err


def test_gap_failure_status(tmp_path, capsys):
    status, out = run(tmp_path, "gap", "--builtin", "circle", "--amplitudes", "0.01", "--budget", "3")
    assert status == 1
    assert "gap:0.01" in capsys.readouterr().err
    assert (out / "gap.csv").exists() and (out / "trend.csv").exists()


def test_bounds(tmp_path):
    status, out = run(tmp_path, "bounds", "--builtin", "cylinder", "--resolution", "512")
    assert status == 0
    checks = {r["check"] for r in rows(out / "bounds.csv")}
    assert {"tail", "effective", "rescaling"} <= checks


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# sphere entropy\nbuiltin = sphere\nn = 2\nseed = 5\n")
    status, out = run(tmp_path, "entropy", "--config", str(cfg))
    assert status == 0 and rows(out / "entropy.csv")[0]["seed"] == "5"
    status, out = run(tmp_path, "entropy", "--config", str(cfg), "--seed", "9", name="o2")
    assert rows(out / "entropy.csv")[0]["seed"] == "9"


def test_bad_config(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("builtin = sphere\nbogus = 1\n")
    assert run(tmp_path, "entropy", "--config", str(cfg))[0] == 2
    assert "line 2" in capsys.readouterr().err
    assert run(tmp_path, "classify", "--builtin", "cylinder", "--R", "-1")[0] == 2


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    status = main(["entropy", "--builtin", "plane", "--out", str(blocker / "sub")])
    assert status == 3


def test_bounds_deterministic(tmp_path):
    args = ("bounds", "--builtin", "sphere", "--resolution", "256", "--seed", "7")
    _, a = run(tmp_path, *args, name="a")
    _, b = run(tmp_path, *args, name="b")
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    assert files
    for f in files:
        assert (a / f).read_bytes() == (b / f).read_bytes()


def test_module_entry_point(tmp_path):
    out = tmp_path / "m"
    p = subprocess.run([sys.executable, "-m", "shrinkers.cli", "entropy", "--builtin", "plane", "--out", str(out)],
                       capture_output=True, text=True)
    assert p.returncode == 0, p.stderr
    assert (out / "entropy.csv").exists()


# -- report formatting -------------------------------------------------------------


def test_fmt():
    assert fmt(True) == "true"
    assert fmt(0.0) == "0"
    assert fmt(1 / 3) == "0.333333333333"
    assert fmt(math.inf) == "inf" and fmt(math.nan) == "nan"
    assert fmt([1.0, 2.5]) == "1 2.5"


def test_table_csv():
    t = Table(["a", "b"])
    t.add(1, 0.1 + 0.2)
    assert t.to_csv() == "a,b\n1,0.3\n"


def test_structured_text():
    text = structured_text({"run": {"seed": 3, "ok": False}})
    assert text == "[run]\nseed: 3\nok: false\n"
