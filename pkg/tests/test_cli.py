import json
from pathlib import Path

import pytest

from blowlab.cli import main, parse_ladder, parse_points

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture(autouse=True)
def cache_env(tmp_path, monkeypatch):
    monkeypatch.setenv("BLOWLAB_CACHE_DIR", str(tmp_path / "cache"))


def cfg(name):
    return str(CONFIGS / name)


def test_parsers():
    assert parse_points("-1:1:3") == [-1.0, 0.0, 1.0]
    assert parse_points("0.5, 2") == [0.5, 2.0]
    assert parse_ladder("1e-1:1e-3:3") == pytest.approx([1e-1, 1e-2, 1e-3])


def test_profile_check(capsys):
    assert main(["profile", "check", "--config", cfg("standard.cfg")]) == 0
    assert "PASS" in capsys.readouterr().out


def test_profile_show_round_trips(tmp_path, capsys):
    main(["profile", "show", "--config", cfg("log_corrected.cfg")])
    text = capsys.readouterr().out
    p = tmp_path / "c.cfg"
    p.write_text(text)
    assert main(["profile", "check", "--config", str(p)]) == 0


def test_profile_bad_delta(tmp_path, capsys):
    p = tmp_path / "bad.cfg"
    p.write_text("kind=unbounded\ndelta=1.2\n")
    assert main(["profile", "check", "--config", str(p)]) != 0
    assert "ParamError" in capsys.readouterr().err


def test_profile_unknown_key(tmp_path, capsys):
    p = tmp_path / "bad.cfg"
    p.write_text("kind=unbounded\ndelta=0.25\nspeed=3\n")
    assert main(["profile", "check", "--config", str(p)]) != 0
    err = capsys.readouterr().err
    assert "ConfigError" in err and "speed" in err and "line 3" in err


def test_eval_zero_table(tmp_path):
    out = tmp_path / "z.csv"
    assert main(["eval", "--config", cfg("zero.cfg"), "--xs=-1:1:3", "--ts", "0.2,0.7",
                 "--order", "2", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "x,t,q1,q2,value,err_trunc,err_quad,flags"
    assert len(lines) == 1 + 3 * 2 * 4
    assert all(row.split(",")[4] == "0.0" for row in lines[1:])


def test_eval_is_deterministic(tmp_path):
    args = ["eval", "--config", cfg("standard.cfg"), "--xs=-2:2:3", "--ts", "0.4,0.9",
            "--order", "1"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(args + ["--out", str(a)])
    main(args + ["--out", str(b), "--threads", "2", "--no-cache"])
    assert a.read_bytes() == b.read_bytes()
    recs = [json.loads(l) for l in (tmp_path / "manifest.jsonl").read_text().splitlines()]
    assert len(recs) == 2 and recs[0]["outputs"][0]["path"] == "a.csv"


def test_eval_flags_cells(tmp_path):
    out = tmp_path / "f.csv"
    main(["eval", "--config", cfg("standard.cfg"), "--xs", "25", "--ts", "0.5,1.0",
          "--out", str(out)])
    rows = out.read_text().splitlines()[1:]
    assert rows[0].endswith("unverified")
    assert "error:IntegrabilityError" in rows[1]


def test_verify_zero_all(capsys):
    assert main(["verify", "all", "--config", cfg("zero.cfg")]) == 0
    assert capsys.readouterr().out.count("PASS") == 4


def test_verify_pde_standard(tmp_path):
    out = tmp_path / "v.json"
    assert main(["verify", "pde", "--config", cfg("standard.cfg"), "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["suites"]["pde"]["pass"] and rep["suites"]["pde"]["max_rel"] < 1e-6


def test_corrupt_cache_is_rebuilt(tmp_path, capsys):
    args = ["verify", "symmetry", "--config", cfg("standard.cfg")]
    assert main(args) == 0
    cache = tmp_path / "cache"
    files = list(cache.glob("*.blg"))
    assert files
    for f in files:
        f.write_bytes(f.read_bytes()[:-5] + b"xxxxx")
    args = ["verify", "pde", "--config", cfg("standard.cfg")]
    main(args)
    args = ["verify", "symmetry", "--config", cfg("standard.cfg")]
    assert main(args) == 0


def test_cache_ls_and_purge(tmp_path, capsys):
    main(["eval", "--config", cfg("standard.cfg"), "--xs", "0", "--ts", "0.5"])
    capsys.readouterr()
    main(["cache", "ls"])
    assert "1 file(s)" in capsys.readouterr().out
    main(["cache", "purge"])
    assert "removed 1" in capsys.readouterr().out
    assert not list((tmp_path / "cache").glob("*.blg"))


def test_fit_writes_report_and_figure(tmp_path, capsys):
    out = tmp_path / "fit"
    rc = main(["fit", "--config", cfg("standard.cfg"), "--ladder", "1e-6:1e-10:6",
               "--tol", "1e-8", "--out", str(out)])
    assert rc == 0
    assert (out / "ladder.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    header = (out / "ladder.csv").read_text().splitlines()[0]
    assert header == "T_minus_t,value,prediction,ratio"
    fit = json.loads((out / "fit.json").read_text())
    assert abs(fit["fit"]["delta_hat"] - 0.25) < 0.02
    assert all(fit["envelope"]["late_inside"])
    assert len(fit["bound_witness"]["running_max"]) == 6
    rec = json.loads((out / "manifest.jsonl").read_text())
    assert {o["path"] for o in rec["outputs"]} == {"fit.json", "ladder.csv", "ladder.png"}


def test_fit_shallow_ladder(capsys):
    rc = main(["fit", "--config", cfg("standard.cfg"), "--ladder", "1e-1:1e-2:2"])
    assert rc != 0 and "too shallow" in capsys.readouterr().err


def test_fit_time_derivative_q1(tmp_path, capsys):
    p = tmp_path / "q1.cfg"
    p.write_text("kind=derivative\nq=1\ndelta=0.2\n")
    rc = main(["fit", "--config", str(p), "--q1", "0", "--q2", "1",
               "--ladder", "1e-6:1e-11:8", "--tol", "1e-8"])
    out = capsys.readouterr().out
    assert rc == 0
    dh = float(out.split()[1])
    assert abs(dh - 0.2) < 0.02
    # u and u_x stay bounded at t = T for this profile
    assert main(["eval", "--config", str(p), "--xs", "0", "--ts", "1.0", "--order", "1"]) == 0
    table = capsys.readouterr().out
    assert "error" not in table
