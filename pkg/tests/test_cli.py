from __future__ import annotations

import json
import re
from pathlib import Path

import pytest

from shearcoorb.cli import Verdict, run, verdict_line
from shearcoorb.grid import read_volume
from shearcoorb.transform import read_scf

GOLDEN = Path(__file__).parent / "golden" / "verdicts.txt"
TIMING_KEYS = re.compile(r" seconds=\S+")

SMALL = {
    "grid": {"d": 3, "n": 16, "L": 8.0},
    "window": {"a0": 0.0625, "a1": 0.1875, "b": [0.125, 0.125]},
    "paramgrid": {"J": 2, "shear_spacing": 0.5, "shear_radius": 1.0},
    "weights": {"r": [0, 1], "p": [2, "inf"]},
    "kernel": {"q": [2], "rho_schedule": [1, 2]},
    "phantom": {"band": [0.125, 0.25], "count": 2},
    "seed": 3,
}


@pytest.fixture()
def small_config(tmp_path):
    data = dict(SMALL, io={"out_dir": str(tmp_path / "out")})
    path = tmp_path / "small.json"
    path.write_text(json.dumps(data))
    return path


def invoke(capsys, *argv):
    code = run(list(argv))
    out, err = capsys.readouterr()
    return code, out.strip(), err.strip()


def parse(line: str) -> dict:
    status, *pairs = line.split()
    return dict([("status", status)] + [p.split("=", 1) for p in pairs])


def test_verdict_line_format():
    assert verdict_line("PASS", "x", a=1.0, b=True, c=[1, 2.5], d="a b") == "PASS cmd=x a=1 b=true c=1,2.5 d=a_b"
    assert verdict_line("FAIL", "x", v=float("nan"), w=float("inf")) == "FAIL cmd=x v=nan w=inf"
    assert Verdict("FAIL", "x").exit_code == 1
    assert Verdict("REPORT", "x").exit_code == 0
    with pytest.raises(ValueError):
        Verdict("MAYBE", "x")


def test_golden_verdicts(capsys):
    """Deterministic verdict lines on the shipped configuration (timings stripped)."""
    lines = []
    for check in ("calderon", "identities", "supports", "smoothness"):
        _, out, _ = invoke(capsys, "verify", check)
        lines.append(TIMING_KEYS.sub("", out))
    expected = GOLDEN.read_text().splitlines()
    assert lines == expected


def test_verify_exit_codes(capsys):
    code, out, _ = invoke(capsys, "verify", "calderon")
    assert code == 0 and parse(out)["status"] == "PASS"
    assert float(parse(out)["max_dev"]) <= 1e-3
    code, out, _ = invoke(capsys, "verify", "identities")
    fields = parse(out)
    assert code == 0 and fields["status"] == "REPORT"
    assert fields["fine_fine_flagged"] == "true"
    assert fields["m_definition"] == "2" and fields["m_printed"] == "0.5"
    code, out, _ = invoke(capsys, "verify", "smoothness")
    assert code == 1 and out.startswith("FAIL cmd=verify.smoothness")


def test_pipeline_on_small_config(capsys, small_config, tmp_path):
    out_dir = tmp_path / "out"
    code, out, _ = invoke(capsys, "phantom", "--config", str(small_config), "--seed", "5")
    assert code == 0 and parse(out)["status"] == "REPORT"
    vol = out_dir / "phantom_5.vol"
    assert vol.is_file()
    code, out, _ = invoke(capsys, "analyze", "--config", str(small_config), "--input", str(vol))
    assert code == 0
    scf = out_dir / "phantom_5.scf"
    F = read_scf(scf)
    assert parse(out)["planes"] == str(F.pgrid.n_planes)
    code, out, _ = invoke(capsys, "synthesize", "--config", str(small_config), "--input", str(scf),
                          "--output", str(tmp_path / "back.vol"))
    assert code == 0
    back = read_volume(tmp_path / "back.vol")
    assert back.spec == read_volume(vol).spec


def test_checks_on_small_config(capsys, small_config):
    for check in ("parseval", "reproduce"):
        code, out, _ = invoke(capsys, "verify", check, "--config", str(small_config))
        assert code in (0, 1)
        assert parse(out)["n"] == "2"
    code, out, _ = invoke(capsys, "coorbit-norm", "--config", str(small_config))
    assert code == 0 and parse(out)["monotone_r"] == "true"
    code, out, _ = invoke(capsys, "gen-window", "--config", str(small_config))
    assert code == 0


def test_outputs_do_not_depend_on_workers(capsys, small_config, tmp_path):
    invoke(capsys, "phantom", "--config", str(small_config), "--output", str(tmp_path / "f.vol"))
    blobs = []
    for w in ("1", "4", "8"):
        scf = tmp_path / f"c{w}.scf"
        vol = tmp_path / f"s{w}.vol"
        invoke(capsys, "analyze", "--config", str(small_config), "--input", str(tmp_path / "f.vol"),
               "--output", str(scf), "--workers", w)
        invoke(capsys, "synthesize", "--config", str(small_config), "--input", str(scf), "--output", str(vol),
               "--workers", w)
        blobs.append((scf.read_bytes(), vol.read_bytes()))
    assert blobs[0] == blobs[1] == blobs[2]


def test_missing_input_exits_2_without_partial_file(capsys, small_config, tmp_path):
    target = tmp_path / "never.scf"
    code, out, err = invoke(capsys, "analyze", "--config", str(small_config), "--input",
                            str(tmp_path / "nope.vol"), "--output", str(target))
    assert code == 2 and out == ""
    assert err.startswith("ERROR cmd=analyze")
    assert not target.exists()
    assert not any(p.name.startswith(".never") for p in tmp_path.iterdir())


def test_synthesize_refuses_foreign_coefficients(capsys, small_config, tmp_path):
    invoke(capsys, "phantom", "--config", str(small_config), "--output", str(tmp_path / "f.vol"))
    invoke(capsys, "analyze", "--config", str(small_config), "--input", str(tmp_path / "f.vol"),
           "--output", str(tmp_path / "c.scf"))
    other = json.loads(small_config.read_text())
    other["paramgrid"]["shear_radius"] = 0.5
    other_path = tmp_path / "other.json"
    other_path.write_text(json.dumps(other))
    code, _, err = invoke(capsys, "synthesize", "--config", str(other_path), "--input", str(tmp_path / "c.scf"))
    assert code == 2 and "config hash mismatch" in err


def test_config_errors_exit_2(capsys, small_config, tmp_path):
    bad = json.loads(small_config.read_text())
    bad["grid"]["d"] = 4
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(bad))
    code, out, err = invoke(capsys, "verify", "calderon", "--config", str(path))
    assert code == 2 and out == "" and "/grid/d" in err


@pytest.mark.parametrize("argv", [["frobnicate"], ["verify", "everything"], ["verify"]])
def test_usage_errors_exit_2(capsys, argv):
    with pytest.raises(SystemExit) as exc:
        run(argv)
    assert exc.value.code == 2
    assert "ERROR" in capsys.readouterr().err


def test_flag_validation(capsys):
    assert run(["verify", "calderon", "--workers", "0"]) == 2
    assert run(["verify", "calderon", "--seed", str(2**64)]) == 2


def test_pair_cache(capsys, monkeypatch, tmp_path):
    monkeypatch.setenv("SHEARCOORB_CACHE", str(tmp_path / "cache"))
    code, first, _ = invoke(capsys, "verify", "calderon")
    cached = list((tmp_path / "cache").iterdir())
    assert code == 0 and len(cached) == 1
    code, second, _ = invoke(capsys, "verify", "calderon")
    assert TIMING_KEYS.sub("", first) == TIMING_KEYS.sub("", second)
