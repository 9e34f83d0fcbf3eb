import json
import subprocess
import sys

import pytest

from qkdsim.cli import ConfigError, SWEEP_HEADER, main, parse_config
from qkdsim.montecarlo import McEstimate
from qkdsim.protocol import Kind
from qkdsim.rates import RateReport


def write(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_config_file_example(tmp_path):
    cfg_file = write(tmp_path, "# device row\nvariant=qutrit\nd=8\nm=5\neta=0.59\ndark_p=4.6e-4  # upconversion\n")
    cfg = parse_config(["qber", "--config", cfg_file])
    assert cfg.variant.kind is Kind.QUTRIT and (cfg.variant.d, cfg.variant.m) == (8, 5)
    assert cfg.detector.eta == 0.59 and cfg.detector.dark_p == 4.6e-4
    assert cfg.format == "json"


def test_flags_override_file(tmp_path):
    cfg_file = write(tmp_path, "variant=qutrit\nd=8\nm=5\n")
    cfg = parse_config(["sweep", "--config", cfg_file, "--m", "3", "--stop_km", "50"])
    assert cfg.variant.m == 3 and cfg.sweep.stop_km == 50.0 and cfg.format == "csv"


def test_m_zero_is_invariant_violation():
    with pytest.raises(ConfigError) as info:
        parse_config(["qber", "--m", "0"])
    assert info.value.kind == "invariant-violation" and "m" in str(info.value)


def test_cap_warning():
    cfg = parse_config(["qber", "--variant", "qutrit", "--d", "9", "--m", "5", "--dark_p", "0"])
    assert any("cap" in w for w in cfg.warnings)


@pytest.mark.parametrize(
    "text,line",
    [("variant=qubit\nbogus=1\n", 2), ("d=2\n\nnot a pair\n", 3), ("d=two\n", None), ("eta=\n", 1)],
)
def test_parse_errors(tmp_path, text, line):
    with pytest.raises(ConfigError) as info:
        parse_config(["qber", "--config", write(tmp_path, text)])
    assert info.value.kind == "parse-error"
    assert info.value.line == line


def test_unknown_flag_rejected():
    with pytest.raises(SystemExit):
        parse_config(["qber", "--colour", "red"])


def test_qber_json_roundtrip(capsys):
    assert main(["qber", "--variant", "tf", "--d", "8", "--m", "5", "--length_km", "1380"]) == 0
    payload = json.loads(capsys.readouterr().out)
    rep = RateReport.from_dict(payload["report"])
    assert rep.qber == pytest.approx(0.0933073004748644, rel=1e-9)
    assert json.loads(json.dumps(payload)) == payload


def test_approx_json_has_nulls(capsys):
    assert main(["qber", "--path", "approx", "--length_km", "100"]) == 0
    report = json.loads(capsys.readouterr().out)["report"]
    assert report["sift_rate"] is None and report["path"] == "approx"


def test_sweep_csv_schema_and_reproducibility(tmp_path):
    outs = []
    for name in ("a.csv", "b.csv"):
        out = tmp_path / name
        argv = ["sweep", "--variant", "qubit", "--d", "4", "--m", "3", "--stop_km", "300", "--out", str(out)]
        assert main(argv) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    lines = outs[0].decode().split("\n")
    assert lines[0] == ",".join(SWEEP_HEADER)
    assert b"\r" not in outs[0] and lines[-1] == ""
    assert len(lines) == 32
    first = [float(x) for x in lines[1].split(",")]
    assert first[:2] == [0.0, 1.0]


def test_empty_sweep_is_header_only(capsys):
    assert main(["sweep", "--start_km", "100", "--stop_km", "100"]) == 0
    assert capsys.readouterr().out == ",".join(SWEEP_HEADER) + "\n"


def test_maxdist_baseline(capsys):
    assert main(["maxdist"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["max_distance_km"] == pytest.approx(112.9, abs=0.05)
    assert abs(out["max_distance_km"] - 105) <= 10.5


def test_mc_json_roundtrip(capsys):
    argv = ["mc", "--variant", "qutrit", "--d", "4", "--m", "3", "--eta", "0.5", "--dark_p", "0.05"]
    assert main(argv + ["--length_km", "50", "--trials", "20000", "--seed", "7"]) == 0
    first = capsys.readouterr().out
    est = McEstimate.from_dict(json.loads(first))
    assert est.trials == 20000 and est.se_qber > 0
    assert main(argv + ["--length_km", "50", "--trials", "20000", "--seed", "7"]) == 0
    assert capsys.readouterr().out == first


def test_error_json_on_failure(capsys):
    assert main(["maxdist", "--eta", "0.5", "--dark_p", "0"]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "threshold-unreachable"

    assert main(["qber", "--m", "0"]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "invariant-violation"


def test_validate_exits_zero():
    proc = subprocess.run(
        [sys.executable, "-m", "qkdsim", "validate"], capture_output=True, text=True, timeout=300
    )
    assert proc.returncode == 0, proc.stdout + proc.stderr
    lines = proc.stdout.strip().splitlines()
    assert lines and all(line.startswith("PASS") for line in lines)
