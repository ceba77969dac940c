import json
import subprocess
import sys

import pytest

from dualecc import __version__
from dualecc.cli import main, read_config
from dualecc.errors import DualEccError


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli") / "data"
    assert main(["synth", "-o", str(d), "--days", "55", "--stations", "1"]) == 0
    return d


def _io(d):
    return ["--forecasts", str(d / "forecasts.csv"), "--observations", str(d / "observations.csv")]


def test_synth_writes_inputs(synth_dir):
    assert {p.name for p in synth_dir.iterdir()} == {"forecasts.csv", "observations.csv", "generator.json"}
    assert json.loads((synth_dir / "generator.json").read_text())["days"] == 55


def test_calibrate_and_couple(synth_dir, tmp_path):
    assert main(["calibrate", *_io(synth_dir), "-o", str(tmp_path / "cal")]) == 0
    assert {p.name for p in (tmp_path / "cal").iterdir()} == {"coefficients.csv", "quantiles.csv"}
    assert main(["couple", *_io(synth_dir), "-o", str(tmp_path / "cpl"), "--methods", "ecc,decc"]) == 0
    header = (tmp_path / "cpl" / "scenarios.csv").read_text().splitlines()[0]
    assert header.startswith("date,station,lead_time,provenance,member_01")


def test_verify_and_spectrum_from_scenarios(synth_dir, tmp_path, capsys):
    main(["couple", *_io(synth_dir), "-o", str(tmp_path / "cpl")])
    scen = str(tmp_path / "cpl" / "scenarios.csv")
    obs = ["--observations", str(synth_dir / "observations.csv")]
    assert main(["verify", "--scenarios", scen, *obs, "-o", str(tmp_path / "ver"), "--replicates", "20"]) == 0
    report = json.loads((tmp_path / "ver" / "report.json").read_text())
    assert report["methods"] == ["raw", "ecc", "decc"] and report["n_cases"] == 10
    assert main(["spectrum", "--scenarios", scen, *obs, "-o", str(tmp_path / "spectra")]) == 0
    assert "high-frequency amplitude" in capsys.readouterr().out


def test_run_with_config_file_and_env(synth_dir, tmp_path, monkeypatch):
    ini = tmp_path / "run.ini"
    ini.write_text(f"[pipeline]\nbootstrap_replicates = 15\nseed = 3\nmethods = decc\n"
                   f"forecast_csv = {synth_dir / 'forecasts.csv'}\nobservation_csv = {synth_dir / 'observations.csv'}\n")
    monkeypatch.setenv("DUALECC_OUTPUT_DIR", str(tmp_path / "env_out"))
    assert main(["-c", str(ini), "run"]) == 0
    settings = json.loads((tmp_path / "env_out" / "report.json").read_text())["settings"]
    assert settings["bootstrap_replicates"] == 15 and settings["methods"] == ["decc"]
    # flags beat the environment and the file
    assert main(["-c", str(ini), "run", "-o", str(tmp_path / "flag_out"), "--seed", "4"]) == 0
    assert json.loads((tmp_path / "flag_out" / "report.json").read_text())["settings"]["seed"] == 4


def test_read_config_rejects_unknown_key(tmp_path):
    ini = tmp_path / "bad.ini"
    ini.write_text("[pipeline]\nwindow = 3\n")
    with pytest.raises(DualEccError, match="unknown"):
        read_config(ini)


def test_empty_period_exit_code(synth_dir, tmp_path, capsys):
    code = main(["run", *_io(synth_dir), "-o", str(tmp_path / "x"), "--start", "2030-01-01"])
    assert code == 1
    assert "[verify] empty verification set" in capsys.readouterr().err
    assert not (tmp_path / "x").exists()


def test_usage_errors(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("DUALECC_OUTPUT_DIR", raising=False)
    assert main(["run", "--forecasts", "f.csv", "--observations", "o.csv"]) == 2
    assert "no output directory" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["run", "--methods"])


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "dualecc.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and __version__ in out.stdout
