import csv
import json

import pytest

from symlab.cli import main
from symlab.experiments import COMMANDS, ConfigError, list_experiments, resolve_config, run


def write_config(tmp_path, payload, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


def test_list_is_stable_and_complete(capsys):
    assert main(["list"]) == 0
    first = capsys.readouterr().out
    assert main(["list"]) == 0
    assert capsys.readouterr().out == first
    names = [line.split()[0] for line in first.splitlines()]
    assert names == [e[0] for e in list_experiments()]
    for required in ("symbol-probe", "globalise-pou", "conjugation-identities", "connes-torus", "atlas-check"):
        assert required in first
    assert {e[1] for e in list_experiments()} == set(COMMANDS)


def test_dixmier_run_writes_report_and_csv(tmp_path, capsys):
    cfg = write_config(tmp_path, {"terms": 10**5, "tolerances": {"final": 0.06}})
    out = tmp_path / "out"
    assert main(["dixmier", "--config", cfg, "--out", str(out)]) == 0
    assert "PASS" in capsys.readouterr().out
    report = json.loads((out / "report.json").read_text())
    assert report["schema"] == 1 and report["pass"] is True
    assert report["experiment"] == "dixmier-normalised" and report["command"] == "dixmier"
    assert report["outputs"] == ["report.json", "partials.csv"]
    for c in report["checks"]:
        assert set(c) >= {"name", "measured", "threshold", "comparator", "pass"}
    rows = list(csv.reader(open(out / "partials.csv")))
    assert rows[0] == ["n", "value"] and int(rows[-1][0]) == 10**5


def test_failing_check_gives_exit_1(tmp_path):
    cfg = write_config(tmp_path, {"terms": 1000, "tolerances": {"final": 1e-9}})
    assert main(["dixmier", "--config", cfg, "--out", str(tmp_path)]) == 1
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["pass"] is False


@pytest.mark.parametrize(
    "payload,fragment",
    [
        ({"tolerances": {"final": "small"}}, "tolerances.final"),
        ({"experiment": "atlas-integrity"}, "atlas-check"),
        ({"experiment": "no-such-thing"}, "unknown experiment"),
    ],
)
def test_config_errors_give_exit_2(tmp_path, capsys, payload, fragment):
    cfg = write_config(tmp_path, payload)
    assert main(["dixmier", "--config", cfg, "--out", str(tmp_path)]) == 2
    assert fragment in capsys.readouterr().err


def test_json_syntax_error_reports_position(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "terms": 10,\n}\n')
    assert main(["dixmier", "--config", str(path)]) == 2
    assert f"{path}:3:1" in capsys.readouterr().err


def test_negative_seed_rejected(tmp_path):
    assert main(["dixmier", "--seed", "-1", "--out", str(tmp_path)]) == 2


def test_grid_field_validation(tmp_path, capsys):
    cfg = write_config(tmp_path, {"grid": {"d": 3}})
    assert main(["symbol-probe", "--config", cfg, "--out", str(tmp_path)]) == 2
    assert "grid" in capsys.readouterr().err


def test_n_override_reaches_every_layout():
    assert resolve_config("equivariance-circle", n=256)["grid"]["n"] == 256
    assert resolve_config("globalise-pou", n=128)["atlas"]["n"] == 128
    assert all(a["n"] == 32 for a in resolve_config("atlas-integrity", n=32)["atlases"])
    with pytest.raises(ConfigError):
        resolve_config("dixmier-normalised", {"tolerances": {"final": None}})


def test_runs_are_deterministic_given_seed():
    cfg = {"samples": 4}
    a, ta = run("kernel-of-sym", cfg, seed=7, n=256)
    b, tb = run("kernel-of-sym", cfg, seed=7, n=256)
    a.pop("timing"), b.pop("timing")
    assert a == b and ta == tb
    c, _ = run("kernel-of-sym", cfg, seed=8, n=256)
    assert c["details"] != a["details"] or c["checks"] != a["checks"]


def test_equivariance_with_identity_map_is_exact(tmp_path):
    cfg = write_config(tmp_path, {"experiment": "equivariance-circle", "diffeo": {"kind": "identity"}, "samples": 5,
                                  "tolerances": {"relative": 1e-3}})
    assert main(["equivariance", "--config", cfg, "--out", str(tmp_path), "--n", "512"]) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["checks"][0]["measured"] < 1e-3
    assert report["config"]["grid"]["n"] == 512
