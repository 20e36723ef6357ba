import csv
import json

import pytest

from tandem_tlc.cli import main
from tandem_tlc.config import SpecError, resolve, validate_spec


def write(tmp_path, text, name="spec.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_empty_file_gives_defaults(tmp_path):
    spec = validate_spec(write(tmp_path, ""))
    assert spec.recipe == "simulate"
    assert spec.sim.theta.lower == 15.0 and spec.sim.theta.upper == 40.0
    assert spec.sim.arrival_rates == (0.25, 0.25, 0.25)
    assert spec.sim.service_rates == (1.0, 1.0, 1.0, 1.0)
    assert spec.sim.horizon == 1000.0


def test_bounds_out_of_order_names_both(tmp_path):
    with pytest.raises(SpecError) as err:
        validate_spec(write(tmp_path, "bounds: {theta_min: 30, theta_max: 20}\n"))
    assert "theta_max" in str(err.value) and "theta_min" in str(err.value)


def test_coupling_inconsistent_with_start(tmp_path):
    text = "optimizer: {coupling: [44, 44], theta0: [25, 30, 22, 22]}\n"
    with pytest.raises(SpecError, match="theta1\\+theta2=44"):
        validate_spec(write(tmp_path, text))


def test_unknown_keys_rejected():
    with pytest.raises(SpecError, match="sim.thetas"):
        resolve({"sim": {"thetas": [20, 20, 20, 20]}})
    with pytest.raises(SpecError, match="colour"):
        resolve({"colour": "red"})


def test_units_checked():
    with pytest.raises(SpecError, match="sim.horizon"):
        resolve({"sim": {"horizon": -5}})
    with pytest.raises(SpecError, match="sim.arrival_rates"):
        resolve({"sim": {"arrival_rates": [0.25, 0.25]}})


def test_malformed_yaml_reports_position(tmp_path):
    with pytest.raises(SpecError, match=r"line 3, column 1"):
        validate_spec(write(tmp_path, "sim:\n  theta: [15, 15\n"))


def test_bad_spec_exit_code(tmp_path, capsys):
    p = write(tmp_path, "bounds: {theta_min: 30, theta_max: 20}\n")
    assert main(["simulate", "--spec", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "theta_max" in capsys.readouterr().err


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def outputs(out_dir, prefix):
    return sorted(p for p in out_dir.glob(f"{prefix}_*.csv"))


def test_simulate_zero_arrivals(tmp_path):
    p = write(tmp_path, "sim: {arrival_rates: [0, 0, 0]}\n")
    out = tmp_path / "o"
    assert main(["simulate", "--spec", str(p), "--out", str(out)]) == 0
    (main_csv,) = [q for q in outputs(out, "simulate") if "trace" not in q.name]
    (row,) = rows(main_csv)
    assert float(row["L"]) == 0.0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "complete" and manifest["recipe"] == "simulate"


@pytest.mark.parametrize("recipe,text", [
    ("gradient", "sim: {horizon: 300}\ngradient: {paths: 2}\n"),
    ("optimize", "sim: {horizon: 200}\noptimizer: {max_iter: 4, eval_reps: 2}\n"),
    ("brute-force", "sim: {horizon: 200}\ngrid: {step: 12.5, reps: 2}\n"),
    ("fd-check", "sim: {horizon: 200, backend: fluid}\nfd: {paths: 2}\n"),
    ("sweep-T2", "sim: {horizon: 200}\noptimizer: {max_iter: 3, eval_reps: 2}\n"
                 "sweep: {T2_values: [40, 44]}\n"),
    ("sweep-arrival", "sim: {horizon: 200}\noptimizer: {max_iter: 3, eval_reps: 2}\n"
                      "sweep: {T1: 44, r_values: [2, 4]}\n"),
])
def test_manifest_replay_is_byte_identical(tmp_path, recipe, text):
    p = write(tmp_path, text)
    first, second = tmp_path / "a", tmp_path / "b"
    assert main([recipe, "--spec", str(p), "--seed", "3", "--out", str(first)]) == 0
    manifest = first / "manifest.json"
    assert main([recipe, "--spec", str(manifest), "--out", str(second)]) == 0
    a = json.loads(manifest.read_text())["outputs"]
    b = json.loads((second / "manifest.json").read_text())["outputs"]
    assert a and [o["sha256"] for o in a] == [o["sha256"] for o in b]
    for x, y in zip(a, b):
        assert (first / x["file"]).read_bytes() == (second / y["file"]).read_bytes()
