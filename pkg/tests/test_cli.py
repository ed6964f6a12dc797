import csv
import json
from importlib import resources

import jsonschema
import numpy as np
import pytest

from fairmatch.cli import main

SMALL = ["--n", "400", "--epochs", "2", "--batch-size", "64", "--match-batch-size", "32", "--num-batches", "2"]


@pytest.fixture(scope="module")
def validator():
    schema = json.loads(resources.files("fairmatch").joinpath("schemas/reports.schema.json").read_text())
    jsonschema.Draft202012Validator.check_schema(schema)
    return jsonschema.Draft202012Validator(schema)



def load(path):
    return json.loads(path.read_text())


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    out = tmp_path_factory.mktemp("train")
    assert main(["train", "--out", str(out)] + SMALL) == 0
    return out


def test_train_outputs(trained, validator):
    doc = load(trained / "report.json")
    validator.validate(doc)
    lines = (trained / "train_log.jsonl").read_text().splitlines()
    assert [json.loads(l)["epoch"] for l in lines] == [0, 1]
    assert "train_map_mdp" in doc["final_epoch"]
    assert load(trained / "meta.json")["command"] == "train"
    assert (trained / "checkpoint.json").is_file()


def test_rerun_is_byte_identical(trained, tmp_path):
    assert main(["train", "--out", str(tmp_path)] + SMALL) == 0
    for name in ("report.json", "train_log.jsonl", "checkpoint.json"):
        assert (tmp_path / name).read_bytes() == (trained / name).read_bytes()


def test_outputs_use_lf(trained):
    for name in ("report.json", "train_log.jsonl", "meta.json"):
        assert b"\r\n" not in (trained / name).read_bytes()


def test_zero_lambda_equals_unfair(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["train", "--out", str(a), "--lambda", "0"] + SMALL) == 0
    assert main(["train", "--out", str(b), "--method", "unfair"] + SMALL) == 0
    la = [json.loads(l)["loss"] for l in (a / "train_log.jsonl").read_text().splitlines()]
    lb = [json.loads(l)["loss"] for l in (b / "train_log.jsonl").read_text().splitlines()]
    assert la == lb
    wa = load(a / "checkpoint.json")["layers"]
    wb = load(b / "checkpoint.json")["layers"]
    assert wa == wb


def test_evaluate(trained, tmp_path, validator):
    ck = str(trained / "checkpoint.json")
    assert main(["evaluate", "--out", str(tmp_path), "--checkpoint", ck] + SMALL[:2]) == 0
    doc = load(tmp_path / "report.json")
    validator.validate(doc)
    trained_report = load(trained / "report.json")["report"]
    # the audit batches differ (default count), the plain metrics do not
    for key in ("accuracy", "dp", "dp_bar", "wdp", "eo", "consistency"):
        assert doc["report"][key] == trained_report[key]


def test_audit_uniform_pair(tmp_path, validator):
    out = tmp_path / "hat"
    assert main(["audit", "--out", str(out), "--dataset", "uniform-pair", "--checkpoint", "uniform-pair:hat",
                 "--m", "512", "--num-batches", "1"]) == 0
    doc = load(out / "audit.json")
    validator.validate(doc)
    assert doc["transport_cost"] == pytest.approx(0.25, abs=1e-12)
    assert doc["consistency"] == 0.0 and doc["mdp"] == 0.0


def test_audit_with_prophecy(trained, tmp_path, validator):
    ck = str(trained / "checkpoint.json")
    assert main(["audit", "--out", str(tmp_path), "--checkpoint", ck, "--unfair-checkpoint", ck,
                 "--n", "400", "--num-batches", "1"]) == 0
    doc = load(tmp_path / "audit.json")
    validator.validate(doc)
    assert doc["prophecy"]["undesirable_total"] == 0


def test_sweep(tmp_path, validator):
    assert main(["sweep", "--out", str(tmp_path), "--lambda-grid", "1,0"] + SMALL) == 0
    doc = load(tmp_path / "sweep.json")
    validator.validate(doc)
    assert doc["lambda_grid"] == [0.0, 1.0]
    with open(tmp_path / "tradeoff.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [float(r["lambda"]) for r in rows] == [0.0, 1.0]
    for lam in ("0", "1"):
        validator.validate(load(tmp_path / "reports" / f"lambda_{lam}.json"))


def test_subsets(trained, tmp_path, validator):
    ck = str(trained / "checkpoint.json")
    assert main(["subsets", "--out", str(tmp_path), "--checkpoint", ck, "--n", "400", "--num-subsets", "50"]) == 0
    validator.validate(load(tmp_path / "subsets_summary.json"))
    with open(tmp_path / "subsets.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) <= 50 and all(0 <= float(r["dp_bar"]) <= 1 for r in rows)


def test_csv_dataset(tmp_path, validator):
    rng = np.random.default_rng(0)
    lines = ["a,b,color,g,y"] + [f"{rng.random():.4f},{rng.random():.4f},{'rgb'[i % 3]},{'mf'[i % 2]},{i % 3 % 2}"
                                 for i in range(120)]
    (tmp_path / "toy.csv").write_text("\n".join(lines) + "\n")
    (tmp_path / "toy.yaml").write_text(
        "columns: {a: continuous, b: continuous, color: categorical, g: drop, y: drop}\n"
        "label: {column: y, positive: ['1']}\nsensitive: {column: g, group1: [m]}\n")
    out = tmp_path / "run"
    assert main(["train", "--out", str(out), "--dataset", str(tmp_path / "toy.csv"), "--schema",
                 str(tmp_path / "toy.yaml"), "--epochs", "1", "--batch-size", "32", "--match-batch-size", "16",
                 "--num-batches", "1"]) == 0
    doc = load(out / "report.json")
    validator.validate(doc)
    assert doc["dataset"]["d"] == 5 and doc["dataset"]["n_train"] == 96


def test_env_var_default(tmp_path, monkeypatch):
    monkeypatch.setenv("FAIRMATCH_OUT", str(tmp_path))
    assert main(["audit", "--dataset", "uniform-pair", "--checkpoint", "uniform-pair:tilde", "--num-batches", "1"]) == 0
    assert (tmp_path / "audit" / "audit.json").is_file()


@pytest.mark.parametrize("argv", [
    ["train", "--dataset", "missing.csv"],
    ["train", "--dataset", "adult"],
    ["train", "--epochs", "0"],
    ["evaluate", "--checkpoint", "nope.json"],
    ["audit", "--dataset", "uniform-pair", "--checkpoint", "uniform-pair:hat", "--num-batches", "0"],
    ["sweep", "--lambda-grid", "a,b"],
    ["sweep", "--jobs", "0"],
])
def test_errors_exit_2(argv, tmp_path, capsys):
    assert main(argv + ["--out", str(tmp_path)]) == 2
    assert "error" in capsys.readouterr().err


def test_usage_error_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["train", "--method", "bogus"])
    assert exc.value.code == 2
