import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from ivton.backends import sidecar_paths
from ivton.cli import main
from ivton.fixtures import generate_dataset

GOLDEN = Path(__file__).parent / "golden"
CASES = json.loads((GOLDEN / "cases.json").read_text())


def _mask(path):
    return np.array(Image.open(path)) > 0


@pytest.mark.parametrize("case", CASES, ids=[c["name"] for c in CASES])
def test_mask_matches_golden(case, person_factory, garment_factory, tmp_path, capsys):
    person = person_factory(case["outfit"])
    spec = garment_factory(case["garment"])
    out = tmp_path / "out"
    code = main(["mask", "--person", str(person), "--garment-spec", str(spec),
                 "--instruction", case["instruction"], "--out", str(out)])
    assert code == 0
    assert np.array_equal(_mask(out / "mask.png"), _mask(GOLDEN / f"{case['name']}.png"))
    report = json.loads((out / "report.json").read_text())
    printed = json.loads(capsys.readouterr().out)
    assert printed["mask_area"] == report["mask_area"] == int(_mask(out / "mask.png").sum())
    assert report["parse"]["residual"] == ""


def test_missing_sidecar_is_backend_error(person_factory, garment_factory, tmp_path, capsys):
    person = person_factory(["shirt"])
    sidecar_paths(person)["parts_legend"].unlink()
    code = main(["mask", "--person", str(person), "--garment-spec", str(garment_factory("shirt")),
                 "--out", str(tmp_path / "o")])
    assert code == 3
    assert "stage=segmentation" in capsys.readouterr().err
    assert not (tmp_path / "o" / "mask.png").exists()


def test_plan_json(person_factory, garment_factory, tmp_path):
    person = person_factory(["shirt", "pants", "shoes"])
    code = main(["plan", "--person", str(person), "--garment-spec", str(garment_factory("shirt")),
                 "--instruction", "sleeves rolled up", "--out", str(tmp_path / "p")])
    assert code == 0
    doc = json.loads((tmp_path / "p" / "plan.json").read_text())
    (step,) = doc["steps"]
    assert step["stage"] == "dummy_then_target" and step["instruction"]["sleeves"] == "rolled_up"


def test_ambiguous_binding_exit_code(person_factory, garment_factory, tmp_path, capsys):
    person = person_factory(["t-shirt", "shorts"])
    code = main(["plan", "--person", str(person), "--garment-spec", str(garment_factory("shirt")),
                 "--garment-spec", str(garment_factory("jacket")), "--instruction", "sleeves rolled up",
                 "--out", str(tmp_path / "p")])
    assert code == 2
    assert "sleeves" in capsys.readouterr().err


def test_tryon_writes_run_dir(person_factory, garment_factory, tmp_path, capsys):
    person = person_factory(["t-shirt", "shorts", "shoes"])
    args = ["tryon", "--person", str(person), "--instruction", "try on the shirt tucked in, jacket open",
            "--out", str(tmp_path / "runs")]
    for kind in ("jacket", "pants", "shirt"):
        args += ["--garment-spec", str(garment_factory(kind))]
    assert main(args) == 0
    run = Path(capsys.readouterr().out.strip())
    manifest = json.loads((run / "manifest.json").read_text())
    assert manifest["status"] == "completed"
    assert [s["garment_id"] for s in manifest["steps"]] == ["shirt", "pants", "jacket"]


def test_remote_backend_failure(person_factory, garment_factory, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"segmentation": {"kind": "remote", "endpoint": "http://127.0.0.1:9/",
                                                "timeout": 2}}))
    person = person_factory(["shirt"])
    code = main(["tryon", "--person", str(person), "--garment-spec", str(garment_factory("shirt")),
                 "--backend-config", str(cfg), "--out", str(tmp_path / "runs")])
    assert code == 3


def test_bad_spec_is_input_error(person_factory, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"id": "x", "classification": "hat"}))
    code = main(["mask", "--person", str(person_factory(["shirt"])), "--garment-spec", str(bad),
                 "--out", str(tmp_path / "o")])
    assert code == 2


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    generate_dataset(root, seed=0, count=12)
    return root


def test_eval_dominance(dataset, tmp_path):
    assert main(["eval", "--dataset", str(dataset), "--out", str(tmp_path / "e")]) == 0
    doc = json.loads((tmp_path / "e" / "eval.json").read_text())
    assert len(doc["records"]) == 12 and doc["failures"] == []
    assert set(doc["table"]) == {"dresses", "upper_body", "lower_body"}
    for row in doc["table"].values():
        assert row["efficiency"] > row["baseline_efficiency"]
        assert -1.0 <= row["ssim"] <= 1.0
    md = (tmp_path / "e" / "eval.md").read_text()
    assert "trace masker" in md and "bbox baseline" in md


def test_eval_empty_dataset(tmp_path):
    (tmp_path / "empty").mkdir()
    assert main(["eval", "--dataset", str(tmp_path / "empty"), "--out", str(tmp_path / "e")]) == 0
    assert json.loads((tmp_path / "e" / "eval.json").read_text())["records"] == []


def test_eval_corrupt_pair_excluded(tmp_path):
    generate_dataset(tmp_path / "d", seed=1, count=3)
    sidecar_paths(tmp_path / "d" / "pair_001" / "person.png")["cloth"].unlink()
    code = main(["eval", "--dataset", str(tmp_path / "d"), "--out", str(tmp_path / "e")])
    assert code != 0
    doc = json.loads((tmp_path / "e" / "eval.json").read_text())
    assert [f["pair_id"] for f in doc["failures"]] == ["pair_001"]
    assert len(doc["records"]) == 2


def test_console_script_gen_fixtures(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "ivton.cli", "gen-fixtures", "--out", str(tmp_path / "g"),
                           "--count", "2", "--seed", "5"], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert sorted(p.name for p in (tmp_path / "g").iterdir()) == ["pair_000", "pair_001"]
