import csv
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from mia_kde.cli import EXIT_ERROR, EXIT_OK, EXIT_RISK, main
from mia_kde.fixtures import toy_bundle_dir
from mia_kde.metrics import accuracy_f1, confusion_from_labels, roc_curve, tpr_at_fpr
from mia_kde.report import PipelineError, RunConfig, compare_attacks, run_pipeline

TOY = toy_bundle_dir()


def toy_args(out, *extra):
    return [
        "run",
        "--train", os.path.join(TOY, "train.csv"),
        "--unseen", os.path.join(TOY, "unseen.csv"),
        "--synthetic", os.path.join(TOY, "synthetic.csv"),
        "--schema", os.path.join(TOY, "schema.txt"),
        "--out", str(out),
        "--seed", "11",
        *extra,
    ]


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def toy_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("toy")
    code = main(toy_args(out, "--attack", "all"))
    with open(out / "report.json", encoding="utf-8") as fh:
        report = json.load(fh)
    return code, out, report


def test_toy_run_writes_everything(toy_run):
    code, out, report = toy_run
    assert code in (EXIT_OK, EXIT_RISK)
    assert code == (EXIT_RISK if report["risk_detected"] else EXIT_OK)
    assert report["report_version"] == 1
    assert set(report["attacks"]) == {"true-dist", "realistic", "method1"}
    method1 = [h for h in report["heatmap"] if h["attack"] == "method1"]
    assert [h["percentile"] for h in method1] == [10.0 * k for k in range(1, 10)]
    for name in (
        "report.json",
        "distances.csv",
        "outcomes-true-dist.csv",
        "outcomes-realistic.csv",
        "outcomes-method1.csv",
        "roc-true-dist.csv",
        "density-true-dist.csv",
        "density-realistic.csv",
        "trajectory.csv",
    ):
        assert (out / name).is_file(), name
    assert report["ks_train_member_vs_non_member"]["p_value"] < 0.05
    assert len(report["comparison"]) == 9


def _recompute(rows, targets, multiplier):
    pred = [int(r["predicted"]) for r in rows]
    truth = [int(r["truth"]) for r in rows]
    post = [float(r["posterior"]) for r in rows]
    cm = confusion_from_labels(pred, truth)
    sc = accuracy_f1(cm)
    curve = roc_curve(post, truth)
    return cm, sc, curve, tpr_at_fpr(curve, targets, multiplier)


def test_report_is_recomputable_from_outcome_csvs(toy_run):
    _, out, report = toy_run
    targets = report["config"]["fpr_targets"]
    mult = report["config"]["risk_multiplier"]
    checks = [(report["attacks"]["true-dist"], read_csv(out / "outcomes-true-dist.csv"))]
    for attack in ("realistic", "method1"):
        rows = read_csv(out / f"outcomes-{attack}.csv")
        for block in report["attacks"][attack]["thresholds"]:
            pct = repr(float(block["percentile"]))
            checks.append((block, [r for r in rows if r["threshold_percentile"] == pct]))
    for block, rows in checks:
        cm, sc, curve, readouts = _recompute(rows, targets, mult)
        assert block["confusion"] == {"tp": cm.tp, "fp": cm.fp, "tn": cm.tn, "fn": cm.fn}
        assert (block["accuracy"], block["precision"], block["recall"], block["f1"]) == tuple(sc)
        assert block["auc"] == curve.auc
        assert [r["tpr"] for r in block["tpr_at_fpr"]] == [r.tpr for r in readouts]
    traj = read_csv(out / "trajectory.csv")
    assert [(int(r["tp"]), int(r["fp"])) for r in traj] == [
        (p["tp"], p["fp"]) for p in report["trajectory"]["method1"]
    ]


def test_same_seed_gives_byte_identical_report(tmp_path, toy_run):
    _, out, _ = toy_run
    code = main(toy_args(tmp_path, "--n-jobs", "1"))
    assert code in (EXIT_OK, EXIT_RISK)
    assert (tmp_path / "report.json").read_bytes() == (out / "report.json").read_bytes()
    other = tmp_path / "other"
    main(toy_args(other, "--seed", "12"))
    assert (other / "report.json").read_bytes() != (out / "report.json").read_bytes()


def test_missing_synthetic_file_leaves_no_outputs(tmp_path, capsys):
    out = tmp_path / "out"
    args = toy_args(out)
    args[args.index("--synthetic") + 1] = str(tmp_path / "nope.csv")
    assert main(args) == EXIT_ERROR
    assert not out.exists()
    assert "tabular_core" in capsys.readouterr().err


def test_bad_arguments_exit_one(tmp_path):
    assert main(toy_args(tmp_path, "--train-fraction", "1.5")) == EXIT_ERROR
    with pytest.raises(SystemExit) as err:
        main(["run", "--out", str(tmp_path)])  # no seed
    assert err.value.code == EXIT_ERROR


def test_seed_is_mandatory():
    with pytest.raises(PipelineError, match="seed"):
        run_pipeline(RunConfig(seed=None, out="x", distances_in="d.csv"))


def test_distances_roundtrip_through_files(tmp_path, toy_run):
    _, out, report = toy_run
    dumped = tmp_path / "d.csv"
    main(toy_args(tmp_path / "a", "--distances-out", str(dumped)))
    assert dumped.read_bytes() == (out / "distances.csv").read_bytes()
    code = main(
        ["run", "--distances-in", str(dumped), "--out", str(tmp_path / "b"), "--seed", "11"]
    )
    assert code in (EXIT_OK, EXIT_RISK)
    with open(tmp_path / "b" / "report.json", encoding="utf-8") as fh:
        again = json.load(fh)
    assert again["attacks"] == report["attacks"]
    assert again["dataset"]["distance_source"] == "file"


def _write_distances(path, member_d, non_member_d):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("source_index,distance,label\n")
        d = list(member_d) + list(non_member_d)
        y = [1] * len(member_d) + [0] * len(non_member_d)
        for i, (di, yi) in enumerate(zip(d, y)):
            fh.write(f"{i},{float(di)!r},{yi}\n")


def test_separable_realistic_not_worse_than_method1_at_boundary(tmp_path):
    rng = np.random.default_rng(0)
    path = tmp_path / "d.csv"
    _write_distances(path, rng.uniform(0.0, 0.2, 2000), rng.uniform(0.3, 0.9, 2000))
    res = run_pipeline(RunConfig(seed=1, out=str(tmp_path), distances_in=str(path)))
    row = next(r for r in res.report["comparison"] if r["percentile"] == 50.0)
    assert row["realistic_f1"] >= row["method1_f1"]
    # 600 test non-members resolve FPR 1e-2, where TPR 1 gives ratio 100 > 20
    assert res.risk_detected


def test_compare_zero_deltas_and_errors():
    block = {"percentile": 50.0, "f1": 0.8}
    report = {"attacks": {"realistic": {"thresholds": [block]}, "method1": {"thresholds": [block]}}}
    rows = compare_attacks(report)
    assert rows[0]["f1_delta"] == 0.0
    assert rows[0]["realistic_exceeds_true_dist"] is None
    with pytest.raises(ValueError):
        compare_attacks({"attacks": {"method1": {"thresholds": [block]}}})


def test_compare_subcommand(toy_run, capsys):
    _, out, _ = toy_run
    assert main(["compare", str(out / "report.json")]) == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 10


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "mia_kde", "--help"], capture_output=True, text=True
    )
    assert proc.returncode == 0
    assert "run" in proc.stdout and "compare" in proc.stdout
