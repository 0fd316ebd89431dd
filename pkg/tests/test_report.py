import csv
import io
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctxfer.errors import InsufficientHistory
from ctxfer.report import (
    ComparisonRow,
    OverfitDiagnosis,
    comparison_json,
    diagnose,
    load_comparison_fixture,
    reference_history,
    percent_label,
    render_comparison,
    render_curves,
    render_epoch_tables,
    select_epochs,
)
from ctxfer.schemas import validate_artifact
from ctxfer.training import EpochRecord, TrainingRun

# reference table cells, as printed
LOSS_ACC = [
    ["After Epoch 1", "1.4701", "0.6272", "52.51%", "68.57%"],
    ["After Epoch 6", "0.5719", "0.7031", "67.92%", "58.87%"],
    ["After Epoch 11", "0.4897", "0.4438", "76.16%", "77.14%"],
    ["After Epoch 16", "0.4370", "0.6054", "80.65%", "70.00%"],
    ["After Epoch 21", "0.2887", "0.4549", "86.56%", "83.57%"],
    ["After Epoch 26", "0.3123", "0.4597", "86.38%", "81.43%"],
    ["After Epoch 31", "0.2073", "0.4432", "91.40%", "84.29%"],
]
PREC_REC = [
    ["Training Precision", "0.5263", "0.6678", "0.7664", "0.8087", "0.8778", "0.8638", "0.9140"],
    ["Validation Precision", "0.6711", "1.0000", "0.8519", "0.8500", "0.7901", "0.8548", "0.8636"],
    ["Training Recall", "0.5018", "0.7133", "0.7527", "0.8029", "0.8495", "0.8638", "0.9068"],
    ["Validation Recall", "0.7286", "0.1714", "0.6571", "0.4857", "0.9143", "0.7571", "0.8143"],
]
COMPARISON = [
    ["VGG-16", "79%", "Converged.Overfitting evident from 5 epochs."],
    ["VGG-19", "78%", "Converged. Overfitting evident after 20 epochs."],
    ["Xception", "70%", "Did not converge. Overfitting evident immediately"],
    ["InceptionResnet", "63%", "Did not converge. Overfitting evident after 1st epoch."],
    ["InceptionV3", "71%", "Did not converge. Overfitting evident after 2 epochs."],
    ["NasNetLarge", "64%", "Did not converge. Overfitting evident immediately."],
    ["Densenet121", "75%", "Converged. Overfitting evident after 8 epochs."],
    ["ResNet50V2", "66%", "Converged poorly. Overfitting evident immediately."],
    ["Proposed Model", "84%", "Converged well.Overfitting not evident after 31 epochs."],
]


def cells(table):
    lines = table.strip().splitlines()
    parse = lambda line: [c.strip() for c in line.strip().strip("|").split("|")]
    return parse(lines[0]), [parse(line) for line in lines[2:]]


def run_from(train_losses, val_losses, acc=0.5):
    return TrainingRun([EpochRecord(i + 1, t, acc, acc, acc, v, acc, acc, acc)
                        for i, (t, v) in enumerate(zip(train_losses, val_losses))])


def test_loss_accuracy_table_matches_reference():
    t1, _ = render_epoch_tables(reference_history())
    header, rows = cells(t1)
    assert header == ["Epoch", "Training Loss", "Validation Loss", "Training Accuracy", "Validation Accuracy"]
    assert rows == LOSS_ACC


def test_precision_recall_table_matches_reference():
    _, t2 = render_epoch_tables(reference_history())
    header, rows = cells(t2)
    assert header == ["Factor"] + [f"After Epoch {e}" for e in (1, 6, 11, 16, 21, 26, 31)]
    assert rows == PREC_REC


def test_tables_are_stable_text():
    a = render_epoch_tables(reference_history())
    assert a == render_epoch_tables(reference_history())


def test_stride_selection():
    run = run_from([1.0] * 13, [1.0] * 13)
    assert [r.epoch for r in select_epochs(run.records, 5)] == [1, 6, 11, 13]
    assert [r.epoch for r in select_epochs(run.records[:11], 5)] == [1, 6, 11]
    _, rows = cells(render_epoch_tables(run_from([1.0], [1.0]))[0])
    assert len(rows) == 1


def test_reference_series_converged_without_overfitting():
    d = diagnose(reference_history())
    assert d.converged and d.overfit_onset_epoch is None
    assert d.comment == "Converged. Overfitting not evident after 31 epochs."


def test_decreasing_series():
    d = diagnose(run_from([1.0, 0.8, 0.6, 0.4], [1.0, 0.9, 0.8, 0.7]))
    assert d.converged and d.overfit_onset_epoch is None


def test_constructed_overfit_onset():
    train = [1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3]
    val = [1.0, 0.9, 0.8, 0.7, 0.6, 0.65, 0.7, 0.75]
    d = diagnose(run_from(train, val))
    assert d.overfit_onset_epoch == 6
    assert d.comment == "Converged. Overfitting evident after 5 epochs."


def test_no_convergence_wording():
    d = diagnose(run_from([1.0, 0.9], [1.0, 1.0]))
    assert not d.converged
    assert d.comment.startswith("Did not converge.")


def test_diagnose_needs_two_epochs():
    with pytest.raises(InsufficientHistory):
        diagnose(run_from([1.0], [1.0]))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(0.01, 5), st.floats(0.01, 5)), min_size=2, max_size=20),
       st.floats(0.01, 100))
def test_diagnosis_scale_invariant(series, k):
    t, v = zip(*series)
    a = diagnose(run_from(t, v))
    b = diagnose(run_from([x * k for x in t], [x * k for x in v]))
    assert a.overfit_onset_epoch == b.overfit_onset_epoch


def test_comment_is_function_of_fields():
    assert OverfitDiagnosis(True, 2, 10, 1).comment == "Converged. Overfitting evident after 1 epoch."
    assert OverfitDiagnosis(False, None, 7).comment == "Did not converge. Overfitting not evident after 7 epochs."


def test_curves_and_sidecars(tmp_path):
    run = reference_history()
    written = render_curves(run, tmp_path)
    names = sorted(p.name for p in written)
    assert names == ["accuracy_vs_epoch.csv", "accuracy_vs_epoch.png", "loss_vs_epoch.csv", "loss_vs_epoch.png"]
    for p in written:
        if p.suffix == ".png":
            assert p.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    rows = list(csv.DictReader(io.StringIO((tmp_path / "loss_vs_epoch.csv").read_text())))
    assert [int(r["epoch"]) for r in rows] == [r.epoch for r in run.records]
    assert [float(r["train_loss"]) for r in rows] == [r.train_loss for r in run.records]
    assert [float(r["val_loss"]) for r in rows] == [r.val_loss for r in run.records]
    assert (rows[0]["train_loss"], rows[-1]["train_loss"]) == ("1.4701", "0.2073")
    assert (rows[0]["val_loss"], rows[-1]["val_loss"]) == ("0.6272", "0.4432")
    acc = list(csv.DictReader(io.StringIO((tmp_path / "accuracy_vs_epoch.csv").read_text())))
    assert [float(r["val_accuracy"]) for r in acc] == [r.val_accuracy for r in run.records]


def test_constant_run_sidecar(tmp_path):
    render_curves(run_from([0.5] * 4, [0.5] * 4), tmp_path)
    rows = list(csv.DictReader(io.StringIO((tmp_path / "loss_vs_epoch.csv").read_text())))
    assert {r["train_loss"] for r in rows} == {r["val_loss"] for r in rows} == {"0.5"}


def test_comparison_matches_reference():
    text = render_comparison(load_comparison_fixture())
    header, rows = cells(text)
    assert header == ["Model", "Accuracy", "Training Comment"]
    assert rows == COMPARISON
    validate_artifact("comparison", json.loads(comparison_json(load_comparison_fixture())))


def test_comparison_with_diagnosed_row_has_footnote():
    row = ComparisonRow.from_run("Mine", reference_history())
    text = render_comparison([row])
    _, rows = cells(text.split("\n\n")[0])
    assert rows == [["Mine", "84%", "Converged. Overfitting not evident after 31 epochs."]]
    assert "Artifact definitions" in text


@pytest.mark.parametrize("acc,label", [(0.8429, "84%"), (0.845, "85%"), (0.8449, "84%"), (0.005, "1%"),
                                       (0.0, "0%"), (1.0, "100%")])
def test_percent_label(acc, label):
    assert percent_label(acc) == label


def test_comparison_row_validation():
    with pytest.raises(ValueError):
        ComparisonRow("x", 1.5, note="n")
    with pytest.raises(ValueError):
        render_comparison([])
