"""Epoch tables, training curves, convergence/overfitting diagnosis and the
model comparison table."""

import csv
import io
import json
import os
import tempfile
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from importlib import resources
from pathlib import Path

from .errors import InsufficientHistory, IoError
from .training import TrainingRun

OVERFIT_WINDOW = 3
CONVERGENCE_RATIO = 0.5


def diagnosis_footnote(window=OVERFIT_WINDOW, ratio=CONVERGENCE_RATIO):
    return (
        f"* Artifact definitions: converged = final training loss < {ratio:g} x epoch-1 training loss; "
        f"overfitting = validation loss above its earlier best for {window} consecutive epochs while "
        f"training loss falls, with no later recovery below that best."
    )


@dataclass(frozen=True)
class OverfitDiagnosis:
    converged: bool
    overfit_onset_epoch: int = None
    total_epochs: int = 0
    onset_after: int = None  # epochs completed before the onset

    @property
    def comment(self):
        head = "Converged." if self.converged else "Did not converge."
        if self.overfit_onset_epoch is None:
            return f"{head} Overfitting not evident after {self.total_epochs} epochs."
        n = self.onset_after
        return f"{head} Overfitting evident after {n} epoch{'' if n == 1 else 's'}."

    def to_dict(self):
        return {
            "converged": self.converged,
            "overfit_onset_epoch": self.overfit_onset_epoch,
            "total_epochs": self.total_epochs,
            "comment": self.comment,
        }


def diagnose(run, window=OVERFIT_WINDOW, ratio=CONVERGENCE_RATIO):
    """Classify a run's loss series.

    Onset is the first record ``e`` such that the ``window`` records starting
    at ``e`` all have validation loss above the best seen before ``e``, training
    loss is lower at the window's end than at its start, and validation loss
    never again drops below that earlier best. Records are taken in order, so
    a sparse (tabulated) history is read as consecutive observations.
    """
    recs = list(run.records)
    if len(recs) < 2:
        raise InsufficientHistory("diagnosis needs at least two epochs")
    converged = recs[-1].train_loss < ratio * recs[0].train_loss
    val = [r.val_loss for r in recs]
    onset = None
    for e in range(1, len(recs) - window + 1):
        best_before = min(val[:e])
        win = recs[e:e + window]
        if (
            all(r.val_loss > best_before for r in win)
            and win[-1].train_loss < win[0].train_loss
            and min(val[e:]) > best_before
        ):
            onset = e
            break
    if onset is None:
        return OverfitDiagnosis(converged, None, recs[-1].epoch)
    return OverfitDiagnosis(converged, recs[onset].epoch, recs[-1].epoch, recs[onset - 1].epoch)


def format_table(headers, rows):
    cols = list(zip(headers, *rows))
    widths = [max(len(str(v)) for v in col) for col in cols]
    line = lambda vals: "| " + " | ".join(str(v).ljust(w) for v, w in zip(vals, widths)) + " |"
    sep = "|" + "|".join("-" * (w + 2) for w in widths) + "|"
    return "\n".join([line(headers), sep] + [line(r) for r in rows]) + "\n"


def select_epochs(records, stride=5):
    chosen = [r for r in records if (r.epoch - 1) % stride == 0]
    if records and (not chosen or chosen[-1] is not records[-1]):
        chosen.append(records[-1])
    return chosen


def _pct(x):
    return f"{x * 100:.2f}%"


def render_epoch_tables(run, stride=5):
    """Return ``(loss_accuracy_table, precision_recall_table)`` as text."""
    rows = select_epochs(run.records, stride)
    t1 = format_table(
        ["Epoch", "Training Loss", "Validation Loss", "Training Accuracy", "Validation Accuracy"],
        [
            [f"After Epoch {r.epoch}", f"{r.train_loss:.4f}", f"{r.val_loss:.4f}",
             _pct(r.train_accuracy), _pct(r.val_accuracy)]
            for r in rows
        ],
    )
    factors = [
        ("Training Precision", "train_precision"),
        ("Validation Precision", "val_precision"),
        ("Training Recall", "train_recall"),
        ("Validation Recall", "val_recall"),
    ]
    t2 = format_table(
        ["Factor"] + [f"After Epoch {r.epoch}" for r in rows],
        [[label] + [f"{getattr(r, attr):.4f}" for r in rows] for label, attr in factors],
    )
    return t1, t2


# --------------------------------------------------------------------------
# file output
# --------------------------------------------------------------------------

def atomic_write(path, data):
    """Write text or bytes to ``path`` via a temp file and rename."""
    path = Path(path)
    mode = "wb" if isinstance(data, bytes) else "w"
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": ""})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    return path


def _series_csv(records, columns):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch"] + list(columns))
    for r in records:
        w.writerow([r.epoch] + [repr(float(getattr(r, c))) for c in columns])
    return buf.getvalue()


CURVES = {
    "loss_vs_epoch": ("Classification Loss vs Epoch", "Loss", ("train_loss", "val_loss")),
    "accuracy_vs_epoch": ("Classification Accuracy vs Epoch", "Accuracy", ("train_accuracy", "val_accuracy")),
}


def render_curves(run, out_dir):
    """Write both curve PNGs plus CSV sidecars holding exactly the plotted points."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    written = []
    epochs = [r.epoch for r in run.records]
    for stem, (title, ylabel, cols) in CURVES.items():
        fig, ax = plt.subplots(figsize=(6, 4))
        for col, label in zip(cols, ("Training", "Validation")):
            ax.plot(epochs, [getattr(r, col) for r in run.records], marker="o", markersize=3, label=label)
        ax.set_title(title)
        ax.set_xlabel("Epoch")
        ax.set_ylabel(ylabel)
        ax.legend()
        ax.grid(alpha=0.3)
        buf = io.BytesIO()
        fig.savefig(buf, format="png", dpi=100, metadata={"Software": None})
        plt.close(fig)
        written.append(atomic_write(out_dir / f"{stem}.png", buf.getvalue()))
        written.append(atomic_write(out_dir / f"{stem}.csv", _series_csv(run.records, cols)))
    return written


# --------------------------------------------------------------------------
# comparison
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ComparisonRow:
    model_name: str
    final_val_accuracy: float
    diagnosis: OverfitDiagnosis = None
    note: str = None  # verbatim comment for fixture rows

    def __post_init__(self):
        if not 0.0 <= self.final_val_accuracy <= 1.0:
            raise ValueError("accuracy must lie in [0, 1]")
        if self.diagnosis is None and self.note is None:
            raise ValueError("a comparison row needs a diagnosis or a comment")

    @property
    def comment(self):
        return self.note if self.note is not None else self.diagnosis.comment

    @classmethod
    def from_run(cls, name, run, window=OVERFIT_WINDOW, ratio=CONVERGENCE_RATIO):
        return cls(name, run.final.val_accuracy, diagnose(run, window, ratio))


def percent_label(acc):
    """Integer percent, rounding half up (0.8429 -> '84%')."""
    value = (Decimal(repr(float(acc))) * 100).quantize(Decimal(1), rounding=ROUND_HALF_UP)
    return f"{value}%"


def render_comparison(rows):
    rows = list(rows)
    if not rows:
        raise ValueError("nothing to compare")
    text = format_table(
        ["Model", "Accuracy", "Training Comment"],
        [[r.model_name, percent_label(r.final_val_accuracy), r.comment] for r in rows],
    )
    if any(r.diagnosis is not None for r in rows):
        text += "\n" + diagnosis_footnote() + "\n"
    return text


def comparison_json(rows):
    out = []
    for r in rows:
        out.append({
            "model": r.model_name,
            "accuracy": r.final_val_accuracy,
            "accuracy_label": percent_label(r.final_val_accuracy),
            "comment": r.comment,
            "diagnosis": r.diagnosis.to_dict() if r.diagnosis else None,
        })
    return json.dumps({"rows": out}, indent=2) + "\n"


# --------------------------------------------------------------------------
# bundled reference fixtures
# --------------------------------------------------------------------------

def _fixture(name):
    return json.loads(resources.files("ctxfer.data").joinpath(name).read_text(encoding="utf-8"))


def reference_history():
    """The reference run as a sparse history (every fifth epoch)."""
    return TrainingRun.from_dict(_fixture("reference_run.json"))


def load_comparison_fixture(path=None):
    """Rows of a comparison fixture file; defaults to the bundled reference table."""
    data = _fixture("reference_comparison.json") if path is None else json.loads(Path(path).read_text(encoding="utf-8"))
    return [ComparisonRow(r["model"], float(r["accuracy"]), note=r["comment"]) for r in data["rows"]]
