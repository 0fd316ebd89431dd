"""JSON schemas for the pipeline's output files, plus the epoch-log header check."""

import csv
import io

import jsonschema

from .training import CSV_COLUMNS

_num = {"type": "number"}
_rate = {"type": "number", "minimum": 0, "maximum": 1}
_counts = {
    "type": "object",
    "properties": {"COVID_POSITIVE": {"type": "integer", "minimum": 0},
                   "COVID_NEGATIVE": {"type": "integer", "minimum": 0}},
    "required": ["COVID_POSITIVE", "COVID_NEGATIVE"],
    "additionalProperties": False,
}

_record = {
    "type": "object",
    "properties": {
        "epoch": {"type": "integer", "minimum": 1},
        "train_loss": {"type": "number", "minimum": 0},
        "train_accuracy": _rate,
        "train_precision": _rate,
        "train_recall": _rate,
        "val_loss": {"type": "number", "minimum": 0},
        "val_accuracy": _rate,
        "val_precision": _rate,
        "val_recall": _rate,
        "duration_seconds": {"type": "number", "minimum": 0},
    },
    "required": ["epoch", "train_loss", "train_accuracy", "train_precision", "train_recall",
                 "val_loss", "val_accuracy", "val_precision", "val_recall", "duration_seconds"],
}

_diagnosis = {
    "type": "object",
    "properties": {
        "converged": {"type": "boolean"},
        "overfit_onset_epoch": {"type": ["integer", "null"]},
        "total_epochs": {"type": "integer"},
        "comment": {"type": "string"},
    },
    "required": ["converged", "overfit_onset_epoch", "total_epochs", "comment"],
}

SCHEMAS = {
    "manifest": {
        "type": "object",
        "properties": {"train": _counts, "val": _counts},
        "required": ["train", "val"],
        "additionalProperties": False,
    },
    "run": {
        "type": "object",
        "properties": {
            "run_id": {"type": "string"},
            "model_name": {"type": "string"},
            "seed": {"type": "integer"},
            "stop_reason": {"enum": ["THRESHOLD", "PATIENCE", "MAX_EPOCHS", None]},
            "epochs": {"type": "integer", "minimum": 0},
            "total_seconds": {"type": "number", "minimum": 0},
            "config": {"type": "object"},
            "pipeline_config": {"type": "object"},
            "history": {"type": "array", "items": _record},
        },
        "required": ["run_id", "model_name", "seed", "stop_reason", "epochs", "total_seconds",
                     "config", "pipeline_config", "history"],
    },
    "model": {
        "type": "object",
        "properties": {
            "backbone": {"type": "object"},
            "head": {"type": "object"},
            "head_file": {"type": "string"},
            "summary": {
                "type": "object",
                "properties": {
                    "feature_shape": {"type": "array", "items": {"type": "integer"}},
                    "total_params": {"type": "integer"},
                    "trainable_params": {"type": "integer"},
                    "layers": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "properties": {
                                "name": {"type": "string"},
                                "output_shape": {"type": "array", "items": {"type": "integer"}},
                                "params": {"type": "integer", "minimum": 0},
                                "trainable": {"type": "boolean"},
                            },
                            "required": ["name", "output_shape", "params", "trainable"],
                        },
                    },
                },
                "required": ["feature_shape", "total_params", "trainable_params", "layers"],
            },
        },
        "required": ["backbone", "head", "head_file", "summary"],
    },
    "evaluation": {
        "type": "object",
        "properties": {
            "loss": {"type": "number", "minimum": 0},
            "accuracy": _rate,
            "precision": _rate,
            "recall": _rate,
            "f1": _rate,
            "counts": {"type": "object"},
            "undefined": {"type": "object"},
        },
        "required": ["loss", "accuracy", "precision", "recall", "f1", "counts", "undefined"],
    },
    "report": {
        "type": "object",
        "properties": {
            "diagnosis": _diagnosis,
            "final_f1": {"type": "object", "properties": {"train": _rate, "val": _rate},
                         "required": ["train", "val"]},
        },
        "required": ["diagnosis", "final_f1"],
    },
    "comparison": {
        "type": "object",
        "properties": {
            "rows": {
                "type": "array",
                "minItems": 1,
                "items": {
                    "type": "object",
                    "properties": {
                        "model": {"type": "string"},
                        "accuracy": _rate,
                        "accuracy_label": {"type": "string", "pattern": "^[0-9]+%$"},
                        "comment": {"type": "string"},
                        "diagnosis": {"oneOf": [{"type": "null"}, _diagnosis]},
                    },
                    "required": ["model", "accuracy", "accuracy_label", "comment", "diagnosis"],
                },
            }
        },
        "required": ["rows"],
    },
}


def validate_artifact(kind, obj):
    """Raise ``jsonschema.ValidationError`` if ``obj`` is not a valid ``kind`` artifact."""
    jsonschema.validate(obj, SCHEMAS[kind])


def validate_epoch_csv(text):
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != CSV_COLUMNS:
        raise ValueError("epoch log header mismatch")
    for i, row in enumerate(rows[1:], start=1):
        if len(row) != len(CSV_COLUMNS) or int(row[0]) != i:
            raise ValueError(f"bad epoch log row {i}: {row}")
        [float(v) for v in row[1:]]
    return len(rows) - 1
