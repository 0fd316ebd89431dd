"""Command-line entry point: ``ctxfer --config FILE --command {scan,train,evaluate,report,compare}``.

Exit status: 0 success, 2 configuration error, 3 data error, 4 training
error, 5 I/O error.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import load_config
from .dataset import scan_dataset, stack_samples
from .errors import ConfigError, CtxferError, IoError, NonFiniteLoss
from .metrics import confusion_counts, f1_score
from .metrics import evaluate as evaluate_metrics
from .model import build_classifier, forward, load_head, save_head
from .report import (
    ComparisonRow,
    atomic_write,
    comparison_json,
    diagnose,
    load_comparison_fixture,
    render_comparison,
    render_curves,
    render_epoch_tables,
)
from .schemas import validate_artifact
from .training import TrainingRun, binary_cross_entropy, train

log = logging.getLogger("ctxfer")

COMMANDS = ("scan", "train", "evaluate", "report", "compare")


def _dump(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write_json(path, kind, obj):
    validate_artifact(kind, obj)
    atomic_write(path, _dump(obj))


def _read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise IoError(f"{path} not found; run the producing command first") from None
    except (OSError, json.JSONDecodeError) as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc


def _scan(cfg):
    return scan_dataset(
        cfg.dataset_root,
        cfg.dataset.class_dirs,
        cfg.input_size,
        cfg.dataset.split_ratio,
        cfg.seed,
    )


def cmd_scan(cfg):
    manifest = _scan(cfg)
    for w in manifest.warnings:
        print(f"warning: {w}", file=sys.stderr)
    _write_json(cfg.run_dir / "manifest.json", "manifest", manifest.counts)
    print(manifest.to_json(), end="")


def _run_payload(cfg, run):
    payload = run.to_dict()
    payload.update(
        run_id=cfg.run_id,
        model_name=cfg.name,
        seed=cfg.seed,
        pipeline_config=cfg.to_dict(),
    )
    return payload


def cmd_train(cfg):
    manifest = _scan(cfg)  # before any output exists
    model = build_classifier(cfg.backbone, cfg.head, seed=cfg.training.seed)
    out = cfg.run_dir
    _write_json(out / "manifest.json", "manifest", manifest.counts)
    log.info("run %s: %d train / %d val images", cfg.run_id, len(manifest.train_samples),
             len(manifest.val_samples))

    def progress(r):
        log.info("epoch %d loss %.4f acc %.4f val_loss %.4f val_acc %.4f", r.epoch, r.train_loss,
                 r.train_accuracy, r.val_loss, r.val_accuracy)

    try:
        run = train(model, manifest, cfg.augment, cfg.training, on_epoch=progress)
    except NonFiniteLoss as exc:
        if exc.run is not None:
            atomic_write(out / "epochs.csv", exc.run.to_csv())
        raise
    atomic_write(out / "epochs.csv", run.to_csv())
    _write_json(out / "run.json", "run", _run_payload(cfg, run))
    save_head(out / "head.npz", model)
    _write_json(out / "model.json", "model", {
        "backbone": cfg.backbone.to_dict(),
        "head": cfg.head.to_dict(),
        "head_file": "head.npz",
        "summary": model.summary(),
    })
    f = run.final
    print(f"run {cfg.run_id}: {len(run.records)} epochs, stop {run.stop_reason.value}, "
          f"val_acc {f.val_accuracy:.4f}, artifacts in {out}")


def cmd_evaluate(cfg):
    out = cfg.run_dir
    meta = _read_json(out / "model.json")
    manifest = _scan(cfg)
    model = build_classifier(cfg.backbone, cfg.head, head_params=load_head(out / meta["head_file"]))
    x, y = stack_samples(manifest.val_samples)
    p = forward(model, x)
    m = evaluate_metrics(p, y, cfg.training.threshold)
    c = confusion_counts(p, y, cfg.training.threshold)
    result = {
        "loss": binary_cross_entropy(p, y),
        "accuracy": m.accuracy,
        "precision": m.precision,
        "recall": m.recall,
        "f1": m.f1,
        "counts": {"tp": c.tp, "fp": c.fp, "fn": c.fn, "tn": c.tn},
        "undefined": m.undefined,
    }
    _write_json(out / "evaluation.json", "evaluation", result)
    print(_dump(result), end="")


def cmd_report(cfg):
    out = cfg.run_dir
    run = TrainingRun.from_dict(_read_json(out / "run.json"))
    if not run.records:
        raise ConfigError("run has no epochs to report")
    t1, t2 = render_epoch_tables(run)
    atomic_write(out / "table_loss_accuracy.txt", t1)
    atomic_write(out / "table_precision_recall.txt", t2)
    render_curves(run, out)
    f = run.final
    report = {
        "diagnosis": diagnose(run).to_dict() if len(run.records) >= 2 else {
            "converged": False, "overfit_onset_epoch": None, "total_epochs": len(run.records),
            "comment": "Single epoch; no diagnosis.",
        },
        "final_f1": {
            "train": f1_score(f.train_precision, f.train_recall),
            "val": f1_score(f.val_precision, f.val_recall),
        },
    }
    _write_json(out / "report.json", "report", report)
    print(t1 + "\n" + t2, end="")


def cmd_compare(cfg):
    rows = []
    src = cfg.compare.fixtures
    if src is not None:
        rows += load_comparison_fixture(None if src == "builtin" else src)
    for path in cfg.compare.runs:
        d = _read_json(path)
        rows.append(ComparisonRow.from_run(d.get("model_name", Path(path).parent.name), TrainingRun.from_dict(d)))
    current = cfg.run_dir / "run.json"
    if cfg.compare.include_current and current.is_file():
        rows.append(ComparisonRow.from_run(cfg.name, TrainingRun.from_dict(_read_json(current))))
    if not rows:
        raise ConfigError("compare needs [compare] fixtures, runs, or a trained current run")
    text = render_comparison(rows)
    atomic_write(cfg.run_dir / "comparison.txt", text)
    _write_json(cfg.run_dir / "comparison.json", "comparison", json.loads(comparison_json(rows)))
    print(text, end="")


HANDLERS = {
    "scan": cmd_scan,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
    "compare": cmd_compare,
}


def run_pipeline(cfg, command):
    """Run one command; returns the process exit status."""
    try:
        HANDLERS[command](cfg)
    except CtxferError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return IoError.exit_code
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(prog="ctxfer", description="CT transfer-learning pipeline")
    parser.add_argument("--config", required=True, help="pipeline TOML file")
    parser.add_argument("--command", required=True, choices=COMMANDS)
    parser.add_argument("--out", help="override output_dir")
    parser.add_argument("--seed", type=int, help="override every seed")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, out=args.out, seed=args.seed)
    except CtxferError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return run_pipeline(cfg, args.command)


if __name__ == "__main__":
    sys.exit(main())
