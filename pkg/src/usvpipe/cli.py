"""Command-line front end: the pipeline stages as subcommands.

Stages communicate exclusively through files under the output directory
(features.csv, folds.csv, ...), so a 35k-utterance corpus can be processed
stage by stage and audited in between.  Every text artifact starts with a
provenance comment (tool version, seed, config hash) and reruns with
identical inputs and seed are byte-identical.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .audio_io import load_wav
from .corpus import (CONTEXT_LABELS, SchemaConfig, Utterance, filter_cohort,
                     load_annotations, write_filter_report)
from .evaluation import (Prediction, PredictionSet, build_report,
                         report_to_json, write_confusion_csv,
                         write_predictions_csv)
from .exceptions import (ClipTooShortError, EmptyVoicedSetError, PipelineError)
from .partition import build_plan, read_fold_plan, write_fold_plan
from .pitch import (FeatureRecord, contour_stats, extract_f0,
                    read_feature_csv, write_feature_csv)
from .spectral import export_spectrogram, write_tensor
from .svm import COST_GRID, nested_select, predict, write_model
from .synth import synth_corpus

log = logging.getLogger("usvpipe")

EXTRACT_FAILURE_TOLERANCE = 0.01  # corrupt-file fraction tolerated per run


@dataclass
class RunConfig:
    """Resolved paths and knobs shared by the pipeline subcommands."""

    annotation_file: Path | None = None
    schema_file: Path | None = None
    audio_dir: Path | None = None
    output_dir: Path = Path("results")
    seed: int = 0
    cost_grid: tuple[float, ...] = COST_GRID
    bootstrap_replicates: int = 1000

    def config_hash(self) -> str:
        """Hash of everything that shapes results (the output location doesn't)."""
        payload = {
            "annotation_file": str(self.annotation_file),
            "schema_file": str(self.schema_file),
            "audio_dir": str(self.audio_dir),
            "seed": self.seed,
            "cost_grid": list(self.cost_grid),
            "bootstrap_replicates": self.bootstrap_replicates,
        }
        digest = hashlib.sha256(
            json.dumps(payload, sort_keys=True).encode()).hexdigest()
        return digest[:12]

    def provenance(self) -> str:
        return f"usvpipe {__version__} seed={self.seed} config={self.config_hash()}"


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        raw = json.loads(Path(args.config).read_text())
        for key in ("annotation_file", "schema_file", "audio_dir", "output_dir"):
            if key in raw:
                setattr(cfg, key, Path(raw[key]))
        if "seed" in raw:
            cfg.seed = int(raw["seed"])
        if "cost_grid" in raw:
            cfg.cost_grid = tuple(float(v) for v in raw["cost_grid"])
        if "bootstrap_replicates" in raw:
            cfg.bootstrap_replicates = int(raw["bootstrap_replicates"])
    if getattr(args, "annotations", None):
        cfg.annotation_file = Path(args.annotations)
    if getattr(args, "schema", None):
        cfg.schema_file = Path(args.schema)
    if getattr(args, "audio_dir", None):
        cfg.audio_dir = Path(args.audio_dir)
    if getattr(args, "out", None):
        cfg.output_dir = Path(args.out)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "grid", None):
        cfg.cost_grid = tuple(float(v) for v in args.grid.split(","))
    if getattr(args, "replicates", None) is not None:
        cfg.bootstrap_replicates = args.replicates
    if cfg.audio_dir is None and cfg.annotation_file is not None:
        cfg.audio_dir = cfg.annotation_file.parent
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    return cfg


def _load_cohort(cfg: RunConfig) -> list[Utterance]:
    if cfg.annotation_file is None or cfg.schema_file is None:
        raise PipelineError("annotation and schema files are required "
                            "(--annotations/--schema or a config file)")
    schema = SchemaConfig.from_json(cfg.schema_file)
    records = load_annotations(cfg.annotation_file, schema)
    cohort, report = filter_cohort(records, schema.emitter_placeholders,
                                   audio_root=cfg.audio_dir)
    write_filter_report(cfg.output_dir / "filter_report.csv", report,
                        comment=cfg.provenance())
    log.info("cohort: %d retained of %d records", report.retained, report.total_in)
    return cohort


def cmd_extract(args: argparse.Namespace) -> int:
    """Pitch features for every cohort utterance with at least one voiced frame."""
    cfg = _resolve_config(args)
    cohort = _load_cohort(cfg)
    records: list[FeatureRecord] = []
    skips: list[tuple[str, str]] = []
    failures = 0
    for utt in sorted(cohort, key=lambda u: u.id):
        try:
            contour = extract_f0(load_wav(utt.audio_path))
            features = contour_stats(contour)
        except EmptyVoicedSetError:
            skips.append((utt.id, "all_unvoiced"))
            continue
        except ClipTooShortError:
            skips.append((utt.id, "too_short"))
            continue
        except (PipelineError, OSError, ValueError) as exc:
            failures += 1
            skips.append((utt.id, f"error:{type(exc).__name__}"))
            log.error("%s: %s", utt.id, exc)
            continue
        records.append(FeatureRecord(
            utterance_id=utt.id, emitter_id=utt.emitter_id, context=utt.context,
            duration_s=utt.duration_s, features=features))

    write_feature_csv(cfg.output_dir / "features.csv", records,
                      comment=cfg.provenance())
    with open(cfg.output_dir / "skip_report.csv", "w", newline="") as fh:
        fh.write(f"# {cfg.provenance()}\n")
        fh.write("utterance_id,reason\n")
        for uid, reason in sorted(skips):
            fh.write(f"{uid},{reason}\n")
    print(f"extract: {len(records)} feature rows, {len(skips)} skipped "
          f"({failures} file errors)")
    if cohort and failures / len(cohort) > EXTRACT_FAILURE_TOLERANCE:
        log.error("%d of %d files failed, above the %.0f%% tolerance",
                  failures, len(cohort), 100 * EXTRACT_FAILURE_TOLERANCE)
        return 1
    return 0


def _cohort_from_features(path: Path) -> tuple[list[Utterance], dict[str, FeatureRecord]]:
    records = read_feature_csv(path)
    cohort = [Utterance(id=r.utterance_id, audio_path=None, emitter_id=r.emitter_id,
                        context=r.context, duration_s=r.duration_s)
              for r in records]
    return cohort, {r.utterance_id: r for r in records}


def cmd_partition(args: argparse.Namespace) -> int:
    """Build the subject-independent 3-fold plan from the feature table."""
    cfg = _resolve_config(args)
    cohort, _ = _cohort_from_features(cfg.output_dir / "features.csv")
    plan = build_plan(cohort, cfg.seed)
    write_fold_plan(cfg.output_dir / "folds.csv", plan, comment=cfg.provenance())
    print(f"partition: {len(cohort)} utterances over {plan.fold_count} folds")
    return 0


def cmd_train_eval(args: argparse.Namespace) -> int:
    """Nested cost selection per fold, pooled predictions, UAR report."""
    cfg = _resolve_config(args)
    records = read_feature_csv(cfg.output_dir / "features.csv")
    plan = read_fold_plan(cfg.output_dir / "folds.csv")
    by_id = {r.utterance_id: r for r in records}

    predictions: list[Prediction] = []
    chosen_costs: dict[str, float] = {}
    validation_uar: dict[str, dict] = {}
    for fold in range(plan.fold_count):
        train_ids, val_ids, test_ids = plan.fold_membership(fold)
        dev_ids = train_ids + val_ids
        X_dev = np.array([by_id[uid].features.as_row() for uid in dev_ids])
        y_dev = [by_id[uid].context for uid in dev_ids]
        train_idx = np.arange(len(train_ids))
        val_idx = np.arange(len(train_ids), len(dev_ids))
        model, diag = nested_select(X_dev, y_dev, train_idx, val_idx,
                                    grid=cfg.cost_grid, seed=(cfg.seed, fold))
        write_model(cfg.output_dir / f"model_fold{fold}.csv", model,
                    comment=cfg.provenance())
        chosen_costs[str(fold)] = diag["chosen_cost"]
        validation_uar[str(fold)] = {format(c, "g"): u
                                     for c, u in diag["validation_uar"].items()}

        X_test = np.array([by_id[uid].features.as_row() for uid in test_ids])
        for uid, predicted in zip(test_ids, predict(model, X_test)):
            predictions.append(Prediction(utterance_id=uid,
                                          true_label=by_id[uid].context,
                                          predicted_label=predicted, fold=fold))
        log.info("fold %d: cost %g, %d test predictions",
                 fold, diag["chosen_cost"], len(test_ids))

    preds = PredictionSet(predictions)
    labels = [lab for lab in CONTEXT_LABELS
              if any(p.true_label == lab or p.predicted_label == lab
                     for p in preds.records)] or None
    report = build_report(preds, labels=labels,
                          replicates=cfg.bootstrap_replicates, seed=cfg.seed)
    write_predictions_csv(cfg.output_dir / "predictions.csv", preds,
                          comment=cfg.provenance())
    provenance = {"tool": f"usvpipe {__version__}", "seed": cfg.seed,
                  "config": cfg.config_hash(), "chosen_costs": chosen_costs,
                  "validation_uar": validation_uar}
    (cfg.output_dir / "report.json").write_text(
        report_to_json(report, provenance=provenance))
    write_confusion_csv(cfg.output_dir / "confusion.csv", report,
                        comment=cfg.provenance())
    print(f"train-eval: UAR {report.uar:.4f} "
          f"[{report.ci_low:.4f} - {report.ci_high:.4f}] over {report.n} predictions")
    return 0


def cmd_export_spectrograms(args: argparse.Namespace) -> int:
    """Fixed-shape linear-magnitude spectrogram tensors for external consumers."""
    cfg = _resolve_config(args)
    cohort = _load_cohort(cfg)
    tensor_dir = cfg.output_dir / "spectrograms"
    tensor_dir.mkdir(parents=True, exist_ok=True)
    manifest_rows = []
    for utt in sorted(cohort, key=lambda u: u.id):
        spec = export_spectrogram(load_wav(utt.audio_path))
        out_path = tensor_dir / f"{utt.id}.usvt"
        write_tensor(spec, out_path)
        manifest_rows.append((utt.id, f"spectrograms/{utt.id}.usvt",
                              spec.frame_count, spec.bin_count))
    with open(cfg.output_dir / "spectrogram_manifest.csv", "w", newline="") as fh:
        fh.write(f"# {cfg.provenance()}\n")
        fh.write("utterance_id,file,frames,bins\n")
        for row in manifest_rows:
            fh.write(",".join(str(v) for v in row) + "\n")
    print(f"export-spectrograms: {len(manifest_rows)} tensors in {tensor_dir}")
    return 0


def cmd_table1(args: argparse.Namespace) -> int:
    """Per-context means of the five voiced-only contour statistics."""
    cfg = _resolve_config(args)
    records = read_feature_csv(cfg.output_dir / "features.csv")
    by_context: dict[str, list] = defaultdict(list)
    for r in records:
        f = r.features
        by_context[r.context].append((f.f0_mean_voiced, f.f0_std_voiced,
                                      f.f0_max_voiced, f.f0_min_voiced,
                                      f.f0_slope_voiced))
    out_path = cfg.output_dir / "context_f0_stats.csv"
    with open(out_path, "w", newline="") as fh:
        fh.write(f"# {cfg.provenance()}\n")
        fh.write("context,n,mean_hz,std_hz,max_hz,min_hz,slope_hz_per_s\n")
        for context in sorted(by_context):
            stats = np.array(by_context[context]).mean(axis=0)
            fh.write(context + f",{len(by_context[context])}," +
                     ",".join(format(v, ".6g") for v in stats) + "\n")
    print(f"table1: {len(by_context)} contexts in {out_path}")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    """Generate a synthetic corpus plus a ready-to-use run config."""
    out_dir = Path(args.out)
    annotation_path, schema_path = synth_corpus(
        out_dir, n_emitters=args.emitters, per_class_count=args.per_class,
        seed=args.seed if args.seed is not None else 0,
        sample_rate=args.sample_rate)
    config = {
        "annotation_file": str(annotation_path),
        "schema_file": str(schema_path),
        "audio_dir": str(out_dir),
        "output_dir": str(out_dir / "results"),
        "seed": args.seed if args.seed is not None else 0,
    }
    config_path = out_dir / "config.json"
    config_path.write_text(json.dumps(config, indent=2, sort_keys=True) + "\n")
    print(f"synth: corpus under {out_dir}, run config at {config_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="usvpipe",
        description="Analysis pipeline for ultrasound vocalisation corpora")
    parser.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="seed recorded in every artifact")
    common.add_argument("--out", help="output directory (stages share it)")
    common.add_argument("--grid", help="comma-separated cost grid override")
    common.add_argument("--replicates", type=int, help="bootstrap replicate count")
    common.add_argument("--annotations", help="annotation table path")
    common.add_argument("--schema", help="schema config path")
    common.add_argument("--audio-dir", help="base directory for audio references")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("extract", parents=[common],
                   help="pitch features for the filtered cohort").set_defaults(
        func=cmd_extract)
    sub.add_parser("partition", parents=[common],
                   help="subject-independent 3-fold plan").set_defaults(
        func=cmd_partition)
    sub.add_parser("train-eval", parents=[common],
                   help="nested SVM selection and pooled evaluation").set_defaults(
        func=cmd_train_eval)
    sub.add_parser("export-spectrograms", parents=[common],
                   help="fixed-shape spectrogram tensors").set_defaults(
        func=cmd_export_spectrograms)
    sub.add_parser("table1", parents=[common],
                   help="per-context F0 statistics table").set_defaults(
        func=cmd_table1)

    synth = sub.add_parser("synth", help="generate a synthetic test corpus")
    synth.add_argument("--out", required=True)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--emitters", type=int, default=12)
    synth.add_argument("--per-class", type=int, default=50)
    synth.add_argument("--sample-rate", type=int, default=50_000)
    synth.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (PipelineError, OSError, ValueError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
