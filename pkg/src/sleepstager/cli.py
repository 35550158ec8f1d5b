"""Batch command line: inspect, extract, train, evaluate, predict, project.

Exit codes: 0 success, 1 partial data failure (some recordings failed but the
run continued), 2 usage or parse error. Progress and wall times go to stderr
as JSON lines; artifacts carry the config digest they were produced under.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig
from .edf import EdfParseError, read_edf_header
from .evaluate import CLASS_NAMES, EvalResult, LabeledRecording, run_dt, run_lfs_cv
from .model import fit_pipeline, load_model_json, save_model_json, fit_quantile, apply_quantile, fit_pca, project_pca
from .pipeline import discover_recordings, process_recording
from .windowing import EpochFeatureMatrix, load_matrix_binary, save_matrix_binary, save_matrix_csv

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_USAGE = 2


def log_event(stage: str, **fields) -> None:
    print(json.dumps({"ts": round(time.time(), 3), "stage": stage, **fields}), file=sys.stderr)


class _Timer:
    def __enter__(self):
        self.t0 = time.monotonic()
        return self

    def __exit__(self, *exc):
        self.wall_s = round(time.monotonic() - self.t0, 3)
        return False


# ---------------------------------------------------------------------------
# inspect
# ---------------------------------------------------------------------------


def cmd_inspect(args) -> int:
    header = read_edf_header(args.path)
    doc = {
        "version": header.version,
        "patient_id": header.patient_id,
        "recording_id": header.recording_id,
        "start_datetime": header.start_datetime.isoformat(),
        "header_bytes": header.header_bytes,
        "reserved": header.reserved,
        "n_data_records": header.n_data_records,
        "record_duration_s": float(header.record_duration),
        "n_signals": header.n_signals,
        "signals": [
            {
                "label": s.label,
                "transducer": s.transducer,
                "physical_dimension": s.physical_dimension,
                "physical_min": s.physical_min,
                "physical_max": s.physical_max,
                "digital_min": s.digital_min,
                "digital_max": s.digital_max,
                "prefiltering": s.prefiltering,
                "samples_per_record": s.samples_per_record,
                "sampling_rate_hz": float(header.sampling_rate(s)),
            }
            for s in header.signal_specs
        ],
    }
    print(json.dumps(doc, indent=2))
    return EXIT_OK


# ---------------------------------------------------------------------------
# extract
# ---------------------------------------------------------------------------


def _matrix_paths(outdir: Path, recording_id: str) -> tuple[Path, Path, Path]:
    features = outdir / "features"
    labels = outdir / "labels"
    return features / f"{recording_id}.bin", features / f"{recording_id}.json", labels / f"{recording_id}.labels.json"


def _extract_worker(task: tuple[str, dict, bool]) -> tuple[str, str, str]:
    edf_path, config_data, write_csv = task
    config = RunConfig(config_data)
    path = Path(edf_path)
    try:
        with _Timer() as timer:
            processed = process_recording(path, config)
        matrix = processed.matrix
        bin_path, _, report_path = _matrix_paths(config.output_dir, matrix.recording_id)
        bin_path.parent.mkdir(parents=True, exist_ok=True)
        report_path.parent.mkdir(parents=True, exist_ok=True)
        save_matrix_binary(matrix, bin_path)
        if write_csv:
            save_matrix_csv(matrix, bin_path.with_suffix(".csv"))
        report_path.write_text(json.dumps(processed.report, indent=2))
        log_event(
            "extract",
            recording=matrix.recording_id,
            rows=matrix.n_epochs,
            wall_s=timer.wall_s,
        )
        return path.stem, "ok", ""
    except Exception as exc:  # per-recording failures must not kill the batch
        return path.stem, "failed", f"{type(exc).__name__}: {exc}"


def cmd_extract(args) -> int:
    config = RunConfig.load(args.config, args.set)
    recordings = discover_recordings(config)
    digest = config.extraction_digest()

    tasks = []
    for path in recordings:
        _, sidecar, _ = _matrix_paths(config.output_dir, path.stem)
        if sidecar.exists() and not args.force:
            try:
                existing = json.loads(sidecar.read_text())
            except json.JSONDecodeError:
                existing = {}
            if existing.get("config_digest") == digest:
                log_event("extract", recording=path.stem, skipped="up-to-date")
                continue
        tasks.append((str(path), config.data, args.csv))

    failures = []
    workers = int(config["parallelism"])
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_extract_worker, tasks))
    else:
        results = [_extract_worker(t) for t in tasks]
    for stem, status, error in results:
        if status != "ok":
            failures.append((stem, error))
            log_event("extract", recording=stem, error=error)
    if failures:
        log_event("extract", failed=len(failures), total=len(recordings))
        return EXIT_PARTIAL
    return EXIT_OK


# ---------------------------------------------------------------------------
# matrix loading shared by train / evaluate / project
# ---------------------------------------------------------------------------


def load_feature_matrices(
    features_dir: Path, expected_digest: str | None, exclude_subjects: set[str] | None = None
) -> list[EpochFeatureMatrix]:
    paths = sorted(features_dir.glob("*.bin"))
    if not paths:
        raise FileNotFoundError(f"no extracted feature matrices in {features_dir}")
    matrices = [load_matrix_binary(p) for p in paths]
    digests = {m.config_digest for m in matrices}
    if len(digests) > 1:
        raise ValueError(f"{features_dir} mixes matrices from {len(digests)} different configs")
    if expected_digest is not None and digests != {expected_digest}:
        raise ValueError(
            f"matrices in {features_dir} were extracted under a different config; re-run extract"
        )
    if exclude_subjects:
        matrices = [m for m in matrices if m.subject_id not in exclude_subjects]
        if not matrices:
            raise ValueError("all matrices excluded by dataset.exclude_subjects")
    matrices.sort(key=lambda m: (m.subject_id, m.recording_id))
    return matrices


def _labeled(matrices: list[EpochFeatureMatrix]) -> list[LabeledRecording]:
    return [LabeledRecording.from_matrix(m) for m in matrices]


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def cmd_train(args) -> int:
    config = RunConfig.load(args.config, args.set)
    matrices = load_feature_matrices(
        config.output_dir / "features",
        config.extraction_digest(),
        set(config.dataset["exclude_subjects"]),
    )
    recordings = _labeled(matrices)
    X = np.vstack([r.features for r in recordings])
    y = np.concatenate([r.labels for r in recordings])
    with _Timer() as timer:
        model = fit_pipeline(
            X,
            y,
            schema_hash=recordings[0].schema_hash,
            training_meta={
                "dataset": config.dataset["name"],
                "config_digest": config.digest(),
                "extraction_digest": config.extraction_digest(),
                "n_rows": int(len(y)),
                "n_recordings": len(recordings),
            },
            **config.fit_options(),
        )
    out = Path(args.model_out) if args.model_out else config.output_dir / "model.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    save_model_json(model, out)
    log_event("train", rows=int(len(y)), iterations=model.logistic.n_iterations, wall_s=timer.wall_s, model=str(out))
    return EXIT_OK


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------


def _write_confusion_csv(path: Path, confusion: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["true\\pred"] + list(CLASS_NAMES))
        for name, row in zip(CLASS_NAMES, confusion):
            writer.writerow([name] + [int(v) for v in row])


def _write_predictions_csv(path: Path, result: EvalResult) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["subject_id", "recording_id", "epoch_index", "truth", "pred"]
            + [f"p_{c}" for c in CLASS_NAMES]
        )
        for row in result.rows:
            writer.writerow(
                [row.subject_id, row.recording_id, row.epoch_index, row.truth, row.pred]
                + [repr(float(p)) for p in row.proba]
            )


def cmd_evaluate(args) -> int:
    config = RunConfig.load(args.config, args.set)
    protocol = config.evaluation["protocol"]
    matrices = load_feature_matrices(
        config.output_dir / "features",
        config.extraction_digest(),
        set(config.dataset["exclude_subjects"]),
    )
    recordings = _labeled(matrices)
    wall_times: dict[str, float] = {}

    if protocol == "LFS":
        with _Timer() as timer:
            result = run_lfs_cv(recordings, int(config.evaluation["k"]), config.fit_options())
        wall_times["cv"] = timer.wall_s
    elif protocol == "DT":
        train_dir = config.evaluation["train_features_dir"]
        if not train_dir:
            raise ConfigError("evaluation.train_features_dir is required for the DT protocol")
        train_matrices = load_feature_matrices(Path(train_dir), expected_digest=None)
        with _Timer() as timer:
            result = run_dt(
                _labeled(train_matrices),
                recordings,
                fit_options=config.fit_options(),
                exclude_subjects=set(config.evaluation["exclude_train_subjects"]),
                allow_subject_overlap=bool(config.evaluation["allow_subject_overlap"]),
            )
        wall_times["fit_and_eval"] = timer.wall_s
    else:
        raise ConfigError(f"unknown evaluation.protocol {protocol!r} (expected LFS or DT)")

    reports_dir = config.output_dir / "reports"
    reports_dir.mkdir(parents=True, exist_ok=True)
    doc = {
        "dataset": config.dataset["name"],
        "protocol": result.protocol,
        "k": result.k,
        "per_fold": [r.to_dict() for r in result.per_fold],
        "pooled": result.pooled.to_dict(),
        "config_digest": config.digest(),
        "schema_hash": recordings[0].schema_hash,
        "wall_times": wall_times,
    }
    (reports_dir / "report.json").write_text(json.dumps(doc, indent=2))
    _write_confusion_csv(reports_dir / "confusion_pooled.csv", result.pooled.confusion)
    for fold_report in result.per_fold:
        _write_confusion_csv(
            reports_dir / f"confusion_fold{fold_report.fold_id}.csv", fold_report.confusion
        )
    _write_predictions_csv(reports_dir / "predictions.csv", result)
    log_event(
        "evaluate",
        protocol=result.protocol,
        pooled_acc=result.pooled.acc,
        pooled_mf1=result.pooled.mf1,
        pooled_kappa=result.pooled.kappa,
        **wall_times,
    )
    print(json.dumps(doc["pooled"], indent=2))
    return EXIT_OK


# ---------------------------------------------------------------------------
# predict
# ---------------------------------------------------------------------------


def cmd_predict(args) -> int:
    config = RunConfig.load(args.config, args.set)
    model = load_model_json(args.model)
    with _Timer() as timer:
        processed = process_recording(args.recording, config, labels_optional=True)
    matrix = processed.matrix
    proba = model.predict_proba(matrix.values, schema_hash=matrix.schema.digest())
    pred = np.argmax(proba, axis=1)
    out = Path(args.out) if args.out else config.output_dir / f"{matrix.recording_id}.predictions.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch_index", "stage"] + [f"p_{c}" for c in CLASS_NAMES])
        for i in range(len(pred)):
            writer.writerow(
                [int(matrix.epoch_index[i]), CLASS_NAMES[pred[i]]]
                + [repr(float(p)) for p in proba[i]]
            )
    log_event("predict", recording=matrix.recording_id, rows=int(len(pred)), wall_s=timer.wall_s, out=str(out))
    return EXIT_OK


# ---------------------------------------------------------------------------
# project
# ---------------------------------------------------------------------------


def cmd_project(args) -> int:
    config = RunConfig.load(args.config, args.set)
    matrices = load_feature_matrices(
        config.output_dir / "features",
        config.extraction_digest(),
        set(config.dataset["exclude_subjects"]),
    )
    X = np.vstack([m.values for m in matrices])
    with _Timer() as timer:
        transform = fit_quantile(X, int(config.model["n_quantiles"]))
        transformed = apply_quantile(transform, X)
        pca = fit_pca(transformed, n_components=2)
        coords = project_pca(pca, transformed)
    out = Path(args.out) if args.out else config.output_dir / "projection.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subject_id", "recording_id", "epoch_index", "pc1", "pc2", "stage"])
        row = 0
        for m in matrices:
            stages = m.stages or [""] * m.n_epochs
            for i in range(m.n_epochs):
                writer.writerow(
                    [m.subject_id, m.recording_id, int(m.epoch_index[i]),
                     repr(float(coords[row, 0])), repr(float(coords[row, 1])), stages[i]]
                )
                row += 1
    log_event(
        "project",
        rows=int(len(X)),
        explained_variance=[float(v) for v in pca.explained_variance],
        wall_s=timer.wall_s,
        out=str(out),
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sleepstager",
        description="Sleep-stage scoring: EDF ingestion, feature extraction, linear modeling.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("inspect", help="print an EDF header as JSON")
    p.add_argument("path")
    p.set_defaults(func=cmd_inspect)

    def add_config(p):
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--set", action="append", default=[], metavar="KEY.PATH=VALUE",
                       help="override a scalar config field")

    p = sub.add_parser("extract", help="extract per-recording feature matrices")
    add_config(p)
    p.add_argument("--csv", action="store_true", help="also write feature matrices as CSV")
    p.add_argument("--force", action="store_true", help="recompute even if outputs are current")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="fit the quantile+logistic pipeline on all extracted rows")
    add_config(p)
    p.add_argument("--model-out", help="model JSON path (default: <output_dir>/model.json)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="run the LFS or DT protocol and write reports")
    add_config(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="score one recording with a trained model")
    add_config(p)
    p.add_argument("--model", required=True)
    p.add_argument("--recording", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("project", help="2-component PCA of the transformed feature matrix")
    add_config(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_project)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (ConfigError, EdfParseError, FileNotFoundError, KeyError, ValueError, OSError) as exc:
        log_event("error", error=f"{type(exc).__name__}: {exc}")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
