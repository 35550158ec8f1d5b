"""Grouped cross-validation (learning from scratch), direct transfer, and
the scoring metrics: macro F1, accuracy, Cohen's kappa, log loss.

Grouping discipline: a subject's recordings are never split between the
training and test side of any fold.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .labels import MODEL_CLASSES
from .model import LinearPipelineModel, fit_pipeline
from .windowing import EpochFeatureMatrix

CLASS_NAMES = tuple(s.value for s in MODEL_CLASSES)
N_CLASSES = len(CLASS_NAMES)

PROBA_CLIP = 1e-15


@dataclass
class FoldPlan:
    k: int
    assignment: dict[str, int]

    def subjects_in_fold(self, fold: int) -> set[str]:
        return {s for s, f in self.assignment.items() if f == fold}


def grouped_kfold(subjects: list[str], k: int) -> FoldPlan:
    """Deterministic grouped folds: subjects sorted lexicographically and
    dealt round-robin. k equal to the subject count is leave-one-subject-out.
    """
    unique = sorted(set(subjects))
    if k < 2:
        raise ValueError("k must be at least 2")
    if k > len(unique):
        raise ValueError(f"k={k} exceeds the {len(unique)} distinct subjects")
    return FoldPlan(k=k, assignment={s: i % k for i, s in enumerate(unique)})


@dataclass
class LabeledRecording:
    """One recording's scored feature rows, ready for modeling."""

    subject_id: str
    recording_id: str
    epoch_index: np.ndarray
    features: np.ndarray
    labels: np.ndarray  # indices into CLASS_NAMES
    schema_hash: str = ""

    @classmethod
    def from_matrix(cls, matrix: EpochFeatureMatrix) -> "LabeledRecording":
        if matrix.stages is None:
            raise ValueError(f"matrix {matrix.recording_id!r} carries no stage labels")
        try:
            labels = np.asarray([CLASS_NAMES.index(s) for s in matrix.stages], dtype=np.int64)
        except ValueError:
            bad = sorted(set(matrix.stages) - set(CLASS_NAMES))
            raise ValueError(
                f"matrix {matrix.recording_id!r} contains non-model stages {bad}; "
                "run stage mapping and exclusion first"
            ) from None
        return cls(
            subject_id=matrix.subject_id,
            recording_id=matrix.recording_id,
            epoch_index=matrix.epoch_index,
            features=matrix.values,
            labels=labels,
            schema_hash=matrix.schema.digest(),
        )


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def confusion_matrix(truth: np.ndarray, pred: np.ndarray, n_classes: int = N_CLASSES) -> np.ndarray:
    """Counts with rows = true class, columns = predicted class."""
    truth = np.asarray(truth, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    if truth.shape != pred.shape or truth.ndim != 1:
        raise ValueError("truth and pred must be 1-D and aligned")
    if len(truth) == 0:
        raise ValueError("cannot score an empty prediction set")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (truth, pred), 1)
    return cm


def accuracy_from_confusion(cm: np.ndarray) -> float:
    return float(np.trace(cm) / cm.sum())


def per_class_f1_from_confusion(cm: np.ndarray) -> np.ndarray:
    tp = np.diag(cm).astype(np.float64)
    pred_tot = cm.sum(axis=0).astype(np.float64)
    true_tot = cm.sum(axis=1).astype(np.float64)
    denom = pred_tot + true_tot
    with np.errstate(invalid="ignore", divide="ignore"):
        f1 = np.where(denom > 0, 2.0 * tp / denom, 0.0)
    return f1


def macro_f1_from_confusion(cm: np.ndarray) -> float:
    """Mean F1 over the classes present in truth or predictions; a class
    predicted but absent from truth therefore drags the average with F1=0."""
    present = (cm.sum(axis=1) > 0) | (cm.sum(axis=0) > 0)
    return float(per_class_f1_from_confusion(cm)[present].mean())


def cohen_kappa_from_confusion(cm: np.ndarray) -> float:
    total = cm.sum()
    p_o = np.trace(cm) / total
    p_e = float((cm.sum(axis=1) / total) @ (cm.sum(axis=0) / total))
    if p_e >= 1.0:
        return 0.0
    return float((p_o - p_e) / (1.0 - p_e))


def accuracy(truth, pred) -> float:
    return accuracy_from_confusion(confusion_matrix(truth, pred))


def macro_f1(truth, pred, n_classes: int = N_CLASSES) -> float:
    return macro_f1_from_confusion(confusion_matrix(truth, pred, n_classes))


def cohen_kappa(truth, pred, n_classes: int = N_CLASSES) -> float:
    return cohen_kappa_from_confusion(confusion_matrix(truth, pred, n_classes))


def log_loss(truth, proba) -> float:
    """Mean negative log probability of the true class, clipped away from 0/1."""
    truth = np.asarray(truth, dtype=np.int64)
    proba = np.asarray(proba, dtype=np.float64)
    if proba.ndim != 2 or len(truth) != len(proba):
        raise ValueError("proba must be 2-D and aligned with truth")
    if len(truth) == 0:
        raise ValueError("cannot score an empty prediction set")
    p = np.clip(proba[np.arange(len(truth)), truth], PROBA_CLIP, 1.0 - PROBA_CLIP)
    return float(-np.log(p).mean())


@dataclass
class MetricsReport:
    mf1: float
    acc: float
    kappa: float
    log_loss: float
    per_class_f1: np.ndarray
    confusion: np.ndarray
    n_epochs: int
    fold_id: int | str

    def to_dict(self) -> dict:
        return {
            "fold_id": self.fold_id,
            "n_epochs": self.n_epochs,
            "mf1": self.mf1,
            "acc": self.acc,
            "kappa": self.kappa,
            "log_loss": self.log_loss,
            "per_class_f1": {c: float(v) for c, v in zip(CLASS_NAMES, self.per_class_f1)},
            "confusion": self.confusion.tolist(),
        }


def compute_report(truth, pred, proba, fold_id: int | str = "pooled") -> MetricsReport:
    cm = confusion_matrix(truth, pred)
    return MetricsReport(
        mf1=macro_f1_from_confusion(cm),
        acc=accuracy_from_confusion(cm),
        kappa=cohen_kappa_from_confusion(cm),
        log_loss=log_loss(truth, proba),
        per_class_f1=per_class_f1_from_confusion(cm),
        confusion=cm,
        n_epochs=int(len(np.asarray(truth))),
        fold_id=fold_id,
    )


# ---------------------------------------------------------------------------
# Protocols
# ---------------------------------------------------------------------------


@dataclass
class PredictionRow:
    subject_id: str
    recording_id: str
    epoch_index: int
    truth: str
    pred: str
    proba: np.ndarray


@dataclass
class EvalResult:
    protocol: str
    k: int | None
    per_fold: list[MetricsReport]
    pooled: MetricsReport
    rows: list[PredictionRow] = field(default_factory=list)
    models: list[LinearPipelineModel] = field(default_factory=list)


def _check_same_schema(recordings: list[LabeledRecording]) -> str:
    hashes = {r.schema_hash for r in recordings}
    if len(hashes) != 1:
        raise ValueError(f"recordings mix {len(hashes)} different feature schemas")
    return next(iter(hashes))


def _stack(recordings: list[LabeledRecording]) -> tuple[np.ndarray, np.ndarray]:
    return (
        np.vstack([r.features for r in recordings]),
        np.concatenate([r.labels for r in recordings]),
    )


def _predict_rows(
    model: LinearPipelineModel, recordings: list[LabeledRecording]
) -> tuple[np.ndarray, np.ndarray, np.ndarray, list[PredictionRow]]:
    truth_parts, proba_parts, rows = [], [], []
    for rec in recordings:
        proba = model.predict_proba(rec.features, schema_hash=rec.schema_hash)
        truth_parts.append(rec.labels)
        proba_parts.append(proba)
        pred = np.argmax(proba, axis=1)
        for i in range(len(rec.labels)):
            rows.append(
                PredictionRow(
                    subject_id=rec.subject_id,
                    recording_id=rec.recording_id,
                    epoch_index=int(rec.epoch_index[i]),
                    truth=CLASS_NAMES[rec.labels[i]],
                    pred=CLASS_NAMES[pred[i]],
                    proba=proba[i],
                )
            )
    truth = np.concatenate(truth_parts)
    proba = np.vstack(proba_parts)
    return truth, np.argmax(proba, axis=1), proba, rows


def run_lfs_cv(
    recordings: list[LabeledRecording],
    k: int,
    fit_options: dict | None = None,
) -> EvalResult:
    """Train-from-scratch grouped k-fold CV; quantile transform and weights
    are fitted on out-of-fold rows only. Pooled metrics concatenate every
    fold's test predictions."""
    schema_hash = _check_same_schema(recordings)
    plan = grouped_kfold([r.subject_id for r in recordings], k)
    fit_options = fit_options or {}

    per_fold: list[MetricsReport] = []
    models: list[LinearPipelineModel] = []
    all_rows: list[PredictionRow] = []
    truth_all, pred_all, proba_all = [], [], []
    for fold in range(plan.k):
        test_subjects = plan.subjects_in_fold(fold)
        train = [r for r in recordings if r.subject_id not in test_subjects]
        test = [r for r in recordings if r.subject_id in test_subjects]
        if not test:
            continue
        overlap = {r.subject_id for r in train} & {r.subject_id for r in test}
        if overlap:
            raise AssertionError(f"fold {fold}: subjects {overlap} on both sides")
        X_train, y_train = _stack(train)
        if len(np.unique(y_train)) < 2:
            raise ValueError(f"fold {fold}: training side holds a single class")
        model = fit_pipeline(
            X_train,
            y_train,
            schema_hash=schema_hash,
            training_meta={"protocol": "LFS", "fold": fold, "n_rows": int(len(y_train))},
            **fit_options,
        )
        truth, pred, proba, rows = _predict_rows(model, test)
        per_fold.append(compute_report(truth, pred, proba, fold_id=fold))
        models.append(model)
        all_rows.extend(rows)
        truth_all.append(truth)
        pred_all.append(pred)
        proba_all.append(proba)

    pooled = compute_report(
        np.concatenate(truth_all), np.concatenate(pred_all), np.vstack(proba_all)
    )
    return EvalResult(protocol="LFS", k=plan.k, per_fold=per_fold, pooled=pooled, rows=all_rows, models=models)


def run_dt(
    train_recordings: list[LabeledRecording],
    eval_recordings: list[LabeledRecording],
    fit_options: dict | None = None,
    exclude_subjects: set[str] | None = None,
    allow_subject_overlap: bool = False,
) -> EvalResult:
    """Direct transfer: one fit on the training dataset, scored unchanged on
    the evaluation dataset. Subject overlap is an error unless whitelisted."""
    if exclude_subjects:
        train_recordings = [r for r in train_recordings if r.subject_id not in exclude_subjects]
    if not train_recordings:
        raise ValueError("no training recordings left after exclusions")
    schema_hash = _check_same_schema(train_recordings + eval_recordings)
    overlap = {r.subject_id for r in train_recordings} & {r.subject_id for r in eval_recordings}
    if overlap and not allow_subject_overlap:
        raise ValueError(
            f"subjects {sorted(overlap)} appear in both datasets; "
            "pass allow_subject_overlap=True only if this is intentional"
        )
    X_train, y_train = _stack(train_recordings)
    if len(np.unique(y_train)) < 2:
        raise ValueError("training dataset holds a single class")
    model = fit_pipeline(
        X_train,
        y_train,
        schema_hash=schema_hash,
        training_meta={"protocol": "DT", "n_rows": int(len(y_train))},
        **(fit_options or {}),
    )
    truth, pred, proba, rows = _predict_rows(model, eval_recordings)
    pooled = compute_report(truth, pred, proba)
    return EvalResult(protocol="DT", k=None, per_fold=[], pooled=pooled, rows=rows, models=[model])
