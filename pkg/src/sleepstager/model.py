"""The linear pipeline: per-feature quantile transform to uniform [0, 1],
multinomial logistic regression, and 2-component PCA for feature-space
analysis. Fitting is deterministic: full-batch loss and gradient, zero
initialization, fixed iteration order."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from .labels import MODEL_CLASSES

MODEL_FORMAT_VERSION = 1

DEFAULT_L2 = 1.0
DEFAULT_N_QUANTILES = 100
DEFAULT_GRAD_TOL = 1e-4
DEFAULT_MAX_ITER = 1000

CLASS_NAMES = tuple(s.value for s in MODEL_CLASSES)


# ---------------------------------------------------------------------------
# Quantile transform
# ---------------------------------------------------------------------------


@dataclass
class QuantileTransform:
    """Per-column empirical quantiles at probabilities 0, 1/q, ..., 1.

    ``references`` has shape (n_features, n_quantiles + 1) and is
    non-decreasing along the last axis.
    """

    references: np.ndarray

    @property
    def n_features(self) -> int:
        return self.references.shape[0]

    @property
    def probabilities(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.references.shape[1])


def fit_quantile(X: np.ndarray, n_quantiles: int = DEFAULT_N_QUANTILES) -> QuantileTransform:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("quantile fit needs a 2-D matrix with at least 2 rows")
    probs = np.linspace(0.0, 1.0, n_quantiles + 1)
    return QuantileTransform(references=np.quantile(X, probs, axis=0).T.copy())


def apply_quantile(model: QuantileTransform, X: np.ndarray) -> np.ndarray:
    """Piecewise-linear monotone map of each column onto [0, 1].

    Out-of-range inputs clip to 0/1. Tied reference plateaus collapse to one
    interpolation knot keeping the highest probability, except the training
    minimum which stays at 0 so the fitted range maps exactly onto [0, 1].
    A constant training column transforms to 0 everywhere.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ValueError(
            f"matrix has {X.shape[1] if X.ndim == 2 else '?'} columns, "
            f"transform was fitted on {model.n_features}"
        )
    probs = model.probabilities
    out = np.empty_like(X)
    for j in range(model.n_features):
        refs = model.references[j]
        values, first_idx = np.unique(refs, return_index=True)
        if len(values) == 1:
            out[:, j] = 0.0
            continue
        last_idx = np.searchsorted(refs, values, side="right") - 1
        knots = probs[last_idx]
        knots[0] = 0.0
        out[:, j] = np.interp(X[:, j], values, knots)
    return out


# ---------------------------------------------------------------------------
# Multinomial logistic regression
# ---------------------------------------------------------------------------


@dataclass
class LogisticModel:
    weights: np.ndarray  # (n_classes, n_features)
    biases: np.ndarray  # (n_classes,)
    classes: tuple[str, ...]
    l2_strength: float
    n_iterations: int = 0


def _softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=1, keepdims=True)
    np.exp(shifted, out=shifted)
    shifted /= shifted.sum(axis=1, keepdims=True)
    return shifted


def logistic_loss_grad(
    params: np.ndarray, X: np.ndarray, y: np.ndarray, n_classes: int, l2: float
) -> tuple[float, np.ndarray]:
    """Summed multinomial negative log-likelihood plus (l2/2)*||W||^2.

    Biases are unpenalized. Returns the loss and the flat gradient in the
    same parameter layout (weights row-major, then biases).
    """
    n, d = X.shape
    W = params[: n_classes * d].reshape(n_classes, d)
    b = params[n_classes * d :]
    scores = X @ W.T
    scores += b
    shift = scores.max(axis=1, keepdims=True)
    scores -= shift
    exp_scores = np.exp(scores)
    denom = exp_scores.sum(axis=1)
    rows = np.arange(n)
    loss = float(-(scores[rows, y] - np.log(denom)).sum() + 0.5 * l2 * (W * W).sum())
    G = exp_scores / denom[:, None]
    G[rows, y] -= 1.0
    grad_W = G.T @ X
    grad_W += l2 * W
    grad_b = G.sum(axis=0)
    return loss, np.concatenate([grad_W.ravel(), grad_b])


def fit_logistic(
    X: np.ndarray,
    y: np.ndarray,
    l2_strength: float = DEFAULT_L2,
    classes: tuple[str, ...] = CLASS_NAMES,
    grad_tol: float = DEFAULT_GRAD_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> LogisticModel:
    """Fit from zero initialization with deterministic full-batch L-BFGS.

    ``y`` holds class indices into ``classes``. Converged when the gradient
    max-norm drops to ``grad_tol``, capped at ``max_iter`` iterations.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("X must be 2-D with one label per row")
    if not np.isfinite(X).all():
        raise ValueError("logistic fit requires finite inputs")
    present = np.unique(y)
    if len(present) < 2:
        raise ValueError(f"training labels contain {len(present)} class(es); need at least 2")
    if present.min() < 0 or present.max() >= len(classes):
        raise ValueError(f"labels outside 0..{len(classes) - 1}")
    k, d = len(classes), X.shape[1]
    result = minimize(
        logistic_loss_grad,
        np.zeros(k * d + k),
        args=(X, y, k, float(l2_strength)),
        jac=True,
        method="L-BFGS-B",
        options={
            "maxiter": max_iter,
            "maxfun": max(20 * max_iter, 15000),
            "gtol": grad_tol,
            "ftol": 1e-14,
        },
    )
    params = result.x
    return LogisticModel(
        weights=params[: k * d].reshape(k, d).copy(),
        biases=params[k * d :].copy(),
        classes=tuple(classes),
        l2_strength=float(l2_strength),
        n_iterations=int(result.nit),
    )


def predict_proba(model: LogisticModel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.weights.shape[1]:
        raise ValueError(
            f"matrix has {X.shape[1] if X.ndim == 2 else '?'} columns, "
            f"model was fitted on {model.weights.shape[1]}"
        )
    return _softmax(X @ model.weights.T + model.biases)


def predict(model: LogisticModel, X: np.ndarray) -> np.ndarray:
    """Class indices; argmax breaks ties in favour of the earlier class."""
    return np.argmax(predict_proba(model, X), axis=1)


# ---------------------------------------------------------------------------
# PCA
# ---------------------------------------------------------------------------


@dataclass
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (n_components, n_features), orthonormal rows
    explained_variance: np.ndarray


def fit_pca(X: np.ndarray, n_components: int = 2) -> PcaModel:
    """Exact PCA by SVD of the centered matrix, top components by singular
    value. Sign convention: each component's largest-magnitude loading is
    positive."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] <= n_components:
        raise ValueError(f"PCA needs more than {n_components} rows")
    mean = X.mean(axis=0)
    _, s, vt = np.linalg.svd(X - mean, full_matrices=False)
    if s[n_components - 1] <= s[0] * 1e-12 or s[0] == 0.0:
        raise ValueError(f"matrix rank below {n_components}; PCA is degenerate")
    components = vt[:n_components].copy()
    for row in components:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    explained = (s[:n_components] ** 2) / (X.shape[0] - 1)
    return PcaModel(mean=mean, components=components, explained_variance=explained)


def project_pca(model: PcaModel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return (X - model.mean) @ model.components.T


# ---------------------------------------------------------------------------
# The serialized pipeline model (quantile transform + logistic weights)
# ---------------------------------------------------------------------------


@dataclass
class LinearPipelineModel:
    quantile: QuantileTransform
    logistic: LogisticModel
    schema_hash: str
    training_meta: dict = field(default_factory=dict)

    def predict_proba(self, X: np.ndarray, schema_hash: str | None = None) -> np.ndarray:
        if schema_hash is not None and schema_hash != self.schema_hash:
            raise ValueError(
                f"feature schema {schema_hash[:12]}... does not match the model's "
                f"{self.schema_hash[:12]}..."
            )
        return predict_proba(self.logistic, apply_quantile(self.quantile, X))

    def predict(self, X: np.ndarray, schema_hash: str | None = None) -> np.ndarray:
        return np.argmax(self.predict_proba(X, schema_hash), axis=1)


def fit_pipeline(
    X: np.ndarray,
    y: np.ndarray,
    schema_hash: str,
    l2_strength: float = DEFAULT_L2,
    n_quantiles: int = DEFAULT_N_QUANTILES,
    grad_tol: float = DEFAULT_GRAD_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    training_meta: dict | None = None,
) -> LinearPipelineModel:
    quantile = fit_quantile(X, n_quantiles)
    transformed = apply_quantile(quantile, X)
    logistic = fit_logistic(
        transformed, y, l2_strength=l2_strength, grad_tol=grad_tol, max_iter=max_iter
    )
    return LinearPipelineModel(
        quantile=quantile,
        logistic=logistic,
        schema_hash=schema_hash,
        training_meta=training_meta or {},
    )


def _floats_to_text(arr: np.ndarray) -> list:
    if arr.ndim == 1:
        return [repr(float(v)) for v in arr]
    return [_floats_to_text(row) for row in arr]


def save_model_json(model: LinearPipelineModel, path: str | Path) -> None:
    """Versioned JSON with numbers as decimal strings, so a reviewer can read
    the fitted weights and reload them without binary round-trip doubt."""
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "schema_hash": model.schema_hash,
        "classes": list(model.logistic.classes),
        "quantile_references": _floats_to_text(model.quantile.references),
        "weights": _floats_to_text(model.logistic.weights),
        "biases": _floats_to_text(model.logistic.biases),
        "l2_strength": model.logistic.l2_strength,
        "training_meta": model.training_meta,
    }
    Path(path).write_text(json.dumps(doc))


def load_model_json(path: str | Path) -> LinearPipelineModel:
    doc = json.loads(Path(path).read_text())
    if doc["format_version"] != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {doc['format_version']}")
    return LinearPipelineModel(
        quantile=QuantileTransform(np.asarray(doc["quantile_references"], dtype=np.float64)),
        logistic=LogisticModel(
            weights=np.asarray(doc["weights"], dtype=np.float64),
            biases=np.asarray(doc["biases"], dtype=np.float64),
            classes=tuple(doc["classes"]),
            l2_strength=float(doc["l2_strength"]),
        ),
        schema_hash=doc["schema_hash"],
        training_meta=doc["training_meta"],
    )
