"""Annotation-time regressors and evaluation metrics.

Three model families predict a scalar time from a feature vector:

* ridge regression, solved in closed form on centered data so the
  intercept absorbs the target mean and the penalty never shrinks it;
* Gaussian-process regression with a dot-product plus white-noise
  kernel, fit once via a Cholesky factorization of the Gram matrix;
* a minimal least-squares gradient-boosted tree ensemble.

Models are immutable once fit.  Predictions are deliberately not clamped
to positive values: downstream ordering only needs ranks, and clamping
would manufacture ties at zero.

The GP kernel hyperparameters are fixed (sigma0^2 = noise^2 = 1 by
default) with no marginal-likelihood optimization, which keeps fits
deterministic.  A permanent 1e-10 diagonal jitter protects the
factorization when the noise term is zero and rows repeat.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from . import stats
from .errors import DataError, DimMismatch, NumericalFailure
from .stats import EmptyInput, LengthMismatch

_JITTER = 1e-10
_MIN_GAIN = 1e-12
_MODEL_FORMAT_VERSION = 1

REGRESSOR_KINDS = ("ridge", "gp", "gbm")


class EmptyTrainingSet(DataError):
    pass


class BadModelBlob(DataError):
    pass


@dataclass(frozen=True)
class RegressorSpec:
    """Which regressor to fit, and every knob it honors."""

    kind: str
    ridge_alpha: float = 1.0
    gp_sigma0_sq: float = 1.0
    gp_noise_sq: float = 1.0
    gbm_n_trees: int = 100
    gbm_learning_rate: float = 0.1
    gbm_max_depth: int = 3
    gbm_min_leaf: int = 1

    def __post_init__(self):
        if self.kind not in REGRESSOR_KINDS:
            raise DataError(f"unknown regressor kind {self.kind!r}")
        if not (self.ridge_alpha >= 0 and math.isfinite(self.ridge_alpha)):
            raise DataError(f"ridge_alpha must be finite and >= 0, got {self.ridge_alpha}")
        if not (self.gp_sigma0_sq >= 0 and math.isfinite(self.gp_sigma0_sq)):
            raise DataError(f"gp_sigma0_sq must be finite and >= 0, got {self.gp_sigma0_sq}")
        if not (self.gp_noise_sq >= 0 and math.isfinite(self.gp_noise_sq)):
            raise DataError(f"gp_noise_sq must be finite and >= 0, got {self.gp_noise_sq}")
        if not isinstance(self.gbm_n_trees, int) or self.gbm_n_trees < 0:
            raise DataError(f"gbm_n_trees must be an integer >= 0, got {self.gbm_n_trees!r}")
        if not (0.0 < self.gbm_learning_rate <= 1.0):
            raise DataError(
                f"gbm_learning_rate must be in (0, 1], got {self.gbm_learning_rate}"
            )
        if not isinstance(self.gbm_max_depth, int) or self.gbm_max_depth < 1:
            raise DataError(f"gbm_max_depth must be an integer >= 1, got {self.gbm_max_depth!r}")
        if not isinstance(self.gbm_min_leaf, int) or self.gbm_min_leaf < 1:
            raise DataError(f"gbm_min_leaf must be an integer >= 1, got {self.gbm_min_leaf!r}")


@dataclass(frozen=True)
class RidgeParams:
    weights: np.ndarray
    intercept: float


@dataclass(frozen=True)
class GpParams:
    train_x: np.ndarray
    chol: np.ndarray
    dual: np.ndarray
    sigma0_sq: float


@dataclass(frozen=True)
class GbmParams:
    base: float
    trees: tuple
    learning_rate: float


@dataclass(frozen=True)
class TrainedModel:
    kind: str
    dim: int
    n_train: int
    params: RidgeParams | GpParams | GbmParams
    spec: RegressorSpec = field(compare=False)


def _as_matrix(X) -> np.ndarray:
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1:
        # an empty list is "no rows", not one row of nothing
        arr = arr.reshape(1, -1) if arr.size else arr.reshape(0, 0)
    if arr.ndim != 2:
        raise DimMismatch(f"feature matrix must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError("feature matrix has non-finite values")
    return arr


def fit(spec: RegressorSpec, X, y) -> TrainedModel:
    """Train the regressor described by spec on (X, y)."""
    Xm = _as_matrix(X)
    yv = np.asarray(y, dtype=float).ravel()
    if Xm.shape[0] == 0:
        raise EmptyTrainingSet("fit needs at least one training row")
    if Xm.shape[0] != yv.shape[0]:
        raise DimMismatch(f"{Xm.shape[0]} feature rows but {yv.shape[0]} targets")
    if not np.all(np.isfinite(yv)):
        raise DataError("targets have non-finite values")
    n, d = Xm.shape
    if spec.kind == "ridge":
        params = _fit_ridge(Xm, yv, spec.ridge_alpha)
    elif spec.kind == "gp":
        params = _fit_gp(Xm, yv, spec.gp_sigma0_sq, spec.gp_noise_sq)
    else:
        params = _fit_gbm(spec, Xm, yv)
    return TrainedModel(kind=spec.kind, dim=d, n_train=n, params=params, spec=spec)


def _fit_ridge(X: np.ndarray, y: np.ndarray, alpha: float) -> RidgeParams:
    x_mean = X.mean(axis=0)
    y_mean = float(y.mean())
    Xc = X - x_mean
    yc = y - y_mean
    A = Xc.T @ Xc + alpha * np.eye(X.shape[1])
    try:
        factor = cho_factor(A, lower=True)
    except np.linalg.LinAlgError:
        raise NumericalFailure(
            "ridge normal equations are not positive definite "
            "(rank-deficient data with alpha = 0?)"
        ) from None
    weights = cho_solve(factor, Xc.T @ yc)
    intercept = y_mean - float(weights @ x_mean)
    weights.flags.writeable = False
    return RidgeParams(weights=weights, intercept=intercept)


def _fit_gp(X: np.ndarray, y: np.ndarray, sigma0_sq: float, noise_sq: float) -> GpParams:
    n = X.shape[0]
    K = sigma0_sq + X @ X.T + (noise_sq + _JITTER) * np.eye(n)
    try:
        L = np.linalg.cholesky(K)
    except np.linalg.LinAlgError:
        raise NumericalFailure("gram matrix factorization failed despite jitter") from None
    dual = solve_triangular(L.T, solve_triangular(L, y, lower=True), lower=False)
    train_x = X.copy()
    for arr in (train_x, L, dual):
        arr.flags.writeable = False
    return GpParams(train_x=train_x, chol=L, dual=dual, sigma0_sq=sigma0_sq)


# --- gradient boosted trees -------------------------------------------------
#
# A tree is a nested tuple: ("leaf", value) or
# ("split", feature, threshold, left, right); rows with
# x[feature] <= threshold go left.


def _best_split(X: np.ndarray, r: np.ndarray, min_leaf: int):
    n = r.shape[0]
    r_mean = r.mean()
    parent_sse = float(((r - r_mean) ** 2).sum())
    best = None
    best_gain = _MIN_GAIN
    for feature in range(X.shape[1]):
        xs = X[:, feature]
        order = np.argsort(xs, kind="stable")
        xs_sorted = xs[order]
        r_sorted = r[order]
        cuts = np.nonzero(xs_sorted[1:] > xs_sorted[:-1])[0] + 1
        cuts = cuts[(cuts >= min_leaf) & (n - cuts >= min_leaf)]
        if cuts.size == 0:
            continue
        csum = np.cumsum(r_sorted)
        csq = np.cumsum(r_sorted * r_sorted)
        left_sum = csum[cuts - 1]
        left_sq = csq[cuts - 1]
        left_sse = left_sq - left_sum * left_sum / cuts
        right_n = n - cuts
        right_sum = csum[-1] - left_sum
        right_sse = (csq[-1] - left_sq) - right_sum * right_sum / right_n
        gains = parent_sse - left_sse - right_sse
        # first maximal index = lowest threshold for this feature; features
        # are scanned ascending and replacement requires strict improvement,
        # so ties resolve to the lowest feature index, then lowest threshold
        j = int(np.argmax(gains))
        if gains[j] > best_gain:
            best_gain = float(gains[j])
            cut = cuts[j]
            threshold = 0.5 * (xs_sorted[cut - 1] + xs_sorted[cut])
            best = (feature, float(threshold))
    return best


def _build_tree(X: np.ndarray, r: np.ndarray, depth_left: int, min_leaf: int):
    value = float(r.mean())
    if depth_left == 0 or r.shape[0] < 2 * min_leaf:
        return ("leaf", value)
    found = _best_split(X, r, min_leaf)
    if found is None:
        return ("leaf", value)
    feature, threshold = found
    mask = X[:, feature] <= threshold
    left = _build_tree(X[mask], r[mask], depth_left - 1, min_leaf)
    right = _build_tree(X[~mask], r[~mask], depth_left - 1, min_leaf)
    return ("split", feature, threshold, left, right)


def _tree_predict_many(tree, X: np.ndarray) -> np.ndarray:
    if tree[0] == "leaf":
        return np.full(X.shape[0], tree[1])
    _, feature, threshold, left, right = tree
    out = np.empty(X.shape[0])
    mask = X[:, feature] <= threshold
    out[mask] = _tree_predict_many(left, X[mask])
    out[~mask] = _tree_predict_many(right, X[~mask])
    return out


def _fit_gbm(spec: RegressorSpec, X: np.ndarray, y: np.ndarray) -> GbmParams:
    base = float(y.mean())
    residual = y - base
    trees = []
    for _ in range(spec.gbm_n_trees):
        tree = _build_tree(X, residual, spec.gbm_max_depth, spec.gbm_min_leaf)
        residual = residual - spec.gbm_learning_rate * _tree_predict_many(tree, X)
        trees.append(tree)
    return GbmParams(base=base, trees=tuple(trees), learning_rate=spec.gbm_learning_rate)


def predict_many(model: TrainedModel, X) -> np.ndarray:
    """Predict times for each row of X."""
    Xm = _as_matrix(X)
    if Xm.shape[1] != model.dim:
        raise DimMismatch(f"model expects dim {model.dim}, got {Xm.shape[1]}")
    p = model.params
    if model.kind == "ridge":
        return Xm @ p.weights + p.intercept
    if model.kind == "gp":
        cross = p.sigma0_sq + Xm @ p.train_x.T
        return cross @ p.dual
    out = np.full(Xm.shape[0], p.base)
    for tree in p.trees:
        out = out + p.learning_rate * _tree_predict_many(tree, Xm)
    return out


def predict(model: TrainedModel, x) -> float:
    """Predict the time for a single feature vector."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise DimMismatch(f"predict takes a 1-D vector, got shape {arr.shape}")
    return float(predict_many(model, arr.reshape(1, -1))[0])


@dataclass(frozen=True)
class Metrics:
    """Regression quality; r2 and rho are None when undefined."""

    mae: float
    rmse: float
    r2: float | None
    rho: float | None


def regression_metrics(y_true, y_pred) -> Metrics:
    """MAE, RMSE, R^2 and Spearman rank correlation of predictions."""
    yt = np.asarray(y_true, dtype=float).ravel()
    yp = np.asarray(y_pred, dtype=float).ravel()
    if yt.shape[0] != yp.shape[0]:
        raise LengthMismatch(f"lengths differ: {yt.shape[0]} vs {yp.shape[0]}")
    if yt.shape[0] == 0:
        raise EmptyInput("regression_metrics got empty input")
    if not (np.all(np.isfinite(yt)) and np.all(np.isfinite(yp))):
        raise DataError("regression_metrics got non-finite values")
    diff = yp - yt
    mae = float(np.mean(np.abs(diff)))
    rmse = float(np.sqrt(np.mean(diff * diff)))
    sst = float(np.sum((yt - yt.mean()) ** 2))
    r2 = None if sst == 0.0 else 1.0 - float(np.sum(diff * diff)) / sst
    rho = stats.spearman(yt.tolist(), yp.tolist()) if yt.shape[0] >= 2 else None
    return Metrics(mae=mae, rmse=rmse, r2=r2, rho=rho)


# --- serialization ----------------------------------------------------------


def _tree_to_json(tree):
    if tree[0] == "leaf":
        return {"value": tree[1]}
    return {
        "feature": tree[1],
        "threshold": tree[2],
        "left": _tree_to_json(tree[3]),
        "right": _tree_to_json(tree[4]),
    }


def _tree_from_json(obj):
    if "value" in obj:
        return ("leaf", float(obj["value"]))
    return (
        "split",
        int(obj["feature"]),
        float(obj["threshold"]),
        _tree_from_json(obj["left"]),
        _tree_from_json(obj["right"]),
    )


def spec_to_json(spec: RegressorSpec) -> dict:
    return {
        "kind": spec.kind,
        "ridge_alpha": spec.ridge_alpha,
        "gp_sigma0_sq": spec.gp_sigma0_sq,
        "gp_noise_sq": spec.gp_noise_sq,
        "gbm_n_trees": spec.gbm_n_trees,
        "gbm_learning_rate": spec.gbm_learning_rate,
        "gbm_max_depth": spec.gbm_max_depth,
        "gbm_min_leaf": spec.gbm_min_leaf,
    }


def spec_from_json(obj: dict) -> RegressorSpec:
    if not isinstance(obj, dict) or "kind" not in obj:
        raise BadModelBlob("regressor spec must be an object with a 'kind'")
    known = spec_to_json(RegressorSpec(kind=obj["kind"]))
    unknown = set(obj) - set(known)
    if unknown:
        raise BadModelBlob(f"unknown regressor spec fields: {sorted(unknown)}")
    known.update(obj)
    return RegressorSpec(**known)


def model_to_json(model: TrainedModel) -> dict:
    """Serialize a trained model to a json-compatible dict."""
    blob = {
        "format_version": _MODEL_FORMAT_VERSION,
        "kind": model.kind,
        "dim": model.dim,
        "n_train": model.n_train,
        "spec": spec_to_json(model.spec),
    }
    p = model.params
    if model.kind == "ridge":
        blob["weights"] = p.weights.tolist()
        blob["intercept"] = p.intercept
    elif model.kind == "gp":
        blob["train_x"] = p.train_x.tolist()
        blob["chol"] = p.chol.tolist()
        blob["dual"] = p.dual.tolist()
        blob["sigma0_sq"] = p.sigma0_sq
    else:
        blob["base"] = p.base
        blob["learning_rate"] = p.learning_rate
        blob["trees"] = [_tree_to_json(t) for t in p.trees]
    return blob


def model_from_json(blob: dict) -> TrainedModel:
    """Rebuild a trained model from model_to_json output."""
    if not isinstance(blob, dict):
        raise BadModelBlob("model blob must be a json object")
    if blob.get("format_version") != _MODEL_FORMAT_VERSION:
        raise BadModelBlob(f"unsupported model format {blob.get('format_version')!r}")
    try:
        kind = blob["kind"]
        spec = spec_from_json(blob["spec"])
        if kind == "ridge":
            weights = np.asarray(blob["weights"], dtype=float)
            weights.flags.writeable = False
            params: RidgeParams | GpParams | GbmParams = RidgeParams(
                weights=weights, intercept=float(blob["intercept"])
            )
        elif kind == "gp":
            train_x = np.asarray(blob["train_x"], dtype=float)
            chol = np.asarray(blob["chol"], dtype=float)
            dual = np.asarray(blob["dual"], dtype=float)
            for arr in (train_x, chol, dual):
                arr.flags.writeable = False
            params = GpParams(
                train_x=train_x, chol=chol, dual=dual, sigma0_sq=float(blob["sigma0_sq"])
            )
        elif kind == "gbm":
            params = GbmParams(
                base=float(blob["base"]),
                trees=tuple(_tree_from_json(t) for t in blob["trees"]),
                learning_rate=float(blob["learning_rate"]),
            )
        else:
            raise BadModelBlob(f"unknown model kind {kind!r}")
        return TrainedModel(
            kind=kind,
            dim=int(blob["dim"]),
            n_train=int(blob["n_train"]),
            params=params,
            spec=spec,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise BadModelBlob(f"malformed model blob: {exc}") from None


def save_model(model: TrainedModel, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_json(model), fh)


def load_model(path: str) -> TrainedModel:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_json(json.load(fh))
