"""Gap-acceptance classifiers producing the crossing probability p(cross).

Three model kinds share one container, :class:`GapModel`:

* ``SVMPoly3`` - cubic polynomial kernel SVM calibrated with a Platt sigmoid
  fitted on out-of-fold decision values,
* ``Logistic`` - L2-regularized logistic regression,
* ``CondProb`` - per-feature histogram likelihoods combined under an
  independence assumption.

All kinds z-normalize their inputs with training-set statistics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize

from ..metrics import classification_metrics
from .features import FEATURE_NAMES, FeatureVector, GapEvent, Label, events_to_arrays
from .svm import KernelSVM, fit_platt, fit_svm, platt_probability

MODEL_FORMAT = "pedcross.gap_model"
MODEL_VERSION = 1
MIN_EVENTS = 50
TEST_FRACTION = 0.2
PLATT_FOLDS = 5
HIST_BINS = 10


class ModelKind(str, Enum):
    SVM_POLY3 = "SVMPoly3"
    LOGISTIC = "Logistic"
    COND_PROB = "CondProb"


@dataclass
class GapModel:
    kind: ModelKind
    mean: np.ndarray
    std: np.ndarray
    params: Dict = field(default_factory=dict)
    features: Tuple[str, ...] = FEATURE_NAMES

    def normalize(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.std

    def select(self, X: np.ndarray) -> np.ndarray:
        """Pick this model's feature columns out of a full 7-column matrix."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] == len(self.features):
            return X
        cols = [FEATURE_NAMES.index(name) for name in self.features]
        return X[:, cols]


def stratified_split(y: np.ndarray, seed: int,
                     test_fraction: float = TEST_FRACTION) -> Tuple[np.ndarray, np.ndarray]:
    """Train/test indices with each label split in the same proportion."""
    rng = np.random.default_rng(seed)
    train, test = [], []
    for label in np.unique(y):
        idx = np.flatnonzero(y == label)
        idx = idx[rng.permutation(len(idx))]
        n_test = int(round(test_fraction * len(idx)))
        test.append(idx[:n_test])
        train.append(idx[n_test:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def stratified_folds(y: np.ndarray, k: int, seed: int) -> List[np.ndarray]:
    rng = np.random.default_rng(seed)
    folds: List[list] = [[] for _ in range(k)]
    for label in np.unique(y):
        idx = np.flatnonzero(y == label)
        idx = idx[rng.permutation(len(idx))]
        for n, i in enumerate(idx):
            folds[n % k].append(i)
    return [np.sort(np.array(f, dtype=int)) for f in folds]


def _normalization(X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std > 1e-12, std, 1.0)
    return mean, std


# -- SVM ---------------------------------------------------------------------

def _svm_params(svm: KernelSVM) -> Dict:
    return {"support_vectors": svm.support_vectors, "dual_coef": svm.dual_coef,
            "bias": svm.bias, "gamma": svm.gamma, "coef0": svm.coef0,
            "degree": svm.degree, "C": svm.C}


def _svm_from_params(p: Dict, n_features: int) -> KernelSVM:
    return KernelSVM(np.asarray(p["support_vectors"], float).reshape(-1, n_features),
                     np.asarray(p["dual_coef"], float), float(p["bias"]), float(p["gamma"]),
                     float(p["coef0"]), int(p["degree"]), float(p["C"]))


def _train_svm(Z: np.ndarray, y: np.ndarray, seed: int, C: float, gamma: Optional[float],
               coef0: float) -> Dict:
    if gamma is None:
        gamma = 1.0 / (Z.shape[1] * Z.var())
    oof = np.empty(len(y))
    for fold in stratified_folds(y, PLATT_FOLDS, seed):
        mask = np.ones(len(y), dtype=bool)
        mask[fold] = False
        sub = fit_svm(Z[mask], y[mask], C=C, gamma=gamma, coef0=coef0)
        oof[fold] = sub.decision_function(Z[fold])
    A, B = fit_platt(oof, y)
    svm = fit_svm(Z, y, C=C, gamma=gamma, coef0=coef0)
    params = _svm_params(svm)
    params.update(platt_A=A, platt_B=B)
    return params


def select_svm_C(Z: np.ndarray, y: np.ndarray, seed: int, grid: Sequence[float],
                 gamma: Optional[float] = None, coef0: float = 1.0
                 ) -> Tuple[float, List[Tuple[float, float]]]:
    """Pick C by 5-fold cross-validated F1 on (already normalized) training data.

    Ties go to the smaller C.
    """
    if gamma is None:
        gamma = 1.0 / (Z.shape[1] * Z.var())
    folds = stratified_folds(y, PLATT_FOLDS, seed)
    scores = []
    for C in sorted(float(c) for c in grid):
        pred = np.empty(len(y))
        for fold in folds:
            mask = np.ones(len(y), dtype=bool)
            mask[fold] = False
            svm = fit_svm(Z[mask], y[mask], C=C, gamma=gamma, coef0=coef0)
            pred[fold] = svm.decision_function(Z[fold]) > 0
        scores.append((C, classification_metrics(y, pred)["f1"]))
    best = max(scores, key=lambda s: (s[1], -s[0]))[0]
    return best, scores


# -- logistic regression -----------------------------------------------------

def _train_logistic(Z: np.ndarray, y: np.ndarray, C: float) -> Dict:
    s = np.where(y > 0, 1.0, -1.0)
    n, d = Z.shape

    def loss(theta):
        w, b = theta[:d], theta[d]
        m = s * (Z @ w + b)
        nll = np.sum(np.logaddexp(0.0, -m))
        sig = np.exp(-np.logaddexp(0.0, m))  # sigmoid(-m)
        gw = -(Z.T @ (s * sig)) + w / C
        gb = -np.sum(s * sig)
        return nll + 0.5 * w @ w / C, np.append(gw, gb)

    res = minimize(loss, np.zeros(d + 1), jac=True, method="L-BFGS-B",
                   options={"maxiter": 1000, "gtol": 1e-9, "ftol": 1e-14})
    if not res.success and res.nit >= 1000:
        raise RuntimeError(f"logistic regression did not converge: {res.message}")
    return {"weights": res.x[:d], "bias": float(res.x[d])}


# -- conditional-probability baseline ----------------------------------------

def _bin_index(Z: np.ndarray, lo: np.ndarray, hi: np.ndarray, bins: int) -> np.ndarray:
    width = np.where(hi > lo, hi - lo, 1.0)
    idx = np.floor((Z - lo) / width * bins).astype(int)
    return np.clip(idx, 0, bins - 1)


def _train_condprob(Z: np.ndarray, y: np.ndarray, bins: int, smoothing: float) -> Dict:
    lo, hi = Z.min(axis=0), Z.max(axis=0)
    idx = _bin_index(Z, lo, hi, bins)
    d = Z.shape[1]
    like = np.empty((2, d, bins))
    for c in (0, 1):
        rows = idx[y == c]
        for f in range(d):
            counts = np.bincount(rows[:, f], minlength=bins) + smoothing
            like[c, f] = counts / counts.sum()
    prior = np.array([np.mean(y == 0), np.mean(y == 1)])
    return {"lo": lo, "hi": hi, "bins": bins, "likelihood": like, "prior": prior}


def _condprob_proba(p: Dict, Z: np.ndarray) -> np.ndarray:
    like = np.asarray(p["likelihood"], float)
    prior = np.asarray(p["prior"], float)
    idx = _bin_index(Z, np.asarray(p["lo"]), np.asarray(p["hi"]), int(p["bins"]))
    cols = np.arange(Z.shape[1])
    log0 = np.log(prior[0]) + np.log(like[0, cols, idx]).sum(axis=1)
    log1 = np.log(prior[1]) + np.log(like[1, cols, idx]).sum(axis=1)
    return 1.0 / (1.0 + np.exp(log0 - log1))


# -- public API ----------------------------------------------------------------

def fit_model(kind: ModelKind, X: np.ndarray, y: np.ndarray, seed: int = 0,
              features: Sequence[str] = FEATURE_NAMES, **hyper) -> GapModel:
    """Fit one model kind on a raw feature matrix and 0/1 labels."""
    kind = ModelKind(kind)
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if len(np.unique(y)) < 2:
        raise ValueError("training set contains a single class")
    mean, std = _normalization(X)
    Z = (X - mean) / std
    if kind == ModelKind.SVM_POLY3:
        C = hyper.get("C", 1.0)
        if hyper.get("C_grid"):
            C, _ = select_svm_C(Z, y, seed, hyper["C_grid"], hyper.get("gamma"),
                                hyper.get("coef0", 1.0))
        params = _train_svm(Z, y, seed, C=C, gamma=hyper.get("gamma"),
                            coef0=hyper.get("coef0", 1.0))
    elif kind == ModelKind.LOGISTIC:
        params = _train_logistic(Z, y, C=hyper.get("C", 1.0))
    else:
        params = _train_condprob(Z, y, bins=hyper.get("bins", HIST_BINS),
                                 smoothing=hyper.get("smoothing", 1.0))
    return GapModel(kind, mean, std, params, tuple(features))


def train(kind, events: Sequence[GapEvent], split_seed: int,
          hyper: Optional[Dict] = None) -> Tuple[GapModel, List[GapEvent]]:
    """Fit on an 80 % stratified split of the decided events.

    Returns the model and the held-out 20 % of events.
    """
    decided = [ev for ev in events if ev.label != Label.UNDETERMINED and ev.features is not None]
    if len(decided) < MIN_EVENTS:
        raise ValueError(f"need at least {MIN_EVENTS} labeled events, got {len(decided)}")
    X, y = events_to_arrays(decided)
    if len(np.unique(y)) < 2:
        raise ValueError("events contain a single label")
    tr, te = stratified_split(y, split_seed)
    model = fit_model(kind, X[tr], y[tr], seed=split_seed, **(hyper or {}))
    return model, [decided[i] for i in te]


def predict_proba(model: GapModel, X: np.ndarray) -> np.ndarray:
    """Vectorized p(cross) for rows of raw features."""
    Z = model.normalize(model.select(X))
    p = model.params
    if model.kind == ModelKind.SVM_POLY3:
        svm = _svm_from_params(p, Z.shape[1])
        prob = platt_probability(svm.decision_function(Z), p["platt_A"], p["platt_B"])
    elif model.kind == ModelKind.LOGISTIC:
        z = Z @ np.asarray(p["weights"], float) + p["bias"]
        prob = np.exp(-np.logaddexp(0.0, -z))
    else:
        prob = _condprob_proba(p, Z)
    # keep strictly inside (0, 1)
    return np.clip(prob, 1e-12, 1.0 - 1e-12)


def predict_probability(model: GapModel, f: FeatureVector) -> float:
    return float(predict_proba(model, f.as_array()[None, :])[0])


def evaluate(model: GapModel, test: Sequence[GapEvent]) -> Dict[str, float]:
    """Accuracy, precision, recall and F1 of the accepted class at p > 0.5."""
    X, y = events_to_arrays(test)
    if len(y) == 0:
        raise ValueError("empty test set")
    report = classification_metrics(y, predict_proba(model, X))
    report["n"] = int(len(y))
    return report


def rank_features(events: Sequence[GapEvent], seed: int,
                  hyper: Optional[Dict] = None) -> List[Dict]:
    """Leave-one-feature-out ranking of the SVM.

    One row per removed feature, sorted by the F1 left after removal (the
    first row names the most important feature).
    """
    decided = [ev for ev in events if ev.label != Label.UNDETERMINED and ev.features is not None]
    X, y = events_to_arrays(decided)
    if X.shape[1] < len(FEATURE_NAMES):
        raise ValueError("ranking needs all seven features")
    tr, te = stratified_split(y, seed)
    rows = []
    for k, name in enumerate(FEATURE_NAMES):
        keep = [c for c in range(len(FEATURE_NAMES)) if c != k]
        kept = tuple(FEATURE_NAMES[c] for c in keep)
        model = fit_model(ModelKind.SVM_POLY3, X[tr][:, keep], y[tr], seed=seed,
                          features=kept, **(hyper or {}))
        m = classification_metrics(y[te], predict_proba(model, X[te][:, keep]))
        rows.append({"feature_removed": name, **m})
    rows.sort(key=lambda r: (r["f1"], FEATURE_NAMES.index(r["feature_removed"])))
    return rows


# -- persistence -----------------------------------------------------------------

def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def model_to_dict(model: GapModel) -> Dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "kind": model.kind.value,
        "features": list(model.features),
        "normalization": {"mean": model.mean.tolist(), "std": model.std.tolist()},
        "parameters": {k: _jsonable(v) for k, v in model.params.items()},
    }


def model_from_dict(d: Dict) -> GapModel:
    if d.get("format") != MODEL_FORMAT:
        raise ValueError("not a gap model file")
    if d.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version {d.get('version')}")
    params = dict(d["parameters"])
    for key in ("support_vectors", "dual_coef", "weights", "lo", "hi", "likelihood", "prior"):
        if key in params:
            params[key] = np.asarray(params[key], dtype=float)
    return GapModel(ModelKind(d["kind"]), np.asarray(d["normalization"]["mean"], float),
                    np.asarray(d["normalization"]["std"], float), params,
                    tuple(d["features"]))


def save_model(model: GapModel, path: Path, extra: Optional[Dict] = None) -> None:
    d = model_to_dict(model)
    if extra:
        d.update(extra)
    Path(path).write_text(json.dumps(d, indent=1, sort_keys=True) + "\n")


def load_model(path: Path) -> GapModel:
    return model_from_dict(json.loads(Path(path).read_text()))
