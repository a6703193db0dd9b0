"""Multi-output ridge regression from segment features to emotion ratings.

Weights come from the regularized normal equations

    (X~'X~ + lam * I~) W = X~'Y,    X~ = [1 | X],

where ``I~`` is the identity with the bias entry zeroed so the intercept is
never shrunk. The system is formed in extended precision, factored with
Cholesky in double precision, and polished with a few refinement steps.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from . import canonical
from .canonical import check_keys, get_int, get_list, get_str
from .diff import diff_scores
from .errors import EmptySegment, SchemaError, SegmentationMismatch, SingularSystem
from .features import FEATURE_NAMES, N_FEATURES, featurize, segment_score
from .survey import EMOTIONS, MAX_RATING, MIN_RATING

MODEL_VERSION = "maestro-model/1"
DATASET_VERSION = "maestro-dataset/1"
DEFAULT_LAMBDA = 1e-6
N_EMOTIONS = len(EMOTIONS)
EMOTION_NAMES = tuple(e.label for e in EMOTIONS)


class Mode(enum.Enum):
    ABSOLUTE = "absolute"
    DELTA = "delta"


@dataclass(frozen=True, eq=False)
class TrainingSet:
    """Rows of features ``X`` (N x 14) and targets ``Y`` (N x 8).

    ``provenance`` holds one ``(score_id, segment_id)`` pair per row. Delta
    sets also keep ``base_features``: the original score's features for each
    row, used to find where past interpretations made changes.
    """

    mode: Mode
    X: np.ndarray
    Y: np.ndarray
    provenance: tuple = ()
    base_features: Optional[np.ndarray] = None

    def __post_init__(self):
        X = np.array(self.X, dtype=float, ndmin=2)
        Y = np.array(self.Y, dtype=float, ndmin=2)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        if X.shape[0] < 1:
            raise ValueError("a training set needs at least one row")
        if X.shape[1] != N_FEATURES or Y.shape[1] != N_EMOTIONS:
            raise ValueError(f"expected X as N x {N_FEATURES} and Y as N x {N_EMOTIONS}, got {X.shape} and {Y.shape}")
        if X.shape[0] != Y.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but Y has {Y.shape[0]}")
        if not (np.isfinite(X).all() and np.isfinite(Y).all()):
            raise ValueError("training data must be finite")
        if self.mode is Mode.ABSOLUTE and ((Y < MIN_RATING).any() or (Y > MAX_RATING).any()):
            raise ValueError(f"absolute ratings must lie in [{MIN_RATING}, {MAX_RATING}]")
        if not self.provenance:
            object.__setattr__(self, "provenance", tuple(("", i) for i in range(X.shape[0])))
        elif len(self.provenance) != X.shape[0]:
            raise ValueError("provenance needs one entry per row")
        if self.base_features is not None:
            base = np.array(self.base_features, dtype=float, ndmin=2)
            if base.shape != X.shape:
                raise ValueError("base_features must match X in shape")
            object.__setattr__(self, "base_features", base)

    def __len__(self) -> int:
        return self.X.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, TrainingSet):
            return NotImplemented
        same_base = (self.base_features is None) == (other.base_features is None) and (
            self.base_features is None or np.array_equal(self.base_features, other.base_features))
        return (self.mode is other.mode and np.array_equal(self.X, other.X) and np.array_equal(self.Y, other.Y)
                and self.provenance == other.provenance and same_base)

    def subset(self, rows) -> "TrainingSet":
        rows = list(rows)
        base = None if self.base_features is None else self.base_features[rows]
        return TrainingSet(self.mode, self.X[rows], self.Y[rows], tuple(self.provenance[r] for r in rows), base)


@dataclass(frozen=True, eq=False)
class RegressionModel:
    weights: np.ndarray  # (1 + 14) x 8, row 0 is the bias
    lam: float
    mode: Mode = Mode.ABSOLUTE
    n_samples: int = 0
    feature_order: tuple = FEATURE_NAMES
    emotion_order: tuple = EMOTION_NAMES

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.shape != (N_FEATURES + 1, N_EMOTIONS):
            raise ValueError(f"weights must be {N_FEATURES + 1} x {N_EMOTIONS}, got {w.shape}")
        if not np.isfinite(w).all():
            raise ValueError("weights must be finite")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        if tuple(self.feature_order) != FEATURE_NAMES or tuple(self.emotion_order) != EMOTION_NAMES:
            raise ValueError("feature or emotion order does not match this version")

    @property
    def bias(self) -> np.ndarray:
        return self.weights[0]

    @property
    def coefficients(self) -> np.ndarray:
        return self.weights[1:]

    def __eq__(self, other) -> bool:
        if not isinstance(other, RegressionModel):
            return NotImplemented
        return (np.array_equal(self.weights, other.weights) and self.lam == other.lam
                and self.mode is other.mode and self.n_samples == other.n_samples)


def design_matrix(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return np.hstack([np.ones((X.shape[0], 1)), X])


def penalty_diagonal(n: int) -> np.ndarray:
    diag = np.ones(n)
    diag[0] = 0.0
    return diag


def _solve_ridge(A: np.ndarray, B: np.ndarray, refinements: int = 3) -> np.ndarray:
    """Cholesky solve of ``A W = B``; residuals for refinement use extended precision when available."""
    try:
        factor = cho_factor(np.asarray(A, dtype=float), lower=True, check_finite=True)
    except LinAlgError:
        raise SingularSystem("normal equations are not positive definite; increase lambda") from None
    W = cho_solve(factor, np.asarray(B, dtype=float))
    for _ in range(refinements):
        residual = np.asarray(B - A @ W.astype(A.dtype), dtype=float)
        W = W + cho_solve(factor, residual)
    return W


def train(ts: TrainingSet, lam: float = DEFAULT_LAMBDA) -> RegressionModel:
    """Fit ridge weights in closed form.

    Feature columns that are zero in every row carry no information; their
    weights are fixed at zero and the remaining system is solved. With
    ``lam == 0`` any other rank deficiency raises :class:`SingularSystem`.
    """
    if not lam >= 0 or not np.isfinite(lam):
        raise ValueError(f"lambda must be a finite non-negative number, got {lam!r}")
    Xt = design_matrix(ts.X)
    active = np.flatnonzero(np.any(Xt != 0, axis=0))
    Xa = Xt[:, active]
    if lam == 0 and np.linalg.matrix_rank(Xa) < len(active):
        raise SingularSystem("design matrix is rank deficient with lambda = 0; use a positive lambda")
    # the system is tiny, so it is formed in extended precision to keep rounding out of the weights
    Xe = Xa.astype(np.longdouble)
    A = Xe.T @ Xe + np.longdouble(lam) * np.diag(penalty_diagonal(Xt.shape[1])[active]).astype(np.longdouble)
    B = Xe.T @ ts.Y.astype(np.longdouble)
    W = np.zeros((Xt.shape[1], N_EMOTIONS))
    W[active] = _solve_ridge(A, B)
    return RegressionModel(W, float(lam), ts.mode, len(ts))


def normal_equations_residual(ts: TrainingSet, model: RegressionModel) -> tuple:
    """``(||X~'(X~W - Y) + lam I~ W||, ||X~'Y||)`` in Frobenius norm, evaluated in extended precision."""
    Xt = design_matrix(ts.X).astype(np.longdouble)
    W = model.weights.astype(np.longdouble)
    Y = ts.Y.astype(np.longdouble)
    r = Xt.T @ (Xt @ W - Y) + np.longdouble(model.lam) * penalty_diagonal(Xt.shape[1])[:, None] * W
    return float(np.sqrt(np.sum(r * r))), float(np.sqrt(np.sum((Xt.T @ Y) ** 2)))


def predict(model: RegressionModel, x) -> np.ndarray:
    """Raw affine prediction; never clamped."""
    x = np.asarray(x, dtype=float)
    return model.weights[0] + x @ model.weights[1:]


def present(prediction) -> np.ndarray:
    """Clamp an absolute-mode prediction to the rating scale for display."""
    return np.clip(np.asarray(prediction, dtype=float), MIN_RATING, MAX_RATING)


def evaluate_holdout(ts: TrainingSet, lam: float = DEFAULT_LAMBDA, fraction: float = 0.2,
                     seed: int = 0) -> np.ndarray:
    """Mean absolute error per emotion on a seeded random holdout split."""
    if not 0 < fraction < 1:
        raise ValueError("holdout fraction must lie strictly between 0 and 1")
    n = len(ts)
    n_test = max(1, int(round(n * fraction)))
    if n - n_test < 1:
        raise ValueError("holdout leaves no training rows")
    order = np.random.default_rng(seed).permutation(n)
    test, fit = np.sort(order[:n_test]), np.sort(order[n_test:])
    model = train(ts.subset(fit), lam)
    held = ts.subset(test)
    return np.mean(np.abs(predict(model, held.X) - held.Y), axis=0)


# -- dataset construction -----------------------------------------------------

def _segment_mean(aggregates, segment_id, label) -> np.ndarray:
    try:
        return np.array(aggregates[segment_id].mean, dtype=float)
    except KeyError:
        raise EmptySegment(f"{label}: no aggregated ratings for segment {segment_id}") from None


def build_absolute_dataset(items: Sequence) -> TrainingSet:
    """``items`` are ``(score, aggregates)`` or ``(score, aggregates, score_id)``."""
    X, Y, prov = [], [], []
    for n, item in enumerate(items):
        score, aggregates = item[0], item[1]
        score_id = item[2] if len(item) > 2 else score.title or str(n)
        for seg in segment_score(score):
            X.append(featurize(score, seg))
            Y.append(_segment_mean(aggregates, seg.id, score_id))
            prov.append((score_id, seg.id))
    if not X:
        raise EmptySegment("no segments to build a dataset from")
    return TrainingSet(Mode.ABSOLUTE, np.array(X), np.array(Y), tuple(prov))


def build_delta_dataset(pairs: Sequence) -> TrainingSet:
    """One row per segment: interpretation minus original, for features and mean ratings.

    ``pairs`` are ``(original, interpretation, original_aggregates,
    interpretation_aggregates)`` with an optional fifth ``score_id``.
    """
    X, Y, base, prov = [], [], [], []
    for n, pair in enumerate(pairs):
        original, interpretation, agg_o, agg_i = pair[:4]
        score_id = pair[4] if len(pair) > 4 else original.title or str(n)
        diff_scores(original, interpretation)
        seg_o, seg_i = segment_score(original), segment_score(interpretation)
        bounds = lambda segs: [(s.movement_index, s.start_measure, s.end_measure) for s in segs]
        if bounds(seg_o) != bounds(seg_i):
            raise SegmentationMismatch(f"{score_id}: original and interpretation segment differently")
        for so, si in zip(seg_o, seg_i):
            fo, fi = featurize(original, so), featurize(interpretation, si)
            X.append(fi - fo)
            Y.append(_segment_mean(agg_i, si.id, score_id) - _segment_mean(agg_o, so.id, score_id))
            base.append(fo)
            prov.append((score_id, so.id))
    if not X:
        raise EmptySegment("no segments to build a dataset from")
    return TrainingSet(Mode.DELTA, np.array(X), np.array(Y), tuple(prov), np.array(base))


# -- maestro-model/1 ----------------------------------------------------------

def save_model(model: RegressionModel) -> bytes:
    return canonical.dumps({
        "version": MODEL_VERSION,
        "mode": model.mode.value,
        "lambda": float(model.lam),
        "n_samples": model.n_samples,
        "feature_order": list(model.feature_order),
        "emotion_order": list(model.emotion_order),
        "weights": [[float(v) for v in row] for row in model.weights],
    })


def _real_matrix(obj, key, rows, cols) -> np.ndarray:
    raw = get_list(obj, key)
    if len(raw) != rows:
        raise SchemaError(key, f"expected {rows} rows, got {len(raw)}")
    out = np.empty((rows, cols))
    for i, row in enumerate(raw):
        if not isinstance(row, list) or len(row) != cols:
            raise SchemaError(f"{key}[{i}]", f"expected {cols} values")
        for j, v in enumerate(row):
            out[i, j] = canonical.as_real(v, f"{key}[{i}][{j}]")
    return out


def load_model(data) -> RegressionModel:
    doc = canonical.loads(data, MODEL_VERSION)
    check_keys(doc, "", ("version", "mode", "lambda", "n_samples", "feature_order", "emotion_order", "weights"))
    try:
        mode = Mode(get_str(doc, "mode"))
    except ValueError:
        raise SchemaError("mode", f"unknown mode {doc['mode']!r}") from None
    lam = canonical.get_real(doc, "lambda")
    if lam < 0:
        raise SchemaError("lambda", "must be non-negative")
    if get_list(doc, "feature_order") != list(FEATURE_NAMES):
        raise SchemaError("feature_order", "does not match this version's feature order")
    if get_list(doc, "emotion_order") != list(EMOTION_NAMES):
        raise SchemaError("emotion_order", "does not match this version's emotion order")
    weights = _real_matrix(doc, "weights", N_FEATURES + 1, N_EMOTIONS)
    return RegressionModel(weights, lam, mode, get_int(doc, "n_samples", "", 0))


# -- maestro-dataset/1 --------------------------------------------------------

def write_dataset(ts: TrainingSet) -> bytes:
    rows = []
    for i in range(len(ts)):
        score_id, segment_id = ts.provenance[i]
        rows.append({
            "score": str(score_id),
            "segment": int(segment_id),
            "x": [float(v) for v in ts.X[i]],
            "y": [float(v) for v in ts.Y[i]],
            "base": None if ts.base_features is None else [float(v) for v in ts.base_features[i]],
        })
    return canonical.dumps({
        "version": DATASET_VERSION,
        "mode": ts.mode.value,
        "feature_order": list(FEATURE_NAMES),
        "emotion_order": list(EMOTION_NAMES),
        "rows": rows,
    })


def parse_dataset(data) -> TrainingSet:
    doc = canonical.loads(data, DATASET_VERSION)
    check_keys(doc, "", ("version", "mode", "feature_order", "emotion_order", "rows"))
    try:
        mode = Mode(get_str(doc, "mode"))
    except ValueError:
        raise SchemaError("mode", f"unknown mode {doc['mode']!r}") from None
    if get_list(doc, "feature_order") != list(FEATURE_NAMES) or get_list(doc, "emotion_order") != list(EMOTION_NAMES):
        raise SchemaError("feature_order", "feature or emotion order does not match this version")
    X, Y, base, prov = [], [], [], []
    for i, row in enumerate(get_list(doc, "rows")):
        path = f"rows[{i}]"
        check_keys(row, path, ("score", "segment", "x", "y", "base"))
        wrapped = {"x": [get_list(row, "x", path)], "y": [get_list(row, "y", path)]}
        X.append(_real_matrix(wrapped, "x", 1, N_FEATURES)[0])
        Y.append(_real_matrix(wrapped, "y", 1, N_EMOTIONS)[0])
        if row["base"] is not None:
            base.append(_real_matrix({"base": [row["base"]]}, "base", 1, N_FEATURES)[0])
        prov.append((get_str(row, "score", path), get_int(row, "segment", path, 0)))
    if not X:
        raise SchemaError("rows", "dataset is empty")
    if base and len(base) != len(X):
        raise SchemaError("rows", "base features must be given for all rows or none")
    try:
        return TrainingSet(mode, np.array(X), np.array(Y), tuple(prov), np.array(base) if base else None)
    except ValueError as exc:
        raise SchemaError("rows", str(exc)) from None
