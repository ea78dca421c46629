"""Classical duration predictors: global mean, category mean, hashed bag-of-IDs with kNN or ridge."""

from __future__ import annotations

import re
import zlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .alert_model import MACRO_LABELS, Event

HASH_DIMS = (32, 64, 128, 256, 512)

_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")


def tokenize(text: str) -> list[int]:
    """Lowercase, split on non-alphanumerics, map each token to its CRC-32 (a fixed 32-bit ID)."""
    return [zlib.crc32(tok.encode("utf-8")) for tok in _TOKEN_SPLIT.split(text.lower()) if tok]


@dataclass(frozen=True)
class HashedFeatures:
    dim: int
    vector: np.ndarray


def hash_ids(ids: Sequence[int], d: int) -> HashedFeatures:
    """Count token IDs per bucket ``id mod d`` and l2-normalize (zero vector if no IDs)."""
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    counts = np.bincount(np.asarray(ids, dtype=np.int64) % d, minlength=d).astype(float)
    norm = np.linalg.norm(counts)
    return HashedFeatures(d, counts / norm if norm > 0 else counts)


def tokenize_and_hash(text: str, d: int) -> HashedFeatures:
    return hash_ids(tokenize(text), d)


def hashed_matrix(texts: Sequence[str], d: int) -> np.ndarray:
    return np.vstack([tokenize_and_hash(t, d).vector for t in texts]) if texts else np.zeros((0, d))


def m1_features(event: Event, d: int = 64) -> np.ndarray:
    """Stand-in for frozen-LLM features: one-hot macro category, alert count, hashed first alert."""
    onehot = np.zeros(len(MACRO_LABELS))
    onehot[MACRO_LABELS.index(event.macro_category)] = 1.0
    visible = event.visible_alerts()
    return np.concatenate([onehot, [float(len(visible))], tokenize_and_hash(visible[0].text, d).vector])


class GlobalMean:
    kind = "global_mean"

    def fit(self, y) -> "GlobalMean":
        y = np.asarray(y, dtype=float)
        if y.size == 0:
            raise ValueError("empty training set")
        self.mean_ = float(y.mean())
        return self

    def predict(self, n_or_X) -> np.ndarray:
        n = n_or_X if isinstance(n_or_X, int) else len(n_or_X)
        return np.full(n, max(self.mean_, 0.0))


class CategoryMean:
    """Per-category training mean, falling back to the global mean for unseen categories."""

    kind = "category_mean"

    def fit(self, categories: Sequence[str], y) -> "CategoryMean":
        y = np.asarray(y, dtype=float)
        if y.size == 0:
            raise ValueError("empty training set")
        if len(categories) != y.size:
            raise ValueError("categories and targets differ in length")
        self.global_mean_ = float(y.mean())
        sums: dict[str, list[float]] = {}
        for c, v in zip(categories, y):
            sums.setdefault(c, []).append(v)
        self.means_ = {c: float(np.mean(v)) for c, v in sums.items()}
        return self

    def predict(self, categories: Sequence[str]) -> np.ndarray:
        return np.array([max(self.means_.get(c, self.global_mean_), 0.0) for c in categories])


class KNNRegressor:
    """Mean target of the k nearest training rows (Euclidean); ties go to the lower training index."""

    kind = "knn"

    def __init__(self, k: int = 5, chunk: int = 512):
        if k < 1:
            raise ValueError("k must be >= 1")
        self.k = k
        self.chunk = chunk

    def fit(self, X, y) -> "KNNRegressor":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if X.shape[0] == 0 or X.shape[0] != y.size:
            raise ValueError("X and y must be non-empty and aligned")
        if self.k > X.shape[0]:
            raise ValueError(f"k={self.k} exceeds training size {X.shape[0]}")
        self.X_, self.y_ = X, y
        self.sq_norms_ = np.einsum("ij,ij->i", X, X)
        return self

    def neighbors(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.empty((X.shape[0], self.k), dtype=np.int64)
        for lo in range(0, X.shape[0], self.chunk):
            q = X[lo:lo + self.chunk]
            d2 = np.einsum("ij,ij->i", q, q)[:, None] + self.sq_norms_[None, :] - 2.0 * q @ self.X_.T
            out[lo:lo + self.chunk] = np.argsort(d2, axis=1, kind="stable")[:, : self.k]
        return out

    def predict(self, X) -> np.ndarray:
        return np.maximum(self.y_[self.neighbors(X)].mean(axis=1), 0.0)


class SingularSystemError(np.linalg.LinAlgError):
    pass


class RidgeRegressor:
    """Closed-form ridge with an unpenalized intercept."""

    kind = "ridge"

    def __init__(self, lam: float = 1.0):
        if lam < 0:
            raise ValueError("lambda must be >= 0")
        self.lam = lam

    def fit(self, X, y) -> "RidgeRegressor":
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float)
        if X.shape[0] == 0 or X.shape[0] != y.size:
            raise ValueError("X and y must be non-empty and aligned")
        x_mean = X.mean(axis=0)
        y_mean = y.mean()
        Xc = X - x_mean
        A = Xc.T @ Xc + self.lam * np.eye(X.shape[1])
        if np.linalg.matrix_rank(A) < X.shape[1]:
            raise SingularSystemError("ridge normal equations are singular; use lambda > 0")
        self.coef_ = np.linalg.solve(A, Xc.T @ (y - y_mean))
        self.intercept_ = float(y_mean - x_mean @ self.coef_)
        return self

    def predict_raw(self, X) -> np.ndarray:
        return np.atleast_2d(np.asarray(X, dtype=float)) @ self.coef_ + self.intercept_

    def predict(self, X) -> np.ndarray:
        return np.maximum(self.predict_raw(X), 0.0)


BASELINE_KINDS = ("global-mean", "category-mean", "knn", "ridge")


def fit_predict(
    kind: str,
    train: Sequence[Event],
    test: Sequence[Event],
    d: int = 256,
    k: int = 5,
    lam: float = 1.0,
    category_level: str = "fine",
) -> np.ndarray:
    """Fit ``kind`` on training events and predict test durations (minutes).

    kNN and ridge use hashed features of the text visible at forecast time.
    ``category_level`` ("fine" or "macro") picks the label the category mean keys on.
    """
    y = np.array([e.duration_minutes for e in train])
    if kind == "global-mean":
        return GlobalMean().fit(y).predict(len(test))
    if kind == "category-mean":
        attr = {"fine": "fine_category", "macro": "macro_category"}[category_level]
        model = CategoryMean().fit([getattr(e, attr) for e in train], y)
        return model.predict([getattr(e, attr) for e in test])
    X_tr = hashed_matrix([e.visible_text() for e in train], d)
    X_te = hashed_matrix([e.visible_text() for e in test], d)
    if kind == "knn":
        return KNNRegressor(k).fit(X_tr, y).predict(X_te)
    if kind == "ridge":
        return RidgeRegressor(lam).fit(X_tr, y).predict(X_te)
    raise ValueError(f"unknown baseline kind {kind!r}; expected one of {BASELINE_KINDS}")
