"""Datasets, synthetic generators, label noise and CSV/JSON I/O.

Random draws are reproducible across implementations: uniforms come from a
PCG64 stream keyed by ``(seed, kind)`` and standard normals are produced by
the Box-Muller transform applied to consecutive uniform pairs,
``r = sqrt(-2 log(1 - u1))``, ``z0 = r cos(2 pi u2)``, ``z1 = r sin(2 pi u2)``.
Draw order for each generator is documented in its docstring.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from ._seeding import rng_for
from .errors import InvalidParameterError, ParseError, SchemaMismatchError

__all__ = [
    "COEFFICIENTS",
    "Dataset",
    "NoiseRecord",
    "SYNTHETIC_KINDS",
    "apply_noise",
    "box_muller",
    "class_probability",
    "flip_labels",
    "gen_gaussian_classification",
    "gen_gaussian_regression",
    "gen_snr_datasets",
    "generate",
    "generate_splits",
    "load_csv",
    "round_half_up",
    "save_csv",
    "snr_regression_coefficients",
]

SYNTHETIC_KINDS = (
    "gaussian-classification",
    "gaussian-regression",
    "snr-regression",
    "snr-classification",
)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Points with stable integer ids, a feature matrix and labels.

    ``label_kind`` is ``"binary"`` (labels in {0, 1}) or ``"real"``.
    """

    ids: np.ndarray
    X: np.ndarray
    y: np.ndarray
    label_kind: str = "binary"

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=np.int64)
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if X.ndim != 2:
            raise InvalidParameterError("features must be a 2-d array")
        if ids.shape != (X.shape[0],) or y.shape != (X.shape[0],):
            raise InvalidParameterError("ids, features and labels disagree in length")
        if len(np.unique(ids)) != len(ids):
            raise InvalidParameterError("point ids must be unique")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise InvalidParameterError("dataset contains non-finite values")
        if self.label_kind not in ("binary", "real"):
            raise InvalidParameterError(f"unknown label kind {self.label_kind!r}")
        if self.label_kind == "binary" and not np.all((y == 0) | (y == 1)):
            raise InvalidParameterError("binary labels must be 0 or 1")
        for a in (ids, X, y):
            a.setflags(write=False)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]

    def subset(self, positions):
        positions = np.asarray(positions, dtype=np.int64)
        return Dataset(self.ids[positions], self.X[positions], self.y[positions], self.label_kind)

    def with_labels(self, y):
        return Dataset(self.ids, self.X, y, self.label_kind)

    def positions_of(self, ids):
        lookup = {int(i): k for k, i in enumerate(self.ids)}
        try:
            return np.array([lookup[int(i)] for i in ids], dtype=np.int64)
        except KeyError as exc:
            raise InvalidParameterError(f"unknown point id {exc.args[0]}") from None

    def to_dict(self):
        return {
            "d": self.d,
            "label_kind": self.label_kind,
            "ids": self.ids.tolist(),
            "features": self.X.tolist(),
            "labels": self.y.tolist(),
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d):
        X = np.array(d["features"], dtype=float).reshape(len(d["ids"]), d["d"])
        return cls(np.array(d["ids"]), X, np.array(d["labels"]), d.get("label_kind", "binary"))


# --------------------------------------------------------------------------
# random draws

def box_muller(rng, size):
    """Standard normals of shape ``size`` from ``rng.random`` via Box-Muller."""
    shape = (size,) if isinstance(size, (int, np.integer)) else tuple(size)
    m = int(np.prod(shape))
    u = rng.random(2 * ((m + 1) // 2))
    r = np.sqrt(-2.0 * np.log1p(-u[0::2]))
    theta = 2.0 * np.pi * u[1::2]
    z = np.empty(u.shape[0])
    z[0::2] = r * np.cos(theta)
    z[1::2] = r * np.sin(theta)
    return z[:m].reshape(shape)


def _sigmoid(t):
    return 1.0 / (1.0 + np.exp(-t))


def _check_size(n):
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise InvalidParameterError(f"n must be a positive integer, got {n!r}")


COEFFICIENTS = {
    "gaussian-classification": (2.0, 1.0, 0.0, 0.0, 0.0),
    "snr-classification": (5.0, 0.0, 0.0),
}


def class_probability(kind, X):
    """``P(y = 1 | x)`` of a synthetic classification kind."""
    try:
        beta = np.asarray(COEFFICIENTS[kind])
    except KeyError:
        raise InvalidParameterError(f"{kind!r} is not a classification kind") from None
    return _sigmoid(np.asarray(X, dtype=float) @ beta)


def _bernoulli_logit(kind, n, seed, beta):
    _check_size(n)
    rng = rng_for(seed, kind)
    X = box_muller(rng, (n, len(beta)))
    u = rng.random(n)
    y = (u < _sigmoid(X @ np.asarray(beta, dtype=float))).astype(float)
    return Dataset(np.arange(n), X, y, "binary")


def gen_gaussian_classification(n, seed):
    """5-d standard Gaussian inputs, logistic labels with coefficients (2,1,0,0,0).

    Draw order: ``n*5`` normals (row-major), then ``n`` uniforms for labels.
    """
    return _bernoulli_logit("gaussian-classification", n, seed, COEFFICIENTS["gaussian-classification"])


def gen_gaussian_regression(n, seed):
    """5-d Gaussian inputs, ``y = x . (2,1,0,0,0) + eps`` with unit noise."""
    _check_size(n)
    rng = rng_for(seed, "gaussian-regression")
    X = box_muller(rng, (n, 5))
    eps = box_muller(rng, n)
    y = X @ np.array([2.0, 1.0, 0.0, 0.0, 0.0]) + eps
    return Dataset(np.arange(n), X, y, "real")


def gen_snr_datasets(kind, n, seed):
    """Generators behind the signal-to-noise scans.

    ``snr-regression``: d=10, coefficients drawn once from N(0, I), then
    ``n*10`` input normals, then ``n`` noise normals.
    ``snr-classification``: d=3, logistic labels with coefficients (5,0,0).
    """
    if kind == "snr-classification":
        return _bernoulli_logit(kind, n, seed, COEFFICIENTS[kind])
    if kind == "snr-regression":
        _check_size(n)
        rng = rng_for(seed, kind)
        coef = box_muller(rng, 10)
        X = box_muller(rng, (n, 10))
        eps = box_muller(rng, n)
        return Dataset(np.arange(n), X, X @ coef + eps, "real")
    raise InvalidParameterError(f"unknown snr dataset kind {kind!r}")


def snr_regression_coefficients(seed):
    """The coefficient vector used by ``gen_snr_datasets("snr-regression", ., seed)``."""
    return box_muller(rng_for(seed, "snr-regression"), 10)


def generate(kind, n, seed):
    if kind == "gaussian-classification":
        return gen_gaussian_classification(n, seed)
    if kind == "gaussian-regression":
        return gen_gaussian_regression(n, seed)
    if kind in ("snr-regression", "snr-classification"):
        return gen_snr_datasets(kind, n, seed)
    raise InvalidParameterError(f"unknown dataset kind {kind!r}; choose from {SYNTHETIC_KINDS}")


def generate_splits(kind, sizes, seed):
    """One draw of ``sum(sizes)`` points cut into consecutive splits.

    All splits share the generating coefficients. Each split gets ids
    ``0..size-1``.
    """
    sizes = [int(s) for s in sizes]
    if any(s < 0 for s in sizes) or sum(sizes) < 1:
        raise InvalidParameterError("split sizes must be nonnegative with a positive total")
    full = generate(kind, sum(sizes), seed)
    out, start = [], 0
    for s in sizes:
        part = full.subset(np.arange(start, start + s))
        out.append(Dataset(np.arange(s), part.X, part.y, part.label_kind))
        start += s
    return out


# --------------------------------------------------------------------------
# label noise

@dataclass(frozen=True)
class NoiseRecord:
    flipped_ids: tuple
    fraction: float
    n: int

    def to_dict(self):
        return {"fraction": self.fraction, "n": self.n, "flipped_ids": list(self.flipped_ids)}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(int(i) for i in d["flipped_ids"]), float(d["fraction"]), int(d["n"]))


def round_half_up(x):
    return int(math.floor(x + 0.5))


def flip_labels(data, fraction, seed):
    """Invert the binary labels of ``round_half_up(fraction * n)`` random points."""
    if data.label_kind != "binary":
        raise InvalidParameterError("label flipping needs binary labels")
    if not (0 <= fraction < 1):
        raise InvalidParameterError(f"fraction must lie in [0, 1), got {fraction!r}")
    k = round_half_up(fraction * data.n)
    rng = rng_for(seed, "flip-labels")
    pos = np.sort(rng.choice(data.n, size=k, replace=False)) if k else np.array([], dtype=np.int64)
    record = NoiseRecord(tuple(int(i) for i in data.ids[pos]), float(fraction), data.n)
    return apply_noise(data, record), record


def apply_noise(data, record):
    """Invert the labels of the ids in ``record``; applying twice is a no-op."""
    y = data.y.copy()
    pos = data.positions_of(record.flipped_ids)
    y[pos] = 1.0 - y[pos]
    return data.with_labels(y)


# --------------------------------------------------------------------------
# CSV

def save_csv(data, path, label="y"):
    names = [f"x{k + 1}" for k in range(data.d)] + [label]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row, lab in zip(data.X, data.y):
            w.writerow([repr(float(v)) for v in row] + [repr(float(lab))])


def load_csv(path, label="y", label_kind="auto"):
    """Read a headered CSV; ``label`` names the label column, the rest are features.

    Ids are assigned by row order starting at 0. ``label_kind="auto"`` picks
    ``binary`` when every label is 0 or 1.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file, header row required", row=1) from None
        header = [h.strip() for h in header]
        if label not in header:
            raise SchemaMismatchError(f"label column {label!r} not in header {header}")
        li = header.index(label)
        feat_idx = [k for k in range(len(header)) if k != li]
        if not feat_idx:
            raise SchemaMismatchError("no feature columns")
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(rec)}", row=lineno)
            vals = []
            for k, cell in enumerate(rec):
                try:
                    v = float(cell)
                except ValueError:
                    raise ParseError(f"not a number: {cell!r}", row=lineno, column=header[k]) from None
                if not math.isfinite(v):
                    raise ParseError(f"non-finite value {cell!r}", row=lineno, column=header[k])
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise ParseError("no data rows")
    arr = np.array(rows)
    y = arr[:, li]
    if label_kind == "auto":
        label_kind = "binary" if np.all((y == 0) | (y == 1)) else "real"
    return Dataset(np.arange(len(rows)), arr[:, feat_idx], y, label_kind)
