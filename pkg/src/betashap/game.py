"""Utility functions ``U(S)`` over subsets of a valued dataset.

A *game* is anything with ``n``, ``ids`` and ``evaluate(members)`` where
``members`` is a boolean matrix with one row per subset and one column per
valued point (column order = ``ids`` order). Two games are provided:

* :class:`UtilityGame` trains a model on each subset and scores it on a
  validation set, with a transparent cache.
* :class:`TableGame` looks utilities up in a dense table indexed by bitmask,
  which is what the axiom and oracle tests use.

Training is deterministic. Logistic fits run as a batch of independent
Newton problems; each problem's arithmetic does not depend on which other
problems share its batch, so cached, uncached, serial and threaded
evaluation all return bit-identical utilities.
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .errors import IncompatibleMetricError, InvalidParameterError

__all__ = [
    "ConstantModel",
    "LogisticModel",
    "TableGame",
    "TrainingConfig",
    "UtilityCache",
    "UtilityGame",
    "UtilitySpec",
    "evaluate_utility",
    "fit_logistic_batch",
    "predict_accuracy",
    "train_logistic",
]

MODELS = ("logistic-regression", "linear-regression", "constant-predictor-only")
METRICS = ("accuracy", "negative-mse")
_CHUNK = 2048


@dataclass(frozen=True)
class TrainingConfig:
    reg: float = 1.0
    max_iter: int = 100
    tol: float = 1e-8

    def __post_init__(self):
        if not self.reg >= 0:
            raise InvalidParameterError("regularization strength must be nonnegative")
        if self.max_iter < 1:
            raise InvalidParameterError("max_iter must be positive")


@dataclass(frozen=True, eq=False)
class UtilitySpec:
    """Model, metric and validation set that together define ``U``."""

    model: str
    metric: str
    validation: Dataset
    training: TrainingConfig = field(default_factory=TrainingConfig)

    def __post_init__(self):
        if self.model not in MODELS:
            raise InvalidParameterError(f"unknown model {self.model!r}")
        if self.metric not in METRICS:
            raise InvalidParameterError(f"unknown metric {self.metric!r}")
        if self.validation.n == 0:
            raise InvalidParameterError("validation set is empty")
        want = "binary" if self.metric == "accuracy" else "real"
        if self.validation.label_kind != want and not (
            self.metric == "negative-mse" and self.validation.label_kind == "binary"
        ):
            raise IncompatibleMetricError(
                f"metric {self.metric} needs {want} labels, validation has {self.validation.label_kind}"
            )
        if self.model == "logistic-regression" and self.metric != "accuracy":
            raise IncompatibleMetricError("logistic regression is scored by accuracy")
        if self.model == "linear-regression" and self.metric != "negative-mse":
            raise IncompatibleMetricError("linear regression is scored by negative-mse")

    def check_data(self, data):
        if self.metric == "accuracy" and data.label_kind != "binary":
            raise IncompatibleMetricError("accuracy needs binary training labels")
        if data.d != self.validation.d:
            raise InvalidParameterError(
                f"training dimension {data.d} != validation dimension {self.validation.d}"
            )

    def to_dict(self):
        return {
            "model": self.model,
            "metric": self.metric,
            "validation_n": self.validation.n,
            "reg": self.training.reg,
            "max_iter": self.training.max_iter,
            "tol": self.training.tol,
        }


# --------------------------------------------------------------------------
# models

@dataclass(frozen=True)
class LogisticModel:
    coef: np.ndarray
    intercept: float
    converged: bool = True
    iterations: int = 0

    def predict_proba(self, X):
        with np.errstate(over="ignore"):
            return 1.0 / (1.0 + np.exp(-(X @ self.coef + self.intercept)))


@dataclass(frozen=True)
class ConstantModel:
    """Predicts the same value (a class or a real) for every input."""

    value: float

    def predict_proba(self, X):
        return np.full(X.shape[0], float(self.value))


def predict_accuracy(model, validation):
    """Fraction of validation points whose thresholded prediction matches.

    Probabilities of exactly 0.5 are classified as 1.
    """
    pred = (model.predict_proba(validation.X) >= 0.5).astype(float)
    return float(np.count_nonzero(pred == validation.y)) / validation.n


def _augment(X):
    return np.hstack([X, np.ones((X.shape[0], 1))])


def fit_logistic_batch(Xa, y, weights, config):
    """Independent L2-regularized logistic fits by full-batch Newton (IRLS).

    Parameters
    ----------
    Xa : (N, p) array
        Design matrix whose last column is the intercept column of ones.
    y : (N,) array
        Binary labels.
    weights : (m, N) array
        Per-problem sample weights; zero excludes a point.
    config : TrainingConfig

    Returns
    -------
    theta : (m, p) array
        Coefficients followed by the intercept (unpenalized).
    converged : (m,) bool array
    iterations : (m,) int array
    """
    m = weights.shape[0]
    p = Xa.shape[1]
    pen = np.ones(p)
    pen[-1] = 0.0
    reg_diag = config.reg * np.diag(pen)
    # per-sample outer products, upper triangle only; a two-operand einsum over
    # them is row-wise independent of the batch (BLAS matmul is not)
    iu, ju = np.triu_indices(p)
    outer = Xa[:, iu] * Xa[:, ju]
    theta = np.zeros((m, p))
    converged = np.zeros(m, dtype=bool)
    iterations = np.full(m, config.max_iter, dtype=np.int64)
    active = np.arange(m)
    for it in range(config.max_iter + 1):
        if active.size == 0:
            break
        s = weights[active]
        t = theta[active]
        z = np.einsum("kp,np->kn", t, Xa)
        with np.errstate(over="ignore"):
            prob = 1.0 / (1.0 + np.exp(-z))
        grad = np.einsum("kn,np->kp", s * (prob - y), Xa) + config.reg * pen * t
        gnorm = np.sqrt(np.einsum("kp,kp->k", grad, grad))
        done = gnorm <= config.tol
        converged[active[done]] = True
        iterations[active[done]] = it
        if it == config.max_iter:
            break
        keep = ~done
        active, s, prob, grad, t = active[keep], s[keep], prob[keep], grad[keep], t[keep]
        if active.size == 0:
            break
        upper = np.einsum("kn,nq->kq", s * prob * (1.0 - prob), outer)
        hess = np.empty((active.size, p, p))
        hess[:, iu, ju] = upper
        hess[:, ju, iu] = upper
        hess += reg_diag
        theta[active] = t - _solve_rows(hess, grad)
    return theta, converged, iterations


def _solve_rows(H, g):
    try:
        return np.linalg.solve(H, g[..., None])[..., 0]
    except np.linalg.LinAlgError:
        out = np.empty_like(g)
        for k in range(H.shape[0]):
            try:
                out[k] = np.linalg.solve(H[k], g[k])
            except np.linalg.LinAlgError:
                out[k] = np.linalg.lstsq(H[k], g[k], rcond=None)[0]
        return out


def train_logistic(X, y, config=None, sample_weight=None):
    """Fit one regularized logistic regression; returns a :class:`LogisticModel`.

    Both classes must be present. Non-convergence within ``max_iter`` is
    reported through ``model.converged``; the parameters are still usable.
    """
    config = config or TrainingConfig()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if not (np.any(y == 1) and np.any(y == 0)):
        raise InvalidParameterError("logistic training needs both classes present")
    w = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    theta, conv, iters = fit_logistic_batch(_augment(X), y, w[None, :], config)
    return LogisticModel(theta[0, :-1].copy(), float(theta[0, -1]), bool(conv[0]), int(iters[0]))


def _fit_ridge_batch(Xa, y, weights, reg):
    p = Xa.shape[1]
    pen = np.ones(p)
    pen[-1] = 0.0
    A = np.einsum("kn,np,nq->kpq", weights, Xa, Xa) + reg * np.diag(pen)
    b = np.einsum("kn,n,np->kp", weights, y, Xa)
    return _solve_rows(A, b)


# --------------------------------------------------------------------------
# cache

class UtilityCache:
    """Subset-key to utility map with serialized writes.

    Keys are the packed membership bits of a subset (``np.packbits`` over the
    valued points in id order), which covers any ``n``.
    """

    def __init__(self):
        self._data = {}
        self._lock = threading.Lock()

    def __len__(self):
        return len(self._data)

    def __contains__(self, key):
        return key in self._data

    def get(self, key, default=None):
        return self._data.get(key, default)

    def put_many(self, items):
        with self._lock:
            for k, v in items:
                self._data.setdefault(k, v)


def _row_keys(members):
    packed = np.packbits(members, axis=1)
    return [row.tobytes() for row in packed]


# --------------------------------------------------------------------------
# games

class UtilityGame:
    """``U(S)`` = validation metric of a model trained on ``S``.

    The empty set scores the best constant predictor for the validation
    labels: the majority class (ties -> 1) for accuracy, the mean for
    negative MSE. A logistic-regression subset with one class present scores
    the same, since there is nothing to fit.

    Parameters
    ----------
    data : Dataset
        The valued points.
    spec : UtilitySpec
    cache : UtilityCache, optional
        Pass ``None`` for a fresh cache or ``False`` to disable caching.
    threads : int
        Worker threads used to train cache misses.
    """

    def __init__(self, data, spec, cache=None, threads=1):
        spec.check_data(data)
        self.data = data
        self.spec = spec
        if cache is None:
            cache = UtilityCache()
        self.cache = None if cache is False else cache
        self.threads = max(1, int(threads))
        self.calls = 0
        self.fits = 0
        self.nonconverged = 0
        self._Xa = _augment(data.X)
        self._val_Xa = _augment(spec.validation.X)
        self._counter_lock = threading.Lock()
        yv = spec.validation.y
        if spec.metric == "accuracy":
            self._empty_value = float(np.count_nonzero(yv == (1.0 if 2 * yv.sum() >= len(yv) else 0.0))) / len(yv)
        else:
            self._empty_value = -float(np.mean((yv - yv.mean()) ** 2))

    @property
    def n(self):
        return self.data.n

    @property
    def ids(self):
        return self.data.ids

    @property
    def unique_evaluations(self):
        return len(self.cache) if self.cache is not None else self.fits

    def evaluate(self, members):
        members = np.asarray(members, dtype=bool)
        if members.ndim == 1:
            members = members[None, :]
        if members.shape[1] != self.n:
            raise InvalidParameterError("membership rows must have one column per valued point")
        with self._counter_lock:
            self.calls += members.shape[0]
        if self.cache is None:
            return self._compute(members)
        keys = _row_keys(members)
        out = np.empty(members.shape[0])
        missing = {}
        for r, k in enumerate(keys):
            v = self.cache.get(k)
            if v is None:
                missing.setdefault(k, []).append(r)
            else:
                out[r] = v
        if missing:
            rows = [rs[0] for rs in missing.values()]
            vals = self._compute(members[rows])
            self.cache.put_many(zip(missing.keys(), vals.tolist()))
            for v, rs in zip(vals, missing.values()):
                out[rs] = v
        return out

    def _compute(self, members):
        chunks = [members[i:i + _CHUNK] for i in range(0, members.shape[0], _CHUNK)]
        if self.threads > 1 and len(chunks) > 1:
            with ThreadPoolExecutor(self.threads) as ex:
                parts = list(ex.map(self._compute_chunk, chunks))
        else:
            parts = [self._compute_chunk(c) for c in chunks]
        return np.concatenate(parts) if parts else np.empty(0)

    def _compute_chunk(self, members):
        spec = self.spec
        yv = spec.validation.y
        y = self.data.y
        w = members.astype(float)
        size = w.sum(axis=1)
        out = np.empty(members.shape[0])
        empty = size == 0
        out[empty] = self._empty_value
        nonempty = ~empty

        if spec.metric == "accuracy":
            ones = np.einsum("kn,n->k", w, y)
            if spec.model == "constant-predictor-only":
                # the model itself: predict the subset's majority class (ties -> 1)
                single = nonempty
                cls = (2 * ones[single] >= size[single]).astype(float)
                out[single] = (cls[:, None] == yv[None, :]).sum(axis=1) / len(yv)
            else:
                # one class present: nothing to fit, fall back to U(empty)
                single = nonempty & ((ones == 0) | (ones == size))
                out[single] = self._empty_value
            train = nonempty & ~single
            if np.any(train):
                theta, conv, _ = fit_logistic_batch(self._Xa, y, w[train], spec.training)
                z = np.einsum("kp,vp->kv", theta, self._val_Xa)
                with np.errstate(over="ignore"):
                    prob = 1.0 / (1.0 + np.exp(-z))
                pred = (prob >= 0.5).astype(float)
                out[train] = np.count_nonzero(pred == yv[None, :], axis=1) / len(yv)
                with self._counter_lock:
                    self.fits += int(train.sum())
                    self.nonconverged += int((~conv).sum())
        else:
            if np.any(nonempty):
                if spec.model == "constant-predictor-only":
                    mean = np.einsum("kn,n->k", w[nonempty], y) / size[nonempty]
                    pred = np.broadcast_to(mean[:, None], (mean.shape[0], len(yv)))
                else:
                    theta = _fit_ridge_batch(self._Xa, y, w[nonempty], spec.training.reg)
                    pred = np.einsum("kp,vp->kv", theta, self._val_Xa)
                    with self._counter_lock:
                        self.fits += int(nonempty.sum())
                out[nonempty] = -np.mean((pred - yv[None, :]) ** 2, axis=1)
        return out

    def members_of(self, ids):
        row = np.zeros(self.n, dtype=bool)
        row[self.data.positions_of(ids)] = True
        return row


class TableGame:
    """A game given by a dense utility table.

    ``table[mask]`` is ``U`` of the subset whose bit ``i`` is set iff point
    ``i`` (in ``ids`` order) is a member.
    """

    def __init__(self, table, ids=None):
        table = np.asarray(table, dtype=float)
        n = int(round(np.log2(table.shape[0]))) if table.ndim == 1 and table.shape[0] else -1
        if n < 0 or table.shape != (1 << n,) or n > 62:
            raise InvalidParameterError("table length must be 2**n with n <= 62")
        self.table = table
        self.ids = np.arange(n, dtype=np.int64) if ids is None else np.asarray(ids, dtype=np.int64)
        if self.ids.shape != (n,):
            raise InvalidParameterError("ids must have one entry per player")
        self.calls = 0
        self._pow = (np.int64(1) << np.arange(n, dtype=np.int64))

    @property
    def n(self):
        return self.ids.shape[0]

    @property
    def unique_evaluations(self):
        return self.table.shape[0]

    def evaluate(self, members):
        members = np.asarray(members, dtype=bool)
        if members.ndim == 1:
            members = members[None, :]
        self.calls += members.shape[0]
        return self.table[members.astype(np.int64) @ self._pow]

    @classmethod
    def from_function(cls, n, fn, ids=None):
        """Tabulate ``fn(frozenset_of_positions)`` over all ``2**n`` subsets."""
        table = np.empty(1 << n)
        for mask in range(1 << n):
            table[mask] = fn(frozenset(i for i in range(n) if mask >> i & 1))
        return cls(table, ids)


def evaluate_utility(spec, subset, data, cache=None):
    """``U`` of the subset of ``data`` with the given point ids."""
    game = UtilityGame(data, spec, cache=False if cache is None else cache)
    return float(game.evaluate(game.members_of(subset))[0])
