"""Downstream uses of data values and the marginal-contribution scans.

* :func:`detect_noisy` - two-cluster thresholding of values, scored by F1
  against a :class:`~betashap.data.NoiseRecord`.
* :func:`subsample_train_eval` - value-proportional subsampling with an
  inverse-propensity weighted logistic fit.
* :func:`point_curve` - utility along value-ordered removal or addition.
* :func:`snr_scan` - signal-to-noise of the marginal contribution as a
  function of cardinality, over resampled backgrounds.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from ._seeding import derive_seed, rng_for
from .data import Dataset, flip_labels, generate_splits, round_half_up
from .errors import InsufficientDataError, InvalidParameterError
from .game import (
    ConstantModel,
    LogisticModel,
    TrainingConfig,
    UtilityGame,
    UtilitySpec,
    _augment,
    fit_logistic_batch,
    predict_accuracy,
)

__all__ = [
    "CurveResult",
    "DetectionResult",
    "SnrProfile",
    "SubsampleResult",
    "detect_noisy",
    "f1_score",
    "kmeans_1d",
    "point_curve",
    "scan_marginals",
    "snr_scan",
    "subsample_train_eval",
    "value_order",
]


def _dump(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def _num(x):
    return None if x is None or not math.isfinite(x) else float(x)


# --------------------------------------------------------------------------
# noisy label detection

@dataclass(frozen=True)
class DetectionResult:
    selected_ids: tuple
    centers: tuple
    threshold: float
    precision: float
    recall: float
    f1: float
    degenerate: bool = False

    def to_dict(self):
        return {
            "selected_ids": list(self.selected_ids),
            "centers": [_num(c) for c in self.centers],
            "threshold": _num(self.threshold),
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "degenerate": self.degenerate,
        }

    def write_json(self, path):
        _dump(self.to_dict(), path)


def kmeans_1d(values, max_iter=1000):
    """Two-means on a 1-d sample, started from (min, max).

    Returns ``(upper, (low_center, high_center))`` where ``upper`` marks the
    points of the higher cluster. Points equidistant from both centers go to
    the lower cluster.
    """
    v = np.asarray(values, dtype=float)
    lo, hi = float(v.min()), float(v.max())
    if lo == hi:
        raise InvalidParameterError("all values are equal")
    upper = np.abs(v - hi) < np.abs(v - lo)
    for _ in range(max_iter):
        lo, hi = float(v[~upper].mean()), float(v[upper].mean())
        new = np.abs(v - hi) < np.abs(v - lo)
        if np.array_equal(new, upper):
            break
        upper = new
    return upper, (lo, hi)


def f1_score(selected, flipped):
    """Precision, recall and F1 of a selected id set against the flipped ids."""
    selected, flipped = set(selected), set(flipped)
    hit = len(selected & flipped)
    precision = hit / len(selected) if selected else 0.0
    recall = hit / len(flipped) if flipped else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


def detect_noisy(values, record):
    """Flag points valued at or below the mean of the lower 2-means cluster."""
    v = np.asarray(values.values, dtype=float)
    ids = np.asarray(values.ids)
    if v.size < 2:
        raise InsufficientDataError("detection needs at least 2 values")
    if v.min() == v.max():
        return DetectionResult((), (float(v[0]), float(v[0])), float(v[0]), 0.0, 0.0, 0.0, True)
    upper, centers = kmeans_1d(v)
    threshold = float(v[~upper].mean())
    selected = tuple(int(i) for i in ids[v <= threshold])
    p, r, f1 = f1_score(selected, record.flipped_ids)
    return DetectionResult(selected, centers, threshold, p, r, f1)


# --------------------------------------------------------------------------
# subsampling

@dataclass(frozen=True, eq=False)
class SubsampleResult:
    accuracy: float
    sampled_ids: tuple
    importance: np.ndarray
    fit_weights: np.ndarray
    insufficient_positive: bool = False
    converged: bool = True

    def to_dict(self):
        return {
            "accuracy": self.accuracy,
            "sampled_ids": list(self.sampled_ids),
            "fit_weights": self.fit_weights.tolist(),
            "insufficient_positive": self.insufficient_positive,
            "converged": self.converged,
        }

    def write_json(self, path):
        _dump(self.to_dict(), path)


def _weighted_draw(weights, m, rng):
    """``m`` distinct indices, drawn sequentially with probability proportional
    to the remaining weights."""
    rem = np.array(weights, dtype=float)
    picked = []
    for _ in range(m):
        cum = np.cumsum(rem)
        idx = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
        idx = min(idx, len(rem) - 1)
        while rem[idx] == 0:  # guard against landing on a zero at the top edge
            idx -= 1
        picked.append(idx)
        rem[idx] = 0.0
    return np.array(picked, dtype=np.int64)


def subsample_train_eval(data, values, spec, keep=0.25, seed=0):
    """Train on a value-weighted subsample and score on ``spec.validation``.

    Importance is ``max(value, 0)``; the sample of ``round(keep * n)`` points
    is drawn without replacement proportional to it. The logistic fit
    weights each sampled point by its inverse importance, rescaled to mean 1
    over the sample so the regularization strength is comparable to an
    unweighted fit. With constant importance this is exactly uniform
    subsampling with unit weights.

    Returns
    -------
    SubsampleResult
    """
    v = np.asarray(values.values if hasattr(values, "values") else values, dtype=float)
    if v.shape != (data.n,):
        raise InvalidParameterError("one value per training point required")
    lam = np.maximum(v, 0.0)
    if not np.any(lam > 0):
        raise InsufficientDataError("no positive values to sample from")
    rel = lam / lam.max()
    m = round_half_up(keep * data.n)
    if m < 1:
        raise InvalidParameterError("keep fraction selects no points")
    positive = np.flatnonzero(rel > 0)
    short = positive.size < m
    if short:
        pos = positive
    else:
        pos = _weighted_draw(rel, m, rng_for(seed, "subsample"))
    inv = 1.0 / rel[pos]
    w = inv / (inv.sum() / pos.size)
    y = data.y[pos]
    if np.all(y == y[0]):
        model = ConstantModel(float(y[0]))
        converged = True
    else:
        full = np.zeros(data.n)
        full[pos] = w
        theta, conv, it = fit_logistic_batch(_augment(data.X), data.y, full[None, :], spec.training)
        model = LogisticModel(theta[0, :-1], float(theta[0, -1]), bool(conv[0]), int(it[0]))
        converged = bool(conv[0])
    acc = predict_accuracy(model, spec.validation)
    return SubsampleResult(acc, tuple(int(i) for i in data.ids[pos]), lam, w, short, converged)


# --------------------------------------------------------------------------
# point addition / removal

@dataclass(frozen=True, eq=False)
class CurveResult:
    direction: str
    ordering: str
    order_ids: np.ndarray
    utilities: np.ndarray
    relative_area: float
    initial_ids: tuple = ()

    def to_dict(self):
        return {
            "direction": self.direction,
            "ordering": self.ordering,
            "order_ids": self.order_ids.tolist(),
            "initial_ids": list(self.initial_ids),
            "utilities": self.utilities.tolist(),
            "relative_area": self.relative_area,
        }

    def write_json(self, path):
        _dump(self.to_dict(), path)

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "point_id", "utility"])
            for k, u in enumerate(self.utilities):
                pid = "" if k == 0 else int(self.order_ids[k - 1])
                w.writerow([k, pid, repr(float(u))])


def value_order(ids, values, descending=False):
    """Positions sorted by value, ties broken by ascending id."""
    ids = np.asarray(ids)
    v = np.asarray(values, dtype=float)
    return np.lexsort((ids, -v if descending else v))


def point_curve(game, values, direction, steps=None, init_size=10, seed=0, ordering="value"):
    """Utility along a removal or addition trajectory.

    ``remove``: drop points lowest value first and accumulate
    ``U(D minus first k) - U(D)``. ``add``: start from a random subset of
    ``init_size`` points and add points highest value first, accumulating
    ``U(S plus first k) - U(S)``, drawing only from points outside ``S``.
    ``ordering="random"`` replaces the value order with a seeded
    permutation. ``steps`` defaults to ``n // 2`` (fewer if not enough
    points remain to add).
    """
    if direction not in ("add", "remove"):
        raise InvalidParameterError(f"direction must be add or remove, got {direction!r}")
    if ordering not in ("value", "random"):
        raise InvalidParameterError(f"ordering must be value or random, got {ordering!r}")
    n = game.n
    ids = np.asarray(game.ids)
    v = np.asarray(values.values if hasattr(values, "values") else values, dtype=float)
    if v.shape != (n,):
        raise InvalidParameterError("one value per valued point required")
    if hasattr(values, "ids") and not np.array_equal(np.asarray(values.ids), ids):
        raise InvalidParameterError("value ids do not match the game's points")
    initial = ()
    base = np.zeros(n, dtype=bool)
    if direction == "remove":
        base[:] = True
    else:
        if not 0 <= init_size <= n:
            raise InvalidParameterError("init_size out of range")
        start = np.sort(rng_for(seed, "curve-init").choice(n, size=init_size, replace=False))
        base[start] = True
        initial = tuple(int(i) for i in ids[start])
    # candidates: every point for removal, the points outside S for addition
    room = int(np.count_nonzero(base)) if direction == "remove" else n - len(initial)
    steps = min(n // 2, room) if steps is None else int(steps)
    if not 0 <= steps <= room:
        raise InvalidParameterError(f"steps must lie in [0, {room}]")

    if ordering == "random":
        order = rng_for(seed, "curve-order").permutation(n)
    else:
        order = value_order(ids, v, descending=(direction == "add"))
    order = order[base[order] == (direction == "remove")][:steps]

    rows = np.repeat(base[None, :], steps + 1, axis=0)
    for k, pos in enumerate(order, start=1):
        rows[k:, pos] = direction == "add"
    u = game.evaluate(rows)
    area = float(np.sum(u[1:] - u[0]))
    return CurveResult(direction, ordering, ids[order], u, area, initial)


# --------------------------------------------------------------------------
# signal-to-noise scans

@dataclass(frozen=True, eq=False)
class SnrProfile:
    """Marginal-contribution statistics across resampled backgrounds.

    ``estimates[r, g]`` is the repeat-``r`` estimate of the marginal
    contribution at ``grid[g]``; ``zeta[r, g]`` is the sample variance of its
    summands. ``snr`` is ``nan`` where the standard deviation is zero.
    ``zeta_ratio`` is ``zeta_j / (j * zeta_1)`` with ``zeta_1`` estimated at
    subsets of one background point.
    """

    grid: np.ndarray
    estimates: np.ndarray
    zeta: np.ndarray
    zeta_1: float
    meta: dict = field(default_factory=dict)

    @property
    def mean(self):
        return self.estimates.mean(axis=0)

    @property
    def std(self):
        return self.estimates.std(axis=0, ddof=1)

    @property
    def snr(self):
        std = self.std
        out = np.full(std.shape, np.nan)
        ok = std > 0
        out[ok] = np.abs(self.mean[ok]) / std[ok]
        return out

    @property
    def zeta_ratio(self):
        zj = self.zeta.mean(axis=0)
        if not self.zeta_1 > 0:
            return np.full(zj.shape, np.nan)
        return zj / (self.grid * self.zeta_1)

    def to_dict(self):
        return {
            "grid": self.grid.tolist(),
            "mean": [_num(x) for x in self.mean],
            "std": [_num(x) for x in self.std],
            "snr": [_num(x) for x in self.snr],
            "zeta": [_num(x) for x in self.zeta.mean(axis=0)],
            "zeta_1": _num(self.zeta_1),
            "zeta_ratio": [_num(x) for x in self.zeta_ratio],
            "repeats": int(self.estimates.shape[0]),
            **self.meta,
        }

    def write_json(self, path):
        _dump(self.to_dict(), path)

    def write_csv(self, path):
        d = self.to_dict()
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["j", "mean", "std", "snr", "zeta", "zeta_ratio"])
            for row in zip(d["grid"], d["mean"], d["std"], d["snr"], d["zeta"], d["zeta_ratio"]):
                w.writerow([row[0]] + ["" if x is None else repr(x) for x in row[1:]])


def scan_marginals(make_game, n, grid, repeats, samples, seed):
    """Estimate the target's marginal contribution per cardinality per repeat.

    ``make_game(r)`` returns the game of repeat ``r``: ``n`` points where
    position 0 is the fixed target and the rest is that repeat's background.
    For each cardinality ``j`` the estimate averages ``U(S + target) - U(S)``
    over ``samples`` uniform subsets ``S`` of ``j - 1`` background points.
    """
    grid = np.array(sorted({int(j) for j in grid}), dtype=np.int64)
    if grid.size == 0 or grid[0] < 1 or grid[-1] > n:
        raise InvalidParameterError(f"grid values must lie in [1, {n}]")
    if repeats < 2:
        raise InvalidParameterError("at least 2 repeats are needed for a standard deviation")
    if samples < 2:
        raise InvalidParameterError("at least 2 subsets per cardinality are needed")
    levels = np.union1d(grid, [2]) if n >= 2 else grid
    est = np.empty((repeats, levels.size))
    zeta = np.empty((repeats, levels.size))
    for r in range(repeats):
        game = make_game(r)
        if game.n != n:
            raise InvalidParameterError("make_game returned a game of the wrong size")
        blocks = []
        for j in levels:
            rng = rng_for(seed, "snr", r, int(j))
            without = np.zeros((samples, n), dtype=bool)
            for s in range(samples):
                without[s, 1 + rng.choice(n - 1, size=j - 1, replace=False)] = True
            blocks.append(without)
        without = np.concatenate(blocks)
        with_t = without.copy()
        with_t[:, 0] = True
        u = game.evaluate(np.concatenate([with_t, without]))
        diffs = (u[: without.shape[0]] - u[without.shape[0]:]).reshape(levels.size, samples)
        est[r] = diffs.mean(axis=1)
        zeta[r] = diffs.var(axis=1, ddof=1)
    keep = np.isin(levels, grid)
    zeta_1 = float(zeta[:, np.flatnonzero(levels == 2)[0]].mean()) if 2 in levels else float("nan")
    return SnrProfile(grid, est[:, keep], zeta[:, keep], zeta_1)


def snr_scan(kind, n, grid, repeats=50, samples=50, seed=0, n_validation=500,
             flip_target=False, noise_fraction=0.0, training=None, threads=1):
    """Signal-to-noise scan on a synthetic dataset kind.

    One draw per ``seed`` supplies the target point, the validation set and
    ``repeats`` independent backgrounds of ``n - 1`` points. Classification
    kinds use logistic regression scored by accuracy; regression kinds use
    ridge regression scored by negative MSE.

    Parameters
    ----------
    flip_target : bool
        Invert the target's label (clean-versus-mislabeled comparison).
    noise_fraction : float
        Fraction of each background whose labels are inverted.
    """
    if n < 2:
        raise InvalidParameterError("n must be at least 2")
    target, val, pool = generate_splits(kind, [1, n_validation, repeats * (n - 1)], seed)
    binary = target.label_kind == "binary"
    if flip_target:
        if not binary:
            raise InvalidParameterError("flip_target needs binary labels")
        target = target.with_labels(1.0 - target.y)
    if noise_fraction > 0:
        val, _ = flip_labels(val, noise_fraction, derive_seed(seed, "snr-noise", "validation"))
    training = training or TrainingConfig()
    if binary:
        spec = UtilitySpec("logistic-regression", "accuracy", val, training)
    else:
        spec = UtilitySpec("linear-regression", "negative-mse", val, training)

    def make_game(r):
        bg = pool.subset(np.arange(r * (n - 1), (r + 1) * (n - 1)))
        bg = Dataset(np.arange(1, n), bg.X, bg.y, bg.label_kind)
        if noise_fraction > 0:
            bg, _ = flip_labels(bg, noise_fraction, derive_seed(seed, "snr-noise", r))
        X = np.vstack([target.X, bg.X])
        y = np.concatenate([target.y, bg.y])
        return UtilityGame(Dataset(np.arange(n), X, y, target.label_kind), spec, threads=threads)

    prof = scan_marginals(make_game, n, grid, repeats, samples, seed)
    meta = {"kind": kind, "n": n, "seed": seed, "samples": samples,
            "flip_target": flip_target, "noise_fraction": noise_fraction,
            "n_validation": n_validation}
    return SnrProfile(prof.grid, prof.estimates, prof.zeta, prof.zeta_1, meta)
