"""Brute-force semivalues by full subset enumeration (``n <= 20``)."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError, SizeLimitError
from .weights import make_scheme

__all__ = [
    "MAX_EXACT_N",
    "MarginalProfile",
    "ValueVector",
    "marginal_exact",
    "marginal_profiles",
    "semivalue_exact",
    "semivalue_from_profiles",
    "shapley_efficiency_check",
    "utility_table",
    "write_profiles_csv",
]

MAX_EXACT_N = 20
_BLOCK = 1 << 14


@dataclass(frozen=True, eq=False)
class ValueVector:
    """One value per valued point, in ``ids`` order."""

    ids: np.ndarray
    values: np.ndarray
    scheme: object
    mode: str

    def __post_init__(self):
        if self.ids.shape != self.values.shape:
            raise InvalidParameterError("ids and values differ in length")
        if not np.all(np.isfinite(self.values)):
            raise InvalidParameterError("values must be finite")

    def as_dict(self):
        return {int(i): float(v) for i, v in zip(self.ids, self.values)}

    def to_dict(self):
        return {
            "mode": self.mode,
            "scheme": self.scheme.to_dict() if self.scheme is not None else None,
            "ids": self.ids.tolist(),
            "values": self.values.tolist(),
        }

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["id", "value"])
            for i, v in zip(self.ids, self.values):
                w.writerow([int(i), repr(float(v))])

    def write_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


@dataclass(frozen=True, eq=False)
class MarginalProfile:
    """Per-cardinality statistics of a point's marginal contributions.

    Index ``j - 1`` holds cardinality ``j`` (subsets of size ``j - 1``).
    ``var`` is the population variance of the summands over the
    enumerated (or sampled) subsets.
    """

    point_id: int
    mean: np.ndarray
    var: np.ndarray
    count: np.ndarray

    def rows(self):
        for j in range(len(self.mean)):
            yield (self.point_id, j + 1, float(self.mean[j]), float(self.var[j]), int(self.count[j]))

    def to_dict(self):
        return {
            "id": self.point_id,
            "mean": self.mean.tolist(),
            "var": self.var.tolist(),
            "count": self.count.tolist(),
        }


def write_profiles_csv(profiles, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "j", "mean", "var", "count"])
        for p in profiles:
            for pid, j, m, v, c in p.rows():
                w.writerow([pid, j, repr(m), repr(v), c])


def _check_size(n):
    if n > MAX_EXACT_N:
        raise SizeLimitError(f"exact enumeration is limited to n <= {MAX_EXACT_N}, got n={n}")


def utility_table(game):
    """``U`` on every subset, indexed by bitmask (bit ``i`` = point ``i``)."""
    n = game.n
    _check_size(n)
    table = getattr(game, "table", None)
    if table is not None:
        return np.asarray(table, dtype=float)
    size = 1 << n
    bits = np.arange(n, dtype=np.int64)
    out = np.empty(size)
    for start in range(0, size, _BLOCK):
        masks = np.arange(start, min(size, start + _BLOCK), dtype=np.int64)
        members = (masks[:, None] >> bits) & 1
        out[start:start + len(masks)] = game.evaluate(members.astype(bool))
    return out


def _popcount(masks, n):
    pc = np.zeros(masks.shape, dtype=np.int64)
    for i in range(n):
        pc += (masks >> i) & 1
    return pc


def _profile_from_table(table, n, i, masks, pc):
    sel = masks[((masks >> i) & 1) == 0]
    diffs = table[sel | (1 << i)] - table[sel]
    card = pc[sel]  # |S| = j - 1
    count = np.bincount(card, minlength=n)
    mean = np.bincount(card, weights=diffs, minlength=n) / count
    var = np.bincount(card, weights=(diffs - mean[card]) ** 2, minlength=n) / count
    return mean, var, count


def marginal_profiles(game, table=None):
    """Exact :class:`MarginalProfile` for every valued point."""
    n = game.n
    _check_size(n)
    if table is None:
        table = utility_table(game)
    masks = np.arange(1 << n, dtype=np.int64)
    pc = _popcount(masks, n)
    out = []
    for i in range(n):
        mean, var, count = _profile_from_table(table, n, i, masks, pc)
        out.append(MarginalProfile(int(game.ids[i]), mean, var, count))
    return out


def marginal_exact(game, point_id, j, table=None):
    """Average of ``U(S + z) - U(S)`` over all ``S`` of size ``j - 1`` without ``z``."""
    n = game.n
    _check_size(n)
    if not 1 <= j <= n:
        raise InvalidParameterError(f"cardinality must lie in [1, {n}]")
    pos = np.flatnonzero(game.ids == point_id)
    if pos.size != 1:
        raise InvalidParameterError(f"unknown point id {point_id}")
    if table is None:
        table = utility_table(game)
    masks = np.arange(1 << n, dtype=np.int64)
    mean, _, _ = _profile_from_table(table, n, int(pos[0]), masks, _popcount(masks, n))
    return float(mean[j - 1])


def semivalue_from_profiles(profiles, scheme):
    """``(1/n) * sum_j w~(j) * mean_j`` for each profile."""
    n = scheme.n
    return np.array([float(np.dot(scheme.normalized, p.mean)) / n for p in profiles])


def semivalue_exact(game, scheme, table=None):
    """Exact semivalue of every point under ``scheme``; returns a :class:`ValueVector`."""
    if scheme.n != game.n:
        raise InvalidParameterError(f"scheme is for n={scheme.n}, game has n={game.n}")
    profiles = marginal_profiles(game, table)
    return ValueVector(np.asarray(game.ids).copy(), semivalue_from_profiles(profiles, scheme), scheme, "exact")


def shapley_efficiency_check(game, table=None):
    """Return ``(sum of Shapley values, U(D) - U(empty), absolute gap)``."""
    if table is None:
        table = utility_table(game)
    vv = semivalue_exact(game, make_scheme(game.n, "data-shapley"), table)
    total = float(np.sum(vv.values))
    span = float(table[-1] - table[0])
    return total, span, abs(total - span)
