r"""Semivalue weight functions on cardinalities.

A semivalue on ``n`` points is determined by a weight vector ``w(1..n)``.
The value of a point is

.. math::

    \psi(z) = \frac{1}{n} \sum_{j=1}^{n} \binom{n-1}{j-1} w(j) \Delta_j(z)
            = \frac{1}{n} \sum_{j=1}^{n} \tilde w(j) \Delta_j(z),

where :math:`\Delta_j` is the average marginal contribution of ``z`` to
subsets of size ``j - 1``. A weight vector is admissible when the
normalized weights :math:`\tilde w` sum to ``n``.

The Beta(alpha, beta) family has the closed form

.. math::

    w(j) = n \frac{\prod_{k=1}^{j-1} (\beta + k - 1)
                   \prod_{k=1}^{n-j} (\alpha + k - 1)}
                  {\prod_{k=1}^{n-1} (\alpha + \beta + k - 1)}

which is evaluated here as a sum of log-factors.
"""

from __future__ import annotations

import json
import math
import numbers
from dataclasses import dataclass, field

import numpy as np

from .errors import AdmissibilityError, InvalidParameterError

__all__ = [
    "ADMISSIBILITY_RTOL",
    "BetaParams",
    "WeightScheme",
    "argmax_cardinality",
    "beta_weight",
    "beta_weights",
    "log_binomial_row",
    "make_scheme",
]

ADMISSIBILITY_RTOL = 1e-9
ORIGINS = ("beta", "explicit", "data-shapley", "loo-first", "loo-last")


@dataclass(frozen=True)
class BetaParams:
    alpha: float
    beta: float

    def __post_init__(self):
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not (isinstance(v, numbers.Real) and not isinstance(v, bool) and math.isfinite(v) and v > 0):
                raise InvalidParameterError(f"{name} must be a positive finite real, got {v!r}")


def _check_n(n):
    if not isinstance(n, (int, np.integer)) or isinstance(n, bool) or n < 1:
        raise InvalidParameterError(f"n must be a positive integer, got {n!r}")
    return int(n)


def _log_rising(a, m):
    """Prefix sums ``L[i] = sum_{k=1..i} log(a + k - 1)`` for ``i = 0..m``."""
    out = np.zeros(m + 1)
    if m > 0:
        np.cumsum(np.log(a + np.arange(m, dtype=float)), out=out[1:])
    return out


def log_binomial_row(n):
    """``log C(n-1, j-1)`` for ``j = 1..n``, from cumulative log-factorials."""
    n = _check_n(n)
    lf = _log_rising(1.0, n - 1)  # lf[i] = log(i!)
    j = np.arange(1, n + 1)
    return lf[n - 1] - lf[j - 1] - lf[n - j]


def _log_beta_weights(n, p):
    lb = _log_rising(p.beta, n - 1)
    la = _log_rising(p.alpha, n - 1)
    lab = _log_rising(p.alpha + p.beta, n - 1)
    j = np.arange(1, n + 1)
    return math.log(n) + lb[j - 1] + la[n - j] - lab[n - 1]


def beta_weight(n, j, p):
    """Raw Beta(alpha, beta) weight ``w(j)`` for ``n`` points."""
    n = _check_n(n)
    if not isinstance(p, BetaParams):
        raise InvalidParameterError("p must be BetaParams")
    if not (isinstance(j, (int, np.integer)) and 1 <= j <= n):
        raise InvalidParameterError(f"cardinality j must lie in [1, {n}], got {j!r}")
    return float(beta_weights(n, p)[0][j - 1])


def beta_weights(n, p):
    """Raw and normalized Beta weights as two length-``n`` arrays."""
    n = _check_n(n)
    if p.alpha == 1 and p.beta == 1:
        # closed form reduces to w~ == 1 exactly
        normalized = np.ones(n)
        return normalized * np.exp(-log_binomial_row(n)), normalized
    logw = _log_beta_weights(n, p)
    return np.exp(logw), np.exp(logw + log_binomial_row(n))


@dataclass(frozen=True, eq=False)
class WeightScheme:
    """A validated semivalue weight vector.

    ``raw[j-1]`` is ``w(j)`` and ``normalized[j-1]`` is ``C(n-1, j-1) * w(j)``.
    """

    n: int
    raw: np.ndarray
    normalized: np.ndarray
    origin: str
    params: BetaParams | None = None
    label: str = field(default="")

    def __post_init__(self):
        for arr in (self.raw, self.normalized):
            arr.setflags(write=False)

    @property
    def name(self):
        if self.label:
            return self.label
        if self.origin == "beta":
            return f"Beta({self.params.alpha:g},{self.params.beta:g})"
        return self.origin

    def to_dict(self):
        d = {"n": self.n, "origin": self.origin}
        if self.params is not None:
            d["alpha"] = self.params.alpha
            d["beta"] = self.params.beta
        d["raw"] = self.raw.tolist()
        d["normalized"] = self.normalized.tolist()
        return d

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d):
        origin = d["origin"]
        if origin == "beta":
            return make_scheme(d["n"], "beta", params=BetaParams(d["alpha"], d["beta"]))
        if origin == "explicit":
            return make_scheme(d["n"], "explicit", raw=d["raw"])
        return make_scheme(d["n"], origin)


def _validate(n, raw, normalized):
    if raw.shape != (n,) or normalized.shape != (n,):
        raise InvalidParameterError(f"weight vectors must have length n={n}")
    if not (np.all(np.isfinite(raw)) and np.all(np.isfinite(normalized))):
        raise InvalidParameterError("weights must be finite")
    total = math.fsum(normalized)
    if abs(total - n) > ADMISSIBILITY_RTOL * n:
        raise AdmissibilityError(
            f"normalized weights sum to {total!r}, expected {n} (rtol {ADMISSIBILITY_RTOL})"
        )


def make_scheme(n, origin, *, params=None, raw=None, normalized=None):
    """Build a validated :class:`WeightScheme`.

    Parameters
    ----------
    n : int
        Number of valued points.
    origin : str
        One of ``beta``, ``explicit``, ``data-shapley``, ``loo-first``,
        ``loo-last``.
    params : BetaParams, optional
        Required for ``origin="beta"``.
    raw, normalized : array_like, optional
        For ``origin="explicit"`` exactly one of them must be given.
        Signed entries are accepted as long as the admissibility sum holds.
    """
    n = _check_n(n)
    if origin not in ORIGINS:
        raise InvalidParameterError(f"unknown scheme origin {origin!r}")
    with np.errstate(over="ignore"):
        # C(n-1, j-1) overflows past n ~ 1030; w = wt / inf = 0 there, as it should be
        binom = np.exp(log_binomial_row(n))

    if origin == "beta":
        if not isinstance(params, BetaParams):
            raise InvalidParameterError("beta origin requires BetaParams")
        w, wt = beta_weights(n, params)
        if np.any(w < 0):
            raise InvalidParameterError("beta weights must be nonnegative")
    elif origin == "explicit":
        if (raw is None) == (normalized is None):
            raise InvalidParameterError("explicit origin needs exactly one of raw / normalized")
        if raw is not None:
            w = np.array(raw, dtype=float)
            if w.shape != (n,):
                raise InvalidParameterError(f"raw weights must have length n={n}")
            wt = w * binom
        else:
            wt = np.array(normalized, dtype=float)
            if wt.shape != (n,):
                raise InvalidParameterError(f"normalized weights must have length n={n}")
            w = wt / binom
    elif origin == "data-shapley":
        wt = np.ones(n)
        w = 1.0 / binom
    elif origin == "loo-last":
        wt = np.zeros(n)
        wt[n - 1] = n
        w = np.zeros(n)
        w[n - 1] = n
    else:  # loo-first
        if n < 2:
            raise InvalidParameterError("loo-first needs n >= 2")
        wt = np.zeros(n)
        wt[1] = n
        w = wt / binom

    _validate(n, w, wt)
    return WeightScheme(n=n, raw=w, normalized=wt, origin=origin,
                        params=params if origin == "beta" else None)


def argmax_cardinality(s):
    """Smallest cardinality ``j`` (1-based) maximizing the normalized weight."""
    return int(np.argmax(s.normalized)) + 1
