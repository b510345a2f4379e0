"""Monte-Carlo semivalue estimation with Gelman-Rubin stopping.

Each chain, at each iteration and for every valued point ``z``, draws a
cardinality ``k`` uniformly from ``1..n`` and a subset ``S`` of size ``k - 1``
uniformly from the other points, then records the increment
``w~(k) * (U(S + z) - U(S))``. The mean of these increments is an unbiased
estimate of the semivalue. Chains are pooled by averaging their means.

Draws for (chain, iteration) come from their own generator keyed by
``(seed, "mc", chain, iteration)``. They never depend on the weight scheme,
so several schemes can be estimated from one set of draws.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass

import numpy as np

from ._seeding import rng_for
from .errors import InsufficientDataError, InvalidParameterError
from .exact import ValueVector

__all__ = [
    "McConfig",
    "ValueReport",
    "draw_subsets",
    "gelman_rubin",
    "gelman_rubin_points",
    "mc_estimate",
    "mc_estimate_many",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class McConfig:
    chains: int = 10
    rho: float = 1.0005
    min_iterations_per_chain: int = 100
    max_iterations_per_chain: int = 50000
    check_every: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.chains < 2:
            raise InvalidParameterError("Gelman-Rubin needs at least 2 chains")
        if not self.rho > 1:
            raise InvalidParameterError("rho must exceed 1")
        if self.min_iterations_per_chain < 2:
            raise InvalidParameterError("min_iterations_per_chain must be at least 2")
        if self.max_iterations_per_chain < self.min_iterations_per_chain:
            raise InvalidParameterError("max_iterations_per_chain < min_iterations_per_chain")
        if self.check_every < 1:
            raise InvalidParameterError("check_every must be positive")

    def to_dict(self):
        return {
            "chains": self.chains,
            "rho": self.rho,
            "min_iterations_per_chain": self.min_iterations_per_chain,
            "max_iterations_per_chain": self.max_iterations_per_chain,
            "check_every": self.check_every,
            "seed": self.seed,
        }


@dataclass(frozen=True, eq=False)
class ValueReport:
    values: ValueVector
    rhat: np.ndarray
    se: np.ndarray
    chain_means: np.ndarray
    utility_calls: int
    unique_evaluations: int
    iterations: int
    terminated_by: str

    @property
    def converged(self):
        return self.terminated_by == "converged"

    def to_dict(self):
        return {
            "mode": self.values.mode,
            "scheme": self.values.scheme.to_dict(),
            "ids": self.values.ids.tolist(),
            "values": self.values.values.tolist(),
            "se": self.se.tolist(),
            "rhat": [None if not np.isfinite(r) else float(r) for r in self.rhat],
            "utility_calls": self.utility_calls,
            "unique_evaluations": self.unique_evaluations,
            "iterations_per_chain": self.iterations,
            "chains": int(self.chain_means.shape[0]),
            "terminated_by": self.terminated_by,
        }

    def write_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["id", "value", "se", "rhat"])
            for i, v, s, r in zip(self.values.ids, self.values.values, self.se, self.rhat):
                w.writerow([int(i), repr(float(v)), repr(float(s)), repr(float(r))])


def gelman_rubin(chain_means, chain_vars, iterations):
    """Potential scale reduction factor for one quantity.

    ``sqrt((B - 1)/B + Bhat/(B W))`` with ``W`` the mean within-chain
    variance and ``Bhat`` the variance of the chain means times ``B``.
    Returns 1.0 when both variances vanish and ``inf`` when only ``W`` does.
    """
    r = gelman_rubin_points(np.asarray(chain_means, dtype=float)[:, None],
                            np.asarray(chain_vars, dtype=float)[:, None], iterations)
    return float(r[0])


def gelman_rubin_points(chain_means, chain_vars, iterations):
    """Vectorized :func:`gelman_rubin`; arrays are ``(chains, points)``."""
    chains = chain_means.shape[0]
    B = int(iterations)
    if chains < 2:
        raise InsufficientDataError("Gelman-Rubin needs at least 2 chains")
    if B < 2:
        raise InsufficientDataError("Gelman-Rubin needs at least 2 iterations per chain")
    W = np.mean(chain_vars, axis=0)
    between = B * np.var(chain_means, axis=0, ddof=1)
    out = np.empty(W.shape)
    zero_w = W <= 0
    ok = ~zero_w
    out[ok] = np.sqrt((B - 1) / B + between[ok] / (B * W[ok]))
    out[zero_w & (between <= 0)] = 1.0
    out[zero_w & (between > 0)] = np.inf
    return out


def draw_subsets(seed, chain, iteration, n):
    """Cardinalities and subsets for one (chain, iteration).

    Returns ``k`` of shape ``(n,)`` with values in ``1..n`` and a boolean
    ``(n, n)`` matrix whose row ``i`` is a uniform subset of size ``k[i] - 1``
    of the points other than ``i``.
    """
    rng = rng_for(seed, "mc", chain, iteration)
    k = rng.integers(1, n + 1, size=n)
    keys = rng.random((n, n))
    np.fill_diagonal(keys, 2.0)
    members = np.zeros((n, n), dtype=bool)
    big = k >= 2
    if np.any(big):
        srt = np.sort(keys[big], axis=1)
        thresh = srt[np.arange(srt.shape[0]), k[big] - 2]
        members[big] = keys[big] <= thresh[:, None]
    return k, members


def mc_estimate(game, scheme, config=None):
    """Estimate one semivalue; see :func:`mc_estimate_many`."""
    return mc_estimate_many(game, [scheme], config)[0]


def mc_estimate_many(game, schemes, config=None):
    """Estimate several semivalues from one shared set of draws.

    Sampling stops at the first convergence check (every ``check_every``
    iterations, from ``min_iterations_per_chain`` on) where every point of
    every scheme has R-hat below ``rho``, or at ``max_iterations_per_chain``.

    Returns
    -------
    list of ValueReport
        One per scheme, in input order.
    """
    config = config or McConfig()
    n = game.n
    if n < 2:
        raise InvalidParameterError("Monte-Carlo estimation needs n >= 2")
    for s in schemes:
        if s.n != n:
            raise InvalidParameterError(f"scheme is for n={s.n}, game has n={n}")
    C = config.chains
    wt = np.stack([s.normalized for s in schemes])  # (schemes, n)
    mean = np.zeros((len(schemes), C, n))
    m2 = np.zeros((len(schemes), C, n))
    eye = np.eye(n, dtype=bool)
    calls0 = game.calls
    rhat = np.full((len(schemes), n), np.inf)
    terminated = "max-iterations"
    B = 0
    while B < config.max_iterations_per_chain:
        B += 1
        draws = [draw_subsets(config.seed, c, B, n) for c in range(C)]
        ks = np.stack([d[0] for d in draws])  # (C, n)
        without = np.concatenate([d[1] for d in draws])  # (C*n, n)
        with_z = without | np.tile(eye, (C, 1))
        u = game.evaluate(np.concatenate([with_z, without]))
        diff = (u[: C * n] - u[C * n:]).reshape(C, n)
        x = wt[:, ks - 1] * diff[None]  # (schemes, C, n)
        delta = x - mean
        mean += delta / B
        m2 += delta * (x - mean)
        if B >= config.min_iterations_per_chain and B % config.check_every == 0:
            var = m2 / (B - 1)
            rhat = np.stack([gelman_rubin_points(mean[s], var[s], B) for s in range(len(schemes))])
            log.debug("iteration %d: max R-hat %.6f", B, float(np.max(rhat)))
            if np.all(rhat < config.rho):
                terminated = "converged"
                break
    if terminated != "converged" and B >= 2:
        var = m2 / (B - 1)
        rhat = np.stack([gelman_rubin_points(mean[s], var[s], B) for s in range(len(schemes))])
    if terminated != "converged":
        log.warning("Monte-Carlo stopped at the iteration cap (%d) before R-hat < %g", B, config.rho)

    calls = game.calls - calls0
    reports = []
    for s, scheme in enumerate(schemes):
        values = mean[s].mean(axis=0)
        se = np.sqrt(np.var(mean[s], axis=0, ddof=1) / C)
        vv = ValueVector(np.asarray(game.ids).copy(), values, scheme, "mc")
        reports.append(ValueReport(vv, rhat[s].copy(), se, mean[s].copy(), calls,
                                   game.unique_evaluations, B, terminated))
    return reports
