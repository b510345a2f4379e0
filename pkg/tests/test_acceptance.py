"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL`` line (also collected in
the terminal summary) before asserting.
"""

import math
import os

import numpy as np
import pytest
from scipy.stats import spearmanr

from betashap._seeding import derive_seed
from betashap.cli import main as cli_main
from betashap.data import flip_labels, generate_splits
from betashap.exact import ValueVector, semivalue_exact, shapley_efficiency_check
from betashap.game import TableGame, UtilityGame, UtilitySpec
from betashap.mc import McConfig, mc_estimate, mc_estimate_many
from betashap.tasks import detect_noisy, snr_scan, subsample_train_eval
from betashap.weights import BetaParams, make_scheme

from conftest import ACCEPTANCE_LINES, permutation_shapley

TOL = 1e-9


def report(k, ok, detail):
    line = f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def schemes_for(n):
    return [make_scheme(n, "beta", params=BetaParams(a, b)) for a, b in ((1, 1), (16, 1), (1, 4), (2, 3))] + [
        make_scheme(n, "loo-last"), make_scheme(n, "loo-first")]


def test_c1_exact_matches_permutation_shapley():
    worst = 0.0
    for seed in range(50):
        g = TableGame(np.random.default_rng(seed).normal(size=1 << 8))
        ex = semivalue_exact(g, make_scheme(8, "beta", params=BetaParams(1, 1))).values
        worst = max(worst, float(np.max(np.abs(ex - permutation_shapley(g.table, 8)))))
    report(1, worst <= TOL, f"50 games n=8, max |exact - permutation average| = {worst:.2e}")


def test_c2_axioms():
    rng = np.random.default_rng(2024)
    worst = {"linearity": 0.0, "null-player": 0.0, "symmetry": 0.0, "efficiency": 0.0}
    games = 24
    for t in range(games):
        n = 3 + t % 8  # 3..10
        t1, t2 = rng.normal(size=1 << n), rng.normal(size=1 << n)
        a, b = rng.normal(size=2)
        for s in schemes_for(n):
            v = semivalue_exact(TableGame(a * t1 + b * t2), s).values
            v1 = semivalue_exact(TableGame(t1), s).values
            v2 = semivalue_exact(TableGame(t2), s).values
            worst["linearity"] = max(worst["linearity"], float(np.max(np.abs(v - a * v1 - b * v2))))

        # null player: z adds a constant c to every subset
        z, c = int(rng.integers(n)), float(rng.normal())
        masks = np.arange(1 << n)
        rest = ((masks >> (z + 1)) << z) | (masks & ((1 << z) - 1))
        table = rng.normal(size=1 << (n - 1))[rest] + c * ((masks >> z) & 1)
        for s in schemes_for(n):
            val = semivalue_exact(TableGame(table), s).values[z]
            worst["null-player"] = max(worst["null-player"], abs(val - c))

        # symmetry: relabel points, values follow
        perm = rng.permutation(n)
        old = np.zeros_like(masks)
        for p in range(n):
            old |= ((masks >> p) & 1) << perm[p]
        for s in schemes_for(n):
            lhs = semivalue_exact(TableGame(t1[old]), s).values
            rhs = semivalue_exact(TableGame(t1), s).values[perm]
            worst["symmetry"] = max(worst["symmetry"], float(np.max(np.abs(lhs - rhs))))

        worst["efficiency"] = max(worst["efficiency"], shapley_efficiency_check(TableGame(t1))[2])
    ok = all(v <= TOL for v in worst.values())
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    report(2, ok, f"{games} games n=3..10, max deviations: {detail}")


def test_c3_weight_admissibility():
    worst_sum = worst_ref = 0.0
    for n in (2, 10, 200, 5000):
        for a in (1, 4, 16):
            for b in (1, 4, 16):
                s = make_scheme(n, "beta", params=BetaParams(a, b)).normalized
                r = make_scheme(n, "beta", params=BetaParams(b, a)).normalized
                worst_sum = max(worst_sum, abs(math.fsum(s) - n) / n)
                scale = np.maximum(np.abs(s), 1e-300)
                worst_ref = max(worst_ref, float(np.max(np.abs(s - r[::-1]) / scale)))
    ok = worst_sum <= TOL and worst_ref <= TOL
    report(3, ok, f"max |sum - n|/n = {worst_sum:.1e}, max reflection rel. error = {worst_ref:.1e}")


@pytest.mark.slow
def test_c4_mc_matches_exact_on_logistic_game():
    train, val = generate_splits("gaussian-classification", [10, 200], seed=0)
    game = UtilityGame(train, UtilitySpec("logistic-regression", "accuracy", val))
    scheme = make_scheme(10, "beta", params=BetaParams(1, 1))
    exact = semivalue_exact(game, scheme).values
    rep = mc_estimate(game, scheme, McConfig(chains=10, rho=1.0005, seed=0))
    z = np.abs(rep.values.values - exact) / rep.se
    rho = spearmanr(rep.values.values, exact)[0]
    ok = rep.converged and bool(np.all(z <= 3)) and rho >= 0.99
    report(4, ok, f"n=10, {rep.terminated_by} after {rep.iterations} iterations/chain, "
                  f"max |mc - exact|/SE = {z.max():.2f}, Spearman = {rho:.4f}")


def effective_snr(prof):
    # zero mean and zero spread: no signal at all
    snr = prof.snr
    dead = np.isnan(snr) & (prof.mean == 0)
    snr[dead] = 0.0
    snr[np.isnan(snr)] = np.inf
    return snr


@pytest.mark.slow
def test_c5_snr_decreases_with_cardinality():
    wins, rows = 0, []
    for seed in range(20):
        prof = snr_scan("snr-classification", 500, [2, 50, 150, 400], repeats=50, samples=50, seed=seed)
        snr = effective_snr(prof)
        wins += bool(snr[0] > snr[-1])
        rows.append(snr)
    med = np.median(np.array(rows), axis=0)
    report(5, wins >= 16, f"SNR(j=2) > SNR(j=400) in {wins}/20 runs; "
                          f"median SNR over j=2,50,150,400: {np.round(med, 3).tolist()}")


@pytest.fixture(scope="module")
def desk_scale():
    """Ten seeded noisy Gaussian-classification runs, n=100 valued points."""
    n, out = 100, []
    b16 = make_scheme(n, "beta", params=BetaParams(16, 1))
    shap = make_scheme(n, "beta", params=BetaParams(1, 1))
    for seed in range(10):
        train, val, test = generate_splits("gaussian-classification", [n, 100, 1000], derive_seed(seed, "data"))
        train, rec = flip_labels(train, 0.1, derive_seed(seed, "flip", "train"))
        val, _ = flip_labels(val, 0.1, derive_seed(seed, "flip", "val"))
        game = UtilityGame(train, UtilitySpec("logistic-regression", "accuracy", val))
        r16, rsh = mc_estimate_many(game, [b16, shap], McConfig(seed=derive_seed(seed, "mc")))
        # leave-one-out needs only n + 1 utilities, so it is computed exactly
        u = game.evaluate(np.vstack([np.ones((1, n), bool), ~np.eye(n, dtype=bool)]))
        loo = ValueVector(train.ids, u[0] - u[1:], make_scheme(n, "loo-last"), "exact")
        held_out = UtilitySpec("logistic-regression", "accuracy", test)
        sub_seed = derive_seed(seed, "subsample")
        out.append({
            "converged": r16.converged and rsh.converged,
            "iterations": r16.iterations,
            "f1": {name: detect_noisy(v, rec).f1 for name, v in
                   (("beta16", r16.values), ("shapley", rsh.values), ("loo", loo))},
            "acc_weighted": subsample_train_eval(train, r16.values, held_out, keep=0.25, seed=sub_seed).accuracy,
            "acc_uniform": subsample_train_eval(train, np.ones(n), held_out, keep=0.25, seed=sub_seed).accuracy,
        })
    return out


@pytest.mark.slow
def test_c6_detection(desk_scale):
    f1 = {k: float(np.mean([r["f1"][k] for r in desk_scale])) for k in ("beta16", "shapley", "loo")}
    conv = sum(r["converged"] for r in desk_scale)
    ok = f1["beta16"] > f1["loo"] and f1["beta16"] >= f1["shapley"] - 0.02
    report(6, ok, f"mean F1 over 10 seeds: Beta(16,1) {f1['beta16']:.3f}, Data Shapley {f1['shapley']:.3f}, "
                  f"LOO {f1['loo']:.3f} ({conv}/10 MC runs converged, "
                  f"{min(r['iterations'] for r in desk_scale)}-{max(r['iterations'] for r in desk_scale)} "
                  f"iterations/chain)")


@pytest.mark.slow
def test_c7_weighted_subsampling(desk_scale):
    w = float(np.mean([r["acc_weighted"] for r in desk_scale]))
    u = float(np.mean([r["acc_uniform"] for r in desk_scale]))
    report(7, w >= u, f"mean held-out accuracy over 10 shared seeds: Beta(16,1)-weighted {w:.4f}, uniform {u:.4f}")


def _tree(d):
    out = {}
    for root, _, names in os.walk(d):
        for name in names:
            path = os.path.join(root, name)
            out[os.path.relpath(path, d)] = open(path, "rb").read()
    return out


def test_c8_cli_determinism(tmp_path):
    data = tmp_path / "data"
    assert cli_main(["gen", "--kind", "gaussian-classification", "--n", "12", "--val", "40", "--test", "60",
                     "--flip", "0.25", "--seed", "7", "--out-dir", str(data)]) == 0
    tr, va, te, noise = (str(data / f) for f in ("train.csv", "val.csv", "test.csv", "noise.json"))
    # task commands read one shared values file so their inputs are identical across runs
    assert cli_main(["value", "--train", tr, "--val", va, "--alpha", "4", "--beta", "1", "--engine", "exact",
                     "--out-dir", str(tmp_path / "shared")]) == 0
    vals = str(tmp_path / "shared" / "values.csv")

    def commands(out, threads):
        t = ["--threads", str(threads), "--seed", "7"]
        return [
            ["gen", "--kind", "snr-regression", "--n", "30", "--val", "10", "--seed", "7",
             "--out-dir", os.path.join(out, "gen")],
            ["value", "--train", tr, "--val", va, "--alpha", "16", "--beta", "1", "--engine", "exact", *t,
             "--out-dir", os.path.join(out, "exact")],
            ["value", "--train", tr, "--val", va, "--data-shapley", "--engine", "mc", "--chains", "4",
             "--max-iter", "300", *t, "--out-dir", os.path.join(out, "mc")],
            ["task", "detect", "--values", vals, "--noise", noise, "--out-dir", os.path.join(out, "detect")],
            ["task", "subsample", "--values", vals, "--train", tr, "--test", te, "--keep", "0.5", *t,
             "--out-dir", os.path.join(out, "subsample")],
            ["task", "curve", "--values", vals, "--train", tr, "--val", va, "--direction", "add",
             "--init-size", "3", *t, "--out-dir", os.path.join(out, "curve")],
            ["task", "snr", "--kind", "snr-classification", "--n", "40", "--grid", "2,10,30", "--repeats", "5",
             "--samples", "5", "--n-val", "50", *t, "--out-dir", os.path.join(out, "snr")],
        ]

    runs = {}
    for label, threads in (("a", 1), ("b", 1), ("c", 4)):
        out = str(tmp_path / label)
        for argv in commands(out, threads):
            assert cli_main(argv) == 0, argv
        runs[label] = _tree(out)
    differ = sorted(k for k in set(runs["a"]) | set(runs["b"]) | set(runs["c"])
                    if not runs["a"].get(k) == runs["b"].get(k) == runs["c"].get(k))
    ok = not differ and len(runs["a"]) > 14
    detail = "identical" if ok else f"differing: {differ}"
    report(8, ok, f"{len(runs['a'])} output files from 7 commands across reruns and --threads 1/4: {detail}")
