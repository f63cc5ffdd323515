"""Acceptance criteria, one test each. Every test records a PASS/FAIL line
(shown in the terminal summary) with the measured value and runtime."""

import json
import math
import subprocess
import sys
import time

import numpy as np
import pytest
from scipy.stats import ortho_group, spearmanr

from critic_bench import autodiff as ad
from critic_bench import experiments as E
from critic_bench import metrics as M
from critic_bench.cli import run
from critic_bench.data import CorruptionSpec, default_distribution, gaussian_mixture, split
from critic_bench.models import GeneratorModel, generate
from critic_bench.reference import GaussianStats, c2st, fid, inception_style_score
from critic_bench.rng import derive_seed
from critic_bench.stats import fisher_exact_two_sided, wilcoxon_rank_sum

from graphs import STEPS, penalty_graph, random_graph
from oracles import fisher_p_enumerate, mmd2_loops, rank_sum_p_enumerate

SEEDS10 = list(range(10))


def test_autodiff_matches_finite_differences(acceptance):
    t0 = time.perf_counter()
    ops = sorted(STEPS)
    worst = max(ad.gradient_check(*random_graph(s, include=ops[s % len(ops)])[:2]) for s in range(100))
    worst_gp = max(ad.gradient_check(*penalty_graph(s)) for s in range(10))
    dt = time.perf_counter() - t0
    ok = worst < 1e-4 and worst_gp < 1e-3 and dt < 10
    acceptance(1, "autodiff vs central differences", ok,
               f"100 graphs max rel err {worst:.2e} (<1e-4), penalty path {worst_gp:.2e} (<1e-3)", dt)


def test_mmd_matches_brute_force(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(50):
        n, m, d = rng.integers(1, 51), rng.integers(1, 51), rng.integers(1, 5)
        X, S = rng.normal(size=(n, d)), rng.normal(size=(m, d)) * rng.uniform(0.5, 2) + rng.uniform(-1, 1)
        sigma = rng.uniform(0.2, 3.0)
        ref = mmd2_loops(X, S, sigma)
        worst = max(worst, abs(M.mmd2_biased(X, S, sigma) - ref) / abs(ref))
    self_zero = all(M.mmd2_biased(x, x, 1.3) == 0.0 for x in (rng.normal(size=(k, 3)) for k in (1, 7, 50)))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-12 and self_zero and dt < 5
    acceptance(2, "MMD oracle equivalence", ok, f"max rel err {worst:.2e} (<=1e-12), MMD(X,X)==0: {self_zero}", dt)


@pytest.fixture(scope="module")
def ring_splits():
    s = E.build_splits({})
    return s["train"], s["test"]


@pytest.mark.slow
def test_p_equals_q_optima(acceptance, ring_splits):
    t0 = time.perf_counter()
    gen = GeneratorModel.analytic(default_distribution(), CorruptionSpec("intensity-shift", 0.0))
    bands = {"GC": (-2 * math.log(2), 0.1), "LS": (-0.5, 0.05), "IW": (0.0, 0.1)}
    res = {k: M.divergence_computation(k, ring_splits, gen, M.MetricSpec(k, seeds=SEEDS10)) for k in (*bands, "MMD")}
    dt = time.perf_counter() - t0
    parts, ok = [], True
    for k, (centre, tol) in bands.items():
        r = res[k]
        good = abs(r.mean - centre) <= tol and not r.partial
        ok &= good
        parts.append(f"{k} {r.mean:.4f}±{r.std:.4f} (target {centre:.3f}±{tol})")
    ok &= res["MMD"].mean <= 0.01
    parts.append(f"MMD {res['MMD'].mean:.5f} (<=0.01)")
    ok &= dt < 300
    acceptance(3, "P=Q optima on the 8-mode ring", ok, "; ".join(parts), dt)


@pytest.mark.slow
def test_wasserstein_translation(acceptance):
    t0 = time.perf_counter()
    dist = gaussian_mixture([[0.0]], [[[1.0]]])
    tr, _, te = split(dist, [10_000, 2000, 2000], seed=1)
    gen = GeneratorModel.analytic(dist, CorruptionSpec("intensity-shift", 2.0))
    r = M.divergence_computation("IW", (tr, te), gen, M.MetricSpec("IW", penalty_weight=10.0, seeds=SEEDS10))
    dt = time.perf_counter() - t0
    ok = 1.6 <= r.mean <= 2.2 and dt < 120
    acceptance(4, "IW recovers W1 of a translation", ok,
               f"mean {r.mean:.4f}±{r.std:.4f} over 10 seeds (target [1.6, 2.2], W1 = 2)", dt)


def test_fid_analytic_cases(acceptance):
    def st(m, c):
        return GaussianStats(np.atleast_1d(m), np.atleast_2d(c))

    rng = np.random.default_rng(5)
    a = rng.normal(size=(4, 4))
    same = fid(st(np.ones(4), a @ a.T), st(np.ones(4), a @ a.T))
    shift = fid(st(0.0, 1.0), st(1.0, 1.0))
    scale = fid(st(0.0, 1.0), st(0.0, 4.0))
    worst_rot = 0.0
    for _ in range(20):
        b, c = rng.normal(size=(5, 5)), rng.normal(size=(5, 5))
        p, q = st(rng.normal(size=5), b @ b.T), st(rng.normal(size=5), c @ c.T)
        R = ortho_group.rvs(5, random_state=rng)
        rot = fid(st(R @ p.mean, R @ p.cov @ R.T), st(R @ q.mean, R @ q.cov @ R.T))
        worst_rot = max(worst_rot, abs(rot - fid(p, q)))
    ok = abs(same) <= 1e-10 and abs(shift - 1) <= 1e-10 and abs(scale - 1) <= 1e-10 and worst_rot <= 1e-8
    acceptance(5, "FID analytic cases", ok,
               f"same {same:.1e}, shift {shift:.12f}, scale {scale:.12f}, rotation max diff {worst_rot:.1e}")


def test_inception_score_bounds(acceptance):
    rng = np.random.default_rng(6)
    in_bounds = True
    for _ in range(1000):
        k, n = rng.integers(2, 11), rng.integers(1, 60)
        s = inception_style_score(rng.dirichlet(np.full(k, rng.uniform(0.05, 3)), size=n))
        in_bounds &= 1 - 1e-12 <= s <= k + 1e-12
    collapsed = inception_style_score(np.tile([0.0, 1.0, 0.0], (25, 1)))
    two = inception_style_score([[1.0, 0.0], [0.0, 1.0]])
    ok = in_bounds and collapsed == pytest.approx(1.0, abs=1e-12) and abs(two - 2) <= 1e-12
    acceptance(6, "IS bounds and collapse", ok,
               f"1000 matrices in [1,K]: {in_bounds}; collapsed {collapsed:.12f}; two one-hot rows {two:.12f}")


def test_exact_test_oracles(acceptance):
    w = wilcoxon_rank_sum([1, 2], [3, 4]).p_value
    w_ref = rank_sum_p_enumerate([1, 2], [3, 4])
    f1 = fisher_exact_two_sided([[3, 1], [1, 3]]).p_value
    f2 = fisher_exact_two_sided([[5, 0], [0, 5]]).p_value
    f1_ref, f2_ref = fisher_p_enumerate([[3, 1], [1, 3]]), fisher_p_enumerate([[5, 0], [0, 5]])
    table6 = fisher_exact_two_sided([[122, 131 - 122], [109, 131 - 109]]).p_value
    ok = (
        abs(w - 1 / 3) <= 1e-12 and abs(w - w_ref) <= 1e-12
        and abs(f1 - 0.4857142857142857) <= 1e-9 and abs(f1 - f1_ref) <= 1e-9
        and abs(f2 - 2 / 252) <= 1e-9 and abs(f2 - f2_ref) <= 1e-9
        and table6 < 0.05
    )
    acceptance(7, "exact-test oracles", ok,
               f"wilcoxon {w:.12f}; fisher {f1:.9f}, {f2:.9f}; 122/131 vs 109/131 p={table6:.4f} (<0.05)")


@pytest.mark.slow
def test_cross_metric_rank_consistency(acceptance):
    t0 = time.perf_counter()
    dist = default_distribution()
    test_split = E.build_splits({})["test"]
    levels = E.calibrate_levels(dist, test_split, "intensity-shift", (0.55, 0.7, 0.9), repeats=2, steps=10)
    gens = [{"name": f"L{i}", "corruption": {"kind": "intensity-shift", "level": lv["level"]}} for i, lv in enumerate(levels)]
    kinds = ["GC", "LS", "IW", "MMD", "FID"]
    agree = 0
    for rep in range(10):
        cfg = E.load_config({
            "experiment": "rank", "splits": {"seed": rep}, "generators": gens,
            "metrics": [{"kind": k} for k in kinds], "seeds": [rep],
        })
        table = [r for r in E.cmd_rank(cfg).rows if r["type"] == "rank"][0]["table"]
        ordered = all(table["rankings"][k] == ["L0", "L1", "L2"] for k in kinds)
        taus = table["kendall_tau"]
        agree += ordered and len(taus) == 10 and all(t == 1.0 for t in taus.values())
    dt = time.perf_counter() - t0
    ok = agree >= 9 and dt < 900
    lv = ", ".join(f"{l['level']:.3f}->{l['accuracy']:.3f}" for l in levels)
    acceptance(8, "cross-metric rank consistency", ok,
               f"{agree}/10 repetitions with all taus = 1 in corruption order (need >= 9); levels {lv}", dt)


def test_cli_determinism(acceptance, tmp_path):
    cfg = {
        "experiment": "rank",
        "splits": {"train": 2000, "validation": 200, "test": 500},
        "generators": [
            {"name": "clean", "corruption": {"kind": "intensity-shift", "level": 0.0}},
            {"name": "noisy", "corruption": {"kind": "additive-noise", "level": 0.3}},
            {"name": "dropped", "corruption": {"kind": "mode-drop", "level": 0.5}},
        ],
        "metrics": [{"kind": k, "iterations": 100} for k in ("GC", "LS", "IW")]
        + [{"kind": k} for k in ("MMD", "FID", "C2ST", "IS")],
        "seeds": [3, 5],
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    payloads = []
    for i in range(2):
        out = tmp_path / f"run{i}.jsonl"
        assert run(["rank", "--config", str(path), "--out", str(out)]) == 0
        payloads.append([l for l in out.read_bytes().splitlines() if b'"type": "meta"' not in l])
    same_rank = payloads[0] == payloads[1] and len(payloads[0]) == 3 * 7 + 1
    # a separate interpreter, through the installed entry point
    path.write_text(json.dumps({**cfg, "experiment": "eval", "generators": cfg["generators"][1:]}))
    procs = []
    for i in range(2):
        out = tmp_path / f"eval{i}.jsonl"
        proc = subprocess.run([sys.executable, "-m", "critic_bench.cli", "eval", "--config", str(path),
                               "--out", str(out), "--seeds", "7,11"], capture_output=True)
        assert proc.returncode == 0, proc.stderr.decode()
        procs.append([l for l in out.read_bytes().splitlines() if b'"type": "meta"' not in l])
    same_eval = procs[0] == procs[1] and len(procs[0]) == 2 * 7
    ok = same_rank and same_eval
    acceptance(9, "CLI determinism", ok,
               f"rank: {len(payloads[0])} lines identical {same_rank}; eval in subprocesses: {len(procs[0])} lines identical {same_eval}")


@pytest.mark.slow
def test_c2st_tracks_iw(acceptance, ring_splits):
    t0 = time.perf_counter()
    dist = default_distribution()
    tr, te = ring_splits
    levels = [0.05, 0.1, 0.2, 0.3, 0.45]
    seeds = [0, 1, 2]
    acc, iw = [], []
    for lv in levels:
        gen = GeneratorModel.analytic(dist, CorruptionSpec("intensity-shift", lv))
        r = M.divergence_computation("IW", (tr, te), gen, M.MetricSpec("IW", seeds=seeds))
        iw.append(r.mean)
        acc.append(np.mean([c2st(te, generate(gen, te.n, derive_seed(s, "eval-fake")), "knn", s) for s in seeds]))
    rho = spearmanr(acc, iw).statistic
    dt = time.perf_counter() - t0
    ok = rho >= 0.9 and dt < 600
    pairs = ", ".join(f"{l}:({a:.3f},{w:.3f})" for l, a, w in zip(levels, acc, iw))
    acceptance(10, "C2ST accuracy vs IW score", ok, f"Spearman {rho:.3f} (>=0.9); level:(C2ST, IW) {pairs}", dt)
