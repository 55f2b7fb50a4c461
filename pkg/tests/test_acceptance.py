"""Acceptance criteria, one test each, at their stated tolerances.

Every test prints a PASS or FAIL line; the lines are repeated in the
pytest terminal summary under "acceptance criteria".
"""

import json
import math
import time

import numpy as np
import pytest
from conftest import ACCEPTANCE_LINES
from scipy import integrate

from mtgbn.cli import main
from mtgbn.errors import ChainDiverged
from mtgbn.evalkit import (
    ConfusionCounts,
    adjacency_confusion,
    arrowhead_confusion,
    connection_counts,
    degree_table,
    metrics,
    proportion_test,
)
from mtgbn.graph import Dag, UGraph, decomposable_cover
from mtgbn.hmc import HmcConfig, leapfrog, sample_sigma_h
from mtgbn.likelihood import (
    HyperParams,
    PosteriorTarget,
    TaskData,
    grad_log_density_v,
    initial_sigma_h,
    log_density_v,
    log_post_kernel_sigma_h,
)
from mtgbn.matrix_stats import sample_inverse_wishart, sample_mvn, standardize, transform
from mtgbn.mcem import RunConfig, initial_dags, run_mcem
from mtgbn.search import SearchConfig, all_dags, hill_climb, mc_score
from mtgbn.simgen import SynthSpec, generate_synthetic, random_dag, realized_density, simulate_benchmark

# Settings for the directional reproductions.  The prior degrees of freedom
# and the per-column standardization were chosen on pilot seeds 100-109
# (synthetic) and 200-201 (perturbation), disjoint from the seeds below.
LEARN_STANDARDIZE = True
LEARN_NU0_OFFSET = 1.0  # nu0 = p + 1
REPEAT_SEEDS = range(10)
BUDGET_SECONDS = 30 * 60


def report(number, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return ok


def random_spd(p, rng):
    a = rng.standard_normal((p, p))
    return a @ a.T + 0.5 * np.eye(p)


def random_sparse_dag(p, rng, prob=0.35):
    order = rng.permutation(p)
    edges = [(int(order[i]), int(order[j])) for i in range(p) for j in range(i + 1, p) if rng.uniform() < prob]
    return Dag(tuple(f"X{i}" for i in range(p)), frozenset(edges))


# --- 1 ----------------------------------------------------------------------------------------------


def test_criterion_1_gradient_gold():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    grid = [(p, m, n) for p in (2, 3, 4, 6) for m in (1, 3) for n in (5, 50)]
    instances = [grid[i % len(grid)] for i in range(20)]
    for p, m, n in instances:
        tasks = [TaskData.from_data(sample_mvn(random_spd(p, rng), n, rng)) for _ in range(m)]
        covers = [decomposable_cover(random_sparse_dag(p, rng)) for _ in range(m)]
        hp = HyperParams(p + 2.0, p, m)
        v = transform(initial_sigma_h(tasks, hp)) + np.tril(rng.normal(scale=0.1, size=(p, p)))
        g = grad_log_density_v(v, tasks, covers, hp)
        f = lambda x: log_density_v(x, tasks, covers, hp)
        for i in range(p):
            for j in range(i + 1):
                e = np.zeros((p, p))
                e[i, j] = 1e-5
                fd = (f(v + e) - f(v - e)) / 2e-5
                worst = max(worst, abs(g[i, j] - fd) / max(abs(fd), 1.0))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-5 and elapsed < 30
    report(1, ok, f"worst relative gradient error {worst:.2e} over 20 instances (limit 1e-5), {elapsed:.1f}s (limit 30s)")
    assert ok


# --- 2 ----------------------------------------------------------------------------------------------


def test_criterion_2_brute_force_oracle():
    t0 = time.perf_counter()
    hits = 0
    dags = all_dags(3)
    assert len(dags) == 25
    for seed in range(10):
        rng = np.random.default_rng(500 + seed)
        a = rng.standard_normal((3, 3)) * (rng.uniform(size=(3, 3)) < 0.6)
        task = TaskData.from_data(sample_mvn(a @ a.T + np.eye(3), 40, rng))
        hp = HyperParams(5.0, 3, 1)
        samples = [sample_inverse_wishart(5.0 * np.eye(3), 8.0, rng) for _ in range(5)]
        best = max(mc_score(d, task, samples, hp) for d in dags)
        out = hill_climb(task, samples, hp, SearchConfig(restarts=5, seed=seed), Dag.empty(3))
        hits += out.score >= best - 1e-9
    elapsed = time.perf_counter() - t0
    ok = hits >= 9 and elapsed < 120
    report(2, ok, f"hill climbing hit the 25-DAG optimum in {hits}/10 instances (need 9), {elapsed:.1f}s")
    assert ok


# --- 3 ----------------------------------------------------------------------------------------------


def batch_means_se(x, n_batches=50):
    b = np.asarray(x).reshape(n_batches, -1).mean(axis=1)
    return b.std(ddof=1) / math.sqrt(n_batches)


def test_criterion_3_sampler_quadrature():
    t0 = time.perf_counter()
    rng = np.random.default_rng(33)
    task = TaskData.from_data(rng.normal(scale=2.0, size=(40, 1)))
    hp = HyperParams(3.0, 1, 1)
    cover = decomposable_cover(Dag.empty(1))
    log_kernel = lambda s: log_post_kernel_sigma_h(np.array([[s]]), [task], [cover], hp)
    grid = np.exp(np.linspace(-10, 12, 4001))
    logs = np.array([log_kernel(s) for s in grid])
    peak, shift = float(grid[np.argmax(logs)]), float(logs.max())

    def moment(k):
        f = lambda s: s**k * math.exp(log_kernel(s) - shift)
        return integrate.quad(f, 0, peak, limit=500)[0] + integrate.quad(f, peak, np.inf, limit=500)[0]

    z = moment(0)
    mean = moment(1) / z
    var = moment(2) / z - mean**2
    cfg = HmcConfig(n_samples=5000, n_leapfrog=10, step_size=0.1, burn_in=500, thin=2, seed=7)
    draws = np.array([s[0, 0] for s in sample_sigma_h([task], [cover], hp, cfg, np.array([[mean]])).samples])
    se_mean = batch_means_se(draws)
    se_var = batch_means_se((draws - draws.mean()) ** 2)
    dm, dv = abs(draws.mean() - mean), abs(draws.var() - var)
    elapsed = time.perf_counter() - t0
    ok = len(draws) == 5000 and dm <= 3 * se_mean and dv <= 3 * se_var and elapsed < 60
    report(
        3,
        ok,
        f"mean off by {dm / se_mean:.2f} MCSE, variance off by {dv / se_var:.2f} MCSE (limit 3), N={len(draws)}, {elapsed:.1f}s",
    )
    assert ok


# --- 4 ----------------------------------------------------------------------------------------------


def test_criterion_4_leapfrog_reversibility_and_drift():
    worst_rev = worst_drift = 0.0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        m = 2
        tasks = [TaskData.from_data(sample_mvn(random_spd(3, rng), 20, rng)) for _ in range(m)]
        covers = [decomposable_cover(random_sparse_dag(3, rng)) for _ in range(m)]
        hp = HyperParams(5.0, 3, m)
        target = PosteriorTarget(tasks, covers, hp)
        v0 = transform(initial_sigma_h(tasks, hp)) + np.tril(rng.normal(scale=0.05, size=(3, 3)))
        mom0 = rng.standard_normal(6)

        def run(v, mom, eps, k=20):
            cfg = HmcConfig(step_size=eps)
            for _ in range(k):
                v, mom = leapfrog(v, mom, cfg, target)
            return v, mom

        v1, mom1 = run(v0, mom0, 0.01)
        v2, mom2 = run(v1, -mom1, 0.01)
        worst_rev = max(worst_rev, np.max(np.abs(v2 - v0)), np.max(np.abs(mom2 + mom0)))
        energy = lambda v, mom: -target.logp_and_grad(v)[0] + 0.5 * float(mom @ mom)
        v3, mom3 = run(v0, mom0, 1e-3)
        worst_drift = max(worst_drift, abs(energy(v3, mom3) - energy(v0, mom0)))
    ok = worst_rev <= 1e-8 and worst_drift < 1e-4
    report(4, ok, f"100 seeds: worst reversal error {worst_rev:.1e} (limit 1e-8), worst energy drift {worst_drift:.1e} (limit 1e-4)")
    assert ok


# --- 5 ----------------------------------------------------------------------------------------------


def test_criterion_5_m_step_monotone():
    out = generate_synthetic(SynthSpec(m=4, p=6, n=100, density=0.3, seed=5))
    cfg = RunConfig(HyperParams(8.0, 6, 4), max_em_iters=10, min_em_iters=10, seed=5)
    res = run_mcem(out.tasks, None, cfg)
    diffs = [new - old for new, old in zip(res.q_trace, res.q_prev_trace)]
    ok = res.em_iters_used == 10 and all(d >= 0 for d in diffs)
    report(5, ok, f"{res.em_iters_used} iterations, smallest M-step gain in Q-tilde {min(diffs):.3g} (must be >= 0)")
    assert ok


# --- 6 ----------------------------------------------------------------------------------------------


def learn_both(tasks, p, m, seed):
    if LEARN_STANDARDIZE:
        tasks = [TaskData.from_data(standardize(t.data)) for t in tasks]
    cfg = RunConfig(HyperParams(p + LEARN_NU0_OFFSET, p, m), seed=seed)
    sig = initial_dags(tasks, cfg)
    try:
        mt = [r.dag for r in run_mcem(tasks, sig, cfg).dags]
    except ChainDiverged:
        mt = None
    return sig, mt


def mean_error(learned, truth, confusion):
    if learned is None:
        return math.inf
    return float(np.mean([metrics(confusion(a, b)).error for a, b in zip(learned, truth)]))


def test_criterion_6_synthetic_direction():
    t0 = time.perf_counter()
    m, p, density = 6, 10, 0.3
    errs = {}
    for n in (50, 150):
        for r in REPEAT_SEEDS:
            out = generate_synthetic(SynthSpec(m=m, p=p, n=n, density=density, seed=r))
            sig, mt = learn_both(out.tasks, p, m, seed=r)
            errs[n, r] = (mean_error(mt, out.graphs, adjacency_confusion), mean_error(sig, out.graphs, adjacency_confusion))
    elapsed = time.perf_counter() - t0
    wins = {n: sum(errs[n, r][0] < errs[n, r][1] for r in REPEAT_SEEDS) for n in (50, 150)}
    pairings = sum(errs[50, r][0] <= errs[150, r][1] for r in REPEAT_SEEDS)
    for n in (50, 150):
        mt_mean = np.mean([errs[n, r][0] for r in REPEAT_SEEDS])
        sig_mean = np.mean([errs[n, r][1] for r in REPEAT_SEEDS])
        print(f"n={n}: mean adjacency error MTGBN {mt_mean:.4f}, SIG {sig_mean:.4f}")
    ok = wins[50] >= 8 and wins[150] >= 8 and pairings >= 6 and elapsed < BUDGET_SECONDS
    report(
        6,
        ok,
        f"MTGBN < SIG in {wins[50]}/10 (n=50) and {wins[150]}/10 (n=150) repeats (need 8 each); "
        f"MTGBN n=50 <= SIG n=150 in {pairings}/10 pairings (need 6); {elapsed / 60:.1f} min (limit 30)",
    )
    assert ok


# --- 7 ----------------------------------------------------------------------------------------------


def test_criterion_7_perturbation_direction():
    t0 = time.perf_counter()
    p, n_edges, m, n = 20, 30, 10, 250
    beats = ordered = 0
    rows = []
    for r in REPEAT_SEEDS:
        rng = np.random.default_rng(r)
        base = random_dag(p, n_edges, rng)
        res = {}
        for level in (0.05, 0.3):
            truth, tasks = simulate_benchmark(base, level, m, n, rng)
            sig, mt = learn_both(tasks, p, m, seed=r)
            res[level] = (mean_error(mt, truth, arrowhead_confusion), mean_error(sig, truth, arrowhead_confusion))
        both_levels = all(res[lv][0] < res[lv][1] for lv in res)
        beats += both_levels
        ordered += res[0.05][0] < res[0.3][0]
        rows.append(res)
    elapsed = time.perf_counter() - t0
    for level in (0.05, 0.3):
        print(
            f"level {level}: mean arrowhead error MTGBN {np.mean([x[level][0] for x in rows]):.4f}, "
            f"SIG {np.mean([x[level][1] for x in rows]):.4f}"
        )
    ok = beats >= 8 and ordered >= 8 and elapsed < BUDGET_SECONDS
    report(
        7,
        ok,
        f"MTGBN < SIG at both levels in {beats}/10 repeats, MTGBN 5% < MTGBN 30% in {ordered}/10 (need 8 each); "
        f"{elapsed / 60:.1f} min (limit 30)",
    )
    assert ok


# --- 8 ----------------------------------------------------------------------------------------------


def test_criterion_8_metric_units():
    checks = []
    n4 = tuple("ABCD")
    truth = UGraph(n4, frozenset({(0, 1), (1, 2), (2, 3)}))
    checks.append(adjacency_confusion(truth, truth) == ConfusionCounts(3, 0, 0, 3))
    checks.append(adjacency_confusion(UGraph(n4, frozenset()), truth) == ConfusionCounts(0, 0, 3, 3))
    d = Dag(n4, frozenset({(0, 1), (1, 2)}))
    c = arrowhead_confusion(d, d)
    checks.append(c.fp == c.fn == 0)
    c = arrowhead_confusion(Dag(n4, frozenset({(1, 0), (1, 2)})), d)
    checks.append((c.fp, c.fn) == (1, 1))
    r = metrics(ConfusionCounts(3, 1, 2, 9))
    checks.append((r.error, r.precision, r.recall, r.edge_distance) == (0.2, 0.75, 0.6, 3))
    checks.append(abs(r.fscore - 2 / 3) < 1e-4)
    r = metrics(ConfusionCounts(3, 0, 0, 3))
    checks.append((r.error, r.precision, r.fscore, r.edge_distance) == (0.0, 1.0, 1.0, 0))
    full = UGraph(tuple("abc"), frozenset({(0, 1), (0, 2), (1, 2)}))
    checks.append(metrics(adjacency_confusion(full, UGraph(tuple("abc"), frozenset()))).error == 1.0)
    t = degree_table([Dag(("A", "B"), frozenset({(0, 1)}))])
    checks.append(t.rows() == [("A", 1, 0, 1), ("B", 1, 1, 0)] and t.grand_total == 2)
    rd = random_dag(6, 7, np.random.default_rng(0))
    t1, t3 = degree_table([rd]), degree_table([rd] * 3)
    checks.append(t3.in_degree == tuple(3 * x for x in t1.in_degree) and t3.out_degree == tuple(3 * x for x in t1.out_degree))
    ab = Dag(("A", "B", "C"), frozenset({(0, 1)}))
    checks.append(connection_counts([ab] * 3)[0, 1] == 3)
    checks.append(connection_counts([ab, Dag(("A", "B", "C"), frozenset({(1, 2)}))]).max() <= 1)
    pt = proportion_test(5, 10, 5, 10)
    checks.append(pt.z == 0 and pt.pvalue == 0.5)
    pt = proportion_test(12, 15, 4, 15)
    ref = abs(pt.z - 2.93) <= 1e-2 and abs(pt.pvalue - 0.0017) <= 1e-3
    checks.append(ref)
    checks.append(proportion_test(15, 15, 0, 15).pvalue < 1e-6)
    ok = all(checks)
    report(8, ok, f"{sum(checks)}/{len(checks)} metric examples exact; z={pt.z:.4f}, p={pt.pvalue:.5f}")
    assert ok


# --- 9 ----------------------------------------------------------------------------------------------


def test_criterion_9_replay_determinism(tmp_path):
    fast = ["--n-samples", "20", "--burn-in", "30", "--n-leapfrog", "8", "--max-em-iters", "2"]
    sim = tmp_path / "sim"
    base = tmp_path / "base.adj"
    base.write_text("A -> B\nB -> C\nA -> D\nD -> E\n")
    sweep = tmp_path / "sweep.json"
    sweep.write_text(
        json.dumps(
            {
                "kind": "synth",
                "m": 2,
                "p": 4,
                "n": 30,
                "density": 0.3,
                "repeats": 1,
                "methods": ["sig", "avg", "mtgbn"],
                "learn": {"n_samples": 10, "burn_in": 20, "n_leapfrog": 5, "max_em_iters": 1},
            }
        )
    )
    runs = {
        "simulate": ["simulate", "--out", str(sim), "--m", "3", "--p", "5", "--n", "40", "--seed", "2"],
        "perturb": ["simulate", "--out", str(tmp_path / "pert"), "--mode", "perturb", "--base", str(base), "--m", "2", "--n", "20"],
        "sig": ["learn", "--out", str(tmp_path / "sig"), "--method", "sig", "--tasks", str(sim / "task_*.csv")],
        "avg": ["learn", "--out", str(tmp_path / "avg"), "--method", "avg", "--tasks", str(sim / "task_*.csv")],
        "mtgbn": ["learn", "--out", str(tmp_path / "mtgbn"), "--method", "mtgbn", "--tasks", str(sim / "task_*.csv"), *fast],
        "eval": ["eval", "--out", str(tmp_path / "eval"), "--learned", str(tmp_path / "sig" / "dag_*.adj"), "--truth", str(sim / "graph_*.adj")],
        "degrees": ["degrees", "--out", str(tmp_path / "deg"), "--dags", str(tmp_path / "mtgbn" / "dag_*.adj")],
        "compare": ["compare", "--out", str(tmp_path / "cmp"), "--sweep", str(sweep)],
    }
    same = []
    for name, argv in runs.items():
        assert main(argv) == 0, name
        out = tmp_path / argv[argv.index("--out") + 1].rsplit("/", 1)[-1]
        again = tmp_path / f"{name}_replay"
        assert main(["replay", "--manifest", str(out / "manifest.json"), "--out", str(again)]) == 0, name
        outputs = [o for o in json.loads((out / "manifest.json").read_text())["outputs"] if o != "run_log.jsonl"]
        same.append(all((out / o).read_bytes() == (again / o).read_bytes() for o in outputs))
    ok = all(same)
    report(9, ok, f"{sum(same)}/{len(same)} commands byte-identical on replay ({', '.join(runs)})")
    assert ok


# --- 10 ---------------------------------------------------------------------------------------------


def test_criterion_10_generator_self_check():
    failures, densities = [], []
    for seed in range(10):
        spec = SynthSpec(m=10, p=15, n=250, density=0.3, seed=seed)
        out = generate_synthetic(spec)
        for g, omega, task in zip(out.graphs, out.precisions, out.tasks):
            inv_ok = np.max(np.abs(np.linalg.inv(omega) @ omega - np.eye(15))) < 1e-8
            spd_ok = np.linalg.eigvalsh(omega).min() > 0
            pattern_ok = all((omega[i, j] != 0) == g.has_edge(i, j) for i in range(15) for j in range(i + 1, 15))
            shape_ok = task.n == 250 and task.p == 15
            if not (inv_ok and spd_ok and pattern_ok and shape_ok):
                failures.append(seed)
        densities.append(float(np.mean([realized_density(g) for g in out.graphs])))
    worst = max(abs(d - 0.3) for d in densities)
    ok = not failures and worst <= 0.05
    report(10, ok, f"10 seeds, invariant failures {len(failures)}, worst mean-density deviation {worst:.4f} (limit 0.05)")
    assert ok
