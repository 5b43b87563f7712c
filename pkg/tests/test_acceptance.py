"""The twelve acceptance criteria, one test each, each printing a PASS/FAIL line."""
import time
from dataclasses import replace

import numpy as np
import pytest
from scipy.stats import spearmanr

from conftest import make_game, record_criterion
from oracles import proposer_optimal
from sarasim import harness
from sarasim.baselines import assignment_solve, assignment_value, brute_force_optimal, context_unaware_matching
from sarasim.datasets import synth_social
from sarasim.matching import (Game, GameConfig, player_utilities, rb_utilities, run_sara,
                              verify_two_sided_stability)
from sarasim.phy import Band, RBlock
from sarasim.social import TieHyper, TieModelParams, infer_ties, log_posterior, log_posterior_grad

SEEDS = tuple(range(100))
SIZES = (30, 50, 70)


@pytest.fixture(scope="session")
def base_cfg():
    # environment overrides apply, so SARASIM_SOCIAL_DATASET_DIR / SARASIM_SOCIAL_EGO
    # switch the tie pool to a real SNAP ego network
    return replace(harness.load_config(), seeds=SEEDS, algorithms=("sara", "context_unaware"))


@pytest.fixture(scope="session")
def pool(base_cfg):
    return harness.tie_pool(base_cfg)


@pytest.fixture(scope="session")
def default_runs(base_cfg, pool):
    """size -> {algorithm: [RunMetrics per seed]} at the default setup."""
    out = {}
    for m_u in SIZES:
        cfg = replace(base_cfg, m_u=m_u)
        runs = [m for s in SEEDS for m in harness.run_seed(cfg, s, pool)]
        out[m_u] = {alg: [m for m in runs if m.algorithm == alg] for alg in cfg.algorithms}
    return out


def source_label(cfg):
    if cfg.source == "ego" and cfg.dataset_dir == "synthetic":
        return "synthetic ego network"
    if cfg.source == "ego":
        return f"ego {cfg.ego} from {cfg.dataset_dir}"
    return cfg.source


def fleet():
    combos = [(L, m_u, m_s) for L in (3, 7) for m_u in (10, 20, 30) for m_s in (2, 4)]
    for i in range(200):
        L, m_u, m_s = combos[i % len(combos)]
        yield harness.ScenarioConfig(n_scbs=L, m_u=m_u, m_s=m_s, source="random", algorithms=("sara",)), i


# -- 1, 2: stability and convergence -------------------------------------------

@pytest.fixture(scope="session")
def fleet_results():
    t0 = time.perf_counter()
    out = []
    for cfg, seed in fleet():
        inst = harness.build_instance(cfg, seed)
        state, trace = run_sara(inst.game)
        out.append((trace.converged, verify_two_sided_stability(inst.game, state).total,
                    len(trace.rounds), inst.game.default_max_rounds()))
    return out, time.perf_counter() - t0


def test_c01_stability(fleet_results):
    res, secs = fleet_results
    blocking = sum(r[1] for r in res)
    unstable = sum(r[1] > 0 for r in res)
    ok = len(res) == 200 and blocking == 0 and secs < 120
    record_criterion(1, ok, f"{unstable}/200 SARA runs with blocking pairs ({blocking} pairs), {secs:.1f}s")
    assert ok


def test_c02_convergence(fleet_results, default_runs):
    res, _ = fleet_results
    fleet_ok = sum(r[0] and r[2] < r[3] for r in res)
    means = {m_u: np.mean([m.rounds for m in default_runs[m_u]["sara"]]) for m_u in SIZES}
    default_ok = all(m.converged for m_u in SIZES for m in default_runs[m_u]["sara"])
    ok = fleet_ok == 200 and default_ok and all(v < 200 for v in means.values())
    detail = ", ".join(f"M_u={k}: {v:.2f}" for k, v in means.items())
    record_criterion(2, ok, f"fleet converged {fleet_ok}/200; mean rounds at default config {detail}")
    assert ok


# -- 3: message counts --------------------------------------------------------

def identical_game(m_u, n_t):
    # one SCBS, n_t cellular blocks, no SUEs; rate = a_r * b_m gives every UE the
    # same block order and every block the same UE order
    blocks = [RBlock(Band.N1, 0, i) for i in range(n_t)]
    rate = np.outer(np.arange(n_t, 0, -1), np.arange(m_u, 0, -1)).astype(float)
    return Game(blocks, rate, np.zeros((m_u, m_u)), (), GameConfig(1.0, 1.0, 1.0, 1.0))


def test_c03_proposal_counts():
    combos = [(1, 1), (3, 5), (5, 5), (4, 9), (7, 3), (10, 4), (12, 12), (20, 6), (6, 20), (30, 10)]
    bad = []
    for m_u, n_t in combos:
        _, trace = run_sara(identical_game(m_u, n_t))
        expect = m_u * (m_u + 1) // 2 if m_u <= n_t else (m_u + 1) * n_t - n_t * (n_t + 1) // 2
        if trace.total_proposals != expect:
            bad.append((m_u, n_t, trace.total_proposals, expect))
    record_criterion(3, not bad, f"{len(combos) - len(bad)}/{len(combos)} (M_u, N_T) combinations exact")
    assert not bad


# -- 4, 5: oracles ------------------------------------------------------------

def small_instances():
    rng = np.random.default_rng(2024)
    while True:
        L, m_s = int(rng.integers(1, 3)), int(rng.integers(1, 3))
        n1, n2, n3 = (int(v) for v in rng.integers(1, 4, 3))
        m_u = int(rng.integers(1, 7))
        if L * n1 + m_s * n3 <= 6 and L * n2 <= 6:
            yield make_game(int(rng.integers(1 << 30)), L=L, m_u=m_u, m_s=m_s, n=(n1, n2, n3))


def test_c04_proposer_optimal():
    mismatches = 0
    gen = small_instances()
    for _ in range(50):
        g = next(gen)
        st = context_unaware_matching(g)
        plain = g.with_config(g.cfg.without_social())
        empty = plain.state(plain.empty_matching())
        V, U = player_utilities(plain, empty), rb_utilities(plain, empty)
        for players, cols in ((np.array(g.sue_ids), g.n2),
                              (np.array(g.ue_ids), np.concatenate([g.n1, g.n3]))):
            ref = proposer_optimal(V[np.ix_(players, cols)], U[np.ix_(cols, players)])
            got = tuple(int(np.flatnonzero(cols == st.current[p])[0]) if st.current[p] >= 0 else -1
                        for p in players)
            mismatches += ref is None or got != ref
    record_criterion(4, mismatches == 0, f"{mismatches} mismatching stages over 50 instances (2 stages each)")
    assert mismatches == 0


def test_c05_assignment_exact():
    rng = np.random.default_rng(5)
    worst = 0.0
    for i in range(100):
        P, A = (7, 7) if i < 10 else rng.integers(1, 8, 2)
        U = rng.normal(size=(P, A))
        gap = abs(assignment_value(U, assignment_solve(U)) - assignment_value(U, brute_force_optimal(U)))
        worst = max(worst, gap)
    record_criterion(5, worst <= 1e-9, f"max objective gap {worst:.2e} over 100 matrices")
    assert worst <= 1e-9


# -- 6: tie learner -----------------------------------------------------------

def random_problem(rng, D=12, K=5, F=2, T=2):
    from sarasim.social import PairSamples
    data = PairSamples(np.stack([np.arange(D), (np.arange(D) + 1) % D], axis=1),
                       (rng.random((D, K)) < 0.5).astype(float),
                       (rng.random((D, F)) < 0.5).astype(float), rng.standard_normal((D, F, T)))
    params = TieModelParams(rng.standard_normal(K), rng.standard_normal((F, T + 1)),
                            rng.uniform(0.5, 2), rng.uniform(0, 1), rng.uniform(0, 1))
    return params, rng.standard_normal(D), data


def fd_error(params, z, data, h=1e-6):
    K = params.w.size
    flat = np.concatenate([params.w, params.rho.ravel(), z])

    def f(v):
        p = TieModelParams(v[:K], v[K:K + params.rho.size].reshape(params.rho.shape), params.upsilon,
                           params.lambda_w, params.lambda_rho)
        return log_posterior(p, v[K + params.rho.size:], data)

    num = np.array([(f(flat + h * e) - f(flat - h * e)) / (2 * h) for e in np.eye(flat.size)])
    gw, gz, grho = log_posterior_grad(params, z, data)
    ana = np.concatenate([gw, grho.ravel(), gz])
    return np.linalg.norm(ana - num) / max(np.linalg.norm(num), 1.0)


def test_c06_tie_learner():
    rng = np.random.default_rng(6)
    grad_err = max(fd_error(*random_problem(rng)) for _ in range(50))
    drops = 0
    for seed in range(10):
        data, _ = synth_social(10, 0.3, seed)
        drops += np.any(np.diff(infer_ties(data, TieHyper(max_iters=200), seed).trace) < -1e-9)
    data, planted = synth_social(20, 0.3, 0)
    fit = infer_ties(data, TieHyper(), 0)
    iu = np.triu_indices(20, 1)
    rs = spearmanr(fit.ties.z[iu], planted.z[iu]).statistic
    ok = grad_err <= 1e-5 and drops == 0 and rs > 0.8
    record_criterion(6, ok, f"gradient rel. error {grad_err:.1e}, {drops} non-monotone traces, "
                            f"Spearman {rs:.3f}")
    assert ok


# -- 7-10: directional Monte-Carlo claims -------------------------------------

def test_c07_cluster_tie(base_cfg, default_runs):
    runs = default_runs[70]
    s = np.array([m.avg_cluster_tie for m in runs["sara"]])
    u = np.array([m.avg_cluster_tie for m in runs["context_unaware"]])
    wins, ratio = float(np.mean(s > u)), s.mean() / u.mean()
    ok = wins >= 0.9 and ratio > 1.2
    record_criterion(7, ok, f"M_u=70 ({source_label(base_cfg)}): SARA ahead in {wins:.0%} of seeds "
                            f"(need >= 90%), tie ratio {ratio:.3f} (need > 1.2)")
    assert ok


def test_c08_sum_rate(default_runs):
    ratios = {m_u: np.mean([m.sum_rate for m in default_runs[m_u]["sara"]])
              / np.mean([m.sum_rate for m in default_runs[m_u]["context_unaware"]]) for m_u in SIZES}
    ok = all(r >= 0.9 for r in ratios.values())
    record_criterion(8, ok, "SARA/unaware sum rate " + ", ".join(f"M_u={k}: {v:.3f}" for k, v in ratios.items()))
    assert ok


def test_c09_offload(default_runs):
    ratios = {m_u: np.mean([m.expected_offload for m in default_runs[m_u]["sara"]])
              / np.mean([m.expected_offload for m in default_runs[m_u]["context_unaware"]]) for m_u in SIZES}
    ok = all(r > 1.0 for r in ratios.values()) and ratios[70] > 1.3
    record_criterion(9, ok, "offload ratio " + ", ".join(f"M_u={k}: {v:.3f}" for k, v in ratios.items())
                     + " (need > 1.3 at M_u=70)")
    assert ok


def test_c10_offload_vs_n3(base_cfg, pool):
    gaps = []
    for n3 in (3, 5, 8):
        cfg = replace(base_cfg, m_u=30, n3=n3, rho=0.1)
        runs = [m for s in SEEDS for m in harness.run_seed(cfg, s, pool)]
        mean = lambda alg: np.mean([m.expected_offload for m in runs if m.algorithm == alg])  # noqa: E731
        gaps.append(mean("sara") - mean("context_unaware"))
    ok = all(b >= a for a, b in zip(gaps, gaps[1:]))
    record_criterion(10, ok, "offload gap at n3 = 3, 5, 8: " + ", ".join(f"{g:.3f}" for g in gaps))
    assert ok


# -- 11, 12: exact identities -------------------------------------------------

def test_c11_zero_ties_reduction(base_cfg, pool):
    cfg = replace(base_cfg, m_u=30)
    diff = 0
    for s in SEEDS:
        g = harness.build_instance(cfg, s, pool).game
        g = g.with_ties(np.zeros_like(g.z))
        diff += not np.array_equal(run_sara(g)[0].current, context_unaware_matching(g).current)
    record_criterion(11, diff == 0, f"{diff}/100 seeds differ with Z = 0")
    assert diff == 0


def test_c12_determinism(tmp_path, base_cfg):
    cfg = replace(base_cfg, m_u=20, seeds=tuple(range(20)), algorithms=harness.ALGORITHMS)
    blobs = []
    for i, workers in enumerate((1, 1, 2)):
        path = tmp_path / f"mc{i}.csv"
        harness.emit_csv(harness.monte_carlo(cfg, workers=workers), path)
        blobs.append(path.read_bytes())
    ok = blobs[0] == blobs[1] == blobs[2]
    record_criterion(12, ok, "repeated monte_carlo CSVs byte-identical (1, 1 and 2 workers)")
    assert ok
