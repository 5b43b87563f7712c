import itertools

import numpy as np
import pytest

from conftest import make_game
from sarasim.baselines import (assignment_solve, assignment_value, brute_force_optimal,
                               centralized_context_aware, centralized_context_unaware,
                               context_unaware_matching)
from sarasim.matching import run_sara, welfare


def test_diagonal_dominant_is_identity():
    U = np.eye(3) * 10 + 1
    assert assignment_solve(U).tolist() == [0, 1, 2]


def test_all_equal_is_perfect_and_repeatable():
    a = assignment_solve(np.ones((4, 4)))
    assert sorted(a.tolist()) == [0, 1, 2, 3]
    assert np.array_equal(a, assignment_solve(np.ones((4, 4))))


def test_forbidden_and_negative_entries():
    U = np.array([[-np.inf, 2.0], [-np.inf, 3.0], [-1.0, -np.inf]])
    a = assignment_solve(U)
    assert a.tolist() == [-1, 1, -1]  # the row with only a negative option stays out
    assert assignment_solve(np.zeros((0, 3))).size == 0
    assert assignment_solve(np.zeros((2, 0))).tolist() == [-1, -1]
    with pytest.raises(ValueError):
        assignment_solve(np.zeros(3))


def test_square_matches_permutation_enumeration():
    rng = np.random.default_rng(0)
    for _ in range(20):
        U = rng.random((6, 6))
        best = max(sum(U[i, p[i]] for i in range(6)) for p in itertools.permutations(range(6)))
        assert assignment_value(U, assignment_solve(U)) == pytest.approx(best, abs=1e-9)


def test_rectangular_matches_brute_force():
    rng = np.random.default_rng(1)
    for _ in range(60):
        P, A = rng.integers(1, 7, 2)
        U = rng.normal(size=(P, A))
        U[rng.random(U.shape) < 0.2] = -np.inf
        ref = brute_force_optimal(U)
        assert assignment_value(U, assignment_solve(U)) == pytest.approx(assignment_value(U, ref), abs=1e-9)


def test_brute_force_guard():
    with pytest.raises(ValueError):
        brute_force_optimal(np.zeros((9, 2)))


def test_unaware_is_deterministic_and_valid():
    g = make_game(0, m_u=15)
    a, b = context_unaware_matching(g), context_unaware_matching(g)
    assert np.array_equal(a.current, b.current)
    g.check_matching(a.current)
    assert a.info["converged"] and a.round == 1


def test_centralized_unaware_beats_distributed_on_rate():
    for seed in range(20):
        g = make_game(seed, m_u=12)
        users = np.arange(g.n_users)

        def total(st):
            ok = st.current >= 0
            return g.rate[st.current[ok], users[ok]].sum()

        cu = centralized_context_unaware(g)
        g.check_matching(cu.current)
        assert total(cu) >= total(context_unaware_matching(g)) - 1e-6


def test_centralized_aware_with_zero_ties_is_unaware():
    for seed in range(10):
        g = make_game(seed, m_u=10)
        g = g.with_ties(np.zeros_like(g.z))
        assert np.array_equal(centralized_context_aware(g).current, centralized_context_unaware(g).current)


def test_centralized_aware_usually_beats_sara():
    wins = 0
    for seed in range(100):
        g = make_game(seed, m_u=10)
        ca = centralized_context_aware(g)
        g.check_matching(ca.current)
        wins += ca.info["welfare"] >= welfare(g, run_sara(g)[0].current) - 1e-9
    assert wins >= 95


def test_iteration_cap_flag():
    g = make_game(2, m_u=12)
    capped = centralized_context_aware(g, max_iters=1)
    assert not capped.info["converged"] and capped.round == 1
