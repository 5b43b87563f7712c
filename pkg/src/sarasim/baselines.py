"""Comparators for SARA: rate-only matching, exact assignment and a brute-force oracle."""
from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment

from .matching import Game, MatchState, player_utilities, play_round, welfare

_FORBIDDEN = -1e30


def context_unaware_matching(game: Game) -> MatchState:
    """One SUE/N2 pass and one UE/(N1+N3) pass with every social weight at zero."""
    plain = game.with_config(game.cfg.without_social())
    new, log1, log2 = play_round(plain, plain.state(plain.empty_matching()))
    return game.state(new, round=1, proposals=log1.total_proposals + log2.total_proposals,
                      converged=True)


def assignment_solve(utility) -> np.ndarray:
    """Maximum-weight one-to-one assignment of rows to columns.

    Entries of -inf (or nan) are forbidden pairs; a row may stay unmatched at
    zero utility, so negative entries are only used when nothing better is
    left. Returns the column of each row, -1 when unmatched.
    """
    U = np.asarray(utility, dtype=float)
    if U.ndim != 2:
        raise ValueError("utility must be a matrix")
    P, A = U.shape
    out = np.full(P, -1, dtype=int)
    if P == 0 or A == 0:
        return out
    allowed = np.isfinite(U)
    # one private zero-valued "stay out" column per row
    dummy = np.full((P, P), _FORBIDDEN)
    np.fill_diagonal(dummy, 0.0)
    cost = np.hstack([np.where(allowed, U, _FORBIDDEN), dummy])
    rows, cols = linear_sum_assignment(cost, maximize=True)
    for r, c in zip(rows, cols):
        if c < A and allowed[r, c]:
            out[r] = c
    return out


def assignment_value(utility, assignment) -> float:
    U = np.asarray(utility, dtype=float)
    rows = np.flatnonzero(np.asarray(assignment) >= 0)
    return float(U[rows, np.asarray(assignment)[rows]].sum())


def brute_force_optimal(utility, limit: int = 8) -> np.ndarray:
    """Enumerate every partial injective assignment and keep the best one.

    Exponential; guarded at ``limit`` rows and columns. Ties keep the first
    assignment met in the enumeration order (unmatched first, then columns
    ascending, row by row).
    """
    U = np.asarray(utility, dtype=float)
    P, A = U.shape
    if P > limit or A > limit:
        raise ValueError(f"brute force limited to {limit}x{limit}, got {P}x{A}")
    best_val = -np.inf
    best = np.full(P, -1, dtype=int)
    current = [-1] * P
    used = [False] * A

    def visit(row: int, acc: float):
        nonlocal best_val, best
        if row == P:
            if acc > best_val:
                best_val = acc
                best = np.array(current, dtype=int)
            return
        current[row] = -1
        visit(row + 1, acc)
        for c in range(A):
            if not used[c] and np.isfinite(U[row, c]):
                used[c] = True
                current[row] = c
                visit(row + 1, acc + U[row, c])
                used[c] = False
        current[row] = -1

    visit(0, 0.0)
    return best


def _solve_users(game: Game, V: np.ndarray) -> np.ndarray:
    cols = assignment_solve(V)
    out = game.empty_matching()
    out[cols >= 0] = cols[cols >= 0]
    return out


def centralized_context_unaware(game: Game) -> MatchState:
    """Throughput-maximizing assignment over all users and blocks at once.

    Band compatibility enters as forbidden pairs, so SUE/N2 and UE/(N1+N3)
    decouple inside the one solve.
    """
    V = np.where(game.compat.T, game.rate.T, -np.inf)
    return game.state(_solve_users(game, V), round=1, converged=True)


def centralized_context_aware(game: Game, max_iters: int = 50) -> MatchState:
    """Assignment on social utilities, iterated to a cluster fixed point.

    Each pass solves the assignment with D2D utilities conditioned on the
    clusters of the previous pass (none at first). The result is the pass
    with the highest welfare, where welfare re-evaluates peer terms on the
    clusters that pass itself forms. ``info["converged"]`` is False when the
    cap is hit without a fixed point.
    """
    prev = game.empty_matching()
    best, best_val = None, -np.inf
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        state = game.state(prev, prev)
        new = _solve_users(game, player_utilities(game, state))
        val = welfare(game, new)
        if val > best_val:
            best, best_val = new, val
        if np.array_equal(game.membership(new), game.membership(prev)) and it > 1:
            converged = True
            break
        prev = new
    return game.state(best, round=it, converged=converged, welfare=best_val)
