"""Blocking-pair scans for two-sided stability and cluster (S-) stability.

Utilities are evaluated with the cluster coefficients frozen at the given
state; a hypothetical deviation does not re-trigger peer effects.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..phy import Band, RBlock
from .game import Game, MatchState, player_utilities, player_utility, rb_utilities, rb_utility


def blocking_matrix(game: Game, state: MatchState) -> np.ndarray:
    """(users, blocks) mask of blocking pairs under the strict tie-broken orders."""
    V = player_utilities(game, state)
    U = rb_utilities(game, state)
    M, R = V.shape
    cur = state.current
    holder = state.rb_user(R)
    users = np.arange(M)
    blocks = np.arange(R)

    matched = cur >= 0
    v_cur = np.where(matched, V[users, np.where(matched, cur, 0)], -np.inf)
    cur_key = np.where(matched, cur, R)
    player_wants = (V > v_cur[:, None]) | ((V == v_cur[:, None]) & (blocks[None, :] < cur_key[:, None]))
    player_wants &= game.compat.T & (blocks[None, :] != cur[:, None])
    # unmatched users prefer every compatible block to staying out
    player_wants |= (~matched)[:, None] & game.compat.T

    occupied = holder >= 0
    u_cur = np.where(occupied, U[blocks, np.where(occupied, holder, 0)], -np.inf)
    holder_key = np.where(occupied, holder, M)
    rb_wants = (U > u_cur[:, None]) | ((U == u_cur[:, None]) & (users[None, :] < holder_key[:, None]))
    rb_wants &= game.compat & (users[None, :] != holder[:, None])
    rb_wants |= (~occupied)[:, None] & game.compat

    return player_wants & rb_wants.T


def is_blocking_pair(game: Game, state: MatchState, m: int, rb: RBlock) -> bool:
    """Whether ``m`` and ``rb`` both strictly prefer each other to their current partners."""
    r = game.index[rb]
    if not game.compat[r, m] or state.current[m] == r:
        return False
    cur = int(state.current[m])
    if cur >= 0:
        mine = player_utility(game, m, rb, state)
        theirs = player_utility(game, m, game.blocks[cur], state)
        if not (mine > theirs or (mine == theirs and r < cur)):
            return False
    holder = int(state.rb_user(len(game.blocks))[r])
    if holder >= 0:
        mine = rb_utility(game, rb, m, state)
        theirs = rb_utility(game, rb, holder, state)
        if not (mine > theirs or (mine == theirs and m < holder)):
            return False
    return True


@dataclass
class StabilityReport:
    """Blocking pairs grouped by the current position of the user.

    ``d2d``: user on an N3 block; ``sue``: SUE with an N2 block;
    ``cellular``: user on an N1 block; ``unmatched``: user without a block.
    """

    d2d: int = 0
    sue: int = 0
    cellular: int = 0
    unmatched: int = 0
    pairs: list = field(default_factory=list)

    @property
    def total(self) -> int:
        return self.d2d + self.sue + self.cellular + self.unmatched

    @property
    def stable(self) -> bool:
        return self.total == 0

    def as_dict(self) -> dict:
        return {"d2d": self.d2d, "sue": self.sue, "cellular": self.cellular,
                "unmatched": self.unmatched, "total": self.total}


def verify_two_sided_stability(game: Game, state: MatchState) -> StabilityReport:
    report = StabilityReport()
    for m, r in zip(*np.nonzero(blocking_matrix(game, state))):
        cur = state.current[m]
        if game.is_sue[m]:
            report.sue += 1
        elif cur < 0:
            report.unmatched += 1
        elif game.band[cur] == Band.N3:
            report.d2d += 1
        else:
            report.cellular += 1
        report.pairs.append((int(m), game.blocks[r]))
    return report


def verify_s_stability(game: Game, state: MatchState) -> dict:
    """Per-SUE flag: nobody outside can join and no member can leave."""
    blocking = blocking_matrix(game, state)
    out = {}
    for k, s in enumerate(game.sue_ids):
        inside = state.a_mu[:, k]
        own = game.n3[game.sue_col[game.n3] == k]
        foreign = np.setdiff1d(np.concatenate([game.n1, game.n3]), own)
        ues = ~game.is_sue
        join = blocking[np.ix_(ues & ~inside, own)].any()
        leave = blocking[np.ix_(inside, foreign)].any()
        out[s] = not (join or leave)
    return out
