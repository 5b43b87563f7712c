"""Players, resource blocks and utilities of the UE/RB matching game."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..phy import Band, ChannelRealization, RBlock, SpectrumPlan, Topology, enumerate_blocks, rate_table


@dataclass(frozen=True)
class GameConfig:
    """Social weights in bit/s per unit tie and the round cap for SARA."""

    alpha: float
    beta: float
    nu: float
    kappa: float
    max_rounds: Optional[int] = None

    def __post_init__(self):
        if min(self.alpha, self.beta, self.nu, self.kappa) < 0:
            raise ValueError("social weights must be nonnegative")

    @classmethod
    def half_bandwidth(cls, bandwidth_hz: float, max_rounds: Optional[int] = None) -> "GameConfig":
        w = bandwidth_hz / 2.0
        return cls(w, w, w, w, max_rounds)

    def without_social(self) -> "GameConfig":
        return GameConfig(0.0, 0.0, 0.0, 0.0, self.max_rounds)


class Game:
    """Precomputed inputs of one allocation game.

    ``rate[r, m]`` is the achievable rate of user ``m`` on block ``blocks[r]``.
    Blocks are kept in canonical order (band, owner, index), which is also
    the player-side tie-break order.
    """

    def __init__(self, blocks: Sequence[RBlock], rate: np.ndarray, z: np.ndarray,
                 sue_ids: Sequence[int], cfg: GameConfig):
        self.blocks = list(blocks)
        if self.blocks != sorted(self.blocks):
            raise ValueError("blocks must be in canonical (band, owner, index) order")
        self.rate = np.asarray(rate, dtype=float)
        self.z = np.asarray(getattr(z, "z", z), dtype=float)
        self.n_users = self.z.shape[0]
        if self.rate.shape != (len(self.blocks), self.n_users):
            raise ValueError(f"rate table shape {self.rate.shape} does not match blocks x users")
        self.sue_ids = tuple(sorted(int(s) for s in sue_ids))
        sues = set(self.sue_ids)
        self.ue_ids = tuple(m for m in range(self.n_users) if m not in sues)
        self.cfg = cfg
        self.band = np.array([int(b.band) for b in self.blocks], dtype=int)
        self.n1 = np.flatnonzero(self.band == Band.N1)
        self.n2 = np.flatnonzero(self.band == Band.N2)
        self.n3 = np.flatnonzero(self.band == Band.N3)
        # for N3 blocks: column of the owning SUE in the (users, SUEs) membership arrays
        self.sue_col = np.full(len(self.blocks), -1, dtype=int)
        for r in self.n3:
            owner = self.blocks[r].owner
            if owner not in sues:
                raise ValueError(f"D2D block {self.blocks[r]} is not owned by an SUE")
            self.sue_col[r] = self.sue_ids.index(owner)
        is_sue = np.zeros(self.n_users, dtype=bool)
        is_sue[list(self.sue_ids)] = True
        self.is_sue = is_sue
        self.compat = np.where((self.band == Band.N2)[:, None], is_sue[None, :], ~is_sue[None, :])
        self.index = {b: r for r, b in enumerate(self.blocks)}

    @classmethod
    def from_network(cls, topology: Topology, plan: SpectrumPlan, channels: ChannelRealization,
                     z, cfg: GameConfig) -> "Game":
        blocks = enumerate_blocks(plan, topology.n_scbs, topology.sue_ids)
        rate = rate_table(channels, blocks, plan.rb_bandwidth_hz)
        return cls(blocks, rate, z, topology.sue_ids, cfg)

    def with_config(self, cfg: GameConfig) -> "Game":
        return Game(self.blocks, self.rate, self.z, self.sue_ids, cfg)

    def with_ties(self, z) -> "Game":
        return Game(self.blocks, self.rate, z, self.sue_ids, self.cfg)

    @property
    def n_sues(self) -> int:
        return len(self.sue_ids)

    @property
    def n_total(self) -> int:
        """Blocks offered to plain UEs."""
        return len(self.n1) + len(self.n3)

    def default_max_rounds(self) -> int:
        if self.cfg.max_rounds is not None:
            return self.cfg.max_rounds
        return 10 * (self.n_users + self.n_total)

    # -- matchings -----------------------------------------------------------

    def empty_matching(self) -> np.ndarray:
        return np.full(self.n_users, -1, dtype=int)

    def check_matching(self, user_rb: np.ndarray) -> None:
        user_rb = np.asarray(user_rb)
        if user_rb.shape != (self.n_users,):
            raise ValueError("matching must assign one entry per user")
        used = user_rb[user_rb >= 0]
        if len(set(used.tolist())) != len(used):
            raise ValueError("a block is matched to more than one user")
        for m, r in enumerate(user_rb):
            if r >= 0 and not self.compat[r, m]:
                raise ValueError(f"user {m} cannot use block {self.blocks[r]}")

    def membership(self, user_rb: np.ndarray) -> np.ndarray:
        """(users, SUEs) indicator of D2D cluster membership."""
        a = np.zeros((self.n_users, self.n_sues), dtype=bool)
        users = np.flatnonzero(user_rb >= 0)
        cols = self.sue_col[user_rb[users]]
        keep = cols >= 0
        a[users[keep], cols[keep]] = True
        return a

    def clusters(self, user_rb: np.ndarray) -> dict:
        a = self.membership(user_rb)
        return {s: frozenset(np.flatnonzero(a[:, k]).tolist()) for k, s in enumerate(self.sue_ids)}

    def state(self, current, previous=None, round: int = 0, *, ignored=None, left=None,
              **info) -> "MatchState":
        current = np.asarray(current, dtype=int)
        previous = self.empty_matching() if previous is None else np.asarray(previous, dtype=int)
        a_mu = self.membership(current)
        shape = a_mu.shape
        ignored = np.zeros(shape, dtype=bool) if ignored is None else np.asarray(ignored, dtype=bool)
        left = np.zeros(shape, dtype=bool) if left is None else np.asarray(left, dtype=bool)
        a_mumu = a_mu & self.membership(previous) & ~ignored
        return MatchState(current, previous, a_mu, a_mumu, round, dict(info), ignored, left)

    def advance(self, state: "MatchState", new) -> "MatchState":
        """State after ``new`` replaces ``state.current``, carrying peer memory forward.

        A UE that rejoins a cluster it left earlier has oscillated; its
        membership there stops counting as a peer effect from then on.
        """
        new = np.asarray(new, dtype=int)
        a_new = self.membership(new)
        left = state.left | (state.a_mu & ~a_new)
        ignored = state.ignored | (left & a_new & ~state.a_mu)
        return self.state(new, state.current, state.round + 1, ignored=ignored, left=left)

    def pairs(self, user_rb: np.ndarray) -> dict:
        return {self.blocks[r]: m for m, r in enumerate(user_rb) if r >= 0}


@dataclass
class MatchState:
    """A matching plus the cluster coefficients it broadcasts.

    ``current``/``previous`` map each user to a block row (-1 if unmatched).
    ``a_mu[m, k]`` marks UE ``m`` in the cluster of the k-th SUE; ``a_mumu``
    marks membership in both of the two most recent matchings, excluding
    memberships in ``ignored``. ``left`` remembers every cluster a UE has
    departed from.
    """

    current: np.ndarray
    previous: np.ndarray
    a_mu: np.ndarray
    a_mumu: np.ndarray
    round: int = 0
    info: dict = field(default_factory=dict)
    ignored: np.ndarray = None
    left: np.ndarray = None

    def __post_init__(self):
        if self.ignored is None:
            self.ignored = np.zeros_like(self.a_mu, dtype=bool)
        if self.left is None:
            self.left = np.zeros_like(self.a_mu, dtype=bool)

    def clusters(self, game: Game) -> dict:
        return game.clusters(self.current)

    def rb_user(self, n_blocks: int) -> np.ndarray:
        out = np.full(n_blocks, -1, dtype=int)
        users = np.flatnonzero(self.current >= 0)
        out[self.current[users]] = users
        return out


# -- utilities ---------------------------------------------------------------

def peer_term(game: Game, state: MatchState) -> np.ndarray:
    """sum_{j != m} a_mumu[j, k] * z[m, j], shaped (users, SUEs)."""
    a = state.a_mumu.astype(float)
    return game.z @ a - np.diag(game.z)[:, None] * a


def cluster_strength(game: Game, state: MatchState) -> np.ndarray:
    """X_k = sum_m a_mu[m, k] * z[m, sue_k] for every SUE."""
    sue_cols = game.z[:, list(game.sue_ids)]
    return (state.a_mu * sue_cols).sum(axis=0)


def player_utilities(game: Game, state: MatchState) -> np.ndarray:
    """Utility of each user for each block, (users, blocks); -inf where incompatible."""
    cfg = game.cfg
    V = game.rate.T.copy()
    if len(game.n3):
        k = game.sue_col[game.n3]
        sues = np.array(game.sue_ids)[k]
        social = game.z[:, sues] + peer_term(game, state)[:, k]
        V[:, game.n3] += cfg.alpha * social
    V[~game.compat.T] = -np.inf
    return V


def rb_utilities(game: Game, state: MatchState) -> np.ndarray:
    """Utility of each block for each user, (blocks, users); -inf where incompatible."""
    cfg = game.cfg
    U = game.rate.copy()
    if len(game.n1):
        ties_to_sues = game.z[:, list(game.sue_ids)].sum(axis=1) if game.n_sues else np.zeros(game.n_users)
        U[game.n1] -= cfg.beta * ties_to_sues[None, :]
    if len(game.n2):
        X = np.zeros(game.n_users)
        X[list(game.sue_ids)] = cluster_strength(game, state)
        U[game.n2] += cfg.nu * X[None, :]
    if len(game.n3):
        sues = np.array(game.sue_ids)[game.sue_col[game.n3]]
        U[game.n3] += cfg.kappa * game.z[:, sues].T
    U[~game.compat] = -np.inf
    return U


# Scalar forms, one per utility definition. They recompute from the formulas
# directly and serve as the reference for the vectorized tables above.

def _rate(game: Game, m: int, rb: RBlock) -> float:
    return float(game.rate[game.index[rb], m])


def _require(cond: bool, msg: str):
    if not cond:
        raise ValueError(msg)


def utility_ue_cellular(game: Game, m: int, rb: RBlock) -> float:
    _require(rb.band == Band.N1 and not game.is_sue[m], "needs a UE and an N1 block")
    return _rate(game, m, rb)


def utility_sue(game: Game, m_s: int, rb: RBlock) -> float:
    _require(rb.band == Band.N2 and game.is_sue[m_s], "needs an SUE and an N2 block")
    return _rate(game, m_s, rb)


def utility_ue_d2d(game: Game, m: int, rb: RBlock, state: MatchState) -> float:
    _require(rb.band == Band.N3, "needs an N3 block")
    if game.is_sue[m]:
        raise ValueError(f"user {m} is an SUE")
    s = rb.owner
    k = game.sue_ids.index(s)
    peers = sum(state.a_mumu[j, k] * game.z[m, j] for j in game.ue_ids if j != m)
    return _rate(game, m, rb) + game.cfg.alpha * (game.z[m, s] + peers)


def utility_rb_n1(game: Game, rb: RBlock, m: int) -> float:
    _require(rb.band == Band.N1 and not game.is_sue[m], "needs a UE and an N1 block")
    return _rate(game, m, rb) - game.cfg.beta * sum(game.z[m, j] for j in game.sue_ids)


def utility_rb_n2(game: Game, rb: RBlock, m_s: int, state: MatchState) -> float:
    _require(rb.band == Band.N2 and game.is_sue[m_s], "needs an SUE and an N2 block")
    k = game.sue_ids.index(m_s)
    x = sum(state.a_mu[m, k] * game.z[m, m_s] for m in game.ue_ids)
    return _rate(game, m_s, rb) + game.cfg.nu * x


def utility_rb_n3(game: Game, rb: RBlock, m: int) -> float:
    _require(rb.band == Band.N3 and not game.is_sue[m], "needs a UE and an N3 block")
    return _rate(game, m, rb) + game.cfg.kappa * game.z[m, rb.owner]


def player_utility(game: Game, m: int, rb: RBlock, state: MatchState) -> float:
    if rb.band == Band.N1:
        return utility_ue_cellular(game, m, rb)
    if rb.band == Band.N2:
        return utility_sue(game, m, rb)
    return utility_ue_d2d(game, m, rb, state)


def rb_utility(game: Game, rb: RBlock, m: int, state: MatchState) -> float:
    if rb.band == Band.N1:
        return utility_rb_n1(game, rb, m)
    if rb.band == Band.N2:
        return utility_rb_n2(game, rb, m, state)
    return utility_rb_n3(game, rb, m)


def welfare(game: Game, user_rb: np.ndarray) -> float:
    """Sum of player utilities with clusters taken from the matching itself."""
    state = game.state(user_rb, user_rb)
    V = player_utilities(game, state)
    users = np.flatnonzero(user_rb >= 0)
    return float(V[users, user_rb[users]].sum())
