"""Topology, spectrum partitioning, channel sampling and link rates.

Bands are orthogonal: N1 carries SCBS->UE traffic, N2 SCBS->SUE traffic and
N3 SUE->UE (D2D) traffic. Within a band, the same block index is reused by
every owner of that band, so co-channel interference only comes from nodes of
the same class.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np


class Band(enum.IntEnum):
    N1 = 1
    N2 = 2
    N3 = 3


class WrongBandError(ValueError):
    pass


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class Position:
    x: float
    y: float


@dataclass(frozen=True)
class Topology:
    """Node placement. ``sue_ids`` index into ``user_positions``."""

    scbs_positions: np.ndarray  # (L, 2) meters
    user_positions: np.ndarray  # (M, 2) meters
    sue_ids: tuple
    area_side: float

    def __post_init__(self):
        for name in ("scbs_positions", "user_positions"):
            arr = np.asarray(getattr(self, name), dtype=float).reshape(-1, 2)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be finite")
            if np.any(arr < 0) or np.any(arr > self.area_side):
                raise ValueError(f"{name} outside the {self.area_side} m deployment square")
            object.__setattr__(self, name, arr)
        sues = tuple(int(s) for s in self.sue_ids)
        if len(set(sues)) != len(sues):
            raise ValueError("duplicate SUE ids")
        if any(s < 0 or s >= self.n_users for s in sues):
            raise ValueError("SUE id out of range")
        object.__setattr__(self, "sue_ids", sues)

    @property
    def n_scbs(self) -> int:
        return self.scbs_positions.shape[0]

    @property
    def n_users(self) -> int:
        return self.user_positions.shape[0]

    @property
    def ue_ids(self) -> tuple:
        sues = set(self.sue_ids)
        return tuple(m for m in range(self.n_users) if m not in sues)

    def position(self, kind: str, idx: int) -> Position:
        arr = self.scbs_positions if kind == "scbs" else self.user_positions
        return Position(*map(float, arr[idx]))


def random_topology(n_scbs: int, n_users: int, sue_ids: Sequence[int], area_side: float,
                    rng: np.random.Generator) -> Topology:
    """Uniform placement of SCBSs then users inside the square area."""
    scbs = rng.uniform(0.0, area_side, size=(n_scbs, 2))
    users = rng.uniform(0.0, area_side, size=(n_users, 2))
    return Topology(scbs, users, tuple(sue_ids), area_side)


@dataclass(frozen=True)
class SpectrumPlan:
    n1: int
    n2: int
    n3: int
    rb_bandwidth_hz: float = 180e3  # 12 subcarriers x 15 kHz

    def __post_init__(self):
        if min(self.n1, self.n2, self.n3) < 0:
            raise ValueError("band sizes must be nonnegative")
        if not self.rb_bandwidth_hz > 0:
            raise ValueError("rb_bandwidth_hz must be positive")

    def n_total(self, n_scbs: int, n_sues: int) -> int:
        """RBs offered to plain UEs (N1 across SCBSs plus N3 across SUEs)."""
        return self.n1 * n_scbs + self.n3 * n_sues


@dataclass(frozen=True, order=True)
class RBlock:
    band: Band
    owner: int  # SCBS id for N1/N2, SUE user id for N3
    index: int

    def __post_init__(self):
        object.__setattr__(self, "band", Band(self.band))

    def __str__(self):
        return f"{self.band.name}:{self.owner}:{self.index}"


def enumerate_blocks(plan: SpectrumPlan, n_scbs: int, sue_ids: Sequence[int]) -> list:
    """All RBs in canonical order: band, then owner, then index."""
    blocks = [RBlock(Band.N1, l, i) for l in range(n_scbs) for i in range(plan.n1)]
    blocks += [RBlock(Band.N2, l, i) for l in range(n_scbs) for i in range(plan.n2)]
    blocks += [RBlock(Band.N3, s, i) for s in sorted(sue_ids) for i in range(plan.n3)]
    return blocks


@dataclass(frozen=True)
class ChannelRealization:
    """Linear power gains, indexed (owner position, block index, user).

    ``cell1``/``cell2`` are shaped (L, n1|n2, M); ``d2d`` is (M_s, n3, M) with
    rows ordered like ``sue_ids``.
    """

    cell1: np.ndarray
    cell2: np.ndarray
    d2d: np.ndarray
    sue_ids: tuple
    noise_variance: float
    scbs_power: float
    sue_power: float
    pathloss_exponent: float

    def __post_init__(self):
        if not self.noise_variance > 0:
            raise ValueError("noise_variance must be positive")
        for name in ("cell1", "cell2", "d2d"):
            if np.any(np.asarray(getattr(self, name)) < 0):
                raise ValueError(f"negative gain in {name}")

    def band_gains(self, band: Band) -> np.ndarray:
        return {Band.N1: self.cell1, Band.N2: self.cell2, Band.N3: self.d2d}[Band(band)]

    def owner_row(self, rb: RBlock) -> int:
        if rb.band == Band.N3:
            return self.sue_ids.index(rb.owner)
        return rb.owner

    def gain(self, rb: RBlock, user: int) -> float:
        return float(self.band_gains(rb.band)[self.owner_row(rb), rb.index, user])

    def power(self, band: Band) -> float:
        return self.sue_power if Band(band) == Band.N3 else self.scbs_power

    def with_powers(self, scbs_power=None, sue_power=None) -> "ChannelRealization":
        return ChannelRealization(
            self.cell1, self.cell2, self.d2d, self.sue_ids, self.noise_variance,
            self.scbs_power if scbs_power is None else scbs_power,
            self.sue_power if sue_power is None else sue_power,
            self.pathloss_exponent)


def pathloss(distance, exponent: float, d_min: Optional[float] = 1.0):
    """d**-exponent with distances clamped below at ``d_min``."""
    d = np.asarray(distance, dtype=float)
    if d_min is None or d_min <= 0:
        if np.any(d <= 0):
            raise ValueError("zero distance with no near-field clamp configured")
    else:
        d = np.maximum(d, d_min)
    return d ** (-exponent)


def _distances(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    return np.linalg.norm(src[:, None, :] - dst[None, :, :], axis=-1)


def sample_channels(topology: Topology, plan: SpectrumPlan, seed, *,
                    pathloss_exponent: float = 3.0, d_min: Optional[float] = 1.0,
                    noise_variance: float = dbm_to_watts(-90.0),
                    scbs_power: float = 2.0, sue_power: float = 10e-3) -> ChannelRealization:
    """Pathloss times unit-mean exponential fading, one draw per (node, RB, user)."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    users = topology.user_positions
    sues = topology.sue_ids
    pl_cell = pathloss(_distances(topology.scbs_positions, users), pathloss_exponent, d_min)
    if sues:
        pl_d2d = pathloss(_distances(users[list(sues)], users), pathloss_exponent, d_min)
    else:
        pl_d2d = np.zeros((0, topology.n_users))
    L, M, S = topology.n_scbs, topology.n_users, len(sues)
    cell1 = pl_cell[:, None, :] * rng.exponential(1.0, size=(L, plan.n1, M))
    cell2 = pl_cell[:, None, :] * rng.exponential(1.0, size=(L, plan.n2, M))
    d2d = pl_d2d[:, None, :] * rng.exponential(1.0, size=(S, plan.n3, M))
    return ChannelRealization(cell1, cell2, d2d, tuple(sues), noise_variance,
                              scbs_power, sue_power, pathloss_exponent)


def band_sinr(ch: ChannelRealization, band: Band, active: Optional[np.ndarray] = None) -> np.ndarray:
    """SINR for every (owner, index, user) of one band.

    ``active`` is an optional (owners, index) boolean mask; when given, only
    active co-channel owners interfere. The default counts every co-channel
    owner as transmitting.
    """
    g = ch.band_gains(band)
    p = ch.power(band)
    n_owner = g.shape[0]
    if active is None:
        active = np.ones(g.shape[:2], dtype=bool)
    received = p * g * np.asarray(active, dtype=bool)[:, :, None]
    out = np.empty_like(g, dtype=float)
    for k in range(n_owner):
        others = np.delete(received, k, axis=0).sum(axis=0)
        out[k] = p * g[k] / (others + ch.noise_variance)
    return out


def _sinr_one(ch: ChannelRealization, rb: RBlock, user: int, active) -> float:
    g = ch.band_gains(rb.band)
    p = ch.power(rb.band)
    row = ch.owner_row(rb)
    interference = 0.0
    for k in range(g.shape[0]):
        if k == row or (active is not None and not active[k, rb.index]):
            continue
        interference += p * g[k, rb.index, user]
    return p * g[row, rb.index, user] / (interference + ch.noise_variance)


def sinr_cellular(ch: ChannelRealization, rb: RBlock, user: int, active=None) -> float:
    """SINR of SCBS ``rb.owner`` to ``user`` over an N1 or N2 block."""
    if rb.band == Band.N3:
        raise WrongBandError(f"{rb} is a D2D block")
    return _sinr_one(ch, rb, user, active)


def sinr_d2d(ch: ChannelRealization, rb: RBlock, user: int, active=None) -> float:
    """SINR of SUE ``rb.owner`` to ``user`` over an N3 block; SCBSs never interfere."""
    if rb.band != Band.N3:
        raise WrongBandError(f"{rb} is not a D2D block")
    return _sinr_one(ch, rb, user, active)


def achievable_rate(bandwidth_hz, sinr):
    """Shannon rate in bit/s."""
    s = np.asarray(sinr, dtype=float)
    if np.any(s < 0) or np.any(np.isnan(s)):
        raise ValueError("sinr must be nonnegative")
    out = bandwidth_hz * np.log2(1.0 + s)
    return float(out) if out.ndim == 0 else out


def rate_table(ch: ChannelRealization, blocks: Sequence[RBlock], bandwidth_hz: float,
               active: Optional[dict] = None) -> np.ndarray:
    """Achievable rate of every user on every block, shaped (len(blocks), M).

    ``active`` optionally maps a band to its activity mask (see ``band_sinr``).
    """
    active = active or {}
    sinr = {b: band_sinr(ch, b, active.get(b)) for b in Band}
    n_users = ch.cell1.shape[2]
    out = np.empty((len(blocks), n_users))
    for r, rb in enumerate(blocks):
        out[r] = sinr[rb.band][ch.owner_row(rb), rb.index]
    return achievable_rate(bandwidth_hz, out)
