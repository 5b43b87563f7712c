"""SNAP ego-network ingestion and synthetic social data.

The SNAP ego-Facebook layout is five whitespace-delimited text files per ego
node: ``<ego>.edges``, ``<ego>.circles``, ``<ego>.feat``, ``<ego>.egofeat`` and
``<ego>.featnames``. Download it from https://snap.stanford.edu/data/ego-Facebook.html;
it is never bundled here.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

from .social import PairSamples, SocialTieMatrix, similarity_vector

SUFFIXES = ("edges", "circles", "feat", "egofeat", "featnames")


class DatasetError(ValueError):
    pass


@dataclass
class EgoNetwork:
    """One ego network with members remapped to dense 0-based indices.

    ``member_ids[k]`` is the original id of dense member ``k``.
    """

    ego: str
    member_ids: list
    features: np.ndarray
    ego_features: np.ndarray
    feature_names: list
    circles: dict = field(default_factory=dict)
    edges: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=int))

    def __post_init__(self):
        n = len(self.member_ids)
        self.features = np.asarray(self.features, dtype=np.int8).reshape(n, -1)
        self.edges = np.asarray(self.edges, dtype=int).reshape(-1, 2)
        if self.features.size and not np.all((self.features == 0) | (self.features == 1)):
            raise DatasetError("feature values must be binary")
        if self.edges.size and (self.edges.min() < 0 or self.edges.max() >= n):
            raise DatasetError("edge references an unknown member")
        for name, members in self.circles.items():
            if any(m < 0 or m >= n for m in members):
                raise DatasetError(f"circle {name} references an unknown member")

    @property
    def n_members(self) -> int:
        return len(self.member_ids)

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n_members, dtype=int)
        np.add.at(deg, self.edges.ravel(), 1)
        return deg

    def circle_membership(self) -> np.ndarray:
        """Boolean (members, circles) incidence matrix in circle order."""
        inc = np.zeros((self.n_members, len(self.circles)), dtype=bool)
        for c, members in enumerate(self.circles.values()):
            inc[list(members), c] = True
        return inc

    def id_map(self) -> dict:
        return {orig: k for k, orig in enumerate(self.member_ids)}


def _parse_int(tok: str, path: Path, lineno: int) -> int:
    try:
        return int(tok)
    except ValueError:
        raise DatasetError(f"{path}:{lineno}: expected an integer, got {tok!r}") from None


def _lines(path: Path):
    if not path.is_file():
        raise DatasetError(f"missing dataset file: {path}")
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                yield lineno, line.rstrip("\n")


def load_ego_facebook(directory, ego) -> EgoNetwork:
    """Parse one SNAP ego network. Errors name the offending file and line."""
    d = Path(directory)
    ego = str(ego)
    paths = {s: d / f"{ego}.{s}" for s in SUFFIXES}
    for p in paths.values():
        if not p.is_file():
            raise DatasetError(f"missing dataset file: {p}")

    names = []
    for lineno, line in _lines(paths["featnames"]):
        parts = line.split(None, 1)
        if len(parts) != 2:
            raise DatasetError(f"{paths['featnames']}:{lineno}: expected '<index> <name>'")
        if _parse_int(parts[0], paths["featnames"], lineno) != len(names):
            raise DatasetError(f"{paths['featnames']}:{lineno}: feature indices must be 0..K-1 in order")
        names.append(parts[1])
    K = len(names)

    rows = {}
    for lineno, line in _lines(paths["feat"]):
        toks = line.split()
        if len(toks) != K + 1:
            raise DatasetError(f"{paths['feat']}:{lineno}: expected {K} features, got {len(toks) - 1}")
        vals = [_parse_int(t, paths["feat"], lineno) for t in toks]
        if any(v not in (0, 1) for v in vals[1:]):
            raise DatasetError(f"{paths['feat']}:{lineno}: non-binary feature value")
        if vals[0] in rows:
            raise DatasetError(f"{paths['feat']}:{lineno}: duplicate member {vals[0]}")
        rows[vals[0]] = vals[1:]
    member_ids = sorted(rows)
    index = {orig: k for k, orig in enumerate(member_ids)}
    features = np.array([rows[m] for m in member_ids], dtype=np.int8).reshape(len(member_ids), K)

    ego_feat = None
    for lineno, line in _lines(paths["egofeat"]):
        toks = line.split()
        if ego_feat is not None:
            raise DatasetError(f"{paths['egofeat']}:{lineno}: expected a single line")
        if len(toks) != K:
            raise DatasetError(f"{paths['egofeat']}:{lineno}: expected {K} features, got {len(toks)}")
        ego_feat = [_parse_int(t, paths["egofeat"], lineno) for t in toks]
    if ego_feat is None:
        ego_feat = [0] * K

    def member(tok, path, lineno):
        orig = _parse_int(tok, path, lineno)
        if orig not in index:
            raise DatasetError(f"{path}:{lineno}: unknown member {orig}")
        return index[orig]

    edges = set()
    for lineno, line in _lines(paths["edges"]):
        toks = line.split()
        if len(toks) != 2:
            raise DatasetError(f"{paths['edges']}:{lineno}: expected two node ids")
        a, b = (member(t, paths["edges"], lineno) for t in toks)
        if a != b:
            edges.add((min(a, b), max(a, b)))

    circles = {}
    for lineno, line in _lines(paths["circles"]):
        toks = line.split()
        name = toks[0]
        if name in circles:
            raise DatasetError(f"{paths['circles']}:{lineno}: duplicate circle {name}")
        circles[name] = tuple(sorted({member(t, paths["circles"], lineno) for t in toks[1:]}))

    return EgoNetwork(ego, member_ids, features, np.array(ego_feat, dtype=np.int8), names,
                      circles, np.array(sorted(edges), dtype=int).reshape(-1, 2))


def dump_ego(net: EgoNetwork, directory) -> None:
    """Write ``net`` in canonical SNAP text form (sorted, deduplicated)."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    ego, ids = net.ego, net.member_ids
    (d / f"{ego}.featnames").write_text("".join(f"{k} {n}\n" for k, n in enumerate(net.feature_names)))
    (d / f"{ego}.feat").write_text("".join(
        f"{ids[k]} " + " ".join(map(str, net.features[k].tolist())) + "\n" for k in range(net.n_members)))
    (d / f"{ego}.egofeat").write_text(" ".join(map(str, net.ego_features.tolist())) + "\n")
    (d / f"{ego}.edges").write_text("".join(f"{ids[a]} {ids[b]}\n" for a, b in net.edges.tolist()))
    (d / f"{ego}.circles").write_text("".join(
        name + "".join(f"\t{ids[m]}" for m in members) + "\n" for name, members in net.circles.items()))


def save_id_map(net: EgoNetwork, path) -> None:
    Path(path).write_text("index,original_id\n" + "".join(
        f"{k},{orig}\n" for k, orig in enumerate(net.member_ids)))


def select_users(net: EgoNetwork, count: int) -> list:
    """Highest-degree members first, lower dense index on ties."""
    if count > net.n_members:
        raise DatasetError(f"requested {count} users but the ego network has {net.n_members}")
    deg = net.degrees()
    return sorted(range(net.n_members), key=lambda k: (-deg[k], k))[:count]


def build_pair_samples(net: EgoNetwork, users: Sequence[int]) -> PairSamples:
    """Every ordered pair of ``users`` as a pair sample.

    Indices in ``pairs`` are positions in ``users``. The single interaction is
    shared circle membership; its side information is the degree of the first
    user of the pair.
    """
    users = list(users)
    M = len(users)
    inc = net.circle_membership()[users]
    shared = (inc.astype(int) @ inc.T.astype(int)) > 0
    deg = net.degrees()[users]
    feats = net.features[users]
    ii, jj = np.where(~np.eye(M, dtype=bool))
    sim = np.array([similarity_vector(feats[i], feats[j]) for i, j in zip(ii, jj)]).reshape(len(ii), -1)
    y = shared[ii, jj].astype(float)[:, None]
    aux = deg[ii].astype(float)[:, None, None]
    return PairSamples(np.stack([ii, jj], axis=1), sim, y, aux)


def synth_social(M: int, density: float, seed, *, n_attrs: int = 12, noise: float = 0.1,
                 rho_true=(-0.02, 3.0)):
    """Pair samples drawn from the tie model with known planted ties.

    ``density`` is the probability that a binary attribute is set. Returns
    ``(samples, planted)`` where ``planted`` is the symmetric matrix of true
    latent strengths.
    """
    rng = np.random.default_rng(seed)
    attrs = (rng.random((M, n_attrs)) < density).astype(np.int8)
    w_true = rng.uniform(0.5, 2.0, size=n_attrs + 1)
    w_true[-1] = -0.5
    planted = np.zeros((M, M))
    for i in range(M):
        for j in range(i + 1, M):
            planted[i, j] = planted[j, i] = similarity_vector(attrs[i], attrs[j]) @ w_true \
                + noise * rng.standard_normal()
    degree = rng.integers(5, 60, size=M).astype(float)
    ii, jj = np.where(~np.eye(M, dtype=bool))
    sim = np.array([similarity_vector(attrs[i], attrs[j]) for i, j in zip(ii, jj)])
    logits = rho_true[0] * degree[ii] + rho_true[1] * planted[ii, jj]
    y = (rng.random(len(ii)) < expit(logits)).astype(float)[:, None]
    samples = PairSamples(np.stack([ii, jj], axis=1), sim, y, degree[ii][:, None, None])
    return samples, SocialTieMatrix(planted)


def synth_ego_network(seed=0, *, n_members: int = 150, n_features: int = 224, n_circles: int = 16,
                      ego: str = "synthetic") -> EgoNetwork:
    """A homophilous ego network shaped like the SNAP ego-Facebook files.

    Circles carry signature features; members of a circle share them with high
    probability and are more likely to be friends.
    """
    rng = np.random.default_rng(seed)
    signatures = [rng.choice(n_features, size=rng.integers(6, 16), replace=False) for _ in range(n_circles)]
    sizes = rng.integers(4, 30, size=n_circles)
    membership = np.zeros((n_members, n_circles), dtype=bool)
    for c, size in enumerate(sizes):
        membership[rng.choice(n_members, size=size, replace=False), c] = True
    features = (rng.random((n_members, n_features)) < 0.02)
    for c, sig in enumerate(signatures):
        rows = np.where(membership[:, c])[0]
        features[np.ix_(rows, sig)] |= rng.random((len(rows), len(sig))) < 0.7
    shared = (membership.astype(int) @ membership.T.astype(int)) > 0
    p = np.where(shared, 0.35, 0.03)
    upper = np.triu(rng.random((n_members, n_members)) < p, k=1)
    edges = np.argwhere(upper)
    circles = {f"circle{c}": tuple(np.where(membership[:, c])[0].tolist())
               for c in range(n_circles)}
    ids = sorted(rng.choice(10 * n_members, size=n_members, replace=False).tolist())
    return EgoNetwork(ego, ids, features.astype(np.int8),
                      (rng.random(n_features) < 0.05).astype(np.int8),
                      [f"feature;anonymized {k}" for k in range(n_features)], circles, edges)
