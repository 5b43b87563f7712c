"""Proposer-side deferred acceptance with synchronous proposal rounds."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class ProposalLog:
    """Per-iteration message counts of one deferred-acceptance run.

    Each iteration's proposals are either held at its end (``acceptances``)
    or turned down (``rejections``). ``displaced`` counts previously held
    proposers bumped by a better applicant; ``displacements`` records them as
    (iteration, acceptor, bumped proposer, new proposer).
    """

    proposals: list = field(default_factory=list)
    acceptances: list = field(default_factory=list)
    rejections: list = field(default_factory=list)
    displaced: list = field(default_factory=list)
    displacements: list = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.proposals)

    @property
    def total_proposals(self) -> int:
        return int(sum(self.proposals))

    def to_dict(self) -> dict:
        return {"proposals": self.proposals, "acceptances": self.acceptances,
                "rejections": self.rejections, "displaced": self.displaced}


def preference_lists(utils: np.ndarray) -> list:
    """Acceptable columns of each row, best first; ties go to the lower column."""
    utils = np.asarray(utils, dtype=float)
    cols = np.arange(utils.shape[1])
    out = []
    for row in utils:
        order = np.lexsort((cols, -row))
        out.append([int(c) for c in order if np.isfinite(row[c])])
    return out


def rank_table(utils: np.ndarray) -> np.ndarray:
    """rank[i, j] = position of column j in row i's strict order (lower is better)."""
    utils = np.asarray(utils, dtype=float)
    cols = np.arange(utils.shape[1])
    rank = np.empty(utils.shape, dtype=int)
    for i, row in enumerate(utils):
        rank[i, np.lexsort((cols, -row))] = cols
    return rank


def deferred_acceptance(proposer_utils, acceptor_utils):
    """Match proposers (rows of ``proposer_utils``) to acceptors.

    ``proposer_utils`` is (P, A), ``acceptor_utils`` is (A, P); -inf marks an
    unacceptable partner. Acceptors hold their best applicant so far and
    prefer any acceptable applicant to staying vacant. Returns the acceptor
    index for each proposer (-1 if unmatched) and the ProposalLog.
    """
    pu = np.asarray(proposer_utils, dtype=float)
    au = np.asarray(acceptor_utils, dtype=float)
    P = pu.shape[0]
    A = pu.shape[1] if pu.ndim == 2 else 0
    match = np.full(P, -1, dtype=int)
    log = ProposalLog()
    if P == 0 or A == 0:
        return match, log
    if au.shape != (A, P):
        raise ValueError(f"acceptor utilities must be {(A, P)}, got {au.shape}")
    prefs = preference_lists(pu)
    rank = rank_table(au)
    acceptable = np.isfinite(au)
    nxt = [0] * P
    held = [-1] * A
    free = [p for p in range(P) if prefs[p]]
    it = 0
    while free:
        it += 1
        apps = {}
        for p in free:
            a = prefs[p][nxt[p]]
            nxt[p] += 1
            apps.setdefault(a, []).append(p)
        accepted = rejected = bumped = 0
        next_free = []
        for a in sorted(apps):
            applicants = [p for p in apps[a] if acceptable[a, p]]
            rejected_here = [p for p in apps[a] if not acceptable[a, p]]
            best = min(applicants, key=lambda p: rank[a, p]) if applicants else -1
            cur = held[a]
            if best >= 0 and (cur < 0 or rank[a, best] < rank[a, cur]):
                if cur >= 0:
                    bumped += 1
                    log.displacements.append((it, a, cur, best))
                    match[cur] = -1
                    next_free.append(cur)
                held[a] = best
                match[best] = a
                accepted += 1
                rejected_here += [p for p in applicants if p != best]
            else:
                rejected_here += applicants
            rejected += len(rejected_here)
            next_free += rejected_here
        log.proposals.append(len(free))
        log.acceptances.append(accepted)
        log.rejections.append(rejected)
        log.displaced.append(bumped)
        free = sorted(p for p in next_free if nxt[p] < len(prefs[p]))
    return match, log
