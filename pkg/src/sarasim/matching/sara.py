"""Socially-aware resource allocation: repeated two-stage deferred acceptance.

Each round runs Stage 1 (SUEs propose to N2 blocks), Stage 2 (UEs propose to
N1 and N3 blocks) and Stage 3 (clusters and their coefficients are rebuilt
from the new matching). Rounds repeat until the clusters stop changing.

A peer counts toward a UE's D2D utility only while it has sat in the cluster
for the two most recent matchings, and never again once it has left and
rejoined that cluster. Every (UE, cluster) coefficient can therefore change
only a bounded number of times, so the coefficients settle and the rounds
terminate.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .deferred import ProposalLog, deferred_acceptance
from .game import Game, MatchState, player_utilities, rb_utilities


@dataclass
class RoundRecord:
    round: int
    stage1: ProposalLog
    stage2: ProposalLog
    matching: list
    clusters: dict

    def lines(self, game: Game):
        clusters = {str(s): sorted(c) for s, c in self.clusters.items()}
        for stage, plog, cols in (("sue_n2", self.stage1, game.n2),
                                  ("ue_n1_n3", self.stage2, np.concatenate([game.n1, game.n3]))):
            cols = set(cols.tolist())
            matches = [[m, str(game.blocks[r])] for m, r in enumerate(self.matching) if r in cols]
            yield {"round": self.round, "stage": stage, "proposals": plog.total_proposals,
                   "iterations": plog.iterations, "matches": matches, "clusters": clusters}


@dataclass
class RunTrace:
    rounds: list = field(default_factory=list)
    converged: bool = False

    @property
    def total_proposals(self) -> int:
        return sum(r.stage1.total_proposals + r.stage2.total_proposals for r in self.rounds)

    def to_jsonl(self, game: Game) -> str:
        return "".join(json.dumps(line, sort_keys=True) + "\n"
                       for rec in self.rounds for line in rec.lines(game))


def play_round(game: Game, state: MatchState):
    """Stages 1 and 2 under the coefficients carried by ``state``."""
    V = player_utilities(game, state)
    U = rb_utilities(game, state)
    new = game.empty_matching()

    sues = np.array(game.sue_ids, dtype=int)
    m1, log1 = deferred_acceptance(V[np.ix_(sues, game.n2)], U[np.ix_(game.n2, sues)])
    for p, a in enumerate(m1):
        if a >= 0:
            new[sues[p]] = game.n2[a]

    ues = np.array(game.ue_ids, dtype=int)
    cols = np.concatenate([game.n1, game.n3])
    m2, log2 = deferred_acceptance(V[np.ix_(ues, cols)], U[np.ix_(cols, ues)])
    for p, a in enumerate(m2):
        if a >= 0:
            new[ues[p]] = cols[a]
    return new, log1, log2


def run_sara(game: Game, max_rounds: Optional[int] = None):
    """Iterate rounds until the cluster coefficients reproduce themselves.

    Returns the final MatchState and the per-round RunTrace. The loop stops
    when the clusters are unchanged across two consecutive matchings and the
    coefficients that drove the last round equal those the final matching
    broadcasts, so the last round's deferred acceptance is also the answer
    under the final coefficients. Hitting ``max_rounds`` returns the last
    state with ``trace.converged`` False.
    """
    if max_rounds is None:
        max_rounds = game.default_max_rounds()
    state = game.state(game.empty_matching())
    trace = RunTrace()
    for rnd in range(1, max_rounds + 1):
        new, log1, log2 = play_round(game, state)
        nxt = game.advance(state, new)
        trace.rounds.append(RoundRecord(rnd, log1, log2, new.tolist(), game.clusters(new)))
        stable = (np.array_equal(nxt.a_mu, state.a_mu) and np.array_equal(nxt.a_mumu, state.a_mumu))
        state = nxt
        if stable:
            trace.converged = True
            break
    state.info.update(converged=trace.converged, proposals=trace.total_proposals)
    return state, trace
