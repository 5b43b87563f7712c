"""The UE/RB matching game with peer effects."""
from .deferred import ProposalLog, deferred_acceptance, preference_lists, rank_table
from .game import (Game, GameConfig, MatchState, player_utilities, rb_utilities, utility_rb_n1,
                   utility_rb_n2, utility_rb_n3, utility_sue, utility_ue_cellular, utility_ue_d2d,
                   welfare)
from .sara import RunTrace, play_round, run_sara
from .stability import (StabilityReport, blocking_matrix, is_blocking_pair, verify_s_stability,
                        verify_two_sided_stability)

__all__ = [
    "Game", "GameConfig", "MatchState", "ProposalLog", "RunTrace", "StabilityReport",
    "blocking_matrix", "deferred_acceptance", "is_blocking_pair", "play_round",
    "player_utilities", "preference_lists", "rank_table", "rb_utilities", "run_sara",
    "utility_rb_n1", "utility_rb_n2", "utility_rb_n3", "utility_sue", "utility_ue_cellular",
    "utility_ue_d2d", "verify_s_stability", "verify_two_sided_stability", "welfare",
]
