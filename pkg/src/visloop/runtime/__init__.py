"""Episode loop, traces, replay and baseline procedures."""

from .baselines import TournamentFailed, TournamentResult, run_sampling_tournament, step_budget_sweep
from .episode import (BUDGET_EXHAUSTED, PARSE_BUDGET_EXCEEDED, PROVIDER_FAILURE, WRONG_ANSWER, AnswerRecord,
                      Episode, EpisodeOver, Outcome, replay, run, step)
from .trace import ImageStore, TraceWriter, load_trace, trace_digests

__all__ = ["TournamentFailed", "TournamentResult", "run_sampling_tournament", "step_budget_sweep",
           "BUDGET_EXHAUSTED", "PARSE_BUDGET_EXCEEDED", "PROVIDER_FAILURE", "WRONG_ANSWER", "AnswerRecord",
           "Episode", "EpisodeOver", "Outcome", "replay", "run", "step", "ImageStore", "TraceWriter",
           "load_trace", "trace_digests"]
