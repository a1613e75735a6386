"""Python bindings for the conagents C++ runtime."""

import json as _json

from ._conagents import (
    ConagentsError,
    correct_path_f1,
    dedup,
    filter_corpus,
    lexical_similarity,
    max_model_calls,
    success_rate,
)
from . import _conagents

__all__ = [
    "ConagentsError",
    "correct_path_f1",
    "dataset_stats",
    "dedup",
    "filter_corpus",
    "lexical_similarity",
    "max_model_calls",
    "replay",
    "run_suite",
    "success_rate",
]


def run_suite(tasks, tools, script, protocol="auto", alpha=3, beta=3, max_steps=10, workers=1,
              trajectory=None):
    """Run a task suite against a scripted backend and return the report as a dict."""
    return _json.loads(_conagents._run_suite(str(tasks), str(tools), str(script), protocol, alpha, beta,
                                             max_steps, workers, str(trajectory) if trajectory else ""))


def replay(tasks, trajectory):
    """Recompute a report from a trajectory log."""
    return _json.loads(_conagents._replay(str(tasks), str(trajectory)))


def dataset_stats(corpus, trajectory):
    """Dataset statistics over the finished runs in a trajectory log."""
    return _json.loads(_conagents._dataset_stats(str(corpus), str(trajectory)))
