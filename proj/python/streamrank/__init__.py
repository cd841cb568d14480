"""Python access to the streamrank pipeline.

Losses and metrics take plain sequences; simulation, label assembly and the
policy comparison exchange JSON (configs) and JSONL (event and sample logs).
"""

import json

from . import _streamrank as _core
from ._streamrank import (
    TASKS,
    ConfigError,
    MalformedLogError,
    NumericError,
    RoutingError,
    auc,
    gauc,
    loss_fast,
    loss_moment,
    loss_slow_pu,
    ranking_score,
)

__all__ = [
    "TASKS",
    "ConfigError",
    "MalformedLogError",
    "NumericError",
    "RoutingError",
    "assemble",
    "auc",
    "compare_policies",
    "consistency_table",
    "default_run_config",
    "default_sim_config",
    "detection_lag",
    "gauc",
    "loss_fast",
    "loss_moment",
    "loss_slow_pu",
    "policy",
    "ranking_score",
    "simulate",
]


def default_sim_config():
    return json.loads(_core.default_sim_config())


def default_run_config():
    return json.loads(_core.default_run_config())


def policy(kind, **windows):
    """Report policy dict, e.g. policy("realtime", tick=30)."""
    return {"kind": kind, **windows}


def simulate(config=None):
    """Returns (events_jsonl, catalog) for a sim config dict."""
    events, catalog = _core.simulate(json.dumps(config or {}))
    return events, json.loads(catalog)


def assemble(events_jsonl, report_policy):
    """Training samples (list of dicts) for an event log under a policy."""
    out = _core.assemble(events_jsonl, json.dumps(report_policy))
    return [json.loads(line) for line in out.splitlines() if line]


def consistency_table(events_jsonl, fast_window=300.0, slow_window=3600.0):
    return json.loads(_core.consistency_table(events_jsonl, fast_window, slow_window))


def detection_lag(times, values, onsets, k=2.0, baseline_window=300.0):
    return json.loads(_core.detection_lag(list(times), list(values), list(onsets), k, baseline_window))


def compare_policies(config=None, out_dir=""):
    """Runs every configured policy on one simulated log; returns report.json as a dict."""
    return json.loads(_core.compare_policies(json.dumps(config or {}), str(out_dir)))
