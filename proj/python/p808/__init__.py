"""Python access to the p808 listening-test toolkit."""

import json as _json

from ._p808 import (
    Error,
    bandlimit,
    generate_wgn,
    group_stats,
    hallucination_flags,
    levenshtein,
    lpd,
    lps,
    mix_at_snr,
    rms_dbfs,
    trapping_prompts,
    validate_catalog,
)
from . import _p808


def simulate(scenario):
    """Run a simulated campaign; `scenario` is a dict in the scenario-file format."""
    return _json.loads(_p808._simulate(_json.dumps(scenario)))


def campaign_status(campaign_dir):
    """Status document of a campaign directory, rebuilt from its event log."""
    return _json.loads(_p808._campaign_status(str(campaign_dir)))


def render_report(metric_csv, grouping, columns, ci=False):
    """Returns (text, csv) renderings of a metric table."""
    return _p808._render_report(metric_csv, grouping, list(columns), ci)


__all__ = [
    "Error", "bandlimit", "campaign_status", "generate_wgn", "group_stats",
    "hallucination_flags", "levenshtein", "lpd", "lps", "mix_at_snr",
    "render_report", "rms_dbfs", "simulate", "trapping_prompts",
    "validate_catalog",
]
