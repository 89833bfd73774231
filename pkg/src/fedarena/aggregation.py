"""Server-side aggregation rules and inclusion diagnostics.

FedAvg is the weighted average of client updates. The trimmed-mean and
coordinate-wise median rules ignore the client weights: per coordinate they
sort the submitted values, then either trim both tails and average the
survivors, or pick the median.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import LayoutError
from .model import ParamVector

WEIGHT_SUM_TOL = 1e-9


@dataclass
class ClientUpdate:
    client_id: int
    params: ParamVector
    weight: float  # aggregation weight, 1/gamma
    is_adversary: bool = False  # diagnostic tag; aggregation rules never read it


@dataclass
class AggregationRule:
    kind: str  # "fedavg" | "trimmed_mean" | "median"
    beta: float = 0.0

    def __post_init__(self):
        if self.kind not in ("fedavg", "trimmed_mean", "median"):
            raise ValueError(f"unknown aggregation rule {self.kind!r}")
        if self.kind == "trimmed_mean" and not 0.0 <= self.beta < 0.5:
            raise ValueError("beta must be in [0, 0.5)")

    def to_dict(self):
        d = {"kind": self.kind}
        if self.kind == "trimmed_mean":
            d["beta"] = self.beta
        return d


@dataclass
class InclusionStats:
    rule: AggregationRule
    adversary_inclusion: float
    benign_inclusion: float


def _check_layouts(updates, layout=None):
    if not updates:
        raise ValueError("need at least one update")
    layout = layout or updates[0].params.layout
    for u in updates:
        if u.params.layout != layout:
            raise LayoutError(f"client {u.client_id}: layout mismatch")
    return layout


def _stack(updates):
    return np.stack([u.params.values for u in updates])


def fedavg(global_params, updates):
    """G + sum_i w_i (U_i - G); with weights summing to 1 this is sum_i w_i U_i."""
    layout = _check_layouts(updates, global_params.layout)
    total = sum(u.weight for u in updates)
    if abs(total - 1.0) > WEIGHT_SUM_TOL:
        raise ValueError(f"update weights sum to {total}, expected 1")
    if len(updates) == 1:
        # a single-participant round is an exact pass-through
        return updates[0].params.copy()
    g = global_params.values
    out = g + sum(u.weight * (u.params.values - g) for u in updates)
    return ParamVector(out, layout)


def trimmed_mean(updates, beta):
    """Per coordinate, drop the floor(beta*m) smallest and largest values,
    then average the survivors (unweighted).

    The survivor mean uses a correctly rounded sum, so the result does not
    depend on client ordering and beta=0 reproduces the plain mean exactly.
    """
    layout = _check_layouts(updates)
    m = len(updates)
    k = int(np.floor(beta * m))
    if m - 2 * k < 1:
        raise ValueError(f"beta={beta} trims all {m} updates")
    vals = np.sort(_stack(updates), axis=0)[k : m - k]
    out = np.array([math.fsum(col) for col in vals.T]) / vals.shape[0]
    return ParamVector(out, layout)


def coord_median(updates):
    """Per-coordinate median; even client counts average the two middle values."""
    layout = _check_layouts(updates)
    return ParamVector(np.median(_stack(updates), axis=0), layout)


def inclusion_stats(global_params, updates, rule):
    """How often adversary-submitted values make it through a robust rule.

    Trimmed mean: per adversary, the fraction of coordinates whose value
    falls inside the kept value range (ties with the cut points survive),
    averaged over adversaries. Median: the fraction of coordinates where
    the selected value equals some adversary's value (either middle value
    for even counts). Benign inclusion is computed the same way.
    """
    if rule.kind not in ("trimmed_mean", "median"):
        raise ValueError("inclusion stats are defined for robust rules only")
    _check_layouts(updates, global_params.layout)
    adv_mask = np.array([u.is_adversary for u in updates])
    if not adv_mask.any():
        raise ValueError("no adversary-tagged updates")

    vals = _stack(updates)  # m x d
    m = vals.shape[0]
    if rule.kind == "trimmed_mean":
        k = int(np.floor(rule.beta * m))
        srt = np.sort(vals, axis=0)
        lo, hi = srt[k], srt[m - k - 1]
        survives = (vals >= lo) & (vals <= hi)  # m x d
        per_client = survives.mean(axis=1)
        adv = float(per_client[adv_mask].mean())
        ben = float(per_client[~adv_mask].mean()) if (~adv_mask).any() else 0.0
    else:
        srt = np.sort(vals, axis=0)
        if m % 2 == 1:
            selected = srt[m // 2][None, :]
        else:
            selected = srt[m // 2 - 1 : m // 2 + 1]
        hit = (vals[:, None, :] == selected[None, :, :]).any(axis=1)  # m x d
        adv = float(hit[adv_mask].any(axis=0).mean())
        ben = float(hit[~adv_mask].any(axis=0).mean()) if (~adv_mask).any() else 0.0
    return InclusionStats(rule=rule, adversary_inclusion=adv, benign_inclusion=ben)


def aggregate(global_params, updates, rule):
    """Dispatch to the configured rule."""
    if rule.kind == "fedavg":
        return fedavg(global_params, updates)
    if rule.kind == "trimmed_mean":
        return trimmed_mean(updates, rule.beta)
    return coord_median(updates)
