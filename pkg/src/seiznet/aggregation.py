"""Turning window probabilities into seizure-level decisions.

Two aggregation rules operate on a record's probability series: a
sliding-window log-odds accumulator and a lagged difference filter.
Seizure scoring then credits one detection opportunity and one false
alarm opportunity per record: a detection is any positive decision in
the ictal part, a false alarm any positive decision in the interictal
part.  Windows from the preictal and extended interictal parts may
carry decisions but never reach the counts.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from seiznet.errors import AggregationError
from seiznet.metrics import ConfusionCounts, MetricSet, metric_set_from_counts

log = logging.getLogger(__name__)

LOGODDS_FLOOR = 1e-6
SCORED_POSITIVE_PART = "ictal"
SCORED_NEGATIVE_PART = "interictal"

DEFAULT_BAYES_WINDOWS = tuple(range(1, 24))
DEFAULT_BAYES_THRESHOLDS = tuple(np.arange(0, 21) * 0.25)
DEFAULT_DIFF_LAGS = tuple(range(1, 24))
DEFAULT_DIFF_THRESHOLDS = tuple(np.round(np.arange(1, 20) * 0.05, 2))


@dataclass(frozen=True)
class BayesParams:
    window: int
    threshold: float


@dataclass(frozen=True)
class DiffParams:
    lag: int
    threshold: float


@dataclass(frozen=True)
class SeizureOutcome:
    """Seizure-level result of one record."""

    record_id: str
    detected_in_ictal: bool
    false_positive_in_interictal: bool
    first_detection: dict  # part name -> series index of first positive


def bayes_logodds(probs: np.ndarray, window: int) -> np.ndarray:
    """Sliding sums of per-window log odds.

    Entry t sums ln(p/(1-p)) over the window of positions ending at t.
    Entries before the first complete window are NaN: no decision is
    defined there.  Probabilities are clamped away from 0 and 1 so
    every term is finite.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if window < 1:
        raise ValueError(f"window {window} must be positive")
    p = np.clip(probs, LOGODDS_FLOOR, 1.0 - LOGODDS_FLOOR)
    terms = np.log(p) - np.log1p(-p)
    csum = np.concatenate([[0.0], np.cumsum(terms)])
    out = np.full(probs.shape, np.nan)
    if probs.size >= window:
        out[window - 1 :] = csum[window:] - csum[:-window]
    return out


def bayes_decide(probs: np.ndarray, params: BayesParams) -> np.ndarray:
    """Positive where accumulated log odds exceed the threshold.

    Undefined prefix entries (incomplete window) decide negative.
    """
    lo = bayes_logodds(probs, params.window)
    return np.where(np.isnan(lo), False, lo > params.threshold)


def diff_decide(probs: np.ndarray, params: DiffParams) -> np.ndarray:
    """Positive where probability rose by more than the threshold
    relative to `lag` windows earlier; the first `lag` entries have no
    comparison point and decide negative."""
    probs = np.asarray(probs, dtype=np.float64)
    if params.lag < 1:
        raise ValueError(f"lag {params.lag} must be positive")
    out = np.zeros(probs.shape, dtype=bool)
    if probs.size > params.lag:
        out[params.lag :] = (probs[params.lag :] - probs[: -params.lag]) > params.threshold
    return out


def seizure_eval(
    decisions: np.ndarray, parts: tuple[str, ...], record_id: str
) -> SeizureOutcome | None:
    """Collapse window decisions of one record to a seizure outcome.

    Returns None (with a log entry) when the series lacks an ictal or
    interictal part, since such a record can be scored on neither
    side.
    """
    decisions = np.asarray(decisions, dtype=bool)
    if decisions.shape[0] != len(parts):
        raise ValueError("decisions and part tags differ in length")
    present = set(parts)
    if SCORED_POSITIVE_PART not in present or SCORED_NEGATIVE_PART not in present:
        log.warning(
            "record %s lacks a scored part (has %s), skipping",
            record_id,
            sorted(present),
        )
        return None
    first: dict[str, int | None] = {}
    for name in dict.fromkeys(parts):
        idx = [i for i, part in enumerate(parts) if part == name and decisions[i]]
        first[name] = idx[0] if idx else None
    return SeizureOutcome(
        record_id=record_id,
        detected_in_ictal=first[SCORED_POSITIVE_PART] is not None,
        false_positive_in_interictal=first[SCORED_NEGATIVE_PART] is not None,
        first_detection=first,
    )


def seizure_counts(outcomes: list[SeizureOutcome]) -> ConfusionCounts:
    """Each record contributes one positive and one negative unit."""
    tp = sum(o.detected_in_ictal for o in outcomes)
    fp = sum(o.false_positive_in_interictal for o in outcomes)
    return ConfusionCounts(
        tp=tp,
        fp=fp,
        tn=len(outcomes) - fp,
        fn=len(outcomes) - tp,
    )


def seizure_metrics(outcomes: list[SeizureOutcome]) -> MetricSet:
    return metric_set_from_counts(seizure_counts(outcomes))


@dataclass(frozen=True)
class GridResult:
    """F1 over a parameter grid plus the argmax under the tie rule."""

    method: str  # "bayes" or "diff"
    windows: tuple[int, ...]
    thresholds: tuple[float, ...]
    f1_matrix: np.ndarray  # (len(windows), len(thresholds)), NaN = undefined
    best_window: int
    best_threshold: float
    best_f1: float
    ties: tuple[tuple[int, float], ...]
    n_series: int
    skipped_records: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "window" if self.method == "bayes" else "lag": self.best_window,
            "threshold": self.best_threshold,
            "f1": self.best_f1,
            "n_series": self.n_series,
            "n_tied_cells": len(self.ties),
            "skipped_records": list(self.skipped_records),
        }


def _nanmax_or_neginf(values: np.ndarray) -> float:
    """Max ignoring NaN; -inf when nothing is defined (never positive)."""
    finite = values[~np.isnan(values)]
    return float(finite.max()) if finite.size else -np.inf


def _decision_stack(
    probs: np.ndarray, method: str, windows: tuple[int, ...]
) -> list[np.ndarray]:
    """Decision inputs per window parameter, before thresholding."""
    if method == "bayes":
        return [bayes_logodds(probs, w) for w in windows]
    if method == "diff":
        out = []
        for lag in windows:
            d = np.full(probs.shape, -np.inf)
            if probs.size > lag:
                d[lag:] = probs[lag:] - probs[:-lag]
            out.append(d)
        return out
    raise ValueError(f"unknown aggregation method {method!r}")


def grid_search(
    series: list,
    method: str,
    windows: tuple[int, ...] | None = None,
    thresholds: tuple[float, ...] | None = None,
) -> GridResult:
    """Exhaustive F1 search over aggregation parameters.

    series is a list of ProbabilitySeries-like objects (attributes
    record_id, probs, parts).  F1 is computed at seizure level over
    all scored records for every (window, threshold) cell.  The
    argmax prefers the smallest window and then the smallest
    threshold among tied cells.
    """
    if method == "bayes":
        windows = DEFAULT_BAYES_WINDOWS if windows is None else windows
        thresholds = DEFAULT_BAYES_THRESHOLDS if thresholds is None else thresholds
    elif method == "diff":
        windows = DEFAULT_DIFF_LAGS if windows is None else windows
        thresholds = DEFAULT_DIFF_THRESHOLDS if thresholds is None else thresholds
    else:
        raise ValueError(f"unknown aggregation method {method!r}")

    usable = []
    skipped = []
    for s in series:
        present = set(s.parts)
        if SCORED_POSITIVE_PART in present and SCORED_NEGATIVE_PART in present:
            usable.append(s)
        else:
            log.warning(
                "record %s lacks a scored part, excluded from grid search",
                s.record_id,
            )
            skipped.append(s.record_id)
    if not usable:
        raise AggregationError("no records with both scored parts; grid undefined")

    # Per series and window parameter: the pre-threshold statistic in
    # the ictal and interictal windows (NaN-safe: NaN never exceeds).
    ictal_stats = []
    inter_stats = []
    for s in usable:
        parts = np.asarray(s.parts)
        stack = _decision_stack(np.asarray(s.probs), method, windows)
        ict = parts == SCORED_POSITIVE_PART
        intr = parts == SCORED_NEGATIVE_PART
        ictal_stats.append([st[ict] for st in stack])
        inter_stats.append([st[intr] for st in stack])

    n = len(usable)
    f1 = np.full((len(windows), len(thresholds)), np.nan)
    best = None
    ties: list[tuple[int, float]] = []
    for wi, w in enumerate(windows):
        ict_max = np.array([_nanmax_or_neginf(ictal_stats[i][wi]) for i in range(n)])
        int_max = np.array([_nanmax_or_neginf(inter_stats[i][wi]) for i in range(n)])
        for ti, th in enumerate(thresholds):
            tp = int(np.sum(ict_max > th))
            fp = int(np.sum(int_max > th))
            counts = ConfusionCounts(tp=tp, fp=fp, tn=n - fp, fn=n - tp)
            cell = metric_set_from_counts(counts).f1
            if cell is None:
                continue
            f1[wi, ti] = cell
            if best is None or cell > best[0]:
                best = (cell, w, th)
                ties = [(w, float(th))]
            elif cell == best[0]:
                ties.append((w, float(th)))
    if best is None:
        raise AggregationError(
            "F1 undefined on every grid cell (no positive decisions anywhere)"
        )
    return GridResult(
        method=method,
        windows=tuple(int(w) for w in windows),
        thresholds=tuple(float(t) for t in thresholds),
        f1_matrix=f1,
        best_window=best[1],
        best_threshold=float(best[2]),
        best_f1=float(best[0]),
        ties=tuple(ties),
        n_series=n,
        skipped_records=tuple(skipped),
    )