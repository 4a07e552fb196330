"""Companion measurements over fitted models and raw datasets.

* Topographic similarity: correlation between pairwise representation
  distances and pairwise derivation edit distances.
* Bound check: with a translation-invariant metric, additive composition, and
  unit-ball primitive entries, representation distances can exceed derivation
  distances by at most twice the worst per-record reconstruction error.
  The check enumerates all record pairs and reports any violation.
* Binned mutual information between discrete input labels and (discretized)
  representations.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter, defaultdict
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .derivation import pairwise_tree_edit_distances
from .solver import Dataset, FitConfig, PrimitiveTable, tre_datum
from .space import AdditiveComposition, CompositionSpec, DistanceSpec, distance

# Slack absorbing pure floating-point rounding in inequality checks; the
# quantities compared are O(1)-scale sums of absolute values.
_FLOAT_SLACK = 1e-9


class DegenerateInputError(ValueError):
    """Correlation requested for a constant (zero-variance) sequence."""


class ConditionsUnmetError(ValueError):
    """Bound check preconditions failed; this is not a bound violation."""


@dataclass(frozen=True)
class CorrelationResult:
    coefficient: float
    p_value: float
    n: int


@dataclass(frozen=True)
class BoundCheckReport:
    """epsilon is the worst per-record reconstruction error; a violation is a
    record pair whose representation distance exceeds tree distance + 2*epsilon."""

    epsilon: float
    violations: tuple[tuple[tuple[str, str], float, float], ...]
    holds: bool


def _as_float_array(xs) -> np.ndarray:
    arr = np.asarray(xs, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError("expected a 1-d sequence of numbers")
    return arr


def _t_approx_p_value(r: float, n: int) -> float:
    if abs(r) >= 1.0:
        return 0.0
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    return float(2.0 * stats.t.sf(abs(t), df=n - 2))


def _pearson_coefficient(xs: np.ndarray, ys: np.ndarray) -> float:
    cx = xs - xs.mean()
    cy = ys - ys.mean()
    sx = float(np.sqrt((cx * cx).sum()))
    sy = float(np.sqrt((cy * cy).sum()))
    if sx == 0.0 or sy == 0.0:
        raise DegenerateInputError("correlation is undefined for a constant sequence")
    r = float((cx * cy).sum()) / (sx * sy)
    return max(-1.0, min(1.0, r))


def _exact_permutation_p(xs: np.ndarray, ys: np.ndarray, observed: float) -> float:
    n = len(xs)
    if n > 10:
        raise ValueError("exact permutation p-value supported for n <= 10 only")
    target = abs(observed) - _FLOAT_SLACK
    hits = total = 0
    for perm in itertools.permutations(range(n)):
        r = _pearson_coefficient(xs, ys[list(perm)])
        hits += abs(r) >= target
        total += 1
    return hits / total


def pearson(xs, ys, exact: bool = False) -> CorrelationResult:
    """Pearson correlation with a two-sided t-approximation p-value.

    ``exact=True`` (n <= 10) replaces the p-value with the exact two-sided
    permutation probability of an |r| at least as large.
    """
    xs, ys = _as_float_array(xs), _as_float_array(ys)
    if len(xs) != len(ys):
        raise ValueError("sequences must have equal length")
    if len(xs) < 3:
        raise ValueError("need at least 3 pairs")
    r = _pearson_coefficient(xs, ys)
    p = _exact_permutation_p(xs, ys, r) if exact else _t_approx_p_value(r, len(xs))
    return CorrelationResult(r, p, len(xs))


def _average_ranks(xs: np.ndarray) -> np.ndarray:
    return stats.rankdata(xs, method="average")


def spearman(xs, ys, exact: bool = False) -> CorrelationResult:
    """Spearman rank correlation (average ranks on ties)."""
    xs, ys = _as_float_array(xs), _as_float_array(ys)
    if len(xs) != len(ys):
        raise ValueError("sequences must have equal length")
    if len(xs) < 3:
        raise ValueError("need at least 3 pairs")
    rx, ry = _average_ranks(xs), _average_ranks(ys)
    r = _pearson_coefficient(rx, ry)
    p = _exact_permutation_p(rx, ry, r) if exact else _t_approx_p_value(r, len(xs))
    return CorrelationResult(r, p, len(xs))


def topographic_similarity(dataset: Dataset, distance_spec: DistanceSpec,
                           rank_based: bool = True) -> CorrelationResult:
    """Correlation between representation and derivation distances.

    Both distances are evaluated on every unordered record pair; the result's
    ``n`` is the number of pairs.  Rank-based mode (Spearman) makes the score
    invariant to any monotone rescaling of either distance.
    """
    records = dataset.records
    if len(records) < 3:
        raise ValueError("topographic similarity needs at least 3 records")
    tree_matrix = pairwise_tree_edit_distances([r.derivation for r in records])
    rep_d: list[float] = []
    tree_d: list[float] = []
    for i in range(len(records)):
        for j in range(i + 1, len(records)):
            rep_d.append(distance(distance_spec, records[i].representation,
                                  records[j].representation))
            tree_d.append(float(tree_matrix[i][j]))
    corr = spearman if rank_based else pearson
    try:
        return corr(rep_d, tree_d)
    except DegenerateInputError:
        raise DegenerateInputError(
            "topographic similarity is undefined: one of the pairwise "
            "distance lists is constant") from None


def bound_check(dataset: Dataset, table: PrimitiveTable, comp: CompositionSpec,
                distance_spec: DistanceSpec) -> BoundCheckReport:
    """Verify representation distances against derivation distances.

    Preconditions (raising ConditionsUnmetError, which is not a violation):
    the distance must be l1 (translation-invariant metric), the composition
    additive (its identity element is the zero representation), and every
    primitive entry must lie within unit distance of the origin and of every
    other entry.  Under those conditions no violation can occur except
    through an implementation bug.
    """
    if distance_spec.kind != "l1":
        raise ConditionsUnmetError(
            "conditions unmet: bound check requires a translation-invariant "
            "metric (l1); squared_l2 is not a metric and cosine is not "
            "translation-invariant")
    if not isinstance(comp, AdditiveComposition):
        raise ConditionsUnmetError(
            "conditions unmet: bound check requires additive composition, "
            "whose identity element is the zero representation")
    entries = list(table.entries.items())
    if not entries:
        raise ConditionsUnmetError("conditions unmet: empty primitive table")
    zero = np.zeros_like(entries[0][1])
    for sym, value in entries:
        d0 = distance(distance_spec, value, zero)
        if d0 > 1.0 + _FLOAT_SLACK:
            raise ConditionsUnmetError(
                f"conditions unmet: entry {sym.name!r} lies outside the unit "
                f"ball (distance to origin {d0:.6g})")
    for (sym_a, va), (sym_b, vb) in itertools.combinations(entries, 2):
        dab = distance(distance_spec, va, vb)
        if dab > 1.0 + _FLOAT_SLACK:
            raise ConditionsUnmetError(
                f"conditions unmet: entries {sym_a.name!r} and {sym_b.name!r} "
                f"are more than unit distance apart ({dab:.6g})")

    config = FitConfig(distance=distance_spec, composition=comp)
    epsilon = max(tre_datum(table, config, rec) for rec in dataset.records)

    violations = []
    records = dataset.records
    tree_matrix = pairwise_tree_edit_distances([r.derivation for r in records])
    for i in range(len(records)):
        for j in range(i + 1, len(records)):
            lhs = distance(distance_spec, records[i].representation,
                           records[j].representation)
            rhs = tree_matrix[i][j] + 2.0 * epsilon
            if lhs > rhs + _FLOAT_SLACK:
                violations.append(((records[i].id, records[j].id), lhs, rhs))
    return BoundCheckReport(epsilon=epsilon, violations=tuple(violations),
                            holds=not violations)


def _entropy_bits(counts) -> float:
    total = sum(counts)
    return -math.fsum((c / total) * math.log2(c / total) for c in counts if c)


def mutual_information_binned(inputs, representations, bins: int = 30) -> float:
    """Plug-in mutual information (bits) between labels and binned
    representations.

    Each representation coordinate is discretized into ``bins`` equal-width
    bins over its observed range (a constant coordinate collapses to bin 0);
    the bin-index tuple is the discrete representation variable.  Inputs are
    weighted uniformly over records.
    """
    if len(inputs) != len(representations):
        raise ValueError("inputs and representations must have equal length")
    if not inputs:
        raise ValueError("empty input")
    if bins < 2:
        raise ValueError("bins must be at least 2")

    flat = np.stack([np.asarray(r, dtype=np.float64).ravel() for r in representations])
    lo = flat.min(axis=0)
    hi = flat.max(axis=0)
    span = hi - lo
    indices = np.zeros(flat.shape, dtype=np.int64)
    varying = span > 0.0
    if varying.any():
        scaled = (flat[:, varying] - lo[varying]) / span[varying] * bins
        indices[:, varying] = np.minimum(scaled.astype(np.int64), bins - 1)

    patterns = [tuple(row) for row in indices]
    n = len(patterns)
    h_repr = _entropy_bits(Counter(patterns).values())

    by_label: dict = defaultdict(list)
    for label, pattern in zip(inputs, patterns):
        by_label[label].append(pattern)
    h_cond = math.fsum(
        (len(group) / n) * _entropy_bits(Counter(group).values())
        for group in by_label.values()
    )
    return max(0.0, h_repr - h_cond)
