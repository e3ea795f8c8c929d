"""Per-training-point values from match tables.

Each generated point distributes one unit of credit across its top-k
training matches through a softmax of negative distances; a training
point's value is the sum of its credits over all generated points, so
total value always equals the number of generated points. An optional
sharpness factor scales the distances before exponentiation (factor 1
is the plain softmax) because embedding spaces with large distance
magnitudes otherwise saturate the top score to 1.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, CorruptionError, InternalError, ValidationError
from .search import MatchTables

MASS_TOLERANCE = 1e-6  # |sum(values) - m| <= MASS_TOLERANCE * m


@dataclass(frozen=True)
class ScoreRow:
    """Per-pair credit scores for one generated point; sums to 1."""

    gen_index: int
    entries: tuple[tuple[int, float], ...]


@dataclass(frozen=True)
class ValuationResult:
    n: int
    m: int
    k: int
    values: np.ndarray  # (n,) float64, nonnegative
    ranking: np.ndarray  # (n,) int64, descending value, ties by index

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        r = np.ascontiguousarray(self.ranking, dtype=np.int64)
        v.flags.writeable = False
        r.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "ranking", r)


def discount_scores(distances, temperature: float = 1.0) -> np.ndarray:
    """Softmax of negative distances: exp(-b*d_i) / sum_t exp(-b*d_t).

    Shifting all distances by the minimum before exponentiation keeps
    the computation stable without changing the result.
    """
    d = np.asarray(distances, dtype=np.float64).reshape(-1)
    if d.size == 0:
        raise ValidationError("distance row is empty")
    if not np.isfinite(d).all() or (d < 0).any():
        raise ValidationError("distances must be finite and >= 0")
    if not (temperature > 0 and np.isfinite(temperature)):
        raise ConfigError("temperature must be a positive finite real")
    e = np.exp(-temperature * (d - d.min()))
    return e / e.sum()


def _row_scores(distances: np.ndarray, temperature: float) -> np.ndarray:
    # vectorized form of discount_scores over all rows at once; the
    # per-row arithmetic is identical to the single-row path
    shifted = distances - distances.min(axis=1, keepdims=True)
    e = np.exp(-temperature * shifted)
    return e / e.sum(axis=1, keepdims=True)


def aggregate_values(tables: MatchTables, n: int, temperature: float = 1.0) -> ValuationResult:
    """Sum each training point's per-row credit into a value vector.

    Accumulation runs over generated rows in ascending order with 64-bit
    sums, so the result does not depend on scheduling. A training point
    that appears in no match row keeps value exactly 0.
    """
    if n < 1:
        raise ValidationError("training count must be >= 1")
    if tables.indices.size and (
        tables.indices.min() < 0 or tables.indices.max() >= n
    ):
        bad = np.argwhere((tables.indices < 0) | (tables.indices >= n))[0]
        raise CorruptionError(
            f"match row {bad[0]} references training index "
            f"{tables.indices[bad[0], bad[1]]} outside [0, {n})"
        )
    if not np.isfinite(tables.distances).all() or (tables.distances < 0).any():
        raise CorruptionError("match distances must be finite and >= 0")
    if not (temperature > 0 and np.isfinite(temperature)):
        raise ConfigError("temperature must be a positive finite real")
    scores = _row_scores(tables.distances, temperature)
    values = np.zeros(n, dtype=np.float64)
    np.add.at(values, tables.indices.ravel(), scores.ravel())
    total = float(values.sum())
    if abs(total - tables.m) > MASS_TOLERANCE * tables.m:
        raise InternalError(
            f"value mass {total} deviates from generated count {tables.m}"
        )
    ranking = np.lexsort((np.arange(n), -values))
    return ValuationResult(n=n, m=tables.m, k=tables.k, values=values, ranking=ranking)


def rank_training_points(result: ValuationResult, top: int | None = None) -> list[tuple[int, float]]:
    """(train_index, value) pairs, best first; ties go to the lower index."""
    order = result.ranking if top is None else result.ranking[:top]
    return [(int(i), float(result.values[i])) for i in order]


def top_contributors(tables: MatchTables, gen_index: int, temperature: float = 1.0) -> ScoreRow:
    """Credit breakdown for one generated point, for provenance tracebacks."""
    if not 0 <= gen_index < tables.m:
        raise ValidationError(
            f"gen_index {gen_index} outside [0, {tables.m})"
        )
    scores = discount_scores(tables.distances[gen_index], temperature)
    entries = tuple(
        (int(i), float(s)) for i, s in zip(tables.indices[gen_index], scores)
    )
    return ScoreRow(gen_index=gen_index, entries=entries)
