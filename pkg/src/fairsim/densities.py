"""Piecewise-constant score densities, populations, and score transformations.

Analytic objects live on a uniform grid over [0, 1]: a density stores one
nonnegative value per cell. Masses of threshold events ({s > t}) are computed
in exact rational arithmetic -- cell values are binary floats, hence dyadic
rationals -- while integrals of generic weight functions use the midpoint rule.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property

import numpy as np

DEFAULT_GRID = 1024

#: In-band marker for conditional probabilities whose conditioning event has
#: zero mass. Rendered as "undefined" in serialized reports.
UNDEFINED = float("nan")


def is_defined(value: float) -> bool:
    """True unless ``value`` is the undefined marker."""
    return not math.isnan(value)


def cell_index(scores, grid_size: int):
    """Grid cell containing each score; cell k covers [k/G, (k+1)/G), 1.0 maps to the last cell."""
    idx = np.floor(np.asarray(scores, dtype=float) * grid_size).astype(int)
    return np.clip(idx, 0, grid_size - 1)


class _ExactMass:
    """Exact threshold masses for one piecewise-constant density.

    Every cell weight is a binary float, i.e. an integer over a power of two,
    so the mass of {s > t} for rational t is an exact rational number.
    Weights are rescaled to integers over a common denominator once; each
    query is then O(1).
    """

    __slots__ = ("grid", "denom", "scaled", "suffix")

    def __init__(self, weights):
        self.grid = len(weights)
        ratios = [float(w).as_integer_ratio() for w in weights]
        denom = 1
        for _, d in ratios:
            denom = max(denom, d)  # all denominators are powers of two
        self.denom = denom
        self.scaled = [n * (denom // d) for n, d in ratios]
        suffix = [0] * (self.grid + 1)
        for i in range(self.grid - 1, -1, -1):
            suffix[i] = suffix[i + 1] + self.scaled[i]
        self.suffix = suffix

    def boundary_mass(self, k: int) -> Fraction:
        """Exact mass of [k/grid, 1]."""
        return Fraction(self.suffix[k], self.denom * self.grid)

    def total(self) -> Fraction:
        return self.boundary_mass(0)

    def cell_value(self, j: int) -> Fraction:
        """Exact density value on cell j."""
        return Fraction(self.scaled[j], self.denom)

    def above(self, threshold) -> Fraction:
        """Exact mass of {s > threshold}."""
        t = threshold if isinstance(threshold, Fraction) else Fraction(float(threshold))
        if t <= 0:
            return self.total()
        if t >= 1:
            return Fraction(0)
        j = int(t * self.grid)
        partial = self.cell_value(j) * (Fraction(j + 1, self.grid) - t)
        return Fraction(self.suffix[j + 1], self.denom * self.grid) + partial


@dataclass(frozen=True)
class ScoreDensity:
    """Nonnegative piecewise-constant density on a uniform grid over [0, 1].

    ``weights[i]`` is the density value (not the mass) on cell
    [i/G, (i+1)/G); the mass of a cell is ``weights[i] / G``.
    """

    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a non-empty 1-D array")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def grid_size(self) -> int:
        return int(self.weights.size)

    @property
    def cell_width(self) -> float:
        return 1.0 / self.weights.size

    def midpoints(self) -> np.ndarray:
        g = self.weights.size
        return (np.arange(g) + 0.5) / g

    @cached_property
    def _exact(self) -> _ExactMass:
        return _ExactMass(self.weights)

    def exact_total(self) -> Fraction:
        return self._exact.total()

    def exact_mass_above(self, threshold) -> Fraction:
        """Exact mass of {s > threshold} under the piecewise-constant model."""
        return self._exact.above(threshold)

    def exact_mass_below(self, threshold) -> Fraction:
        """Exact mass of {s <= threshold}."""
        return self._exact.total() - self._exact.above(threshold)

    def total_mass(self) -> float:
        return float(self._exact.total())

    def is_normalized(self, tol: float = 1e-9) -> bool:
        return abs(self.total_mass() - 1.0) <= tol

    def normalized(self) -> "ScoreDensity":
        total = self.total_mass()
        if total <= 0:
            raise ValueError("cannot normalize a zero-mass density")
        return ScoreDensity(self.weights / total)

    @classmethod
    def uniform(cls, grid_size: int = DEFAULT_GRID) -> "ScoreDensity":
        return cls(np.ones(grid_size))

    @classmethod
    def from_callable(cls, fn, grid_size: int = DEFAULT_GRID) -> "ScoreDensity":
        """Density with values taken at cell midpoints."""
        mids = (np.arange(grid_size) + 0.5) / grid_size
        return cls(np.asarray(fn(mids), dtype=float))


@dataclass(frozen=True)
class ConditionalScoreDensity:
    """Joint law of (score, outcome) for one group.

    ``f0`` carries the score mass of outcome-0 individuals, ``f1`` of
    outcome-1 individuals. The pair is normalized jointly: the total mass of
    f0 plus f1 is 1, and the mass of f1 alone is the group's base rate.
    """

    f0: ScoreDensity
    f1: ScoreDensity

    def __post_init__(self):
        if self.f0.grid_size != self.f1.grid_size:
            raise ValueError("f0 and f1 must share one grid")
        total = self.f0.total_mass() + self.f1.total_mass()
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"f0 and f1 masses must sum to 1, got {total!r}")

    @property
    def grid_size(self) -> int:
        return self.f0.grid_size

    @property
    def base_rate(self) -> float:
        return self.f1.total_mass()

    @classmethod
    def calibrated(cls, marginal: ScoreDensity) -> "ConditionalScoreDensity":
        """Split a normalized marginal score density so the score is calibrated.

        Puts mass proportional to s into the outcome-1 component and 1-s into
        the outcome-0 component, cell by cell, so P(Y=1 | S=s) = s wherever
        the marginal has mass.
        """
        if not marginal.is_normalized():
            raise ValueError("marginal density must integrate to 1")
        mids = marginal.midpoints()
        return cls(
            f0=ScoreDensity((1.0 - mids) * marginal.weights),
            f1=ScoreDensity(mids * marginal.weights),
        )

    @classmethod
    def from_base_rate(cls, base_rate: float, grid_size: int = DEFAULT_GRID) -> "ConditionalScoreDensity":
        """Calibrated group with a two-level marginal hitting the given base rate.

        The marginal is constant on [0, 1/2) and on [1/2, 1]; solving for the
        two levels pins the mean, which for a calibrated score equals the
        base rate. Levels are nonnegative only for base rates in [1/4, 3/4].
        """
        if not 0.25 <= base_rate <= 0.75:
            raise ValueError("two-level construction needs base_rate in [0.25, 0.75]")
        lo = 3.0 - 4.0 * base_rate
        hi = 4.0 * base_rate - 1.0
        half = grid_size // 2
        if 2 * half != grid_size:
            raise ValueError("grid_size must be even")
        weights = np.concatenate([np.full(half, lo), np.full(half, hi)])
        return cls.calibrated(ScoreDensity(weights))


@dataclass(frozen=True)
class PopulationModel:
    """Named groups, each with a conditional score density.

    ``weights`` are relative group sizes used for sampling and pooling;
    they default to equal sizes.
    """

    groups: dict[str, ConditionalScoreDensity]
    weights: dict[str, float] | None = None

    def __post_init__(self):
        if len(self.groups) < 2:
            raise ValueError("a population needs at least 2 groups")
        grids = {csd.grid_size for csd in self.groups.values()}
        if len(grids) != 1:
            raise ValueError("all groups must share one grid size")
        if self.weights is not None:
            if set(self.weights) != set(self.groups):
                raise ValueError("weights must cover exactly the group labels")
            if any(w <= 0 for w in self.weights.values()):
                raise ValueError("group weights must be positive")

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(self.groups)

    @property
    def grid_size(self) -> int:
        return next(iter(self.groups.values())).grid_size

    def group(self, label: str) -> ConditionalScoreDensity:
        try:
            return self.groups[label]
        except KeyError:
            raise KeyError(f"unknown group {label!r}; known groups: {sorted(self.groups)}") from None

    def normalized_weights(self) -> dict[str, float]:
        if self.weights is None:
            w = 1.0 / len(self.groups)
            return {g: w for g in self.groups}
        total = sum(self.weights.values())
        return {g: self.weights[g] / total for g in self.groups}

    def with_group(self, label: str, csd: ConditionalScoreDensity) -> "PopulationModel":
        if label not in self.groups:
            raise KeyError(f"unknown group {label!r}; known groups: {sorted(self.groups)}")
        groups = dict(self.groups)
        groups[label] = csd
        return PopulationModel(groups=groups, weights=self.weights)


@dataclass(frozen=True)
class ScoreMap:
    """Cell-wise transformation from true probability to displayed score.

    ``values[i]`` is the score shown for true probabilities falling in grid
    cell i. The identity map displays each cell's midpoint, so a mapped
    population keeps the same grid.
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("values must be a non-empty 1-D array")
        if not np.all(np.isfinite(v)) or np.any(v < 0) or np.any(v > 1):
            raise ValueError("mapped scores must lie in [0, 1]")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def grid_size(self) -> int:
        return int(self.values.size)

    def __call__(self, p):
        return self.values[cell_index(p, self.grid_size)]

    def target_cells(self) -> np.ndarray:
        return cell_index(self.values, self.grid_size)

    @classmethod
    def identity(cls, grid_size: int = DEFAULT_GRID) -> "ScoreMap":
        return cls((np.arange(grid_size) + 0.5) / grid_size)

    @classmethod
    def constant(cls, value: float, grid_size: int = DEFAULT_GRID) -> "ScoreMap":
        return cls(np.full(grid_size, float(value)))

    @classmethod
    def from_callable(cls, fn, grid_size: int = DEFAULT_GRID) -> "ScoreMap":
        mids = (np.arange(grid_size) + 0.5) / grid_size
        return cls(np.asarray(fn(mids), dtype=float))


CSV_HEADER = ("group", "score", "outcome", "decision")

#: Sentinel for a missing per-record decision.
NO_DECISION = -1


@dataclass(frozen=True)
class AuditDataset:
    """Finite records of (group, score, outcome, optional decision)."""

    group: np.ndarray
    score: np.ndarray
    outcome: np.ndarray
    decision: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.group)
        score = np.asarray(self.score, dtype=float)
        outcome = np.asarray(self.outcome, dtype=np.int8)
        if len(score) != n or len(outcome) != n:
            raise ValueError("all columns must have equal length")
        if n == 0:
            raise ValueError("dataset must contain at least one record")
        if np.any(score < 0) or np.any(score > 1) or not np.all(np.isfinite(score)):
            raise ValueError("scores must lie in [0, 1]")
        if not np.all(np.isin(outcome, (0, 1))):
            raise ValueError("outcomes must be 0 or 1")
        object.__setattr__(self, "group", np.asarray(self.group, dtype=object))
        object.__setattr__(self, "score", score)
        object.__setattr__(self, "outcome", outcome)
        if self.decision is not None:
            decision = np.asarray(self.decision, dtype=np.int8)
            if len(decision) != n:
                raise ValueError("decision column length mismatch")
            if not np.all(np.isin(decision, (NO_DECISION, 0, 1))):
                raise ValueError("decisions must be 0, 1, or missing")
            object.__setattr__(self, "decision", decision)

    def __len__(self) -> int:
        return len(self.group)

    @property
    def labels(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for g in self.group:
            seen.setdefault(g, None)
        return tuple(seen)

    def group_mask(self, label: str) -> np.ndarray:
        mask = self.group == label
        if not mask.any():
            raise KeyError(f"unknown group {label!r}; known groups: {sorted(set(self.group))}")
        return mask

    def decisions_complete(self) -> bool:
        return self.decision is not None and not np.any(self.decision == NO_DECISION)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            decision = self.decision
            for i in range(len(self)):
                d = "" if decision is None or decision[i] == NO_DECISION else str(int(decision[i]))
                writer.writerow((self.group[i], repr(float(self.score[i])), int(self.outcome[i]), d))

    @classmethod
    def from_csv(cls, path) -> "AuditDataset":
        groups: list[str] = []
        scores: list[float] = []
        outcomes: list[int] = []
        decisions: list[int] = []
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
                raise ValueError(f"expected header {','.join(CSV_HEADER)!r}, got {header!r}")
            for line_no, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != 4:
                    raise ValueError(f"row {line_no}: expected 4 columns, got {len(row)}")
                group, score_s, outcome_s, decision_s = (c.strip() for c in row)
                if not group:
                    raise ValueError(f"row {line_no}: empty group label")
                try:
                    score = float(score_s)
                except ValueError:
                    raise ValueError(f"row {line_no}: score {score_s!r} is not a number") from None
                if not 0.0 <= score <= 1.0:
                    raise ValueError(f"row {line_no}: score {score_s} outside [0, 1]")
                if outcome_s not in ("0", "1"):
                    raise ValueError(f"row {line_no}: outcome {outcome_s!r} must be 0 or 1")
                if decision_s not in ("", "0", "1"):
                    raise ValueError(f"row {line_no}: decision {decision_s!r} must be empty, 0, or 1")
                groups.append(group)
                scores.append(score)
                outcomes.append(int(outcome_s))
                decisions.append(NO_DECISION if decision_s == "" else int(decision_s))
        if not groups:
            raise ValueError("CSV contains no data rows")
        decision_col = None if all(d == NO_DECISION for d in decisions) else np.array(decisions, dtype=np.int8)
        return cls(
            group=np.array(groups, dtype=object),
            score=np.array(scores),
            outcome=np.array(outcomes, dtype=np.int8),
            decision=decision_col,
        )


def base_rate(pop: PopulationModel, group: str) -> float:
    """Share of outcome-1 mass in the group: the total mass of f1."""
    return pop.group(group).base_rate


@dataclass(frozen=True)
class CalibrationCurve:
    """Per-cell conditional positive rate P(Y=1 | S in cell).

    Cells with zero total density carry the undefined marker.
    """

    midpoints: np.ndarray
    values: np.ndarray

    def __call__(self, score: float) -> float:
        return float(self.values[cell_index(score, len(self.values))])


def calibration_curve(pop: PopulationModel, group: str) -> CalibrationCurve:
    csd = pop.group(group)
    w0, w1 = csd.f0.weights, csd.f1.weights
    total = w0 + w1
    values = np.full(csd.grid_size, UNDEFINED)
    occupied = total > 0
    values[occupied] = w1[occupied] / total[occupied]
    return CalibrationCurve(midpoints=csd.f0.midpoints(), values=values)


def apply_score_map(pop: PopulationModel, group: str, score_map: ScoreMap) -> PopulationModel:
    """Population in which the group's displayed score is transformed cell-wise.

    Each cell's mass moves, per outcome class, to the cell containing its
    mapped score, so class totals are conserved.
    """
    csd = pop.group(group)
    if score_map.grid_size != csd.grid_size:
        raise ValueError("score map grid does not match population grid")
    targets = score_map.target_cells()

    def transport(density: ScoreDensity) -> ScoreDensity:
        moved = np.zeros(density.grid_size)
        np.add.at(moved, targets, density.weights)
        return ScoreDensity(moved)

    return pop.with_group(group, ConditionalScoreDensity(f0=transport(csd.f0), f1=transport(csd.f1)))


def sample(pop: PopulationModel, n: int, seed: int, rule=None) -> AuditDataset:
    """Draw n i.i.d. records from the population.

    Groups are drawn with probability proportional to the population's group
    weights; (score, outcome) pairs follow each group's conditional density,
    with scores uniform within their grid cell.

    Args:
        pop: population to sample from.
        n: number of records, at least 1.
        seed: RNG seed; equal seeds give equal datasets.
        rule: optional decision rule; when given, each record also gets a
            decision drawn against the rule's decision probability at the
            sampled score.

    Returns:
        An AuditDataset with n records, decision column present iff a rule
        was given.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    from .rules import decision_probabilities  # local import to avoid a cycle

    rng = np.random.default_rng(seed)
    labels = pop.labels
    weights = pop.normalized_weights()
    pvec = np.array([weights[g] for g in labels])
    gidx = rng.choice(len(labels), size=n, p=pvec / pvec.sum())

    group_col = np.empty(n, dtype=object)
    score_col = np.empty(n)
    outcome_col = np.empty(n, dtype=np.int8)
    decision_col = np.empty(n, dtype=np.int8) if rule is not None else None

    for gi, label in enumerate(labels):
        mask = gidx == gi
        k = int(mask.sum())
        if k == 0:
            continue
        csd = pop.group(label)
        g = csd.grid_size
        joint = np.concatenate([csd.f0.weights, csd.f1.weights])
        joint = joint / joint.sum()
        draw = rng.choice(2 * g, size=k, p=joint)
        outcome = (draw >= g).astype(np.int8)
        cells = draw % g
        scores = (cells + rng.random(k)) / g
        group_col[mask] = label
        score_col[mask] = scores
        outcome_col[mask] = outcome
        if rule is not None:
            probs = decision_probabilities(rule, label, scores)
            decision_col[mask] = (rng.random(k) < probs).astype(np.int8)

    return AuditDataset(group=group_col, score=score_col, outcome=outcome_col, decision=decision_col)


def integrate(density: ScoreDensity, weight) -> float:
    """Midpoint-rule integral of weight(s) against the density.

    Exact for integrands linear within each cell; O(grid^-2) error for smooth
    integrands. ``weight`` may be vectorized or scalar-valued.
    """
    mids = density.midpoints()
    try:
        vals = np.asarray(weight(mids), dtype=float)
        if vals.shape != mids.shape:
            raise TypeError
    except (TypeError, ValueError):
        vals = np.array([float(weight(m)) for m in mids])
    return float(np.sum(density.weights * vals) * density.cell_width)
