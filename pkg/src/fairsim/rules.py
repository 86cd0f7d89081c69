"""Threshold decision policies and solvers for rate- and harm-parity targets.

Decisions are binary: decide 1 exactly when the score strictly exceeds a
threshold. Randomized policies mix two thresholds, which reaches any point on
a chord of the group's ROC curve. Solvers work in exact rational arithmetic
(thresholds and mixes may be `fractions.Fraction`), so a solved rule
re-measures to its target rates exactly, not merely within a tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .densities import PopulationModel, ConditionalScoreDensity, ScoreDensity


class InfeasibleRuleError(ValueError):
    """Raised when no threshold policy can reach the requested target."""


def _as_fraction(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(float(x))


def _check_unit(value, name: str) -> None:
    if not 0 <= value <= 1:
        raise ValueError(f"{name} must lie in [0, 1], got {float(value)!r}")


@dataclass(frozen=True)
class DeterministicThreshold:
    """Decide 1 iff score > threshold."""

    threshold: float | Fraction

    def __post_init__(self):
        _check_unit(self.threshold, "threshold")

    def probability(self, score: float) -> float:
        return 1.0 if score > self.threshold else 0.0

    def decided_mass(self, density: ScoreDensity) -> Fraction:
        return density.exact_mass_above(self.threshold)


@dataclass(frozen=True)
class RandomizedThreshold:
    """Mix of two deterministic thresholds: use ``lower`` with probability ``mix``."""

    lower: float | Fraction
    upper: float | Fraction
    mix: float | Fraction

    def __post_init__(self):
        _check_unit(self.lower, "lower")
        _check_unit(self.upper, "upper")
        _check_unit(self.mix, "mix")
        if self.lower > self.upper:
            raise ValueError("lower threshold must not exceed upper threshold")

    def probability(self, score: float) -> float:
        q = float(self.mix)
        return q * (score > self.lower) + (1.0 - q) * (score > self.upper)

    def decided_mass(self, density: ScoreDensity) -> Fraction:
        q = _as_fraction(self.mix)
        return q * density.exact_mass_above(self.lower) + (1 - q) * density.exact_mass_above(self.upper)


Policy = DeterministicThreshold | RandomizedThreshold


@dataclass(frozen=True)
class DecisionRule:
    """Per-group threshold policy."""

    policies: dict[str, Policy]

    def __post_init__(self):
        if not self.policies:
            raise ValueError("a decision rule needs at least one group policy")

    def for_group(self, label: str) -> Policy:
        try:
            return self.policies[label]
        except KeyError:
            raise KeyError(
                f"rule has no policy for group {label!r}; covered groups: {sorted(self.policies)}"
            ) from None

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(self.policies)

    @classmethod
    def shared(cls, threshold, labels) -> "DecisionRule":
        """Same deterministic threshold for every listed group."""
        return cls({g: DeterministicThreshold(threshold) for g in labels})

    def serialize(self) -> str:
        lines = []
        for label, pol in self.policies.items():
            if isinstance(pol, DeterministicThreshold):
                lines.append(f"group={label} kind=det t1={float(pol.threshold):.12g}")
            else:
                lines.append(
                    f"group={label} kind=rand t1={float(pol.lower):.12g} "
                    f"t2={float(pol.upper):.12g} q={float(pol.mix):.12g}"
                )
        return "\n".join(lines)

    @classmethod
    def parse(cls, text: str) -> "DecisionRule":
        policies: dict[str, Policy] = {}
        for line_no, line in enumerate(text.strip().splitlines(), start=1):
            fields = dict(item.split("=", 1) for item in line.split())
            try:
                label = fields["group"]
                kind = fields["kind"]
                if kind == "det":
                    policies[label] = DeterministicThreshold(float(fields["t1"]))
                elif kind == "rand":
                    policies[label] = RandomizedThreshold(
                        lower=float(fields["t1"]), upper=float(fields["t2"]), mix=float(fields["q"])
                    )
                else:
                    raise KeyError(kind)
            except KeyError as exc:
                raise ValueError(f"line {line_no}: malformed rule line {line!r}") from exc
        return cls(policies)


@dataclass(frozen=True)
class PayoffMatrix:
    """Utilities of (decision, outcome) pairs plus the value of not acting.

    ``u11`` applies on (d=1, y=1), ``u10`` on (d=1, y=0); ``u01``/``u00`` on
    the d=0 branch. ``outside`` is the flat value of declining used when the
    d=0 branch is a pure outside option.
    """

    u11: float
    u10: float
    u01: float
    u00: float
    outside: float

    def __post_init__(self):
        for name in ("u11", "u10", "u01", "u00", "outside"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    @classmethod
    def recommender(cls, outside: float = 0.0) -> "PayoffMatrix":
        """+1 for an enjoyed pick, -1 for a dud; declining yields the outside value."""
        return cls(u11=1.0, u10=-1.0, u01=outside, u00=outside, outside=outside)


def decide(rule: DecisionRule, group: str, score: float) -> float:
    """Probability of deciding 1 at this score; exact 0/1 for deterministic policies."""
    if not 0.0 <= score <= 1.0:
        raise ValueError(f"score must lie in [0, 1], got {score!r}")
    return rule.for_group(group).probability(score)


def decision_probabilities(rule: DecisionRule, group: str, scores: np.ndarray) -> np.ndarray:
    """Vectorized decision probabilities for an array of scores."""
    pol = rule.for_group(group)
    scores = np.asarray(scores, dtype=float)
    if isinstance(pol, DeterministicThreshold):
        return (scores > float(pol.threshold)).astype(float)
    q = float(pol.mix)
    return q * (scores > float(pol.lower)) + (1.0 - q) * (scores > float(pol.upper))


def group_confusion_masses(csd: ConditionalScoreDensity, policy: Policy) -> tuple[Fraction, Fraction, Fraction, Fraction]:
    """Exact (tp, fp, fn, tn) masses of the policy on one group."""
    tp = policy.decided_mass(csd.f1)
    fp = policy.decided_mass(csd.f0)
    fn = csd.f1.exact_total() - tp
    tn = csd.f0.exact_total() - fp
    return tp, fp, fn, tn


def coarsen(pop: PopulationModel, rule: DecisionRule) -> PopulationModel:
    """Two-cell population of the rule's binary output.

    Cell 0 holds the mass decided 0, cell 1 the mass decided 1; the coarsened
    output is itself a score that all calibration metrics apply to.
    """
    groups = {}
    for label, csd in pop.groups.items():
        tp, fp, fn, tn = group_confusion_masses(csd, rule.for_group(label))
        # density value = mass / cell width, with two half-unit cells
        f1 = ScoreDensity(np.array([float(fn), float(tp)]) * 2.0)
        f0 = ScoreDensity(np.array([float(tn), float(fp)]) * 2.0)
        groups[label] = ConditionalScoreDensity(f0=f0, f1=f1)
    return PopulationModel(groups=groups, weights=pop.weights)


def _boundary_suffixes(density: ScoreDensity) -> list[Fraction]:
    exact = density._exact
    return [exact.boundary_mass(k) for k in range(exact.grid + 1)]


def _roc_point_policy(csd: ConditionalScoreDensity, fpr_target: Fraction, tpr_target: Fraction) -> Policy:
    """Policy whose exact (fpr, tpr) equals the target point.

    Walks the group's ROC polyline (piecewise linear in the threshold) for a
    crossing with the ray from (0,0) through the target, then mixes that
    threshold with the always-decline threshold 1. The mix scales the crossing
    point back onto the target, which therefore must lie on or below the ROC.
    """
    p1 = csd.f1.exact_total()
    p0 = csd.f0.exact_total()
    if p1 == 0 or p0 == 0:
        raise InfeasibleRuleError("group has a degenerate outcome class; rates undefined")
    if fpr_target == 0 and tpr_target == 0:
        return DeterministicThreshold(1.0)
    if fpr_target == 1 and tpr_target == 1:
        return DeterministicThreshold(0.0)

    grid = csd.grid_size
    a1 = _boundary_suffixes(csd.f1)  # mass of f1 above each boundary
    a0 = _boundary_suffixes(csd.f0)
    c1 = fpr_target * p0
    c0 = tpr_target * p1

    if tpr_target == 0 or fpr_target == 0:
        # Target on an axis: need one class fully below some threshold while
        # the other keeps mass above it.
        hit, miss, scale = (a0, a1, c1) if tpr_target == 0 else (a1, a0, c0)
        for k in range(grid + 1):
            if miss[k] == 0:
                if hit[k] >= scale and hit[k] > 0:
                    q = scale / hit[k]
                    t = Fraction(k, grid)
                    return DeterministicThreshold(t) if q == 1 else RandomizedThreshold(t, Fraction(1), q)
                break
        raise InfeasibleRuleError("target rate pair lies outside the group's reachable region")

    h = [a1[k] * c1 - a0[k] * c0 for k in range(grid + 1)]

    candidates: list[tuple[Fraction, Fraction]] = []  # (threshold, decided f1 mass)
    for k in range(grid):
        if h[k] == 0 and (a1[k] > 0 or a0[k] > 0):
            candidates.append((Fraction(k, grid), a1[k]))
        if (h[k] > 0 > h[k + 1]) or (h[k] < 0 < h[k + 1]):
            w1 = csd.f1._exact.cell_value(k)
            w0 = csd.f0._exact.cell_value(k)
            # within cell k: masses are linear in u = (k+1)/grid - t
            slope = w1 * c1 - w0 * c0
            u = -h[k + 1] / slope
            t = Fraction(k + 1, grid) - u
            candidates.append((t, a1[k + 1] + w1 * u))

    best = None
    for t, mass1 in candidates:
        lam = mass1 / c0  # achieved tpr over target tpr along the ray
        if best is None or lam > best[0]:
            best = (lam, t)
    if best is None or best[0] < 1:
        reach = float(best[0]) if best is not None else 0.0
        raise InfeasibleRuleError(
            f"target (fpr={float(fpr_target):.6g}, tpr={float(tpr_target):.6g}) lies above the "
            f"group's ROC curve (best reach {reach:.6g} of the target along its ray)"
        )
    lam, t = best
    if lam == 1:
        return DeterministicThreshold(t)
    return RandomizedThreshold(lower=t, upper=Fraction(1), mix=1 / lam)


def solve_equalized_odds(pop: PopulationModel, reference: str, threshold) -> DecisionRule:
    """Rule matching every group's false positive and false negative rates
    to the reference group's rates under its deterministic threshold.

    Non-reference groups get (possibly randomized) thresholds whose exact
    rates equal the reference point. Raises InfeasibleRuleError when a
    group's ROC curve passes below the reference point.
    """
    ref = pop.group(reference)
    ref_policy = DeterministicThreshold(threshold)
    p1 = ref.f1.exact_total()
    p0 = ref.f0.exact_total()
    if p1 == 0 or p0 == 0:
        raise ValueError("reference group has a degenerate outcome class; rates undefined")
    tpr_target = ref_policy.decided_mass(ref.f1) / p1
    fpr_target = ref_policy.decided_mass(ref.f0) / p0

    policies: dict[str, Policy] = {reference: ref_policy}
    for label, csd in pop.groups.items():
        if label == reference:
            continue
        try:
            policies[label] = _roc_point_policy(csd, fpr_target, tpr_target)
        except InfeasibleRuleError as exc:
            raise InfeasibleRuleError(f"group {label!r}: {exc}") from None
    return DecisionRule(policies)


def solve_parity_ratio(pop: PopulationModel, reference: str, threshold) -> DecisionRule:
    """Rule equalizing the mass declined despite outcome 1 across groups.

    The reference group keeps its deterministic threshold; every other group
    gets the threshold at which its declined outcome-1 mass exactly equals the
    reference group's. Infeasible when the target exceeds a group's base rate.
    """
    ref = pop.group(reference)
    ref_policy = DeterministicThreshold(threshold)
    target = ref.f1.exact_total() - ref_policy.decided_mass(ref.f1)  # P[D=0, Y=1]

    policies: dict[str, Policy] = {reference: ref_policy}
    for label, csd in pop.groups.items():
        if label == reference:
            continue
        total1 = csd.f1.exact_total()
        if target > total1:
            raise InfeasibleRuleError(
                f"group {label!r}: target declined-positive mass {float(target):.6g} exceeds "
                f"the group's base rate {float(total1):.6g}"
            )
        policies[label] = DeterministicThreshold(_threshold_for_below_mass(csd.f1, target))
    return DecisionRule(policies)


def _threshold_for_below_mass(density: ScoreDensity, target: Fraction) -> Fraction:
    """Smallest threshold t with exact mass of {s <= t} equal to target."""
    if target == 0:
        return Fraction(0)
    grid = density.grid_size
    exact = density._exact
    total = exact.total()
    below = [total - exact.boundary_mass(k) for k in range(grid + 1)]
    lo, hi = 0, grid  # largest boundary with below <= target
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if below[mid] <= target:
            lo = mid
        else:
            hi = mid - 1
    if below[lo] == target:
        return Fraction(lo, grid)
    w = exact.cell_value(lo)
    return Fraction(lo, grid) + (target - below[lo]) / w
