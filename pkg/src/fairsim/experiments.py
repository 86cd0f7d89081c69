"""Canned, parameterized experiments with structured reports and plot data.

Each experiment builds a concrete population and rule, measures everything
with the metrics modules, and emits a report whose verdicts carry the numeric
magnitudes they were derived from, plus x,y series for external plotting.
All experiments are deterministic given their parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .densities import (
    DEFAULT_GRID,
    ConditionalScoreDensity,
    PopulationModel,
    ScoreDensity,
    ScoreMap,
    UNDEFINED,
    apply_score_map,
)
from .metrics import (
    ConfusionCounts,
    between_group_calibration_gap,
    impossibility_witness,
    rates,
    separation_gap,
    sufficiency_gap_binary,
)
from .reports import render_doc, render_text, write_series_csv
from .rules import PayoffMatrix, coarsen, solve_equalized_odds, solve_parity_ratio
from .utility import (
    classify_cases,
    disparity_verdict,
    judge_disutility,
    long_run_eu,
    mc_long_run_eu,
    optimal_threshold,
    pointwise_eu,
    utility_report,
)

ANALYTIC_TOL = 1e-6


@dataclass(frozen=True)
class Verdict:
    holds: bool
    magnitude: float
    tolerance: float


@dataclass(frozen=True)
class ExperimentReport:
    experiment: str
    params: dict[str, object]
    metrics: dict[str, object]
    verdicts: dict[str, Verdict]
    series: dict[str, list[tuple[float, float]]] = field(default_factory=dict)

    def doc_mapping(self) -> dict:
        return {
            "experiment": {"id": self.experiment},
            "params": dict(self.params),
            "metrics": self.metrics,
            "verdicts": {
                name: {"holds": v.holds, "magnitude": v.magnitude, "tolerance": v.tolerance}
                for name, v in self.verdicts.items()
            },
        }

    def to_doc(self) -> str:
        return render_doc(self.doc_mapping())

    def to_text(self) -> str:
        return render_text(f"experiment: {self.experiment}", self.doc_mapping())

    def write(self, outdir, fmt: str = "doc") -> list[Path]:
        """Write the report and one CSV per plot series; returns written paths."""
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        written = []
        if fmt == "doc":
            report_path = outdir / "report.doc"
            report_path.write_text(self.to_doc(), encoding="utf-8")
        elif fmt == "text":
            report_path = outdir / "report.txt"
            report_path.write_text(self.to_text(), encoding="utf-8")
        else:
            raise ValueError(f"unknown format {fmt!r}; expected 'doc' or 'text'")
        written.append(report_path)
        for name, points in self.series.items():
            path = outdir / f"series_{name}.csv"
            write_series_csv(path, points)
            written.append(path)
        return written


def _roc_series(csd: ConditionalScoreDensity) -> list[tuple[float, float]]:
    p1 = csd.f1.exact_total()
    p0 = csd.f0.exact_total()
    pts = []
    for k in range(csd.grid_size, -1, -1):
        a1 = csd.f1._exact.boundary_mass(k)
        a0 = csd.f0._exact.boundary_mass(k)
        fpr = float(a0 / p0) if p0 else UNDEFINED
        tpr = float(a1 / p1) if p1 else UNDEFINED
        pts.append((fpr, tpr))
    return pts


# -- recommendation scores used by their own subjects ------------------------

RECOMMENDER_MAPS = ("identity", "constant", "flip", "compress")


def make_score_map(name: str, grid: int, value: float = 0.9) -> ScoreMap:
    """Named displayed-score transformations used by the recommender experiment."""
    if name == "identity":
        return ScoreMap.identity(grid)
    if name == "constant":
        return ScoreMap.constant(value, grid)
    if name == "flip":
        return ScoreMap.from_callable(lambda p: 1.0 - p, grid)
    if name == "compress":
        # squeezes toward 0.5 without moving anything across it
        return ScoreMap.from_callable(lambda p: 0.5 + (p - 0.5) / 2.0, grid)
    raise ValueError(f"unknown score map {name!r}; known maps: {RECOMMENDER_MAPS}")


def run_recommender_experiment(
    men_map: ScoreMap,
    grid: int = DEFAULT_GRID,
    n_mc: int = 1_000_000,
    seed: int = 42,
) -> ExperimentReport:
    """Both groups decide for themselves on displayed scores; one group's
    scores are transformed. Reports analytic and Monte Carlo long-run
    expected utility per group, the utility disparity, the loss split over
    the four displayed-vs-true quadrants, and the displayed-score
    calibration gap."""
    true_density = ScoreDensity.uniform(grid)
    payoff = PayoffMatrix.recommender()
    t = optimal_threshold(payoff)
    identity = ScoreMap.identity(grid)

    eu_women = long_run_eu(true_density, identity, payoff, t)
    eu_men = long_run_eu(true_density, men_map, payoff, t)
    cases_men = classify_cases(true_density, men_map, t, payoff)
    analytic = utility_report(
        {"women": eu_women, "men": eu_men},
        tolerance=ANALYTIC_TOL,
        case_breakdown={"men": cases_men, "women": classify_cases(true_density, identity, t, payoff)},
    )
    equal_utility, disparity = disparity_verdict(analytic, ANALYTIC_TOL)

    mc_women, se_women = mc_long_run_eu(true_density, identity, payoff, t, n_mc, seed)
    mc_men, se_men = mc_long_run_eu(true_density, men_map, payoff, t, n_mc, seed + 1)

    displayed_pop = PopulationModel(
        groups={
            "women": ConditionalScoreDensity.calibrated(true_density),
            "men": ConditionalScoreDensity.calibrated(true_density),
        }
    )
    displayed_pop = apply_score_map(displayed_pop, "men", men_map)
    calib = between_group_calibration_gap(displayed_pop)

    grid_line = np.linspace(0.0, 1.0, 101)
    series = {
        "eu_act": [(float(p), float(2 * p - 1)) for p in grid_line],
        "eu_skip": [(float(p), payoff.outside) for p in grid_line],
        "displayed_calibration_women": list(zip(calib.levels, calib.group_rates["women"])),
        "displayed_calibration_men": list(zip(calib.levels, calib.group_rates["men"])),
    }
    metrics = {
        "eu": {
            "analytic": {"women": eu_women, "men": eu_men, "disparity": disparity},
            "mc": {
                "women": mc_women,
                "men": mc_men,
                "stderr_women": se_women,
                "stderr_men": se_men,
                "disparity": abs(mc_women - mc_men),
            },
            "calibrated_optimum": eu_women,
        },
        "cases_men": {
            name: {"mass": stats.mass, "loss": stats.loss} for name, stats in cases_men.cases.items()
        },
        "calibration_displayed": {"sup_gap": calib.sup_gap, "l1_gap": calib.l1_gap},
    }
    verdicts = {
        "equal_utility": Verdict(equal_utility, disparity, ANALYTIC_TOL),
        "zero_wrong_side_mass": Verdict(
            cases_men.wrong_side_mass == 0.0, cases_men.wrong_side_mass, 0.0
        ),
    }
    params = {"grid": grid, "n_mc": n_mc, "seed": seed, "threshold": t}
    return ExperimentReport("recommender", params, metrics, verdicts, series)


# -- equal error rates, unequal harm ------------------------------------------


def run_equal_rates_unequal_utility(
    p_men: float = 0.1, p_women: float = 0.4, fp_mass: float = 0.1
) -> ExperimentReport:
    """Both groups take the same mass of wrong act-decisions, but at different
    true probabilities, so their error rates agree while their utility loss
    does not. Evaluated in closed form on point masses."""
    for name, p in (("p_men", p_men), ("p_women", p_women)):
        if not 0.0 <= p < 0.5:
            raise ValueError(f"{name} must lie in [0, 0.5) so the decision is on the wrong side, got {p!r}")
    if not 0.0 <= fp_mass <= 1.0:
        raise ValueError("fp_mass must lie in [0, 1]")

    payoff = PayoffMatrix.recommender()
    quadrants = ConfusionCounts(
        tp=Fraction(0), fp=Fraction(float(fp_mass)), fn=Fraction(0), tn=1 - Fraction(float(fp_mass))
    )
    rate_pair = rates(quadrants)  # decision-vs-warranted quadrants, shared by construction

    eu = {}
    loss_per_decision = {}
    for label, p in (("men", p_men), ("women", p_women)):
        acted = pointwise_eu(p, payoff, 1)
        eu[label] = fp_mass * acted + (1.0 - fp_mass) * payoff.outside
        loss_per_decision[label] = payoff.outside - acted
    analytic = utility_report(eu, tolerance=ANALYTIC_TOL)
    equal_utility, disparity = disparity_verdict(analytic, ANALYTIC_TOL)

    metrics = {
        "rates": {"fpr": rate_pair.fpr, "fnr": rate_pair.fnr},
        "eu": {"men": eu["men"], "women": eu["women"], "disparity": disparity},
        "loss_per_false_decision": dict(loss_per_decision),
    }
    verdicts = {
        "equal_rates": Verdict(True, 0.0, 0.0),
        "equal_utility": Verdict(equal_utility, disparity, ANALYTIC_TOL),
    }
    series = {
        "false_decision_loss": [(p_men, loss_per_decision["men"]), (p_women, loss_per_decision["women"])]
    }
    params = {"p_men": p_men, "p_women": p_women, "fp_mass": fp_mass}
    return ExperimentReport("equal-rates", params, metrics, verdicts, series)


# -- scores imposed on defendants ---------------------------------------------

JUDGE_RULES = ("equalized-odds", "parity-ratio")


def run_judge_experiment(
    base_rate_m: float = 0.3,
    base_rate_f: float = 0.6,
    reference_t: float = 0.5,
    grid: int = DEFAULT_GRID,
    convention: str = "per-outcome",
    rule_kind: str = "equalized-odds",
    reference: str = "men",
) -> ExperimentReport:
    """Calibrated raw scores, unequal base rates, group-specific thresholds.

    Solves for the requested parity rule, then re-measures everything: error
    rate gaps, calibration of the coarsened binary output, and per-group
    expected harm under both accounting conventions. The selected convention
    drives the equal-harm verdict."""
    if rule_kind not in JUDGE_RULES:
        raise ValueError(f"rule_kind must be one of {JUDGE_RULES}, got {rule_kind!r}")
    pop = PopulationModel(
        groups={
            "men": ConditionalScoreDensity.from_base_rate(base_rate_m, grid),
            "women": ConditionalScoreDensity.from_base_rate(base_rate_f, grid),
        }
    )
    if rule_kind == "equalized-odds":
        rule = solve_equalized_odds(pop, reference, reference_t)
    else:
        rule = solve_parity_ratio(pop, reference, reference_t)

    sep = separation_gap(pop, rule)
    suff = sufficiency_gap_binary(pop, rule)
    coarse = coarsen(pop, rule)
    coarse_cal = between_group_calibration_gap(coarse)
    du_outcome = judge_disutility(pop, rule, "per-outcome")
    du_person = judge_disutility(pop, rule, "per-person")
    selected = du_outcome if convention == "per-outcome" else du_person

    base_gap = abs(base_rate_m - base_rate_f)
    witness_applies = base_gap > 1e-6
    witness_consistent = True
    if witness_applies:
        try:
            witness = impossibility_witness(pop, rule)
            witness_consistent = witness.consistent
        except ValueError:
            witness_applies = False

    metrics = {
        "base_rate": {"men": pop.group("men").base_rate, "women": pop.group("women").base_rate},
        "rule": {label: line for label, line in zip(rule.labels, rule.serialize().splitlines())},
        "separation": {
            "fpr_gap": sep.fpr_gap,
            "fnr_gap": sep.fnr_gap,
            "fpr": {g: rp.fpr for g, rp in sep.rate_pairs.items()},
            "fnr": {g: rp.fnr for g, rp in sep.rate_pairs.items()},
        },
        "sufficiency": {
            "gap_r1": suff.gap_r1,
            "gap_r0": suff.gap_r0,
            "pos_given_r1": dict(suff.pos_given_r1),
            "pos_given_r0": dict(suff.pos_given_r0),
        },
        "coarsened_calibration": {"sup_gap": coarse_cal.sup_gap, "l1_gap": coarse_cal.l1_gap},
        "disutility": {
            "per_outcome": {**du_outcome.per_group, "disparity": du_outcome.disparity},
            "per_person": {**du_person.per_group, "disparity": du_person.disparity},
        },
        "witness": {"applies": witness_applies, "consistent": witness_consistent},
    }
    sep_max = sep.max_gap
    suff_max = suff.max_gap
    verdicts = {
        "separation": Verdict(sep.holds(ANALYTIC_TOL), sep_max, ANALYTIC_TOL),
        "sufficiency": Verdict(suff.holds(ANALYTIC_TOL), suff_max, ANALYTIC_TOL),
        "equal_harm": Verdict(selected.verdict, selected.disparity, selected.tolerance),
    }
    series = {
        "roc_men": _roc_series(pop.group("men")),
        "roc_women": _roc_series(pop.group("women")),
    }
    params = {
        "base_rate_m": base_rate_m,
        "base_rate_f": base_rate_f,
        "reference_t": reference_t,
        "grid": grid,
        "convention": convention,
        "rule_kind": rule_kind,
        "reference": reference,
    }
    return ExperimentReport("judge", params, metrics, verdicts, series)


# -- harm parity does not pin down the composition of declined cases -----------


def _three_level_negative(
    grid: int, total: float, mean: float, cut_lo: float, cut_hi: float, upper_mass: float
) -> ScoreDensity | None:
    """Piecewise-constant density on three segments with prescribed total mass
    and mean; returns None when the solved masses go negative."""
    k_lo = round(cut_lo * grid)
    k_hi = round(cut_hi * grid)
    if not 0 < k_lo < k_hi < grid:
        return None
    a = k_lo / grid
    b = k_hi / grid
    c1, c2, c3 = a / 2.0, (a + b) / 2.0, (1.0 + b) / 2.0
    rest = total - upper_mass
    tilt = mean - upper_mass * c3
    mu1 = (rest * c2 - tilt) / (c2 - c1)
    mu2 = rest - mu1
    if mu1 < 0 or mu2 < 0 or upper_mass < 0:
        return None
    weights = np.empty(grid)
    weights[:k_lo] = mu1 / a
    weights[k_lo:k_hi] = mu2 / (b - a)
    weights[k_hi:] = upper_mass / (1.0 - b)
    return ScoreDensity(weights)


def _negative_mass_below(density: ScoreDensity, t: float) -> float:
    return float(density.exact_mass_below(t))


def run_appendix_counterexample(
    grid: int = DEFAULT_GRID, n_reshapes: int = 100, seed: int = 7
) -> ExperimentReport:
    """Two populations identical except for the negative-class score shape of
    one group (same mass, same mean). One fixed rule equalizes the declined
    positive mass across groups on both populations, yet the share of
    positives among the declined shifts, so harm parity cannot force equal
    declined-case composition."""
    base_m, base_f, t_ref = 0.3, 0.6, 0.5
    men_a = ConditionalScoreDensity.from_base_rate(base_m, grid)
    women = ConditionalScoreDensity.from_base_rate(base_f, grid)
    pop_a = PopulationModel(groups={"men": men_a, "women": women})
    rule = solve_parity_ratio(pop_a, "men", t_ref)

    neg_total = men_a.f0.total_mass()
    neg_mean = float(np.sum(men_a.f0.weights * men_a.f0.midpoints()) / grid)
    reshaped = _three_level_negative(grid, neg_total, neg_mean, 0.25, 0.75, upper_mass=0.05)
    if reshaped is None:
        raise RuntimeError("fixed reshape construction failed")
    men_b = ConditionalScoreDensity(f0=reshaped, f1=men_a.f1)
    pop_b = pop_a.with_group("men", men_b)

    def missed_positive(pop: PopulationModel, g: str) -> float:
        csd = pop.group(g)
        pol = rule.for_group(g)
        return float(csd.f1.exact_total() - pol.decided_mass(csd.f1))

    def declined_positive_share(pop: PopulationModel, g: str) -> float:
        s = sufficiency_gap_binary(pop, rule)
        return s.pos_given_r0[g]

    out = {}
    for tag, pop in (("popA", pop_a), ("popB", pop_b)):
        mm, mf = missed_positive(pop, "men"), missed_positive(pop, "women")
        suff = sufficiency_gap_binary(pop, rule)
        out[tag] = {
            "missed_positive_men": mm,
            "missed_positive_women": mf,
            "missed_positive_gap": abs(mm - mf),
            "false_omission_men": suff.pos_given_r0["men"],
            "false_omission_women": suff.pos_given_r0["women"],
            "false_omission_gap": abs(suff.pos_given_r0["men"] - suff.pos_given_r0["women"]),
        }
    men_shift = abs(out["popA"]["false_omission_men"] - out["popB"]["false_omission_men"])
    women_shift = abs(out["popA"]["false_omission_women"] - out["popB"]["false_omission_women"])

    below_a = _negative_mass_below(men_a.f0, t_ref)
    rng = np.random.default_rng(seed)
    reshape_parity_residuals = []
    reshape_false_omission_gaps = []
    produced = 0
    attempts = 0
    while produced < n_reshapes:
        attempts += 1
        if attempts > 200 * max(n_reshapes, 1):
            raise RuntimeError("reshape generation stalled; constraints too tight")
        cand = _three_level_negative(
            grid,
            neg_total,
            neg_mean,
            cut_lo=rng.uniform(0.1, 0.4),
            cut_hi=rng.uniform(0.6, 0.9),
            upper_mass=rng.uniform(0.01, 0.12),
        )
        if cand is None:
            continue
        if abs(_negative_mass_below(cand, t_ref) - below_a) < 0.02:
            continue  # must move mass across the threshold
        pop_r = pop_a.with_group("men", ConditionalScoreDensity(f0=cand, f1=men_a.f1))
        mm, mf = missed_positive(pop_r, "men"), missed_positive(pop_r, "women")
        reshape_parity_residuals.append(abs(mm - mf))
        suff_r = sufficiency_gap_binary(pop_r, rule)
        reshape_false_omission_gaps.append(abs(suff_r.pos_given_r0["men"] - suff_r.pos_given_r0["women"]))
        produced += 1

    metrics = {
        "popA": out["popA"],
        "popB": out["popB"],
        "false_omission": {"men_shift": men_shift, "women_shift": women_shift},
        "reshapes": {
            "count": produced,
            "parity_max_residual": max(reshape_parity_residuals) if reshape_parity_residuals else 0.0,
            "false_omission_min_gap": min(reshape_false_omission_gaps) if reshape_false_omission_gaps else UNDEFINED,
        },
    }
    parity_worst = max(out["popA"]["missed_positive_gap"], out["popB"]["missed_positive_gap"])
    verdicts = {
        "harm_parity_preserved": Verdict(parity_worst <= ANALYTIC_TOL, parity_worst, ANALYTIC_TOL),
        "composition_changed": Verdict(men_shift > 0.01, men_shift, 0.01),
        "women_unchanged": Verdict(women_shift == 0.0, women_shift, 0.0),
    }
    mids = men_a.f0.midpoints()
    series = {
        "men_negative_density_popA": list(zip(mids, men_a.f0.weights)),
        "men_negative_density_popB": list(zip(mids, men_b.f0.weights)),
    }
    params = {"grid": grid, "n_reshapes": n_reshapes, "seed": seed}
    return ExperimentReport("appendix", params, metrics, verdicts, series)


# -- registry ------------------------------------------------------------------


@dataclass(frozen=True)
class Param:
    kind: type
    default: object
    choices: tuple | None = None


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    summary: str
    params: dict[str, Param]
    cli_required: tuple[str, ...] = ()

    def run(self, values: dict[str, object]) -> ExperimentReport:
        return _RUNNERS[self.name](values)


def _run_recommender(v):
    men_map = make_score_map(v["map"], v["grid"], v["map_value"])
    return run_recommender_experiment(men_map, grid=v["grid"], n_mc=v["samples"], seed=v["seed"])


def _run_equal_rates(v):
    return run_equal_rates_unequal_utility(v["p_men"], v["p_women"], v["fp_mass"])


def _run_judge(v):
    return run_judge_experiment(
        base_rate_m=v["base_rate_m"],
        base_rate_f=v["base_rate_f"],
        reference_t=v["reference_t"],
        grid=v["grid"],
        convention=v["convention"],
        rule_kind=v["rule"],
        reference=v["reference"],
    )


def _run_appendix(v):
    return run_appendix_counterexample(grid=v["grid"], n_reshapes=v["reshapes"], seed=v["seed"])


_RUNNERS = {
    "recommender": _run_recommender,
    "equal-rates": _run_equal_rates,
    "judge": _run_judge,
    "appendix": _run_appendix,
}

EXPERIMENTS: dict[str, ExperimentSpec] = {
    "recommender": ExperimentSpec(
        name="recommender",
        summary="self-serving decisions on displayed scores; one group's scores transformed",
        params={
            "map": Param(str, "constant", RECOMMENDER_MAPS),
            "map_value": Param(float, 0.9),
            "grid": Param(int, DEFAULT_GRID),
            "samples": Param(int, 1_000_000),
            "seed": Param(int, 42),
        },
    ),
    "equal-rates": ExperimentSpec(
        name="equal-rates",
        summary="equal error rates with unequal per-decision utility loss",
        params={
            "p_men": Param(float, 0.1),
            "p_women": Param(float, 0.4),
            "fp_mass": Param(float, 0.1),
        },
    ),
    "judge": ExperimentSpec(
        name="judge",
        summary="group-specific thresholds equalizing error rates or expected harm",
        params={
            "base_rate_m": Param(float, 0.3),
            "base_rate_f": Param(float, 0.6),
            "reference_t": Param(float, 0.5),
            "grid": Param(int, DEFAULT_GRID),
            "convention": Param(str, "per-outcome", ("per-outcome", "per-person")),
            "rule": Param(str, "equalized-odds", JUDGE_RULES),
            "reference": Param(str, "men", ("men", "women")),
        },
        cli_required=("convention",),
    ),
    "appendix": ExperimentSpec(
        name="appendix",
        summary="harm parity preserved under negative-class reshapes that change declined-case composition",
        params={
            "grid": Param(int, DEFAULT_GRID),
            "reshapes": Param(int, 100),
            "seed": Param(int, 7),
        },
    ),
}
