import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from fairsim import (
    AuditDataset,
    ConditionalScoreDensity,
    PopulationModel,
    ScoreDensity,
    ScoreMap,
    apply_score_map,
    base_rate,
    calibration_curve,
    integrate,
    is_defined,
    sample,
)
from _helpers import calibrated_uniform_pair, judge_population

GRID = 1024


def test_weights_must_be_nonnegative_and_finite():
    with pytest.raises(ValueError):
        ScoreDensity(np.array([1.0, -0.1]))
    with pytest.raises(ValueError):
        ScoreDensity(np.array([np.inf, 1.0]))
    with pytest.raises(ValueError):
        ScoreDensity(np.array([]))


def test_uniform_is_normalized():
    d = ScoreDensity.uniform(GRID)
    assert d.is_normalized()
    assert d.total_mass() == pytest.approx(1.0, abs=1e-12)


def test_conditional_density_must_sum_to_one():
    half = ScoreDensity(np.full(4, 0.5))
    ConditionalScoreDensity(f0=half, f1=half)  # 0.5 + 0.5 = 1
    with pytest.raises(ValueError):
        ConditionalScoreDensity(f0=half, f1=ScoreDensity(np.full(4, 0.6)))
    with pytest.raises(ValueError):
        ConditionalScoreDensity(f0=half, f1=ScoreDensity(np.full(8, 0.5)))


def test_population_needs_two_groups_and_one_grid():
    csd = ConditionalScoreDensity.calibrated(ScoreDensity.uniform(8))
    with pytest.raises(ValueError):
        PopulationModel(groups={"only": csd})
    other = ConditionalScoreDensity.calibrated(ScoreDensity.uniform(16))
    with pytest.raises(ValueError):
        PopulationModel(groups={"a": csd, "b": other})


# -- integrate ---------------------------------------------------------------


def test_integrate_constant_weight():
    assert integrate(ScoreDensity.uniform(GRID), lambda s: np.ones_like(s)) == pytest.approx(1.0, abs=1e-12)


def test_integrate_linear_weight_against_quadrature():
    expected, _ = quad(lambda s: s, 0.0, 1.0)
    got = integrate(ScoreDensity.uniform(GRID), lambda s: s)
    assert got == pytest.approx(expected, abs=1e-6)


def test_integrate_clipped_utility_weight():
    # weight = 2s - 1 above one half, zero below
    got = integrate(ScoreDensity.uniform(GRID), lambda s: np.where(s > 0.5, 2 * s - 1, 0.0))
    assert got == pytest.approx(0.25, abs=1e-4)


def test_integrate_accepts_scalar_functions():
    got = integrate(ScoreDensity.uniform(64), lambda s: float(s) ** 2)
    assert got == pytest.approx(1.0 / 3.0, abs=1e-4)


@given(
    weights=st.lists(st.floats(0.0, 10.0), min_size=4, max_size=32),
    scale=st.floats(-3.0, 3.0),
)
def test_integrate_is_linear_in_the_weight(weights, scale):
    d = ScoreDensity(np.array(weights))
    f = lambda s: s
    g = lambda s: 1.0 - s
    lhs = integrate(d, lambda s: f(s) + scale * g(s))
    rhs = integrate(d, f) + scale * integrate(d, g)
    assert lhs == pytest.approx(rhs, abs=1e-9)


@given(weights=st.lists(st.floats(0.0, 10.0), min_size=4, max_size=32))
def test_integrate_monotone_for_nonnegative_weights(weights):
    d = ScoreDensity(np.array(weights))
    small = integrate(d, lambda s: s)
    large = integrate(d, lambda s: s + 0.5)
    assert small <= large + 1e-12


# -- base rate and calibration curve ------------------------------------------


def test_base_rate_zero_when_no_positive_mass():
    pop = PopulationModel(
        groups={
            "a": ConditionalScoreDensity(f0=ScoreDensity.uniform(GRID), f1=ScoreDensity(np.zeros(GRID))),
            "b": ConditionalScoreDensity.calibrated(ScoreDensity.uniform(GRID)),
        }
    )
    assert base_rate(pop, "a") == 0.0


def test_base_rate_calibrated_uniform_is_half():
    pop = calibrated_uniform_pair(GRID)
    assert base_rate(pop, "a") == pytest.approx(0.5, abs=1e-12)


def test_base_rate_matches_score_mean_when_calibrated():
    # for a calibrated group, mass of f1 equals the mean of the marginal
    csd = ConditionalScoreDensity.from_base_rate(0.3, GRID)
    marginal = ScoreDensity(csd.f0.weights + csd.f1.weights)
    assert csd.base_rate == pytest.approx(integrate(marginal, lambda s: s), abs=1e-6)


def test_base_rate_unknown_group():
    pop = calibrated_uniform_pair(64)
    with pytest.raises(KeyError):
        base_rate(pop, "nope")


def test_calibration_curve_of_calibrated_group_is_identity():
    pop = calibrated_uniform_pair(GRID)
    curve = calibration_curve(pop, "a")
    assert np.max(np.abs(curve.values - curve.midpoints)) <= 1e-12


def test_calibration_curve_zero_when_f1_empty():
    pop = PopulationModel(
        groups={
            "a": ConditionalScoreDensity(f0=ScoreDensity.uniform(GRID), f1=ScoreDensity(np.zeros(GRID))),
            "b": ConditionalScoreDensity.calibrated(ScoreDensity.uniform(GRID)),
        }
    )
    curve = calibration_curve(pop, "a")
    assert np.all(curve.values == 0.0)


def test_calibration_curve_detects_inflated_positive_mass():
    mids = (np.arange(GRID) + 0.5) / GRID
    f1 = 2.0 * mids  # doubled against the calibrated shape
    f0 = 1.0 - mids
    total = f1.sum() / GRID + f0.sum() / GRID
    csd = ConditionalScoreDensity(f0=ScoreDensity(f0 / total), f1=ScoreDensity(f1 / total))
    pop = PopulationModel(groups={"a": csd, "b": csd})
    curve = calibration_curve(pop, "a")
    interior = (curve.midpoints > 0.1) & (curve.midpoints < 0.9)
    assert np.max(np.abs(curve.values[interior] - curve.midpoints[interior])) > 0.05


@settings(max_examples=50, deadline=None)
@given(weights=st.lists(st.floats(0.01, 10.0), min_size=4, max_size=64))
def test_calibrated_split_is_a_fixed_point_of_the_curve(weights):
    marginal = ScoreDensity(np.array(weights)).normalized()
    csd = ConditionalScoreDensity.calibrated(marginal)
    pop = PopulationModel(groups={"a": csd, "b": csd})
    curve = calibration_curve(pop, "a")
    assert np.max(np.abs(curve.values - curve.midpoints)) <= 1e-12


def test_calibration_curve_marks_empty_cells_undefined():
    w = np.zeros(8)
    w[2] = 8.0
    csd = ConditionalScoreDensity(f0=ScoreDensity(w * 0.5), f1=ScoreDensity(w * 0.5))
    pop = PopulationModel(groups={"a": csd, "b": csd})
    curve = calibration_curve(pop, "a")
    assert not is_defined(curve.values[0])
    assert curve.values[2] == pytest.approx(0.5)


# -- score maps ----------------------------------------------------------------


def test_identity_map_leaves_population_unchanged():
    pop = calibrated_uniform_pair(GRID)
    mapped = apply_score_map(pop, "a", ScoreMap.identity(GRID))
    for attr in ("f0", "f1"):
        before = getattr(pop.group("a"), attr).weights
        after = getattr(mapped.group("a"), attr).weights
        assert np.max(np.abs(before - after)) <= 1e-12


def test_constant_map_concentrates_mass_and_conserves_class_totals():
    pop = calibrated_uniform_pair(GRID)
    mapped = apply_score_map(pop, "a", ScoreMap.constant(0.9, GRID))
    g = mapped.group("a")
    target = int(0.9 * GRID)
    assert np.count_nonzero(g.f1.weights) == 1
    assert g.f1.weights[target] > 0
    assert g.f0.total_mass() == pytest.approx(pop.group("a").f0.total_mass(), abs=1e-9)
    assert g.f1.total_mass() == pytest.approx(pop.group("a").f1.total_mass(), abs=1e-9)


def test_flip_map_inverts_the_calibration_curve():
    pop = calibrated_uniform_pair(GRID)
    mapped = apply_score_map(pop, "a", ScoreMap.from_callable(lambda p: 1.0 - p, GRID))
    curve = calibration_curve(mapped, "a")
    assert np.max(np.abs(curve.values - (1.0 - curve.midpoints))) <= 1e-12


def test_score_map_rejects_values_outside_unit_interval():
    with pytest.raises(ValueError):
        ScoreMap(np.array([0.2, 1.2]))
    with pytest.raises(ValueError):
        ScoreMap.from_callable(lambda p: p * 1.5, 16)


@settings(max_examples=50, deadline=None)
@given(
    w0=st.lists(st.floats(0.0, 5.0), min_size=8, max_size=8),
    w1=st.lists(st.floats(0.0, 5.0), min_size=8, max_size=8),
    targets=st.lists(st.floats(0.0, 1.0), min_size=8, max_size=8),
)
def test_any_score_map_conserves_class_masses(w0, w1, targets):
    total = (sum(w0) + sum(w1)) / 8
    if total <= 0:
        return
    csd = ConditionalScoreDensity(
        f0=ScoreDensity(np.array(w0) / total), f1=ScoreDensity(np.array(w1) / total)
    )
    pop = PopulationModel(groups={"a": csd, "b": csd})
    mapped = apply_score_map(pop, "a", ScoreMap(np.array(targets)))
    assert mapped.group("a").f0.total_mass() == pytest.approx(csd.f0.total_mass(), abs=1e-9)
    assert mapped.group("a").f1.total_mass() == pytest.approx(csd.f1.total_mass(), abs=1e-9)


# -- sampling -------------------------------------------------------------------


def test_sampling_is_deterministic():
    pop = calibrated_uniform_pair(64)
    a = sample(pop, 10, seed=123)
    b = sample(pop, 10, seed=123)
    assert list(a.group) == list(b.group)
    assert np.array_equal(a.score, b.score)
    assert np.array_equal(a.outcome, b.outcome)


def test_sampling_rejects_empty_draw():
    with pytest.raises(ValueError):
        sample(calibrated_uniform_pair(64), 0, seed=1)


def test_sampling_without_positive_mass_yields_zero_outcomes():
    pop = PopulationModel(
        groups={
            "a": ConditionalScoreDensity(f0=ScoreDensity.uniform(64), f1=ScoreDensity(np.zeros(64))),
            "b": ConditionalScoreDensity(f0=ScoreDensity.uniform(64), f1=ScoreDensity(np.zeros(64))),
        }
    )
    data = sample(pop, 500, seed=5)
    assert np.all(data.outcome == 0)


def test_sampling_converges_to_analytic_base_rate():
    pop = calibrated_uniform_pair(GRID)
    data = sample(pop, 1_000_000, seed=42)
    assert abs(float(data.outcome.mean()) - 0.5) < 0.005
    for g in ("a", "b"):
        mask = data.group_mask(g)
        assert abs(float(data.outcome[mask].mean()) - 0.5) < 0.005


def test_group_weights_drive_sampling_proportions():
    pop = judge_population(64)
    pop = PopulationModel(groups=pop.groups, weights={"men": 3.0, "women": 1.0})
    data = sample(pop, 100_000, seed=9)
    share_men = float(np.mean(data.group == "men"))
    assert share_men == pytest.approx(0.75, abs=0.01)


# -- audit dataset CSV ------------------------------------------------------------


def test_csv_round_trip(tmp_path):
    pop = judge_population(64)
    data = sample(pop, 200, seed=3)
    path = tmp_path / "records.csv"
    data.to_csv(path)
    back = AuditDataset.from_csv(path)
    assert list(back.group) == list(data.group)
    assert np.array_equal(back.score, data.score)
    assert np.array_equal(back.outcome, data.outcome)
    assert back.decision is None


def test_csv_rejects_wrong_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("group,score,label,decision\na,0.5,1,\n")
    with pytest.raises(ValueError, match="header"):
        AuditDataset.from_csv(path)


def test_csv_names_offending_row(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("group,score,outcome,decision\na,0.5,1,\na,1.2,0,\n")
    with pytest.raises(ValueError, match="row 3"):
        AuditDataset.from_csv(path)


def test_csv_validates_outcome_and_decision(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("group,score,outcome,decision\na,0.5,2,\n")
    with pytest.raises(ValueError, match="row 2"):
        AuditDataset.from_csv(path)
    path.write_text("group,score,outcome,decision\na,0.5,1,7\n")
    with pytest.raises(ValueError, match="row 2"):
        AuditDataset.from_csv(path)


def test_dataset_validates_score_range():
    with pytest.raises(ValueError):
        AuditDataset(group=np.array(["a"]), score=np.array([1.5]), outcome=np.array([1]))
