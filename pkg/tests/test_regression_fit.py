import math

import numpy as np
import pandas as pd
import pytest

from electorate_lab.exceptions import (
    DegenerateSeriesError,
    DomainError,
    EmptySideError,
    InsufficientVariationError,
    ParameterRequiredError,
    RankDeficientError,
)
from electorate_lab.group_measures import GroupStats
from electorate_lab.regression_fit import (
    REGRESSION_TABLE_COLUMNS,
    TREND_TABLE_COLUMNS,
    FixedEffects,
    TrendLabel,
    classify_case1,
    classify_case2,
    classify_form,
    consistent_families,
    design_matrix,
    ols,
    piecewise_polarization,
    piecewise_side,
    predict_trend,
    quadratic_polarization,
    regression_table,
    trend_table,
)
from electorate_lab.utility_forms import LossFamily, LossSpec, indifference, indifference_path


def test_ols():
    x = np.arange(5.0)
    result = ols([1, 3, 2, 5, 4], design_matrix({"x": x}))
    assert result["const"] == pytest.approx(1.4)
    assert result["x"] == pytest.approx(0.8)
    assert result.se("x") == pytest.approx(math.sqrt(0.12))
    assert result.se("const") == pytest.approx(math.sqrt(0.72))
    assert result.r_squared == pytest.approx(0.64)
    assert result.n_obs == 5
    np.testing.assert_allclose(result.residuals, [-0.4, 0.8, -1.0, 1.2, -0.6], atol=1e-12)


def test_ols_constant_outcome():
    result = ols([2.0, 2.0, 2.0, 2.0], design_matrix({"x": [0, 1, 2, 3]}))
    assert result.r_squared == 0.0
    assert result["x"] == pytest.approx(0.0, abs=1e-12)


def test_ols_rank_deficient():
    x = np.arange(6.0)
    with pytest.raises(RankDeficientError) as excinfo:
        ols(np.sin(x), design_matrix({"x": x, "x2": 2 * x}))
    assert len(excinfo.value.columns) == 1
    assert excinfo.value.columns[0] in ("x", "x2")


def test_ols_needs_residual_degrees_of_freedom():
    with pytest.raises(InsufficientVariationError):
        ols([1.0, 2.0], design_matrix({"x": [0.0, 1.0]}))
    with pytest.raises(DomainError):
        ols([1.0, np.nan, 2.0], design_matrix({"x": [0.0, 1.0, 2.0]}))


def test_piecewise_polarization():
    pol = np.array([0.1, 0.2, 0.3, 0.7, 0.8, 0.9])
    y = np.where(pol < 0.5, 1 + 2 * pol, 3 - pol)
    low, high = piecewise_polarization(y, pol)
    assert (low.model, high.model) == ("piecewise_low", "piecewise_high")
    assert low["const"] == pytest.approx(1.0)
    assert low["pol"] == pytest.approx(2.0)
    assert high["const"] == pytest.approx(3.0)
    assert high["pol"] == pytest.approx(-1.0)
    assert low.n_obs == high.n_obs == 3


def test_piecewise_threshold_is_a_race_mean():
    """Races observed many times weigh once in the threshold."""
    pol = np.array([0.1] * 6 + [0.2, 0.3, 0.45, 0.9, 0.95, 1.0])
    races = ["a"] * 6 + ["b", "c", "d", "e", "f", "g"]
    y = np.arange(len(pol), dtype=float) + pol
    # race mean 0.557 keeps race d low; the observation mean 0.367 would not
    low, high = piecewise_polarization(y, pol, races=races)
    assert low.n_obs == 9
    assert high.n_obs == 3


def test_piecewise_empty_side():
    with pytest.raises(EmptySideError) as excinfo:
        piecewise_polarization([1.0, 2.0, 3.0], [0.1, 0.2, 0.3], threshold=1.0)
    assert excinfo.value.side == "high"


def test_piecewise_side_fits_each_side_alone():
    """A saturated high side fails on its own without affecting the low side."""
    pol = np.array([0.1, 0.2, 0.3, 1.0, 1.0, 1.0])
    y = np.array([1.2, 1.4, 1.6, 0.5, 0.6, 0.7])
    low = piecewise_side(y, pol, 0.5, "low")
    assert low["pol"] == pytest.approx(2.0)
    assert low.model == "piecewise_low"
    with pytest.raises(RankDeficientError):
        piecewise_side(y, pol, 0.5, "high")
    with pytest.raises(RankDeficientError):
        piecewise_polarization(y, pol, 0.5)
    with pytest.raises(DomainError):
        piecewise_side(y, pol, 0.5, "middle")


def test_quadratic_polarization():
    pol = np.linspace(0.1, 0.9, 9)
    y = 0.5 + pol - 2 * pol**2
    result = quadratic_polarization(y, pol)
    assert result.model == "quadratic"
    assert result["pol"] == pytest.approx(1.0)
    assert result["pol_sq"] == pytest.approx(-2.0)
    assert result.r_squared == pytest.approx(1.0)


def test_quadratic_polarization_voter_fixed_effects():
    pol = np.tile([0.2, 0.5, 0.8], 4)
    units = np.repeat([0, 1, 2, 3], 3)
    y = units * 10.0 + 2 * pol - pol**2
    result = quadratic_polarization(
        np.append(y, 7.0),
        np.append(pol, 0.3),
        fixed_effects="Voter",
        units=np.append(units, 9),
    )
    assert result.model == "quadratic_fe"
    assert result.fe_absorbed is FixedEffects.VOTER
    assert result.n_obs == 12
    assert set(result.coefficients) == {"pol", "pol_sq"}
    assert result["pol"] == pytest.approx(2.0)
    assert result["pol_sq"] == pytest.approx(-1.0)


def test_quadratic_polarization_errors():
    with pytest.raises(InsufficientVariationError):
        quadratic_polarization([1.0, 2.0, 3.0, 4.0], [0.1, 0.1, 0.2, 0.2])
    with pytest.raises(DomainError):
        quadratic_polarization([1.0, 2.0, 3.0], [0.1, 0.2, 0.3], fixed_effects="Race")
    with pytest.raises(DomainError):
        quadratic_polarization([1.0, 2.0, 3.0], [0.1, 0.2, 0.3], fixed_effects="Voter")
    # every unit sees a single polarization value
    with pytest.raises(InsufficientVariationError):
        quadratic_polarization(
            [1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            [0.2, 0.2, 0.5, 0.5, 0.8, 0.8],
            fixed_effects="Voter",
            units=[0, 0, 1, 1, 2, 2],
        )


def test_regression_table():
    x = np.arange(5.0)
    table = regression_table([ols([1, 3, 2, 5, 4], design_matrix({"x": x}), model="m")])
    assert list(table.columns) == REGRESSION_TABLE_COLUMNS
    assert table["term"].tolist() == ["const", "x"]
    assert (table["model"] == "m").all()


@pytest.mark.parametrize(
    "family, dimensionality, beta, expected",
    [
        ("Linear", "Uni", None, TrendLabel.CONSTANT),
        ("Concave", "Uni", None, TrendLabel.DECREASING),
        ("Convex", "Uni", None, TrendLabel.INCREASING),
        ("ReverseS", "Uni", None, TrendLabel.U_SHAPED),
        ("Linear", "Multi", None, TrendLabel.INCREASING),
        ("Concave", "Multi", 2.0, TrendLabel.CONSTANT),
        ("Concave", "Multi", 3.0, TrendLabel.DECREASING),
        ("Concave", "Multi", 1.5, TrendLabel.INCREASING),
        ("Convex", "Multi", None, TrendLabel.INCREASING),
        ("ReverseS", "Multi", None, TrendLabel.U_SHAPED),
    ],
)
def test_predict_trend(family, dimensionality, beta, expected):
    for setting in ("Case1", "Case2"):
        assert predict_trend(family, setting, dimensionality, beta) is expected


def test_predict_trend_requires_beta():
    with pytest.raises(ParameterRequiredError):
        predict_trend("Concave", "Case1", "Multi")


def test_trend_table():
    table = trend_table()
    assert list(table.columns) == TREND_TABLE_COLUMNS
    assert len(table) == 20
    concave_multi = table[(table["family"] == "Concave") & (table["dimensionality"] == "Multi")]
    assert sorted(concave_multi["beta"].unique()) == [1.5, 2.0, 3.0]


def test_consistent_families():
    assert consistent_families("UShaped") == (LossFamily.REVERSE_S,)
    assert consistent_families("Constant") == (LossFamily.LINEAR,)
    assert consistent_families("Decreasing") == (LossFamily.CONCAVE,)
    assert consistent_families("Increasing") == (LossFamily.CONVEX,)
    assert consistent_families("Increasing", "Multi") == (LossFamily.LINEAR, LossFamily.CONCAVE, LossFamily.CONVEX)
    assert consistent_families("Constant", "Multi") == (LossFamily.CONCAVE,)


def test_classify_form_shapes():
    x = np.linspace(0, 4, 9)
    assert classify_form(zip(x, 2 * x)).label is TrendLabel.INCREASING
    assert classify_form(zip(x, -x)).label is TrendLabel.DECREASING
    assert classify_form(zip(x, np.full_like(x, -0.3))).label is TrendLabel.CONSTANT
    result = classify_form(zip(x, (x - 2) ** 2))
    assert result == (TrendLabel.U_SHAPED, (LossFamily.REVERSE_S,))


def test_classify_form_degenerate():
    with pytest.raises(DegenerateSeriesError):
        classify_form([(0, 1), (1, 2), (2, 3), (3, 4)])
    with pytest.raises(DegenerateSeriesError):
        classify_form([(0, 1), (0, 2), (1, 3), (1, 4), (1, 5)])


def _reverse_s_points(rng):
    omega = rng.uniform(0.5, 2.0)
    gap = rng.uniform(0.2, 0.6) * math.sqrt(omega)
    spec = LossSpec("ReverseS", alpha=1.0, omega=omega)
    grid = np.linspace(0, 3 * math.sqrt(omega), 3001)
    peak = grid[np.argmin(indifference(spec, grid, grid + gap))]
    shifts = np.linspace(0, 2 * peak, 41)
    return shifts, indifference_path(spec, 0.0, gap, shifts)


def _power_points(rng, family):
    if family is LossFamily.LINEAR:
        spec = LossSpec("Linear")
    elif family is LossFamily.CONCAVE:
        spec = LossSpec("Concave", beta=rng.uniform(1.5, 3.0))
    else:
        spec = LossSpec("Convex", beta=rng.uniform(0.3, 0.7))
    shifts = np.linspace(0.5, 5.0, 41)
    return shifts, indifference_path(spec, rng.uniform(0.2, 1.0), rng.uniform(0.2, 1.0), shifts)


def _draw(rng, family):
    if family is LossFamily.REVERSE_S:
        return _reverse_s_points(rng)
    return _power_points(rng, family)


def test_classifier_recovers_the_family():
    """On exact indifference paths the true family is always among the consistent ones."""
    rng = np.random.default_rng(17)
    for family in LossFamily:
        for _ in range(100):
            x, y = _draw(rng, family)
            result = classify_form(zip(x, y))
            assert family in result.families, (family, result)


def test_classifier_under_noise():
    rng = np.random.default_rng(18)
    correct = total = 0
    for family in LossFamily:
        for _ in range(50):
            x, y = _draw(rng, family)
            y = y + rng.normal(0, 0.005 * np.max(np.abs(y)), size=y.shape)
            result = classify_form(zip(x, y))
            if result.label is TrendLabel.U_SHAPED:
                assert result.families == (LossFamily.REVERSE_S,)
            correct += family in result.families
            total += 1
    assert correct / total >= 0.95


def test_classify_case1():
    stats = [GroupStats(k, "dd", 100, 100 - 5 * k, 0, 5 * k) for k in range(11)]
    assert classify_case1(stats, ["dd"], 10, party="D").label is TrendLabel.INCREASING
    assert classify_case1(stats, ["dd"], 10, party="R").label is TrendLabel.DECREASING
    with pytest.raises(DegenerateSeriesError):
        classify_case1(stats, ["other"], 10)


def test_classify_case2():
    pol = np.linspace(0.1, 0.9, 9)
    panel = pd.DataFrame({"pol": pol, "abstention_rate": 0.5 - 0.3 * pol, "predictability": 0.2 + 0.3 * pol})
    assert classify_case2(panel).label is TrendLabel.DECREASING
    assert classify_case2(panel, "predictability").label is TrendLabel.DECREASING
    with pytest.raises(DomainError):
        classify_case2(panel, "turnout")
