"""
Regressions of indifference measures on distance proxies, the predicted
trend of each loss family, and the functional-form classifier that inverts it.
"""
import enum
import logging
import typing as t
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import linalg

from electorate_lab.electorate_sim import Party
from electorate_lab.exceptions import (
    DegenerateSeriesError,
    DomainError,
    EmptySideError,
    InsufficientVariationError,
    ParameterRequiredError,
    RankDeficientError,
)
from electorate_lab.group_measures import GroupStats, abstention_rate
from electorate_lab.utility_forms import LossFamily

_LOGGER = logging.getLogger(__name__)

# pivots of R below this fraction of the largest pivot count as zero
RANK_TOLERANCE = 1e-10
SLOPE_SE = 2.0
# Concave exponents enumerated for the multi-dimensional trend table
MULTI_CONCAVE_BETAS = (1.5, 2.0, 3.0)

REGRESSION_TABLE_COLUMNS = ["model", "term", "coefficient", "std_error", "n_obs", "r_squared"]
TREND_TABLE_COLUMNS = ["family", "setting", "dimensionality", "beta", "trend"]


class FixedEffects(str, enum.Enum):
    NONE = "None"
    VOTER = "Voter"
    RACE = "Race"


class TrendLabel(str, enum.Enum):
    CONSTANT = "Constant"
    DECREASING = "Decreasing"
    INCREASING = "Increasing"
    U_SHAPED = "UShaped"


class Setting(str, enum.Enum):
    CASE1 = "Case1"
    CASE2 = "Case2"


class Dimensionality(str, enum.Enum):
    UNI = "Uni"
    MULTI = "Multi"


@dataclass(frozen=True, eq=False)
class RegressionResult:
    model: str
    coefficients: t.Dict[str, float]
    standard_errors: t.Dict[str, float]
    r_squared: float
    n_obs: int
    fe_absorbed: FixedEffects = FixedEffects.NONE
    residuals: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if set(self.coefficients) != set(self.standard_errors):
            raise DomainError("every coefficient needs a standard error")

    def __getitem__(self, term: str) -> float:
        return self.coefficients[term]

    def se(self, term: str) -> float:
        return self.standard_errors[term]


class FormClassification(t.NamedTuple):
    label: TrendLabel
    families: t.Tuple[LossFamily, ...]


def design_matrix(columns: t.Mapping[str, t.Sequence[float]], intercept: bool = True) -> pd.DataFrame:
    frame = pd.DataFrame({name: np.asarray(values, dtype=float) for name, values in columns.items()})
    if intercept:
        frame.insert(0, "const", 1.0)
    return frame


def ols(
    y: t.Sequence[float],
    X: t.Union[pd.DataFrame, np.ndarray],
    names: t.Optional[t.Sequence[str]] = None,
    model: str = "ols",
    fe_absorbed: FixedEffects = FixedEffects.NONE,
    absorbed: int = 0,
) -> RegressionResult:
    """
    Least squares by pivoted QR with classical standard errors.

    `absorbed` counts parameters already removed from y and X (fixed effects
    swept out by demeaning); they reduce the residual degrees of freedom.
    """
    if isinstance(X, pd.DataFrame):
        names = list(X.columns)
        X = X.to_numpy(dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).ravel()
    n, p = X.shape
    if names is None:
        names = [f"x{i}" for i in range(p)]
    if len(names) != p:
        raise DomainError(f"{len(names)} names for {p} columns")
    if len(y) != n:
        raise DomainError(f"y has {len(y)} rows, X has {n}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise DomainError("non-finite value in regression data")

    dof = n - p - absorbed
    if dof <= 0:
        raise InsufficientVariationError(f"{n} observations cannot identify {p + absorbed} parameters")

    q, r, perm = linalg.qr(X, mode="economic", pivoting=True)
    pivots = np.abs(np.diag(r))
    rank = int(np.sum(pivots > RANK_TOLERANCE * pivots[0])) if pivots[0] > 0 else 0
    if rank < p:
        raise RankDeficientError([names[i] for i in perm[rank:]])

    beta = np.empty(p)
    beta[perm] = linalg.solve_triangular(r, q.T @ y)
    residuals = y - X @ beta
    sigma2 = float(residuals @ residuals) / dof
    r_inv = linalg.solve_triangular(r, np.eye(p))
    se = np.empty(p)
    se[perm] = np.sqrt(sigma2 * np.sum(r_inv**2, axis=1))

    if np.ptp(y) == 0:
        r_squared = 0.0
    else:
        tss = float(np.sum((y - y.mean()) ** 2))
        r_squared = float(np.clip(1.0 - float(residuals @ residuals) / tss, 0.0, 1.0))

    return RegressionResult(
        model=model,
        coefficients=dict(zip(names, beta.tolist())),
        standard_errors=dict(zip(names, se.tolist())),
        r_squared=r_squared,
        n_obs=n,
        fe_absorbed=FixedEffects(fe_absorbed),
        residuals=residuals,
    )


def _polarization_threshold(pol: np.ndarray, races: t.Optional[t.Sequence[str]]) -> float:
    if races is None:
        return float(np.mean(pol))
    per_race = pd.Series(pol).groupby(np.asarray(races)).first()
    return float(per_race.mean())


PIECEWISE_SIDES = ("low", "high")


def piecewise_side(
    y: t.Sequence[float],
    pol: t.Sequence[float],
    threshold: float,
    side: str,
) -> RegressionResult:
    """Linear fit of y on pol for the observations on one side of the threshold."""
    y = np.asarray(y, dtype=float)
    pol = np.asarray(pol, dtype=float)
    if side not in PIECEWISE_SIDES:
        raise DomainError(f"side must be one of {PIECEWISE_SIDES}, got {side!r}")
    mask = pol <= threshold if side == "low" else pol > threshold
    if not mask.any():
        raise EmptySideError(side, threshold)
    X = design_matrix({"pol": pol[mask]})
    return ols(y[mask], X, model=f"piecewise_{side}")


def piecewise_polarization(
    y: t.Sequence[float],
    pol: t.Sequence[float],
    threshold: t.Optional[float] = None,
    races: t.Optional[t.Sequence[str]] = None,
) -> t.Tuple[RegressionResult, RegressionResult]:
    """
    Separate linear fits of y on pol below and above a threshold.

    The threshold defaults to the mean polarization over races (one value per
    race when `races` labels the observations); races at the threshold fall on
    the low side.
    """
    y = np.asarray(y, dtype=float)
    pol = np.asarray(pol, dtype=float)
    if threshold is None:
        threshold = _polarization_threshold(pol, races)
    _LOGGER.debug("piecewise threshold %.6g", threshold)

    low, high = (piecewise_side(y, pol, threshold, side) for side in PIECEWISE_SIDES)
    return low, high


def _within_demean(frame: pd.DataFrame, columns: t.Sequence[str], unit: str) -> pd.DataFrame:
    means = frame.groupby(unit)[list(columns)].transform("mean")
    demeaned = frame.copy()
    demeaned[list(columns)] = frame[list(columns)] - means
    return demeaned


def quadratic_polarization(
    y: t.Sequence[float],
    pol: t.Sequence[float],
    fixed_effects: t.Union[FixedEffects, str] = FixedEffects.NONE,
    units: t.Optional[t.Sequence[t.Any]] = None,
) -> RegressionResult:
    """
    Fit y on (pol, pol^2).

    With voter fixed effects the unit means are swept out of every column and
    units observed only once are dropped; no intercept is estimated.
    """
    fixed_effects = FixedEffects(fixed_effects)
    y = np.asarray(y, dtype=float)
    pol = np.asarray(pol, dtype=float)
    if len(np.unique(pol)) < 3:
        raise InsufficientVariationError(f"need at least 3 distinct polarization values, got {len(np.unique(pol))}")

    if fixed_effects is FixedEffects.NONE:
        X = design_matrix({"pol": pol, "pol_sq": pol**2})
        return ols(y, X, model="quadratic")
    if fixed_effects is FixedEffects.RACE:
        raise DomainError("polarization is constant within a race; race effects would absorb it")
    if units is None:
        raise DomainError("voter fixed effects need a unit per observation")

    frame = pd.DataFrame({"y": y, "pol": pol, "pol_sq": pol**2, "unit": np.asarray(units)})
    sizes = frame.groupby("unit")["y"].transform("size")
    singletons = int((sizes < 2).sum())
    if singletons:
        _LOGGER.debug("dropped %d units observed in a single race", singletons)
        frame = frame[sizes >= 2]
    n_units = frame["unit"].nunique()
    if n_units == 0:
        raise InsufficientVariationError("no unit is observed in two or more races")

    demeaned = _within_demean(frame, ["y", "pol", "pol_sq"], "unit")
    scale = max(1.0, float(np.max(np.abs(frame["pol"]))))
    if np.max(np.abs(demeaned["pol"])) <= 1e-12 * scale:
        raise InsufficientVariationError("polarization does not vary within any unit")
    return ols(
        demeaned["y"],
        demeaned[["pol", "pol_sq"]],
        model="quadratic_fe",
        fe_absorbed=FixedEffects.VOTER,
        absorbed=n_units,
    )


def regression_table(results: t.Iterable[RegressionResult]) -> pd.DataFrame:
    rows = []
    for result in results:
        for term, coefficient in result.coefficients.items():
            rows.append(
                (
                    result.model,
                    term,
                    coefficient,
                    result.standard_errors[term],
                    result.n_obs,
                    result.r_squared,
                )
            )
    return pd.DataFrame(rows, columns=REGRESSION_TABLE_COLUMNS)


def predict_trend(
    family: t.Union[LossFamily, str],
    setting: t.Union[Setting, str],
    dimensionality: t.Union[Dimensionality, str],
    beta: t.Optional[float] = None,
) -> TrendLabel:
    """
    How voter indifference moves as the candidates move away from the voter.

    Both settings share the prediction: moving both candidates away from a
    voter and polarizing them around a moderate change the two distances the
    same way. In several dimensions, with the shift orthogonal to the
    candidates' axis, the distance gap closes, which flips Linear and tempers
    Concave depending on its exponent.
    """
    family = LossFamily(family)
    Setting(setting)
    dimensionality = Dimensionality(dimensionality)

    if family is LossFamily.REVERSE_S:
        return TrendLabel.U_SHAPED
    if family is LossFamily.CONVEX:
        return TrendLabel.INCREASING
    if dimensionality is Dimensionality.UNI:
        if family is LossFamily.LINEAR:
            return TrendLabel.CONSTANT
        return TrendLabel.DECREASING

    if family is LossFamily.LINEAR:
        return TrendLabel.INCREASING
    if beta is None:
        raise ParameterRequiredError("multi-dimensional Concave prediction needs beta")
    if not beta > 1.0:
        raise DomainError(f"Concave loss requires beta > 1, got {beta}")
    if np.isclose(beta, 2.0, rtol=0.0, atol=1e-9):
        return TrendLabel.CONSTANT
    return TrendLabel.DECREASING if beta > 2.0 else TrendLabel.INCREASING


def trend_table() -> pd.DataFrame:
    rows = []
    for family in LossFamily:
        for setting in Setting:
            for dimensionality in Dimensionality:
                if family is LossFamily.CONCAVE and dimensionality is Dimensionality.MULTI:
                    betas = MULTI_CONCAVE_BETAS
                else:
                    betas = (None,)
                for beta in betas:
                    trend = predict_trend(family, setting, dimensionality, beta)
                    rows.append(
                        (family.value, setting.value, dimensionality.value, np.nan if beta is None else beta, trend.value)
                    )
    return pd.DataFrame(rows, columns=TREND_TABLE_COLUMNS)


def consistent_families(
    label: t.Union[TrendLabel, str],
    dimensionality: t.Union[Dimensionality, str] = Dimensionality.UNI,
) -> t.Tuple[LossFamily, ...]:
    label = TrendLabel(label)
    families = []
    for family in LossFamily:
        betas = MULTI_CONCAVE_BETAS if family is LossFamily.CONCAVE else (None,)
        if any(predict_trend(family, Setting.CASE1, dimensionality, beta) is label for beta in betas):
            families.append(family)
    return tuple(families)


def _sign(result: RegressionResult, term: str, slope_se: float, atol: float) -> int:
    value = result[term]
    if abs(value) <= slope_se * result.se(term) + atol:
        return 0
    return 1 if value > 0 else -1


def _line(x: np.ndarray, y: np.ndarray, model: str) -> RegressionResult:
    return ols(y, design_matrix({"x": x}), model=model)


def classify_form(
    points: t.Iterable[t.Tuple[float, float]],
    dimensionality: t.Union[Dimensionality, str] = Dimensionality.UNI,
    slope_se: float = SLOPE_SE,
) -> FormClassification:
    """
    Label the trend of indifference over a distance proxy and list the loss
    families predicting it.

    Lines are fitted on each side of the median distinct proxy (both sides
    include the median); a slope within `slope_se` standard errors of zero
    counts as flat. Opposite signs (-, +) make a U shape only when the
    quadratic term is positive beyond `slope_se` standard errors. Patterns the
    halves cannot settle fall back to the overall slope.
    """
    data = np.asarray(list(points), dtype=float)
    if data.size == 0:
        raise DegenerateSeriesError("no points to classify")
    if data.ndim != 2 or data.shape[1] != 2:
        raise DomainError("points must be (proxy, indifference) pairs")
    x, y = data[:, 0], data[:, 1]
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise DegenerateSeriesError("non-finite point")
    distinct = np.unique(x)
    if len(x) < 5 or len(distinct) < 3:
        raise DegenerateSeriesError(f"need 5 points over 3 distinct proxies, got {len(x)} over {len(distinct)}")

    # flat data fits to rounding noise; scale the zero band to the data
    atol = 1e-9 * max(1.0, float(np.max(np.abs(y)))) / float(np.ptp(x))
    overall = _sign(_line(x, y, "overall"), "x", slope_se, atol)

    median = float(np.median(distinct))
    low, high = x <= median, x >= median
    if low.sum() < 3 or high.sum() < 3:
        label = {-1: TrendLabel.DECREASING, 0: TrendLabel.CONSTANT, 1: TrendLabel.INCREASING}[overall]
        return FormClassification(label, consistent_families(label, dimensionality))

    signs = (
        _sign(_line(x[low], y[low], "low"), "x", slope_se, atol),
        _sign(_line(x[high], y[high], "high"), "x", slope_se, atol),
    )
    quadratic = ols(y, design_matrix({"x": x, "x_sq": x**2}), model="quadratic")
    _LOGGER.debug("half slopes %s, quadratic %.6g (se %.3g)", signs, quadratic["x_sq"], quadratic.se("x_sq"))

    if signs == (0, 0):
        label = TrendLabel.CONSTANT
    elif signs == (-1, 1) and _sign(quadratic, "x_sq", slope_se, 0.0) > 0:
        label = TrendLabel.U_SHAPED
    elif min(signs) >= 0 and max(signs) > 0 and (0 not in signs or overall > 0):
        label = TrendLabel.INCREASING
    elif max(signs) <= 0 and min(signs) < 0 and (0 not in signs or overall < 0):
        label = TrendLabel.DECREASING
    else:
        label = {-1: TrendLabel.DECREASING, 0: TrendLabel.CONSTANT, 1: TrendLabel.INCREASING}[overall]
    return FormClassification(label, consistent_families(label, dimensionality))


def classify_case1(
    stats: t.Sequence[GroupStats],
    race_ids: t.Sequence[str],
    n_measures: int,
    party: t.Union[Party, str] = Party.D,
    dimensionality: t.Union[Dimensionality, str] = Dimensionality.UNI,
) -> FormClassification:
    """
    Classify abstention across groups in same-party races.

    Distance from both candidates grows with k in Democratic races and with
    n - k in Republican races.
    """
    party = Party(party)
    included = set(race_ids)
    points = []
    for s in stats:
        if s.race_id in included:
            proxy = s.group if party is Party.D else n_measures - s.group
            points.append((proxy, abstention_rate(s)))
    return classify_form(points, dimensionality)


def classify_case2(
    panel: pd.DataFrame,
    outcome: str = "abstention_rate",
    dimensionality: t.Union[Dimensionality, str] = Dimensionality.UNI,
) -> FormClassification:
    """
    Classify a moderate-group panel (see group_measures.group_race_panel) over
    polarization. Predictability measures the opposite of indifference and is
    negated.
    """
    if outcome not in ("abstention_rate", "predictability"):
        raise DomainError(f"unknown outcome {outcome!r}")
    y = panel[outcome].to_numpy(dtype=float)
    if outcome == "predictability":
        y = -y
    return classify_form(zip(panel["pol"].to_numpy(dtype=float), y), dimensionality)
