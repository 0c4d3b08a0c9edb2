"""
Indifference measures over Voter Groups.

A voter's group is the number of ballot measures she answered on the
Republican side. For every (group, race) cell we count Democratic, Republican,
other and abstaining ballots and derive:

  abstention rate  N(A) / N
  predictability   |N(D) - N(R)| / N
  polarization     Pr_0(D) * Pr_n(R), per race

Voters with a missing measure response have no group and are left out.
"""
import enum
import logging
import typing as t
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import stats as sps

from electorate_lab import cvr
from electorate_lab.electorate_sim import complete_rows, subgroup_ids, voter_groups
from electorate_lab.exceptions import (
    DegenerateSeriesError,
    DomainError,
    EmptyAggregationError,
    EmptyCellError,
    NoPopulatedPairError,
)

_LOGGER = logging.getLogger(__name__)

MODERATE_TOLERANCE = 0.02

MEASURE_TABLE_COLUMNS = [
    "group",
    "race_id",
    "n_total",
    "n_dem",
    "n_rep",
    "n_abstain",
    "abstention_rate",
    "predictability",
    "pol",
]

# category order used to count choices
_CHOICES = ["D", "R", "O", cvr.ABSTAIN, cvr.MISSING]


class FlipOutcome(str, enum.Enum):
    DEM_SHARE = "DemShare"
    ABSTENTION_RATE = "AbstentionRate"


@dataclass(frozen=True)
class GroupStats:
    group: int
    race_id: str
    n_total: int
    n_dem: int
    n_rep: int
    n_abstain: int
    n_other: int = 0

    def __post_init__(self):
        counts = (self.n_total, self.n_dem, self.n_rep, self.n_abstain, self.n_other)
        if any(c < 0 for c in counts):
            raise DomainError(f"negative count in group {self.group}, race {self.race_id}")
        if self.n_dem + self.n_rep + self.n_abstain + self.n_other != self.n_total:
            raise DomainError(f"counts do not add up to n_total in group {self.group}, race {self.race_id}")


def _choice_codes(column: np.ndarray) -> np.ndarray:
    return pd.Categorical(column, categories=_CHOICES).codes


def tabulate(frame: pd.DataFrame, race_ids: t.Optional[t.Sequence[str]] = None) -> t.List[GroupStats]:
    """
    Count ballots per (group, race) cell.

    Ballots marked NA in a race (race not on the ballot) do not count toward
    that race. Cells without voters are omitted.
    """
    if race_ids is None:
        race_ids = cvr.race_ids(frame)
    matrix = cvr.measure_matrix(frame)
    complete = complete_rows(matrix)
    if not complete.all():
        _LOGGER.warning("%d voters with missing measure responses left out", int((~complete).sum()))
    groups = voter_groups(matrix[complete])
    n_groups = matrix.shape[1] + 1

    stats = []
    for race_id in race_ids:
        codes = _choice_codes(frame[race_id].to_numpy()[complete])
        counts = np.bincount(groups * len(_CHOICES) + codes, minlength=n_groups * len(_CHOICES))
        counts = counts.reshape(n_groups, len(_CHOICES))
        for k in range(n_groups):
            n_dem, n_rep, n_other, n_abstain, _ = (int(c) for c in counts[k])
            n_total = n_dem + n_rep + n_other + n_abstain
            if n_total == 0:
                continue
            stats.append(GroupStats(k, race_id, n_total, n_dem, n_rep, n_abstain, n_other))
    return stats


def index_stats(stats: t.Iterable[GroupStats]) -> t.Dict[t.Tuple[int, str], GroupStats]:
    return {(s.group, s.race_id): s for s in stats}


def _check_nonempty(stats: GroupStats) -> None:
    if stats.n_total == 0:
        raise EmptyCellError(f"group {stats.group} has no ballots in race {stats.race_id}")


def abstention_rate(stats: GroupStats) -> float:
    _check_nonempty(stats)
    return stats.n_abstain / stats.n_total


def predictability(stats: GroupStats) -> float:
    """
    Share margin between the two major-party candidates; other-party ballots
    count in the denominator only.
    """
    _check_nonempty(stats)
    return abs(stats.n_dem - stats.n_rep) / stats.n_total


def dem_share(stats: GroupStats) -> float:
    _check_nonempty(stats)
    return stats.n_dem / stats.n_total


def rep_share(stats: GroupStats) -> float:
    _check_nonempty(stats)
    return stats.n_rep / stats.n_total


def across_race_average(
    values: t.Mapping[str, t.Optional[float]],
    races_included: t.Optional[t.Iterable[str]] = None,
) -> float:
    """
    Unweighted mean over races; races without a defined value are skipped.
    """
    if races_included is None:
        races_included = values.keys()
    defined = []
    for race_id in races_included:
        value = values.get(race_id)
        if value is None or np.isnan(value):
            continue
        defined.append(value)
    if not defined:
        raise EmptyAggregationError("no race has a defined value to average")
    return float(np.mean(defined))


def polarization(stats_k0: GroupStats, stats_kn: GroupStats) -> float:
    """pol = Pr_0(D) * Pr_n(R) for one race."""
    return dem_share(stats_k0) * rep_share(stats_kn)


def race_polarization(
    stats: t.Sequence[GroupStats],
    n_measures: int,
    race_ids: t.Sequence[str],
) -> t.Dict[str, float]:
    """
    Polarization of each two-party race; races whose extreme groups are empty
    are left out.
    """
    cells = index_stats(stats)
    pol = {}
    for race_id in race_ids:
        k0 = cells.get((0, race_id))
        kn = cells.get((n_measures, race_id))
        if k0 is None or kn is None:
            _LOGGER.warning("race %s has an empty extreme group; excluded from polarization", race_id)
            continue
        pol[race_id] = polarization(k0, kn)
    return pol


def _group_average(
    stats: t.Sequence[GroupStats],
    race_ids: t.Sequence[str],
    measure: t.Callable[[GroupStats], float],
) -> t.Dict[int, float]:
    by_group: t.Dict[int, t.Dict[str, float]] = {}
    included = set(race_ids)
    for s in stats:
        if s.race_id in included:
            by_group.setdefault(s.group, {})[s.race_id] = measure(s)
    return {k: across_race_average(values, race_ids) for k, values in sorted(by_group.items())}


def abstention_by_group(stats: t.Sequence[GroupStats], race_ids: t.Sequence[str]) -> t.Dict[int, float]:
    return _group_average(stats, race_ids, abstention_rate)


def predictability_by_group(stats: t.Sequence[GroupStats], race_ids: t.Sequence[str]) -> t.Dict[int, float]:
    return _group_average(stats, race_ids, predictability)


def moderate_groups(
    stats: t.Sequence[GroupStats],
    race_ids: t.Sequence[str],
    tolerance: float = MODERATE_TOLERANCE,
) -> t.Tuple[int, ...]:
    """
    Group(s) closest to an even split between the parties: lowest average
    predictability over the two-party races, or the two lowest when they are
    within `tolerance` of each other.
    """
    averages = predictability_by_group(stats, race_ids)
    if not averages:
        raise EmptyAggregationError("no group has ballots in the two-party races")
    ranked = sorted(averages.items(), key=lambda item: (item[1], item[0]))
    if len(ranked) > 1 and ranked[1][1] - ranked[0][1] <= tolerance:
        moderates = tuple(sorted((ranked[0][0], ranked[1][0])))
    else:
        moderates = (ranked[0][0],)
    _LOGGER.info("moderate group(s): %s", ", ".join(str(k) for k in moderates))
    return moderates


def _subgroup_outcomes(
    frame: pd.DataFrame,
    race_ids: t.Sequence[str],
    outcome: FlipOutcome,
) -> t.Tuple[pd.Series, int]:
    matrix = cvr.measure_matrix(frame)
    complete = complete_rows(matrix)
    subgroups = subgroup_ids(matrix[complete])

    long = pd.DataFrame({"subgroup": subgroups})
    for race_id in race_ids:
        long[race_id] = frame[race_id].to_numpy()[complete]
    long = long.melt(id_vars="subgroup", var_name="race_id", value_name="choice")
    long = long[long["choice"] != cvr.MISSING]

    target = "D" if outcome is FlipOutcome.DEM_SHARE else cvr.ABSTAIN
    long["hit"] = (long["choice"] == target).astype(float)
    # share within each (subgroup, race) cell, then unweighted mean over races
    per_race = long.groupby(["subgroup", "race_id"])["hit"].mean()
    return per_race.groupby(level="subgroup").mean(), matrix.shape[1]


def flip_effect(
    frame: pd.DataFrame,
    measure_index: int,
    outcome: t.Union[FlipOutcome, str],
    race_ids: t.Optional[t.Sequence[str]] = None,
) -> t.Dict[int, float]:
    """
    Effect of switching one measure response from D to R, by group.

    Pairs subgroups that differ only in measure `measure_index` (0-based): the
    member answering 0 sits in group k, its partner in group k + 1. Returns, for
    each k, the mean over populated pairs of outcome(answer 0) - outcome(answer 1).
    """
    outcome = FlipOutcome(outcome)
    if race_ids is None:
        race_ids = cvr.race_ids(frame)
    values, n = _subgroup_outcomes(frame, race_ids, outcome)
    if not 0 <= measure_index < n:
        raise DomainError(f"measure index {measure_index} outside 0..{n - 1}")
    bit = 1 << (n - 1 - measure_index)

    differences: t.Dict[int, t.List[float]] = {}
    for subgroup, value in values.items():
        subgroup = int(subgroup)
        if subgroup & bit:
            continue
        partner = subgroup | bit
        if partner not in values.index:
            continue
        k = bin(subgroup).count("1")
        differences.setdefault(k, []).append(value - values[partner])

    if not differences:
        raise NoPopulatedPairError(f"no populated subgroup pair for measure m{measure_index + 1}")
    return {k: float(np.mean(d)) for k, d in sorted(differences.items())}


def indifference_correlation(x: t.Sequence[float], y: t.Sequence[float]) -> t.Tuple[float, float]:
    """
    Pearson correlation between group abstention and group predictability,
    with its two-sided p-value.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise DomainError(f"series lengths differ: {len(x)} vs {len(y)}")
    if len(x) < 3:
        raise DegenerateSeriesError(f"need at least 3 paired observations, got {len(x)}")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise DegenerateSeriesError("a series has zero variance")
    r, p = sps.pearsonr(x, y)
    return float(r), float(p)


def stats_frame(stats: t.Sequence[GroupStats], pol: t.Optional[t.Mapping[str, float]] = None) -> pd.DataFrame:
    """Measure table in the published CSV column order."""
    pol = pol or {}
    rows = [
        (
            s.group,
            s.race_id,
            s.n_total,
            s.n_dem,
            s.n_rep,
            s.n_abstain,
            abstention_rate(s),
            predictability(s),
            pol.get(s.race_id, np.nan),
        )
        for s in stats
    ]
    return pd.DataFrame(rows, columns=MEASURE_TABLE_COLUMNS)


def group_race_panel(
    stats: t.Sequence[GroupStats],
    groups: t.Iterable[int],
    pol: t.Mapping[str, float],
) -> pd.DataFrame:
    """
    One row per (group, race) cell of the given groups in races with a polarization value.
    """
    groups = set(groups)
    rows = [
        (s.group, s.race_id, pol[s.race_id], abstention_rate(s), predictability(s))
        for s in stats
        if s.group in groups and s.race_id in pol
    ]
    return pd.DataFrame(rows, columns=["group", "race_id", "pol", "abstention_rate", "predictability"])


def voter_race_panel(
    frame: pd.DataFrame,
    groups: t.Iterable[int],
    pol: t.Mapping[str, float],
) -> pd.DataFrame:
    """
    One row per (voter, race) for voters in the given groups: 1 if the voter
    left the race blank, 0 if she voted in it.
    """
    matrix = cvr.measure_matrix(frame)
    complete = complete_rows(matrix)
    member = np.zeros(len(frame), dtype=bool)
    member[complete] = np.isin(voter_groups(matrix[complete]), list(groups))

    races = [r for r in cvr.race_ids(frame) if r in pol]
    subset = frame.loc[member, [cvr.VOTER_ID] + races]
    long = subset.melt(id_vars=cvr.VOTER_ID, var_name="race_id", value_name="choice")
    long = long[long["choice"] != cvr.MISSING]
    long["pol"] = long["race_id"].map(pol).astype(float)
    long["abstain"] = (long["choice"] == cvr.ABSTAIN).astype(float)
    return long[[cvr.VOTER_ID, "race_id", "pol", "abstain"]].reset_index(drop=True)
