"""
Synthetic electorates and ballots.

Voters draw ideal points from a configured distribution, answer every ballot
measure as a forced choice between its Democratic and Republican positions,
and then vote or abstain in each race under a loss function and choice model.
None of these distributions describe real voters; they exist to exercise the
measurement pipeline on data whose generating process is known.

All randomness comes from named substreams of one seed:
  electorate  ideal points
  measures    measure offsets, probabilistic responses, missingness
  votes       probabilistic race choices, one stream per (race, voter block)
"""
import enum
import logging
import typing as t
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
import pandas as pd
from tqdm import tqdm

from electorate_lab import cvr
from electorate_lab.choice_model import (
    ABSTAIN,
    VOTE_C1,
    VOTE_C2,
    ChoiceModel,
    choice_codes,
    choice_probabilities,
)
from electorate_lab.exceptions import ConfigError, DimensionMismatchError, MissingResponseError
from electorate_lab.policy_space import PolicySpace, Position, as_position, distance, pairwise_distances
from electorate_lab.utility_forms import LossSpec, utility

_LOGGER = logging.getLogger(__name__)

_STREAMS = {
    "electorate": 0,
    "measures": 1,
    "votes": 2,
}
# voters per random stream in a race; fixed so output does not depend on threads
VOTE_BLOCK = 1 << 16
# subgroup ids are packed into int64
MAX_MEASURES = 62
MAX_SEED = 1 << 64


def check_seed(seed: t.Any) -> int:
    if seed is None:
        raise ConfigError("a seed is required; set it in the config or with --seed", key="seed")
    try:
        value = int(seed)
    except (TypeError, ValueError):
        raise ConfigError(f"not an integer: {seed!r}", key="seed")
    if not 0 <= value < MAX_SEED:
        raise ConfigError(f"must lie in [0, 2**64), got {value}", key="seed")
    return value


def substream(seed: int, name: str, *keys: int) -> np.random.Generator:
    """
    Independent generator for a named purpose, keyed by integer counters.
    """
    sequence = np.random.SeedSequence(check_seed(seed), spawn_key=(_STREAMS[name],) + tuple(int(k) for k in keys))
    return np.random.default_rng(sequence)


def race_key(race_id: str) -> int:
    """Stable integer key of a race, so adding races never shifts another race's draws."""
    return zlib.crc32(race_id.encode("utf-8"))


@dataclass(frozen=True)
class UniformIdeal:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ConfigError(f"empty interval [{self.lo}, {self.hi}]", key="hi")

    def sample(self, rng: np.random.Generator, shape: t.Tuple[int, ...]) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=shape)


@dataclass(frozen=True)
class NormalIdeal:
    mu: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}", key="sigma")

    def sample(self, rng: np.random.Generator, shape: t.Tuple[int, ...]) -> np.ndarray:
        return rng.normal(self.mu, self.sigma, size=shape)


@dataclass(frozen=True)
class BimodalIdeal:
    mu1: float
    sigma1: float
    mu2: float
    sigma2: float
    weight: float

    def __post_init__(self):
        for key in ("sigma1", "sigma2"):
            if not getattr(self, key) > 0:
                raise ConfigError(f"must be positive, got {getattr(self, key)}", key=key)
        if not 0 < self.weight < 1:
            raise ConfigError(f"mixture weight must lie in (0, 1), got {self.weight}", key="weight")

    def sample(self, rng: np.random.Generator, shape: t.Tuple[int, ...]) -> np.ndarray:
        first = rng.random(size=shape) < self.weight
        a = rng.normal(self.mu1, self.sigma1, size=shape)
        b = rng.normal(self.mu2, self.sigma2, size=shape)
        return np.where(first, a, b)


@dataclass(frozen=True)
class HistogramIdeal:
    bins: t.Tuple[float, ...]
    weights: t.Tuple[float, ...]

    def __post_init__(self):
        bins = tuple(float(b) for b in self.bins)
        weights = tuple(float(w) for w in self.weights)
        if len(bins) != len(weights) + 1:
            raise ConfigError(f"{len(bins)} bin edges for {len(weights)} weights", key="bins")
        if any(hi <= lo for lo, hi in zip(bins, bins[1:])):
            raise ConfigError("bin edges must be strictly increasing", key="bins")
        if any(w < 0 for w in weights) or not sum(weights) > 0:
            raise ConfigError("weights must be nonnegative with a positive sum", key="weights")
        object.__setattr__(self, "bins", bins)
        object.__setattr__(self, "weights", weights)

    def sample(self, rng: np.random.Generator, shape: t.Tuple[int, ...]) -> np.ndarray:
        edges = np.asarray(self.bins)
        p = np.asarray(self.weights) / np.sum(self.weights)
        idx = rng.choice(len(p), size=shape, p=p)
        return rng.uniform(edges[idx], edges[idx + 1])


IdealDistribution = t.Union[UniformIdeal, NormalIdeal, BimodalIdeal, HistogramIdeal]

_DISTRIBUTIONS = {
    "Uniform": UniformIdeal,
    "Normal": NormalIdeal,
    "BimodalMixture": BimodalIdeal,
    "Histogram": HistogramIdeal,
}


def ideal_distribution_from_dict(raw: t.Mapping[str, t.Any]) -> IdealDistribution:
    raw = dict(raw)
    kind = raw.pop("kind", None)
    if kind not in _DISTRIBUTIONS:
        raise ConfigError(f"unknown distribution {kind!r}; expected one of {sorted(_DISTRIBUTIONS)}", key="kind")
    try:
        return _DISTRIBUTIONS[kind](**raw)
    except TypeError as e:
        raise ConfigError(str(e), key=kind)


class Party(str, enum.Enum):
    D = "D"
    R = "R"


class RaceType(str, enum.Enum):
    PRESIDENTIAL = "Presidential"
    US_HOUSE = "USHouse"
    STATE_SENATE = "StateSenate"
    STATE_HOUSE = "StateHouse"


@dataclass(frozen=True)
class ElectorateSpec:
    # only needed to draw voters; analysis of an existing CVR runs without one
    seed: t.Optional[int]
    n_voters: int
    ideal_distribution: IdealDistribution
    n_measures: int
    dem_position: Position
    rep_position: Position
    dimension: int = 1
    # half-width of the per-measure offsets along the D-R axis; default 0.4 * |rep - dem|
    measure_spread: t.Optional[float] = None
    missing_rate: float = 0.0

    def __post_init__(self):
        if self.seed is not None:
            object.__setattr__(self, "seed", check_seed(self.seed))
        if int(self.n_voters) < 1:
            raise ConfigError(f"an electorate needs at least one voter, got {self.n_voters}", key="n_voters")
        if not 1 <= int(self.n_measures) <= MAX_MEASURES:
            raise ConfigError(f"must lie in [1, {MAX_MEASURES}], got {self.n_measures}", key="n_measures")
        for key in ("dem_position", "rep_position"):
            position = as_position(getattr(self, key))
            if position.dimension != self.dimension:
                raise ConfigError(f"dimension {position.dimension}, expected {self.dimension}", key=key)
            object.__setattr__(self, key, position)
        if self.dem_position == self.rep_position:
            raise ConfigError("party positions coincide", key="rep_position")
        if self.measure_spread is not None and self.measure_spread < 0:
            raise ConfigError(f"must be nonnegative, got {self.measure_spread}", key="measure_spread")
        if not 0 <= self.missing_rate < 1:
            raise ConfigError(f"must lie in [0, 1), got {self.missing_rate}", key="missing_rate")

    @classmethod
    def from_dict(cls, raw: t.Mapping[str, t.Any], seed: t.Optional[int] = None) -> "ElectorateSpec":
        raw = dict(raw)
        if seed is not None:
            raw["seed"] = seed
        raw.setdefault("seed", None)
        if "ideal_distribution" not in raw:
            raise ConfigError("missing section", key="ideal_distribution")
        try:
            distribution = ideal_distribution_from_dict(raw.pop("ideal_distribution"))
        except ConfigError as e:
            raise e.under("ideal_distribution") from e
        try:
            return cls(ideal_distribution=distribution, **raw)
        except TypeError as e:
            raise ConfigError(str(e))

    @property
    def spread(self) -> float:
        if self.measure_spread is not None:
            return float(self.measure_spread)
        return 0.4 * distance(self.dem_position, self.rep_position)


@dataclass(frozen=True)
class RaceSpec:
    race_id: str
    cand1_pos: Position
    cand2_pos: Position
    cand1_party: Party = Party.D
    cand2_party: Party = Party.R
    race_type: RaceType = RaceType.STATE_HOUSE

    def __post_init__(self):
        if not self.race_id or self.race_id == cvr.VOTER_ID or cvr.is_measure_column(self.race_id):
            raise ConfigError(f"invalid race id {self.race_id!r}", key="race_id")
        for key in ("cand1_pos", "cand2_pos"):
            if getattr(self, key) is None:
                raise ConfigError("candidate position not declared", key=key)
            object.__setattr__(self, key, as_position(getattr(self, key)))
        object.__setattr__(self, "cand1_party", Party(self.cand1_party))
        object.__setattr__(self, "cand2_party", Party(self.cand2_party))
        object.__setattr__(self, "race_type", RaceType(self.race_type))

    @classmethod
    def from_dict(cls, raw: t.Mapping[str, t.Any]) -> "RaceSpec":
        try:
            return cls(**raw)
        except TypeError as e:
            raise ConfigError(str(e))
        except ValueError as e:
            raise ConfigError(str(e), key=raw.get("race_id"))

    @property
    def same_party(self) -> bool:
        return self.cand1_party is self.cand2_party

    @property
    def parties(self) -> t.Tuple[str, str]:
        return self.cand1_party.value, self.cand2_party.value


@dataclass(frozen=True, eq=False)
class Electorate:
    voter_ids: np.ndarray
    ideals: np.ndarray
    # (n_voters, n_measures) int8; 0/1 responses and -1 for missing
    measures: t.Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.voter_ids)

    def __iter__(self) -> t.Iterator[t.Tuple[int, Position]]:
        for voter_id, ideal in zip(self.voter_ids, self.ideals):
            yield int(voter_id), Position(tuple(ideal))

    @property
    def dimension(self) -> int:
        return self.ideals.shape[1]

    def space(self) -> PolicySpace:
        """The policy space spanned by the ideal points, bounded where voters vary."""
        lo, hi = self.ideals.min(axis=0), self.ideals.max(axis=0)
        if len(self) < 2 or np.any(lo >= hi):
            return PolicySpace(self.dimension)
        return PolicySpace(self.dimension, bounds=tuple(zip(lo, hi)))


def generate_electorate(spec: ElectorateSpec) -> Electorate:
    """
    Draw `n_voters` ideal points; identical specs give bit-identical electorates.
    """
    rng = substream(spec.seed, "electorate")
    ideals = spec.ideal_distribution.sample(rng, (int(spec.n_voters), int(spec.dimension)))
    voter_ids = np.arange(int(spec.n_voters), dtype=np.int64)
    _LOGGER.info("generated %d voters in %d dimension(s)", len(voter_ids), spec.dimension)
    return Electorate(voter_ids=voter_ids, ideals=np.asarray(ideals, dtype=float))


def measure_positions(spec: ElectorateSpec) -> t.Tuple[np.ndarray, np.ndarray]:
    """
    Democratic and Republican positions of every measure, as (n_measures, d) arrays.

    Each measure shifts both party positions by one seeded offset along the
    D-R axis, so measures split the electorate at different cut points.
    """
    dem = spec.dem_position.as_array()
    rep = spec.rep_position.as_array()
    axis = (rep - dem) / np.linalg.norm(rep - dem)
    spread = spec.spread
    offsets = substream(spec.seed, "measures", 0).uniform(-spread, spread, size=int(spec.n_measures))
    shift = offsets[:, np.newaxis] * axis[np.newaxis, :]
    return dem + shift, rep + shift


def _measure_utilities(
    ideals: np.ndarray,
    spec: ElectorateSpec,
    loss: LossSpec,
) -> t.Tuple[np.ndarray, np.ndarray]:
    dem, rep = measure_positions(spec)
    u_dem = np.column_stack([utility(loss, pairwise_distances(ideals, Position(tuple(p)))) for p in dem])
    u_rep = np.column_stack([utility(loss, pairwise_distances(ideals, Position(tuple(p)))) for p in rep])
    return u_dem, u_rep


def _responses(
    u_dem: np.ndarray,
    u_rep: np.ndarray,
    model: ChoiceModel,
    rng: t.Optional[np.random.Generator],
) -> np.ndarray:
    # d_n = 1 when the Republican position wins the forced choice; ties stay with D
    if not model.probabilistic:
        return (u_rep > u_dem).astype(np.int8)
    _, p_rep, _ = choice_probabilities(model.without_abstention(), u_dem, u_rep)
    return (rng.random(size=p_rep.shape) < p_rep).astype(np.int8)


def measure_responses(
    ideal: Position,
    spec: ElectorateSpec,
    loss: LossSpec,
    model: ChoiceModel,
    rng: t.Optional[np.random.Generator] = None,
) -> t.Tuple[int, ...]:
    """
    One voter's 0/1 responses to every measure (1 = aligned with the Republican position).
    """
    if rng is None and model.probabilistic:
        rng = substream(spec.seed, "measures", 1)
    u_dem, u_rep = _measure_utilities(ideal.as_array()[np.newaxis, :], spec, loss)
    return tuple(int(d) for d in _responses(u_dem, u_rep, model, rng)[0])


def simulate_measures(
    electorate: Electorate,
    spec: ElectorateSpec,
    loss: LossSpec,
    model: ChoiceModel,
) -> Electorate:
    """
    Fill in every voter's measure responses, with optional missingness.
    """
    u_dem, u_rep = _measure_utilities(electorate.ideals, spec, loss)
    rng = substream(spec.seed, "measures", 1) if model.probabilistic else None
    measures = _responses(u_dem, u_rep, model, rng)
    if spec.missing_rate > 0:
        missing = substream(spec.seed, "measures", 2).random(size=measures.shape) < spec.missing_rate
        measures[missing] = -1
        _LOGGER.info("%d measure responses left missing", int(missing.sum()))
    return replace(electorate, measures=measures)


def _as_response_array(measures: t.Sequence[t.Optional[int]]) -> np.ndarray:
    values = []
    for d in measures:
        if d is None or (isinstance(d, float) and np.isnan(d)) or d == -1 or d == cvr.MISSING:
            raise MissingResponseError("voter has a missing measure response")
        if int(d) not in (0, 1):
            raise MissingResponseError(f"measure response must be 0 or 1, got {d!r}")
        values.append(int(d))
    return np.asarray(values, dtype=np.int64)


def voter_group(measures: t.Sequence[t.Optional[int]]) -> int:
    """Group rank k: the number of responses aligned with the Republican position."""
    return int(_as_response_array(measures).sum())


def subgroup_id(measures: t.Sequence[t.Optional[int]]) -> int:
    """Binary encoding of the response vector with the first measure as the most significant bit."""
    subgroup = 0
    for d in _as_response_array(measures):
        subgroup = (subgroup << 1) | int(d)
    return subgroup


def complete_rows(matrix: np.ndarray) -> np.ndarray:
    return np.all(matrix >= 0, axis=1)


def voter_groups(matrix: np.ndarray) -> np.ndarray:
    if np.any(matrix < 0):
        raise MissingResponseError("measure matrix has missing responses")
    return matrix.sum(axis=1).astype(np.int64)


def subgroup_ids(matrix: np.ndarray) -> np.ndarray:
    if np.any(matrix < 0):
        raise MissingResponseError("measure matrix has missing responses")
    n = matrix.shape[1]
    weights = np.left_shift(np.int64(1), np.arange(n - 1, -1, -1, dtype=np.int64))
    return matrix.astype(np.int64) @ weights


def _race_choices(
    race: RaceSpec,
    ideals: np.ndarray,
    loss: LossSpec,
    model: ChoiceModel,
    seed: int,
) -> np.ndarray:
    u1 = utility(loss, pairwise_distances(ideals, race.cand1_pos))
    u2 = utility(loss, pairwise_distances(ideals, race.cand2_pos))
    if model.probabilistic:
        p1, p2, _ = choice_probabilities(model, u1, u2)
        draws = np.empty(len(ideals))
        key = race_key(race.race_id)
        for block, start in enumerate(range(0, len(ideals), VOTE_BLOCK)):
            stop = min(start + VOTE_BLOCK, len(ideals))
            draws[start:stop] = substream(seed, "votes", key, block).random(stop - start)
        codes = np.where(draws < p1, VOTE_C1, np.where(draws < p1 + p2, VOTE_C2, ABSTAIN))
    else:
        codes = choice_codes(model, u1, u2)
    labels = np.array([race.cand1_party.value, race.cand2_party.value, cvr.ABSTAIN])
    return labels[codes]


def simulate_election(
    electorate: Electorate,
    races: t.Sequence[RaceSpec],
    loss: LossSpec,
    model: ChoiceModel,
    seed: int,
    threads: int = 1,
    progress: bool = False,
) -> pd.DataFrame:
    """
    Vote every voter in every race and return the ballots as a CVR table.

    Races run on a thread pool; the result is identical for any thread count.
    """
    if electorate.measures is None:
        raise ConfigError("electorate has no measure responses; run simulate_measures first")
    space = electorate.space()
    seen = set()
    for race in races:
        if race.race_id in seen:
            raise ConfigError(f"duplicate race id {race.race_id!r}", key="races")
        seen.add(race.race_id)
        for position in (race.cand1_pos, race.cand2_pos):
            try:
                inside = space.contains(position)
            except DimensionMismatchError as e:
                raise ConfigError(str(e), key=race.race_id) from e
            if not inside:
                _LOGGER.warning("race %s: candidate at %s lies outside the voters' range", race.race_id, position.coords)

    def run(race: RaceSpec) -> np.ndarray:
        return _race_choices(race, electorate.ideals, loss, model, seed)

    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
        columns = list(tqdm(pool.map(run, races), total=len(races), desc="races", disable=not progress))

    _LOGGER.info("simulated %d voters in %d races", len(electorate), len(races))
    return cvr.build_frame(
        electorate.voter_ids,
        electorate.measures,
        {race.race_id: column for race, column in zip(races, columns)},
    )
