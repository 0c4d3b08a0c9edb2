"""
Experiment configuration: one JSON document plus command line overrides.

Top-level sections: seed, output_dir, threads, electorate, races, race_sweeps,
loss, choice, analysis, competition. Every section is optional until a
subcommand needs it.
"""
import contextlib
import json
import logging
import os
import typing as t
from dataclasses import dataclass, field, fields
from pathlib import Path

from electorate_lab.choice_model import ChoiceModel
from electorate_lab.competition import MAX_ITERS, DEFAULT_PLATFORMS, VoterDensity
from electorate_lab.electorate_sim import ElectorateSpec, Party, RaceSpec, check_seed
from electorate_lab.exceptions import ConfigError
from electorate_lab.group_measures import MODERATE_TOLERANCE
from electorate_lab.policy_space import as_position, polarize
from electorate_lab.regression_fit import Dimensionality
from electorate_lab.utility_forms import LossSpec

_LOGGER = logging.getLogger(__name__)

THREADS_ENV = "ELECTORATE_LAB_THREADS"
DEFAULT_OUTPUT_DIR = "out"
SECTIONS = frozenset(
    ["seed", "output_dir", "threads", "electorate", "races", "race_sweeps", "loss", "choice", "analysis", "competition"]
)


@contextlib.contextmanager
def section(name: str) -> t.Iterator[None]:
    """Report errors raised while building a section under its dotted key."""
    try:
        yield
    except ConfigError as e:
        raise e.under(name) from e
    except KeyError as e:
        raise ConfigError("missing field", key=f"{name}.{e.args[0]}") from e
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e), key=name) from e


def _from_fields(cls, raw: t.Mapping[str, t.Any]):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError("unknown option", key=unknown[0])
    return cls(**raw)


@dataclass(frozen=True)
class AnalysisOptions:
    case1: bool = True
    case2: bool = True
    equilibrium: bool = False
    classify: bool = True
    moderate_tolerance: float = MODERATE_TOLERANCE
    piecewise_threshold: t.Optional[float] = None
    # 1-based measure numbers for flip effects; None means every measure
    flip_measures: t.Optional[t.Tuple[int, ...]] = None
    dimensionality: Dimensionality = Dimensionality.UNI

    def __post_init__(self):
        if self.moderate_tolerance < 0:
            raise ConfigError(f"must be nonnegative, got {self.moderate_tolerance}", key="moderate_tolerance")
        if self.flip_measures is not None:
            measures = tuple(int(m) for m in self.flip_measures)
            if any(m < 1 for m in measures):
                raise ConfigError("measure numbers start at 1", key="flip_measures")
            object.__setattr__(self, "flip_measures", measures)
        object.__setattr__(self, "dimensionality", Dimensionality(self.dimensionality))

    @classmethod
    def from_dict(cls, raw: t.Mapping[str, t.Any]) -> "AnalysisOptions":
        return _from_fields(cls, raw)


@dataclass(frozen=True)
class CompetitionOptions:
    density: t.Optional[VoterDensity] = None
    platforms: int = DEFAULT_PLATFORMS
    start: t.Optional[t.Tuple[float, float]] = None
    max_iters: int = MAX_ITERS

    def __post_init__(self):
        if int(self.platforms) < 1:
            raise ConfigError(f"must be positive, got {self.platforms}", key="platforms")
        if int(self.max_iters) < 1:
            raise ConfigError(f"must be positive, got {self.max_iters}", key="max_iters")
        if self.start is not None:
            if len(self.start) != 2:
                raise ConfigError("start needs two platforms", key="start")
            object.__setattr__(self, "start", (float(self.start[0]), float(self.start[1])))

    @classmethod
    def from_dict(cls, raw: t.Mapping[str, t.Any]) -> "CompetitionOptions":
        raw = dict(raw)
        if raw.get("density") is not None:
            with section("density"):
                raw["density"] = VoterDensity.from_dict(raw["density"])
        return _from_fields(cls, raw)

    def start_platforms(self) -> t.Tuple[float, float]:
        if self.start is not None:
            return self.start
        return self.density.span


@dataclass(frozen=True)
class ExperimentConfig:
    seed: t.Optional[int]
    output_dir: Path
    threads: int = 1
    electorate: t.Optional[ElectorateSpec] = None
    races: t.Tuple[RaceSpec, ...] = ()
    loss: t.Optional[LossSpec] = None
    choice: ChoiceModel = field(default_factory=ChoiceModel)
    analysis: AnalysisOptions = field(default_factory=AnalysisOptions)
    competition: CompetitionOptions = field(default_factory=CompetitionOptions)

    def require(self, *names: str) -> None:
        """Fail with the missing section's key when a subcommand needs it."""
        for name in names:
            value = getattr(self, name)
            if value is None or value == ():
                raise ConfigError("section required by this command", key=name)


def parse_override(text: str) -> t.Tuple[t.List[str], t.Any]:
    """
    Split `key.path=value`; the value is JSON when it parses, a bare string otherwise.
    """
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise ConfigError(f"override {text!r} is not of the form key=value", key="--set")
    try:
        parsed = json.loads(value)
    except json.JSONDecodeError:
        parsed = value
    return key.split("."), parsed


def apply_override(raw: t.Dict[str, t.Any], path: t.Sequence[str], value: t.Any) -> None:
    node = raw
    for i, name in enumerate(path[:-1]):
        child = node.setdefault(name, {})
        if not isinstance(child, dict):
            raise ConfigError("cannot set a field inside a non-section value", key=".".join(path[: i + 1]))
        node = child
    node[path[-1]] = value


def _sweep_races(sweep: t.Mapping[str, t.Any]) -> t.List[RaceSpec]:
    """
    Expand a race sweep.

    Polarized: one D-R race per half gap, candidates placed symmetrically around
    `center` along `axis`. SameParty: one race per candidate pair, both from `party`.
    """
    sweep = dict(sweep)
    kind = sweep.pop("kind", None)
    prefix = sweep.pop("prefix", None)
    race_type = sweep.pop("race_type", "StateHouse")
    if kind == "Polarized":
        center = as_position(sweep["center"])
        axis = as_position(sweep.get("axis", [1.0] + [0.0] * (center.dimension - 1)))
        prefix = prefix or "pol"
        races = []
        for i, half_gap in enumerate(sweep["half_gaps"]):
            dem, rep = polarize(center, float(half_gap), axis)
            races.append(RaceSpec(f"{prefix}{i + 1}", dem, rep, Party.D, Party.R, race_type))
        return races
    if kind == "SameParty":
        party = Party(sweep.get("party", "D"))
        prefix = prefix or f"{party.value}{party.value}"
        return [
            RaceSpec(f"{prefix}{i + 1}", as_position(p1), as_position(p2), party, party, race_type)
            for i, (p1, p2) in enumerate(sweep["pairs"])
        ]
    raise ConfigError(f"unknown sweep kind {kind!r}", key="kind")


def _resolve_threads(threads: t.Optional[int], raw: t.Mapping[str, t.Any]) -> int:
    if threads is None and os.environ.get(THREADS_ENV):
        try:
            threads = int(os.environ[THREADS_ENV])
        except ValueError:
            raise ConfigError(f"not an integer: {os.environ[THREADS_ENV]!r}", key=THREADS_ENV)
    if threads is None:
        threads = raw.get("threads", 1)
    threads = int(threads)
    if threads < 1:
        raise ConfigError(f"must be at least 1, got {threads}", key="threads")
    return threads


def load_config(
    path: t.Optional[t.Union[str, os.PathLike]] = None,
    overrides: t.Sequence[str] = (),
    seed: t.Optional[int] = None,
    out: t.Optional[t.Union[str, os.PathLike]] = None,
    threads: t.Optional[int] = None,
    require_seed: bool = True,
) -> ExperimentConfig:
    raw: t.Dict[str, t.Any] = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fp:
                raw = json.load(fp)
        except FileNotFoundError:
            raise ConfigError(f"no such file {str(path)!r}", key="--config")
        except json.JSONDecodeError as e:
            raise ConfigError(f"invalid JSON at line {e.lineno}: {e.msg}", key="--config")
        if not isinstance(raw, dict):
            raise ConfigError("top level must be a JSON object", key="--config")
    for text in overrides:
        apply_override(raw, *parse_override(text))

    if seed is not None:
        raw["seed"] = seed
    if raw.get("seed") is None:
        if require_seed:
            raise ConfigError("a seed is required; set it in the config or with --seed", key="seed")
    else:
        raw["seed"] = check_seed(raw["seed"])

    config = {
        "seed": raw.get("seed"),
        "output_dir": Path(out if out is not None else raw.get("output_dir", DEFAULT_OUTPUT_DIR)),
        "threads": _resolve_threads(threads, raw),
    }
    if raw.get("electorate") is not None:
        with section("electorate"):
            config["electorate"] = ElectorateSpec.from_dict(raw["electorate"], seed=raw.get("seed"))

    races = []
    for i, race in enumerate(raw.get("races", [])):
        with section(f"races.{i}"):
            races.append(RaceSpec.from_dict(race))
    for i, sweep in enumerate(raw.get("race_sweeps", [])):
        with section(f"race_sweeps.{i}"):
            races.extend(_sweep_races(sweep))
    config["races"] = tuple(races)

    if raw.get("loss") is not None:
        with section("loss"):
            config["loss"] = LossSpec.from_dict(raw["loss"])
    with section("choice"):
        config["choice"] = ChoiceModel.from_dict(raw.get("choice", {}))
    with section("analysis"):
        config["analysis"] = AnalysisOptions.from_dict(raw.get("analysis", {}))
    with section("competition"):
        config["competition"] = CompetitionOptions.from_dict(raw.get("competition", {}))

    unknown = sorted(set(raw) - SECTIONS)
    if unknown:
        raise ConfigError("unknown section", key=unknown[0])

    _LOGGER.debug("loaded config with %d races", len(races))
    return ExperimentConfig(**config)
