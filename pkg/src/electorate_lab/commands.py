"""
Subcommands of the electorate_lab command line tool.

Each command loads the experiment configuration, runs one pipeline and writes
its CSV outputs under the output directory while holding the directory lock.
"""
import contextlib
import functools
import logging
import os
import typing as t
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import pandas as pd

from electorate_lab import competition, cvr, group_measures, regression_fit
from electorate_lab.config import ExperimentConfig, load_config
from electorate_lab.electorate_sim import Party, generate_electorate, simulate_election, simulate_measures
from electorate_lab.exceptions import (
    AnalysisError,
    ConfigError,
    DegenerateSeriesError,
    EmptyCellError,
    NoPopulatedPairError,
    OutputLockedError,
)

_LOGGER = logging.getLogger(__name__)

LOCK_FILE = ".electorate_lab.lock"
CVR_FILE = "cvr.csv"


@contextlib.contextmanager
def output_lock(directory: Path) -> t.Iterator[Path]:
    """Hold `<directory>/.electorate_lab.lock` for the duration of a run."""
    directory.mkdir(parents=True, exist_ok=True)
    lock = directory / LOCK_FILE
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise OutputLockedError(f"{directory} is in use by another run (remove {lock} if stale)")
    try:
        os.write(fd, str(os.getpid()).encode("ascii"))
        os.close(fd)
        yield directory
    finally:
        lock.unlink(missing_ok=True)


def write_csv(frame: pd.DataFrame, path: Path) -> None:
    frame.to_csv(path, index=False, lineterminator="\n", encoding="utf-8")
    _LOGGER.info("wrote %s (%d rows)", path, len(frame))


def _load(
    config: t.Optional[str],
    overrides: t.Optional[t.Sequence[str]],
    seed: t.Optional[int],
    out: t.Optional[str],
    threads: t.Optional[int],
    require_seed: bool,
) -> ExperimentConfig:
    return load_config(config, overrides or (), seed=seed, out=out, threads=threads, require_seed=require_seed)


def simulate(config=None, overrides=None, seed=None, out=None, threads=None, quiet=False):
    """Simulate an electorate and its ballots; writes cvr.csv and ideal_points.csv."""
    cfg = _load(config, overrides, seed, out, threads, require_seed=True)
    cfg.require("electorate", "races", "loss")

    electorate = generate_electorate(cfg.electorate)
    electorate = simulate_measures(electorate, cfg.electorate, cfg.loss, cfg.choice)
    frame = simulate_election(
        electorate,
        cfg.races,
        cfg.loss,
        cfg.choice,
        seed=cfg.seed,
        threads=cfg.threads,
        progress=not quiet,
    )

    ideals = pd.DataFrame(
        electorate.ideals,
        columns=[f"x{i}" for i in range(1, electorate.dimension + 1)],
    )
    ideals.insert(0, cvr.VOTER_ID, electorate.voter_ids)

    with output_lock(cfg.output_dir) as directory:
        cvr.write_cvr(frame, directory / CVR_FILE)
        _LOGGER.info("wrote %s (%d voters, %d races)", directory / CVR_FILE, len(frame), len(cfg.races))
        write_csv(ideals, directory / "ideal_points.csv")


@dataclass(frozen=True)
class Measurements:
    frame: pd.DataFrame
    stats: t.List[group_measures.GroupStats]
    n_measures: int
    # race id -> (cand1 party, cand2 party)
    parties: t.Dict[str, t.Tuple[str, str]]
    pol: t.Dict[str, float]

    @property
    def two_party(self) -> t.List[str]:
        return [r for r, p in self.parties.items() if set(p) == {"D", "R"}]

    def same_party(self, party: Party) -> t.List[str]:
        return [r for r, p in self.parties.items() if p == (party.value, party.value)]


def _race_parties(frame: pd.DataFrame, cfg: ExperimentConfig) -> t.Dict[str, t.Tuple[str, str]]:
    """
    Parties of every race: from the configured races, or inferred from the
    ballots (a race whose votes are all for one party is a same-party race).
    """
    declared = {race.race_id: race.parties for race in cfg.races}
    parties = {}
    for race_id in cvr.race_ids(frame):
        if race_id in declared:
            parties[race_id] = declared[race_id]
            continue
        seen = set(frame[race_id].unique()) & {"D", "R"}
        if seen == {"D"}:
            parties[race_id] = ("D", "D")
        elif seen == {"R"}:
            parties[race_id] = ("R", "R")
        else:
            parties[race_id] = ("D", "R")
        _LOGGER.debug("race %s inferred as %s-%s", race_id, *parties[race_id])
    return parties


def _measure(cfg: ExperimentConfig, cvr_path: t.Optional[str]) -> Measurements:
    path = Path(cvr_path) if cvr_path is not None else cfg.output_dir / CVR_FILE
    expected = cfg.electorate.n_measures if cfg.electorate is not None else None
    frame = cvr.read_cvr(path, expected_measures=expected)
    _LOGGER.info("read %d ballots from %s", len(frame), path)

    parties = _race_parties(frame, cfg)
    n = cvr.n_measures(frame)
    stats = group_measures.tabulate(frame, list(parties))
    two_party = [r for r, p in parties.items() if set(p) == {"D", "R"}]
    pol = group_measures.race_polarization(stats, n, two_party) if two_party else {}
    return Measurements(frame, stats, n, parties, pol)


def _require_polarization(measured: Measurements) -> None:
    if not measured.pol:
        raise EmptyCellError("polarization is undefined in every race: no two-party race has both extreme groups")


def _moderates(measured: Measurements, cfg: ExperimentConfig) -> t.Tuple[int, ...]:
    return group_measures.moderate_groups(
        measured.stats,
        measured.two_party,
        tolerance=cfg.analysis.moderate_tolerance,
    )


def _case1_table(measured: Measurements) -> pd.DataFrame:
    rows = []
    for party in Party:
        races = measured.same_party(party)
        if not races:
            continue
        for k, rate in group_measures.abstention_by_group(measured.stats, races).items():
            rows.append((party.value, k, rate))
    if not rows:
        _LOGGER.warning("no same-party races; Case 1 table is empty")
    return pd.DataFrame(rows, columns=["party", "group", "abstention_rate"])


def _correlation_table(measured: Measurements) -> pd.DataFrame:
    races = measured.two_party
    abstention = group_measures.abstention_by_group(measured.stats, races)
    predictability = group_measures.predictability_by_group(measured.stats, races)
    groups = sorted(set(abstention) & set(predictability))
    try:
        r, p = group_measures.indifference_correlation(
            [abstention[k] for k in groups],
            [predictability[k] for k in groups],
        )
    except DegenerateSeriesError as e:
        _LOGGER.warning("indifference correlation not computed: %s", e)
        return pd.DataFrame([], columns=["r", "p_value", "n"])
    return pd.DataFrame([(r, p, len(groups))], columns=["r", "p_value", "n"])


def _flip_table(measured: Measurements, cfg: ExperimentConfig) -> pd.DataFrame:
    measures = cfg.analysis.flip_measures or tuple(range(1, measured.n_measures + 1))
    outcomes = [
        (group_measures.FlipOutcome.DEM_SHARE, measured.two_party),
        (group_measures.FlipOutcome.ABSTENTION_RATE, list(measured.parties)),
    ]
    rows = []
    for measure in measures:
        for outcome, races in outcomes:
            if not races:
                continue
            try:
                effects = group_measures.flip_effect(measured.frame, measure - 1, outcome, races)
            except NoPopulatedPairError as e:
                _LOGGER.debug("skipped flip effect: %s", e)
                continue
            rows.extend((f"m{measure}", outcome.value, k, effect) for k, effect in effects.items())
    return pd.DataFrame(rows, columns=["measure", "outcome", "group", "effect"])


def analyze(config=None, overrides=None, seed=None, out=None, threads=None, cvr_path=None):
    """Group measures for a CVR file."""
    cfg = _load(config, overrides, seed, out, threads, require_seed=False)
    measured = _measure(cfg, cvr_path)
    options = cfg.analysis

    outputs = {"measures.csv": group_measures.stats_frame(measured.stats, measured.pol)}
    if options.case1:
        outputs["case1_abstention.csv"] = _case1_table(measured)
    if options.case2:
        _require_polarization(measured)
        outputs["case2_polarization.csv"] = pd.DataFrame(list(measured.pol.items()), columns=["race_id", "pol"])
        outputs["moderates.csv"] = pd.DataFrame({"group": list(_moderates(measured, cfg))})
        outputs["correlation.csv"] = _correlation_table(measured)
    outputs["flip_effects.csv"] = _flip_table(measured, cfg)

    with output_lock(cfg.output_dir) as directory:
        for name, frame in outputs.items():
            write_csv(frame, directory / name)


def _named(result: regression_fit.RegressionResult, outcome: str) -> regression_fit.RegressionResult:
    return replace(result, model=f"{outcome}_{result.model}")


def fit(config=None, overrides=None, seed=None, out=None, threads=None, cvr_path=None):
    """
    Polarization regressions for the moderate groups: piecewise and quadratic
    fits of group predictability, and of voter roll-off with voter fixed effects.
    """
    cfg = _load(config, overrides, seed, out, threads, require_seed=False)
    measured = _measure(cfg, cvr_path)
    _require_polarization(measured)
    moderates = _moderates(measured, cfg)
    panel = group_measures.group_race_panel(measured.stats, moderates, measured.pol)
    voters = group_measures.voter_race_panel(measured.frame, moderates, measured.pol)
    threshold = cfg.analysis.piecewise_threshold
    if threshold is None:
        threshold = float(np.mean(list(measured.pol.values())))

    models = []
    for outcome in ("abstention_rate", "predictability"):
        for side in regression_fit.PIECEWISE_SIDES:
            models.append(
                (f"{outcome}_piecewise_{side}", outcome,
                 functools.partial(regression_fit.piecewise_side, panel[outcome], panel["pol"], threshold, side))
            )
    models.append(
        ("predictability_quadratic", "predictability",
         functools.partial(regression_fit.quadratic_polarization, panel["predictability"], panel["pol"]))
    )
    models.append(
        ("abstain_quadratic_fe", "abstain",
         functools.partial(
             regression_fit.quadratic_polarization,
             voters["abstain"],
             voters["pol"],
             regression_fit.FixedEffects.VOTER,
             units=voters[cvr.VOTER_ID],
         ))
    )

    results = []
    for name, outcome, run in models:
        try:
            results.append(_named(run(), outcome))
        except AnalysisError as e:
            _LOGGER.warning("%s not fitted: %s", name, e)
    if not results:
        raise AnalysisError(f"none of the {len(models)} regressions could be fitted")

    with output_lock(cfg.output_dir) as directory:
        write_csv(regression_fit.regression_table(results), directory / "regressions.csv")


def predict(config=None, overrides=None, seed=None, out=None, threads=None):
    """Predicted indifference trend of every loss family."""
    cfg = _load(config, overrides, seed, out, threads, require_seed=False)
    with output_lock(cfg.output_dir) as directory:
        write_csv(regression_fit.trend_table(), directory / "trends.csv")


def _equilibrium_rows(
    density: competition.VoterDensity,
    matrix: competition.ContestMatrix,
    cfg: ExperimentConfig,
) -> t.List[t.Tuple[str, float, float]]:
    args = (density, matrix.platforms, cfg.loss, cfg.choice)
    rows = []
    winner = competition.condorcet_winner(*args, matrix=matrix)
    if winner is not None:
        rows.append(("condorcet_winner", winner, np.nan))
    rows += [("pure_equilibrium", p1, p2) for p1, p2 in competition.pure_equilibria(*args, matrix=matrix)]

    options = cfg.competition
    dynamics = competition.best_response_dynamics(
        *args,
        start=options.start_platforms(),
        max_iters=options.max_iters,
        matrix=matrix,
    )
    if dynamics.status is competition.DynamicsStatus.CYCLE:
        rows += [("dynamics_cycle", p, np.nan) for p in dynamics.platforms]
    else:
        kind = "dynamics_converged" if dynamics.status is competition.DynamicsStatus.CONVERGED else "dynamics_cap"
        rows.append((kind, dynamics.platforms[0], dynamics.platforms[1]))

    cycle = competition.majority_cycle(*args, matrix=matrix)
    if cycle is not None:
        rows += [("majority_cycle", p, np.nan) for p in cycle]
    return rows


def equilibrium(config=None, overrides=None, seed=None, out=None, threads=None):
    """Contest matrix and equilibrium report of the platform game."""
    cfg = _load(config, overrides, seed, out, threads, require_seed=False)
    cfg.require("loss")
    density = cfg.competition.density
    if density is None:
        raise ConfigError("section required by this command", key="competition.density")
    platforms = density.platform_grid(cfg.competition.platforms)
    matrix = competition.contest_matrix(density, platforms, cfg.loss, cfg.choice)
    report = pd.DataFrame(_equilibrium_rows(density, matrix, cfg), columns=["kind", "p1", "p2"])

    with output_lock(cfg.output_dir) as directory:
        write_csv(matrix.to_frame(), directory / "contests.csv")
        write_csv(report, directory / "equilibrium.csv")


def classify(config=None, overrides=None, seed=None, out=None, threads=None, cvr_path=None):
    """Label the measured indifference trends and the loss families consistent with them."""
    cfg = _load(config, overrides, seed, out, threads, require_seed=False)
    measured = _measure(cfg, cvr_path)
    dimensionality = cfg.analysis.dimensionality

    attempts: t.List[t.Tuple[str, t.Callable[[], regression_fit.FormClassification]]] = []
    for party in Party:
        races = measured.same_party(party)
        if races:
            attempts.append(
                (
                    f"Case1-{party.value}",
                    lambda races=races, party=party: regression_fit.classify_case1(
                        measured.stats, races, measured.n_measures, party, dimensionality
                    ),
                )
            )
    if measured.pol:
        panel = group_measures.group_race_panel(measured.stats, _moderates(measured, cfg), measured.pol)
        for outcome in ("abstention_rate", "predictability"):
            attempts.append(
                (
                    f"Case2-{outcome}",
                    lambda outcome=outcome: regression_fit.classify_case2(panel, outcome, dimensionality),
                )
            )

    rows = []
    for setting, run in attempts:
        try:
            label, families = run()
        except AnalysisError as e:
            _LOGGER.warning("%s not classified: %s", setting, e)
            continue
        rows.append((setting, label.value, "|".join(f.value for f in families)))
    if not rows:
        raise EmptyCellError("no setting has enough data to classify")

    with output_lock(cfg.output_dir) as directory:
        write_csv(pd.DataFrame(rows, columns=["setting", "label", "families"]), directory / "classification.csv")
