import itertools
from dataclasses import replace

import numpy as np
import pandas as pd
import pytest
from scipy import stats

from electorate_lab import cvr
from electorate_lab.choice_model import ChoiceModel
from electorate_lab.electorate_sim import (
    Electorate,
    ElectorateSpec,
    NormalIdeal,
    RaceSpec,
    UniformIdeal,
    check_seed,
    generate_electorate,
    ideal_distribution_from_dict,
    measure_responses,
    simulate_election,
    simulate_measures,
    subgroup_id,
    subgroup_ids,
    voter_group,
    voter_groups,
)
from electorate_lab.exceptions import ConfigError, MissingResponseError
from electorate_lab.group_measures import abstention_by_group, dem_share, tabulate
from electorate_lab.policy_space import Position
from electorate_lab.utility_forms import LossSpec


def _spec(n_voters=2000, n_measures=10, seed=11, **kwargs):
    return ElectorateSpec(
        seed=seed,
        n_voters=n_voters,
        ideal_distribution=UniformIdeal(0.0, 10.0),
        n_measures=n_measures,
        dem_position=Position.of(0.0),
        rep_position=Position.of(10.0),
        **kwargs,
    )


def _simulate(spec, races, loss, model, threads=1):
    electorate = simulate_measures(generate_electorate(spec), spec, loss, model)
    return simulate_election(electorate, races, loss, model, seed=spec.seed, threads=threads)


def test_generate_electorate_is_deterministic():
    spec = _spec()
    a, b = generate_electorate(spec), generate_electorate(spec)
    assert np.array_equal(a.ideals, b.ideals)
    assert a.voter_ids.tolist() == list(range(spec.n_voters))
    assert not np.array_equal(a.ideals, generate_electorate(_spec(seed=12)).ideals)


def test_invalid_electorate():
    with pytest.raises(ConfigError):
        _spec(n_voters=0)
    with pytest.raises(ConfigError):
        NormalIdeal(0.0, 0.0)
    with pytest.raises(ConfigError):
        ideal_distribution_from_dict({"kind": "Normal", "mu": 0.0, "sigma": 0.0})
    with pytest.raises(ConfigError):
        ElectorateSpec(1, 10, UniformIdeal(0, 1), 3, Position.of(0.0), Position.of(0.0))


def test_voter_group():
    assert voter_group((0,) * 10) == 0
    assert voter_group((0, 0, 0, 0, 0, 1, 1, 1, 1, 1)) == 5
    assert voter_group((1, 1, 1, 1, 1, 0, 0, 0, 0, 0)) == 5
    assert voter_group((1,) * 9) == 9
    with pytest.raises(MissingResponseError):
        voter_group((0, None, 1))


def test_subgroup_id():
    assert subgroup_id((0,) * 10) == 0
    assert subgroup_id((0, 0, 0, 0, 0, 1, 1, 1, 1, 1)) == 31
    assert subgroup_id((1, 0)) == 2
    with pytest.raises(MissingResponseError):
        subgroup_id((1, None))


def test_subgroups_per_group_are_binomial():
    """With every response pattern present, group k holds C(n, k) subgroups."""
    matrix = np.array(list(itertools.product([0, 1], repeat=10)), dtype=np.int8)
    groups = voter_groups(matrix)
    subgroups = subgroup_ids(matrix)
    assert len(np.unique(subgroups[groups == 5])) == 252
    assert groups.min() == 0 and groups.max() == 10
    assert subgroups.tolist() == [subgroup_id(row) for row in matrix]


def test_measure_responses(quadratic, no_cost):
    spec = _spec()
    assert measure_responses(Position.of(0.0), spec, quadratic, no_cost) == (0,) * 10
    assert measure_responses(Position.of(10.0), spec, quadratic, no_cost) == (1,) * 10
    # without offsets a voter at the midpoint ties every measure and sides with D
    centered = _spec(measure_spread=0.0)
    assert measure_responses(Position.of(5.0), centered, quadratic, no_cost) == (0,) * 10


def test_group_histogram_counts_every_voter(quadratic, no_cost):
    spec = _spec()
    electorate = simulate_measures(generate_electorate(spec), spec, quadratic, no_cost)
    counts = np.bincount(voter_groups(electorate.measures), minlength=11)
    assert counts.sum() == spec.n_voters


def test_identical_candidates_everyone_abstains(quadratic):
    spec = _spec(n_voters=500)
    race = RaceSpec("r1", Position.of(5.0), Position.of(5.0))
    frame = _simulate(spec, [race], quadratic, ChoiceModel(cost=0.1))
    assert (frame["r1"] == cvr.ABSTAIN).all()


def test_voter_at_party_position_votes_for_it(quadratic):
    spec = ElectorateSpec(3, 10, UniformIdeal(-1e-9, 1e-9), 2, Position.of(0.0), Position.of(10.0))
    race = RaceSpec("r1", Position.of(0.0), Position.of(10.0))
    frame = _simulate(spec, [race], quadratic, ChoiceModel(cost=0.01))
    assert (frame["r1"] == "D").all()


def test_candidate_validation(quadratic, caplog):
    spec = _spec(n_voters=200, n_measures=2)
    electorate = simulate_measures(generate_electorate(spec), spec, quadratic, ChoiceModel())
    assert electorate.space().bounds[0][0] >= 0.0
    with pytest.raises(ConfigError) as excinfo:
        simulate_election(electorate, [RaceSpec("r1", Position.of(4.0, 1.0), Position.of(6.0, 1.0))], quadratic, ChoiceModel(), seed=1)
    assert excinfo.value.key == "r1"
    with pytest.raises(ConfigError):
        races = [RaceSpec("r1", Position.of(4.0), Position.of(6.0))] * 2
        simulate_election(electorate, races, quadratic, ChoiceModel(), seed=1)
    simulate_election(electorate, [RaceSpec("r1", Position.of(4.0), Position.of(12.0))], quadratic, ChoiceModel(), seed=1)
    assert "outside the voters' range" in caplog.text


def test_simulation_output_is_a_valid_cvr(reverse_s):
    spec = _spec(n_voters=300, n_measures=4, missing_rate=0.05)
    races = [RaceSpec("pres", Position.of(4.0), Position.of(6.0), race_type="Presidential")]
    frame = _simulate(spec, races, reverse_s, ChoiceModel(mode="Probabilistic", cost=0.05))
    cvr.validate_frame(frame, expected_measures=4)
    assert list(frame.columns) == ["voter_id", "m1", "m2", "m3", "m4", "pres"]
    assert set(frame["pres"]) <= {"D", "R", "A"}
    assert (frame[["m1", "m2", "m3", "m4"]] == "NA").to_numpy().any()


def test_simulation_independent_of_threads(reverse_s):
    """Probabilistic ballots are identical for any thread count and repeat run."""
    spec = _spec(n_voters=70000, n_measures=4)
    races = [RaceSpec(f"r{i}", Position.of(5.0 - i), Position.of(5.0 + i)) for i in range(1, 5)]
    model = ChoiceModel(mode="Probabilistic", cost=0.05, scale=0.2)
    one = _simulate(spec, races, reverse_s, model, threads=1)
    four = _simulate(spec, races, reverse_s, model, threads=4)
    again = _simulate(spec, races, reverse_s, model, threads=1)
    pd.testing.assert_frame_equal(one, four)
    pd.testing.assert_frame_equal(one, again)


def test_democratic_support_falls_with_group(quadratic, no_cost):
    """In a D-R race, the Democratic share does not increase with the group rank."""
    spec = _spec(n_voters=20000)
    race = RaceSpec("r1", Position.of(4.0), Position.of(6.0))
    stats_ = tabulate(_simulate(spec, [race], quadratic, no_cost))
    shares = [dem_share(s) for s in sorted(stats_, key=lambda s: s.group)]
    assert all(b <= a for a, b in zip(shares, shares[1:]))


def _case1_abstention(loss, cost):
    spec = _spec(n_voters=20000)
    races = [
        RaceSpec("dd1", Position.of(0.0), Position.of(-0.5), "D", "D"),
        RaceSpec("dd2", Position.of(-0.25), Position.of(-1.0), "D", "D"),
        RaceSpec("dd3", Position.of(0.0), Position.of(-1.0), "D", "D"),
    ]
    frame = _simulate(spec, races, loss, ChoiceModel(cost=cost))
    by_group = abstention_by_group(tabulate(frame), ["dd1", "dd2", "dd3"])
    groups = sorted(by_group)
    return groups, [by_group[k] for k in groups]


def test_case1_reverse_s_abstention_rises_with_distance():
    """Same-party races on the left: abstention grows with the group rank under Gaussian loss."""
    groups, rates = _case1_abstention(LossSpec("ReverseS", omega=4.0), cost=0.025)
    assert all(b >= a for a, b in zip(rates, rates[1:]))
    assert rates[-1] > rates[0]
    assert stats.spearmanr(groups, rates)[0] > 0


def test_case1_concave_abstention_falls_with_distance():
    """The same races under quadratic loss: abstention shrinks with the group rank."""
    groups, rates = _case1_abstention(LossSpec("Concave", beta=2.0), cost=1.5)
    assert all(b <= a for a, b in zip(rates, rates[1:]))
    assert rates[-1] < rates[0]
    assert stats.spearmanr(groups, rates)[0] < 0


def test_spec_without_a_seed():
    """A seedless spec describes an electorate but cannot draw one."""
    spec = ElectorateSpec.from_dict(
        {
            "n_voters": 10,
            "n_measures": 3,
            "dem_position": [0.0],
            "rep_position": [10.0],
            "ideal_distribution": {"kind": "Uniform", "lo": 0.0, "hi": 10.0},
        }
    )
    assert spec.seed is None
    assert spec.n_measures == 3
    with pytest.raises(ConfigError) as excinfo:
        generate_electorate(spec)
    assert excinfo.value.key == "seed"


@pytest.mark.parametrize("seed", [-1, 2**64, "seven"])
def test_seed_out_of_range(seed):
    with pytest.raises(ConfigError) as excinfo:
        check_seed(seed)
    assert excinfo.value.key == "seed"
    with pytest.raises(ConfigError):
        _spec(seed=seed)


def test_seed_range_limits():
    assert check_seed(0) == 0
    assert check_seed(2**64 - 1) == 2**64 - 1


def test_mirrored_electorate_swaps_parties(quadratic):
    """Reflecting voters and party endpoints swaps the D and R counts of every group."""
    spec = _spec(n_voters=2000, n_measures=6)
    mirrored_spec = replace(spec, dem_position=Position.of(10.0), rep_position=Position.of(0.0))
    electorate = generate_electorate(spec)
    mirrored = Electorate(voter_ids=electorate.voter_ids, ideals=10.0 - electorate.ideals)
    model = ChoiceModel(cost=0.1)
    races = [RaceSpec("r1", Position.of(4.0), Position.of(6.0)), RaceSpec("r2", Position.of(1.0), Position.of(7.5))]
    # the D candidate takes the reflected position of the R candidate and vice versa
    mirrored_races = [
        RaceSpec(race.race_id, Position.of(10.0 - race.cand2_pos.coords[0]), Position.of(10.0 - race.cand1_pos.coords[0]))
        for race in races
    ]

    def ballots(electorate, spec, races):
        electorate = simulate_measures(electorate, spec, quadratic, model)
        return simulate_election(electorate, races, quadratic, model, seed=spec.seed)

    original = ballots(electorate, spec, races)
    reflected = ballots(mirrored, mirrored_spec, mirrored_races)
    measures = cvr.measure_columns(6)
    pd.testing.assert_frame_equal(original[measures], reflected[measures])

    cells = {(s.group, s.race_id): s for s in tabulate(reflected)}
    stats_ = tabulate(original)
    assert len(stats_) == len(cells)
    for s in stats_:
        other = cells[(s.group, s.race_id)]
        assert (s.n_dem, s.n_rep, s.n_abstain) == (other.n_rep, other.n_dem, other.n_abstain)
