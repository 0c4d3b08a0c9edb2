import pandas as pd
import pytest

from electorate_lab import cvr
from electorate_lab.choice_model import ChoiceModel
from electorate_lab.competition import VoterDensity
from electorate_lab.utility_forms import LossSpec


@pytest.fixture(scope="session")
def reverse_s():
    """
    Gaussian loss with unit peak and unit width parameter.
    """
    return LossSpec("ReverseS", alpha=1.0, omega=1.0)


@pytest.fixture(scope="session")
def quadratic():
    """
    Concave (quadratic) loss.
    """
    return LossSpec("Concave", alpha=1.0, beta=2.0)


@pytest.fixture(scope="session")
def no_cost():
    """
    Deterministic pivotal rule without a cost of voting.
    """
    return ChoiceModel()


@pytest.fixture(scope="session")
def ballots():
    """
    Six hand-written ballots over two measures and two races; the last voter
    skipped a measure.

      voter  m1 m2  r1 r2   group
      0      0  0   D  D    0
      1      0  0   D  A    0
      2      0  1   R  A    1
      3      1  0   D  D    1
      4      1  1   R  R    2
      5      1  NA  D  D    -
    """
    frame = pd.DataFrame(
        [
            ["0", "0", "0", "D", "D"],
            ["1", "0", "0", "D", "A"],
            ["2", "0", "1", "R", "A"],
            ["3", "1", "0", "D", "D"],
            ["4", "1", "1", "R", "R"],
            ["5", "1", "NA", "D", "D"],
        ],
        columns=["voter_id", "m1", "m2", "r1", "r2"],
        dtype=object,
    )
    cvr.validate_frame(frame)
    return frame


@pytest.fixture(scope="session")
def cycle_game():
    """
    Platform game without a pure equilibrium.

    Voters at -1, -0.5, 0, 0.5, 1 with weights 6, 1, 1, 1, 6 (out of 15) and a
    narrow Gaussian loss: a voter votes for the nearer candidate only when it
    is at most 0.5 away and strictly nearer, otherwise she abstains.
    """
    density = VoterDensity.points([-1.0, -0.5, 0.0, 0.5, 1.0], [6, 1, 1, 1, 6])
    loss = LossSpec("ReverseS", alpha=1.0, omega=0.15)
    model = ChoiceModel(cost=0.05)
    platforms = [-1.0, -0.5, 0.0, 0.5, 1.0]
    return density, platforms, loss, model


@pytest.fixture(scope="session")
def divergent_game():
    """
    Platform game in which the candidates tie at the two extremes (-1, 1).
    """
    density = VoterDensity.points([-1.0, -0.5, 0.5, 1.0], [3, 1, 1, 3], span=(-1.0, 1.0))
    loss = LossSpec("ReverseS", alpha=1.0, omega=0.15)
    model = ChoiceModel(cost=0.05)
    platforms = [-1.0, -0.5, 0.0, 0.5, 1.0]
    return density, platforms, loss, model
