"""
Vote/abstain decision rules for a voter facing two candidates.

The cost of voting `c` is stored once and enters the pivotal rule as 2c: a
voter votes for c1 only when u1 - u2 > 2c. Halve `cost` to obtain the
single-c threshold.
"""
import enum
import typing as t
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.special import expit

from electorate_lab.exceptions import ConfigError, DomainError

NORMALIZATION_TOLERANCE = 1e-12

VOTE_C1 = 0
VOTE_C2 = 1
ABSTAIN = 2


class DecisionMode(str, enum.Enum):
    DETERMINISTIC = "Deterministic"
    PROBABILISTIC = "Probabilistic"


class NoiseFamily(str, enum.Enum):
    UNIFORM_LINEAR = "UniformLinear"
    NORMAL = "Normal"
    LOGISTIC = "Logistic"


class AbstentionRule(str, enum.Enum):
    STAKES = "Stakes"
    ALIENATION = "Alienation"
    EXPRESSIVE_CONSTANT = "ExpressiveConstant"


class AbstentionVariant(str, enum.Enum):
    LOTTERY = "Lottery"
    PESSIMISTIC = "Pessimistic"


class Choice(str, enum.Enum):
    VOTE_C1 = "VoteC1"
    VOTE_C2 = "VoteC2"
    ABSTAIN = "Abstain"


CODE_TO_CHOICE = {VOTE_C1: Choice.VOTE_C1, VOTE_C2: Choice.VOTE_C2, ABSTAIN: Choice.ABSTAIN}


def _enum_field(enum_cls, value, key):
    try:
        return enum_cls(value)
    except ValueError:
        choices = ", ".join(e.value for e in enum_cls)
        raise ConfigError(f"{value!r} is not one of {choices}", key=key)


@dataclass(frozen=True)
class ChoiceModel:
    mode: DecisionMode = DecisionMode.DETERMINISTIC
    cost: float = 0.0
    noise: NoiseFamily = NoiseFamily.NORMAL
    scale: float = 1.0
    abstention: AbstentionRule = AbstentionRule.STAKES
    alienation_threshold: float = 0.0
    alienation_slope: float = 1.0
    expressive_a: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "mode", _enum_field(DecisionMode, self.mode, "mode"))
        object.__setattr__(self, "noise", _enum_field(NoiseFamily, self.noise, "noise"))
        object.__setattr__(self, "abstention", _enum_field(AbstentionRule, self.abstention, "abstention"))
        for name in ("cost", "scale", "alienation_threshold", "alienation_slope", "expressive_a"):
            value = float(getattr(self, name))
            if not np.isfinite(value):
                raise ConfigError(f"must be finite, got {value}", key=name)
            object.__setattr__(self, name, value)
        if self.cost < 0:
            raise ConfigError(f"cost must be nonnegative, got {self.cost}", key="cost")
        if self.scale <= 0:
            raise ConfigError(f"scale must be positive, got {self.scale}", key="scale")
        if self.alienation_slope <= 0:
            raise ConfigError(f"slope must be positive, got {self.alienation_slope}", key="alienation_slope")

    @classmethod
    def from_dict(cls, raw: t.Mapping[str, t.Any]) -> "ChoiceModel":
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown field(s) {sorted(unknown)}", key=sorted(unknown)[0])
        return cls(**raw)

    @property
    def probabilistic(self) -> bool:
        return self.mode is DecisionMode.PROBABILISTIC

    def noise_distribution(self):
        """Frozen scipy distribution of the composite shock eps1 - eps2."""
        if self.noise is NoiseFamily.UNIFORM_LINEAR:
            return stats.uniform(loc=-self.scale, scale=2.0 * self.scale)
        if self.noise is NoiseFamily.NORMAL:
            return stats.norm(loc=0.0, scale=self.scale)
        return stats.logistic(loc=0.0, scale=self.scale)

    def without_abstention(self) -> "ChoiceModel":
        """Same noise, zero cost, pivotal rule: a forced choice between two options."""
        return ChoiceModel(
            mode=self.mode,
            cost=0.0,
            noise=self.noise,
            scale=self.scale,
            abstention=AbstentionRule.STAKES,
        )


@dataclass(frozen=True)
class ChoiceDistribution:
    p_c1: float
    p_c2: float
    p_abstain: float

    def __post_init__(self):
        for name in ("p_c1", "p_c2", "p_abstain"):
            value = float(getattr(self, name))
            if not -NORMALIZATION_TOLERANCE <= value <= 1.0 + NORMALIZATION_TOLERANCE:
                raise DomainError(f"{name}={value} is not a probability")
            object.__setattr__(self, name, value)
        total = self.p_c1 + self.p_c2 + self.p_abstain
        if abs(total - 1.0) > NORMALIZATION_TOLERANCE:
            raise DomainError(f"probabilities sum to {total}")


def choice_codes(model: ChoiceModel, u1: np.ndarray, u2: np.ndarray) -> np.ndarray:
    """
    Deterministic decisions for arrays of utilities, as VOTE_C1 / VOTE_C2 / ABSTAIN codes.

    Ties go to abstention over voting, and to c1 over c2.
    """
    u1, u2 = np.broadcast_arrays(np.asarray(u1, dtype=float), np.asarray(u2, dtype=float))
    codes = np.full(u1.shape, ABSTAIN, dtype=np.int8)
    if model.abstention is AbstentionRule.STAKES:
        threshold = 2.0 * model.cost
        codes[u1 - u2 > threshold] = VOTE_C1
        codes[u2 - u1 > threshold] = VOTE_C2
        return codes

    best = np.maximum(u1, u2)
    if model.abstention is AbstentionRule.EXPRESSIVE_CONSTANT:
        vote = best - model.cost > model.expressive_a
    else:
        vote = best >= model.alienation_threshold
    codes[vote & (u1 >= u2)] = VOTE_C1
    codes[vote & (u1 < u2)] = VOTE_C2
    return codes


def decide_deterministic(model: ChoiceModel, u1: float, u2: float) -> Choice:
    code = int(choice_codes(model, np.float64(u1), np.float64(u2)))
    return CODE_TO_CHOICE[code]


def _pivotal_probabilities(noise, u1: np.ndarray, u2: np.ndarray, cost: float) -> t.Tuple[np.ndarray, np.ndarray]:
    # symmetric shock: 1 - F(D + 2c) = F(-D - 2c), so swapping candidates swaps p1 and p2 exactly
    p1 = noise.cdf((u1 - u2) - 2.0 * cost)
    p2 = noise.cdf((u2 - u1) - 2.0 * cost)
    return p1, p2


def _split(residual: np.ndarray, q1: np.ndarray, q2: np.ndarray) -> t.Tuple[np.ndarray, np.ndarray]:
    total = q1 + q2
    safe = np.where(total > 0, total, 1.0)
    share1 = np.where(total > 0, q1 / safe, 0.5)
    share2 = np.where(total > 0, q2 / safe, 0.5)
    return residual * share1, residual * share2


def choice_probabilities(
    model: ChoiceModel,
    u1: np.ndarray,
    u2: np.ndarray,
) -> t.Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Probabilities (p_c1, p_c2, p_abstain) for arrays of utilities.

    Stakes: Pr(c1) = 1 - F(D + 2c), Pr(c2) = F(D - 2c) with D = u2 - u1 and F the
    CDF of the composite shock. Alienation: Pr(A) is logistic in the better
    candidate's utility and the remaining mass splits in the zero-cost Stakes
    proportions.
    ExpressiveConstant: Pr(A) = 1 - F(max(u1, u2) - c - a), remaining mass split
    by the zero-cost Stakes proportions.
    """
    u1, u2 = np.broadcast_arrays(np.asarray(u1, dtype=float), np.asarray(u2, dtype=float))
    noise = model.noise_distribution()

    if model.abstention is AbstentionRule.STAKES:
        p1, p2 = _pivotal_probabilities(noise, u1, u2, model.cost)
        p_abstain = np.clip(1.0 - (p1 + p2), 0.0, 1.0)
        return p1, p2, p_abstain

    best = np.maximum(u1, u2)
    if model.abstention is AbstentionRule.ALIENATION:
        p_abstain = expit((model.alienation_threshold - best) / model.alienation_slope)
        q1, q2 = _pivotal_probabilities(noise, u1, u2, 0.0)
    else:
        p_abstain = noise.sf(best - model.cost - model.expressive_a)
        q1, q2 = _pivotal_probabilities(noise, u1, u2, 0.0)
    p1, p2 = _split(1.0 - p_abstain, q1, q2)
    return p1, p2, p_abstain


def decide_probabilistic(model: ChoiceModel, u1: float, u2: float) -> ChoiceDistribution:
    p1, p2, pa = choice_probabilities(model, np.float64(u1), np.float64(u2))
    return ChoiceDistribution(float(p1), float(p2), float(pa))


def abstention_payoff(
    model: ChoiceModel,
    u1: float,
    u2: float,
    variant: t.Optional[t.Union[AbstentionVariant, str]] = None,
) -> float:
    """
    Payoff of abstaining.

    Lottery: both candidates equally likely to win, (u1 + u2) / 2.
    Pessimistic: the worse candidate wins, min(u1, u2).
    Without a variant the model decides: ExpressiveConstant abstainers receive
    the constant `expressive_a`, Stakes abstainers the lottery.
    """
    if variant is None:
        if model.abstention is AbstentionRule.EXPRESSIVE_CONSTANT:
            return model.expressive_a
        if model.abstention is AbstentionRule.ALIENATION:
            raise DomainError("the alienation rule has no abstention payoff; pass a variant")
        variant = AbstentionVariant.LOTTERY
    variant = AbstentionVariant(variant)
    if variant is AbstentionVariant.LOTTERY:
        return 0.5 * (u1 + u2)
    return min(u1, u2)


def payoff_table(
    model: ChoiceModel,
    u1: float,
    u2: float,
    variant: t.Optional[t.Union[AbstentionVariant, str]] = None,
) -> t.Dict[Choice, float]:
    return {
        Choice.VOTE_C1: u1 - model.cost,
        Choice.VOTE_C2: u2 - model.cost,
        Choice.ABSTAIN: abstention_payoff(model, u1, u2, variant),
    }


def decide_by_payoff(
    model: ChoiceModel,
    u1: float,
    u2: float,
    variant: t.Optional[t.Union[AbstentionVariant, str]] = None,
) -> Choice:
    """
    Pick the largest of the three payoffs, abstaining on ties and preferring c1 over c2.
    """
    payoffs = payoff_table(model, u1, u2, variant)
    best_vote = max(payoffs[Choice.VOTE_C1], payoffs[Choice.VOTE_C2])
    if payoffs[Choice.ABSTAIN] >= best_vote:
        return Choice.ABSTAIN
    if payoffs[Choice.VOTE_C1] >= payoffs[Choice.VOTE_C2]:
        return Choice.VOTE_C1
    return Choice.VOTE_C2
