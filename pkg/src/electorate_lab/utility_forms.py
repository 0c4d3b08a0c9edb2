"""
Loss functions mapping spatial distance to utility.

Power families: u(d) = -alpha * d**beta with beta == 1 (Linear), beta > 1
(Concave) or 0 < beta < 1 (Convex). ReverseS: u(d) = alpha * exp(-d**2 / omega),
concave below the inflection sqrt(omega / 2) and convex above it.
"""
import enum
import logging
import math
import typing as t
from dataclasses import dataclass

import numpy as np

from electorate_lab.exceptions import ConfigError, DomainError
from electorate_lab.policy_space import (
    Position,
    ShiftMode,
    distance,
    shift_away_distance,
)

_LOGGER = logging.getLogger(__name__)

CURVATURE_TOLERANCE = 1e-9
LEVEL_TOLERANCE = 1e-6
BISECTION_TOLERANCE = 1e-10
# largest radius probed when bracketing an indifference curve
_MAX_RADIUS = 1e6

ArrayLike = t.Union[float, np.ndarray]


class LossFamily(str, enum.Enum):
    LINEAR = "Linear"
    CONCAVE = "Concave"
    CONVEX = "Convex"
    REVERSE_S = "ReverseS"


class Curvature(str, enum.Enum):
    NEGATIVE = "Negative"
    ZERO = "Zero"
    POSITIVE = "Positive"


class IndifferenceKind(str, enum.Enum):
    SPATIAL = "Spatial"
    ISSUE_BASED = "IssueBased"


@dataclass(frozen=True)
class LossSpec:
    family: LossFamily
    alpha: float = 1.0
    beta: float = 1.0
    omega: float = 1.0

    def __post_init__(self):
        try:
            object.__setattr__(self, "family", LossFamily(self.family))
        except ValueError:
            raise ConfigError(f"unknown loss family {self.family!r}", key="family")
        for name in ("alpha", "beta", "omega"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ConfigError(f"must be finite, got {value}", key=name)
            if value <= 0:
                raise ConfigError(f"must be positive, got {value}", key=name)
            object.__setattr__(self, name, value)

        if self.family is LossFamily.LINEAR and self.beta != 1.0:
            raise ConfigError(f"Linear loss requires beta == 1, got {self.beta}", key="beta")
        if self.family is LossFamily.CONCAVE and not self.beta > 1.0:
            raise ConfigError(f"Concave loss requires beta > 1, got {self.beta}", key="beta")
        if self.family is LossFamily.CONVEX and not self.beta < 1.0:
            raise ConfigError(f"Convex loss requires 0 < beta < 1, got {self.beta}", key="beta")

    @classmethod
    def from_dict(cls, raw: t.Mapping[str, t.Any]) -> "LossSpec":
        family = raw.get("family")
        beta = raw.get("beta")
        if beta is None:
            # each power family has a canonical exponent
            beta = {"Concave": 2.0, "Convex": 0.5}.get(family, 1.0)
        return cls(
            family=family,
            alpha=raw.get("alpha", 1.0),
            beta=beta,
            omega=raw.get("omega", 1.0),
        )

    @property
    def inflection(self) -> t.Optional[float]:
        """Distance at which the ReverseS loss switches from concave to convex."""
        if self.family is LossFamily.REVERSE_S:
            return math.sqrt(self.omega / 2.0)
        return None

    @property
    def peak(self) -> float:
        return self.alpha if self.family is LossFamily.REVERSE_S else 0.0

    def describe(self) -> str:
        if self.family is LossFamily.REVERSE_S:
            return f"ReverseS(alpha={self.alpha:g}, omega={self.omega:g})"
        return f"{self.family.value}(alpha={self.alpha:g}, beta={self.beta:g})"


def utility(spec: LossSpec, delta: ArrayLike) -> ArrayLike:
    """
    Utility of a candidate at spatial distance `delta`. Accepts scalars or arrays.
    """
    d = np.asarray(delta, dtype=float)
    if np.any(d < 0):
        raise DomainError("distance must be nonnegative")
    if spec.family is LossFamily.REVERSE_S:
        u = spec.alpha * np.exp(-np.square(d) / spec.omega)
    else:
        u = -spec.alpha * np.power(d, spec.beta)
    if np.ndim(u) == 0:
        return float(u)
    return u


def second_difference_sign(
    spec: LossSpec,
    delta: float,
    h: float,
    tolerance: t.Optional[float] = None,
) -> Curvature:
    """
    Sign of u(d-h) - 2u(d) + u(d+h), treating magnitudes below the tolerance
    (default 1e-9 * alpha) as zero.
    """
    if not delta > h > 0:
        raise DomainError(f"requires delta > h > 0, got delta={delta}, h={h}")
    if tolerance is None:
        tolerance = CURVATURE_TOLERANCE * spec.alpha
    u = utility(spec, np.array([delta - h, delta, delta + h]))
    second = u[0] - 2.0 * u[1] + u[2]
    if abs(second) <= tolerance:
        return Curvature.ZERO
    return Curvature.POSITIVE if second > 0 else Curvature.NEGATIVE


def declared_curvature(spec: LossSpec, delta: float) -> Curvature:
    """The curvature each family is built to have at distance `delta`."""
    if spec.family is LossFamily.LINEAR:
        return Curvature.ZERO
    if spec.family is LossFamily.CONCAVE:
        return Curvature.NEGATIVE
    if spec.family is LossFamily.CONVEX:
        return Curvature.POSITIVE
    return Curvature.NEGATIVE if delta < spec.inflection else Curvature.POSITIVE


def indifference(spec: LossSpec, delta1: ArrayLike, delta2: ArrayLike) -> ArrayLike:
    """
    Voter indifference -|u(delta1) - u(delta2)|; zero means the voter does not
    care which candidate wins.
    """
    value = -np.abs(np.subtract(utility(spec, delta1), utility(spec, delta2)))
    if np.ndim(value) == 0:
        return float(value)
    return value


def spatial_utility(spec: LossSpec, voter: Position, candidate: Position) -> float:
    return utility(spec, distance(voter, candidate))


def issue_based_utility(spec: LossSpec, voter: Position, candidate: Position) -> float:
    """
    Utility summed issue by issue over the coordinate differences.
    """
    if voter.dimension != candidate.dimension:
        # distance raises the canonical mismatch error
        distance(voter, candidate)
    gaps = np.abs(voter.as_array() - candidate.as_array())
    return float(np.sum(utility(spec, gaps)))


def indifference_path(
    spec: LossSpec,
    near: float,
    gap: float,
    shifts: t.Sequence[float],
    mode: t.Union[ShiftMode, str] = ShiftMode.COLLINEAR,
) -> np.ndarray:
    """
    Indifference of a voter as both candidates move away from her.

    The nearer candidate starts at distance `near`, the farther at `near + gap`;
    each shift moves both by the same amount, collinearly (one dimension) or
    orthogonally (an additional dimension).
    """
    values = []
    for shift in shifts:
        d1 = shift_away_distance(near, shift, mode)
        d2 = shift_away_distance(near + gap, shift, mode)
        values.append(indifference(spec, d1, d2))
    return np.asarray(values)


def _utility_function(kind: IndifferenceKind, spec: LossSpec, voter: Position) -> t.Callable[[np.ndarray], float]:
    if kind is IndifferenceKind.SPATIAL:
        return lambda point: spatial_utility(spec, voter, Position(tuple(point)))
    return lambda point: issue_based_utility(spec, voter, Position(tuple(point)))


def indifference_curve(
    kind: t.Union[IndifferenceKind, str],
    spec: LossSpec,
    voter: Position,
    level: float,
    samples: int,
    tolerance: float = LEVEL_TOLERANCE,
) -> t.List[Position]:
    """
    Sample the level set {p : U(p) == level} around a voter in the plane.

    Utility decreases monotonically along every ray leaving the voter, so each
    of `samples` evenly spaced angles is solved by radial bisection. Angles
    along which the level is never reached are skipped; an empty list means
    the level is unreachable.
    """
    kind = IndifferenceKind(kind)
    if voter.dimension != 2:
        raise DomainError(f"indifference curves are drawn in 2 dimensions, got {voter.dimension}")
    if samples < 1:
        raise DomainError(f"samples must be positive, got {samples}")

    fn = _utility_function(kind, spec, voter)
    origin = voter.as_array()
    top = fn(origin)
    scale = max(abs(level), 1.0)
    if level > top + tolerance * scale:
        _LOGGER.warning("level %g is above the peak utility %g", level, top)
        return []

    points = []
    skipped = 0
    for angle in np.linspace(0.0, 2.0 * np.pi, samples, endpoint=False):
        direction = np.array([np.cos(angle), np.sin(angle)])
        lo, hi = 0.0, 1.0
        while fn(origin + hi * direction) > level and hi < _MAX_RADIUS:
            lo, hi = hi, 2.0 * hi
        if fn(origin + hi * direction) > level:
            skipped += 1
            continue
        while hi - lo > BISECTION_TOLERANCE * max(1.0, hi):
            mid = 0.5 * (lo + hi)
            if fn(origin + mid * direction) > level:
                lo = mid
            else:
                hi = mid
        point = origin + 0.5 * (lo + hi) * direction
        if abs(fn(point) - level) <= tolerance * scale:
            points.append(Position(tuple(point)))
        else:
            skipped += 1

    if skipped:
        _LOGGER.warning("level %g unreachable along %d of %d angles", level, skipped, samples)
    return points
