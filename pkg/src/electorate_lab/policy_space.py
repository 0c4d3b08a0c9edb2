"""
Geometry of the policy space.

Positions are dense real vectors; discrete segment positions are integer
valued coordinates of the same type.
"""
import enum
import math
import typing as t
from dataclasses import dataclass

import numpy as np

from electorate_lab.exceptions import DimensionMismatchError, DomainError

# allowed deviation of a direction vector from unit length
UNIT_NORM_TOLERANCE = 1e-9


@dataclass(frozen=True)
class Position:
    coords: t.Tuple[float, ...]

    def __post_init__(self):
        coords = tuple(float(c) for c in np.atleast_1d(self.coords))
        if len(coords) == 0:
            raise DomainError("a position needs at least one coordinate")
        if not all(math.isfinite(c) for c in coords):
            raise DomainError(f"non-finite coordinate in {coords}")
        object.__setattr__(self, "coords", coords)

    @classmethod
    def of(cls, *coords: float) -> "Position":
        return cls(tuple(coords))

    @property
    def dimension(self) -> int:
        return len(self.coords)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.coords, dtype=float)


def as_position(value: t.Union["Position", t.Sequence[float], float]) -> Position:
    if isinstance(value, Position):
        return value
    return Position(tuple(np.atleast_1d(np.asarray(value, dtype=float))))


@dataclass(frozen=True)
class PolicySpace:
    dimension: int
    bounds: t.Optional[t.Tuple[t.Tuple[float, float], ...]] = None

    def __post_init__(self):
        if int(self.dimension) < 1:
            raise DomainError(f"dimension must be at least 1, got {self.dimension}")
        if self.bounds is not None:
            bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
            if len(bounds) != self.dimension:
                raise DimensionMismatchError(
                    f"{len(bounds)} bounds given for a {self.dimension}-dimensional space"
                )
            for lo, hi in bounds:
                if not lo < hi:
                    raise DomainError(f"empty interval [{lo}, {hi}]")
            object.__setattr__(self, "bounds", bounds)

    def position(self, *coords: float) -> Position:
        position = Position.of(*coords)
        self.check(position)
        return position

    def check(self, position: Position) -> None:
        if position.dimension != self.dimension:
            raise DimensionMismatchError(
                f"position of dimension {position.dimension} in a {self.dimension}-dimensional space"
            )

    def contains(self, position: Position) -> bool:
        self.check(position)
        if self.bounds is None:
            return True
        return all(lo <= x <= hi for x, (lo, hi) in zip(position.coords, self.bounds))


class ShiftMode(str, enum.Enum):
    COLLINEAR = "collinear"
    ORTHOGONAL = "orthogonal"


def _check_same_space(a: Position, b: Position) -> None:
    if a.dimension != b.dimension:
        raise DimensionMismatchError(
            f"incompatible positions: dimension {a.dimension} vs {b.dimension}"
        )


def distance(a: Position, b: Position) -> float:
    """
    Euclidean distance between two positions of the same space.
    """
    _check_same_space(a, b)
    return float(np.linalg.norm(a.as_array() - b.as_array()))


def pairwise_distances(points: np.ndarray, target: Position) -> np.ndarray:
    """
    Distance from each row of an (n, d) array of ideal points to one position.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, np.newaxis]
    if points.shape[1] != target.dimension:
        raise DimensionMismatchError(
            f"incompatible positions: dimension {points.shape[1]} vs {target.dimension}"
        )
    if points.shape[1] == 1:
        return np.abs(points[:, 0] - target.coords[0])
    return np.linalg.norm(points - target.as_array(), axis=1)


def shift_away_distance(delta0: float, shift: float, mode: t.Union[ShiftMode, str]) -> float:
    """
    Distance after moving a candidate `shift` units away from a voter.

    A collinear shift adds to the distance; an orthogonal shift (multi-dimensional
    case) adds in quadrature.
    """
    mode = ShiftMode(mode)
    if delta0 < 0 or shift < 0:
        raise DomainError(f"distances must be nonnegative, got delta0={delta0}, shift={shift}")
    if mode is ShiftMode.COLLINEAR:
        return float(delta0 + shift)
    return float(np.hypot(delta0, shift))


def polarize(
    center: Position,
    half_gap: float,
    axis: t.Union[Position, t.Sequence[float]],
) -> t.Tuple[Position, Position]:
    """
    Place two candidates symmetrically about `center` along a unit `axis`.
    """
    axis = as_position(axis)
    _check_same_space(center, axis)
    if half_gap < 0:
        raise DomainError(f"half_gap must be nonnegative, got {half_gap}")
    norm = float(np.linalg.norm(axis.as_array()))
    if abs(norm - 1.0) > UNIT_NORM_TOLERANCE:
        raise DomainError(f"axis must have unit norm, got norm {norm}")
    offset = half_gap * axis.as_array()
    c = center.as_array()
    return Position(tuple(c - offset)), Position(tuple(c + offset))
