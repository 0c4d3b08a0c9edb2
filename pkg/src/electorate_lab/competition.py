"""
Two office-motivated candidates choosing platforms on a line.

Voters sit on a discrete grid with weights. A contest evaluates every
voter's decision under the loss function and choice model and integrates it
against the weights. Candidates care only about winning, so a contest's
result is the sign of the share margin; best responses maximize the margin.
"""
import enum
import logging
import typing as t
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import stats

from electorate_lab.choice_model import ABSTAIN, VOTE_C1, VOTE_C2, ChoiceModel, choice_codes, choice_probabilities
from electorate_lab.exceptions import ConfigError, DomainError
from electorate_lab.utility_forms import LossSpec, utility

_LOGGER = logging.getLogger(__name__)

TIE_TOLERANCE = 1e-10
WEIGHT_TOLERANCE = 1e-12
DEFAULT_PLATFORMS = 201
DEFAULT_CELLS = 400
MAX_ITERS = 1000

CONTEST_COLUMNS = ["p1", "p2", "share1", "share2", "winner"]


class Winner(str, enum.Enum):
    CAND1 = "Cand1"
    CAND2 = "Cand2"
    TIE = "Tie"


class DynamicsStatus(str, enum.Enum):
    CONVERGED = "Converged"
    CYCLE = "Cycle"
    ITERATION_CAP = "IterationCap"


def _cell_midpoints(lo: float, hi: float, cells: int) -> np.ndarray:
    if not hi > lo:
        raise DomainError(f"empty span [{lo}, {hi}]")
    if cells < 1:
        raise DomainError(f"cells must be positive, got {cells}")
    return lo + (np.arange(cells) + 0.5) * (hi - lo) / cells


@dataclass(frozen=True, eq=False)
class VoterDensity:
    grid: np.ndarray
    weights: np.ndarray
    span: t.Optional[t.Tuple[float, float]] = None

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if grid.ndim != 1 or grid.shape != weights.shape or len(grid) == 0:
            raise DomainError("grid and weights must be nonempty 1-d arrays of equal length")
        if not (np.all(np.isfinite(grid)) and np.all(np.isfinite(weights))):
            raise DomainError("non-finite grid point or weight")
        if np.any(np.diff(grid) <= 0):
            raise DomainError("grid must be strictly increasing")
        if np.any(weights < 0):
            raise DomainError("weights must be nonnegative")
        if abs(weights.sum() - 1.0) > WEIGHT_TOLERANCE:
            raise DomainError(f"weights sum to {weights.sum()}, expected 1")
        span = self.span if self.span is not None else (grid[0], grid[-1])
        span = (float(span[0]), float(span[1]))
        if span[0] > grid[0] or span[1] < grid[-1]:
            raise DomainError(f"span {span} does not cover the grid")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "span", span)

    @classmethod
    def _normalized(cls, grid, mass, span) -> "VoterDensity":
        mass = np.asarray(mass, dtype=float)
        if not mass.sum() > 0:
            raise DomainError("density has no mass on its grid")
        return cls(grid, mass / mass.sum(), span)

    @classmethod
    def uniform(cls, lo: float, hi: float, cells: int = DEFAULT_CELLS) -> "VoterDensity":
        grid = _cell_midpoints(lo, hi, cells)
        return cls._normalized(grid, np.ones(cells), (lo, hi))

    @classmethod
    def normal(cls, mu: float, sigma: float, lo: float, hi: float, cells: int = DEFAULT_CELLS) -> "VoterDensity":
        if not sigma > 0:
            raise DomainError(f"sigma must be positive, got {sigma}")
        grid = _cell_midpoints(lo, hi, cells)
        return cls._normalized(grid, stats.norm.pdf(grid, mu, sigma), (lo, hi))

    @classmethod
    def bimodal(
        cls,
        mu1: float,
        sigma1: float,
        mu2: float,
        sigma2: float,
        w: float,
        lo: float,
        hi: float,
        cells: int = DEFAULT_CELLS,
    ) -> "VoterDensity":
        """Two-component normal mixture; `w` weighs the first component."""
        if not 0 < w < 1:
            raise DomainError(f"mixture weight must lie in (0, 1), got {w}")
        if not (sigma1 > 0 and sigma2 > 0):
            raise DomainError("mixture sigmas must be positive")
        grid = _cell_midpoints(lo, hi, cells)
        mass = w * stats.norm.pdf(grid, mu1, sigma1) + (1 - w) * stats.norm.pdf(grid, mu2, sigma2)
        return cls._normalized(grid, mass, (lo, hi))

    @classmethod
    def points(
        cls,
        positions: t.Sequence[float],
        weights: t.Sequence[float],
        span: t.Optional[t.Tuple[float, float]] = None,
    ) -> "VoterDensity":
        """Mass points; weights are normalized."""
        return cls._normalized(np.asarray(positions, dtype=float), weights, span)

    @classmethod
    def from_dict(cls, raw: t.Mapping[str, t.Any]) -> "VoterDensity":
        raw = dict(raw)
        kind = raw.pop("kind", None)
        factories = {
            "Uniform": cls.uniform,
            "Normal": cls.normal,
            "BimodalMixture": cls.bimodal,
            "Points": cls.points,
        }
        if kind not in factories:
            raise ConfigError(f"unknown density kind {kind!r}", key="kind")
        try:
            return factories[kind](**raw)
        except TypeError as e:
            raise ConfigError(str(e), key=kind)

    def median(self) -> float:
        """
        Weighted median; halfway between two grid points when the cumulative
        weight reaches exactly one half between them.
        """
        cumulative = np.cumsum(self.weights)
        i = int(np.searchsorted(cumulative, 0.5 - WEIGHT_TOLERANCE))
        i = min(i, len(self.grid) - 1)
        if abs(cumulative[i] - 0.5) <= WEIGHT_TOLERANCE and i + 1 < len(self.grid):
            return 0.5 * (self.grid[i] + self.grid[i + 1])
        return float(self.grid[i])

    def reflect(self, about: float) -> "VoterDensity":
        span = (2 * about - self.span[1], 2 * about - self.span[0])
        return VoterDensity(2 * about - self.grid[::-1], self.weights[::-1].copy(), span)

    def platform_grid(self, size: int = DEFAULT_PLATFORMS) -> np.ndarray:
        if size < 1:
            raise DomainError(f"platform grid size must be positive, got {size}")
        return np.linspace(self.span[0], self.span[1], size)


@dataclass(frozen=True)
class ContestOutcome:
    share1: float
    share2: float
    abstain_share: float
    winner: Winner

    def __post_init__(self):
        total = self.share1 + self.share2 + self.abstain_share
        if abs(total - 1.0) > WEIGHT_TOLERANCE:
            raise DomainError(f"contest shares sum to {total}")


def _winner(margin: float) -> Winner:
    if margin > TIE_TOLERANCE:
        return Winner.CAND1
    if margin < -TIE_TOLERANCE:
        return Winner.CAND2
    return Winner.TIE


def _shares(
    weights: np.ndarray,
    u1: np.ndarray,
    u2: np.ndarray,
    model: ChoiceModel,
) -> t.Tuple[np.ndarray, np.ndarray]:
    """Vote shares along the last axis of broadcast utility arrays."""
    u1, u2 = np.broadcast_arrays(u1, u2)
    if model.probabilistic:
        p1, p2, _ = choice_probabilities(model, u1, u2)
        return p1 @ weights, p2 @ weights
    codes = choice_codes(model, u1, u2)
    # equal utilities: voters who vote split evenly
    split = np.where((codes != ABSTAIN) & (u1 == u2), 0.5, 0.0)
    share1 = np.where((codes == VOTE_C1) & (split == 0), 1.0, split) @ weights
    share2 = np.where((codes == VOTE_C2) & (split == 0), 1.0, split) @ weights
    return share1, share2


def _check_platforms(density: VoterDensity, platforms: np.ndarray) -> None:
    lo, hi = density.span
    if np.any(platforms < lo) or np.any(platforms > hi):
        raise DomainError(f"platforms must lie within the span [{lo:g}, {hi:g}]")


def contest(density: VoterDensity, p1: float, p2: float, loss: LossSpec, model: ChoiceModel) -> ContestOutcome:
    _check_platforms(density, np.array([p1, p2], dtype=float))
    u1 = utility(loss, np.abs(density.grid - p1))
    u2 = utility(loss, np.abs(density.grid - p2))
    share1, share2 = (float(s) for s in _shares(density.weights, u1, u2, model))
    abstain = min(max(1.0 - share1 - share2, 0.0), 1.0)
    return ContestOutcome(share1, share2, abstain, _winner(share1 - share2))


@dataclass(frozen=True, eq=False)
class ContestMatrix:
    """Shares of every (cand1 platform, cand2 platform) pair; rows index cand1."""

    platforms: np.ndarray
    share1: np.ndarray
    share2: np.ndarray

    @property
    def margin(self) -> np.ndarray:
        return self.share1 - self.share2

    def signs(self) -> np.ndarray:
        margin = self.margin
        return np.where(margin > TIE_TOLERANCE, 1, np.where(margin < -TIE_TOLERANCE, -1, 0))

    def outcome(self, i: int, j: int) -> ContestOutcome:
        s1, s2 = float(self.share1[i, j]), float(self.share2[i, j])
        return ContestOutcome(s1, s2, min(max(1.0 - s1 - s2, 0.0), 1.0), _winner(s1 - s2))

    def to_frame(self) -> pd.DataFrame:
        g = len(self.platforms)
        i, j = np.meshgrid(np.arange(g), np.arange(g), indexing="ij")
        winners = np.array([w.value for w in (Winner.CAND2, Winner.TIE, Winner.CAND1)])
        return pd.DataFrame(
            {
                "p1": self.platforms[i.ravel()],
                "p2": self.platforms[j.ravel()],
                "share1": self.share1.ravel(),
                "share2": self.share2.ravel(),
                "winner": winners[self.signs().ravel() + 1],
            },
            columns=CONTEST_COLUMNS,
        )


def contest_matrix(
    density: VoterDensity,
    platforms: t.Sequence[float],
    loss: LossSpec,
    model: ChoiceModel,
) -> ContestMatrix:
    platforms = np.asarray(platforms, dtype=float)
    if platforms.ndim != 1 or len(platforms) == 0:
        raise DomainError("platform grid must be a nonempty 1-d sequence")
    _check_platforms(density, platforms)
    # (G, cells) utility of each platform for each voter cell
    u = utility(loss, np.abs(density.grid[None, :] - platforms[:, None]))
    share1 = np.empty((len(platforms), len(platforms)))
    share2 = np.empty_like(share1)
    for i in range(len(platforms)):
        share1[i], share2[i] = _shares(density.weights, u[i][None, :], u, model)
    _LOGGER.debug("evaluated %d contests", share1.size)
    return ContestMatrix(platforms, share1, share2)


def condorcet_winner(
    density: VoterDensity,
    platforms: t.Sequence[float],
    loss: LossSpec,
    model: ChoiceModel,
    matrix: t.Optional[ContestMatrix] = None,
) -> t.Optional[float]:
    """
    A platform no other platform strictly beats, or None. When several are
    unbeaten, the one nearest the density median is returned.
    """
    matrix = matrix or contest_matrix(density, platforms, loss, model)
    unbeaten = np.flatnonzero(np.all(matrix.margin >= -TIE_TOLERANCE, axis=1))
    if len(unbeaten) == 0:
        _LOGGER.info("no Condorcet winner among %d platforms", len(matrix.platforms))
        return None
    median = density.median()
    best = unbeaten[np.argmin(np.abs(matrix.platforms[unbeaten] - median))]
    return float(matrix.platforms[best])


@dataclass(frozen=True)
class DynamicsResult:
    status: DynamicsStatus
    # Converged: the fixed point (p1, p2); Cycle: the platforms visited on the cycle
    platforms: t.Tuple[float, ...]
    iterations: int
    path: t.Tuple[t.Tuple[float, float], ...] = field(default=(), repr=False)


def _best_response(values: np.ndarray, current: int) -> int:
    best = values.max()
    candidates = np.flatnonzero(values >= best - TIE_TOLERANCE)
    if current in candidates:
        return current
    return int(candidates[np.argmin(np.abs(candidates - current))])


def _grid_index(platforms: np.ndarray, value: float) -> int:
    i = int(np.argmin(np.abs(platforms - value)))
    if not np.isclose(platforms[i], value, rtol=0.0, atol=1e-9):
        raise DomainError(f"start platform {value} is not on the platform grid")
    return i


def best_response_dynamics(
    density: VoterDensity,
    platforms: t.Sequence[float],
    loss: LossSpec,
    model: ChoiceModel,
    start: t.Tuple[float, float],
    max_iters: int = MAX_ITERS,
    matrix: t.Optional[ContestMatrix] = None,
) -> DynamicsResult:
    """
    Alternate exact best responses, candidate 1 first.

    A candidate whose platform already maximizes its margin stays; otherwise it
    moves to the margin-maximizing platform nearest its current one. Two
    consecutive stays converge; a repeated (p1, p2, mover) state is a cycle.
    """
    matrix = matrix or contest_matrix(density, platforms, loss, model)
    grid = matrix.platforms
    margin = matrix.margin
    i, j = _grid_index(grid, start[0]), _grid_index(grid, start[1])

    seen: t.Dict[t.Tuple[int, int, int], int] = {}
    history: t.List[t.Tuple[int, int]] = []
    mover, stays, moves = 0, 0, 0
    for _ in range(max_iters):
        state = (i, j, mover)
        if state in seen:
            visited = history[seen[state]:]
            witness = sorted({grid[k] for pair in visited for k in pair})
            _LOGGER.info("best responses cycle through %d platforms", len(witness))
            return DynamicsResult(
                DynamicsStatus.CYCLE,
                tuple(float(p) for p in witness),
                moves,
                tuple((float(grid[a]), float(grid[b])) for a, b in history),
            )
        seen[state] = len(history)
        history.append((i, j))

        if mover == 0:
            target = _best_response(margin[:, j], i)
            moved, i = target != i, target
        else:
            target = _best_response(-margin[i, :], j)
            moved, j = target != j, target
        if moved:
            moves += 1
            stays = 0
        else:
            stays += 1
            if stays == 2:
                return DynamicsResult(
                    DynamicsStatus.CONVERGED,
                    (float(grid[i]), float(grid[j])),
                    moves,
                    tuple((float(grid[a]), float(grid[b])) for a, b in history),
                )
        mover = 1 - mover

    _LOGGER.warning("best-response dynamics stopped after %d iterations", max_iters)
    return DynamicsResult(
        DynamicsStatus.ITERATION_CAP,
        (float(grid[i]), float(grid[j])),
        moves,
        tuple((float(grid[a]), float(grid[b])) for a, b in history),
    )


def pure_equilibria(
    density: VoterDensity,
    platforms: t.Sequence[float],
    loss: LossSpec,
    model: ChoiceModel,
    matrix: t.Optional[ContestMatrix] = None,
) -> t.List[t.Tuple[float, float]]:
    """
    Platform pairs where neither candidate improves its result (win, tie or
    lose) by moving alone.
    """
    matrix = matrix or contest_matrix(density, platforms, loss, model)
    signs = matrix.signs()
    stable = (signs == signs.max(axis=0, keepdims=True)) & (signs == signs.min(axis=1, keepdims=True))
    grid = matrix.platforms
    return [(float(grid[i]), float(grid[j])) for i, j in zip(*np.nonzero(stable))]


def majority_cycle(
    density: VoterDensity,
    platforms: t.Sequence[float],
    loss: LossSpec,
    model: ChoiceModel,
    matrix: t.Optional[ContestMatrix] = None,
) -> t.Optional[t.Tuple[float, float, float]]:
    """
    First triple (x, y, z) in grid order where y beats x, z beats y and x
    beats or ties z.
    """
    matrix = matrix or contest_matrix(density, platforms, loss, model)
    signs = matrix.signs()
    grid = matrix.platforms
    for a in range(len(grid)):
        for b in np.flatnonzero(signs[:, a] > 0):
            for c in np.flatnonzero(signs[:, b] > 0):
                if c != a and signs[a, c] >= 0:
                    return float(grid[a]), float(grid[b]), float(grid[c])
    return None
