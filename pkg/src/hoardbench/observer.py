"""Adversary inference over cache locations, and the agent-side copy of it.

The belief is a probability grid over a 20x20 arena. Sighting events update
it multiplicatively with a mixture likelihood: a kernel of weight w spread
uniformly over the cells near the sighting, plus weight (1 - w) spread over
the whole grid (the observer never fully trusts a single glimpse). Quiet
steps diffuse the belief toward uniform.

The same update code serves both sides: the adversary runs it on what it
actually saw, and an observer-aware agent runs it on the visibility bits it
logged, so the two beliefs agree bit for bit whenever the log is correct.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core.state import InputError

OBSERVER_GRID = 20
CACHE_KERNEL_WIDTH = 3
CACHE_KERNEL_WEIGHT = 0.9
PRESENCE_KERNEL_WIDTH = 5
PRESENCE_KERNEL_WEIGHT = 0.5
NORMALIZATION_TOL = 1e-12

Cell = tuple[int, int]


@dataclass(frozen=True)
class SawCache:
    cell: Cell


@dataclass(frozen=True)
class SawPresence:
    cell: Cell


@dataclass(frozen=True)
class SawNothing:
    pass


ObservedEvent = SawCache | SawPresence | SawNothing


@dataclass(frozen=True)
class ObserverBelief:
    """Probability mass over grid cells; sums to one once evidence or a prior
    exists, zero before initialization."""

    grid: np.ndarray
    observations_seen: int = 0
    diffusion_rate: float = 0.0

    def __post_init__(self):
        if self.grid.shape != (OBSERVER_GRID, OBSERVER_GRID):
            raise InputError("observer grid must be 20x20")
        if np.any(self.grid < 0):
            raise InputError("observer mass must be non-negative")
        if not (0.0 <= self.diffusion_rate <= 1.0):
            raise InputError("diffusion_rate must lie in [0, 1]")

    @classmethod
    def uniform(cls, diffusion_rate: float = 0.0) -> "ObserverBelief":
        n = OBSERVER_GRID * OBSERVER_GRID
        return cls(np.full((OBSERVER_GRID, OBSERVER_GRID), 1.0 / n), 0, diffusion_rate)

    @classmethod
    def empty(cls, diffusion_rate: float = 0.0) -> "ObserverBelief":
        return cls(np.zeros((OBSERVER_GRID, OBSERVER_GRID)), 0, diffusion_rate)

    def total_mass(self) -> float:
        return float(self.grid.sum())

    def mass_at(self, cell: Cell) -> float:
        return float(self.grid[cell[0], cell[1]])

    def argmax_cells(self) -> list[Cell]:
        top = self.grid.max()
        rows, cols = np.where(self.grid == top)
        return [(int(r), int(c)) for r, c in zip(rows, cols)]

    def dump_row_major(self) -> list[float]:
        return [float(v) for v in self.grid.reshape(-1)]


def _check_cell(cell: Cell) -> Cell:
    r, c = cell
    if not (0 <= r < OBSERVER_GRID and 0 <= c < OBSERVER_GRID):
        raise InputError(f"cell {cell} outside the {OBSERVER_GRID}x{OBSERVER_GRID} grid")
    return int(r), int(c)


def _kernel(cell: Cell, width: int) -> np.ndarray:
    """Uniform mass over the width x width block centered at `cell`, clipped
    to the grid; always sums to one."""
    half = width // 2
    r, c = cell
    grid = np.zeros((OBSERVER_GRID, OBSERVER_GRID))
    r0, r1 = max(0, r - half), min(OBSERVER_GRID, r + half + 1)
    c0, c1 = max(0, c - half), min(OBSERVER_GRID, c + half + 1)
    grid[r0:r1, c0:c1] = 1.0
    return grid / grid.sum()


def _likelihood(cell: Cell, width: int, weight: float) -> np.ndarray:
    n = OBSERVER_GRID * OBSERVER_GRID
    return (1.0 - weight) / n + weight * _kernel(cell, width)


def observer_update(belief: ObserverBelief, event: ObservedEvent) -> ObserverBelief:
    """Condition the belief on one sighting event and renormalize."""
    grid = belief.grid
    if belief.total_mass() == 0.0:
        # No prior yet: initialize to uniform before conditioning.
        grid = np.full_like(grid, 1.0 / grid.size)

    if isinstance(event, SawCache):
        cell = _check_cell(event.cell)
        grid = grid * _likelihood(cell, CACHE_KERNEL_WIDTH, CACHE_KERNEL_WEIGHT)
    elif isinstance(event, SawPresence):
        cell = _check_cell(event.cell)
        grid = grid * _likelihood(cell, PRESENCE_KERNEL_WIDTH, PRESENCE_KERNEL_WEIGHT)
    elif isinstance(event, SawNothing):
        rate = belief.diffusion_rate
        if rate == 0.0:
            # Exact identity; skip the renormalization round-off.
            return replace(belief, observations_seen=belief.observations_seen + 1)
        grid = (1.0 - rate) * grid + rate / grid.size
    else:
        raise InputError(f"unknown observed event {event!r}")

    total = grid.sum()
    if total <= 0:
        raise InputError("observer update produced zero total mass")
    grid = grid / total
    return replace(
        belief, grid=grid, observations_seen=belief.observations_seen + 1
    )


def leakage_score(belief: ObserverBelief, true_caches: list[Cell]) -> float:
    """Observer mass sitting on ground-truth cache cells, clipped to [0, 1].

    A uniform belief over G cells scores len(true_caches)/G (the no-information
    baseline); a belief concentrated on the true cells scores near one.
    """
    if not true_caches:
        raise InputError("leakage_score requires a non-empty cache list")
    cells = {(int(r), int(c)) for r, c in true_caches}
    for cell in cells:
        _check_cell(cell)
    total = sum(belief.mass_at(cell) for cell in cells)
    return max(0.0, min(1.0, total))


def pilfer_select(belief: ObserverBelief, m: int) -> list[Cell]:
    """The m highest-mass cells, ties broken by row-major order."""
    n = OBSERVER_GRID * OBSERVER_GRID
    if not (1 <= m <= n):
        raise InputError(f"pilfer budget must lie in [1, {n}]")
    flat = belief.grid.reshape(-1)
    order = np.lexsort((np.arange(n), -flat))
    out = []
    for k in order[:m]:
        out.append((int(k) // OBSERVER_GRID, int(k) % OBSERVER_GRID))
    return out
