"""Grid geometry shared by both environments.

Conventions used everywhere in this package:

- a cell is addressed as ``(x, y)`` with ``x`` the column and ``y`` the row;
- per-cell grids are numpy arrays of shape ``(height, width)`` indexed
  ``grid[y, x]``;
- ``y`` grows downward (row order), so "north" is ``dy = -1``;
- moves past a border are clamped to the border, never rejected, and
  diagonal moves cost one step (Chebyshev geometry).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, NamedTuple


class Cell(NamedTuple):
    """A grid cell address (column ``x``, row ``y``)."""

    x: int
    y: int


class Displacement(NamedTuple):
    """A relative move ``(dx, dy)``."""

    dx: int
    dy: int


@dataclass(frozen=True)
class GridSpec:
    """Dimensions of a rectangular grid; at least 2x2."""

    width: int
    height: int

    def __post_init__(self) -> None:
        if self.width < 2 or self.height < 2:
            raise ValueError(f"grid must be at least 2x2, got {self.width}x{self.height}")

    @property
    def size(self) -> int:
        return self.width * self.height

    def contains(self, cell: Cell) -> bool:
        return 0 <= cell.x < self.width and 0 <= cell.y < self.height

    def cells(self) -> Iterator[Cell]:
        """All cells in row-major order."""
        for y in range(self.height):
            for x in range(self.width):
                yield Cell(x, y)


def chebyshev_distance(a: Cell, b: Cell) -> int:
    """max(|ax-bx|, |ay-by|): the step metric for 8-directional movement."""
    return max(abs(a.x - b.x), abs(a.y - b.y))


def displacement_actions(max_step: int) -> list[Displacement]:
    """All (dx, dy) with both components in [-max_step, max_step].

    Row-major order (dy outer, dx inner), so the list starts at
    (-max_step, -max_step), includes (0, 0), and ends at (max_step, max_step).
    This ordering fixes the action-index <-> displacement mapping used by the
    Q-network output layer.
    """
    if max_step < 1:
        raise ValueError("max_step must be >= 1")
    span = range(-max_step, max_step + 1)
    return [Displacement(dx, dy) for dy in span for dx in span]


def neighborhood(g: Cell, radius: int, grid: GridSpec) -> list[Cell]:
    """Cells within Chebyshev distance <= radius of g, excluding g itself.

    Clipped at the grid borders; row-major order.
    """
    if radius < 1:
        raise ValueError("radius must be >= 1")
    out = []
    for y in range(max(0, g.y - radius), min(grid.height, g.y + radius + 1)):
        for x in range(max(0, g.x - radius), min(grid.width, g.x + radius + 1)):
            if x != g.x or y != g.y:
                out.append(Cell(x, y))
    return out


def clip_move(g: Cell, d: Displacement, grid: GridSpec) -> Cell:
    """g + d with each coordinate clamped into the grid."""
    return Cell(
        min(max(g.x + d.dx, 0), grid.width - 1),
        min(max(g.y + d.dy, 0), grid.height - 1),
    )
