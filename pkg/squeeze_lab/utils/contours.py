"""
Level contours of gridded data by marching squares

Used for the squeezing-depth contours of spectrum maps and for the zero-margin boundary
of stability maps.
"""
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from squeeze_lab.exceptions import DomainError

logger = logging.getLogger(__name__)

# Each side of a grid square is given an identifier:
#
#    ---2---
#   |       |
#   1       3
#   |       |
#    ---0---
#
# Segments run between two sides and are stored as 2-tuples of side identifiers.
BOTTOM, LEFT, TOP, RIGHT = 0, 1, 2, 3

EdgeKey = Tuple[str, int, int]


@dataclass
class ContourSet:
    """Polylines where a gridded field crosses `level`; vertices are (x, y) pairs"""

    level: float
    polylines: List[np.ndarray] = field(default_factory=list)

    @property
    def is_empty(self) -> bool:
        return not self.polylines

    @property
    def vertex_count(self) -> int:
        return sum(len(line) for line in self.polylines)

    def to_dict(self) -> Dict:
        return {
            "level": self.level,
            "polylines": [line.tolist() for line in self.polylines],
        }


def _square_segments(inside: Sequence[bool], center_inside: bool) -> Tuple:
    """
    Segments in one square for the 16 inside/outside cases.

    `inside` is (bottom_left, bottom_right, top_left, top_right). The two saddle cases are
    resolved by the value at the square centre: when the centre is inside, the two inside
    corners are joined across the square.
    """
    bl, br, tl, tr = inside
    if bl:
        if br:
            if tl:
                return ((TOP, RIGHT),) if not tr else ()
            return ((LEFT, TOP),) if tr else ((LEFT, RIGHT),)
        if tl:
            return ((BOTTOM, RIGHT),) if tr else ((BOTTOM, TOP),)
        if tr:
            # saddle: bottom-left and top-right inside
            if center_inside:
                return ((BOTTOM, RIGHT), (LEFT, TOP))
            return ((BOTTOM, LEFT), (TOP, RIGHT))
        return ((BOTTOM, LEFT),)
    if br:
        if tl:
            if tr:
                return ((BOTTOM, LEFT),)
            # saddle: bottom-right and top-left inside
            if center_inside:
                return ((BOTTOM, LEFT), (TOP, RIGHT))
            return ((BOTTOM, RIGHT), (LEFT, TOP))
        return ((BOTTOM, TOP),) if tr else ((BOTTOM, RIGHT),)
    if tl:
        return ((LEFT, RIGHT),) if tr else ((LEFT, TOP),)
    return ((TOP, RIGHT),) if tr else ()


def _edge_key(row: int, col: int, side: int) -> EdgeKey:
    """Global identifier of a square side shared by its two neighbouring squares"""
    if side == BOTTOM:
        return ("h", row, col)
    if side == TOP:
        return ("h", row + 1, col)
    if side == LEFT:
        return ("v", row, col)
    return ("v", row, col + 1)


def _edge_vertex(key: EdgeKey, values: np.ndarray, x: np.ndarray, y: np.ndarray, level: float) -> Tuple[float, float]:
    """Linear interpolation of the level crossing along a grid edge"""
    kind, row, col = key
    if kind == "h":
        v0, v1 = values[row, col], values[row, col + 1]
        t = (level - v0) / (v1 - v0)
        return (x[col] + t * (x[col + 1] - x[col]), float(y[row]))
    v0, v1 = values[row, col], values[row + 1, col]
    t = (level - v0) / (v1 - v0)
    return (float(x[col]), y[row] + t * (y[row + 1] - y[row]))


def _chain_segments(segments: List[Tuple[EdgeKey, EdgeKey]]) -> List[List[EdgeKey]]:
    """Join segments sharing an edge into open or closed chains of edge keys"""
    touching: Dict[EdgeKey, List[int]] = defaultdict(list)
    for index, (a, b) in enumerate(segments):
        touching[a].append(index)
        touching[b].append(index)

    used = [False] * len(segments)

    def extend(chain: List[EdgeKey]) -> None:
        while True:
            candidates = [i for i in touching[chain[-1]] if not used[i]]
            if not candidates:
                return
            i = candidates[0]
            used[i] = True
            a, b = segments[i]
            chain.append(b if a == chain[-1] else a)
            if chain[-1] == chain[0]:
                return

    chains = []
    for index, (a, b) in enumerate(segments):
        if used[index]:
            continue
        used[index] = True
        chain = [a, b]
        extend(chain)
        if chain[-1] != chain[0]:
            chain.reverse()
            extend(chain)
        chains.append(chain)
    return chains


def extract_contours(values, x, y, level: float) -> ContourSet:
    """
    Trace the level set values == level with marching squares.

    A grid point counts as inside when its value is >= level. Squares with a NaN corner
    are skipped.

    Args:
        values: 2-D array, values[row, col] sampled at (x[col], y[row])
        x: Column coordinates (monotone)
        y: Row coordinates (monotone)
        level: Contour level

    Returns:
        ContourSet with one (k, 2) vertex array per polyline
    """
    values = np.asarray(values, dtype=float)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if values.ndim != 2 or values.shape != (y.size, x.size):
        raise DomainError(f"values shape {values.shape} does not match grid ({y.size}, {x.size})")
    if values.shape[0] < 2 or values.shape[1] < 2:
        raise DomainError("contouring needs at least a 2x2 grid")

    finite = np.isfinite(values)
    inside = values >= level

    segments: List[Tuple[EdgeKey, EdgeKey]] = []
    for row in range(values.shape[0] - 1):
        for col in range(values.shape[1] - 1):
            if not finite[row : row + 2, col : col + 2].all():
                continue
            corners = (inside[row, col], inside[row, col + 1], inside[row + 1, col], inside[row + 1, col + 1])
            if all(corners) or not any(corners):
                continue
            center = values[row : row + 2, col : col + 2].mean()
            for a, b in _square_segments(corners, center >= level):
                segments.append((_edge_key(row, col, a), _edge_key(row, col, b)))

    polylines = []
    for chain in _chain_segments(segments):
        vertices = [_edge_vertex(key, values, x, y, level) for key in chain]
        polylines.append(np.array(vertices, dtype=float))
    logger.debug(f"Level {level}: {len(polylines)} polylines from {len(segments)} segments")
    return ContourSet(level=float(level), polylines=polylines)
