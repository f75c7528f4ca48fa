"""
MIT License

Copyright (c) 2024 the perco.py developers

Permission is hereby granted, free of charge, to any person obtaining a copy
of this software and associated documentation files (the "Software"), to deal
in the Software without restriction, including without limitation the rights
to use, copy, modify, merge, publish, distribute, sublicense, and/or sell
copies of the Software, and to permit persons to whom the Software is
furnished to do so, subject to the following conditions:

The above copyright notice and this permission notice shall be included in all
copies or substantial portions of the Software.

THE SOFTWARE IS PROVIDED "AS IS", WITHOUT WARRANTY OF ANY KIND, EXPRESS OR
IMPLIED, INCLUDING BUT NOT LIMITED TO THE WARRANTIES OF MERCHANTABILITY,
FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT. IN NO EVENT SHALL THE
AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER
LIABILITY, WHETHER IN AN ACTION OF CONTRACT, TORT OR OTHERWISE, ARISING FROM,
OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER DEALINGS IN THE
SOFTWARE.
"""
import itertools
import math

from typing import Iterator, Optional, Sequence, Tuple

import numpy as np

from .errors import InvalidArgument, UsageError
from .utils import as_point

Point = Tuple[int, ...]

#: the largest number of sites a :class:`Window` may hold.
MAX_SITES = 1 << 28


def _check_dimension(a: Sequence[int], b: Sequence[int]) -> None:
    if len(a) != len(b):
        raise UsageError("points of dimension {} and {} cannot be compared".format(len(a), len(b)))


def _axis_difference(delta: int, window: Optional["Window"]) -> int:
    delta = abs(delta)
    if window is not None and window.wrap:
        delta %= window.side
        delta = min(delta, window.side - delta)
    return delta


def l1_dist(a: Sequence[int], b: Sequence[int], window: Optional["Window"] = None) -> int:
    """The ℓ1 distance between two points.

    When ``window`` wraps, each coordinate difference is the shortest one over the
    images of the torus.

    Raises
    ------
    UsageError
        The points have different dimensions.
    """
    _check_dimension(a, b)
    return sum(_axis_difference(int(x) - int(y), window) for x, y in zip(a, b))


def linf_dist(a: Sequence[int], b: Sequence[int], window: Optional["Window"] = None) -> int:
    """The ℓ∞ distance between two points, wrap aware like :func:`l1_dist`."""
    _check_dimension(a, b)
    return max((_axis_difference(int(x) - int(y), window) for x, y in zip(a, b)), default=0)


def unit_vectors(dimension: int) -> Iterator[Point]:
    """Yields the ``2 * dimension`` unit vectors, ``+e_1, -e_1, +e_2, ...``."""
    for axis in range(dimension):
        for sign in (1, -1):
            yield tuple(sign if i == axis else 0 for i in range(dimension))


def neighbours(point: Sequence[int]) -> Iterator[Point]:
    """Yields the ℓ1 neighbours of ``point`` in :func:`unit_vectors` order."""
    point = as_point(point)
    for e in unit_vectors(len(point)):
        yield tuple(p + s for p, s in zip(point, e))


class LatticeBox:
    """Represents an axis-parallel box ``corner + [0, shape)`` of lattice sites.

    Most boxes are cubes, in which case ``side`` is their side length. Boxes produced by
    clipped tiling may have a different extent per axis.

    Attributes
    ----------
    corner: Tuple[int]
        The site of the box with the smallest coordinates.
    shape: Tuple[int]
        The extent of the box along each axis.
    """

    __slots__ = ("corner", "shape")

    def __init__(self, corner: Sequence[int], side: int = None, *, shape: Sequence[int] = None):
        self.corner = as_point(corner)
        if shape is None:
            if side is None:
                raise UsageError("a box needs either a side or a shape")
            shape = (side,) * len(self.corner)
        self.shape = as_point(shape)

        if len(self.shape) != len(self.corner):
            raise UsageError("box shape and corner differ in dimension")
        if min(self.shape, default=1) < 1:
            raise UsageError("box sides must be at least 1, got {}".format(self.shape))

    def __repr__(self):
        return "<%s corner=%s shape=%s>" % (self.__class__.__name__, self.corner, self.shape)

    def __eq__(self, other):
        return isinstance(other, LatticeBox) and self.corner == other.corner and self.shape == other.shape

    def __hash__(self):
        return hash((self.corner, self.shape))

    def __len__(self):
        return self.volume

    def __contains__(self, point):
        return self.contains(point)

    @classmethod
    def ball(cls, center: Sequence[int], radius: float) -> "LatticeBox":
        """The closed ℓ∞ ball ``B(center, radius)`` of radius ``floor(radius)``."""
        if radius < 0:
            raise UsageError("ball radius must be non-negative, got {}".format(radius))
        r = int(math.floor(radius))
        return cls(tuple(c - r for c in as_point(center)), 2 * r + 1)

    @property
    def dimension(self) -> int:
        return len(self.corner)

    @property
    def side(self) -> int:
        """:class:`int`: The side length of a cubic box."""
        if len(set(self.shape)) > 1:
            raise UsageError("box of shape {} is not a cube".format(self.shape))
        return self.shape[0]

    @property
    def upper(self) -> Point:
        """The exclusive upper corner, ``corner + shape``."""
        return tuple(c + s for c, s in zip(self.corner, self.shape))

    @property
    def volume(self) -> int:
        return math.prod(self.shape)

    def contains(self, point: Sequence[int]) -> bool:
        return all(c <= p < u for p, c, u in zip(point, self.corner, self.upper))

    def contains_box(self, other: "LatticeBox") -> bool:
        return all(c <= oc and ou <= u for c, u, oc, ou in zip(self.corner, self.upper, other.corner, other.upper))

    def points(self) -> Iterator[Point]:
        """Iterates the sites of the box in lexicographic order."""
        ranges = [range(c, u) for c, u in zip(self.corner, self.upper)]
        return itertools.product(*ranges)

    def translate(self, offset: Sequence[int]) -> "LatticeBox":
        return LatticeBox(tuple(c + o for c, o in zip(self.corner, offset)), shape=self.shape)

    def expand(self, margin: int) -> "LatticeBox":
        """The box grown by ``margin`` sites on every side."""
        return LatticeBox(tuple(c - margin for c in self.corner), shape=tuple(s + 2 * margin for s in self.shape))

    def intersection(self, other: "LatticeBox") -> Optional["LatticeBox"]:
        lo = tuple(max(a, b) for a, b in zip(self.corner, other.corner))
        hi = tuple(min(a, b) for a, b in zip(self.upper, other.upper))
        if any(h <= l for l, h in zip(lo, hi)):
            return None
        return LatticeBox(lo, shape=tuple(h - l for l, h in zip(lo, hi)))


def linf_ball(x: Sequence[int], r: float) -> LatticeBox:
    """Returns the closed ℓ∞ ball ``{y : |x - y|_∞ <= floor(r)}``."""
    return LatticeBox.ball(x, r)


def subboxes(box: LatticeBox, step: int, *, clip: bool = False) -> Iterator[LatticeBox]:
    """Iterates the tiles ``box.corner + step * j + [0, step)^d`` of a box.

    Tiles come in lexicographic order of their corners and partition the box.

    Parameters
    ----------
    box: :class:`LatticeBox`
        The box to tile.
    step: int
        The tile side.
    clip: bool
        Whether a step which does not divide the box may produce clipped tiles along
        the upper faces. Defaults to ``False``.

    Raises
    ------
    UsageError
        ``step`` does not divide every side of the box and ``clip`` is not set.
    """
    if step < 1:
        raise UsageError("tile step must be positive, got {}".format(step))
    if not clip and any(s % step for s in box.shape):
        raise UsageError("step {} does not divide box of shape {}".format(step, box.shape))

    starts = [range(c, u, step) for c, u in zip(box.corner, box.upper)]
    for corner in itertools.product(*starts):
        shape = tuple(min(step, u - c) for c, u in zip(corner, box.upper))
        yield LatticeBox(corner, shape=shape)


def grid_points(box: LatticeBox, spacing: int) -> Iterator[Point]:
    """Iterates the points of ``spacing * Z^d`` inside ``box`` in lexicographic order."""
    ranges = [
        range(-(-c // spacing) * spacing, u, spacing) for c, u in zip(box.corner, box.upper)
    ]
    return itertools.product(*ranges)


class Slice:
    """Represents a ``j``-dimensional axis-parallel slice of a box.

    The slice is ``(anchor + Z e_{a_1} + ... + Z e_{a_j}) ∩ box``.

    Attributes
    ----------
    anchor: Tuple[int]
        A site of the slice. Coordinates along the slice axes are those of the box corner.
    axes: Tuple[int]
        The coordinate axes spanning the slice, sorted and distinct.
    box: :class:`LatticeBox`
        The bounding box of the slice itself; it has extent 1 along the fixed axes.
    """

    __slots__ = ("anchor", "axes", "box")

    def __init__(self, anchor: Sequence[int], axes: Sequence[int], parent: LatticeBox):
        axes = tuple(sorted(int(a) for a in axes))
        if len(set(axes)) != len(axes):
            raise UsageError("slice directions must be distinct unit vectors, got axes {}".format(axes))
        if not 1 <= len(axes) <= parent.dimension:
            raise UsageError("cannot take a {}-dimensional slice of a {}-dimensional box".format(
                len(axes), parent.dimension))
        anchor = as_point(anchor)
        self.axes = axes
        self.anchor = tuple(parent.corner[i] if i in axes else anchor[i] for i in range(parent.dimension))
        self.box = LatticeBox(self.anchor, shape=tuple(
            parent.shape[i] if i in axes else 1 for i in range(parent.dimension)))

    def __repr__(self):
        return "<%s anchor=%s axes=%s>" % (self.__class__.__name__, self.anchor, self.axes)

    @property
    def dimension(self) -> int:
        return len(self.axes)

    def points(self) -> Iterator[Point]:
        return self.box.points()

    def index(self, box: LatticeBox) -> tuple:
        """A numpy index selecting this slice from an array laid out over ``box``."""
        return tuple(
            slice(None) if i in self.axes else self.anchor[i] - box.corner[i]
            for i in range(box.dimension)
        )


def slices(box: LatticeBox, axes: Sequence[int]) -> Iterator[Slice]:
    """Iterates every slice of ``box`` spanned by ``axes``, in lexicographic anchor order."""
    axes = tuple(sorted(axes))
    fixed = [range(c, u) if i not in axes else range(c, c + 1)
             for i, (c, u) in enumerate(zip(box.corner, box.upper))]
    for anchor in itertools.product(*fixed):
        yield Slice(anchor, axes, box)


def slice_views(array: np.ndarray, axes: Sequence[int]) -> Iterator[Tuple[tuple, np.ndarray]]:
    """Yields ``(index, view)`` for every axis-parallel slice of ``array`` spanned by ``axes``."""
    axes = tuple(sorted(axes))
    fixed = [range(n) if i not in axes else (slice(None),) for i, n in enumerate(array.shape)]
    for index in itertools.product(*fixed):
        yield index, array[index]


class Window:
    """A finite ``d``-dimensional window of side ``N`` standing in for ``Z^d``.

    The lattice origin sits at array position ``N // 2`` along every axis, so lattice
    coordinates run over ``[-N // 2, N - N // 2)``. On a wrapped window (a torus)
    every point is reduced modulo ``N`` before it is addressed.

    Attributes
    ----------
    side: int
        The side length ``N``.
    dimension: int
        The dimension ``d``, at least 2.
    wrap: bool
        Whether the window is a torus.
    """

    __slots__ = ("side", "dimension", "wrap")

    def __init__(self, side: int, dimension: int, wrap: bool = True):
        self.side = int(side)
        self.dimension = int(dimension)
        self.wrap = bool(wrap)

        if self.dimension < 2:
            raise InvalidArgument("dimension must be at least 2, got {}".format(self.dimension))
        if self.side < 1:
            raise InvalidArgument("window side must be positive, got {}".format(self.side))
        if self.side ** self.dimension > MAX_SITES:
            raise InvalidArgument("window {}^{} exceeds the {} site limit".format(
                self.side, self.dimension, MAX_SITES))

    def __repr__(self):
        return "<%s side=%s dimension=%s wrap=%s>" % (self.__class__.__name__, self.side, self.dimension, self.wrap)

    def __eq__(self, other):
        return isinstance(other, Window) and (self.side, self.dimension, self.wrap) == (
            other.side, other.dimension, other.wrap)

    def __hash__(self):
        return hash((self.side, self.dimension, self.wrap))

    @classmethod
    def from_dict(cls, data: dict) -> "Window":
        return cls(data["side"], data["dimension"], data.get("wrap", True))

    def to_dict(self) -> dict:
        return {"side": self.side, "dimension": self.dimension, "wrap": self.wrap}

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.side,) * self.dimension

    @property
    def size(self) -> int:
        return self.side ** self.dimension

    @property
    def origin(self) -> int:
        """The array position of the lattice origin along each axis."""
        return self.side // 2

    @property
    def box(self) -> LatticeBox:
        """The window as a box in lattice coordinates."""
        return LatticeBox((-self.origin,) * self.dimension, self.side)

    def contains(self, point: Sequence[int]) -> bool:
        """Whether the point can be addressed. Always true on a torus."""
        if self.wrap:
            return True
        return all(0 <= p + self.origin < self.side for p in point)

    def contains_box(self, box: LatticeBox) -> bool:
        """Whether every site of ``box`` is a distinct site of the window."""
        if self.wrap:
            return max(box.shape) <= self.side
        return self.box.contains_box(box)

    def index(self, point: Sequence[int]) -> Tuple[int, ...]:
        """The array position of a lattice point.

        Raises
        ------
        UsageError
            The dimension is wrong, or the point lies outside a hard-boundary window.
        """
        if len(point) != self.dimension:
            raise UsageError("expected a {}-dimensional point, got {}".format(self.dimension, tuple(point)))
        position = tuple(int(p) + self.origin for p in point)
        if self.wrap:
            return tuple(p % self.side for p in position)
        if not all(0 <= p < self.side for p in position):
            raise UsageError("point {} lies outside the window".format(tuple(point)))
        return position

    def flat_index(self, point: Sequence[int]) -> int:
        return int(np.ravel_multi_index(self.index(point), self.shape))

    def point(self, index: Sequence[int]) -> Point:
        """The lattice point at an array position."""
        return tuple(int(i) - self.origin for i in index)

    def flat_point(self, flat: int) -> Point:
        return self.point(np.unravel_index(int(flat), self.shape))

    def reduce(self, point: Sequence[int]) -> Point:
        """The canonical representative of ``point`` in lattice coordinates."""
        return self.point(self.index(point))

    def coordinates(self) -> np.ndarray:
        """An ``(N, ..., N, d)`` array holding the lattice coordinates of every site."""
        axes = np.indices(self.shape) - self.origin
        return np.moveaxis(axes, 0, -1)

    def distance(self, a: Sequence[int], b: Sequence[int]) -> int:
        return l1_dist(a, b, self)

    def _axis_positions(self, corner: Sequence[int], shape: Sequence[int]) -> list:
        positions = []
        for c, s in zip(corner, shape):
            start = int(c) + self.origin
            idx = np.arange(start, start + int(s))
            if self.wrap:
                idx %= self.side
            elif start < 0 or start + s > self.side:
                raise UsageError("box at {} of shape {} does not fit the window".format(
                    tuple(corner), tuple(shape)))
            positions.append(idx)
        return positions

    def take(self, array: np.ndarray, corner: Sequence[int], shape: Sequence[int]) -> np.ndarray:
        """Extract the sub-array over ``corner + [0, shape)`` given in lattice coordinates.

        On a torus the sub-array wraps around. The result is always a copy.

        Raises
        ------
        UsageError
            The box leaves a hard-boundary window.
        """
        positions = self._axis_positions(corner, shape)
        return array[np.ix_(*positions)]

    def take_box(self, array: np.ndarray, box: LatticeBox) -> np.ndarray:
        return self.take(array, box.corner, box.shape)

    def box_mask(self, box: LatticeBox) -> np.ndarray:
        """A boolean array over the window marking the sites of ``box``."""
        mask = np.zeros(self.shape, dtype=bool)
        positions = self._axis_positions(box.corner, box.shape)
        mask[np.ix_(*positions)] = True
        return mask

    def box_flat_indices(self, box: LatticeBox) -> np.ndarray:
        """The flat array indices of the sites of ``box``, in lexicographic site order."""
        positions = self._axis_positions(box.corner, box.shape)
        grids = np.meshgrid(*positions, indexing="ij")
        return np.ravel_multi_index(tuple(g.ravel() for g in grids), self.shape)


def shifted(mask: np.ndarray, axis: int, step: int, wrap: bool) -> np.ndarray:
    """Returns ``out`` with ``out[x] = mask[x + step * e_axis]``.

    Positions whose neighbour falls outside a hard-boundary array read ``False``.
    """
    if wrap:
        return np.roll(mask, -step, axis=axis)
    out = np.zeros_like(mask)
    n = mask.shape[axis]
    src = [slice(None)] * mask.ndim
    dst = [slice(None)] * mask.ndim
    if step > 0:
        src[axis] = slice(step, n)
        dst[axis] = slice(0, n - step)
    else:
        src[axis] = slice(0, n + step)
        dst[axis] = slice(-step, n)
    out[tuple(dst)] = mask[tuple(src)]
    return out


def neighbour_count(mask: np.ndarray, wrap: bool, within: np.ndarray = None) -> np.ndarray:
    """For every site, the number of its ℓ1 neighbours that are set in ``within``.

    ``within`` defaults to ``mask``; the result is zero off ``mask``.
    """
    within = mask if within is None else within
    count = np.zeros(mask.shape, dtype=np.int64)
    for axis in range(mask.ndim):
        for step in (1, -1):
            count += shifted(within, axis, step, wrap)
    count[~mask] = 0
    return count


def edge_pairs(mask: np.ndarray, wrap: bool) -> Tuple[np.ndarray, np.ndarray]:
    """The nearest-neighbour edges between set sites, as flat index arrays ``(src, dst)``.

    Every undirected edge appears once, oriented along the positive axis direction.
    """
    flat = np.arange(mask.size).reshape(mask.shape)
    sources, targets = [], []
    for axis in range(mask.ndim):
        if mask.shape[axis] < 2:
            continue
        if wrap and mask.shape[axis] == 2:
            # both directions reach the same site, count the edge once
            both = mask & shifted(mask, axis, 1, False)
            sources.append(flat[both])
            targets.append(shifted(flat, axis, 1, False)[both])
            continue
        both = mask & shifted(mask, axis, 1, wrap)
        sources.append(flat[both])
        targets.append(shifted(flat, axis, 1, wrap)[both])
    if not sources:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    return np.concatenate(sources).astype(np.int64), np.concatenate(targets).astype(np.int64)
