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
import logging

from fractions import Fraction
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import ujson

from .clusters import ClusterLabeling, label_box, label_components, restrict_s_r
from .errors import ContractViolation, InvalidArgument, UndefinedLevel, UsageError
from .lattice import LatticeBox, Point, grid_points, linf_ball
from .samplers import Config, ModelSpec, replica_spec, sample
from .utils import binomial_stderr, cached_property

LOG = logging.getLogger(__name__)

#: scales beyond this value truncate a ladder.
MAX_SCALE = 1 << 62

# density threshold factors of the level-0 events
A_FRACTION = 0.75
B_FRACTION = 1.25


def compute_f_j(ratio: float, j: int, theta_sc: int = 1) -> float:
    """The density bound ``f_j(ratio) = Π_{i >= 0} (1 - 3 (ratio 2^{-i^θ})^j)``.

    The product stops once a factor exceeds ``1 - 1e-12``; it is ``0`` as soon as some
    factor is not positive.

    Raises
    ------
    UsageError
        ``ratio < 0`` or ``j < 2``.
    """
    if ratio < 0:
        raise UsageError("f_j needs a non-negative ratio, got {}".format(ratio))
    if j < 2:
        raise UsageError("f_j needs j >= 2, got {}".format(j))

    product = 1.0
    for i in itertools.count():
        exponent = i ** theta_sc
        x = ratio * 2.0 ** (-exponent) if exponent < 2000 else 0.0
        factor = 1.0 - 3.0 * x ** j
        if factor <= 0:
            return 0.0
        product *= factor
        if factor > 1.0 - 1e-12:
            break
    return product


class ScaleLadder:
    """The renormalization scales ``(l_k, r_k, L_k)`` for ``0 <= k <= k_max``.

    A canonical ladder follows ``l_k = l_0 4^{k^θ}``, ``r_k = r_0 2^{k^θ}`` and
    ``L_k = l_{k-1} L_{k-1}``. Ladders built with :meth:`from_levels` take explicit
    ``l_k`` and ``r_k`` and are marked non-canonical.

    Attributes
    ----------
    l: Tuple[int]
        The number of sub-boxes per side at each level.
    r: Tuple[int]
        The separation thresholds.
    L: Tuple[int]
        The box sides.
    theta_sc: int
        The scale exponent ``θ``.
    truncated: bool
        Whether the ladder stopped early because a scale exceeded :data:`MAX_SCALE`.
    canonical: bool
        Whether the scales follow the canonical recursion.
    fat_set_admissible: bool
        Whether ``4 r_k < l_k`` at every level, which the fat set construction requires.
    """

    __slots__ = ("l", "r", "L", "theta_sc", "truncated", "canonical", "fat_set_admissible")

    def __init__(self, l, r, L, theta_sc=1, *, truncated=False, canonical=True, fat_set_admissible=True):
        self.l = tuple(int(v) for v in l)
        self.r = tuple(int(v) for v in r)
        self.L = tuple(int(v) for v in L)
        self.theta_sc = theta_sc
        self.truncated = truncated
        self.canonical = canonical
        self.fat_set_admissible = fat_set_admissible

    def __repr__(self):
        return "<%s l0=%s r0=%s L0=%s k_max=%s canonical=%s>" % (
            self.__class__.__name__, self.l0, self.r0, self.L0, self.k_max, self.canonical)

    def __eq__(self, other):
        return isinstance(other, ScaleLadder) and self.to_dict() == other.to_dict()

    @property
    def l0(self) -> int:
        return self.l[0]

    @property
    def r0(self) -> int:
        return self.r[0]

    @property
    def L0(self) -> int:
        return self.L[0]

    @property
    def k_max(self) -> int:
        return len(self.L) - 1

    def ratio(self, k: int) -> float:
        return self.r[k] / self.l[k]

    @classmethod
    def from_levels(cls, l: Sequence[int], r: Sequence[int], L0: int, *, strict: bool = True) -> "ScaleLadder":
        """Build a non-canonical ladder from explicit per-level ``l_k`` and ``r_k``.

        Raises
        ------
        InvalidArgument
            The lists differ in length or are empty, a value is not positive, or
            ``4 r_k >= l_k`` at some level while ``strict`` is set.
        """
        if not l or len(l) != len(r):
            raise InvalidArgument("explicit ladders need equally long, non-empty l and r lists")
        if min(l) < 1 or min(r) < 1 or L0 < 1:
            raise InvalidArgument("ladder values must be positive")
        admissible = all(4 * rk < lk for lk, rk in zip(l, r))
        if not admissible:
            if strict:
                raise InvalidArgument("explicit ladder violates 4 r_k < l_k")
            LOG.warning("explicit ladder violates 4 r_k < l_k, the fat set cannot be built on it")

        L = [int(L0)]
        for lk in l[:-1]:
            L.append(L[-1] * int(lk))
        LOG.warning("using a non-canonical scale ladder l=%s r=%s", list(l), list(r))
        return cls(l, r, L, theta_sc=None, canonical=False, fat_set_admissible=admissible)

    def density_bound(self, j: int, levels: int = None) -> float:
        """The ``j``-dimensional density bound of a fat set built on this ladder.

        Canonical ladders use :func:`compute_f_j` at ``r_0 / l_0``. Non-canonical ones use
        the product over their first ``levels`` levels (all levels by default).
        """
        if self.canonical:
            return compute_f_j(self.ratio(0), j, self.theta_sc)
        levels = len(self.l) if levels is None else levels
        product = 1.0
        for k in range(levels):
            factor = 1.0 - 3.0 * self.ratio(k) ** j
            if factor <= 0:
                return 0.0
            product *= factor
        return product

    def uniqueness_condition(self, eta: float, dimension: int) -> bool:
        """Whether ``(1 - 1/L_0)^{-d} f_d(r_0/l_0)^{-1} - 1 < η / 4``."""
        f_d = self.density_bound(dimension)
        if f_d <= 0 or self.L0 <= 1:
            return False
        return (1.0 - 1.0 / self.L0) ** (-dimension) / f_d - 1.0 < eta / 4.0

    def to_dict(self) -> dict:
        return {
            "l": list(self.l),
            "r": list(self.r),
            "L": list(self.L),
            "theta_sc": self.theta_sc,
            "truncated": self.truncated,
            "canonical": self.canonical,
            "fat_set_admissible": self.fat_set_admissible,
        }


def build_scale_ladder(l0: int, r0: int, L0: int, theta_sc: int = 1, k_max: int = 3, *,
                       strict: bool = True) -> ScaleLadder:
    """Build the canonical ladder with exact integer arithmetic.

    Parameters
    ----------
    l0, r0, L0: int
        The level-0 scales, all at least 1.
    theta_sc: int
        The scale exponent ``θ``, at least 1.
    k_max: int
        The highest level to compute.
    strict: bool
        Whether ``4 r0 >= l0`` raises. Without it the ladder is built and marked
        ``fat_set_admissible=False``.

    Raises
    ------
    InvalidArgument
        A scale is not positive, or ``4 r0 >= l0`` while ``strict`` is set.
    """
    if min(l0, r0, L0) < 1:
        raise InvalidArgument("l0, r0 and L0 must be at least 1, got {}, {}, {}".format(l0, r0, L0))
    if theta_sc < 1 or int(theta_sc) != theta_sc:
        raise InvalidArgument("theta_sc must be a positive integer, got {}".format(theta_sc))
    if k_max < 0:
        raise InvalidArgument("k_max must be non-negative, got {}".format(k_max))

    admissible = 4 * r0 < l0
    if not admissible:
        if strict:
            raise InvalidArgument("the ladder needs 4 r0 < l0, got r0={} l0={}".format(r0, l0))
        LOG.warning("ladder with 4 r0 >= l0 (r0=%s, l0=%s): the fat set cannot be built on it", r0, l0)

    theta_sc = int(theta_sc)
    l, r, L = [int(l0)], [int(r0)], [int(L0)]
    truncated = False
    for k in range(1, k_max + 1):
        exponent = k ** theta_sc
        lk, rk, Lk = l0 * 4 ** exponent, r0 * 2 ** exponent, l[-1] * L[-1]
        if max(lk, Lk) > MAX_SCALE:
            LOG.warning("scale ladder truncated at level %s", k - 1)
            truncated = True
            break
        l.append(lk)
        r.append(rk)
        L.append(Lk)
    return ScaleLadder(l, r, L, theta_sc, truncated=truncated, fat_set_admissible=admissible)


def _require_grid(x: Sequence[int], spacing: int) -> None:
    if any(c % spacing for c in x):
        raise UsageError("box corner {} is not in {} Z^d".format(tuple(x), spacing))


class Level0Evaluator:
    """Evaluates the level-0 events of every ``L0``-box of a configuration.

    ``S_{L0}`` is computed once; per sub-box results are memoised since each ``L0``-box
    belongs to ``2^d`` of the ``2 L0``-boxes the events look at.
    """

    __slots__ = ("config", "L0", "eta", "s_l0", "_subboxes")

    def __init__(self, config: Config, L0: int, eta: float, *, labeling: ClusterLabeling = None):
        self.config = config
        self.L0 = int(L0)
        self.eta = float(eta)
        self.s_l0 = restrict_s_r(config, L0, labeling).occupancy
        self._subboxes: Dict[Point, tuple] = {}

    @property
    def threshold_a(self) -> float:
        return A_FRACTION * self.eta * self.L0 ** self.config.dimension

    @property
    def threshold_b(self) -> float:
        return B_FRACTION * self.eta * self.L0 ** self.config.dimension

    def _check_box(self, x: Sequence[int]) -> None:
        _require_grid(x, self.L0)
        box = LatticeBox(x, 2 * self.L0)
        if not self.config.window.contains_box(box):
            raise UsageError("box {!r} does not fit the window".format(box))

    def subbox(self, corner: Point) -> tuple:
        """Returns ``(special, volume, total)`` for the ``L0``-box at ``corner``.

        ``special`` marks the largest-volume component of ``S_{L0} ∩ box`` (ties to the
        first in row-major order), ``volume`` is its size and ``total`` is ``|S_{L0} ∩ box|``.
        """
        try:
            return self._subboxes[corner]
        except KeyError:
            pass
        sub = self.config.window.take(self.s_l0, corner, (self.L0,) * self.config.dimension)
        labels, count = label_box(sub)
        if count == 0:
            result = (np.zeros(sub.shape, dtype=bool), 0, 0)
        else:
            volumes = np.bincount(labels.ravel(), minlength=count + 1)[1:]
            winner = int(np.argmax(volumes)) + 1
            result = (labels == winner, int(volumes[winner - 1]), int(volumes.sum()))
        self._subboxes[corner] = result
        return result

    def qualifying(self, corner: Point) -> np.ndarray:
        """Mask of every component of ``S_{L0} ∩ box`` with at least ``(3/4) η L0^d`` sites."""
        sub = self.config.window.take(self.s_l0, corner, (self.L0,) * self.config.dimension)
        labels, count = label_box(sub)
        if count == 0:
            return np.zeros(sub.shape, dtype=bool)
        volumes = np.bincount(labels.ravel(), minlength=count + 1)
        volumes[0] = 0
        return (volumes >= self.threshold_a)[labels]

    def _corners(self, x: Sequence[int]) -> Iterator[Tuple[Tuple[int, ...], Point]]:
        for e in itertools.product((0, 1), repeat=self.config.dimension):
            yield e, tuple(c + self.L0 * ei for c, ei in zip(x, e))

    def event_A(self, x: Sequence[int]) -> bool:
        self._check_box(x)
        x = tuple(int(c) for c in x)
        L0 = self.L0
        chosen = np.zeros((2 * L0,) * self.config.dimension, dtype=bool)
        for e, corner in self._corners(x):
            special, volume, _ = self.subbox(corner)
            if volume < self.threshold_a:
                return False
            index = tuple(slice(ei * L0, (ei + 1) * L0) for ei in e)
            chosen[index] = special

        occupied = self.config.window.take(self.config.occupancy, x, chosen.shape)
        labels, _ = label_box(occupied)
        return len(np.unique(labels[chosen])) == 1

    def event_B(self, x: Sequence[int]) -> bool:
        self._check_box(x)
        x = tuple(int(c) for c in x)
        return all(self.subbox(corner)[2] <= self.threshold_b for _, corner in self._corners(x))

    def line_segments_met(self, x: Sequence[int]) -> bool:
        """Whether the special component of ``x + [0, L0)^d`` meets every central segment."""
        x = tuple(int(c) for c in x)
        special, volume, _ = self.subbox(x)
        if volume == 0:
            return False
        L0, d = self.L0, self.config.dimension
        centre, lo, hi = L0 // 2, L0 // 3, (2 * L0) // 3
        for axis in range(d):
            index = tuple(slice(lo, hi) if i == axis else centre for i in range(d))
            if not special[index].any():
                return False
        return True

    def event_A_line(self, x: Sequence[int]) -> bool:
        return self.event_A(x) and self.line_segments_met(x)

    def flags(self, x: Sequence[int], line: bool = False) -> Tuple[bool, bool]:
        """The pair ``(A, B)`` for the ``G_0`` box at ``x``."""
        a = self.event_A_line(x) if line else self.event_A(x)
        return a, self.event_B(x)


def event_A(config: Config, x: Sequence[int], L0: int, eta: float) -> bool:
    """Whether every ``L0`` sub-box of ``x + [0, 2 L0)^d`` holds a component of ``S_{L0}``
    with at least ``(3/4) η L0^d`` sites, all of them connected in ``S ∩ (x + [0, 2 L0)^d)``.

    Raises
    ------
    UsageError
        ``x`` is not in ``L0 Z^d`` or the box leaves the window.
    """
    return Level0Evaluator(config, L0, eta).event_A(x)


def event_B(config: Config, x: Sequence[int], L0: int, eta: float) -> bool:
    """Whether every ``L0`` sub-box of ``x + [0, 2 L0)^d`` has ``|S_{L0} ∩ box| <= (5/4) η L0^d``."""
    return Level0Evaluator(config, L0, eta).event_B(x)


def event_A_line(config: Config, x: Sequence[int], L0: int, eta: float) -> bool:
    """:func:`event_A`, and the special component of ``x + [0, L0)^d`` meets each segment
    ``(x + (⌊L0/2⌋, ..., ⌊L0/2⌋) + Z e_i) ∩ (x + [⌊L0/3⌋, ⌊2 L0/3⌋)^d)``."""
    return Level0Evaluator(config, L0, eta).event_A_line(x)


class GoodnessLevel:
    """The bad flags of every ``G_k``-box of one level.

    Box ``idx`` of the arrays has lattice corner ``(lo + idx) * side``.

    Attributes
    ----------
    k: int
        The level.
    side: int
        ``L_k``.
    lo: Tuple[int]
        The multiple of ``L_k`` of the first box along each axis.
    a_bad, b_bad: :class:`numpy.ndarray`
        Whether the A- and B-recursion fail for each box.
    witnesses: Dict[str, Dict[Point, Tuple[Point, Point]]]
        For each recursion name (``"A"``, ``"B"``) and each bad box at ``k >= 1``, the
        corners of two bad ``(k-1)``-boxes at ℓ∞ distance at least ``r_{k-1} L_{k-1}``.
    """

    __slots__ = ("k", "side", "lo", "a_bad", "b_bad", "witnesses", "_cs_bad")

    def __init__(self, k, side, lo, a_bad, b_bad, witnesses=None):
        self.k = k
        self.side = side
        self.lo = tuple(int(v) for v in lo)
        self.a_bad = np.asarray(a_bad, dtype=bool)
        self.b_bad = np.asarray(b_bad, dtype=bool)
        self.witnesses = witnesses or {"A": {}, "B": {}}

    def __repr__(self):
        return "<%s k=%s boxes=%s bad=%s>" % (self.__class__.__name__, self.k, self.a_bad.size, int(self.bad.sum()))

    @cached_property("_cs_bad")
    def bad(self) -> np.ndarray:
        return self.a_bad | self.b_bad

    @property
    def good(self) -> np.ndarray:
        return ~self.bad

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.a_bad.shape

    @property
    def empty(self) -> bool:
        return self.a_bad.size == 0

    def corner(self, index: Sequence[int]) -> Point:
        return tuple((lo + int(i)) * self.side for lo, i in zip(self.lo, index))

    def index(self, corner: Sequence[int]) -> Optional[Tuple[int, ...]]:
        """The array index of the box at ``corner``, ``None`` when it is not covered."""
        if any(c % self.side for c in corner):
            return None
        index = tuple(c // self.side - lo for c, lo in zip(corner, self.lo))
        if any(i < 0 or i >= n for i, n in zip(index, self.shape)):
            return None
        return index

    def covers(self, corner: Sequence[int]) -> bool:
        return self.index(corner) is not None

    def corners(self, mask: np.ndarray = None) -> List[Point]:
        mask = np.ones(self.shape, dtype=bool) if mask is None else mask
        return [self.corner(idx) for idx in np.argwhere(mask)]

    def bad_corners(self) -> List[Point]:
        return self.corners(self.bad)

    def witness(self, corner: Sequence[int]) -> Dict[str, Tuple[Point, Point]]:
        corner = tuple(corner)
        return {name: found[corner] for name, found in self.witnesses.items() if corner in found}


def _blocks(array: np.ndarray, start: Sequence[int], count: Sequence[int], size: int) -> np.ndarray:
    """View ``array`` cropped at ``start`` as ``(*count, *(size,) * d)`` blocks."""
    d = array.ndim
    crop = array[tuple(slice(s, s + n * size) for s, n in zip(start, count))]
    interleaved = crop.reshape(tuple(v for n in count for v in (n, size)))
    return interleaved.transpose(tuple(range(0, 2 * d, 2)) + tuple(range(1, 2 * d, 2)))


def _recurse_flags(blocks: np.ndarray, separation: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Per block, the largest axis extent of the set children.

    Returns ``(bad, axis, low, high)``: whether the extent reaches ``separation``, the
    first axis attaining the maximal extent, and the child coordinates along it.
    """
    d = blocks.ndim // 2
    size = blocks.shape[-1]
    block_axes = tuple(range(d, 2 * d))
    extents, lows, highs = [], [], []
    for axis in range(d):
        shape = [1] * (2 * d)
        shape[d + axis] = size
        coord = np.arange(size).reshape(shape)
        high = np.where(blocks, coord, -1).max(axis=block_axes)
        low = np.where(blocks, coord, size).min(axis=block_axes)
        extents.append(high - low)
        lows.append(low)
        highs.append(high)
    extents = np.stack(extents)
    axis = np.argmax(extents, axis=0)
    bad = extents.max(axis=0) >= separation
    low = np.take_along_axis(np.stack(lows), axis[None], 0)[0]
    high = np.take_along_axis(np.stack(highs), axis[None], 0)[0]
    return bad, axis, low, high


def _witness_pair(block: np.ndarray, axis: int, low: int, high: int) -> Tuple[Tuple[int, ...], Tuple[int, ...]]:
    members = np.argwhere(block)
    first = members[members[:, axis] == low][0]
    second = members[members[:, axis] == high][0]
    return tuple(int(v) for v in first), tuple(int(v) for v in second)


def _next_level(ladder: ScaleLadder, child: GoodnessLevel) -> GoodnessLevel:
    k = child.k + 1
    size, separation = ladder.l[child.k], ladder.r[child.k]
    lo = tuple(-(-c // size) for c in child.lo)
    hi = tuple((c + n) // size for c, n in zip(child.lo, child.shape))
    count = tuple(max(h - l, 0) for l, h in zip(lo, hi))
    if 0 in count:
        empty = np.zeros(count, dtype=bool)
        return GoodnessLevel(k, ladder.L[k], lo, empty, empty.copy())

    start = tuple(l * size - c for l, c in zip(lo, child.lo))
    witnesses = {}
    flags = []
    for name, child_bad in (("A", child.a_bad), ("B", child.b_bad)):
        blocks = _blocks(child_bad, start, count, size)
        bad, axis, low, high = _recurse_flags(blocks, separation)
        found = {}
        for parent in np.argwhere(bad):
            parent = tuple(int(v) for v in parent)
            x1, x2 = _witness_pair(blocks[parent], int(axis[parent]), int(low[parent]), int(high[parent]))
            base = tuple(s + p * size for s, p in zip(start, parent))
            found[tuple((lo_ + p) * ladder.L[k] for lo_, p in zip(lo, parent))] = (
                child.corner(tuple(b + v for b, v in zip(base, x1))),
                child.corner(tuple(b + v for b, v in zip(base, x2))),
            )
        witnesses[name] = found
        flags.append(bad)

    level = GoodnessLevel(k, ladder.L[k], lo, flags[0], flags[1], witnesses)
    LOG.debug("level %s: %s boxes, %s bad", k, level.a_bad.size, int(level.bad.sum()))
    return level


class GoodnessField:
    """The k-good classification of boxes at levels ``0 .. k_max``.

    Attributes
    ----------
    ladder: :class:`ScaleLadder`
        The scales used.
    levels: List[:class:`GoodnessLevel`]
        One entry per level, level ``0`` first.
    eta: Optional[float]
        The density the level-0 events were evaluated with.
    line_variant: bool
        Whether level 0 used :func:`event_A_line`.
    """

    __slots__ = ("ladder", "levels", "eta", "line_variant")

    def __init__(self, ladder, levels, eta=None, line_variant=False):
        self.ladder = ladder
        self.levels = levels
        self.eta = eta
        self.line_variant = line_variant

    def __repr__(self):
        return "<%s k_max=%s bad=%s>" % (
            self.__class__.__name__, self.k_max, [int(level.bad.sum()) for level in self.levels])

    @property
    def k_max(self) -> int:
        return len(self.levels) - 1

    @property
    def dimension(self) -> int:
        return len(self.levels[0].lo)

    def level(self, k: int) -> GoodnessLevel:
        if not 0 <= k <= self.k_max:
            raise UsageError("level {} not classified (k_max = {})".format(k, self.k_max))
        return self.levels[k]

    def is_good(self, k: int, corner: Sequence[int]) -> bool:
        """Whether the ``G_k`` box at ``corner`` is k-good.

        Raises
        ------
        UsageError
            The box is not covered by the field.
        """
        level = self.level(k)
        index = level.index(corner)
        if index is None:
            raise UsageError("box {} of level {} is not covered by the goodness field".format(tuple(corner), k))
        return not bool(level.bad[index])

    def bad_boxes(self, k: int) -> List[Point]:
        return self.level(k).bad_corners()

    @classmethod
    def from_level0(cls, ladder: ScaleLadder, lo: Sequence[int], a_bad, b_bad, k_max: int = None,
                    *, eta: float = None, line_variant: bool = False) -> "GoodnessField":
        """Run the recursion from explicit level-0 flags.

        Parameters
        ----------
        ladder: :class:`ScaleLadder`
            The scales.
        lo: Sequence[int]
            The multiple of ``L0`` of the first level-0 box along each axis.
        a_bad, b_bad: array-like
            Boolean arrays marking level-0 boxes where event A (resp. B) fails.
        k_max: Optional[int]
            The highest level, defaults to ``ladder.k_max``.
        """
        k_max = ladder.k_max if k_max is None else k_max
        if k_max > ladder.k_max:
            raise UsageError("k_max {} exceeds the ladder's {}".format(k_max, ladder.k_max))
        a_bad = np.asarray(a_bad, dtype=bool)
        b_bad = np.asarray(b_bad, dtype=bool)
        if a_bad.shape != b_bad.shape or len(lo) != a_bad.ndim:
            raise UsageError("level-0 flags and lo disagree in shape")

        levels = [GoodnessLevel(0, ladder.L0, lo, a_bad, b_bad)]
        for _ in range(k_max):
            if levels[-1].empty:
                break
            levels.append(_next_level(ladder, levels[-1]))
        if levels[-1].empty or len(levels) <= k_max:
            raise UsageError("the level-0 boxes do not cover a single L_{} box".format(k_max))
        return cls(ladder, levels, eta, line_variant)

    def to_records(self) -> Iterator[dict]:
        for level in self.levels:
            for index in np.ndindex(*level.shape):
                corner = level.corner(index)
                record = {
                    "level": level.k,
                    "corner": list(corner),
                    "good": not bool(level.bad[index]),
                    "a_bad": bool(level.a_bad[index]),
                    "b_bad": bool(level.b_bad[index]),
                }
                witness = level.witness(corner)
                if witness:
                    record["witness"] = {name: [list(x1), list(x2)] for name, (x1, x2) in witness.items()}
                yield record


def _level0_range(config: Config, L0: int, region: LatticeBox = None) -> Tuple[Tuple[int, ...], Tuple[int, ...]]:
    window = config.window
    first, last = window.box.corner[0], window.box.upper[0]
    if window.wrap:
        if window.side % L0:
            LOG.warning("window side %s is not a multiple of L0 = %s, boxes overlap across the seam",
                        window.side, L0)
        lo, hi = -(-first // L0), -(-last // L0)
    else:
        lo, hi = -(-first // L0), (last - 2 * L0) // L0 + 1
    los, his = [lo] * config.dimension, [hi] * config.dimension
    if region is not None:
        for i, (c, u) in enumerate(zip(region.corner, region.upper)):
            los[i] = max(los[i], -(-c // L0))
            his[i] = min(his[i], -(-u // L0))
    return tuple(los), tuple(max(h - l, 0) for l, h in zip(los, his))


def classify_good(config: Config, ladder: ScaleLadder, eta: float, k_max: int = None,
                  use_line_variant: bool = False, *, region: LatticeBox = None,
                  labeling: ClusterLabeling = None) -> GoodnessField:
    """Classify every box of levels ``0 .. k_max`` as good or bad.

    Level 0 evaluates :func:`event_A` (or :func:`event_A_line`) and :func:`event_B` for
    each ``G_0`` box whose ``2 L0``-box fits the window. A level-``k`` box is A-bad when two
    of its A-bad children lie at ℓ∞ distance at least ``r_{k-1} L_{k-1}``, likewise for B,
    and bad when either recursion fails.

    Parameters
    ----------
    region: Optional[:class:`LatticeBox`]
        Only classify boxes with corners in this region.

    Raises
    ------
    UsageError
        The window (or region) does not cover a single ``L_{k_max}`` box.
    """
    k_max = ladder.k_max if k_max is None else k_max
    L0 = ladder.L0
    lo, count = _level0_range(config, L0, region)
    if 0 in count:
        raise UsageError("the window does not hold a single 2 L0 box")

    evaluator = Level0Evaluator(config, L0, eta, labeling=labeling)
    a_bad = np.zeros(count, dtype=bool)
    b_bad = np.zeros(count, dtype=bool)
    for index in np.ndindex(*count):
        corner = tuple((l + i) * L0 for l, i in zip(lo, index))
        a, b = evaluator.flags(corner, use_line_variant)
        a_bad[index] = not a
        b_bad[index] = not b
    LOG.debug("level 0: %s boxes, %s A-bad, %s B-bad", a_bad.size, int(a_bad.sum()), int(b_bad.sum()))

    return GoodnessField.from_level0(ladder, lo, a_bad, b_bad, k_max, eta=eta, line_variant=use_line_variant)


class BadProbability:
    """A Monte-Carlo estimate of ``P[0 is k-bad]``.

    Attributes
    ----------
    value, stderr: float
        The estimate and its binomial standard error.
    replicas: int
    k: int
    envelope: float
        The reference decay ``2 * 2^{-2^k}``; it is reported, not enforced.
    """

    __slots__ = ("value", "stderr", "replicas", "k", "envelope")

    def __init__(self, value, stderr, replicas, k):
        self.value = value
        self.stderr = stderr
        self.replicas = replicas
        self.k = k
        self.envelope = 2.0 * 2.0 ** (-(2 ** k))

    def __repr__(self):
        return "<%s k=%s value=%.4f stderr=%.4f envelope=%.4g>" % (
            self.__class__.__name__, self.k, self.value, self.stderr, self.envelope)

    @property
    def below_envelope(self) -> bool:
        return self.value <= self.envelope

    def to_dict(self) -> dict:
        return {"k": self.k, "value": self.value, "stderr": self.stderr,
                "replicas": self.replicas, "envelope": self.envelope}


def estimate_bad_probability(spec: ModelSpec, ladder: ScaleLadder, eta: float, k: int, replicas: int,
                             *, use_line_variant: bool = False) -> BadProbability:
    """Estimate ``P[0 is k-bad]`` over independent replicas of ``spec``.

    Raises
    ------
    UsageError
        ``replicas < 1`` or ``k`` exceeds the ladder.
    """
    if replicas < 1:
        raise UsageError("at least one replica is needed, got {}".format(replicas))
    if k > ladder.k_max:
        raise UsageError("level {} exceeds the ladder's k_max {}".format(k, ladder.k_max))

    origin = (0,) * spec.dimension
    region = LatticeBox(origin, ladder.L[k])
    bad = 0
    for i in range(replicas):
        config = sample(replica_spec(spec, i))
        field = classify_good(config, ladder, eta, k, use_line_variant, region=region)
        bad += not field.is_good(k, origin)

    result = BadProbability(bad / replicas, binomial_stderr(bad, replicas), replicas, k)
    LOG.info("P[0 is %s-bad] = %.4f (envelope %.4g)", k, result.value, result.envelope)
    return result


class Levels:
    """The renormalization levels ``s`` and ``r = ⌊s/2⌋`` for a radius ``R``."""

    __slots__ = ("s", "r")

    def __init__(self, s: int, r: int = None):
        self.s = int(s)
        self.r = self.s // 2 if r is None else int(r)

    def __repr__(self):
        return "<%s s=%s r=%s>" % (self.__class__.__name__, self.s, self.r)

    def __eq__(self, other):
        if isinstance(other, Levels):
            return (self.s, self.r) == (other.s, other.r)
        return (self.s, self.r) == tuple(other)

    def __iter__(self):
        return iter((self.s, self.r))


def _level_fits(L: int, R: int, exponent: int, theta: Fraction) -> bool:
    return L ** (exponent * theta.denominator) <= R ** theta.numerator


def compute_levels(ladder: ScaleLadder, R: int, theta_iso: float, dimension: int) -> Levels:
    """Compute ``s = max{s' : L_{s'}^{3 d^2} <= R^{θ_iso}}`` and ``r = ⌊s/2⌋``.

    ``θ_iso`` is compared as a rational (denominator at most 1000), so the comparison is
    exact integer arithmetic.

    Raises
    ------
    UndefinedLevel
        ``L_0^{3 d^2} > R^{θ_iso}``.
    ContractViolation
        ``L_r^2 > L_0 L_s``.
    """
    if R < 1 or theta_iso <= 0:
        raise InvalidArgument("compute_levels needs R >= 1 and theta_iso > 0")
    theta = Fraction(theta_iso).limit_denominator(1000)
    exponent = 3 * dimension ** 2
    if not _level_fits(ladder.L0, R, exponent, theta):
        raise UndefinedLevel("R = {} is below L0^(3 d^2 / theta_iso) for L0 = {}".format(R, ladder.L0))

    s = 0
    while s < ladder.k_max and _level_fits(ladder.L[s + 1], R, exponent, theta):
        s += 1
    if s == ladder.k_max and _level_fits(ladder.l[s] * ladder.L[s], R, exponent, theta):
        LOG.warning("level s is capped at the ladder's k_max = %s", s)

    levels = Levels(s)
    if ladder.L[levels.r] ** 2 > ladder.L0 * ladder.L[s]:
        raise ContractViolation("L_r^2 > L_0 L_s for r={}, s={}".format(levels.r, s))
    LOG.debug("levels for R=%s: s=%s r=%s", R, levels.s, levels.r)
    return levels


class HFailure:
    """One failing box of event H.

    Attributes
    ----------
    clause: str
        ``"a"`` for an r-bad box, ``"b"`` for a disconnected ``L_s``-neighbourhood.
    corner: Tuple[int]
        The failing box (clause a) or grid point (clause b).
    detail: dict
        The witness pairs (clause a) or the number of distinct clusters found (clause b).
    """

    __slots__ = ("clause", "corner", "detail")

    def __init__(self, clause, corner, detail):
        self.clause = clause
        self.corner = tuple(corner)
        self.detail = detail

    def __repr__(self):
        return "<%s clause=%s corner=%s>" % (self.__class__.__name__, self.clause, self.corner)

    def to_dict(self) -> dict:
        detail = self.detail
        if isinstance(detail, dict):
            detail = {k: [list(x) for x in v] for k, v in detail.items()}
        return {"clause": self.clause, "corner": list(self.corner), "detail": detail}


class EventH:
    """Outcome of :func:`check_event_H`.

    Attributes
    ----------
    holds: bool
    failures: List[:class:`HFailure`]
    levels: :class:`Levels`
    boxes_checked: int
    goodness: :class:`GoodnessField`
        The classification clause (a) was read from.
    """

    __slots__ = ("holds", "failures", "levels", "boxes_checked", "goodness")

    def __init__(self, failures, levels, boxes_checked, goodness):
        self.failures = failures
        self.holds = not failures
        self.levels = levels
        self.boxes_checked = boxes_checked
        self.goodness = goodness

    def __repr__(self):
        return "<%s holds=%s failures=%s>" % (self.__class__.__name__, self.holds, len(self.failures))

    def __bool__(self):
        return self.holds


def check_event_H(config: Config, ladder: ScaleLadder, R: int, eta: float, *, theta_iso: float = None,
                  levels: Levels = None, goodness: GoodnessField = None,
                  labeling: ClusterLabeling = None) -> EventH:
    """Evaluate event H.

    Clause (a): every ``z ∈ G_r ∩ B(0, 3R)`` is r-good. Clause (b): for every ``z`` of the
    ``L_s`` grid in ``B(0, 2R)``, all sites of ``S_{L_s} ∩ (z + [-2 L_s, 2 L_s)^d)`` are
    connected in ``S ∩ (z + [-4 L_s, 4 L_s)^d)``.

    Either ``levels`` or ``theta_iso`` must be given.

    Raises
    ------
    UsageError
        No levels, or the window does not hold the boxes the clauses read.
    """
    if levels is None:
        if theta_iso is None:
            raise UsageError("event H needs either levels or theta_iso")
        levels = compute_levels(ladder, R, theta_iso, config.dimension)
    s, r = levels.s, levels.r
    L_r, L_s, L0 = ladder.L[r], ladder.L[s], ladder.L0
    d = config.dimension
    window = config.window
    origin = (0,) * d

    reach = linf_ball(origin, 3 * R + L_r + L0)
    if not window.contains_box(reach):
        raise UsageError("event H for R={} needs the window to contain {!r}".format(R, reach))

    failures: List[HFailure] = []
    top = (3 * R) // L_r * L_r
    if goodness is None:
        region = LatticeBox((-top,) * d, 2 * top + L_r)
        goodness = classify_good(config, ladder, eta, r, region=region, labeling=labeling)

    checked = 0
    level = goodness.level(r)
    for z in grid_points(linf_ball(origin, 3 * R), L_r):
        checked += 1
        if not goodness.is_good(r, z):
            failures.append(HFailure("a", z, level.witness(z)))

    labeling = labeling or label_components(config)
    s_ls = restrict_s_r(config, L_s, labeling).occupancy
    for z in grid_points(linf_ball(origin, 2 * R), L_s):
        checked += 1
        outer = LatticeBox(tuple(c - 4 * L_s for c in z), 8 * L_s)
        if not window.contains_box(outer):
            raise UsageError("event H clause (b) box {!r} leaves the window".format(outer))
        local, _ = label_box(window.take_box(config.occupancy, outer))
        inner = tuple(slice(2 * L_s, 6 * L_s) for _ in range(d))
        wanted = window.take_box(s_ls, outer)[inner]
        found = np.unique(local[inner][wanted])
        if len(found) > 1:
            failures.append(HFailure("b", z, int(len(found))))

    result = EventH(failures, levels, checked, goodness)
    if failures:
        LOG.info("event H fails for R=%s: %s failing boxes", R, len(failures))
    return result


def save_goodness(field: GoodnessField, path: Union[str, Path]) -> Path:
    """Write one JSON line per box: level, corner, flags and witnesses of bad boxes."""
    path = Path(path)
    with path.open("w") as fp:
        fp.write(ujson.dumps({"ladder": field.ladder.to_dict(), "eta": field.eta,
                              "line_variant": field.line_variant}, sort_keys=True) + "\n")
        for record in field.to_records():
            fp.write(ujson.dumps(record, sort_keys=True) + "\n")
    return path
