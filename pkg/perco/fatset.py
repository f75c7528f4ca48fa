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

from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import ujson

from .clusters import ClusterLabeling, label_box
from .enums import Stream
from .errors import ContractViolation, InvalidArgument, UsageError
from .lattice import LatticeBox, Point, grid_points, linf_ball
from .renormalization import (
    GoodnessField,
    GoodnessLevel,
    Level0Evaluator,
    Levels,
    ScaleLadder,
    compute_levels,
)
from .samplers import Config
from .utils import cached_property, stream_generator

LOG = logging.getLogger(__name__)

#: the most boxes one level-box may lose to perforation.
MAX_DELETIONS = 3

# slack for the floating point density comparisons
DENSITY_SLACK = 1e-9


def _connected(mask: np.ndarray) -> bool:
    """Whether the set sites of ``mask`` form one non-empty nearest-neighbour component."""
    if not mask.any():
        return False
    return label_box(mask)[1] == 1


def _slices_connected(keep: np.ndarray) -> bool:
    """Whether ``keep`` and each of its axis-parallel 2-d slices are connected."""
    if not _connected(keep):
        return False
    d = keep.ndim
    if d == 2:
        return True
    for axes in itertools.combinations(range(d), 2):
        fixed = [range(n) if i not in axes else (slice(None),) for i, n in enumerate(keep.shape)]
        for index in itertools.product(*fixed):
            if not _connected(keep[index]):
                return False
    return True


class Deletion:
    """One box removed while perforating a level-box.

    Attributes
    ----------
    level: int
        The level ``i`` of the perforated box.
    parent: Tuple[int]
        The corner of the perforated ``L_i``-box.
    role: str
        ``"a"``, ``"b"`` or ``"c"``.
    corner: Tuple[int]
        The corner of the deleted box.
    side: int
        Its side ``r_{i-1} L_{i-1}``.
    """

    __slots__ = ("level", "parent", "role", "corner", "side")

    def __init__(self, level, parent, role, corner, side):
        self.level = int(level)
        self.parent = tuple(int(v) for v in parent)
        self.role = role
        self.corner = tuple(int(v) for v in corner)
        self.side = int(side)

    def __repr__(self):
        return "<%s level=%s parent=%s role=%s corner=%s side=%s>" % (
            self.__class__.__name__, self.level, self.parent, self.role, self.corner, self.side)

    def __eq__(self, other):
        return isinstance(other, Deletion) and self.to_dict() == other.to_dict()

    @property
    def box(self) -> LatticeBox:
        return LatticeBox(self.corner, self.side)

    def to_dict(self) -> dict:
        return {"level": self.level, "parent": list(self.parent), "role": self.role,
                "corner": list(self.corner), "side": self.side}


class FatSet:
    """The perforated set ``G`` of 0-good ``L0``-boxes.

    Attributes
    ----------
    ladder: :class:`ScaleLadder`
    R: int
        The radius it was built for.
    levels: :class:`Levels`
        The levels ``s`` and ``r``.
    lo: Tuple[int]
        The multiple of ``L0`` of the first entry of :attr:`members` along each axis.
    members: :class:`numpy.ndarray`
        Boolean membership over a grid of ``G_0`` boxes.
    deletions: List[:class:`Deletion`]
        The deletion log.
    top: List[Tuple[int]]
        The corners of the level-``s`` boxes the construction started from.
    goodness: Optional[:class:`GoodnessField`]
        The classification the set was built from.
    """

    __slots__ = ("ladder", "R", "levels", "lo", "members", "deletions", "top", "goodness", "_cs_count")

    def __init__(self, ladder, R, levels, lo, members, deletions=(), top=(), goodness=None):
        self.ladder = ladder
        self.R = R
        self.levels = levels
        self.lo = tuple(int(v) for v in lo)
        self.members = np.asarray(members, dtype=bool)
        self.deletions = list(deletions)
        self.top = [tuple(z) for z in top]
        self.goodness = goodness

    def __repr__(self):
        return "<%s R=%s s=%s r=%s members=%s deletions=%s>" % (
            self.__class__.__name__, self.R, self.levels.s, self.levels.r, len(self), len(self.deletions))

    @cached_property("_cs_count")
    def _count(self) -> int:
        return int(self.members.sum())

    def __len__(self):
        return self._count

    def __contains__(self, corner):
        return self.is_member(corner)

    def __iter__(self) -> Iterator[Point]:
        return iter(self.corners())

    @property
    def L0(self) -> int:
        return self.ladder.L0

    @property
    def dimension(self) -> int:
        return self.members.ndim

    def _index(self, corner: Sequence[int]) -> Optional[Tuple[int, ...]]:
        if any(c % self.L0 for c in corner):
            return None
        index = tuple(c // self.L0 - lo for c, lo in zip(corner, self.lo))
        if any(i < 0 or i >= n for i, n in zip(index, self.members.shape)):
            return None
        return index

    def is_member(self, corner: Sequence[int]) -> bool:
        index = self._index(corner)
        return index is not None and bool(self.members[index])

    def corners(self) -> List[Point]:
        return [tuple((lo + int(i)) * self.L0 for lo, i in zip(self.lo, idx)) for idx in np.argwhere(self.members)]

    def block(self, corner: Sequence[int], side: int) -> np.ndarray:
        """Membership over the ``G_0`` boxes of ``corner + [0, side)^d``, ``False`` off the grid."""
        L0 = self.L0
        if side % L0 or any(c % L0 for c in corner):
            raise UsageError("block at {} of side {} is not aligned to L0 = {}".format(tuple(corner), side, L0))
        n = side // L0
        out = np.zeros((n,) * self.dimension, dtype=bool)
        start = [c // L0 - lo for c, lo in zip(corner, self.lo)]
        src, dst = [], []
        for s, size in zip(start, self.members.shape):
            a, b = max(s, 0), min(s + n, size)
            if a >= b:
                return out
            src.append(slice(a, b))
            dst.append(slice(a - s, b - s))
        out[tuple(dst)] = self.members[tuple(src)]
        return out

    def to_records(self) -> Iterator[dict]:
        yield {
            "R": self.R,
            "s": self.levels.s,
            "r": self.levels.r,
            "L0": self.L0,
            "members": len(self),
            "ladder": self.ladder.to_dict(),
        }
        for deletion in self.deletions:
            yield deletion.to_dict()
        for corner in self.corners():
            yield {"member": list(corner)}


def _cover(children: np.ndarray, size: int, separation: int) -> Tuple[int, ...]:
    """The corner of a ``separation``-box inside ``[0, size)^d`` covering every row of ``children``."""
    low = children.min(axis=0)
    high = children.max(axis=0)
    if (high - low >= separation).any():
        raise ContractViolation("bad sub-boxes span {} >= {} in a good box".format(
            tuple(int(v) for v in high - low), separation))
    return tuple(int(v) for v in np.minimum(low, size - separation))


def _box_slice(corner: Sequence[int], side: int) -> tuple:
    return tuple(slice(c, c + side) for c in corner)


def _inside(points: np.ndarray, corner: Sequence[int], side: int) -> np.ndarray:
    corner = np.asarray(corner)
    return ((points >= corner) & (points < corner + side)).all(axis=1)


def _perforate(a_block: np.ndarray, b_block: np.ndarray, separation: int) -> List[Tuple[str, Tuple[int, ...]]]:
    """Choose the boxes removed from one good level-box.

    Box a covers the A-bad children (the B-bad ones when none is A-bad), box b covers
    the B-bad children left outside a. When the remainder or one of its 2-d slices is
    disconnected, box c is the lexicographically first corner within ℓ∞ distance
    ``separation`` of a or b that restores connectivity.
    """
    size = a_block.shape[0]
    d = a_block.ndim
    groups = [np.argwhere(a_block), np.argwhere(b_block)]
    groups = [g for g in groups if len(g)]
    if not groups:
        return []

    chosen = [("a", _cover(groups[0], size, separation))]
    if len(groups) > 1:
        rest = groups[1][~_inside(groups[1], chosen[0][1], separation)]
        if len(rest):
            chosen.append(("b", _cover(rest, size, separation)))

    keep = np.ones((size,) * d, dtype=bool)
    for _, corner in chosen:
        keep[_box_slice(corner, separation)] = False
    if _slices_connected(keep):
        return chosen

    candidates = set()
    for _, corner in chosen:
        ranges = [range(max(c - separation, 0), min(c + separation, size - separation) + 1) for c in corner]
        candidates.update(itertools.product(*ranges))
    for corner in sorted(candidates):
        trial = keep.copy()
        trial[_box_slice(corner, separation)] = False
        if _slices_connected(trial):
            chosen.append(("c", corner))
            return chosen
    raise ContractViolation("no connectivity-restoring box found near {}".format([c for _, c in chosen]))


def _children(parent: GoodnessLevel, child: GoodnessLevel, index: Sequence[int], size: int) -> tuple:
    base = tuple((lo + int(p)) * size - clo for lo, p, clo in zip(parent.lo, index, child.lo))
    return base, _box_slice(base, size)


def build_fat_set(goodness: GoodnessField, ladder: ScaleLadder, R: int, *, levels: Levels = None,
                  theta_iso: float = None) -> FatSet:
    """Build the fat set ``G`` by multi-level perforation.

    The construction starts from ``G_s ∩ B(0, 2R - 2 L_s)``. Above level ``r`` every
    child of a member is kept. For levels ``r`` down to ``1`` each member loses at most
    three boxes of side ``r_{i-1} L_{i-1}``, see :func:`_perforate`.

    Parameters
    ----------
    goodness: :class:`GoodnessField`
        The classification, covering every box the construction visits.
    ladder: :class:`ScaleLadder`
        The scales, usually ``goodness.ladder``.
    R: int
        The radius.
    levels: Optional[:class:`Levels`]
        Explicit levels. Computed with :func:`compute_levels` from ``theta_iso`` otherwise.

    Raises
    ------
    InvalidArgument
        The ladder violates ``4 r_k < l_k``.
    UsageError
        Neither ``levels`` nor ``theta_iso`` given, or ``s`` exceeds the classified levels.
    ContractViolation
        A level-``r`` box below the top set is not r-good, or no perforation keeps the
        box connected.
    """
    if not ladder.fat_set_admissible:
        raise InvalidArgument("the fat set cannot be built on a ladder violating 4 r_k < l_k")
    if levels is None:
        if theta_iso is None:
            raise UsageError("build_fat_set needs either levels or theta_iso")
        levels = compute_levels(ladder, R, theta_iso, goodness.dimension)
    s, r = levels.s, levels.r
    if r > s:
        raise UsageError("level r = {} exceeds s = {}".format(r, s))
    if s > goodness.k_max:
        raise UsageError("level s = {} exceeds the classified k_max = {}".format(s, goodness.k_max))

    d = goodness.dimension
    L_s = ladder.L[s]
    top_level = goodness.level(s)
    reach = 2 * R - 2 * L_s
    top = list(grid_points(linf_ball((0,) * d, reach), L_s)) if reach >= 0 else []
    if not top:
        LOG.warning("the fat set for R=%s is empty: 2R - 2 L_s < 0", R)

    current = np.zeros(top_level.shape, dtype=bool)
    for z in top:
        index = top_level.index(z)
        if index is None:
            raise UsageError("top box {} of level {} is not classified".format(z, s))
        current[index] = True

    deletions: List[Deletion] = []
    for i in range(s, 0, -1):
        parent, child = goodness.level(i), goodness.level(i - 1)
        if i == r and (current & parent.bad).any():
            failing = parent.corners(current & parent.bad)
            raise ContractViolation("boxes {} of level {} are not r-good".format(failing[:5], r))
        size, separation = ladder.l[i - 1], ladder.r[i - 1]
        side = separation * ladder.L[i - 1]
        below = np.zeros(child.shape, dtype=bool)
        for index in np.argwhere(current):
            base, block = _children(parent, child, index, size)
            below[block] = True
            if i > r:
                continue
            corner = parent.corner(index)
            removed = _perforate(child.a_bad[block], child.b_bad[block], separation)
            for role, local in removed:
                below[_box_slice([b + v for b, v in zip(base, local)], separation)] = False
                deletions.append(Deletion(i, corner, role,
                                          child.corner([b + v for b, v in zip(base, local)]), side))
        current = below
        LOG.debug("fat set level %s: %s boxes", i - 1, int(current.sum()))

    level0 = goodness.level(0)
    if r == 0 and (current & level0.bad).any():
        raise ContractViolation("boxes of level 0 below the top set are not 0-good")

    fat = FatSet(ladder, R, levels, level0.lo, current, deletions, top, goodness)
    LOG.info("fat set for R=%s: %s boxes, %s deletions", R, len(fat), len(deletions))
    return fat


class FatSetReport:
    """Outcome of :func:`verify_fat_set`.

    Attributes
    ----------
    passed: bool
        Whether no violation was found.
    violations: List[dict]
        One entry per violation with keys ``check``, ``corner`` and ``detail``.
    min_density: float
        The smallest ``|G ∩ box| / (L_s/L0)^d`` over the ``L_s``-boxes checked.
    min_slice_density: Dict[int, float]
        Per slice dimension ``j``, the smallest ``|slice ∩ G| / (3 L_s/L0)^j``.
    bounds: Dict[int, float]
        The reference ``f_j`` per dimension.
    boxes_checked: int
    slices_checked: int
    """

    __slots__ = ("violations", "min_density", "min_slice_density", "bounds", "boxes_checked", "slices_checked")

    def __init__(self):
        self.violations: List[dict] = []
        self.min_density = 1.0
        self.min_slice_density: Dict[int, float] = {}
        self.bounds: Dict[int, float] = {}
        self.boxes_checked = 0
        self.slices_checked = 0

    def __repr__(self):
        return "<%s passed=%s violations=%s min_density=%.4f>" % (
            self.__class__.__name__, self.passed, len(self.violations), self.min_density)

    def __bool__(self):
        return self.passed

    @property
    def passed(self) -> bool:
        return not self.violations

    def flag(self, check: str, corner, detail) -> None:
        self.violations.append({"check": check, "corner": list(corner) if corner is not None else None,
                                "detail": detail})

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "violations": self.violations,
            "min_density": self.min_density,
            "min_slice_density": {str(j): v for j, v in self.min_slice_density.items()},
            "bounds": {str(j): v for j, v in self.bounds.items()},
            "boxes_checked": self.boxes_checked,
            "slices_checked": self.slices_checked,
        }


def fat_set_bound(ladder: ScaleLadder, j: int, levels: Levels) -> float:
    """The ``j``-dimensional density bound a fat set built with ``levels`` must meet."""
    if ladder.canonical:
        return ladder.density_bound(j)
    return ladder.density_bound(j, levels=levels.r)


def verify_fat_set(fat: FatSet, ladder: ScaleLadder = None, *, slice_sample: int = 64,
                   seed: int = 0) -> FatSetReport:
    """Check a fat set against its guarantees.

    * every member is 0-good (when the goodness field is attached);
    * for each top ``L_s``-box, ``G ∩ box`` is connected with at least
      ``(L_s/L0)^d f_d`` members;
    * for each ``x`` of ``G_s ∩ B(0, 2R - 3 L_s)`` and each ``2 <= j <= d``, the
      ``j``-dimensional slices of ``G ∩ (x + [-L_s, 2 L_s)^d)`` are connected with at least
      ``(3 L_s/L0)^j f_j`` members; at most ``slice_sample`` slices per direction set are
      checked, chosen by the ``SLICES`` stream of ``seed``;
    * the deletion log removes at most three boxes per level-box.
    """
    ladder = ladder or fat.ladder
    report = FatSetReport()
    d = fat.dimension
    s = fat.levels.s
    L0, L_s = ladder.L0, ladder.L[s]
    m = L_s // L0
    for j in range(2, d + 1):
        report.bounds[j] = fat_set_bound(ladder, j, fat.levels)
        report.min_slice_density[j] = 1.0

    if fat.goodness is not None:
        level0 = fat.goodness.level(0)
        if level0.lo == fat.lo and level0.shape == fat.members.shape:
            for corner in level0.corners(fat.members & level0.bad):
                report.flag("member-good", corner, "member box is 0-bad")
        else:
            for corner in fat.corners():
                if not fat.goodness.is_good(0, corner):
                    report.flag("member-good", corner, "member box is 0-bad")

    volume = float(m ** d)
    for z in fat.top:
        report.boxes_checked += 1
        block = fat.block(z, L_s)
        count = int(block.sum())
        report.min_density = min(report.min_density, count / volume)
        if not _connected(block):
            report.flag("box-connected", z, "members of the L_s box are not connected")
        if count + DENSITY_SLACK < volume * report.bounds[d]:
            report.flag("box-density", z, count)

    rng = stream_generator(seed, Stream.SLICES)
    reach = 2 * fat.R - 3 * L_s
    centres = list(grid_points(linf_ball((0,) * d, reach), L_s)) if reach >= 0 else []
    for x in centres:
        block = fat.block(tuple(c - L_s for c in x), 3 * L_s)
        for j in range(2, d + 1):
            bound = (3 * m) ** j * report.bounds[j]
            for axes in itertools.combinations(range(d), j):
                fixed_axes = [i for i in range(d) if i not in axes]
                total = (3 * m) ** len(fixed_axes)
                picks = range(total)
                if total > slice_sample:
                    picks = np.sort(rng.choice(total, size=slice_sample, replace=False))
                for pick in picks:
                    anchor = np.unravel_index(int(pick), (3 * m,) * len(fixed_axes)) if fixed_axes else ()
                    index = [slice(None)] * d
                    for axis, value in zip(fixed_axes, anchor):
                        index[axis] = int(value)
                    view = block[tuple(index)]
                    report.slices_checked += 1
                    count = int(view.sum())
                    report.min_slice_density[j] = min(report.min_slice_density[j], count / (3 * m) ** j)
                    if not _connected(view):
                        report.flag("slice-connected", x, {"axes": list(axes), "anchor": [int(v) for v in anchor]})
                    elif count + DENSITY_SLACK < bound:
                        report.flag("slice-density", x, {"axes": list(axes), "count": count})

    per_parent: Dict[tuple, int] = {}
    for deletion in fat.deletions:
        key = (deletion.level, deletion.parent)
        per_parent[key] = per_parent.get(key, 0) + 1
    for (level, parent), count in sorted(per_parent.items()):
        if count > MAX_DELETIONS:
            report.flag("construction-contract", parent,
                        "{} boxes deleted from one level-{} box".format(count, level))

    if not report.passed:
        LOG.error("fat set verification found %s violations", len(report.violations))
    return report


class SpecialComponents:
    """The special component ``C_x`` of each member ``x`` of a fat set.

    Attributes
    ----------
    config: :class:`Config`
    sites: Dict[Tuple[int], :class:`numpy.ndarray`]
        Per member corner, the sorted flat window indices of ``C_x``.
    """

    __slots__ = ("config", "sites")

    def __init__(self, config, sites):
        self.config = config
        self.sites = sites

    def __repr__(self):
        return "<%s members=%s>" % (self.__class__.__name__, len(self.sites))

    def __len__(self):
        return len(self.sites)

    def __iter__(self):
        return iter(self.sites)

    def __getitem__(self, corner) -> np.ndarray:
        return self.sites[tuple(corner)]

    def mask(self, corner: Sequence[int]) -> np.ndarray:
        out = np.zeros(self.config.window.size, dtype=bool)
        out[self[corner]] = True
        return out.reshape(self.config.window.shape)

    def union_mask(self) -> np.ndarray:
        out = np.zeros(self.config.window.size, dtype=bool)
        for flat in self.sites.values():
            out[flat] = True
        return out.reshape(self.config.window.shape)


def special_components(config: Config, fat: FatSet, L0: int, eta: float, *,
                       labeling: ClusterLabeling = None) -> SpecialComponents:
    """Find the special component of every member and check adjacent members connect.

    For a member ``x``, ``C_x`` is the unique component of ``S_{L0} ∩ (x + [0, L0)^d)``
    with at least ``(3/4) η L0^d`` sites. For members ``x`` and ``y = x + L0 e``, ``C_x``
    and ``C_y`` must be connected in ``S ∩ ((x + [0, 2 L0)^d) ∪ (y + [0, 2 L0)^d))``.

    Raises
    ------
    ContractViolation
        A member has no or several such components, or an adjacent pair is not connected.
    """
    window = config.window
    d = config.dimension
    evaluator = Level0Evaluator(config, L0, eta, labeling=labeling)
    shape = (L0,) * d
    locals_: Dict[Point, np.ndarray] = {}
    sites: Dict[Point, np.ndarray] = {}
    for corner in fat.corners():
        qualifying = evaluator.qualifying(corner)
        labels, count = label_box(qualifying)
        if count != 1:
            raise ContractViolation("member {} has {} large components of S_L0".format(corner, count))
        locals_[corner] = qualifying
        flat = window.box_flat_indices(LatticeBox(corner, shape=shape))
        sites[corner] = np.sort(flat[qualifying.ravel()])

    for corner, own in locals_.items():
        for axis in range(d):
            other = tuple(c + L0 * (i == axis) for i, c in enumerate(corner))
            if other not in locals_:
                continue
            box_shape = tuple(3 * L0 if i == axis else 2 * L0 for i in range(d))
            if not window.contains_box(LatticeBox(corner, shape=box_shape)):
                raise UsageError("adjacent member boxes at {} do not fit the window".format(corner))
            labels, _ = label_box(window.take(config.occupancy, corner, box_shape))
            first = labels[_box_slice((0,) * d, L0)][own]
            offset = tuple(L0 * (i == axis) for i in range(d))
            second = labels[_box_slice(offset, L0)][locals_[other]]
            if len(np.unique(np.concatenate([first, second]))) != 1:
                raise ContractViolation("special components of {} and {} are not connected".format(corner, other))

    LOG.debug("special components of %s members verified", len(sites))
    return SpecialComponents(config, sites)


def save_fat_set(fat: FatSet, path: Union[str, Path]) -> Path:
    """Write the fat set as JSON lines: a header, one line per deletion, one per member."""
    path = Path(path)
    with path.open("w") as fp:
        for record in fat.to_records():
            fp.write(ujson.dumps(record, sort_keys=True) + "\n")
    return path
