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
import math

from fractions import Fraction
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from scipy import ndimage, sparse

from .clusters import ComponentSelection, chemical_ball, chemical_distances, infinite_cluster_surrogate, largest_component
from .enums import CandidateMethod, Stream
from .errors import OracleRefused, UsageError
from .fatset import FatSet, SpecialComponents
from .lattice import LatticeBox, Point, linf_ball, shifted
from .renormalization import ScaleLadder
from .samplers import Config
from .utils import stream_generator

LOG = logging.getLogger(__name__)

#: the most sites :func:`exact_min_ratio` enumerates every subset of.
EXHAUSTIVE_LIMIT = 24
#: the most sites :func:`exact_min_ratio` enumerates connected subsets of.
CONNECTED_LIMIT = 64
#: default cap on the connected subsets visited.
CONNECTED_CAP = 500_000

SWEEP_TOLERANCE = 1e-8
SWEEP_MAX_ITERATIONS = 10_000
GREEDY_MOVES = 8

_CHUNK = 1 << 16


class SiteSet:
    """A deduplicated set of occupied sites of one configuration.

    Attributes
    ----------
    config: :class:`Config`
    flat: :class:`numpy.ndarray`
        The sorted flat window indices of the sites.
    """

    __slots__ = ("config", "flat")

    def __init__(self, config: Config, flat: Iterable[int]):
        flat = np.unique(np.asarray(list(flat) if not isinstance(flat, np.ndarray) else flat, dtype=np.int64))
        if len(flat) and not config.flat[flat].all():
            raise UsageError("site set is not a subset of the occupied sites")
        self.config = config
        self.flat = flat

    def __repr__(self):
        return "<%s size=%s>" % (self.__class__.__name__, len(self))

    def __len__(self):
        return len(self.flat)

    def __iter__(self) -> Iterator[Point]:
        return iter(self.points())

    def __contains__(self, point):
        window = self.config.window
        if not window.contains(point):
            return False
        flat = window.flat_index(point)
        i = np.searchsorted(self.flat, flat)
        return i < len(self.flat) and self.flat[i] == flat

    def __eq__(self, other):
        return isinstance(other, SiteSet) and np.array_equal(self.flat, other.flat)

    @classmethod
    def from_points(cls, config: Config, points: Iterable[Sequence[int]]) -> "SiteSet":
        window = config.window
        return cls(config, np.array([window.flat_index(p) for p in points], dtype=np.int64))

    @classmethod
    def from_mask(cls, config: Config, mask: np.ndarray) -> "SiteSet":
        return cls(config, np.flatnonzero(np.asarray(mask, dtype=bool).ravel()))

    @classmethod
    def empty(cls, config: Config) -> "SiteSet":
        return cls(config, np.zeros(0, dtype=np.int64))

    def mask(self) -> np.ndarray:
        out = np.zeros(self.config.window.size, dtype=bool)
        out[self.flat] = True
        return out.reshape(self.config.window.shape)

    def points(self) -> List[Point]:
        return [self.config.window.flat_point(i) for i in self.flat]


def _as_sites(config: Config, sites: Union[SiteSet, np.ndarray, ComponentSelection]) -> np.ndarray:
    """Sorted flat indices of a site set, mask or component selection."""
    if isinstance(sites, SiteSet):
        return sites.flat
    if isinstance(sites, ComponentSelection):
        return sites.flat_indices()
    return SiteSet.from_mask(config, sites).flat


def _boundary_of(config: Config, flat: np.ndarray) -> int:
    if len(flat) == 0:
        return 0
    degrees = config.degrees.ravel()
    internal = config.graph[flat][:, flat].sum()
    return int(degrees[flat].sum() - internal)


def edge_boundary(config: Config, sites: SiteSet, *, edges: bool = False) -> Union[int, Tuple[int, List[Tuple[Point, Point]]]]:
    """The number of lattice edges joining ``sites`` to the rest of ``S``.

    Parameters
    ----------
    edges: bool
        Also return the edges, each as ``(inside, outside)`` points.

    Raises
    ------
    UsageError
        The set holds a vacant site.
    """
    if not isinstance(sites, SiteSet):
        sites = SiteSet(config, sites)
    count = _boundary_of(config, sites.flat)
    if not edges:
        return count

    window = config.window
    inside = sites.mask()
    listed = []
    for axis in range(config.dimension):
        for step in (1, -1):
            crossing = inside & shifted(config.occupancy & ~inside, axis, step, config.wrap)
            for index in np.argwhere(crossing):
                point = window.point(index)
                other = list(point)
                other[axis] += step
                listed.append((point, window.reduce(other)))
    return count, listed


def _exponent(dimension: int) -> float:
    return (dimension - 1) / dimension


def _ratio(boundary, size, alpha):
    return boundary / size ** alpha


class MinRatio:
    """Outcome of :func:`exact_min_ratio`.

    Attributes
    ----------
    ratio: float
        The smallest ``|∂_S A| / |A|^{(d-1)/d}`` found, ``inf`` without candidates.
    witness: Optional[:class:`SiteSet`]
    exact: bool
        Whether the minimum is certified over every admissible set.
    candidates: int
    method: :class:`CandidateMethod`
    """

    __slots__ = ("ratio", "witness", "exact", "candidates", "method")

    def __init__(self, ratio, witness, exact, candidates, method):
        self.ratio = ratio
        self.witness = witness
        self.exact = exact
        self.candidates = candidates
        self.method = method

    def __repr__(self):
        return "<%s ratio=%.6f exact=%s candidates=%s method=%s>" % (
            self.__class__.__name__, self.ratio, self.exact, self.candidates, self.method)

    def __iter__(self):
        return iter((self.ratio, self.witness))


def _local_graph(config: Config, flat: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Degrees in ``S`` and the internal edge list of ``flat``, in local indices."""
    sub = sparse.triu(config.graph[flat][:, flat], k=1).tocoo()
    return config.degrees.ravel()[flat].astype(np.int64), sub.row.astype(np.int64), sub.col.astype(np.int64)


def _exhaustive(degrees, src, dst, floor, alpha):
    n = len(degrees)
    shifts = np.arange(n, dtype=np.int64)
    best, best_mask, total = math.inf, None, 0
    for start in range(1, 1 << n, _CHUNK):
        masks = np.arange(start, min(start + _CHUNK, 1 << n), dtype=np.int64)
        bits = ((masks[:, None] >> shifts) & 1).astype(np.int64)
        size = bits.sum(axis=1)
        keep = size >= floor
        if not keep.any():
            continue
        boundary = bits @ degrees - 2 * (bits[:, src] & bits[:, dst]).sum(axis=1)
        ratio = np.where(keep, boundary / np.maximum(size, 1) ** alpha, np.inf)
        total += int(keep.sum())
        i = int(np.argmin(ratio))
        if ratio[i] < best:
            best, best_mask = float(ratio[i]), int(masks[i])
    return best, best_mask, total


def _popcount(x: int) -> int:
    return bin(x).count("1")


def _connected_subsets(neighbours: List[int], degrees: Sequence[int], cap: int) -> Iterator[Tuple[int, int, int]]:
    """Yields ``(mask, size, boundary)`` for each connected subset, at most ``cap`` of them.

    Each set is grown from its smallest vertex; vertices skipped in one branch are
    excluded from the later ones, so every set comes out once.
    """
    n = len(neighbours)
    emitted = 0
    for v in range(n):
        allowed = ~((1 << (v + 1)) - 1)
        stack = [(1 << v, neighbours[v] & allowed, 1 << v, 1, degrees[v])]
        while stack:
            sub, ext, excluded, size, boundary = stack.pop()
            yield sub, size, boundary
            emitted += 1
            if emitted >= cap:
                return
            children = []
            while ext:
                w_bit = ext & -ext
                w = w_bit.bit_length() - 1
                ext ^= w_bit
                excluded |= w_bit
                grown = boundary + degrees[w] - 2 * _popcount(neighbours[w] & sub)
                new_ext = ext | (neighbours[w] & allowed & ~excluded & ~sub)
                children.append((sub | w_bit, new_ext, excluded, size + 1, grown))
            stack.extend(reversed(children))


def exact_min_ratio(config: Config, region: LatticeBox, size_floor: int = 1, *,
                    cap: int = CONNECTED_CAP) -> MinRatio:
    """The exact minimum of ``|∂_S A| / |A|^{(d-1)/d}`` over ``A ⊆ S ∩ region`` with ``|A| >= size_floor``.

    Up to :data:`EXHAUSTIVE_LIMIT` sites every subset is enumerated. Up to
    :data:`CONNECTED_LIMIT` sites only connected subsets are, which is exact when
    ``size_floor <= 1`` and fewer than ``cap`` subsets exist. The boundary is taken in
    all of ``S``, not only in the region.

    Raises
    ------
    OracleRefused
        More than :data:`CONNECTED_LIMIT` sites.
    UsageError
        ``size_floor`` exceeds the number of sites.
    """
    window = config.window
    if not window.contains_box(region):
        raise UsageError("region {!r} does not fit the window".format(region))
    flat = window.box_flat_indices(region)
    flat = np.sort(flat[config.flat[flat]])
    n = len(flat)
    if n > CONNECTED_LIMIT:
        raise OracleRefused("{} sites exceed the exact oracle limit of {}".format(n, CONNECTED_LIMIT))
    if n == 0 or size_floor > n:
        raise UsageError("no admissible set: {} sites, size floor {}".format(n, size_floor))

    alpha = _exponent(config.dimension)
    degrees, src, dst = _local_graph(config, flat)
    if n <= EXHAUSTIVE_LIMIT:
        ratio, mask, total = _exhaustive(degrees, src, dst, size_floor, alpha)
        method, exact = CandidateMethod.exhaustive, True
    else:
        neighbours = [0] * n
        for a, b in zip(src.tolist(), dst.tolist()):
            neighbours[a] |= 1 << b
            neighbours[b] |= 1 << a
        ratio, mask, total = math.inf, None, 0
        degree_list = degrees.tolist()
        for sub, size, boundary in _connected_subsets(neighbours, degree_list, cap):
            total += 1
            if size < size_floor:
                continue
            value = boundary / size ** alpha
            if value < ratio:
                ratio, mask = value, sub
        method = CandidateMethod.connected
        exact = size_floor <= 1 and total < cap
        if total >= cap:
            LOG.warning("connected-subset oracle hit its cap of %s subsets", cap)

    witness = None
    if mask is not None:
        chosen = [i for i in range(n) if mask >> i & 1]
        witness = SiteSet(config, flat[chosen])
    return MinRatio(ratio, witness, exact, total, method)


def ceil_power(R: int, theta: float) -> int:
    """The smallest integer ``f`` with ``f >= R^θ``, compared exactly for rational ``θ``."""
    q = Fraction(theta).limit_denominator(1000)
    guess = max(int(math.ceil(R ** float(q))), 0)
    while guess > 0 and (guess - 1) ** q.denominator >= R ** q.numerator:
        guess -= 1
    while guess ** q.denominator < R ** q.numerator:
        guess += 1
    return guess


class IsoperimetryReport:
    """Outcome of :func:`heuristic_profile`.

    Attributes
    ----------
    candidates: int
        The number of candidate sets examined.
    ratio: float
        The smallest ratio found, ``inf`` when nothing was examined.
    witness: Optional[:class:`SiteSet`]
        The set attaining it.
    size: int
        ``|witness|``.
    boundary: int
        ``|∂_S witness|``.
    size_floor: int
        The minimal candidate size.
    methods: Dict[:class:`CandidateMethod`, int]
        Candidates examined per method.
    best: Dict[:class:`CandidateMethod`, Tuple[int, int, float]]
        Per method, ``(size, boundary, ratio)`` of its best candidate.
    """

    __slots__ = ("candidates", "ratio", "witness", "size", "boundary", "size_floor", "methods", "best")

    def __init__(self, size_floor: int):
        self.candidates = 0
        self.ratio = math.inf
        self.witness = None
        self.size = 0
        self.boundary = 0
        self.size_floor = size_floor
        self.methods: Dict[CandidateMethod, int] = {}
        self.best: Dict[CandidateMethod, Tuple[int, int, float]] = {}

    def __repr__(self):
        return "<%s candidates=%s ratio=%s size=%s>" % (
            self.__class__.__name__, self.candidates, self.ratio, self.size)

    @property
    def best_method(self) -> Optional[CandidateMethod]:
        if not self.best:
            return None
        return min(self.best, key=lambda m: self.best[m][2])

    def offer(self, method: CandidateMethod, config: Config, flat: np.ndarray, boundary: int, alpha: float) -> float:
        size = len(flat)
        ratio = _ratio(boundary, size, alpha)
        self.candidates += 1
        self.methods[method] = self.methods.get(method, 0) + 1
        if method not in self.best or ratio < self.best[method][2]:
            self.best[method] = (size, boundary, ratio)
        if ratio < self.ratio:
            self.ratio, self.size, self.boundary = ratio, size, boundary
            self.witness = SiteSet(config, flat)
        return ratio

    def tally(self, method: CandidateMethod, count: int) -> None:
        """Count candidates that were examined but not offered."""
        if count > 0:
            self.candidates += count
            self.methods[method] = self.methods.get(method, 0) + count

    def rows(self) -> List[Tuple[str, int, int, float]]:
        """``(method, |A|, boundary, ratio)`` of the best candidate of every method."""
        return [(m.value, *self.best[m]) for m in sorted(self.best, key=lambda m: m.value)]

    def to_dict(self) -> dict:
        return {
            "candidates": self.candidates,
            "ratio": self.ratio,
            "size": self.size,
            "boundary": self.boundary,
            "size_floor": self.size_floor,
            "methods": {m.value: c for m, c in self.methods.items()},
            "best_method": self.best_method.value if self.best else None,
        }


class _Component:
    """The graph of a component in local indices, for the candidate searches."""

    __slots__ = ("config", "flat", "adjacency", "degrees", "src", "dst")

    def __init__(self, config: Config, flat: np.ndarray):
        self.config = config
        self.flat = flat
        self.adjacency = config.graph[flat][:, flat].tocsr().astype(np.float64)
        self.degrees = config.degrees.ravel()[flat].astype(np.int64)
        upper = sparse.triu(self.adjacency, k=1).tocoo()
        self.src, self.dst = upper.row, upper.col

    def __len__(self):
        return len(self.flat)

    def boundary(self, local: np.ndarray) -> int:
        if len(local) == 0:
            return 0
        return int(self.degrees[local].sum() - self.adjacency[local][:, local].sum())


def _balls(component: _Component, report: IsoperimetryReport, budget: int, rng, floor: int, alpha: float) -> None:
    config = component.config
    n = len(component)
    spent = 0
    while spent < budget:
        centre = component.flat[int(rng.integers(n))]
        distances = chemical_distances(config, config.window.flat_point(centre)).ravel()[component.flat]
        reach = max(distances[np.isfinite(distances)].max(), 1)
        radius = 1
        while spent < budget and radius <= 2 * reach:
            spent += 1
            local = np.flatnonzero(distances <= radius)
            radius *= 2
            if len(local) < floor:
                continue
            boundary = component.boundary(local)
            if boundary:
                report.offer(CandidateMethod.ball, config, component.flat[local], boundary, alpha)


def _fiedler(component: _Component, rng, tolerance: float, max_iterations: int) -> np.ndarray:
    d = component.config.dimension
    n = len(component)
    stay = 1.0 - component.degrees / (2.0 * d)
    walk = component.adjacency / (2.0 * d) + sparse.diags(stay)
    lazy = (walk + sparse.identity(n)) * 0.5
    vector = rng.standard_normal(n)
    vector -= vector.mean()
    vector /= np.linalg.norm(vector) or 1.0
    for iteration in range(max_iterations):
        updated = lazy @ vector
        updated -= updated.mean()
        norm = np.linalg.norm(updated)
        if norm == 0:
            break
        updated /= norm
        if np.linalg.norm(updated - vector) < tolerance:
            vector = updated
            LOG.debug("sweep vector converged after %s iterations", iteration + 1)
            break
        vector = updated
    else:
        LOG.debug("sweep vector did not converge in %s iterations", max_iterations)
    return vector


def _sweep(component: _Component, report: IsoperimetryReport, budget: int, rng, floor: int, alpha: float,
           tolerance: float, max_iterations: int) -> None:
    n = len(component)
    if n < 2 or budget < 1:
        return
    vector = _fiedler(component, rng, tolerance, max_iterations)
    for order in (np.argsort(vector, kind="stable"), np.argsort(-vector, kind="stable")):
        position = np.empty(n, dtype=np.int64)
        position[order] = np.arange(n)
        last = np.maximum(position[component.src], position[component.dst])
        internal = np.cumsum(np.bincount(last, minlength=n))
        boundaries = np.cumsum(component.degrees[order]) - 2 * internal
        sizes = np.arange(1, n + 1)
        eligible = np.flatnonzero((sizes >= floor) & (boundaries > 0))
        if not len(eligible):
            continue
        share = max(budget // 2, 1)
        picks = eligible[np.unique(np.linspace(0, len(eligible) - 1, min(share, len(eligible))).astype(np.int64))]
        for k in picks:
            report.offer(CandidateMethod.sweep, component.config, component.flat[order[:k + 1]],
                         int(boundaries[k]), alpha)


def _greedy(component: _Component, report: IsoperimetryReport, budget: int, rng, floor: int, alpha: float) -> None:
    n = len(component)
    if budget < 1 or n == 0:
        return
    lookup = np.full(component.config.window.size, -1, dtype=np.int64)
    lookup[component.flat] = np.arange(n)
    if report.witness is not None:
        start = lookup[report.witness.flat]
        start = start[start >= 0]
    else:
        start = np.arange(min(max(floor, 1), n))
    inside = np.zeros(n, dtype=bool)
    inside[start] = True
    adjacency = component.adjacency
    count = np.asarray(adjacency @ inside.astype(np.float64)).astype(np.int64)
    size = int(inside.sum())
    boundary = component.boundary(np.flatnonzero(inside))
    current = _ratio(boundary, size, alpha) if size and boundary else math.inf

    spent = 0
    while spent < budget:
        frontier = np.flatnonzero(~inside & (count > 0))
        members = np.flatnonzero(inside)
        moves = []
        if len(frontier):
            moves += [(int(v), 1) for v in rng.choice(frontier, min(GREEDY_MOVES, len(frontier)), replace=False)]
        if len(members) > 1:
            moves += [(int(v), -1) for v in rng.choice(members, min(GREEDY_MOVES, len(members)), replace=False)]
        best, evaluated = None, 0
        for v, sign in moves[:budget - spent]:
            new_size = size + sign
            new_boundary = boundary + sign * (int(component.degrees[v]) - 2 * int(count[v]))
            if new_size < floor or new_boundary <= 0:
                continue
            evaluated += 1
            value = _ratio(new_boundary, new_size, alpha)
            if value < current and (best is None or value < best[0]):
                best = (value, v, sign, new_boundary)
        spent += max(len(moves[:budget - spent]), 1)
        if best is None:
            report.tally(CandidateMethod.greedy, evaluated)
            break

        current, v, sign, boundary = best
        inside[v] = sign > 0
        size += sign
        row = adjacency.indices[adjacency.indptr[v]:adjacency.indptr[v + 1]]
        count[row] += sign
        report.tally(CandidateMethod.greedy, evaluated - 1)
        report.offer(CandidateMethod.greedy, component.config, component.flat[np.flatnonzero(inside)], boundary, alpha)


def heuristic_profile(config: Config, component: Union[ComponentSelection, SiteSet, np.ndarray], theta_iso: float,
                      budget: int, R: int = None, *, seed: int = 0, size_floor: int = None,
                      tolerance: float = SWEEP_TOLERANCE, max_iterations: int = SWEEP_MAX_ITERATIONS
                      ) -> IsoperimetryReport:
    """Search for sets of small isoperimetric ratio inside a component.

    The budget is split between chemical balls truncated to the component, prefixes of
    a spectral sweep, and a greedy local search started from the best set found. Sets
    with no boundary at all, which are unions of whole components of ``S``, are skipped.

    Parameters
    ----------
    config: :class:`Config`
    component: Union[:class:`ComponentSelection`, :class:`SiteSet`, :class:`numpy.ndarray`]
        The sites searched, usually ``C_R``.
    theta_iso: float
        Candidates need at least ``⌈R^θ⌉`` sites.
    budget: int
        The number of candidates to examine.
    R: Optional[int]
        The radius of the size floor. Needed unless ``size_floor`` is given.
    seed: int
        Key of the ``CANDIDATES`` stream.
    """
    if size_floor is None:
        if R is None:
            raise UsageError("heuristic_profile needs R or an explicit size_floor")
        size_floor = ceil_power(R, theta_iso)
    report = IsoperimetryReport(size_floor)
    flat = _as_sites(config, component)
    if budget <= 0 or len(flat) < max(size_floor, 1):
        return report

    graph = _Component(config, flat)
    rng = stream_generator(seed, Stream.CANDIDATES)
    alpha = _exponent(config.dimension)
    share = budget // 3
    _balls(graph, report, share, rng, size_floor, alpha)
    _sweep(graph, report, share, rng, size_floor, alpha, tolerance, max_iterations)
    _greedy(graph, report, budget - report.candidates, rng, size_floor, alpha)
    LOG.debug("isoperimetric profile: %s candidates, ratio %s", report.candidates, report.ratio)
    return report


def check_A5(config: Config, k: int, budget: int, *, seed: int = 0,
             surrogate: ComponentSelection = None) -> IsoperimetryReport:
    """The isoperimetric profile of ``B_S(0, 2k) ∩ S_∞`` with size floor ``k^{1/3}``."""
    if k < 1:
        raise UsageError("check_A5 needs k >= 1, got {}".format(k))
    origin = (0,) * config.dimension
    surrogate = surrogate or infinite_cluster_surrogate(config)
    floor = ceil_power(k, Fraction(1, 3))
    if not surrogate.contains(origin):
        LOG.warning("the origin is not in the infinite-cluster surrogate")
        return IsoperimetryReport(floor)
    ball = chemical_ball(config, origin, 2 * k, within=surrogate.mask)
    return heuristic_profile(config, ball, 1 / 3, budget, seed=seed, size_floor=floor)


def _dilate(mask: np.ndarray, radius: int, wrap: bool) -> np.ndarray:
    if radius <= 0:
        return mask.copy()
    mode = "wrap" if wrap else "constant"
    return ndimage.maximum_filter(mask.astype(np.uint8), size=2 * radius + 1, mode=mode, cval=0) > 0


def map_MA_DA(config: Config, fat: FatSet, sites: SiteSet, L_s: int, *, special: SpecialComponents = None,
              c_2r: np.ndarray = None) -> Tuple[List[Point], SiteSet]:
    """The coarse image ``M_A`` and the defect set ``D_A`` of ``A``.

    ``M_A`` holds the members ``x`` of ``G`` whose special component meets ``A``.
    ``D_A`` holds the sites of ``A`` within ℓ∞ distance ``2 L_s`` of ``C_{2R} ∖ A``.

    Parameters
    ----------
    special: :class:`SpecialComponents`
        The special components of ``fat``.
    c_2r: Optional[:class:`numpy.ndarray`]
        The mask of ``C_{2R}``, computed from ``fat.R`` when omitted.

    Raises
    ------
    UsageError
        The fat set or its special components are missing.
    """
    if fat is None or special is None:
        raise UsageError("map_MA_DA needs a fat set and its special components")
    if not isinstance(sites, SiteSet):
        sites = SiteSet(config, sites)
    inside = sites.mask()
    if c_2r is None:
        c_2r = largest_component(config, linf_ball((0,) * config.dimension, 2 * fat.R)).mask

    marked = inside.ravel()
    coarse = sorted(corner for corner, flat in special.sites.items() if marked[flat].any())
    near = _dilate(c_2r & ~inside, 2 * L_s, config.wrap)
    return coarse, SiteSet.from_mask(config, inside & near)


def _coarse_mask(fat: FatSet, coarse: Union[np.ndarray, Iterable[Sequence[int]]]) -> np.ndarray:
    if isinstance(coarse, np.ndarray) and coarse.dtype == bool:
        if coarse.shape != fat.members.shape:
            raise UsageError("coarse mask does not match the fat set grid")
        if (coarse & ~fat.members).any():
            raise UsageError("coarse set is not a subset of the fat set")
        return coarse
    mask = np.zeros(fat.members.shape, dtype=bool)
    for corner in coarse:
        index = fat._index(corner)
        if index is None or not fat.members[index]:
            raise UsageError("box {} is not a member of the fat set".format(tuple(corner)))
        mask[index] = True
    return mask


def _grid_boundary(universe: np.ndarray, marked: np.ndarray) -> int:
    """Nearest-neighbour edges of the box grid joining ``marked`` to ``universe ∖ marked``."""
    rest = universe & ~marked
    total = 0
    for axis in range(universe.ndim):
        for step in (1, -1):
            total += int((marked & shifted(rest, axis, step, False)).sum())
    return total


def coarse_isoperimetry(fat: FatSet, coarse) -> float:
    """The empirical ``γ = |∂_G A| / |A|^{(d-1)/d}`` for a coarse set, ``inf`` when empty."""
    mask = _coarse_mask(fat, coarse)
    size = int(mask.sum())
    if size == 0:
        return math.inf
    return _grid_boundary(fat.members, mask) / size ** _exponent(fat.dimension)


class ReductionReport:
    """Both sides of the coarse-graining inequalities for one set ``A``.

    The boundary bound reads ``|∂_S A| >= max(|∂_G M_A| / (d 2^d), |D_A| / (11 L_s)^d)``
    and the volume bound ``|A| <= 6^d L0^d |M_A| + |D_A|``.

    Attributes
    ----------
    boundary, size: int
        ``|∂_S A|`` and ``|A|``.
    coarse_boundary, coarse_size, defects: int
        ``|∂_G M_A|``, ``|M_A|`` and ``|D_A|``.
    boundary_bound, volume_bound: float
        The right-hand sides.
    gamma: float
        The coarse constant of ``M_A``.
    conditioned: bool
        Whether event H was verified for the configuration.
    """

    __slots__ = ("boundary", "size", "coarse_boundary", "coarse_size", "defects",
                 "boundary_bound", "volume_bound", "gamma", "conditioned")

    def __init__(self, boundary, size, coarse_boundary, coarse_size, defects, boundary_bound, volume_bound,
                 gamma, conditioned):
        self.boundary = boundary
        self.size = size
        self.coarse_boundary = coarse_boundary
        self.coarse_size = coarse_size
        self.defects = defects
        self.boundary_bound = boundary_bound
        self.volume_bound = volume_bound
        self.gamma = gamma
        self.conditioned = conditioned

    def __repr__(self):
        return "<%s holds=%s conditioned=%s>" % (self.__class__.__name__, self.holds, self.conditioned)

    @property
    def boundary_holds(self) -> bool:
        return self.boundary >= self.boundary_bound

    @property
    def volume_holds(self) -> bool:
        return self.size <= self.volume_bound

    @property
    def holds(self) -> bool:
        return self.boundary_holds and self.volume_holds

    @property
    def severe(self) -> bool:
        """A violation on a configuration where event H was verified."""
        return self.conditioned and not self.holds

    @property
    def label(self) -> str:
        return "conditioned" if self.conditioned else "unconditioned"

    def to_dict(self) -> dict:
        return {
            "boundary": self.boundary,
            "size": self.size,
            "coarse_boundary": self.coarse_boundary,
            "coarse_size": self.coarse_size,
            "defects": self.defects,
            "boundary_bound": self.boundary_bound,
            "volume_bound": self.volume_bound,
            "boundary_slack": self.boundary - self.boundary_bound,
            "volume_slack": self.volume_bound - self.size,
            "gamma": self.gamma,
            "holds": self.holds,
            "label": self.label,
        }


def check_reduction_inequalities(config: Config, fat: FatSet, sites: SiteSet, L_s: int, L0: int, *,
                                 special: SpecialComponents = None, c_2r: np.ndarray = None,
                                 h_verified: bool = False) -> ReductionReport:
    """Evaluate the coarse-graining inequalities for ``A``.

    The inequalities are only guaranteed on event H. Without ``h_verified`` the report
    is labelled unconditioned; with it, a violation is logged as an error and marked
    :attr:`ReductionReport.severe`.
    """
    if not isinstance(sites, SiteSet):
        sites = SiteSet(config, sites)
    d = config.dimension
    coarse, defects = map_MA_DA(config, fat, sites, L_s, special=special, c_2r=c_2r)
    mask = _coarse_mask(fat, coarse)
    coarse_boundary = _grid_boundary(fat.members, mask)
    coarse_size = len(coarse)
    gamma = coarse_boundary / coarse_size ** _exponent(d) if coarse_size else math.inf

    report = ReductionReport(
        boundary=edge_boundary(config, sites),
        size=len(sites),
        coarse_boundary=coarse_boundary,
        coarse_size=coarse_size,
        defects=len(defects),
        boundary_bound=max(coarse_boundary / (d * 2 ** d), len(defects) / (11 * L_s) ** d),
        volume_bound=6 ** d * L0 ** d * coarse_size + len(defects),
        gamma=gamma,
        conditioned=h_verified,
    )
    if report.severe:
        LOG.error("coarse-graining inequality violated under event H: %s", report.to_dict())
    return report


def coarse_density_boxes(fat: FatSet, coarse, L_s: int, L0: int) -> List[Point]:
    """The ``L_s``-boxes of the fat set holding at least ``(1/2) (L_s/L0)^d`` boxes of ``coarse``."""
    mask = _coarse_mask(fat, coarse)
    m = L_s // L0
    view = FatSet(fat.ladder, fat.R, fat.levels, fat.lo, mask)
    found = []
    for corner in fat.top:
        count = int(view.block(corner, L_s).sum())
        if 2 * count >= m ** fat.dimension:
            found.append(corner)
    return found


class CoarseProfile:
    """Outcome of :func:`coarse_box_profile`.

    Attributes
    ----------
    gamma: float
        The smallest ``|∂_g a| / (L_s/L0)^{j-1}`` found, ``inf`` without candidates.
    candidates: int
    j: int
        The slice dimension.
    """

    __slots__ = ("gamma", "candidates", "j")

    def __init__(self, gamma, candidates, j):
        self.gamma = gamma
        self.candidates = candidates
        self.j = j

    def __repr__(self):
        return "<%s j=%s gamma=%s candidates=%s>" % (self.__class__.__name__, self.j, self.gamma, self.candidates)


def _profile_candidates(universe: np.ndarray) -> Iterator[np.ndarray]:
    n = universe.shape[0]
    coords = np.indices(universe.shape)
    for axis in range(universe.ndim):
        for t in range(1, n):
            yield universe & (coords[axis] < t)
    step = max(n // 4, 1)
    for centre in itertools.product(range(0, n, step), repeat=universe.ndim):
        distance = np.max(np.abs(coords - np.reshape(centre, (-1,) + (1,) * universe.ndim)), axis=0)
        for radius in range(n):
            yield universe & (distance <= radius)


def coarse_box_profile(fat: FatSet, x_s: Sequence[int], ladder: ScaleLadder = None, *, j: int = None) -> CoarseProfile:
    """Empirical constant of the coarse isoperimetry of one ``3 L_s``-box.

    Candidates are coordinate half-spaces and ℓ∞ balls of ``g = G ∩ (x_s + [-L_s, 2 L_s)^d)``.
    For ``j = d`` the sizes range over ``[(1/2) m^d, (3^d - 1/2) m^d]`` with ``m = L_s/L0``;
    for ``j < d`` the central ``j``-dimensional slices are used with sizes in
    ``[ε (3m)^j, (1 - ε)(3m)^j]``, ``ε = 1/(2 3^d)``.
    """
    ladder = ladder or fat.ladder
    d = fat.dimension
    j = d if j is None else j
    if not 1 <= j <= d:
        raise UsageError("slice dimension must lie in [1, {}], got {}".format(d, j))
    L_s = ladder.L[fat.levels.s]
    m = L_s // ladder.L0
    block = fat.block(tuple(c - L_s for c in x_s), 3 * L_s)

    if j == d:
        universes = [block]
        low, high = m ** d / 2, (3 ** d - 0.5) * m ** d
    else:
        eps = 1 / (2 * 3 ** d)
        centre = 3 * m // 2
        universes = []
        for axes in itertools.combinations(range(d), j):
            index = tuple(slice(None) if i in axes else centre for i in range(d))
            universes.append(block[index])
        low, high = eps * (3 * m) ** j, (1 - eps) * (3 * m) ** j

    gamma, candidates = math.inf, 0
    for universe in universes:
        for a in _profile_candidates(universe):
            size = int(a.sum())
            if not low <= size <= high:
                continue
            candidates += 1
            gamma = min(gamma, _grid_boundary(universe, a) / m ** (j - 1))
    return CoarseProfile(gamma, candidates, j)
