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

from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from scipy import ndimage, stats
from scipy.sparse import csgraph

from .errors import EmptyRegion, UsageError
from .lattice import LatticeBox, Point, linf_ball, unit_vectors
from .samplers import Config

LOG = logging.getLogger(__name__)

# sources per breadth-first batch in check_A4
BFS_BATCH = 64


def _structure(dimension: int) -> np.ndarray:
    return ndimage.generate_binary_structure(dimension, 1)


def label_box(mask: np.ndarray) -> Tuple[np.ndarray, int]:
    """Nearest-neighbour labels of a boolean array with hard boundaries (``0`` off the mask)."""
    return ndimage.label(mask, structure=_structure(mask.ndim))


class _ShiftedUnionFind:
    """Union-find over raw labels that tracks, per label, its torus image relative to the root.

    A union whose offset disagrees with the one already implied marks the root as
    winding around the torus.
    """

    __slots__ = ("parent", "offset", "winding")

    def __init__(self):
        self.parent: Dict[int, int] = {}
        self.offset: Dict[int, np.ndarray] = {}
        self.winding: Dict[int, bool] = {}

    def find(self, x: int, dimension: int) -> Tuple[int, np.ndarray]:
        if x not in self.parent:
            self.parent[x] = x
            self.offset[x] = np.zeros(dimension, dtype=np.int64)
            self.winding[x] = False
            return x, self.offset[x]

        path = []
        while self.parent[x] != x:
            path.append(x)
            x = self.parent[x]
        root = x
        # compress, accumulating offsets from the root downwards
        for node in reversed(path):
            parent = self.parent[node]
            if parent != root:
                self.offset[node] = self.offset[node] + self.offset[parent]
            self.parent[node] = root
        return root, self.offset[path[0]] if path else self.offset[root] * 0

    def union(self, a: int, b: int, delta: np.ndarray) -> None:
        """Record that the image of ``b`` sits at the image of ``a`` plus ``delta``."""
        d = len(delta)
        ra, sa = self.find(a, d)
        rb, sb = self.find(b, d)
        if ra == rb:
            if not np.array_equal(sb - sa, delta):
                self.winding[ra] = True
            return
        self.parent[rb] = ra
        self.offset[rb] = sa + delta - sb
        self.winding[ra] = self.winding[ra] or self.winding[rb]


class ClusterLabeling:
    """The connected components of ``S`` and their statistics.

    Components are numbered ``0 .. n-1`` in increasing order of their canonical site, the
    member with the smallest row-major array position.

    Attributes
    ----------
    config: :class:`Config`
        The labelled configuration.
    labels: :class:`numpy.ndarray`
        Per-site component number, ``-1`` on vacant sites.
    canonical: :class:`numpy.ndarray`
        Flat array index of each component's canonical site.
    volumes: :class:`numpy.ndarray`
        Site count of each component.
    diameters: :class:`numpy.ndarray`
        Exact ℓ1 diameter of each component, ``inf`` for components winding around a torus.
    lower, upper: :class:`numpy.ndarray`
        ``(n, d)`` inclusive bounding box corners in unwrapped lattice coordinates.
    winding: :class:`numpy.ndarray`
        Whether each component winds around the torus.
    """

    __slots__ = ("config", "labels", "canonical", "volumes", "diameters", "lower", "upper", "winding")

    #: diameters are always exact, see :func:`label_components`.
    exact = True

    def __init__(self, config, labels, canonical, volumes, diameters, lower, upper, winding):
        self.config = config
        self.labels = labels
        self.canonical = canonical
        self.volumes = volumes
        self.diameters = diameters
        self.lower = lower
        self.upper = upper
        self.winding = winding

    def __repr__(self):
        return "<%s components=%s sites=%s>" % (self.__class__.__name__, len(self), int(self.volumes.sum()))

    def __len__(self):
        return len(self.canonical)

    def component_of(self, point: Sequence[int]) -> Optional[int]:
        """The component number of an occupied site, ``None`` for a vacant one."""
        label = int(self.labels[self.config.window.index(point)])
        return None if label < 0 else label

    def mask(self, component: int) -> np.ndarray:
        return self.labels == component

    def canonical_point(self, component: int) -> Point:
        return self.config.window.flat_point(self.canonical[component])

    def bounding_box(self, component: int) -> LatticeBox:
        lower, upper = self.lower[component], self.upper[component]
        return LatticeBox(lower, shape=upper - lower + 1)

    def sizes(self) -> Dict[Point, int]:
        """Mapping of canonical site to volume."""
        return {self.canonical_point(i): int(v) for i, v in enumerate(self.volumes)}


def _empty_labeling(config: Config) -> ClusterLabeling:
    d = config.dimension
    return ClusterLabeling(
        config,
        np.full(config.window.shape, -1, dtype=np.int64),
        np.zeros(0, dtype=np.int64),
        np.zeros(0, dtype=np.int64),
        np.zeros(0, dtype=float),
        np.zeros((0, d), dtype=np.int64),
        np.zeros((0, d), dtype=np.int64),
        np.zeros(0, dtype=bool),
    )


def label_components(config: Config) -> ClusterLabeling:
    """Label the nearest-neighbour components of ``S``.

    On a torus, components are merged across opposite faces. The unwrapped image of
    every site is tracked while merging, so the ℓ1 diameter is computed exactly as the
    largest spread of ``σ·x`` over sign vectors ``σ``; a component that closes a
    non-contractible loop has infinite diameter.
    """
    occupancy = config.occupancy
    window = config.window
    d, n = window.dimension, window.side

    raw, count = label_box(occupancy)
    if count == 0:
        return _empty_labeling(config)

    root_of = np.arange(count + 1)
    shift_of = np.zeros((count + 1, d), dtype=np.int64)
    winding_root = np.zeros(count + 1, dtype=bool)

    if window.wrap:
        forest = _ShiftedUnionFind()
        for axis in range(d):
            last = np.take(raw, n - 1, axis=axis)
            first = np.take(raw, 0, axis=axis)
            both = (last > 0) & (first > 0)
            if not both.any():
                continue
            pairs = np.unique(np.stack([last[both], first[both]], axis=1), axis=0)
            delta = np.zeros(d, dtype=np.int64)
            delta[axis] = 1
            for a, b in pairs:
                forest.union(int(a), int(b), delta)
        for label in list(forest.parent):
            root, offset = forest.find(label, d)
            root_of[label] = root
            shift_of[label] = offset
        for root, flag in forest.winding.items():
            if forest.parent[root] == root:
                winding_root[root] = flag

    flat = raw.ravel()
    sites = np.flatnonzero(flat)
    roots = root_of[flat[sites]]
    unique_roots, first = np.unique(roots, return_index=True)
    canonical = sites[first]
    order = np.argsort(canonical, kind="stable")
    canonical = canonical[order]
    unique_roots = unique_roots[order]

    component_of_root = np.full(count + 1, -1, dtype=np.int64)
    component_of_root[unique_roots] = np.arange(len(unique_roots))
    site_components = component_of_root[roots]

    labels = np.full(window.size, -1, dtype=np.int64)
    labels[sites] = site_components
    labels = labels.reshape(window.shape)

    k = len(unique_roots)
    volumes = np.bincount(site_components, minlength=k)

    coords = np.stack(np.unravel_index(sites, window.shape), axis=1).astype(np.int64) - window.origin
    coords += n * shift_of[flat[sites]]

    index = np.arange(1, k + 1)
    tags = site_components + 1
    lower = np.stack([ndimage.minimum(coords[:, i], tags, index) for i in range(d)], axis=1).astype(np.int64)
    upper = np.stack([ndimage.maximum(coords[:, i], tags, index) for i in range(d)], axis=1).astype(np.int64)
    lower = lower.reshape(k, d)
    upper = upper.reshape(k, d)

    diameters = np.zeros(k, dtype=float)
    for tail in itertools.product((1, -1), repeat=d - 1):
        sigma = np.array((1,) + tail, dtype=np.int64)
        projection = coords @ sigma
        spread = np.asarray(ndimage.maximum(projection, tags, index)) - np.asarray(ndimage.minimum(projection, tags, index))
        diameters = np.maximum(diameters, np.asarray(spread, dtype=float).reshape(k))

    winding = winding_root[unique_roots]
    diameters[winding] = math.inf
    if winding.any():
        LOG.debug("%s components wind around the torus", int(winding.sum()))

    LOG.debug("labelled %s components over %s sites", k, len(sites))
    return ClusterLabeling(config, labels, canonical, volumes, diameters, lower, upper, winding)


def restrict_s_r(config: Config, r: float, labeling: ClusterLabeling = None) -> Config:
    """Returns the configuration ``S_r``: sites in components of ℓ1 diameter at least ``r``."""
    if r < 0:
        raise UsageError("S_r needs r >= 0, got {}".format(r))
    if r == 0:
        return config
    labeling = labeling or label_components(config)
    keep = np.zeros(config.window.shape, dtype=bool)
    occupied = labeling.labels >= 0
    keep[occupied] = labeling.diameters[labeling.labels[occupied]] >= r
    return config.replace(keep)


class ComponentSelection:
    """A selected component, such as ``C_R`` or the infinite-cluster surrogate.

    Attributes
    ----------
    config: :class:`Config`
        The configuration the component belongs to.
    mask: :class:`numpy.ndarray`
        Boolean array over the window marking the component.
    volume: int
        The number of sites.
    canonical: Tuple[int]
        The component id, the lattice coordinates of its lexicographically smallest site.
    unique: bool
        Whether the volume is strictly larger than that of every other candidate.
    region: Optional[:class:`LatticeBox`]
        The region the component was selected in, ``None`` for the whole window.
    """

    __slots__ = ("config", "mask", "volume", "canonical", "unique", "region")

    def __init__(self, config, mask, volume, canonical, unique, region=None):
        self.config = config
        self.mask = mask
        self.volume = int(volume)
        self.canonical = canonical
        self.unique = bool(unique)
        self.region = region

    def __repr__(self):
        return "<%s canonical=%s volume=%s unique=%s>" % (
            self.__class__.__name__, self.canonical, self.volume, self.unique)

    def __len__(self):
        return self.volume

    def __contains__(self, point):
        return self.contains(point)

    def contains(self, point: Sequence[int]) -> bool:
        window = self.config.window
        if not window.contains(point):
            return False
        return bool(self.mask[window.index(point)])

    def flat_indices(self) -> np.ndarray:
        return np.flatnonzero(self.mask.ravel())

    def points(self) -> List[Point]:
        return [self.config.window.flat_point(i) for i in self.flat_indices()]


def _pick_largest(volumes: np.ndarray, canonical: np.ndarray) -> Tuple[int, bool]:
    best = int(volumes.max())
    tied = np.flatnonzero(volumes == best)
    winner = tied[np.argmin(canonical[tied])]
    return int(winner), len(tied) == 1


def largest_component(config: Config, region: LatticeBox = None, *,
                      labeling: ClusterLabeling = None) -> ComponentSelection:
    """The largest-volume component of ``S ∩ region``.

    Ties are broken by the smallest canonical site, and ``unique`` records whether the
    maximum was strict. Without a region, or with a region covering a whole torus, the
    components of the window itself are used.

    Raises
    ------
    EmptyRegion
        ``S ∩ region`` is empty.
    UsageError
        The region does not fit the window.
    """
    window = config.window
    whole = region is None or (window.wrap and all(s >= window.side for s in region.shape))

    if whole:
        labeling = labeling or label_components(config)
        if len(labeling) == 0:
            raise EmptyRegion("no occupied site in the window")
        winner, unique = _pick_largest(labeling.volumes, labeling.canonical)
        mask = labeling.mask(winner)
        canonical = labeling.canonical_point(winner)
        volume = labeling.volumes[winner]
    else:
        if not window.contains_box(region):
            raise UsageError("region {!r} does not fit the window".format(region))
        local, count = label_box(window.take_box(config.occupancy, region))
        if count == 0:
            raise EmptyRegion("no occupied site in {!r}".format(region))
        flat_ids = window.box_flat_indices(region).reshape(region.shape)
        index = np.arange(1, count + 1)
        volumes = np.bincount(local.ravel(), minlength=count + 1)[1:]
        canonical_ids = np.asarray(ndimage.minimum(flat_ids, local, index), dtype=np.int64).reshape(count)
        winner, unique = _pick_largest(volumes, canonical_ids)
        mask = np.zeros(window.size, dtype=bool)
        mask[flat_ids[local == winner + 1]] = True
        mask = mask.reshape(window.shape)
        canonical = window.flat_point(canonical_ids[winner])
        volume = volumes[winner]

    if not unique:
        LOG.warning("largest component of volume %s is not unique in %r", volume, region)
    return ComponentSelection(config, mask, volume, canonical, unique, region)


def infinite_cluster_surrogate(config: Config, *, labeling: ClusterLabeling = None) -> ComponentSelection:
    """The finite-window stand-in for ``S_∞``: the largest component of the window.

    Raises
    ------
    EmptyRegion
        The configuration is empty.
    """
    return largest_component(config, None, labeling=labeling)


class ChemicalDistanceResult:
    """A graph distance inside ``S``, ``inf`` between different components.

    Attributes
    ----------
    value: Union[int, float]
    """

    __slots__ = ("value",)

    def __init__(self, value):
        self.value = value if math.isinf(value) else int(value)

    def __repr__(self):
        return "<%s value=%s>" % (self.__class__.__name__, self.value)

    def __eq__(self, other):
        if isinstance(other, ChemicalDistanceResult):
            return self.value == other.value
        return self.value == other

    def __hash__(self):
        return hash(self.value)

    @property
    def finite(self) -> bool:
        return not math.isinf(self.value)


def _require_occupied(config: Config, point: Sequence[int]) -> int:
    if not config.window.contains(point) or not config.occupied(point):
        raise UsageError("site {} is not occupied".format(tuple(point)))
    return config.window.flat_index(point)


def chemical_distances(config: Config, source: Sequence[int]) -> np.ndarray:
    """Breadth-first graph distances from an occupied ``source`` to every site, ``inf`` if unreachable."""
    index = _require_occupied(config, source)
    return csgraph.shortest_path(config.graph, unweighted=True, indices=index).reshape(config.window.shape)


def chemical_distance(config: Config, x: Sequence[int], y: Sequence[int]) -> ChemicalDistanceResult:
    """The graph distance ``ρ_S(x, y)``.

    Raises
    ------
    UsageError
        Either endpoint is vacant.
    """
    target = _require_occupied(config, y)
    distances = chemical_distances(config, x)
    return ChemicalDistanceResult(float(distances.ravel()[target]))


def chemical_ball(config: Config, x: Sequence[int], radius: float, within: np.ndarray = None) -> np.ndarray:
    """The mask of ``B_S(x, radius)``, optionally intersected with ``within``."""
    ball = chemical_distances(config, x) <= radius
    if within is not None:
        ball &= within
    return ball


class StationarityResult:
    """Slab chi-square p-values per axis for the occupancy counts.

    Ergodicity cannot be decided from one sample, so this is a diagnostic only.
    """

    __slots__ = ("p_values",)

    def __init__(self, p_values):
        self.p_values = tuple(p_values)

    def __repr__(self):
        return "<%s p_values=%s>" % (self.__class__.__name__, self.p_values)

    @property
    def min_p(self) -> float:
        return min(self.p_values)

    def passed(self, alpha: float = 1e-3) -> bool:
        return self.min_p >= alpha


def check_A1(config: Config) -> StationarityResult:
    """Chi-square test of the occupancy count of each coordinate slab against uniformity."""
    p_values = []
    d = config.dimension
    for axis in range(d):
        others = tuple(i for i in range(d) if i != axis)
        counts = config.occupancy.sum(axis=others).astype(float)
        capacity = config.window.size / config.window.side
        if counts.sum() == 0 or np.all(counts == capacity):
            p_values.append(1.0)
            continue
        p_values.append(float(stats.chisquare(counts).pvalue))
    return StationarityResult(p_values)


class UniquenessResult:
    """Whether a component exists and whether it is uniquely the largest."""

    __slots__ = ("exists", "unique", "volume")

    def __init__(self, exists, unique, volume=0):
        self.exists = bool(exists)
        self.unique = bool(unique)
        self.volume = int(volume)

    def __repr__(self):
        return "<%s exists=%s unique=%s volume=%s>" % (
            self.__class__.__name__, self.exists, self.unique, self.volume)

    @property
    def passed(self) -> bool:
        return self.exists and self.unique


def check_A2(config: Config, *, labeling: ClusterLabeling = None) -> UniquenessResult:
    """The infinite-cluster surrogate is non-empty and attains its volume uniquely."""
    try:
        surrogate = infinite_cluster_surrogate(config, labeling=labeling)
    except EmptyRegion:
        return UniquenessResult(False, False)
    return UniquenessResult(True, surrogate.unique, surrogate.volume)


def check_A3(config: Config, R: int, *, surrogate: ComponentSelection = None) -> Tuple[bool, ...]:
    """For each unit direction ``e`` (see :func:`unit_vectors`), whether some ``k e`` with
    ``0 <= k <= R`` lies in the infinite-cluster surrogate."""
    if surrogate is None:
        try:
            surrogate = infinite_cluster_surrogate(config)
        except EmptyRegion:
            return tuple(False for _ in unit_vectors(config.dimension))
    results = []
    for e in unit_vectors(config.dimension):
        results.append(any(surrogate.contains(tuple(k * c for c in e)) for k in range(int(R) + 1)))
    return tuple(results)


class A4Result:
    """Chemical distances within ``S_∞ ∩ B(0, R)`` compared to ``C R``.

    Attributes
    ----------
    holds: bool
        Whether every pair is within chemical distance ``C R``.
    max_distance: float
        The largest pairwise chemical distance found, ``inf`` when some pair is disconnected.
    constant: float
        ``max_distance / R``, the smallest ``C`` for which the check passes.
    exact: bool
        Whether every site served as a breadth-first source.
    sites: int
        The number of sites of ``S_∞ ∩ B(0, R)``.
    """

    __slots__ = ("holds", "max_distance", "constant", "exact", "sites")

    def __init__(self, holds, max_distance, constant, exact, sites):
        self.holds = holds
        self.max_distance = max_distance
        self.constant = constant
        self.exact = exact
        self.sites = sites

    def __repr__(self):
        return "<%s holds=%s constant=%s exact=%s>" % (
            self.__class__.__name__, self.holds, self.constant, self.exact)


def check_A4(config: Config, R: int, C: float, *, surrogate: np.ndarray = None,
             max_sources: int = None) -> A4Result:
    """Check ``ρ_S(x, y) <= C R`` for all ``x, y`` in ``S_∞ ∩ B(0, R)``.

    Parameters
    ----------
    config: :class:`Config`
        The configuration.
    R: int
        The ball radius.
    C: float
        The constant, at least 1.
    surrogate: Optional[:class:`numpy.ndarray`]
        A mask standing in for ``S_∞``. Defaults to :func:`infinite_cluster_surrogate`.
    max_sources: Optional[int]
        Use at most this many evenly spaced breadth-first sources; the result is then
        marked inexact.

    Raises
    ------
    UsageError
        ``C < 1``.
    """
    if C < 1:
        raise UsageError("A4 needs C >= 1, got {}".format(C))
    window = config.window
    if surrogate is None:
        try:
            surrogate = infinite_cluster_surrogate(config).mask
        except EmptyRegion:
            return A4Result(True, 0, 0.0, True, 0)

    ball = linf_ball((0,) * config.dimension, R)
    clipped = ball if window.wrap else ball.intersection(window.box)
    in_ball = np.zeros(window.shape, dtype=bool) if clipped is None else window.box_mask(clipped)
    targets = np.flatnonzero((surrogate & in_ball).ravel())
    if len(targets) < 2:
        return A4Result(True, 0, 0.0, True, len(targets))

    sources = targets
    exact = True
    if max_sources is not None and len(targets) > max_sources:
        sources = targets[np.linspace(0, len(targets) - 1, max_sources).astype(np.int64)]
        exact = False

    worst = 0.0
    for start in range(0, len(sources), BFS_BATCH):
        batch = sources[start:start + BFS_BATCH]
        distances = csgraph.shortest_path(config.graph, unweighted=True, indices=batch)
        worst = max(worst, float(distances[:, targets].max()))
        if math.isinf(worst):
            break

    constant = worst / R if R > 0 else (0.0 if worst == 0 else math.inf)
    holds = worst <= C * R
    LOG.debug("A4 on %s sites: max chemical distance %s (C = %s)", len(targets), worst, constant)
    return A4Result(holds, worst, constant, exact, len(targets))


def _require_fits(config: Config, box: LatticeBox) -> None:
    if not config.window.contains_box(box):
        raise UsageError("the window is too small for {!r}".format(box))


def check_local_uniqueness(config: Config, R: int, *, labeling: ClusterLabeling = None) -> Tuple[bool, bool]:
    """Returns ``(exists, unique)``.

    ``exists`` is ``S_R ∩ B(0, R) != ∅``. ``unique`` is whether all sites of
    ``S_{R/10} ∩ B(0, R)`` are connected within ``S ∩ B(0, 2R)``.

    Raises
    ------
    UsageError
        ``B(0, 2R)`` does not fit the window.
    """
    origin = (0,) * config.dimension
    outer = linf_ball(origin, 2 * R)
    inner = linf_ball(origin, R)
    _require_fits(config, outer)
    window = config.window
    labeling = labeling or label_components(config)

    inner_mask = window.box_mask(inner)
    exists = bool((restrict_s_r(config, R, labeling).occupancy & inner_mask).any())

    small = restrict_s_r(config, R / 10, labeling).occupancy
    local, _ = label_box(window.take_box(config.occupancy, outer))
    offset = R
    sub = tuple(slice(offset, offset + 2 * R + 1) for _ in range(config.dimension))
    wanted = window.take_box(small, inner)
    found = np.unique(local[sub][wanted])
    unique = len(found) <= 1
    return exists, unique


class NestingResult:
    """Whether ``C_R ⊆ C_2R`` and both are uniquely defined."""

    __slots__ = ("contained", "unique_R", "unique_2R")

    def __init__(self, contained, unique_R, unique_2R):
        self.contained = bool(contained)
        self.unique_R = bool(unique_R)
        self.unique_2R = bool(unique_2R)

    def __repr__(self):
        return "<%s contained=%s unique_R=%s unique_2R=%s>" % (
            self.__class__.__name__, self.contained, self.unique_R, self.unique_2R)

    @property
    def passed(self) -> bool:
        return self.contained and self.unique_R and self.unique_2R


def check_C2R_contains_CR(config: Config, R: int) -> NestingResult:
    """Compare the largest components of ``S ∩ B(0, R)`` and ``S ∩ B(0, 2R)``.

    Raises
    ------
    UsageError
        ``B(0, 2R)`` does not fit the window.
    """
    origin = (0,) * config.dimension
    outer = linf_ball(origin, 2 * R)
    _require_fits(config, outer)
    try:
        c_r = largest_component(config, linf_ball(origin, R))
        c_2r = largest_component(config, outer)
    except EmptyRegion:
        return NestingResult(False, False, False)
    contained = not np.any(c_r.mask & ~c_2r.mask)
    return NestingResult(contained, c_r.unique, c_2r.unique)
