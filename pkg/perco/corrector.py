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
import logging

from typing import Iterator, Optional, Sequence, Tuple

import numpy as np

from scipy import sparse
from scipy.sparse import linalg

from .clusters import label_box
from .errors import SolverError, UsageError
from .lattice import LatticeBox, linf_ball
from .samplers import Config
from .utils import as_point

LOG = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-10


class CorrectorField:
    """The corrector ``χ`` of the finite-window Dirichlet problem.

    ``φ(x) = x + χ(x)`` is harmonic for the lazy walk at every interior site of the
    anchor's cluster piece inside :attr:`box`, and equals ``x`` on the sites touching the
    box boundary.

    Attributes
    ----------
    config: :class:`Config`
    box: :class:`LatticeBox`
        The sub-window.
    anchor: Tuple[int]
        The site where ``χ`` vanishes.
    points: :class:`numpy.ndarray`
        ``(n, d)`` unwrapped lattice coordinates of the cluster piece.
    chi: :class:`numpy.ndarray`
        ``(n, d)`` corrector values.
    interior: :class:`numpy.ndarray`
        Which sites carry the harmonic equation.
    residual: float
        The largest harmonicity defect over interior sites.
    iterations: int
        Conjugate gradient iterations, summed over coordinates.
    """

    __slots__ = ("config", "box", "anchor", "points", "chi", "interior", "residual", "iterations",
                 "_adjacency", "_lookup")

    def __init__(self, config, box, anchor, points, chi, interior, residual, iterations, adjacency):
        self.config = config
        self.box = box
        self.anchor = tuple(anchor)
        self.points = points
        self.chi = chi
        self.interior = interior
        self.residual = residual
        self.iterations = iterations
        self._adjacency = adjacency
        self._lookup = {tuple(int(v) for v in p): i for i, p in enumerate(points)}

    def __repr__(self):
        return "<%s anchor=%s sites=%s residual=%.3g>" % (
            self.__class__.__name__, self.anchor, len(self.points), self.residual)

    def __len__(self):
        return len(self.points)

    def __contains__(self, point):
        return as_point(point) in self._lookup

    def sites(self) -> Iterator[Tuple[int, ...]]:
        """Iterate over the sites of the cluster piece as coordinate tuples."""
        return iter(self._lookup)

    def value(self, point: Sequence[int]) -> np.ndarray:
        try:
            return self.chi[self._lookup[as_point(point)]]
        except KeyError:
            raise UsageError("site {} is not in the corrector's cluster piece".format(tuple(point))) from None

    @property
    def phi(self) -> np.ndarray:
        return self.points + self.chi

    @property
    def radius(self) -> int:
        """The ℓ∞ distance from the anchor to the nearest box face."""
        return min(min(a - c, c + s - 1 - a) for a, c, s in zip(self.anchor, self.box.corner, self.box.shape))

    @property
    def max_gradient(self) -> float:
        """``max |χ(x) - χ(y)|`` over the cluster edges of the piece."""
        upper = sparse.triu(self._adjacency, k=1).tocoo()
        if upper.nnz == 0:
            return 0.0
        return float(np.linalg.norm(self.chi[upper.row] - self.chi[upper.col], axis=1).max())

    def max_abs(self, radius: int = None) -> float:
        """``max |χ(x)|`` over the sites within ℓ∞ distance ``radius`` of the anchor."""
        norms = np.linalg.norm(self.chi, axis=1)
        if radius is not None:
            near = np.abs(self.points - np.asarray(self.anchor)).max(axis=1) <= radius
            norms = norms[near]
        return float(norms.max()) if len(norms) else 0.0


def estimate_corrector(config: Config, box: LatticeBox, anchor: Sequence[int], tolerance: float = DEFAULT_TOLERANCE,
                       *, max_iterations: int = None) -> CorrectorField:
    """Solve for the corrector on the cluster piece of ``anchor`` inside ``box``.

    Interior sites are those whose ``2d`` lattice neighbours all lie in the box; the rest
    of the piece is the boundary layer, where ``φ(x) = x``. Each coordinate is solved by
    conjugate gradients on the graph Laplacian, started from the identity, and ``χ`` is
    shifted so that ``χ(anchor) = 0``.

    Raises
    ------
    UsageError
        ``anchor`` is vacant or outside the box, the box leaves the window, or the piece
        never reaches the box boundary.
    SolverError
        Conjugate gradients did not converge.
    """
    anchor = as_point(anchor)
    window = config.window
    if not box.contains(anchor) or not config.occupied(anchor):
        raise UsageError("corrector anchor {} must be an occupied site of {!r}".format(anchor, box))
    if not window.contains_box(box):
        raise UsageError("sub-window {!r} does not fit the window".format(box))

    labels, _ = label_box(window.take_box(config.occupancy, box))
    local_anchor = tuple(a - c for a, c in zip(anchor, box.corner))
    piece = labels == labels[local_anchor]
    indices = np.argwhere(piece)
    n, d = indices.shape
    points = indices + np.asarray(box.corner)

    lookup = np.full(piece.shape, -1, dtype=np.int64)
    lookup[tuple(indices.T)] = np.arange(n)
    interior = np.all((indices > 0) & (indices < np.asarray(piece.shape) - 1), axis=1)
    if interior.all():
        raise UsageError("the cluster piece of {} does not reach the boundary of {!r}".format(anchor, box))

    rows, cols = [], []
    for axis in range(d):
        step = np.zeros(d, dtype=np.int64)
        step[axis] = 1
        target = indices + step
        inside = target[:, axis] < piece.shape[axis]
        found = np.full(n, -1, dtype=np.int64)
        found[inside] = lookup[tuple(target[inside].T)]
        keep = found >= 0
        rows.append(np.flatnonzero(keep))
        cols.append(found[keep])
    rows, cols = np.concatenate(rows), np.concatenate(cols)
    adjacency = sparse.csr_matrix((np.ones(2 * len(rows)), (np.concatenate([rows, cols]), np.concatenate([cols, rows]))),
                                  shape=(n, n))
    laplacian = (sparse.diags(np.asarray(adjacency.sum(axis=1)).ravel()) - adjacency).tocsr()

    inner = np.flatnonzero(interior)
    outer = np.flatnonzero(~interior)
    system = laplacian[inner][:, inner]
    coupling = adjacency[inner][:, outer]
    phi = points.astype(np.float64)
    iterations = 0
    for axis in range(d):
        if not len(inner):
            break
        rhs = coupling @ phi[outer, axis]
        counter = {"n": 0}

        def _count(_):
            counter["n"] += 1

        solution, info = linalg.cg(system, rhs, x0=phi[inner, axis], rtol=tolerance, atol=0.0,
                                   maxiter=max_iterations, callback=_count)
        iterations += counter["n"]
        residual = float(np.linalg.norm(system @ solution - rhs))
        if info != 0:
            raise SolverError("corrector solve did not converge along axis {}".format(axis), residual=residual)
        phi[inner, axis] = solution

    chi = phi - points
    chi -= chi[lookup[local_anchor]]
    defect = (laplacian @ phi)[inner] / (2 * d) if len(inner) else np.zeros((0, d))
    residual = float(np.abs(defect).max()) if len(inner) else 0.0
    LOG.debug("corrector on %s sites (%s interior): %s iterations, residual %.3g", n, len(inner), iterations, residual)
    return CorrectorField(config, box, anchor, points, chi, interior, residual, iterations, adjacency)


def corrector_covariance(field: CorrectorField) -> np.ndarray:
    """``E[(φ(X_1) - φ(X_0))(φ(X_1) - φ(X_0))^T]`` averaged over the interior sites.

    Every cluster neighbour contributes with probability ``1/(2d)``.
    """
    d = field.config.dimension
    upper = sparse.triu(field._adjacency, k=1).tocoo()
    if not field.interior.any():
        return np.zeros((d, d))
    phi = field.phi
    total = np.zeros((d, d))
    for a, b in ((upper.row, upper.col), (upper.col, upper.row)):
        keep = field.interior[a]
        delta = phi[b[keep]] - phi[a[keep]]
        total += delta.T @ delta
    return total / (2 * d) / int(field.interior.sum())


def corrector_field(config: Config, anchor: Sequence[int], radius: int,
                    tolerance: float = DEFAULT_TOLERANCE, *, max_iterations: int = None) -> CorrectorField:
    """:func:`estimate_corrector` on the box ``B(anchor, radius)``."""
    return estimate_corrector(config, linf_ball(anchor, radius), anchor, tolerance, max_iterations=max_iterations)


class SublinearityReport:
    """The sequence ``m_k = max |χ| / k`` over nested radii.

    Attributes
    ----------
    radii: List[int]
    ratios: List[float]
    trend: float
        The fraction of consecutive radii along which ``m_k`` does not increase.
    """

    __slots__ = ("radii", "ratios", "trend")

    def __init__(self, radii, ratios):
        self.radii = list(radii)
        self.ratios = list(ratios)
        steps = list(zip(self.ratios, self.ratios[1:]))
        self.trend = sum(b <= a for a, b in steps) / len(steps)

    def __repr__(self):
        return "<%s radii=%s trend=%.2f>" % (self.__class__.__name__, self.radii, self.trend)

    @property
    def last_doublings_decrease(self) -> bool:
        """Whether ``m_k`` does not increase along either of the two largest radius steps."""
        return self.ratios[-1] <= self.ratios[-2] <= self.ratios[-3]

    def rows(self):
        return list(zip(self.radii, self.ratios))

    def to_dict(self) -> dict:
        return {"radii": self.radii, "ratios": self.ratios, "trend": self.trend}


def check_corrector_sublinearity(fields: Sequence[CorrectorField]) -> SublinearityReport:
    """Compute ``m_k`` for corrector fields at nested radii around one anchor.

    ``m_k`` is the largest ``|χ|`` within ℓ∞ distance ``k`` of the anchor, divided by ``k``.

    Raises
    ------
    UsageError
        Fewer than three fields, different anchors or configurations, or radii that
        are not increasing.
    """
    if len(fields) < 3:
        raise UsageError("sublinearity needs at least three nested radii, got {}".format(len(fields)))
    anchor = fields[0].anchor
    radii = [f.radius for f in fields]
    if any(f.anchor != anchor or f.config is not fields[0].config for f in fields):
        raise UsageError("corrector fields must share the configuration and the anchor")
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise UsageError("radii must be strictly increasing, got {}".format(radii))
    ratios = [f.max_abs(k) / k for f, k in zip(fields, radii)]
    return SublinearityReport(radii, ratios)


class ShiftConsistency:
    """Agreement of ``χ(x) - χ(y)`` with the corrector re-anchored at ``y`` on a translated box.

    Attributes
    ----------
    discrepancy: float
        The largest difference over the compared sites.
    sites: int
        The number of sites compared.
    """

    __slots__ = ("discrepancy", "sites")

    def __init__(self, discrepancy, sites):
        self.discrepancy = discrepancy
        self.sites = sites

    def __repr__(self):
        return "<%s discrepancy=%.3g sites=%s>" % (self.__class__.__name__, self.discrepancy, self.sites)


def check_shift_consistency(config: Config, anchor: Sequence[int], y: Sequence[int], radius: int,
                            tolerance: float = DEFAULT_TOLERANCE, *,
                            field: Optional[CorrectorField] = None) -> ShiftConsistency:
    """Compare ``χ(x) - χ(y)`` on ``B(anchor, radius)`` with ``χ'(x)`` on ``B(y, radius)`` anchored at ``y``.

    Sites within ``radius / 2`` of both ``anchor`` and ``y`` are compared. Finite boxes
    only approximate the translation identity, so the discrepancy is a diagnostic.
    An already solved ``field`` on ``B(anchor, radius)`` is reused when given.
    """
    first = field if field is not None else corrector_field(config, anchor, radius, tolerance)
    if first.anchor != as_point(anchor) or first.radius != radius:
        raise UsageError("the given field is not anchored at {} with radius {}".format(tuple(anchor), radius))
    y = as_point(y)
    if y not in first:
        raise UsageError("site {} is not in the cluster piece of {}".format(y, tuple(anchor)))
    second = corrector_field(config, y, radius, tolerance)
    shift = first.value(y)
    worst, compared = 0.0, 0
    half = radius // 2
    for point in second.sites():
        if max(abs(a - b) for a, b in zip(point, first.anchor)) > half:
            continue
        if max(abs(a - b) for a, b in zip(point, y)) > half or point not in first:
            continue
        compared += 1
        worst = max(worst, float(np.linalg.norm(first.value(point) - shift - second.value(point))))
    return ShiftConsistency(worst, compared)
