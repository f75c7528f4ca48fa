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
import math

from fractions import Fraction
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from scipy import sparse, stats

from .clusters import ComponentSelection, infinite_cluster_surrogate
from .enums import Stream
from .errors import UsageError
from .lattice import Point, unit_vectors
from .samplers import Config
from .utils import as_point, stream_generator

LOG = logging.getLogger(__name__)

#: steps drawn per chunk of a walk's random stream.
STEP_CHUNK = 1 << 16
#: groups of the delete-a-group jackknife.
JACKKNIFE_GROUPS = 20
#: normal quantile of the reported half-widths.
Z_95 = 1.959963984540054


def _require_occupied(config: Config, point: Sequence[int]) -> Point:
    point = as_point(point)
    if len(point) != config.dimension:
        raise UsageError("point {} has dimension {}, expected {}".format(point, len(point), config.dimension))
    if not config.window.contains(point) or not config.occupied(point):
        raise UsageError("site {} is not occupied".format(point))
    return point


def step_distribution(config: Config, y: Sequence[int], *, exact: bool = False) -> Dict[Point, float]:
    """The one-step law of the lazy walk from ``y``.

    Every occupied ℓ1 neighbour gets ``1/(2d)`` and ``y`` keeps ``1 - deg(y)/(2d)``.

    Parameters
    ----------
    exact: bool
        Return :class:`fractions.Fraction` probabilities instead of floats.

    Raises
    ------
    UsageError
        ``y`` is vacant.
    """
    y = _require_occupied(config, y)
    window = config.window
    d = config.dimension
    unit = Fraction(1, 2 * d) if exact else 1.0 / (2 * d)
    law: Dict[Point, float] = {y: 0 * unit}
    moved = 0
    for e in unit_vectors(d):
        z = tuple(a + b for a, b in zip(y, e))
        if window.contains(z) and config.occupied(z):
            key = window.reduce(z)
            law[key] = law.get(key, 0 * unit) + unit
            moved += 1
    law[y] = law[y] + (1 - moved * unit)
    return law


def neighbour_table(config: Config) -> np.ndarray:
    """Flat index of the neighbour of every site per direction, ``-1`` off a hard window.

    Directions follow :func:`~perco.lattice.unit_vectors`.
    """
    window = config.window
    flat = np.arange(window.size, dtype=np.int64).reshape(window.shape)
    table = []
    for axis in range(config.dimension):
        for step in (1, -1):
            if window.wrap:
                table.append(np.roll(flat, -step, axis=axis).ravel())
                continue
            moved = np.full(window.shape, -1, dtype=np.int64)
            n = window.side
            src = [slice(None)] * config.dimension
            dst = [slice(None)] * config.dimension
            src[axis] = slice(step, n) if step > 0 else slice(0, n + step)
            dst[axis] = slice(0, n - step) if step > 0 else slice(-step, n)
            moved[tuple(dst)] = flat[tuple(src)]
            table.append(moved.ravel())
    return np.stack(table)


class WalkPath:
    """A trajectory of the lazy walk.

    Attributes
    ----------
    config: :class:`Config`
    sites: :class:`numpy.ndarray`
        ``(n + 1, d)`` unwrapped lattice coordinates, ``sites[0]`` being the start.
    start: Tuple[int]
    seed: int
    """

    __slots__ = ("config", "sites", "start", "seed")

    def __init__(self, config, sites, start, seed):
        self.config = config
        self.sites = sites
        self.start = tuple(start)
        self.seed = seed

    def __repr__(self):
        return "<%s start=%s steps=%s>" % (self.__class__.__name__, self.start, self.steps)

    def __len__(self):
        return len(self.sites)

    def __getitem__(self, k) -> Point:
        return tuple(int(v) for v in self.sites[k])

    @property
    def steps(self) -> int:
        return len(self.sites) - 1

    def displacement(self, k: int) -> np.ndarray:
        return self.sites[k] - self.sites[0]


def simulate_walk(config: Config, x0: Sequence[int], n: int, seed: int = 0, *, replica: int = 0) -> WalkPath:
    """Run ``n`` steps of the lazy walk from ``x0``.

    Step ``t`` picks one of the ``2d`` directions with the ``t``-th draw of the ``WALK``
    stream keyed on ``(seed, replica)`` and moves only when the target is occupied.

    Raises
    ------
    UsageError
        ``x0`` is vacant or ``n < 0``.
    """
    x0 = _require_occupied(config, x0)
    if n < 0:
        raise UsageError("a walk needs n >= 0 steps, got {}".format(n))
    d = config.dimension
    table = neighbour_table(config)
    occupied = np.append(config.flat, False)
    increments = np.array(list(unit_vectors(d)), dtype=np.int64)
    rng = stream_generator(seed, Stream.WALK, replica)

    directions = np.empty(n, dtype=np.int64)
    done = 0
    while done < n:
        count = min(STEP_CHUNK, n - done)
        directions[done:done + count] = np.minimum((rng.random(count) * (2 * d)).astype(np.int64), 2 * d - 1)
        done += count

    moves = np.zeros(n, dtype=bool)
    position = config.window.flat_index(x0)
    for t in range(n):
        target = table[directions[t], position]
        if occupied[target]:
            position = target
            moves[t] = True
    steps = increments[directions] * moves[:, None]
    sites = np.vstack([np.array(x0, dtype=np.int64), x0 + np.cumsum(steps, axis=0)])
    return WalkPath(config, sites, x0, seed)


def simulate_ensemble(config: Config, x0: Sequence[int], times: Sequence[int], replicas: int,
                      seed: int = 0) -> np.ndarray:
    """Displacements of ``replicas`` independent walks from ``x0`` at each of ``times``.

    Returns an array of shape ``(replicas, len(times), d)``. Draws come from the
    ``ENSEMBLE`` stream, one row of ``replicas`` uniforms per step.
    """
    x0 = _require_occupied(config, x0)
    if replicas < 1:
        raise UsageError("at least one replica is needed, got {}".format(replicas))
    times = np.asarray(times, dtype=np.int64)
    if len(times) and (times.min() < 0 or np.any(np.diff(times) < 0)):
        raise UsageError("times must be non-negative and non-decreasing")
    d = config.dimension
    table = neighbour_table(config)
    occupied = np.append(config.flat, False)
    increments = np.array(list(unit_vectors(d)), dtype=np.int64)
    rng = stream_generator(seed, Stream.ENSEMBLE)

    out = np.zeros((replicas, len(times), d), dtype=np.int64)
    position = np.full(replicas, config.window.flat_index(x0), dtype=np.int64)
    displacement = np.zeros((replicas, d), dtype=np.int64)
    horizon = int(times[-1]) if len(times) else 0
    slot = 0
    t = 0
    while slot < len(times) and times[slot] == 0:
        slot += 1
    while t < horizon:
        count = min(max(STEP_CHUNK // replicas, 1), horizon - t)
        draws = np.minimum((rng.random((count, replicas)) * (2 * d)).astype(np.int64), 2 * d - 1)
        for row in draws:
            target = table[row, position]
            ok = occupied[target]
            position = np.where(ok, target, position)
            displacement += increments[row] * ok[:, None]
            t += 1
            while slot < len(times) and times[slot] == t:
                out[:, slot] = displacement
                slot += 1
    return out


def interpolate(path: WalkPath, n: int, t: float) -> np.ndarray:
    """The rescaled path ``(1/√n) (X_k + (tn - k)(X_{k+1} - X_k))`` at ``k = ⌊tn⌋``.

    Raises
    ------
    UsageError
        ``t < 0``, ``n < 1`` or the path is too short.
    """
    if n < 1 or t < 0:
        raise UsageError("interpolate needs n >= 1 and t >= 0")
    k = math.floor(t * n)
    frac = t * n - k
    if k >= len(path) or (frac > 0 and k + 1 >= len(path)):
        raise UsageError("t = {} lies beyond a path of {} steps".format(t, path.steps))
    here = path.sites[k].astype(np.float64)
    if frac > 0:
        here = here + frac * (path.sites[k + 1] - path.sites[k])
    return here / math.sqrt(n)


def _jackknife_halfwidth(samples: np.ndarray, estimator, groups: int = JACKKNIFE_GROUPS) -> np.ndarray:
    groups = min(groups, len(samples))
    if groups < 2:
        return np.zeros_like(estimator(samples))
    chunks = np.array_split(np.arange(len(samples)), groups)
    estimates = np.stack([estimator(np.delete(samples, chunk, axis=0)) for chunk in chunks])
    variance = (groups - 1) / groups * ((estimates - estimates.mean(axis=0)) ** 2).sum(axis=0)
    return Z_95 * np.sqrt(variance)


def _covariance(samples: np.ndarray) -> np.ndarray:
    return np.atleast_2d(np.cov(samples, rowvar=False, ddof=1))


class WalkStats:
    """Invariance-principle diagnostics of one configuration.

    Attributes
    ----------
    covariance: :class:`numpy.ndarray`
        The ``d × d`` sample covariance of ``B̃_n(T)``.
    halfwidths: :class:`numpy.ndarray`
        Jackknife 95% half-widths of the entries.
    min_eigenvalue: float
        The smallest eigenvalue of :attr:`covariance`.
    replicas: int
    n: int
    T: float
    """

    __slots__ = ("covariance", "halfwidths", "min_eigenvalue", "replicas", "n", "T", "eigenvalues")

    def __init__(self, covariance, halfwidths, replicas, n, T):
        self.covariance = (covariance + covariance.T) / 2
        self.halfwidths = halfwidths
        self.eigenvalues = np.linalg.eigvalsh(self.covariance)
        self.min_eigenvalue = float(self.eigenvalues[0])
        self.replicas = replicas
        self.n = n
        self.T = T

    def __repr__(self):
        return "<%s n=%s T=%s replicas=%s min_eigenvalue=%.4g>" % (
            self.__class__.__name__, self.n, self.T, self.replicas, self.min_eigenvalue)

    @property
    def non_degenerate(self) -> bool:
        """Whether the smallest eigenvalue exceeds five of the largest half-widths."""
        return self.min_eigenvalue > 5 * float(self.halfwidths.max())

    def rows(self):
        """``(i, j, cov, halfwidth)`` for every entry, row-major."""
        d = self.covariance.shape[0]
        return [(i, j, float(self.covariance[i, j]), float(self.halfwidths[i, j])) for i in range(d) for j in range(d)]

    def to_dict(self) -> dict:
        return {
            "covariance": self.covariance.tolist(),
            "halfwidths": self.halfwidths.tolist(),
            "min_eigenvalue": self.min_eigenvalue,
            "replicas": self.replicas,
            "n": self.n,
            "T": self.T,
        }


def _check_start(config: Config, x0: Point, surrogate: Optional[ComponentSelection]) -> None:
    surrogate = surrogate or infinite_cluster_surrogate(config)
    if not surrogate.contains(x0):
        LOG.warning("walk start %s is not in the largest component", x0)


def estimate_covariance(config: Config, x0: Sequence[int], n: int, T: float, replicas: int, seed: int = 0, *,
                        surrogate: ComponentSelection = None) -> WalkStats:
    """Estimate the covariance of ``B̃_n(T)`` over independent walks from ``x0``.

    Raises
    ------
    UsageError
        ``x0`` is vacant, ``n < 1``, ``T <= 0`` or fewer than two replicas.
    """
    x0 = _require_occupied(config, x0)
    if n < 1 or T <= 0 or replicas < 2:
        raise UsageError("estimate_covariance needs n >= 1, T > 0 and at least two replicas")
    _check_start(config, x0, surrogate)

    k = math.floor(T * n)
    frac = T * n - k
    displacements = simulate_ensemble(config, x0, [k, k + 1], replicas, seed).astype(np.float64)
    endpoints = (displacements[:, 0] + frac * (displacements[:, 1] - displacements[:, 0])) / math.sqrt(n)

    covariance = _covariance(endpoints)
    halfwidths = _jackknife_halfwidth(endpoints, _covariance)
    result = WalkStats(covariance, halfwidths, replicas, n, T)
    LOG.debug("covariance estimate %r", result)
    return result


def isotropy_ratio(walk_stats: WalkStats) -> float:
    """The ratio of the largest to the smallest covariance eigenvalue, ``inf`` when degenerate."""
    low, high = float(walk_stats.eigenvalues[0]), float(walk_stats.eigenvalues[-1])
    if low <= 0:
        return math.inf
    return high / low


class MSDCurve:
    """Mean squared displacement with standard errors.

    Attributes
    ----------
    times: :class:`numpy.ndarray`
    msd: :class:`numpy.ndarray`
    stderr: :class:`numpy.ndarray`
    replicas: int
    """

    __slots__ = ("times", "msd", "stderr", "replicas")

    def __init__(self, times, msd, stderr, replicas):
        self.times = times
        self.msd = msd
        self.stderr = stderr
        self.replicas = replicas

    def __repr__(self):
        return "<%s points=%s replicas=%s>" % (self.__class__.__name__, len(self.times), self.replicas)

    def rows(self):
        return [(int(t), float(m), float(s)) for t, m, s in zip(self.times, self.msd, self.stderr)]


def msd_curve(config: Config, x0: Sequence[int], times: Sequence[int], replicas: int, seed: int = 0) -> MSDCurve:
    """``E |X_t - x0|^2`` at each of ``times`` over ``replicas`` walks."""
    times = np.asarray(sorted(int(t) for t in times), dtype=np.int64)
    displacements = simulate_ensemble(config, x0, times, replicas, seed)
    squared = (displacements.astype(np.float64) ** 2).sum(axis=2)
    msd = squared.mean(axis=0)
    stderr = squared.std(axis=0, ddof=1) / math.sqrt(replicas) if replicas > 1 else np.zeros_like(msd)
    return MSDCurve(times, msd, stderr, replicas)


class DiffusiveFit:
    """A least-squares line ``msd ≈ slope * n + intercept``."""

    __slots__ = ("slope", "intercept", "r_squared")

    def __init__(self, slope, intercept, r_squared):
        self.slope = slope
        self.intercept = intercept
        self.r_squared = r_squared

    def __repr__(self):
        return "<%s slope=%.4f r_squared=%.4f>" % (self.__class__.__name__, self.slope, self.r_squared)

    @property
    def diffusive(self) -> bool:
        return self.slope > 0 and self.r_squared >= 0.99


def diffusive_fit(times: Sequence[float], msd: Sequence[float]) -> DiffusiveFit:
    """Fit the MSD linearly in time.

    Raises
    ------
    UsageError
        Fewer than two points.
    """
    if len(times) < 2 or len(times) != len(msd):
        raise UsageError("diffusive_fit needs at least two (time, msd) pairs")
    fit = stats.linregress(np.asarray(times, dtype=np.float64), np.asarray(msd, dtype=np.float64))
    r_squared = fit.rvalue ** 2 if np.isfinite(fit.rvalue) else 0.0
    return DiffusiveFit(float(fit.slope), float(fit.intercept), float(r_squared))


def transition_matrix(config: Config) -> sparse.csr_matrix:
    """The lazy walk kernel as a sparse matrix over flat site indices."""
    d = config.dimension
    stay = np.where(config.flat, 1.0 - config.degrees.ravel() / (2.0 * d), 0.0)
    return (config.graph.astype(np.float64) / (2.0 * d) + sparse.diags(stay)).tocsr()


class ReturnProbabilities:
    """Exact return probabilities ``p_k = P_x[X_k = x]``.

    Attributes
    ----------
    p: :class:`numpy.ndarray`
        ``p_0 .. p_{horizon}``.
    truncated: bool
        Whether the requested horizon exceeded ``N/2`` steps and was cut there.
    dimension: int
    """

    __slots__ = ("p", "truncated", "dimension")

    def __init__(self, p, truncated, dimension):
        self.p = p
        self.truncated = truncated
        self.dimension = dimension

    def __repr__(self):
        return "<%s horizon=%s truncated=%s>" % (self.__class__.__name__, len(self.p) - 1, self.truncated)

    def __getitem__(self, k):
        return self.p[k]

    def __len__(self):
        return len(self.p)

    def even(self) -> Tuple[np.ndarray, np.ndarray]:
        """``(n, p_{2n})`` for every ``n >= 1`` within the horizon."""
        n = np.arange(1, (len(self.p) - 1) // 2 + 1)
        return n, self.p[2 * n]

    def scaled(self, n_range: Tuple[int, int] = None) -> Tuple[np.ndarray, np.ndarray]:
        """``(n, n^{d/2} p_{2n})``, optionally restricted to ``n_range`` (inclusive)."""
        n, p = self.even()
        values = n ** (self.dimension / 2) * p
        if n_range is not None:
            keep = (n >= n_range[0]) & (n <= n_range[1])
            n, values = n[keep], values[keep]
        return n, values

    def bounds(self, n_range: Tuple[int, int] = None) -> Tuple[float, float]:
        """The infimum and supremum of ``n^{d/2} p_{2n}`` over the range."""
        _, values = self.scaled(n_range)
        if not len(values):
            return math.nan, math.nan
        return float(values.min()), float(values.max())

    def rows(self):
        n, p = self.even()
        scaled = n ** (self.dimension / 2) * p
        return [(int(a), float(b), float(c)) for a, b, c in zip(n, p, scaled)]


def return_probability(config: Config, x: Sequence[int], n_max: int) -> ReturnProbabilities:
    """Exact ``P_x[X_k = x]`` for ``k <= n_max`` by forward convolution of the kernel.

    The horizon is cut at ``N/2`` steps, beyond which the finite window is felt, and the
    result is flagged as truncated.

    Raises
    ------
    UsageError
        ``x`` is vacant or ``n_max < 0``.
    """
    x = _require_occupied(config, x)
    if n_max < 0:
        raise UsageError("n_max must be non-negative, got {}".format(n_max))
    horizon = config.window.side // 2
    truncated = n_max > horizon
    if truncated:
        LOG.warning("return probability horizon %s cut to %s steps", n_max, horizon)
        n_max = horizon

    kernel = transition_matrix(config).T.tocsr()
    source = config.window.flat_index(x)
    mu = np.zeros(config.window.size)
    mu[source] = 1.0
    p = np.empty(n_max + 1)
    p[0] = 1.0
    for k in range(1, n_max + 1):
        mu = kernel @ mu
        p[k] = mu[source]
    return ReturnProbabilities(p, truncated, config.dimension)
