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
import hashlib
import logging
import math

from pathlib import Path
from typing import Iterator, Optional, Sequence, Tuple, Union

import numpy as np
import ujson
import zstandard

from scipy import sparse

from .enums import ModelKind, Stream
from .errors import InvalidArgument, UsageError
from .lattice import Point, Window, edge_pairs, neighbour_count
from .utils import binomial_stderr, cached_property, derive_seed, stream_generator

LOG = logging.getLogger(__name__)

RASTER_FORMAT = "perco-raster"
RASTER_VERSION = 1

# steps of the interlacement walk drawn per chunk
WALK_CHUNK = 1 << 18


class ModelSpec:
    """Describes a measure to sample a configuration from.

    Attributes
    ----------
    kind: :class:`ModelKind`
        The measure family.
    u: float
        The family parameter: occupation probability, field level or intensity.
    window: :class:`Window`
        The window sampled on.
    seed: int
        The 64-bit master seed every random stream is derived from.
    zero_mode_override: bool
        Allows a GFF level set in ``d = 2``, where only the zero-mode-removed torus field
        is defined. The result is a finite-volume surrogate.
    """

    __slots__ = ("kind", "u", "window", "seed", "zero_mode_override")

    def __init__(self, kind, u: float, window: Window, seed: int = 0, *, zero_mode_override: bool = False):
        try:
            self.kind = kind if isinstance(kind, ModelKind) else ModelKind(kind)
        except ValueError:
            raise InvalidArgument("unknown model kind {!r}, expected one of {}".format(kind, ModelKind.values()))
        self.u = float(u)
        self.window = window
        self.seed = int(seed)
        self.zero_mode_override = bool(zero_mode_override)
        self._validate()

    def _validate(self):
        kind, d = self.kind, self.window.dimension
        if math.isnan(self.u):
            raise InvalidArgument("model parameter must be a number")
        if kind is ModelKind.bernoulli and not 0.0 <= self.u <= 1.0:
            raise InvalidArgument("bernoulli occupation probability must lie in [0, 1], got {}".format(self.u))
        if kind in (ModelKind.interlacement, ModelKind.vacant_interlacement):
            if d < 3:
                raise InvalidArgument("interlacements require d >= 3, got d = {}".format(d))
            if self.u < 0:
                raise InvalidArgument("interlacement intensity must be non-negative, got {}".format(self.u))
            if not self.window.wrap:
                raise InvalidArgument("interlacements are sampled on a wrapped window")
        if kind is ModelKind.gff_level:
            if d < 3 and not self.zero_mode_override:
                raise InvalidArgument("the GFF needs d >= 3 unless zero_mode_override is set, got d = {}".format(d))
            if not self.window.wrap:
                raise InvalidArgument("the GFF is sampled on a wrapped window")

    def __repr__(self):
        return "<%s kind=%s u=%s window=%r seed=%s>" % (
            self.__class__.__name__, self.kind.value, self.u, self.window, self.seed)

    def __eq__(self, other):
        return isinstance(other, ModelSpec) and self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash((self.kind, self.u, self.window, self.seed))

    @property
    def dimension(self) -> int:
        return self.window.dimension

    def with_parameter(self, u: float) -> "ModelSpec":
        return ModelSpec(self.kind, u, self.window, self.seed, zero_mode_override=self.zero_mode_override)

    def with_seed(self, seed: int) -> "ModelSpec":
        return ModelSpec(self.kind, self.u, self.window, seed, zero_mode_override=self.zero_mode_override)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "u": self.u,
            "seed": self.seed,
            "zero_mode_override": self.zero_mode_override,
            **self.window.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelSpec":
        data_get = data.get
        window = Window(data_get("side"), data_get("dimension"), data_get("wrap", True))
        return cls(
            data_get("kind"),
            data_get("u"),
            window,
            data_get("seed", 0),
            zero_mode_override=data_get("zero_mode_override", False),
        )


class Config:
    """An occupancy configuration ``ω`` on a :class:`Window`.

    Configs are immutable. The occupied set ``S(ω)`` is ``occupancy``, a read-only boolean
    array indexed by array position (see :meth:`Window.index`).

    Attributes
    ----------
    window: :class:`Window`
        The window the configuration lives on.
    occupancy: :class:`numpy.ndarray`
        Boolean array of shape ``window.shape``.
    spec: Optional[:class:`ModelSpec`]
        The provenance of the sample, ``None`` for hand-built configurations.
    """

    __slots__ = (
        "window",
        "occupancy",
        "spec",

        "_cs_graph",
        "_cs_degrees",
        "_cs_digest",
        "_cs_flat",
    )

    def __init__(self, window: Window, occupancy: np.ndarray, spec: Optional[ModelSpec] = None):
        occupancy = np.array(occupancy, dtype=bool, copy=True)
        if occupancy.shape != window.shape:
            raise UsageError("occupancy of shape {} does not match window shape {}".format(
                occupancy.shape, window.shape))
        occupancy.setflags(write=False)
        self.window = window
        self.occupancy = occupancy
        self.spec = spec

    def __repr__(self):
        return "<%s window=%r sites=%s>" % (self.__class__.__name__, self.window, self.sites)

    def __eq__(self, other):
        return (
            isinstance(other, Config)
            and self.window == other.window
            and np.array_equal(self.occupancy, other.occupancy)
        )

    def __hash__(self):
        return hash(self.digest)

    @classmethod
    def from_array(cls, array, *, wrap: bool = False, spec: Optional[ModelSpec] = None) -> "Config":
        """Build a configuration from a cubic 0/1 array."""
        array = np.asarray(array)
        if array.ndim < 2 or len(set(array.shape)) != 1:
            raise UsageError("a configuration array must be a d-cube with d >= 2, got shape {}".format(array.shape))
        return cls(Window(array.shape[0], array.ndim, wrap), array.astype(bool), spec)

    @classmethod
    def from_points(cls, points: Sequence[Sequence[int]], side: int, dimension: int, *, wrap: bool = False) -> "Config":
        """Build a configuration whose occupied sites are ``points`` (lattice coordinates)."""
        window = Window(side, dimension, wrap)
        occupancy = np.zeros(window.shape, dtype=bool)
        for p in points:
            occupancy[window.index(p)] = True
        return cls(window, occupancy)

    @classmethod
    def full(cls, window: Window) -> "Config":
        return cls(window, np.ones(window.shape, dtype=bool))

    @classmethod
    def empty(cls, window: Window) -> "Config":
        return cls(window, np.zeros(window.shape, dtype=bool))

    @property
    def dimension(self) -> int:
        return self.window.dimension

    @property
    def wrap(self) -> bool:
        return self.window.wrap

    @property
    def sites(self) -> int:
        """:class:`int`: The number of occupied sites, ``|S|``."""
        return int(np.count_nonzero(self.occupancy))

    @property
    def density(self) -> float:
        return self.sites / self.window.size

    def occupied(self, point: Sequence[int]) -> bool:
        return bool(self.occupancy[self.window.index(point)])

    def points(self) -> Iterator[Point]:
        """Iterates the occupied sites in lexicographic array order."""
        for index in zip(*np.nonzero(self.occupancy)):
            yield self.window.point(index)

    def replace(self, occupancy: np.ndarray) -> "Config":
        """A configuration on the same window and with the same provenance."""
        return Config(self.window, occupancy, self.spec)

    def restricted(self, mask: np.ndarray) -> "Config":
        return self.replace(self.occupancy & mask)

    @cached_property("_cs_flat")
    def flat(self) -> np.ndarray:
        return self.occupancy.ravel()

    @cached_property("_cs_degrees")
    def degrees(self) -> np.ndarray:
        """Per-site number of occupied ℓ1 neighbours, zero on vacant sites."""
        degrees = neighbour_count(self.occupancy, self.wrap)
        degrees.setflags(write=False)
        return degrees

    @cached_property("_cs_graph")
    def graph(self) -> sparse.csr_matrix:
        """The symmetric adjacency matrix of ``S`` over flat site indices."""
        src, dst = edge_pairs(self.occupancy, self.wrap)
        n = self.window.size
        data = np.ones(2 * len(src), dtype=np.int8)
        rows = np.concatenate([src, dst])
        cols = np.concatenate([dst, src])
        return sparse.csr_matrix((data, (rows, cols)), shape=(n, n))

    @cached_property("_cs_digest")
    def digest(self) -> str:
        """SHA-256 of the window and occupancy bits, used as a cache key."""
        h = hashlib.sha256()
        h.update(ujson.dumps(self.window.to_dict(), sort_keys=True).encode())
        h.update(np.packbits(self.occupancy.ravel()).tobytes())
        return h.hexdigest()


class EtaEstimate:
    """A Monte-Carlo estimate of the infinite-cluster density ``η(u)``.

    Attributes
    ----------
    value: float
        The fraction of replicas with the origin in the infinite-cluster surrogate.
    stderr: float
        The binomial standard error of ``value``.
    replicas: int
        The number of replicas sampled.
    """

    __slots__ = ("value", "stderr", "replicas")

    def __init__(self, value: float, stderr: float, replicas: int):
        self.value = value
        self.stderr = stderr
        self.replicas = replicas

    def __repr__(self):
        return "<%s value=%.6f stderr=%.6f replicas=%s>" % (
            self.__class__.__name__, self.value, self.stderr, self.replicas)

    def contains(self, value: float, width: float = 3.0) -> bool:
        """Whether ``value`` lies within ``width`` standard errors."""
        return abs(self.value - value) <= width * self.stderr

    def to_dict(self) -> dict:
        return {"value": self.value, "stderr": self.stderr, "replicas": self.replicas}


def _require(spec: ModelSpec, *kinds: ModelKind) -> None:
    if spec.kind not in kinds:
        raise UsageError("expected a {} model, got {}".format("/".join(k.value for k in kinds), spec.kind.value))


def site_uniforms(spec: ModelSpec) -> np.ndarray:
    """The per-site uniforms driving Bernoulli sampling, in row-major site order.

    Uniform ``i`` is draw ``i`` of the ``SITES`` stream, so it only depends on the seed
    and the site.
    """
    generator = stream_generator(spec.seed, Stream.SITES)
    return generator.random(spec.window.size).reshape(spec.window.shape)


def sample_bernoulli(spec: ModelSpec) -> Config:
    """Sample Bernoulli site percolation with occupation probability ``spec.u``.

    Raises
    ------
    UsageError
        ``spec`` is not a bernoulli model.
    """
    _require(spec, ModelKind.bernoulli)
    return Config(spec.window, site_uniforms(spec) < spec.u, spec)


def laplacian_eigenvalues(window: Window) -> np.ndarray:
    """Eigenvalues ``λ_k = 1 - (1/d) Σ cos(2π k_i / N)`` of the walk Laplacian on the torus."""
    d, n = window.dimension, window.side
    cosines = np.cos(2.0 * np.pi * np.fft.fftfreq(n))
    total = np.zeros(window.shape)
    for axis in range(d):
        shape = [1] * d
        shape[axis] = n
        total = total + cosines.reshape(shape)
    return 1.0 - total / d


def _spectral_multiplier(window: Window) -> np.ndarray:
    lam = laplacian_eigenvalues(window)
    multiplier = np.zeros_like(lam)
    positive = lam > 1e-14
    multiplier[positive] = 1.0 / np.sqrt(lam[positive])
    return multiplier


def gff_field(spec: ModelSpec) -> np.ndarray:
    """Sample the discrete Gaussian free field on the torus with the zero mode removed.

    White noise from the ``FIELD`` stream is filtered in Fourier space by ``λ_k^{-1/2}``,
    which gives covariance :func:`green_function`.
    """
    _require(spec, ModelKind.gff_level)
    window = spec.window
    noise = stream_generator(spec.seed, Stream.FIELD).standard_normal(window.shape)
    spectrum = np.fft.fftn(noise) * _spectral_multiplier(window)
    return np.real(np.fft.ifftn(spectrum))


def green_function(window: Window) -> np.ndarray:
    """The torus Green function with the zero mode removed.

    ``G[x] = N^{-d} Σ_{k != 0} exp(i k·x) / λ_k`` for the displacement ``x`` given as an
    array position (displacements are taken modulo ``N``).
    """
    lam = laplacian_eigenvalues(window)
    inverse = np.zeros_like(lam)
    positive = lam > 1e-14
    inverse[positive] = 1.0 / lam[positive]
    return np.real(np.fft.ifftn(inverse))


def sample_gff_level_set(spec: ModelSpec) -> Config:
    """The superlevel set ``{x : φ(x) >= spec.u}`` of :func:`gff_field`."""
    if spec.zero_mode_override and spec.dimension < 3:
        LOG.warning("sampling a d=%s GFF level set: zero-mode-removed torus surrogate", spec.dimension)
    field = gff_field(spec)
    return Config(spec.window, field >= spec.u, spec)


def interlacement_trace(spec: ModelSpec) -> np.ndarray:
    """The sites visited by the torus walk of ``floor(u N^d)`` steps.

    Step ``i`` only depends on draw ``i`` of the ``WALK`` stream, so the walk for a
    smaller ``u`` is a prefix of the walk for a larger one.
    """
    window = spec.window
    n, d = window.side, window.dimension
    steps = int(math.floor(spec.u * window.size))

    start_generator = stream_generator(spec.seed, Stream.START)
    start = np.array(np.unravel_index(int(start_generator.integers(0, window.size)), window.shape), dtype=np.int64)

    visited = np.zeros(window.size, dtype=bool)
    visited[np.ravel_multi_index(tuple(start), window.shape)] = True

    increments = np.zeros((2 * d, d), dtype=np.int64)
    for axis in range(d):
        increments[2 * axis, axis] = 1
        increments[2 * axis + 1, axis] = -1

    generator = stream_generator(spec.seed, Stream.WALK)
    position = start
    done = 0
    while done < steps:
        count = min(WALK_CHUNK, steps - done)
        directions = np.minimum((generator.random(count) * (2 * d)).astype(np.int64), 2 * d - 1)
        path = (position + np.cumsum(increments[directions], axis=0)) % n
        visited[np.ravel_multi_index(tuple(path.T), window.shape)] = True
        position = path[-1]
        done += count

    LOG.debug("interlacement walk of %s steps visited %s sites", steps, int(visited.sum()))
    return visited.reshape(window.shape)


def sample_interlacement(spec: ModelSpec) -> Config:
    """Sample the torus surrogate of the interlacement set, or its vacant set."""
    _require(spec, ModelKind.interlacement, ModelKind.vacant_interlacement)
    trace = interlacement_trace(spec)
    if LOG.isEnabledFor(logging.DEBUG):
        g0 = float(green_function(spec.window).flat[0])
        LOG.debug(
            "interlacement density %.4f, heuristic 1 - exp(-u/g(0)) = %.4f",
            trace.mean(), 1.0 - math.exp(-spec.u / g0) if g0 > 0 else float("nan"),
        )
    if spec.kind is ModelKind.vacant_interlacement:
        trace = ~trace
    return Config(spec.window, trace, spec)


SAMPLERS = {
    ModelKind.bernoulli: sample_bernoulli,
    ModelKind.gff_level: sample_gff_level_set,
    ModelKind.interlacement: sample_interlacement,
    ModelKind.vacant_interlacement: sample_interlacement,
}


def sample(spec: ModelSpec) -> Config:
    """Sample a configuration from whichever family ``spec.kind`` names."""
    return SAMPLERS[spec.kind](spec)


def coupled_pair(spec: ModelSpec, u_low: float, u_high: float) -> Tuple[Config, Config]:
    """Sample the configurations at ``u_low`` and ``u_high`` from one random source.

    For increasing families the low configuration is contained in the high one, for
    ``gff-level`` and ``vacant-interlacement`` the inclusion is reversed.

    Raises
    ------
    UsageError
        ``u_low > u_high``.
    """
    if u_low > u_high:
        raise UsageError("coupled parameters must be ordered, got {} > {}".format(u_low, u_high))
    return sample(spec.with_parameter(u_low)), sample(spec.with_parameter(u_high))


def replica_spec(spec: ModelSpec, replica: int) -> ModelSpec:
    """The spec of replica ``replica``, seeded from the ``REPLICA`` stream."""
    return spec.with_seed(derive_seed(spec.seed, Stream.REPLICA, replica))


def estimate_eta(spec: ModelSpec, replicas: int) -> EtaEstimate:
    """Estimate ``η(u)`` as the fraction of replicas whose origin lies in the
    infinite-cluster surrogate, see :func:`perco.clusters.infinite_cluster_surrogate`.

    Raises
    ------
    UsageError
        ``replicas < 1``.
    """
    from .clusters import infinite_cluster_surrogate

    if replicas < 1:
        raise UsageError("at least one replica is needed, got {}".format(replicas))

    origin = (0,) * spec.dimension
    hits = 0
    for i in range(replicas):
        config = sample(replica_spec(spec, i))
        if not config.occupied(origin):
            continue
        surrogate = infinite_cluster_surrogate(config)
        hits += bool(surrogate.contains(origin))

    value = hits / replicas
    LOG.info("eta(%s, u=%s) = %.4f over %s replicas", spec.kind.value, spec.u, value, replicas)
    return EtaEstimate(value, binomial_stderr(hits, replicas), replicas)


def _header(config: Config) -> dict:
    spec = config.spec
    return {
        "format": RASTER_FORMAT,
        "version": RASTER_VERSION,
        "dimension": config.dimension,
        "side": config.window.side,
        "wrap": config.wrap,
        "kind": spec.kind.value if spec else None,
        "u": spec.u if spec else None,
        "seed": spec.seed if spec else None,
        "zero_mode_override": spec.zero_mode_override if spec else False,
    }


def _from_header(header: dict) -> Window:
    if header.get("format") != RASTER_FORMAT:
        raise UsageError("not a configuration raster")
    if header.get("version") != RASTER_VERSION:
        raise UsageError("unsupported raster version {}".format(header.get("version")))
    return Window(header["side"], header["dimension"], header["wrap"])


def _spec_from_header(header: dict, window: Window) -> Optional[ModelSpec]:
    if header.get("kind") is None:
        return None
    return ModelSpec(header["kind"], header["u"], window, header["seed"],
                     zero_mode_override=header.get("zero_mode_override", False))


def save_config(config: Config, path: Union[str, Path]) -> Path:
    """Write a configuration raster.

    A ``.zst`` path gets a zstandard frame holding the JSON header line followed by the
    :func:`numpy.packbits` payload. Any other path gets the textual raster: the JSON header
    line, then one line of ``0``/``1`` characters per row along the last axis, rows in
    row-major order of the leading axes.
    """
    path = Path(path)
    header = ujson.dumps(_header(config), sort_keys=True)
    if path.suffix == ".zst":
        payload = header.encode() + b"\n" + np.packbits(config.occupancy.ravel()).tobytes()
        path.write_bytes(zstandard.ZstdCompressor(level=10).compress(payload))
    else:
        rows = config.occupancy.reshape(-1, config.window.side).astype(np.uint8)
        lines = ["".join(map(str, row)) for row in rows]
        path.write_text(header + "\n" + "\n".join(lines) + "\n")
    LOG.debug("saved %r to %s", config, path)
    return path


def load_config(path: Union[str, Path]) -> Config:
    """Read a raster written by :func:`save_config`.

    Raises
    ------
    UsageError
        The file is not a raster of a supported version or its payload is truncated.
    """
    path = Path(path)
    if path.suffix == ".zst":
        payload = zstandard.ZstdDecompressor().decompress(path.read_bytes())
        head, _, body = payload.partition(b"\n")
        header = ujson.loads(head.decode())
        window = _from_header(header)
        bits = np.unpackbits(np.frombuffer(body, dtype=np.uint8))
        if bits.size < window.size:
            raise UsageError("raster payload is truncated")
        occupancy = bits[:window.size].astype(bool).reshape(window.shape)
    else:
        lines = path.read_text().splitlines()
        header = ujson.loads(lines[0])
        window = _from_header(header)
        rows = [line.strip() for line in lines[1:] if line.strip()]
        if len(rows) * window.side != window.size or any(len(r) != window.side for r in rows):
            raise UsageError("raster rows do not match a {}^{} window".format(window.side, window.dimension))
        occupancy = np.array([[c == "1" for c in row] for row in rows], dtype=bool).reshape(window.shape)
    return Config(window, occupancy, _spec_from_header(header, window))
