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
import math

from collections import deque, UserDict
from operator import attrgetter
from typing import Any, Callable, Generic, Iterable, Optional, Sequence, Type, TypeVar

import numpy as np
import ujson

from .enums import Stream

T = TypeVar('T')
T_co = TypeVar('T_co', covariant=True)

SEED_MASK = (1 << 64) - 1


def find(predicate: Callable[[T], Any], iterable: Iterable[T]) -> Optional[T]:
    """A helper to return the first element found in the sequence
    that meets the predicate.

    For example: ::

        failed = perco.utils.find(lambda c: not c.passed, report.checks)

    would find the first :class:`~perco.CheckResult` that did not pass and return it.
    If every check passed, then ``None`` is returned.

    Parameters
    -----------
    predicate
        A function that returns a boolean-like result.
    iterable: iterable
        The iterable to search through.

    Returns
    -------
    The first item in the iterable which matches the predicate passed.
    """
    for element in iterable:
        if predicate(element):
            return element
    return None


def get(iterable: Iterable[T], **attrs: Any) -> Optional[T]:
    r"""A helper that returns the first item in an iterable that matches the attributes passed.

    If no match is found, ``None`` is returned.

    Example
    -------
    .. code-block:: python3

        result = utils.get(report.checks, name="fat-set")
        # returns the fat set check result

    Parameters
    ----------
    iterable: iterable
        The list of items to match the attributes from
    \*\*attrs
        A series of kwargs that specify which attributes to match.

    Returns
    -------
    The object from the iterable that matches the attributes passed, or ``None`` if not found.
    """
    converted = [(attrgetter(attr), value) for attr, value in attrs.items()]
    for elem in iterable:
        if all(pred(elem) == value for pred, value in converted):
            return elem
    return None


def stream_key(seed: int, stream: Stream, *indices: int) -> np.ndarray:
    """Derive the 128-bit Philox key for ``(seed, stream, *indices)``.

    The derivation is :class:`numpy.random.SeedSequence` with the stream id and the
    indices as spawn key, so it is stable across platforms and numpy versions.
    """
    sequence = np.random.SeedSequence(int(seed) & SEED_MASK, spawn_key=(int(stream), *map(int, indices)))
    return sequence.generate_state(2, dtype=np.uint64)


def stream_generator(seed: int, stream: Stream, *indices: int) -> np.random.Generator:
    """Returns a counter-based generator keyed on ``(seed, stream, *indices)``.

    Draw ``i`` of the generator is a function of the key and the counter only, so the
    ``i``-th uniform always belongs to the ``i``-th site or step regardless of how work is
    split between threads.
    """
    return np.random.Generator(np.random.Philox(key=stream_key(seed, stream, *indices)))


def derive_seed(seed: int, stream: Stream, *indices: int) -> int:
    """Derive a child 64-bit seed, e.g. the seed of replica ``i`` of an experiment."""
    return int(stream_key(seed, stream, *indices)[0])


def binomial_stderr(successes: int, trials: int) -> float:
    """The standard error of a binomial proportion."""
    if trials <= 0:
        return 0.0
    p = successes / trials
    return math.sqrt(max(p * (1.0 - p), 0.0) / trials)


def format_float(value: float) -> str:
    """Formats floats for CSV output so that identical runs give identical bytes."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    value = float(value)
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    if math.isnan(value):
        return "nan"
    return "{:.12g}".format(value)


def canonical_json(data: Any) -> str:
    """Serializes ``data`` with sorted keys, used for spec hashing and byte-stable files."""
    return ujson.dumps(data, sort_keys=True, escape_forward_slashes=False)


def digest(data: Any) -> str:
    """Returns the SHA-256 hex digest of the canonical JSON form of ``data``."""
    return hashlib.sha256(canonical_json(data).encode("utf-8")).hexdigest()


def as_point(coords: Sequence[int]) -> tuple:
    """Normalise a point given as any integer sequence to a tuple of python ints."""
    return tuple(int(c) for c in coords)


class _CachedProperty(Generic[T, T_co]):
    def __init__(self, name: str, function: Callable[[T], T_co]) -> None:
        self.name = name
        self.function = function
        self.__doc__ = getattr(function, '__doc__')

    def __get__(self, instance: T, owner: Type[T]) -> T_co:
        if instance is None:
            return self
        try:
            return getattr(instance, self.name)
        except AttributeError:
            result = self.function(instance)
            setattr(instance, self.name, result)
            return result


def cached_property(name: str) -> Callable[[Callable[[T], T_co]], _CachedProperty[T, T_co]]:
    def deco(func: Callable[[T], T_co]) -> _CachedProperty[T, T_co]:
        return _CachedProperty(name, func)
    return deco


class FIFO(UserDict):
    """Implements a FIFO dict with a settable max size.

    Used to memoise cluster labellings keyed on a configuration digest.
    """

    __slots__ = (
        "__keys",
        "max_size",
    )

    def __init__(self, max_size):
        self.max_size = max_size
        self.__keys = deque()
        super().__init__()

    def __verify_max_size(self):
        while len(self) > self.max_size:
            del self[self.__keys.popleft()]

    def __setitem__(self, key, value):
        if key not in self.data:
            self.__keys.append(key)
        super().__setitem__(key, value)
        self.__verify_max_size()

    def __getitem__(self, key):
        self.__verify_max_size()
        return super().__getitem__(key)

    def __contains__(self, key):
        self.__verify_max_size()
        return super().__contains__(key)


class TimingStats(dict):
    """Implements a basic key: deque value to aid with per-stage wall-clock stats."""

    __slots__ = ("max_size",)

    def __init__(self, max_size=1000):
        self.max_size = max_size
        super().__init__()

    def __setitem__(self, key, value):
        try:
            super().__getitem__(key).append(value)
        except (KeyError, AttributeError):
            super().__setitem__(key, deque((value,), maxlen=self.max_size))

    def get_average(self, key):
        """Get the average wall-clock time of a stage"""
        try:
            stats = self[key]
        except KeyError:
            return None

        return sum(stats) / len(stats)

    def get_total(self, key):
        """Get the accumulated wall-clock time of a stage"""
        try:
            return sum(self[key])
        except KeyError:
            return 0.0

    def get_all_average(self):
        """Get the average wall-clock time for each stage."""
        return {k: sum(v) / len(v) for k, v in self.items()}
