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
import asyncio
import logging

from functools import partial
from typing import Any, Callable, Dict, Iterable, Optional

from .errors import PercoException
from .samplers import ModelSpec, replica_spec, sample

LOG = logging.getLogger(__name__)


class _AsyncIterator:
    """Base class for all async iterators."""

    def __aiter__(self):
        return self

    async def __anext__(self):
        try:
            item = await self._next()
        except StopAsyncIteration:
            raise StopAsyncIteration()
        else:
            return item

    async def flatten(self):
        """
        |coro|

        Flattens the async iterator into a :class:`list` with all the elements.

        Returns
        --------
        :class:`list` - A list of every element in the async iterator.
        """
        ret = []
        while True:
            try:
                item = await self._next()
            except StopAsyncIteration:
                return ret
            else:
                ret.append(item)

    async def _next(self):
        return


class ExecutorIterator(_AsyncIterator):
    """Implements filling of the queue from the laboratory's executor and fetching results.

    Every item is submitted at once and the results are queued in submission order,
    so the sequence yielded never depends on how many workers ran them.
    """

    def __init__(self, lab, items: Iterable, **kwargs):
        self.lab = lab
        self.items = list(items)
        self.kwargs = kwargs

        self.queue: Optional[asyncio.Queue] = None
        self.queue_empty = True

        self.run_method: Callable = None  # set in subclass

    async def _run_method(self, index: int, item):
        # pylint: disable=not-callable
        loop = asyncio.get_running_loop()
        return await loop.run_in_executor(self.lab.executor, partial(self.run_method, index, item, **self.kwargs))

    async def _fill_queue(self):
        self.queue = asyncio.Queue()
        tasks = [self._run_method(i, item) for i, item in enumerate(self.items)]

        results = await asyncio.gather(*tasks)

        for result in results:
            self.queue.put_nowait(result)

    async def _next(self):
        """Retrieves the next item from the queue. If empty, fill the queue first."""
        if self.queue_empty:
            await self._fill_queue()
            self.queue_empty = False

        try:
            return self.queue.get_nowait()
        except asyncio.QueueEmpty:
            raise StopAsyncIteration


class ReplicaIterator(ExecutorIterator):
    """Iterator for use with :meth:`~perco.Laboratory.replicas`.

    Replica ``i`` is sampled from :func:`~perco.samplers.replica_spec` and handed to
    ``function(config, i)``.
    """

    def __init__(self, lab, spec: ModelSpec, function: Callable, count: int, **kwargs):
        # pylint: disable=too-many-arguments
        super().__init__(lab, range(count), **kwargs)
        self.spec = spec
        self.function = function
        self.run_method = self.run_replica

    def run_replica(self, index: int, replica: int, **kwargs) -> Any:
        config = sample(replica_spec(self.spec, replica))
        return self.function(config, replica, **kwargs)


class SweepPoint:
    """The outcome of one point of a parameter sweep.

    Attributes
    ----------
    index: int
        The position of the point in the grid.
    parameters: dict
        The overridden spec fields.
    report: Optional[:class:`~perco.RunReport`]
        The run report, ``None`` when the run raised.
    error: Optional[:exc:`PercoException`]
        The error the run raised.
    """

    __slots__ = ("index", "parameters", "report", "error")

    def __init__(self, index: int, parameters: Dict[str, Any], report=None, error: PercoException = None):
        self.index = index
        self.parameters = parameters
        self.report = report
        self.error = error

    def __repr__(self):
        return "<%s index=%s parameters=%s failed=%s>" % (
            self.__class__.__name__, self.index, self.parameters, self.failed)

    @property
    def failed(self) -> bool:
        return self.error is not None


class SweepIterator(ExecutorIterator):
    """Iterator for use with :meth:`~perco.Laboratory.sweep`.

    A point that raises yields a :class:`SweepPoint` carrying the error instead of
    stopping the sweep.
    """

    def __init__(self, lab, template, points: Iterable[Dict[str, Any]], **kwargs):
        super().__init__(lab, points, **kwargs)
        self.template = template
        self.run_method = self.run_point

    def run_point(self, index: int, parameters: Dict[str, Any], **kwargs) -> SweepPoint:
        try:
            spec = self.template.for_point(index, parameters)
            report = self.lab.run_experiment(spec, **kwargs)
        except PercoException as exc:
            LOG.error("sweep point %s %s failed: %s", index, parameters, exc)
            return SweepPoint(index, parameters, error=exc)
        return SweepPoint(index, parameters, report)
