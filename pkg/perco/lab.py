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
import itertools
import logging
import threading
import time

from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Union

from .clusters import (
    ClusterLabeling,
    ComponentSelection,
    check_A1,
    check_A2,
    check_A3,
    check_A4,
    check_C2R_contains_CR,
    check_local_uniqueness,
    infinite_cluster_surrogate,
    label_components,
    largest_component,
)
from .corrector import (
    DEFAULT_TOLERANCE,
    check_corrector_sublinearity,
    check_shift_consistency,
    corrector_covariance,
    corrector_field,
)
from .enums import Check, Stream
from .errors import ContractViolation, EmptyRegion, InvalidArgument, PercoException, StageError, UsageError
from .experiment import COLUMNS, FIELDS, CheckResult, ExperimentSpec, RunReport, jsonable, sweep_rows, write_csv
from .fatset import build_fat_set, save_fat_set, special_components, verify_fat_set
from .isoperimetry import check_A5, check_reduction_inequalities, heuristic_profile
from .iterators import ReplicaIterator, SweepIterator, SweepPoint
from .lattice import LatticeBox, linf_ball, neighbours, unit_vectors
from .renormalization import (
    check_event_H,
    classify_good,
    estimate_bad_probability,
    save_goodness,
)
from .samplers import Config, ModelSpec, estimate_eta, sample, save_config
from .utils import FIFO, TimingStats, canonical_json, derive_seed
from .walks import diffusive_fit, estimate_covariance, isotropy_ratio, msd_curve, return_probability

LOG = logging.getLogger(__name__)


class _Run:
    """The state one experiment carries between its stages."""

    __slots__ = ("spec", "out", "config", "labeling", "eta", "ladder", "levels", "event_h", "fat", "special",
                 "surrogate")

    def __init__(self, spec: ExperimentSpec, out: Optional[Path]):
        self.spec = spec
        self.out = out
        self.config: Optional[Config] = None
        self.labeling: Optional[ClusterLabeling] = None
        self.eta: Optional[float] = None
        self.ladder = None
        self.levels = None
        self.event_h = None
        self.fat = None
        self.special = None
        self.surrogate: Optional[ComponentSelection] = None

    @property
    def origin(self):
        return (0,) * self.spec.dimension

    @property
    def h_verified(self) -> bool:
        return self.event_h is not None and self.event_h.holds

    def write(self, name: str, rows) -> None:
        if self.out is not None:
            write_csv(self.out / name, COLUMNS[name], rows)


class Laboratory:
    """This is the top-level class used to run experiments.

    Parameters
    -----------
    workers: int
        The number of threads sweep points and replicas are spread over. The results do
        not depend on it.

        Defaults to ``1``.

    cache_max_size: int
        The maximum number of cluster labellings kept, keyed on the configuration digest.

        Defaults to ``16``.

    slice_sample: int
        The number of slices per dimension :func:`~perco.fatset.verify_fat_set` examines.

        Defaults to ``64``.

    solver_tolerance: float
        The relative residual of the corrector solve, unless an experiment sets its own.

        Defaults to ``1e-10``.

    max_iterations: Optional[int]
        The iteration cap of the corrector solve.

        Defaults to ``None``, which lets the solver pick.

    Attributes
    ----------
    timing_stats: :class:`~perco.utils.TimingStats`
        Wall-clock seconds of the recent runs of every stage.
    """

    __slots__ = (
        "workers",
        "cache_max_size",
        "slice_sample",
        "solver_tolerance",
        "max_iterations",
        "timing_stats",
        "_labelings",
        "_lock",
        "_executor",
    )

    def __init__(
        self,
        *,
        workers: int = 1,
        cache_max_size: int = 16,
        slice_sample: int = 64,
        solver_tolerance: float = DEFAULT_TOLERANCE,
        max_iterations: int = None,
    ):
        if workers < 1:
            raise UsageError("a laboratory needs at least one worker, got {}".format(workers))
        self.workers = workers
        self.cache_max_size = cache_max_size
        self.slice_sample = slice_sample
        self.solver_tolerance = solver_tolerance
        self.max_iterations = max_iterations

        self.timing_stats = TimingStats()
        self._labelings = FIFO(cache_max_size)
        self._lock = threading.Lock()
        self._executor: Optional[ThreadPoolExecutor] = None

    def __repr__(self):
        return "<%s workers=%s cache_max_size=%s>" % (self.__class__.__name__, self.workers, self.cache_max_size)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        self.close()

    @property
    def executor(self) -> ThreadPoolExecutor:
        with self._lock:
            if self._executor is None:
                self._executor = ThreadPoolExecutor(max_workers=self.workers, thread_name_prefix="perco")
            return self._executor

    def close(self) -> None:
        """Shut the worker threads down. The laboratory starts new ones when used again."""
        with self._lock:
            executor, self._executor = self._executor, None
        if executor is not None:
            executor.shutdown(wait=True)

    def sample(self, spec: ModelSpec) -> Config:
        """Sample a configuration, see :func:`~perco.samplers.sample`."""
        return sample(spec)

    def labeling(self, config: Config) -> ClusterLabeling:
        """The component labelling of ``config``, memoised on its digest."""
        key = config.digest
        with self._lock:
            try:
                labeling = self._labelings[key]
            except KeyError:
                labeling = None
        if labeling is not None:
            LOG.debug("labelling cache hit for %s", key[:12])
            return labeling

        labeling = label_components(config)
        with self._lock:
            if key not in self._labelings:
                self._labelings[key] = labeling
        return labeling

    @contextmanager
    def _timed(self, stage: str, report: RunReport):
        LOG.info("stage %s started", stage)
        start = time.perf_counter()
        try:
            yield
        finally:
            elapsed = time.perf_counter() - start
            with self._lock:
                self.timing_stats[stage] = elapsed
            report.timings[stage] = report.timings.get(stage, 0.0) + elapsed
            LOG.info("stage %s finished in %.3fs", stage, elapsed)

    def run_experiment(self, spec: ExperimentSpec, *, out: Union[str, Path] = None) -> RunReport:
        """Run every enabled check of an experiment.

        The configuration is sampled once, then the checks run in :class:`~perco.Check`
        order. CSV files, ``report.txt`` and ``report.json`` and the sampled configuration,
        goodness field and fat set are written below ``out`` (or ``spec.out``) when one is
        set.

        Parameters
        ----------
        spec: :class:`~perco.ExperimentSpec`
            The experiment.
        out: Optional[Union[str, :class:`pathlib.Path`]]
            Overrides ``spec.out``.

        Raises
        ------
        StageError
            A stage raised. The outputs written so far are kept, and the report is saved
            with a failure marker naming the stage.

        Returns
        -------
        :class:`~perco.RunReport`
        """
        out = out or spec.out
        run = _Run(spec, Path(out) if out else None)
        report = RunReport(spec)
        if run.out is not None:
            run.out.mkdir(parents=True, exist_ok=True)

        stages = [("sample", self._stage_sample)]
        if {Check.clusters, Check.goodness, Check.event_h, Check.fat_set} & set(spec.checks):
            stages.append(("eta", self._stage_eta))
        stage_methods = {
            Check.clusters: self._stage_clusters,
            Check.goodness: self._stage_goodness,
            Check.event_h: self._stage_event_h,
            Check.fat_set: self._stage_fat_set,
            Check.isoperimetry: self._stage_isoperimetry,
            Check.walk: self._stage_walk,
            Check.corrector: self._stage_corrector,
        }
        stages += [(check.value, stage_methods[check]) for check in spec.checks]

        for stage, method in stages:
            try:
                with self._timed(stage, report):
                    result = method(run, report)
            except PercoException as exc:
                LOG.error("stage %s failed: %s", stage, exc)
                report.mark_failed(stage, exc)
                if run.out is not None:
                    report.save(run.out)
                raise StageError(stage, exc) from exc
            if result is not None:
                report.add(result)
                if not result.passed:
                    LOG.error("check %s failed: %s", result.name, result.note or result.measured)

        if run.out is not None:
            report.save(run.out)
        LOG.info("experiment %s finished: %s", report.spec_hash[:12], "pass" if report.passed else "fail")
        return report

    # stages

    def _stage_sample(self, run: _Run, report: RunReport) -> None:
        run.config = self.sample(run.spec.model_spec)
        run.labeling = self.labeling(run.config)
        if run.out is not None:
            save_config(run.config, run.out / "config.zst")

    def _stage_eta(self, run: _Run, report: RunReport) -> None:
        spec = run.spec
        if spec.eta is not None:
            run.eta = spec.eta
        else:
            run.eta = estimate_eta(spec.model_spec, spec.eta_replicas).value
        report.eta = run.eta

    def _ladder(self, run: _Run):
        if run.ladder is None:
            run.ladder = run.spec.ladder
        return run.ladder

    def _levels(self, run: _Run):
        if run.levels is None:
            run.levels = run.spec.levels(self._ladder(run))
        return run.levels

    def _surrogate(self, run: _Run) -> Optional[ComponentSelection]:
        if run.surrogate is None:
            try:
                run.surrogate = infinite_cluster_surrogate(run.config, labeling=run.labeling)
            except EmptyRegion:
                return None
        return run.surrogate

    def _stage_clusters(self, run: _Run, report: RunReport) -> CheckResult:
        config, spec = run.config, run.spec
        R = spec.R
        a1 = check_A1(config)
        a2 = check_A2(config, labeling=run.labeling)
        surrogate = self._surrogate(run)
        a3 = check_A3(config, R, surrogate=surrogate)
        a4 = check_A4(config, R, spec.a4_constant, surrogate=surrogate.mask if surrogate else None,
                      max_sources=spec.a4_sources)
        exists, unique = check_local_uniqueness(config, R, labeling=run.labeling)
        nesting = check_C2R_contains_CR(config, R)

        rows = [("a1_min_p", a1.min_p), ("a2_exists", a2.exists), ("a2_unique", a2.unique),
                ("a2_volume", a2.volume)]
        for e, hit in zip(unit_vectors(config.dimension), a3):
            axis = next(i for i, c in enumerate(e) if c)
            rows.append(("a3_{}e{}".format("+" if e[axis] > 0 else "-", axis + 1), hit))
        rows += [("a4_holds", a4.holds), ("a4_constant", a4.constant), ("a4_exact", a4.exact),
                 ("local_exists", exists), ("local_unique", unique),
                 ("nesting_contained", nesting.contained), ("nesting_unique_R", nesting.unique_R),
                 ("nesting_unique_2R", nesting.unique_2R)]
        run.write("clusters.csv", rows)

        passed = a2.passed and all(a3) and exists and unique and nesting.passed
        return CheckResult(Check.clusters, passed, {k: v for k, v in rows})

    def _stage_goodness(self, run: _Run, report: RunReport) -> CheckResult:
        config, spec = run.config, run.spec
        ladder = self._ladder(run)
        field = classify_good(config, ladder, run.eta, ladder.k_max, spec.line_variant, labeling=run.labeling)

        rows, fractions = [], []
        for k in range(field.k_max + 1):
            level = field.level(k)
            boxes = int(level.a_bad.size)
            bad = int(level.bad.sum())
            fraction = bad / boxes if boxes else float("nan")
            if boxes:
                fractions.append(fraction)
            rows.append((k, ladder.L[k], boxes, int(level.a_bad.sum()), int(level.b_bad.sum()), bad, fraction))
        run.write("goodness.csv", rows)
        if run.out is not None:
            save_goodness(field, run.out / "goodness.jsonl")

        measured = {
            "bad_fractions": fractions,
            "uniqueness_condition": ladder.uniqueness_condition(run.eta, config.dimension),
        }
        if spec.bad_replicas:
            estimates = [estimate_bad_probability(spec.model_spec, ladder, run.eta, k, spec.bad_replicas,
                                                  use_line_variant=spec.line_variant)
                         for k in range(ladder.k_max + 1)]
            run.write("bad_probability.csv",
                      [(e.k, e.value, e.stderr, e.replicas, e.envelope) for e in estimates])
            measured["bad_probability"] = [e.value for e in estimates]

        passed = all(b <= a for a, b in zip(fractions, fractions[1:]))
        return CheckResult(Check.goodness, passed, measured)

    def _stage_event_h(self, run: _Run, report: RunReport) -> CheckResult:
        config, spec = run.config, run.spec
        ladder = self._ladder(run)
        levels = self._levels(run)
        event = check_event_H(config, ladder, spec.R, run.eta, levels=levels, labeling=run.labeling)
        run.event_h = event

        rows = []
        for failure in event.failures:
            data = failure.to_dict()
            rows.append((data["clause"], failure.corner, canonical_json(jsonable(data["detail"]))))
        run.write("event_h.csv", rows)

        measured = {"s": levels.s, "r": levels.r, "boxes_checked": event.boxes_checked,
                    "failures": len(event.failures)}
        return CheckResult(Check.event_h, event.holds, measured)

    def _stage_fat_set(self, run: _Run, report: RunReport) -> CheckResult:
        config, spec = run.config, run.spec
        ladder = self._ladder(run)
        levels = self._levels(run)
        d = config.dimension
        L_s = ladder.L[levels.s]
        reach = 2 * spec.R - 2 * L_s
        top = reach // L_s * L_s if reach >= 0 else 0
        region = LatticeBox((-top,) * d, 2 * top + L_s)
        goodness = classify_good(config, ladder, run.eta, levels.s, spec.line_variant, region=region,
                                 labeling=run.labeling)

        try:
            fat = build_fat_set(goodness, ladder, spec.R, levels=levels)
            special = special_components(config, fat, ladder.L0, run.eta, labeling=run.labeling)
        except ContractViolation as exc:
            if run.h_verified:
                raise
            return CheckResult(Check.fat_set, False, {"s": levels.s, "r": levels.r},
                               note="construction refused without event H: {}".format(exc.message))

        verdict = verify_fat_set(fat, ladder, slice_sample=self.slice_sample, seed=spec.seed)
        rows = [("box", d, verdict.min_density, verdict.bounds[d])]
        rows += [("slice", j, verdict.min_slice_density[j], verdict.bounds[j]) for j in range(2, d + 1)]
        run.write("fat_set.csv", rows)
        if run.out is not None:
            save_fat_set(fat, run.out / "fat_set.jsonl")
        if not verdict.passed:
            raise ContractViolation("fat set violates its guarantees: {}".format(verdict.violations[:3]))

        run.fat, run.special = fat, special
        measured = {"members": len(fat), "deletions": len(fat.deletions), **verdict.to_dict()}
        return CheckResult(Check.fat_set, True, measured)

    def _stage_isoperimetry(self, run: _Run, report: RunReport) -> CheckResult:
        config, spec = run.config, run.spec
        R = spec.R
        try:
            c_r = largest_component(config, linf_ball(run.origin, R), labeling=run.labeling)
        except EmptyRegion as exc:
            return CheckResult(Check.isoperimetry, False, note=exc.message)

        seed = derive_seed(spec.seed, Stream.CANDIDATES)
        profile = heuristic_profile(config, c_r, spec.theta_iso, spec.budget, R, seed=seed)
        run.write("iso.csv", [(spec.seed, spec.model, spec.u, R, spec.theta_iso, *row) for row in profile.rows()])
        measured = {"component": c_r.volume, **profile.to_dict()}

        surrogate = self._surrogate(run)
        if surrogate is not None and surrogate.contains(run.origin):
            a5 = check_A5(config, R, spec.budget, seed=seed, surrogate=surrogate)
            measured["a5_ratio"] = a5.ratio

        holds = True
        if run.fat is not None and profile.witness is not None:
            c_2r = largest_component(config, linf_ball(run.origin, 2 * R), labeling=run.labeling).mask
            ladder = self._ladder(run)
            reduction = check_reduction_inequalities(
                config, run.fat, profile.witness, ladder.L[run.levels.s], ladder.L0,
                special=run.special, c_2r=c_2r, h_verified=run.h_verified)
            data = reduction.to_dict()
            run.write("reduction.csv", [tuple(data[c] for c in COLUMNS["reduction.csv"])])
            measured["reduction"] = data
            if reduction.severe:
                raise ContractViolation("coarse-graining inequalities fail under event H: {}".format(data))
            holds = reduction.holds or not reduction.conditioned

        return CheckResult(Check.isoperimetry, profile.ratio > 0 and holds, measured)

    def _walk_start(self, run: _Run):
        surrogate = self._surrogate(run)
        if surrogate is None:
            return None, None
        if surrogate.contains(run.origin):
            return run.origin, surrogate
        LOG.warning("the origin is not in the largest component, starting at %s", surrogate.canonical)
        return surrogate.canonical, surrogate

    def _stage_walk(self, run: _Run, report: RunReport) -> CheckResult:
        config, spec = run.config, run.spec
        x0, surrogate = self._walk_start(run)
        if x0 is None:
            return CheckResult(Check.walk, False, note="no occupied site to start from")

        curve = msd_curve(config, x0, spec.walk_times, spec.replicas, derive_seed(spec.seed, Stream.WALK, 0))
        run.write("msd.csv", curve.rows())
        stats = estimate_covariance(config, x0, spec.n, spec.T, spec.replicas,
                                    derive_seed(spec.seed, Stream.WALK, 1), surrogate=surrogate)
        run.write("covariance.csv", stats.rows())
        returns = return_probability(config, x0, spec.n_max)
        run.write("return.csv", returns.rows())

        measured = {
            "start": list(x0),
            "covariance": stats.covariance.tolist(),
            "min_eigenvalue": stats.min_eigenvalue,
            "isotropy_ratio": isotropy_ratio(stats),
            "return_truncated": returns.truncated,
        }
        if len(curve.times) >= 2:
            fit = diffusive_fit(curve.times, curve.msd)
            measured.update(msd_slope=fit.slope, msd_r_squared=fit.r_squared)
        return CheckResult(Check.walk, stats.min_eigenvalue > 0, measured)

    def _stage_corrector(self, run: _Run, report: RunReport) -> CheckResult:
        config, spec = run.config, run.spec
        anchor, _ = self._walk_start(run)
        if anchor is None:
            return CheckResult(Check.corrector, False, note="no occupied site to anchor the corrector at")

        tolerance = self.solver_tolerance if spec.tolerance is None else spec.tolerance
        fields = [corrector_field(config, anchor, k, tolerance, max_iterations=self.max_iterations)
                  for k in spec.corrector_radii]
        sublinearity = check_corrector_sublinearity(fields)
        run.write("sublinearity.csv", sublinearity.rows())

        largest = fields[-1]
        radius = spec.corrector_radii[-1]
        shift = None
        for y in neighbours(anchor):
            if y in largest and config.window.contains_box(linf_ball(y, radius)):
                shift = check_shift_consistency(config, anchor, y, radius, tolerance, field=largest)
                break
        if shift is None:
            LOG.warning("no neighbour of %s fits a corrector box of radius %s, skipping the shift check", anchor, radius)

        measured = {
            "anchor": list(anchor),
            "sigma_squared": corrector_covariance(largest).tolist(),
            "max_gradient": largest.max_gradient,
            "residual": largest.residual,
            **sublinearity.to_dict(),
            "shift_neighbour": list(y) if shift is not None else None,
            "shift_discrepancy": shift.discrepancy if shift is not None else None,
            "shift_sites": shift.sites if shift is not None else None,
        }
        return CheckResult(Check.corrector, sublinearity.last_doublings_decrease, measured)

    # fan-out

    def get_replicas(self, spec: ModelSpec, function: Callable[[Config, int], Any], count: int,
                     **kwargs) -> ReplicaIterator:
        """Returns an async iterator over ``function(config, i)`` for ``count`` replicas of ``spec``.

        Example
        --------

        .. code-block:: python3

            async for volume in lab.get_replicas(spec, lambda c, i: c.sites, 10):
                print(volume)

        Returns
        -------
        :class:`~perco.iterators.ReplicaIterator`
        """
        if count < 1:
            raise UsageError("at least one replica is needed, got {}".format(count))
        return ReplicaIterator(self, spec, function, count, **kwargs)

    def replicas(self, spec: ModelSpec, function: Callable[[Config, int], Any], count: int, **kwargs) -> List[Any]:
        """Run :meth:`get_replicas` to completion. The results are in replica order."""
        return asyncio.run(self.get_replicas(spec, function, count, **kwargs).flatten())

    def get_sweep(self, template: ExperimentSpec, grid: Dict[str, Sequence[Any]]) -> SweepIterator:
        """Returns an async iterator over one :class:`~perco.iterators.SweepPoint` per grid point.

        The points are the cartesian product of the ``grid`` values, in the order the
        keys were given.

        Raises
        ------
        UsageError
            The grid is empty.
        InvalidArgument
            A grid key is not an experiment field.
        """
        points = grid_points_of(grid)
        unknown = sorted(set(grid) - set(FIELDS))
        if unknown:
            raise InvalidArgument("unknown sweep keys: {}".format(", ".join(unknown)))
        return SweepIterator(self, template, points)

    def sweep(self, template: ExperimentSpec, grid: Dict[str, Sequence[Any]]) -> List[SweepPoint]:
        """Run one experiment per grid point, in parallel over the workers.

        Points that fail are returned with their error and do not stop the sweep.
        A ``sweep.csv`` trend table is written into ``template.out`` when it is set.
        """
        results = asyncio.run(self.get_sweep(template, grid).flatten())
        if template.out:
            columns, rows = sweep_rows(results, list(grid), template.checks)
            path = Path(template.out) / "sweep.csv"
            write_csv(path, columns, rows)
        failed = sum(p.failed for p in results)
        if failed:
            LOG.warning("%s of %s sweep points failed", failed, len(results))
        return results


def grid_points_of(grid: Dict[str, Sequence[Any]]) -> List[Dict[str, Any]]:
    """The cartesian product of a parameter grid as a list of override dicts."""
    if not grid or any(len(values) == 0 for values in grid.values()):
        raise UsageError("the parameter grid is empty")
    keys = list(grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]
