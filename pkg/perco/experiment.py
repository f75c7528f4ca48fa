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
import csv
import logging
import math

from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import ujson

import perco
from .enums import Check, ModelKind
from .errors import CheckFailure, ContractViolation, InvalidArgument, PercoException
from .lattice import Window
from .renormalization import Levels, ScaleLadder, build_scale_ladder, compute_levels
from .samplers import ModelSpec
from .utils import canonical_json, digest, format_float

LOG = logging.getLogger(__name__)

SCHEMA_VERSION = 1

#: The columns of every CSV file a run can write.
COLUMNS = {
    "clusters.csv": ("predicate", "value"),
    "goodness.csv": ("level", "side", "boxes", "a_bad", "b_bad", "bad", "fraction"),
    "bad_probability.csv": ("k", "value", "stderr", "replicas", "envelope"),
    "event_h.csv": ("clause", "corner", "detail"),
    "fat_set.csv": ("scope", "j", "min_density", "bound"),
    "iso.csv": ("seed", "model", "u", "R", "theta_iso", "method", "size", "boundary", "ratio"),
    "reduction.csv": ("size", "boundary", "coarse_size", "coarse_boundary", "defects",
                      "boundary_bound", "volume_bound", "gamma", "holds", "label"),
    "msd.csv": ("n", "msd", "stderr"),
    "covariance.csv": ("i", "j", "cov", "halfwidth"),
    "return.csv": ("n", "p_2n", "scaled"),
    "sublinearity.csv": ("k", "m_k"),
}


def _flag(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    if value in (0, 1):
        return bool(value)
    raise ValueError("expected a boolean, got {!r}".format(value))


def _integer(value: Any) -> int:
    if isinstance(value, bool) or int(value) != value:
        raise ValueError("expected an integer, got {!r}".format(value))
    return int(value)


def _integers(value: Any) -> Tuple[int, ...]:
    if isinstance(value, (str, bytes)) or not isinstance(value, Sequence):
        raise ValueError("expected a list of integers, got {!r}".format(value))
    return tuple(_integer(v) for v in value)


def _optional(converter: Callable) -> Callable:
    def convert(value):
        return None if value is None else converter(value)
    return convert


def _checks(value: Any) -> Tuple[Check, ...]:
    if value == "all":
        return tuple(Check)
    if isinstance(value, str):
        value = [value]
    wanted = set()
    for name in value:
        try:
            wanted.add(Check(name))
        except ValueError:
            raise ValueError("unknown check {!r}, expected one of {}".format(name, Check.values()))
    return tuple(c for c in Check if c in wanted)


#: ``name: (default, converter)`` of every field an experiment file may set.
FIELDS: Dict[str, Tuple[Any, Callable]] = {
    "model": ("bernoulli", str),
    "u": (0.75, float),
    "side": (64, _integer),
    "dimension": (2, _integer),
    "wrap": (False, _flag),
    "zero_mode_override": (False, _flag),
    "seed": (0, _integer),
    "eta": (None, _optional(float)),
    "eta_replicas": (20, _integer),
    "l0": (9, _integer),
    "r0": (2, _integer),
    "L0": (2, _integer),
    "theta_sc": (1, _integer),
    "k_max": (2, _integer),
    "strict_ladder": (True, _flag),
    "ladder_l": (None, _optional(_integers)),
    "ladder_r": (None, _optional(_integers)),
    "R": (16, _integer),
    "theta_iso": (0.5, float),
    "level_s": (None, _optional(_integer)),
    "level_r": (None, _optional(_integer)),
    "line_variant": (False, _flag),
    "bad_replicas": (0, _integer),
    "a4_constant": (4.0, float),
    "a4_sources": (None, _optional(_integer)),
    "budget": (60, _integer),
    "T": (1.0, float),
    "n": (100, _integer),
    "replicas": (200, _integer),
    "msd_times": (None, _optional(_integers)),
    "n_max": (64, _integer),
    "corrector_radii": ((2, 4, 8), _integers),
    "tolerance": (None, _optional(float)),
    "checks": ((), _checks),
    "out": (None, _optional(str)),
}


class ExperimentSpec:
    """Represents a fully serializable experiment.

    An experiment is read from a flat JSON object whose keys are listed in :data:`FIELDS`.
    Missing keys take their defaults and unknown keys are rejected.

    Attributes
    ----------
    model: str
        The model kind, see :class:`~perco.ModelKind`.
    u: float
        The model parameter.
    side, dimension: int
        The window.
    wrap: bool
        Whether the window is a torus.
    seed: int
        The master seed every random stream of the run derives from.
    eta: Optional[float]
        The infinite-cluster density. Estimated over ``eta_replicas`` replicas when unset.
    l0, r0, L0, theta_sc, k_max: int
        The canonical scale ladder.
    ladder_l, ladder_r: Optional[Tuple[int]]
        Explicit per-level scales, overriding the canonical ladder.
    R: int
        The radius of the isoperimetric and renormalization checks.
    theta_iso: float
        The isoperimetric size exponent.
    level_s, level_r: Optional[int]
        Explicit renormalization levels. Computed from ``R`` and ``theta_iso`` when unset.
    budget: int
        The number of isoperimetric candidates examined.
    T, n, replicas: float, int, int
        The rescaled walk time, the scale and the number of walks.
    n_max: int
        The horizon of the exact return probabilities.
    corrector_radii: Tuple[int]
        The nested radii of the corrector sublinearity check.
    checks: Tuple[:class:`~perco.Check`]
        The enabled checks, in pipeline order.
    tolerance: Optional[float]
        The corrector solver tolerance, the laboratory default when unset.
    out: Optional[str]
        The output directory.
    """

    __slots__ = tuple(FIELDS)

    def __init__(self, *, data: dict = None):
        self._from_data(data or {})

    def __repr__(self):
        return "<%s model=%s u=%s side=%s seed=%s checks=%s>" % (
            self.__class__.__name__, self.model, self.u, self.side, self.seed, [c.value for c in self.checks])

    def __eq__(self, other):
        return isinstance(other, ExperimentSpec) and self.to_dict() == other.to_dict()

    def _from_data(self, data: dict) -> None:
        if not isinstance(data, dict):
            raise InvalidArgument("an experiment must be a JSON object, got {}".format(type(data).__name__))
        unknown = sorted(set(data) - set(FIELDS))
        if unknown:
            raise InvalidArgument("unknown experiment keys: {}".format(", ".join(unknown)))

        data_get = data.get
        for name, (default, converter) in FIELDS.items():
            value = data_get(name, default)
            try:
                setattr(self, name, converter(value))
            except (TypeError, ValueError) as exc:
                raise InvalidArgument("bad value for {!r}: {}".format(name, exc))
        self._validate()

    def _validate(self) -> None:
        if self.model not in ModelKind.values():
            raise InvalidArgument("unknown model {!r}, expected one of {}".format(self.model, ModelKind.values()))
        if self.R < 1 or self.theta_iso <= 0:
            raise InvalidArgument("experiments need R >= 1 and theta_iso > 0")
        if self.eta is not None and not 0.0 <= self.eta <= 1.0:
            raise InvalidArgument("eta must lie in [0, 1], got {}".format(self.eta))
        if self.eta_replicas < 1 or self.budget < 0 or self.n < 1 or self.T <= 0 or self.replicas < 2:
            raise InvalidArgument("experiments need eta_replicas >= 1, budget >= 0, n >= 1, T > 0 and replicas >= 2")
        if self.n_max < 0 or self.bad_replicas < 0:
            raise InvalidArgument("n_max and bad_replicas must be non-negative")
        if (self.ladder_l is None) != (self.ladder_r is None):
            raise InvalidArgument("ladder_l and ladder_r must be given together")
        if self.level_r is not None and self.level_s is None:
            raise InvalidArgument("level_r needs level_s")
        radii = self.corrector_radii
        if Check.corrector in self.checks and (len(radii) < 3 or any(b <= a for a, b in zip(radii, radii[1:]))):
            raise InvalidArgument("corrector_radii must hold at least three increasing radii, got {}".format(radii))
        # builds and validates the model
        self.model_spec  # pylint: disable=pointless-statement

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentSpec":
        return cls(data=data)

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "ExperimentSpec":
        """Load an experiment from a JSON file.

        Raises
        ------
        InvalidArgument
            The file is not a JSON object or holds unknown keys or bad values.
        """
        try:
            data = ujson.loads(Path(path).read_text())
        except ValueError as exc:
            raise InvalidArgument("{} is not valid JSON: {}".format(path, exc))
        return cls(data=data)

    def to_dict(self) -> dict:
        data = {}
        for name in FIELDS:
            value = getattr(self, name)
            if name == "checks":
                value = [c.value for c in value]
            elif isinstance(value, tuple):
                value = list(value)
            data[name] = value
        return data

    @property
    def spec_hash(self) -> str:
        """The SHA-256 digest of the canonical spec, without the output directory."""
        data = self.to_dict()
        data.pop("out")
        return digest(data)

    def with_overrides(self, **overrides) -> "ExperimentSpec":
        """A copy with ``overrides`` applied; ``None`` values are ignored."""
        data = self.to_dict()
        data.update({k: v for k, v in overrides.items() if v is not None})
        return ExperimentSpec(data=data)

    def for_point(self, index: int, parameters: Dict[str, Any]) -> "ExperimentSpec":
        """The spec of point ``index`` of a sweep, writing below ``out/point-NNN``."""
        out = str(Path(self.out) / "point-{:03d}".format(index)) if self.out else None
        return self.with_overrides(**parameters, out=out)

    def enabled(self, check: Check) -> bool:
        return check in self.checks

    @property
    def window(self) -> Window:
        return Window(self.side, self.dimension, self.wrap)

    @property
    def model_spec(self) -> ModelSpec:
        return ModelSpec(self.model, self.u, self.window, self.seed, zero_mode_override=self.zero_mode_override)

    @property
    def ladder(self) -> ScaleLadder:
        if self.ladder_l is not None:
            return ScaleLadder.from_levels(self.ladder_l, self.ladder_r, self.L0, strict=self.strict_ladder)
        return build_scale_ladder(self.l0, self.r0, self.L0, self.theta_sc, self.k_max, strict=self.strict_ladder)

    def levels(self, ladder: ScaleLadder) -> Levels:
        """The explicit levels, or :func:`~perco.renormalization.compute_levels` for ``R``."""
        if self.level_s is not None:
            return Levels(self.level_s, self.level_r)
        return compute_levels(ladder, self.R, self.theta_iso, self.dimension)

    @property
    def walk_times(self) -> Tuple[int, ...]:
        """The MSD times: ``msd_times``, or the powers of two up to ``n`` and ``n`` itself."""
        if self.msd_times is not None:
            return tuple(sorted(set(self.msd_times)))
        times = {self.n}
        t = 1
        while t < self.n:
            times.add(t)
            t *= 2
        return tuple(sorted(times))


class CheckResult:
    """The outcome of one enabled check.

    Attributes
    ----------
    check: :class:`~perco.Check`
    passed: bool
    measured: dict
        The measured values, JSON serializable.
    note: Optional[str]
        Why the check did not run to completion, if it did not.
    """

    __slots__ = ("check", "passed", "measured", "note")

    def __init__(self, check: Check, passed: bool, measured: dict = None, note: str = None):
        self.check = check
        self.passed = bool(passed)
        self.measured = measured or {}
        self.note = note

    def __repr__(self):
        return "<%s check=%s passed=%s>" % (self.__class__.__name__, self.check.value, self.passed)

    @property
    def name(self) -> str:
        return self.check.value

    def to_dict(self) -> dict:
        data = {"check": self.check.value, "passed": self.passed, "measured": jsonable(self.measured)}
        if self.note:
            data["note"] = self.note
        return data


class RunReport:
    """Represents the outcome of :meth:`~perco.Laboratory.run_experiment`.

    Attributes
    ----------
    spec_hash: str
        The digest of the experiment.
    version: str
        The ``perco`` version that produced the report.
    checks: Dict[:class:`~perco.Check`, :class:`CheckResult`]
        One result per enabled check, in pipeline order.
    timings: Dict[str, float]
        Wall-clock seconds per stage.
    failure: Optional[dict]
        The failing stage, reason and message when the run raised.
    eta: Optional[float]
        The infinite-cluster density the run used.
    """

    __slots__ = ("spec_hash", "version", "checks", "timings", "failure", "eta", "seed", "schema")

    def __init__(self, spec: ExperimentSpec):
        self.spec_hash = spec.spec_hash
        self.version = perco.__version__
        self.schema = SCHEMA_VERSION
        self.seed = spec.seed
        self.checks: Dict[Check, CheckResult] = {}
        self.timings: Dict[str, float] = {}
        self.failure: Optional[dict] = None
        self.eta: Optional[float] = None

    def __repr__(self):
        return "<%s spec_hash=%s passed=%s checks=%s>" % (
            self.__class__.__name__, self.spec_hash[:12], self.passed, len(self.checks))

    def __iter__(self):
        return iter(self.checks.values())

    def add(self, result: CheckResult) -> None:
        if result.check in self.checks:
            raise ContractViolation("check {} reported twice".format(result.check.value))
        self.checks[result.check] = result

    def get(self, check: Check) -> Optional[CheckResult]:
        return self.checks.get(check)

    def mark_failed(self, stage: str, exc: PercoException) -> None:
        self.failure = {"stage": stage, "reason": exc.reason, "message": exc.message, "exit_code": exc.exit_code}

    @property
    def passed(self) -> bool:
        return self.failure is None and all(c.passed for c in self.checks.values())

    @property
    def exit_code(self) -> int:
        if self.failure is not None:
            return self.failure["exit_code"]
        return 0 if self.passed else 2

    def raise_for_failure(self) -> None:
        """Raise :exc:`~perco.CheckFailure` naming the enabled checks that did not pass.

        Runs that stopped in a stage raised :exc:`~perco.StageError` already, so only check
        verdicts are considered here.
        """
        failed = [c.name for c in self.checks.values() if not c.passed]
        if failed:
            raise CheckFailure("checks failed: {}".format(", ".join(failed)))

    def to_dict(self) -> dict:
        return {
            "schema": self.schema,
            "spec_hash": self.spec_hash,
            "version": self.version,
            "seed": self.seed,
            "eta": jsonable(self.eta),
            "passed": self.passed,
            "checks": [c.to_dict() for c in self.checks.values()],
            "timings": jsonable(self.timings),
            "failure": self.failure,
        }

    def to_text(self) -> str:
        lines = [
            "perco run report (schema {})".format(self.schema),
            "spec hash: {}".format(self.spec_hash),
            "version: {}".format(self.version),
            "seed: {}".format(self.seed),
            "eta: {}".format(format_float(self.eta) if self.eta is not None else "-"),
            "",
        ]
        if not self.checks:
            lines.append("no checks enabled")
        for result in self.checks.values():
            status = "PASS" if result.passed else "FAIL"
            lines.append("[{}] {}: {}".format(status, result.check.value, result.check))
            for key in sorted(result.measured):
                lines.append("    {} = {}".format(key, _text(result.measured[key])))
            if result.note:
                lines.append("    note: {}".format(result.note))
        if self.failure is not None:
            lines.append("")
            lines.append("FAILED in stage {stage}: {reason}: {message}".format(**self.failure))
        lines.append("")
        lines.append("timings:")
        for stage, seconds in self.timings.items():
            lines.append("    {} {:.3f}s".format(stage, seconds))
        return "\n".join(lines) + "\n"

    def save(self, out: Union[str, Path]) -> None:
        """Write ``report.txt`` and ``report.json`` into ``out``."""
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text(self.to_text())
        (out / "report.json").write_text(canonical_json(self.to_dict()) + "\n")


def _text(value: Any) -> str:
    if isinstance(value, float):
        return format_float(value)
    if isinstance(value, (list, dict)):
        return canonical_json(jsonable(value))
    return str(value)


def _cell(value: Any) -> str:
    if isinstance(value, (tuple, list)):
        return " ".join(_cell(v) for v in value)
    if isinstance(value, str):
        return value
    return format_float(value)


def write_csv(path: Union[str, Path], columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """Write ``rows`` under a header of ``columns``, formatting numbers with
    :func:`~perco.utils.format_float` so identical runs give identical bytes."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fp:
        writer = csv.writer(fp, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            if len(row) != len(columns):
                raise ContractViolation("row {} does not match the columns of {}".format(row, path.name))
            writer.writerow([_cell(v) for v in row])
    LOG.debug("wrote %s", path)
    return path


def sweep_rows(points: List, keys: Sequence[str], checks: Sequence[Check]) -> Tuple[Tuple[str, ...], List[list]]:
    """The trend table of a sweep: one row per point with its parameters, ``eta`` and the
    outcome of every check."""
    columns = ("point", *keys, "eta", *(c.value for c in checks), "status")
    rows = []
    for point in points:
        report = point.report
        row = [point.index, *(point.parameters[k] for k in keys)]
        if report is None:
            row += [None] * (1 + len(checks)) + ["error"]
        else:
            row.append(report.eta)
            row += [report.get(c).passed if report.get(c) else None for c in checks]
            row.append("pass" if report.passed else "fail")
        rows.append(row)
    return columns, rows


def jsonable(value: Any) -> Any:
    """Convert measured values for JSON: numpy scalars and arrays to python objects and
    non-finite floats to the strings ``"inf"``, ``"-inf"`` and ``"nan"``."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else format_float(value)
    return value
