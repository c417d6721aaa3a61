"""Trace ingestion, deployment alignment, log/min-max scaling and splits.

The on-disk trace is a comma separated table with one row per (vm, timestamp)::

    timestamp,vm_id,deployment_id,min_cpu,avg_cpu,max_cpu

CPU columns are fractions in [0, 1] unless the schema declares percentages.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

import numpy as np

from .errors import (
    AlignmentError,
    BoundsError,
    DataError,
    DegenerateScalerError,
    DuplicateError,
    OrderingError,
    ParseError,
    UsageError,
)

TRACE_COLUMNS = ("timestamp", "vm_id", "deployment_id", "min_cpu", "avg_cpu", "max_cpu")
CHANNELS = ("min", "avg", "max")
MAX_CHANNEL = 2
DAY_SECONDS = 86400
DEFAULT_LOG_EPSILON = 1e-3


@dataclass(frozen=True)
class TraceSchema:
    """How to read a trace table.

    ``columns`` maps the canonical column names to the header names used in
    the file, so traces with renamed headers can be read without rewriting.
    """

    percent: bool = False
    interval_seconds: int = 300
    columns: dict = field(default_factory=lambda: {c: c for c in TRACE_COLUMNS})

    def header_name(self, column: str) -> str:
        return self.columns.get(column, column)


@dataclass
class VmSeries:
    """Per-VM (min, avg, max) utilization on a fixed grid.

    ``values`` has shape (T, 3). Intervals without a reading are NaN rows;
    ``filter_long_running`` drops any deployment with such a VM.
    """

    vm_id: str
    interval_seconds: int
    start_timestamp: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] != 3:
            raise DataError(f"VM {self.vm_id}: values must have shape (T, 3)")
        if self.interval_seconds <= 0:
            raise DataError("interval_seconds must be positive")

    def __len__(self):
        return self.values.shape[0]

    @property
    def end_timestamp(self) -> int:
        """Timestamp one interval past the last row."""
        return self.start_timestamp + len(self) * self.interval_seconds

    @property
    def has_gaps(self) -> bool:
        return bool(np.isnan(self.values).any())

    @property
    def v_min(self) -> np.ndarray:
        return self.values[:, 0]

    @property
    def v_avg(self) -> np.ndarray:
        return self.values[:, 1]

    @property
    def v_max(self) -> np.ndarray:
        return self.values[:, 2]

    def window(self, start_timestamp: int, length: int) -> "VmSeries":
        offset, rem = divmod(start_timestamp - self.start_timestamp, self.interval_seconds)
        if rem or offset < 0 or offset + length > len(self):
            raise BoundsError(f"VM {self.vm_id}: window outside recorded span")
        return VmSeries(self.vm_id, self.interval_seconds, start_timestamp,
                        self.values[offset:offset + length].copy())


@dataclass(frozen=True)
class Timeline:
    start_timestamp: int
    interval_seconds: int
    length: int

    def timestamps(self) -> np.ndarray:
        return self.start_timestamp + self.interval_seconds * np.arange(self.length, dtype=np.int64)


@dataclass
class Deployment:
    deployment_id: str
    vms: list

    def __len__(self):
        return len(self.vms)

    @property
    def is_aligned(self) -> bool:
        if not self.vms:
            return False
        first = self.vms[0]
        return all(
            vm.start_timestamp == first.start_timestamp
            and vm.interval_seconds == first.interval_seconds
            and len(vm) == len(first)
            for vm in self.vms
        )

    @property
    def timeline(self) -> Timeline:
        if not self.is_aligned:
            raise DataError(f"deployment {self.deployment_id}: members do not share a timeline")
        vm = self.vms[0]
        return Timeline(vm.start_timestamp, vm.interval_seconds, len(vm))

    def max_matrix(self) -> np.ndarray:
        """(N, T) matrix of max-utilization channels."""
        return np.stack([vm.v_max for vm in self.vms])


def _parse_number(text: str, line: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"cannot parse {column}={text!r} as a number", line) from None
    if not math.isfinite(value):
        raise ParseError(f"{column}={text!r} is not finite", line)
    return value


def _text_lines(source) -> Iterable[str]:
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(bytes(source).decode("utf-8"))
    if isinstance(source, str):
        return io.StringIO(source)
    if isinstance(source, io.TextIOBase):
        return source
    return io.TextIOWrapper(source, encoding="utf-8", newline="")


def parse_trace(source, schema: TraceSchema | None = None) -> list[Deployment]:
    """Read a trace table into deployments.

    ``source`` may be a binary or text stream, or the file content as
    bytes/str. Deployments and VMs keep their first-appearance order; rows
    inside a VM may arrive in any order.
    """
    schema = schema or TraceSchema()
    reader = csv.reader(_text_lines(source))
    header = next(reader, None)
    if header is None or not any(h.strip() for h in header):
        return []
    header = [h.strip() for h in header]
    try:
        idx = {c: header.index(schema.header_name(c)) for c in TRACE_COLUMNS}
    except ValueError as exc:
        raise ParseError(f"header is missing a required column ({exc})", 1) from None

    cap = 100.0 if schema.percent else 1.0
    interval = schema.interval_seconds
    groups: dict[str, dict[str, dict[int, tuple]]] = {}
    for line_no, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", line_no)
        ts_text = row[idx["timestamp"]].strip()
        try:
            ts = int(ts_text)
        except ValueError:
            raise ParseError(f"timestamp {ts_text!r} is not an integer", line_no) from None
        if ts % interval:
            raise AlignmentError(f"timestamp {ts} is not on the {interval}s grid", line_no)
        cpu = []
        for col in ("min_cpu", "avg_cpu", "max_cpu"):
            v = _parse_number(row[idx[col]].strip(), line_no, col)
            if v < 0:
                raise ParseError(f"{col}={v} is negative", line_no)
            cpu.append(min(v, cap) / cap if schema.percent else min(v, cap))
        if not cpu[0] <= cpu[1] <= cpu[2]:
            raise OrderingError(f"expected min <= avg <= max, got {cpu}", line_no)
        vm_id = row[idx["vm_id"]].strip()
        dep = groups.setdefault(row[idx["deployment_id"]].strip(), {})
        readings = dep.setdefault(vm_id, {})
        if ts in readings:
            raise DuplicateError(f"duplicate reading for vm {vm_id} at {ts}", line_no)
        readings[ts] = tuple(cpu)

    deployments = []
    for dep_id, vms in groups.items():
        members = []
        for vm_id, readings in vms.items():
            stamps = sorted(readings)
            start = stamps[0]
            length = (stamps[-1] - start) // interval + 1
            values = np.full((length, 3), np.nan)
            for ts in stamps:
                values[(ts - start) // interval] = readings[ts]
            members.append(VmSeries(vm_id, interval, start, values))
        deployments.append(Deployment(dep_id, members))
    return deployments


def _format_value(v: float) -> str:
    return repr(float(v))


def serialize_trace(deployments: Sequence[Deployment], sink: IO[str], percent: bool = False) -> None:
    """Write deployments in the trace layout read by :func:`parse_trace`.

    Fractions are written with shortest round-trip formatting so that
    ``parse_trace(serialize_trace(d))`` reproduces ``d`` bit for bit. NaN rows
    (missing readings) are skipped.
    """
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(TRACE_COLUMNS)
    scale = 100.0 if percent else 1.0
    for dep in deployments:
        for vm in dep.vms:
            for i, row in enumerate(vm.values):
                if np.isnan(row).any():
                    continue
                ts = vm.start_timestamp + i * vm.interval_seconds
                writer.writerow([ts, vm.vm_id, dep.deployment_id,
                                 *(_format_value(v * scale) for v in row)])


def read_trace(path, schema: TraceSchema | None = None) -> list[Deployment]:
    with open(path, "rb") as fh:
        return parse_trace(fh, schema)


def write_trace(path, deployments: Sequence[Deployment], percent: bool = False) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        serialize_trace(deployments, fh, percent=percent)


def filter_long_running(deployments: Sequence[Deployment], required_span: int,
                        start_timestamp: int | None = None) -> list[Deployment]:
    """Keep deployments whose every VM has gap-free readings over the span.

    The span is ``[start_timestamp, start_timestamp + required_span)`` seconds;
    ``start_timestamp`` defaults to the earliest reading across the input.
    Surviving deployments are trimmed to that window so all members share one
    timeline.
    """
    if not deployments:
        return []
    if start_timestamp is None:
        start_timestamp = min(vm.start_timestamp for d in deployments for vm in d.vms)
    kept = []
    for dep in deployments:
        if not dep.vms:
            continue
        interval = dep.vms[0].interval_seconds
        if required_span <= 0 or required_span % interval:
            raise UsageError(f"required_span {required_span} is not a positive multiple of {interval}")
        length = required_span // interval
        end = start_timestamp + required_span
        trimmed = []
        for vm in dep.vms:
            if (vm.interval_seconds != interval or vm.start_timestamp > start_timestamp
                    or vm.end_timestamp < end):
                break
            window = vm.window(start_timestamp, length)
            if window.has_gaps:
                break
            trimmed.append(window)
        else:
            kept.append(Deployment(dep.deployment_id, trimmed))
    return kept


def trace_span(deployments: Sequence[Deployment]) -> int:
    """Seconds from the earliest reading to one interval past the latest."""
    start = min(vm.start_timestamp for d in deployments for vm in d.vms)
    end = max(vm.end_timestamp for d in deployments for vm in d.vms)
    return end - start


@dataclass(frozen=True)
class ScalerParams:
    log_epsilon: float
    min_value: float
    max_value: float

    def __post_init__(self):
        if not self.log_epsilon > 0:
            raise UsageError("log_epsilon must be positive")
        if not self.max_value > self.min_value:
            raise DegenerateScalerError("scaler range is empty (max <= min)")


def fit_scaler(series, log_epsilon: float = DEFAULT_LOG_EPSILON) -> ScalerParams:
    x = np.asarray(series, dtype=np.float64)
    if x.size == 0:
        raise DataError("cannot fit a scaler on an empty series")
    if (x < 0).any():
        raise DataError("scaler input must be non-negative")
    if not log_epsilon > 0:
        raise UsageError("log_epsilon must be positive")
    logged = np.log(x + log_epsilon)
    lo, hi = float(logged.min()), float(logged.max())
    if hi == lo:
        raise DegenerateScalerError("series is constant after the log transform")
    return ScalerParams(log_epsilon, lo, hi)


def scale(series, params: ScalerParams) -> np.ndarray:
    """Log then min-max map into [0, 1]; values outside the fit range are clamped."""
    x = np.asarray(series, dtype=np.float64)
    out = (np.log(x + params.log_epsilon) - params.min_value) / (params.max_value - params.min_value)
    return np.clip(out, 0.0, 1.0)


def unscale(series, params: ScalerParams) -> np.ndarray:
    s = np.asarray(series, dtype=np.float64)
    return np.exp(s * (params.max_value - params.min_value) + params.min_value) - params.log_epsilon


def fit_deployment_scalers(deployment: Deployment, train_end: int,
                           log_epsilon: float = DEFAULT_LOG_EPSILON) -> list:
    """One (min, avg, max) scaler triple per VM, fit on ``[0, train_end)`` only."""
    scalers = []
    for vm in deployment.vms:
        try:
            scalers.append(tuple(fit_scaler(vm.values[:train_end, c], log_epsilon) for c in range(3)))
        except DegenerateScalerError as exc:
            raise DegenerateScalerError(f"VM {vm.vm_id}: {exc}") from None
    return scalers


@dataclass(frozen=True)
class SplitSpec:
    train_end: int
    val_end: int

    def validate(self, length: int) -> None:
        if not 0 < self.train_end < self.val_end < length:
            raise BoundsError(
                f"split requires 0 < train_end < val_end < T, got "
                f"train_end={self.train_end}, val_end={self.val_end}, T={length}")


def split_by_days(length: int, interval_seconds: int, train_days: float = 14,
                  val_days: float = 7) -> SplitSpec:
    """Wall-clock split; whatever follows the validation days is the test range."""
    steps_per_day = DAY_SECONDS / interval_seconds
    spec = SplitSpec(int(round(train_days * steps_per_day)),
                     int(round((train_days + val_days) * steps_per_day)))
    spec.validate(length)
    return spec


def split(deployment: Deployment, spec: SplitSpec) -> tuple[range, range, range]:
    """Contiguous (train, validation, test) index ranges over the timeline."""
    length = deployment.timeline.length
    spec.validate(length)
    return range(0, spec.train_end), range(spec.train_end, spec.val_end), range(spec.val_end, length)


def downsample_max(series, window: int) -> np.ndarray:
    """Maximum over consecutive windows; a trailing partial window is kept."""
    if window < 1:
        raise UsageError("window must be >= 1")
    x = np.asarray(series, dtype=np.float64)
    if x.size == 0:
        return x.copy()
    starts = np.arange(0, x.size, window)
    return np.maximum.reduceat(x, starts)
