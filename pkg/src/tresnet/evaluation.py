"""Error metrics, simple baselines and comparison reports."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .data import MAX_CHANNEL
from .errors import TResNetError, UndefinedMetricError, UsageError

METRICS = ("rmse", "mae", "mape")
DEFAULT_MAPE_FLOOR = 1e-3


def _pair(predictions, truths):
    p = np.asarray(predictions, dtype=np.float64).ravel()
    y = np.asarray(truths, dtype=np.float64).ravel()
    if p.size != y.size:
        raise UsageError(f"{p.size} predictions for {y.size} truths")
    if p.size == 0:
        raise UsageError("metrics need at least one sample")
    return p, y


def rmse(predictions, truths) -> float:
    p, y = _pair(predictions, truths)
    return math.sqrt(float(np.mean((p - y) ** 2)))


def mae(predictions, truths) -> float:
    p, y = _pair(predictions, truths)
    return float(np.mean(np.abs(p - y)))


def mape_excluded(truths, floor: float = DEFAULT_MAPE_FLOOR) -> int:
    """How many truths fall below the MAPE floor."""
    return int((np.asarray(truths, dtype=np.float64) < floor).sum())


def mape(predictions, truths, floor: float = DEFAULT_MAPE_FLOOR) -> float:
    """Mean of ``|p - y| / y`` over samples with ``y >= floor`` (a fraction, not percent)."""
    if not floor > 0:
        raise UsageError("MAPE floor must be positive")
    p, y = _pair(predictions, truths)
    keep = y >= floor
    if not keep.any():
        raise UndefinedMetricError(f"every truth is below the MAPE floor {floor}")
    return float(np.mean(np.abs(p[keep] - y[keep]) / y[keep]))


# baselines ---------------------------------------------------------------


def naive_predict(samples) -> np.ndarray:
    """Persistence: the target VM's max utilization at the anchor."""
    return samples.series[samples.vm, samples.ts, MAX_CHANNEL].copy()


def seasonal_naive_predict(samples, period: int) -> np.ndarray:
    """The target VM's max utilization one ``period`` (in intervals) before the target."""
    if period < 1:
        raise UsageError("period must be >= 1")
    back = samples.ts + 1 - period
    if len(samples) and back.min() < 0:
        raise UsageError(f"period {period} reaches before the start of the series")
    return samples.series[samples.vm, back, MAX_CHANNEL].copy()


def mean_predict(samples, window: int) -> np.ndarray:
    """Mean of the last ``window`` max values of the locality fragment."""
    if not 1 <= window <= samples.spec.l_l:
        raise UsageError(f"window must lie in [1, {samples.spec.l_l}]")
    offsets = np.arange(-(window - 1), 1)
    rows = samples.series[samples.vm[:, None], samples.ts[:, None] + offsets, MAX_CHANNEL]
    return rows.mean(axis=1)


# reports -----------------------------------------------------------------


@dataclass
class MethodResult:
    method: str
    rmse: float = math.nan
    mae: float = math.nan
    mape: float = math.nan
    n: int = 0
    excluded: int = 0
    error: str | None = None


@dataclass
class MetricReport:
    results: list = field(default_factory=list)
    scale: str = "normalized"
    best: dict = field(default_factory=dict)  # metric -> method name

    def row(self, method: str) -> MethodResult:
        for r in self.results:
            if r.method == method:
                return r
        raise KeyError(method)

    def write_csv(self, sink) -> None:
        writer = csv.writer(sink, lineterminator="\n")
        writer.writerow(["method", "rmse", "mae", "mape", "n", "excluded"])
        for r in self.results:
            writer.writerow([r.method, repr(r.rmse), repr(r.mae), repr(r.mape), r.n, r.excluded])

    def to_text(self) -> str:
        factor = 1e2 if self.scale == "normalized" else 1.0
        unit = " (x1e-2)" if self.scale == "normalized" else ""
        width = max([len("method")] + [len(r.method) for r in self.results])
        lines = [f"scale: {self.scale}{unit}; '*' marks the best method per metric",
                 f"{'method':<{width}}  {'RMSE':>9}  {'MAE':>9}  {'MAPE':>9}  {'n':>7}  {'excl':>5}"]
        for r in self.results:
            if r.error:
                lines.append(f"{r.method:<{width}}  error: {r.error}")
                continue
            cells = []
            for m in METRICS:
                mark = "*" if self.best.get(m) == r.method else " "
                cells.append(f"{getattr(r, m) * factor:>8.3f}{mark}")
            lines.append(f"{r.method:<{width}}  {'  '.join(cells)}  {r.n:>7}  {r.excluded:>5}")
        return "\n".join(lines) + "\n"


def score(method: str, predictions, truths, mape_floor: float = DEFAULT_MAPE_FLOOR) -> MethodResult:
    try:
        return MethodResult(method, rmse(predictions, truths), mae(predictions, truths),
                            mape(predictions, truths, mape_floor), len(truths),
                            mape_excluded(truths, mape_floor))
    except TResNetError as exc:
        return MethodResult(method, error=str(exc))


def evaluate(predictions: dict, truths, mape_floor: float = DEFAULT_MAPE_FLOOR,
             scale: str = "normalized") -> MetricReport:
    """Score each method's predictions; methods keep their insertion order.

    A method whose metrics fail is reported with its error and skipped when
    picking the best; the other methods are unaffected.
    """
    if not predictions:
        raise UsageError("evaluate needs at least one method")
    report = MetricReport(scale=scale)
    for method, pred in predictions.items():
        report.results.append(score(method, pred, truths, mape_floor))
    for m in METRICS:
        ok = [r for r in report.results if r.error is None and math.isfinite(getattr(r, m))]
        if ok:
            report.best[m] = min(ok, key=lambda r: getattr(r, m)).method
    return report


def evaluate_per_vm(predictions: dict, truths, vm, mape_floor: float = DEFAULT_MAPE_FLOOR,
                    scale: str = "normalized") -> dict:
    """One report per VM index."""
    vm = np.asarray(vm)
    truths = np.asarray(truths)
    out = {}
    for v in np.unique(vm):
        m = vm == v
        out[int(v)] = evaluate({k: np.asarray(p)[m] for k, p in predictions.items()},
                               truths[m], mape_floor, scale)
    return out


def variant_name(k: int) -> str:
    return "T-ResNet" if k == 0 else f"T-ResNet-{k}REL"
