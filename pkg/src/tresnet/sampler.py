"""Expanded series and locality/periodicity/tendency fragment sampling."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .analysis import top_k_relevant
from .data import CHANNELS, MAX_CHANNEL, Deployment, SplitSpec, scale
from .errors import EmptyDatasetError, InsufficientDataError, UsageError


@dataclass(frozen=True)
class FragmentSpec:
    """Fragment lengths and strides, in intervals.

    Defaults assume 5-minute data: hourly periodicity stride (12) and daily
    tendency stride (288).
    """

    l_l: int = 12
    l_p: int = 24
    T_p: int = 12
    l_t: int = 7
    T_t: int = 288

    def __post_init__(self):
        for name, value in asdict(self).items():
            if int(value) != value or value < 1:
                raise UsageError(f"fragment parameter {name} must be a positive integer, got {value}")

    @property
    def horizon(self) -> int:
        """Earliest anchor index with a full lookback."""
        return max(self.l_l - 1, (self.l_p - 1) * self.T_p, (self.l_t - 1) * self.T_t)

    def offsets(self):
        """Row offsets relative to the anchor for each fragment (all end at 0)."""
        return (np.arange(-(self.l_l - 1), 1),
                np.arange(-(self.l_p - 1), 1) * self.T_p,
                np.arange(-(self.l_t - 1), 1) * self.T_t)


@dataclass
class ExpandedSeries:
    """Target (min, avg, max) followed by the max channels of ``relevant`` peers."""

    target_vm: int
    relevant: list
    channel_names: list
    values: np.ndarray  # (T, 3 + K), scaled

    @property
    def k(self) -> int:
        return len(self.relevant)


@dataclass
class Sample:
    locality: np.ndarray
    periodicity: np.ndarray
    tendency: np.ndarray
    target: float
    vm: int
    ts: int


def expand_series(deployment: Deployment, target_index: int, k: int, scalers,
                  train_end: int | None = None) -> ExpandedSeries:
    """Scale the target's three channels and append its K most relevant peers.

    Relevance is ranked on the raw max channel over ``[0, train_end)``. Each
    channel is scaled with its owning VM's scaler.
    """
    relevant = top_k_relevant(deployment, target_index, k, end=train_end)
    vm = deployment.vms[target_index]
    cols = [scale(vm.values[:, c], scalers[target_index][c]) for c in range(3)]
    names = [f"{vm.vm_id}:{c}" for c in CHANNELS]
    for j in relevant:
        peer = deployment.vms[j]
        cols.append(scale(peer.v_max, scalers[j][MAX_CHANNEL]))
        names.append(f"{peer.vm_id}:max")
    return ExpandedSeries(target_index, relevant, names, np.column_stack(cols))


def extract_fragments(series, ts: int, spec: FragmentSpec):
    """(locality, periodicity, tendency) matrices ending at row ``ts``."""
    values = series.values if isinstance(series, ExpandedSeries) else np.asarray(series)
    if ts < spec.horizon:
        raise InsufficientDataError(f"anchor {ts} is below the lookback horizon {spec.horizon}")
    if ts >= values.shape[0]:
        raise InsufficientDataError(f"anchor {ts} is past the series end {values.shape[0]}")
    return tuple(values[ts + off] for off in spec.offsets())


class SampleSet:
    """Samples addressed by (vm, ts) into a stack of expanded series.

    Fragments are gathered on demand, so a set costs two index arrays no
    matter how long the lookback is.
    """

    def __init__(self, series: np.ndarray, vm: np.ndarray, ts: np.ndarray, spec: FragmentSpec):
        self.series = series  # (N_vm, T, C)
        self.vm = np.asarray(vm, dtype=np.int64)
        self.ts = np.asarray(ts, dtype=np.int64)
        self.spec = spec
        self._offsets = spec.offsets()

    def __len__(self):
        return self.ts.size

    @property
    def channels(self) -> int:
        return self.series.shape[2]

    @property
    def targets(self) -> np.ndarray:
        return self.series[self.vm, self.ts + 1, MAX_CHANNEL]

    def fragments(self, index=None):
        """Fragment tensors (B, L, C) for the selected samples.

        Unlike :meth:`batch` this works for anchors at the last row, whose
        target lies past the series end.
        """
        vm = self.vm if index is None else self.vm[index]
        ts = self.ts if index is None else self.ts[index]
        return tuple(self.series[vm[:, None], ts[:, None] + off[None, :]] for off in self._offsets)

    def batch(self, index=None):
        """Fragment tensors for the selected samples plus their targets."""
        vm = self.vm if index is None else self.vm[index]
        ts = self.ts if index is None else self.ts[index]
        return self.fragments(index), self.series[vm, ts + 1, MAX_CHANNEL]

    def __getitem__(self, i) -> Sample:
        (loc, per, ten), target = self.batch(np.array([i]))
        return Sample(loc[0], per[0], ten[0], float(target[0]), int(self.vm[i]), int(self.ts[i]))

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def subset(self, mask) -> "SampleSet":
        return SampleSet(self.series, self.vm[mask], self.ts[mask], self.spec)

    def dump(self, sink) -> None:
        """One JSON object per line: shapes, target and anchor of each sample."""
        spec = self.spec
        c = self.channels
        for vm, ts, y in zip(self.vm, self.ts, self.targets):
            sink.write(json.dumps({
                "vm": int(vm), "ts": int(ts), "target": float(y),
                "locality": [spec.l_l, c], "periodicity": [spec.l_p, c], "tendency": [spec.l_t, c],
            }) + "\n")


@dataclass
class DatasetSplits:
    train: SampleSet
    val: SampleSet
    test: SampleSet
    expanded: list


def build_dataset(deployment: Deployment, k: int, spec: FragmentSpec, split: SplitSpec,
                  scalers) -> DatasetSplits:
    """Every (vm, ts) with a full lookback and ``ts + 1 < T``, ordered by (vm, ts).

    A sample belongs to the region holding its target index ``ts + 1``; its
    lookback may reach into earlier regions.
    """
    length = deployment.timeline.length
    split.validate(length)
    expanded = [expand_series(deployment, i, k, scalers, train_end=split.train_end)
                for i in range(len(deployment))]
    stack = np.stack([e.values for e in expanded])
    anchors = np.arange(spec.horizon, length - 1, dtype=np.int64)
    if anchors.size == 0:
        raise EmptyDatasetError(
            f"series of length {length} is too short for lookback horizon {spec.horizon}")
    n_vm = len(deployment)
    vm = np.repeat(np.arange(n_vm, dtype=np.int64), anchors.size)
    ts = np.tile(anchors, n_vm)
    target = ts + 1
    regions = (target < split.train_end,
               (target >= split.train_end) & (target < split.val_end),
               target >= split.val_end)
    sets = [SampleSet(stack, vm[m], ts[m], spec) for m in regions]
    return DatasetSplits(*sets, expanded=expanded)
