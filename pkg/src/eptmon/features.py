"""Windowed 18-dimensional feature extraction from violation traces.

A sliding window of t_window seconds moves in `stride` steps over the first
t_d seconds of a trace. Each window becomes one 18-component vector: for
every access type the per-page-type event counts and the variance of the
faulting physical addresses, plus, for the two write-like access types, the
mean normalized entropy of the captured page contents.

Canonical component order (and the CSV column names):

    read_c4kb  read_c2mb  read_cmmio  read_addr_var
    write_entropy  write_c4kb  write_c2mb  write_cmmio  write_addr_var
    exec_c4kb  exec_c2mb  exec_cmmio  exec_addr_var
    rw_entropy  rw_c4kb  rw_c2mb  rw_cmmio  rw_addr_var

Entropy is normalized to [0, 1] here; counts and variances stay raw, any
further scaling is the model side's business.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from .trace import AccessEvent, AccessType, ClassLabel, PageType, Trace, MICROSECONDS

FEATURE_COLUMNS = (
    "read_c4kb", "read_c2mb", "read_cmmio", "read_addr_var",
    "write_entropy", "write_c4kb", "write_c2mb", "write_cmmio", "write_addr_var",
    "exec_c4kb", "exec_c2mb", "exec_cmmio", "exec_addr_var",
    "rw_entropy", "rw_c4kb", "rw_c2mb", "rw_cmmio", "rw_addr_var",
)
N_FEATURES = len(FEATURE_COLUMNS)  # 18
CSV_HEADER = ("label", "trial_id", "window_start") + FEATURE_COLUMNS

_ACCESS_ORDER = (AccessType.READ, AccessType.WRITE, AccessType.EXECUTE, AccessType.READ_WRITE)


@dataclass(frozen=True)
class WindowConfig:
    t_window: float = 10.0
    t_d: float = 60.0
    stride: float = 1.0

    def validate(self) -> None:
        if not 0 < self.t_window <= self.t_d:
            raise ValueError(
                f"need 0 < t_window <= t_d, got t_window={self.t_window}, t_d={self.t_d}"
            )
        if self.stride <= 0:
            raise ValueError(f"stride must be positive, got {self.stride}")

    def window_starts(self) -> List[float]:
        """Window start times: multiples of stride strictly below t_d - t_window.

        The upper bound is exclusive so t_d=30, t_window=10, stride=1 gives
        the canonical 20 windows (starts 0..19). The degenerate t_d ==
        t_window case still yields the single full-span window.
        """
        if self.t_d == self.t_window:
            return [0.0]
        starts = []
        k = 0
        while True:
            t = k * self.stride
            if t >= self.t_d - self.t_window - 1e-9:
                break
            starts.append(t)
            k += 1
        return starts


@dataclass(frozen=True)
class FeatureVector:
    label: ClassLabel
    trial_id: int
    window_start: float
    values: Tuple[float, ...]  # N_FEATURES components, canonical order

    def __post_init__(self):
        if len(self.values) != N_FEATURES:
            raise ValueError(f"expected {N_FEATURES} components, got {len(self.values)}")


def page_entropy(content: bytes) -> float:
    """Shannon entropy in bits/byte of a captured page, in [0, 8].

    Empty content (a capture that skipped every byte) is defined as 0.
    """
    if not content:
        return 0.0
    counts = np.bincount(np.frombuffer(content, dtype=np.uint8), minlength=256)
    p = counts[counts > 0] / len(content)
    return float(-np.sum(p * np.log2(p)))


def window_entropy(events: Sequence[AccessEvent], access: AccessType) -> float:
    """Mean page entropy over the content-carrying events of one access type,
    normalized to [0, 1]. Zero when no such event exists."""
    if access not in (AccessType.WRITE, AccessType.READ_WRITE):
        raise ValueError(f"entropy is defined for write-like accesses, not {access.name}")
    entropies = [page_entropy(e.content) for e in events if e.access == access and e.content is not None]
    if not entropies:
        return 0.0
    return float(np.mean(entropies)) / 8.0


def page_counts(events: Sequence[AccessEvent], access: AccessType) -> Tuple[int, int, int]:
    """Event counts per page type (4KB, 2MB, MMIO) for one access type."""
    c4, c2, cm = 0, 0, 0
    for e in events:
        if e.access != access:
            continue
        if e.page == PageType.PAGE_4KB:
            c4 += 1
        elif e.page == PageType.PAGE_2MB:
            c2 += 1
        else:
            cm += 1
    return c4, c2, cm


def address_variance(events: Sequence[AccessEvent], access: AccessType) -> float:
    """Sample variance (N-1 denominator) of faulting physical addresses for
    one access type. Zero for fewer than two events."""
    addrs = [e.phys_addr for e in events if e.access == access]
    if len(addrs) < 2:
        return 0.0
    return float(np.var(np.array(addrs, dtype=np.float64), ddof=1))


def window_vector(events: Sequence[AccessEvent]) -> Tuple[float, ...]:
    """The 18 components for one window's events, canonical order."""
    values: List[float] = []
    for access in _ACCESS_ORDER:
        if access.is_write_like:
            values.append(window_entropy(events, access))
        c4, c2, cm = page_counts(events, access)
        values.extend((float(c4), float(c2), float(cm)))
        values.append(address_variance(events, access))
    return tuple(values)


def extract_windows(trace: Trace, config: WindowConfig) -> List[FeatureVector]:
    """Transform a trace into its ordered windowed feature vectors.

    Pure and deterministic; events with equal timestamps may appear in any
    order without changing the result, since every window statistic is
    order-insensitive.
    """
    config.validate()
    if trace.duration < config.t_d - 1e-9:
        raise ValueError(
            f"trace duration {trace.duration} s is shorter than t_d {config.t_d} s"
        )
    ts = np.array([e.timestamp_us for e in trace.events], dtype=np.int64)
    vectors = []
    for start in config.window_starts():
        lo = int(np.searchsorted(ts, round(start * MICROSECONDS), side="left"))
        hi = int(np.searchsorted(ts, round((start + config.t_window) * MICROSECONDS), side="left"))
        window_events = trace.events[lo:hi]
        vectors.append(
            FeatureVector(trace.label, trace.trial_id, start, window_vector(window_events))
        )
    return vectors


def write_features_csv(path, vectors: Iterable[FeatureVector]) -> int:
    """Write feature vectors as RFC-4180 style CSV. Returns the row count."""
    rows = 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for vec in vectors:
            writer.writerow(
                [vec.label.name, vec.trial_id, _fmt(vec.window_start)]
                + [_fmt(v) for v in vec.values]
            )
            rows += 1
    return rows


def read_features_csv(path) -> List[FeatureVector]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader, ()))
        if header != CSV_HEADER:
            raise ValueError(f"{path}: unexpected CSV header {header!r}")
        vectors = []
        for row in reader:
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise ValueError(f"{path}: row with {len(row)} fields, expected {len(CSV_HEADER)}")
            label = ClassLabel.from_name(row[0])
            vectors.append(
                FeatureVector(label, int(row[1]), float(row[2]), tuple(float(v) for v in row[3:]))
            )
        return vectors


def _fmt(x: float) -> str:
    """Shortest round-tripping decimal; integers stay integral."""
    if math.isfinite(x) and x == int(x) and abs(x) < 2**53:
        return str(int(x))
    return repr(float(x))
