"""Domain types for EPT-violation telemetry.

Everything downstream (wire format, simulator, feature extraction, models)
works in terms of these types. All of them are immutable after construction
and safe to share between threads.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Optional, Tuple

PAGE_4KB_SIZE = 4096
PAGE_2MB_SIZE = 2 * 1024 * 1024
MAX_CONTENT_LEN = 4096
MICROSECONDS = 1_000_000


class AccessType(IntEnum):
    """Access type reported by the Exit Qualification of a VM exit.

    READ_WRITE is its own category: it is emitted when both the read and
    write qualification bits are set, never as a separate READ plus WRITE.
    """
    READ = 0
    WRITE = 1
    EXECUTE = 2
    READ_WRITE = 3

    @property
    def is_write_like(self) -> bool:
        return self in (AccessType.WRITE, AccessType.READ_WRITE)


class PageType(IntEnum):
    PAGE_4KB = 0
    PAGE_2MB = 1
    MMIO = 2


class ClassLabel(IntEnum):
    """Workload classes. The first four are malicious, the rest benign."""
    WANNACRY = 0
    SODINOKIBI = 1
    DARKSIDE = 2
    CADDYWIPER = 3
    IDLE = 4
    AESCRYPT = 5
    ZIP = 6
    OFFICE = 7

    @property
    def is_malicious(self) -> bool:
        return self <= ClassLabel.CADDYWIPER

    @classmethod
    def from_name(cls, name: str) -> "ClassLabel":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise ValueError(
                f"unknown class {name!r}; expected one of "
                f"{', '.join(m.name for m in cls)}"
            ) from None


MALICIOUS_LABELS = tuple(label for label in ClassLabel if label.is_malicious)
BENIGN_LABELS = tuple(label for label in ClassLabel if not label.is_malicious)


@dataclass(frozen=True)
class AccessEvent:
    """One EPT violation.

    timestamp_us: microseconds since trial start.
    phys_addr:    host physical byte address of the faulting page; page-aligned
                  for RAM pages (4 KiB / 2 MiB), arbitrary for MMIO.
    content:      captured page bytes after zero-skip, present only for
                  write-like accesses on non-MMIO pages. Empty bytes means the
                  capture ran but every byte in the page was zero. None means
                  no capture (reads, executes, MMIO, or a capture that never
                  fired before trial end).
    """
    timestamp_us: int
    access: AccessType
    page: PageType
    phys_addr: int
    content: Optional[bytes] = None


@dataclass(frozen=True)
class Trace:
    """Ordered event sequence for one labeled trial."""
    label: ClassLabel
    trial_id: int
    duration: float  # seconds
    events: Tuple[AccessEvent, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if not isinstance(self.events, tuple):
            object.__setattr__(self, "events", tuple(self.events))


def validate_event(event: AccessEvent, index: int = 0) -> list[str]:
    """Invariant check for a single event. Returns one entry per violation."""
    problems = []
    tag = f"event {index}"
    if event.timestamp_us < 0:
        problems.append(f"{tag}: negative timestamp {event.timestamp_us}")
    if not 0 <= event.phys_addr < 2**64:
        problems.append(f"{tag}: phys_addr {event.phys_addr:#x} outside u64 range")
    if event.page == PageType.PAGE_4KB and event.phys_addr % PAGE_4KB_SIZE:
        problems.append(f"{tag}: 4KB page address {event.phys_addr:#x} not 4096-aligned")
    if event.page == PageType.PAGE_2MB and event.phys_addr % PAGE_2MB_SIZE:
        problems.append(f"{tag}: 2MB page address {event.phys_addr:#x} not 2MiB-aligned")
    if event.content is not None:
        if not event.access.is_write_like:
            problems.append(f"{tag}: content on non-write access {event.access.name}")
        if event.page == PageType.MMIO:
            problems.append(f"{tag}: content on MMIO page")
        if len(event.content) > MAX_CONTENT_LEN:
            problems.append(f"{tag}: content length {len(event.content)} exceeds {MAX_CONTENT_LEN}")
    return problems


def validate_trace(trace: Trace) -> list[str]:
    """Check every Trace/AccessEvent invariant.

    Returns one human-readable entry per violation; an empty list means the
    trace is valid. Never raises: validation is a pure report.
    """
    problems = []
    if trace.trial_id < 0:
        problems.append(f"trial_id {trace.trial_id} is negative")
    if trace.duration <= 0:
        problems.append(f"duration {trace.duration} is not positive")
    limit_us = trace.duration * MICROSECONDS
    prev_ts = None
    for i, event in enumerate(trace.events):
        problems.extend(validate_event(event, i))
        if event.timestamp_us >= limit_us:
            problems.append(
                f"event {i}: timestamp {event.timestamp_us} us outside trial "
                f"duration {trace.duration} s"
            )
        if prev_ts is not None and event.timestamp_us < prev_ts:
            problems.append(
                f"event {i}: unsorted timestamp {event.timestamp_us} after {prev_ts}"
            )
        prev_ts = event.timestamp_us
    return problems
