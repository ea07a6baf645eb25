"""Deterministic guest/hypervisor stand-in.

Models second-level translation state (EPT entries with permission bits plus
a TLB of cached mappings) with a periodic full flush, and drives it from
synthetic per-class workloads. Every access that misses the translation
state produces one AccessEvent, which is exactly what the monitoring path
downstream consumes.

Workload profiles are parameterized inventions. Their only contract is that
the eight classes are separable by the windowed features and that the
violation curves behave like the real system's: saturation within each
flush interval for background-style workloads, a re-fault spike right after
each flush, near-constant fault rates for file-churning malware.

Each RAM touch picks a page from the profile's region, laid out as a
deterministic mix of 4 KiB and 2 MiB pages. SWEEP profiles walk the region
linearly (file-churn behavior: ransomware, wiper, encryption/compression
tools); HOTSET profiles draw from a skewed stationary popularity over the
region (background OS behavior: Idle, Office). MMIO touches always trap:
emulated device registers never get a translation entry.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, replace
from enum import Enum
from typing import Deque, List, Tuple

import numpy as np

from .trace import (
    AccessEvent,
    AccessType,
    ClassLabel,
    PageType,
    Trace,
    MICROSECONDS,
    PAGE_2MB_SIZE,
    PAGE_4KB_SIZE,
)

PERM_READ = 1
PERM_WRITE = 2
PERM_EXECUTE = 4

NEEDED_PERMS = {
    AccessType.READ: PERM_READ,
    AccessType.WRITE: PERM_WRITE,
    AccessType.EXECUTE: PERM_EXECUTE,
    AccessType.READ_WRITE: PERM_READ | PERM_WRITE,
}

PageKey = Tuple[PageType, int]

DEFAULT_ADDRESS_SPACE = 8 * 1024**3
# PCI hole plus IOAPIC, the classic sub-4GiB device windows.
DEFAULT_MMIO_REGIONS = ((0xC000_0000, 64 * 1024**2), (0xFEC0_0000, 1024**2))
PROFILE_REGION_FLOOR = 4 * 1024**3  # RAM regions live above the device windows


@dataclass(frozen=True)
class SimConfig:
    t_flush: float = 30.0
    duration: float = 60.0
    seed: int = 42
    address_space: int = DEFAULT_ADDRESS_SPACE
    page_mix: float = 0.12  # fraction of region pages backed by 2 MiB pages
    mmio_regions: Tuple[Tuple[int, int], ...] = DEFAULT_MMIO_REGIONS
    capture_limit: int = 4096
    capture_delay_events: int = 5

    def validate(self) -> None:
        if self.t_flush <= 0:
            raise ValueError(f"t_flush must be positive, got {self.t_flush}")
        if self.duration <= 0:
            raise ValueError(f"duration must be positive, got {self.duration}")
        if not 0 <= self.capture_limit <= 4096:
            raise ValueError(f"capture_limit must be in [0, 4096], got {self.capture_limit}")
        if self.capture_delay_events < 0:
            raise ValueError("capture_delay_events must be non-negative")
        if self.address_space <= 0:
            raise ValueError("address_space must be positive")
        if not 0.0 <= self.page_mix <= 1.0:
            raise ValueError(f"page_mix must be in [0, 1], got {self.page_mix}")
        for start, length in self.mmio_regions:
            if start < 0 or length <= 0:
                raise ValueError(f"bad MMIO region ({start:#x}, {length})")


class TranslationState:
    """EPT entries (page -> permission bits) plus the TLB of cached pages.

    The TLB holds a subset of the EPT's pages at all times: a mapping is
    cached only when its entry was materialized, and a flush clears both.
    """

    __slots__ = ("ept", "tlb")

    def __init__(self):
        self.ept: dict[PageKey, int] = {}
        self.tlb: set[PageKey] = set()


def step_access(
    state: TranslationState, page: PageKey, access: AccessType
) -> Tuple[bool, TranslationState]:
    """Apply one guest access to the translation state.

    A violation fires when the page has no entry or the entry lacks the
    needed permission bit; the entry is then created or extended with the
    requested permissions and the mapping enters the TLB. A non-violating
    access leaves the state untouched.
    """
    needed = NEEDED_PERMS[access]
    have = state.ept.get(page)
    if have is not None and have & needed == needed:
        return False, state
    state.ept[page] = (have or 0) | needed
    state.tlb.add(page)
    return True, state


def flush(state: TranslationState) -> TranslationState:
    """TLB shootdown plus EPT clear: both sets empty. Idempotent."""
    state.ept.clear()
    state.tlb.clear()
    return state


class AddressModel(Enum):
    SWEEP = "sweep"    # linear wrap-around walk over the region
    HOTSET = "hotset"  # stationary skewed draw over the region


class ContentKind(Enum):
    HIGH_ENTROPY_RANDOM = "high_entropy_random"
    ALL_ZEROS = "all_zeros"
    COMPRESSIBLE_TEXT = "compressible_text"
    MIXED_OFFICE = "mixed_office"


@dataclass(frozen=True)
class Burst:
    """Touch-rate contribution of `rate` pages/second over [start, end)."""
    start: float
    end: float
    rate: float


@dataclass(frozen=True)
class WorkloadProfile:
    label: ClassLabel
    bursts: Tuple[Burst, ...]
    address_model: AddressModel
    region_start: int
    region_pages: int
    content: ContentKind
    hot_skew: float = 1.1      # popularity exponent for HOTSET draws
    revisit_prob: float = 0.0  # SWEEP: chance a touch goes back to a recent page
    working_set: int = 64      # SWEEP: size of the recent-page set
    write_frac: float = 0.0
    rw_frac: float = 0.0
    exec_frac: float = 0.0
    mmio_rate: float = 0.0     # MMIO touches/second (device traffic)


@dataclass(frozen=True)
class CumulativeCurve:
    """(time, cumulative violation count) samples; counts never decrease."""
    samples: Tuple[Tuple[float, int], ...]

    def counts(self) -> List[int]:
        return [c for _, c in self.samples]


def cumulative_violations(trace: Trace, resolution: float = 1.0) -> CumulativeCurve:
    """Prefix event counts at each resolution tick up to the trial duration."""
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    ts = np.array([e.timestamp_us for e in trace.events], dtype=np.int64)
    n_ticks = int(np.ceil(trace.duration / resolution - 1e-9))
    samples = []
    for k in range(1, n_ticks + 1):
        t = k * resolution
        count = int(np.searchsorted(ts, t * MICROSECONDS, side="left"))
        samples.append((t, count))
    return CumulativeCurve(tuple(samples))


# ---------------------------------------------------------------------------
# Workload generation

_TEXT_ALPHABET = np.frombuffer(b" etaonihsrdlucmfw,.\n", dtype=np.uint8)
_TEXT_WEIGHTS = 1.0 / np.arange(1, len(_TEXT_ALPHABET) + 1) ** 1.1
_TEXT_WEIGHTS /= _TEXT_WEIGHTS.sum()

_PAGE_BYTES = 4096


def _generate_page(kind: ContentKind, rng: np.random.Generator) -> np.ndarray:
    """One synthetic 4096-byte page image, before zero-skip."""
    if kind == ContentKind.HIGH_ENTROPY_RANDOM:
        return rng.integers(0, 256, _PAGE_BYTES, dtype=np.uint8)
    if kind == ContentKind.ALL_ZEROS:
        return np.zeros(_PAGE_BYTES, dtype=np.uint8)
    if kind == ContentKind.COMPRESSIBLE_TEXT:
        return rng.choice(_TEXT_ALPHABET, size=_PAGE_BYTES, p=_TEXT_WEIGHTS)
    if kind == ContentKind.MIXED_OFFICE:
        # Zero padding, text run, binary run: loosely an office-document page.
        pad = int(rng.integers(512, 1536))
        binary = int(rng.integers(768, 1536))
        text = _PAGE_BYTES - pad - binary
        parts = [
            np.zeros(pad, dtype=np.uint8),
            rng.choice(_TEXT_ALPHABET, size=text, p=_TEXT_WEIGHTS),
            rng.integers(0, 256, binary, dtype=np.uint8),
        ]
        return np.concatenate(parts)
    raise ValueError(f"unhandled content kind {kind}")


def capture_content(kind: ContentKind, rng: np.random.Generator, limit: int = 4096) -> bytes:
    """Capture a fresh page: first `limit` bytes with zero bytes skipped."""
    page = _generate_page(kind, rng)[:limit]
    return page[page != 0].tobytes()


def _build_layout(
    profile: WorkloadProfile, config: SimConfig, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray]:
    """Assign a base address and page type to every page index of the region."""
    n = profile.region_pages
    is_2mb = rng.random(n) < config.page_mix
    bases = np.empty(n, dtype=np.uint64)
    types = np.where(is_2mb, int(PageType.PAGE_2MB), int(PageType.PAGE_4KB)).astype(np.uint8)
    cursor = (profile.region_start + PAGE_4KB_SIZE - 1) // PAGE_4KB_SIZE * PAGE_4KB_SIZE
    for i in range(n):
        size = PAGE_2MB_SIZE if is_2mb[i] else PAGE_4KB_SIZE
        cursor = (cursor + size - 1) // size * size
        bases[i] = cursor
        cursor += size
    if cursor > config.address_space:
        raise ValueError(
            f"profile region for {profile.label.name} ends at {cursor:#x}, "
            f"beyond the {config.address_space:#x}-byte address space"
        )
    return bases, types


def _schedule_times(
    profile: WorkloadProfile, config: SimConfig, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray]:
    """Touch timestamps in microseconds: (ram_times, mmio_times), each sorted.

    Counts are exact per one-second slot (fractional rates accumulate in a
    carry), so a 10/s burst of one second yields exactly 10 touches.
    Timestamps are jittered uniformly inside the burst-active parts of each
    slot.
    """
    duration = config.duration
    n_slots = int(np.ceil(duration - 1e-9))
    ram_times: List[float] = []
    carry = 0.0
    for k in range(n_slots):
        a, b = float(k), min(float(k + 1), duration)
        spans = []
        for burst in profile.bursts:
            lo, hi = max(a, burst.start), min(b, burst.end)
            if hi > lo:
                spans.append((lo, hi, burst.rate * (hi - lo)))
        expected = sum(s[2] for s in spans)
        carry += expected
        count = int(np.floor(carry + 1e-9))
        carry -= count
        if count == 0 or not spans:
            continue
        weights = np.array([s[2] for s in spans])
        picks = rng.choice(len(spans), size=count, p=weights / weights.sum())
        for p in picks:
            lo, hi, _ = spans[p]
            ram_times.append(rng.uniform(lo, hi))
    mmio_times: List[float] = []
    carry = 0.0
    for k in range(n_slots):
        a, b = float(k), min(float(k + 1), duration)
        carry += profile.mmio_rate * (b - a)
        count = int(np.floor(carry + 1e-9))
        carry -= count
        for _ in range(count):
            mmio_times.append(rng.uniform(a, b))

    limit = int(duration * MICROSECONDS) - 1
    ram = np.clip(np.floor(np.array(sorted(ram_times)) * MICROSECONDS), 0, limit).astype(np.int64)
    mmio = np.clip(np.floor(np.array(sorted(mmio_times)) * MICROSECONDS), 0, limit).astype(np.int64)
    return ram, mmio


class _PagePicker:
    """Sequential page-index selection for one workload run."""

    def __init__(self, profile: WorkloadProfile, rng: np.random.Generator):
        self.profile = profile
        self.rng = rng
        self.sweep_pos = 0
        self.recent: Deque[int] = deque(maxlen=max(1, profile.working_set))
        if profile.address_model == AddressModel.HOTSET:
            weights = 1.0 / np.arange(1, profile.region_pages + 1) ** profile.hot_skew
            # Shuffle so popularity is not correlated with address order.
            self.hot_order = rng.permutation(profile.region_pages)
            self.hot_cum = np.cumsum(weights / weights.sum())

    def next_index(self) -> int:
        profile = self.profile
        if profile.address_model == AddressModel.HOTSET:
            rank = int(np.searchsorted(self.hot_cum, self.rng.random(), side="right"))
            return int(self.hot_order[min(rank, profile.region_pages - 1)])
        if self.recent and self.rng.random() < profile.revisit_prob:
            return self.recent[int(self.rng.integers(len(self.recent)))]
        idx = self.sweep_pos % profile.region_pages
        self.sweep_pos += 1
        self.recent.append(idx)
        return idx


def _draw_access(profile: WorkloadProfile, rng: np.random.Generator) -> AccessType:
    u = rng.random()
    if u < profile.write_frac:
        return AccessType.WRITE
    if u < profile.write_frac + profile.rw_frac:
        return AccessType.READ_WRITE
    if u < profile.write_frac + profile.rw_frac + profile.exec_frac:
        return AccessType.EXECUTE
    return AccessType.READ


def _validate_profile(profile: WorkloadProfile, config: SimConfig) -> None:
    if profile.region_pages < 1:
        raise ValueError(f"profile needs at least one region page, got {profile.region_pages}")
    if profile.region_start < 0:
        raise ValueError("region_start must be non-negative")
    for burst in profile.bursts:
        if burst.rate < 0 or burst.end <= burst.start:
            raise ValueError(f"bad burst {burst}")
    fracs = (profile.write_frac, profile.rw_frac, profile.exec_frac, profile.revisit_prob)
    if any(not 0.0 <= f <= 1.0 for f in fracs):
        raise ValueError("fractions must be within [0, 1]")
    if profile.write_frac + profile.rw_frac + profile.exec_frac > 1.0 + 1e-9:
        raise ValueError("write/rw/exec fractions must sum to at most 1")
    if profile.mmio_rate < 0:
        raise ValueError("mmio_rate must be non-negative")
    if profile.mmio_rate > 0 and not config.mmio_regions:
        raise ValueError("profile touches MMIO but the config has no MMIO regions")
    if profile.address_model == AddressModel.HOTSET and profile.hot_skew <= 0:
        raise ValueError("hot_skew must be positive")


def run_workload(profile: WorkloadProfile, config: SimConfig, trial_id: int = 0) -> Trace:
    """Simulate one trial: synthesize the access stream, run it through the
    translation state with flush ticks at every multiple of t_flush, and emit
    one AccessEvent per violation.

    Write-like violations on RAM pages get their page content captured
    `capture_delay_events` violations later (the monitor reads memory a few
    hypervisor loops after the fault); captures still pending when the trial
    ends are dropped. Fully deterministic given (profile, config, trial_id).
    """
    config.validate()
    _validate_profile(profile, config)
    seed_seq = np.random.SeedSequence((config.seed & 0xFFFF_FFFF_FFFF_FFFF, int(profile.label), trial_id))
    sched_rng, layout_rng, content_rng = map(np.random.default_rng, seed_seq.spawn(3))

    bases, types = _build_layout(profile, config, layout_rng)
    ram_times, mmio_times = _schedule_times(profile, config, sched_rng)
    is_mmio = np.concatenate([np.zeros(len(ram_times), bool), np.ones(len(mmio_times), bool)])
    all_times = np.concatenate([ram_times, mmio_times])
    order = np.argsort(all_times, kind="stable")

    picker = _PagePicker(profile, sched_rng)
    state = TranslationState()
    events: List[AccessEvent] = []
    pending: Deque[Tuple[int, int]] = deque()  # (event index, due violation count)
    violations = 0
    next_flush_us = config.t_flush * MICROSECONDS

    def fire_due_captures():
        while pending and pending[0][1] <= violations:
            idx, _ = pending.popleft()
            content = capture_content(profile.content, content_rng, config.capture_limit)
            events[idx] = replace(events[idx], content=content)

    for pos in order:
        ts = int(all_times[pos])
        while ts >= next_flush_us:
            flush(state)
            next_flush_us += config.t_flush * MICROSECONDS
        if is_mmio[pos]:
            access = AccessType.READ if sched_rng.random() < 0.6 else AccessType.WRITE
            start, length = config.mmio_regions[
                int(sched_rng.integers(len(config.mmio_regions)))
            ]
            addr = start + int(sched_rng.integers(length // 4)) * 4
            events.append(AccessEvent(ts, access, PageType.MMIO, addr))
            violations += 1
            fire_due_captures()
            continue
        access = _draw_access(profile, sched_rng)
        idx = picker.next_index()
        page_type = PageType(int(types[idx]))
        page: PageKey = (page_type, int(bases[idx]))
        violated, _ = step_access(state, page, access)
        if not violated:
            continue
        events.append(AccessEvent(ts, access, page_type, page[1]))
        if access.is_write_like:
            pending.append((len(events) - 1, violations + config.capture_delay_events))
        violations += 1
        fire_due_captures()

    return Trace(profile.label, trial_id, float(config.duration), tuple(events))


# ---------------------------------------------------------------------------
# Canonical per-class profiles

def _steady(rate: float, duration: float = 3600.0) -> Tuple[Burst, ...]:
    return (Burst(0.0, duration, rate),)


# label -> (model, touch rate/s, region pages, skew, write, rw, exec, revisit,
#           mmio rate, content)
_PROFILE_TABLE = {
    ClassLabel.WANNACRY: (AddressModel.SWEEP, 60.0, 4200, 0.0, 0.45, 0.15, 0.02, 0.10,
                          0.0, ContentKind.HIGH_ENTROPY_RANDOM),
    ClassLabel.SODINOKIBI: (AddressModel.SWEEP, 42.0, 3000, 0.0, 0.50, 0.10, 0.02, 0.10,
                            0.0, ContentKind.HIGH_ENTROPY_RANDOM),
    ClassLabel.DARKSIDE: (AddressModel.SWEEP, 30.0, 2200, 0.0, 0.40, 0.20, 0.02, 0.12,
                          0.0, ContentKind.HIGH_ENTROPY_RANDOM),
    ClassLabel.CADDYWIPER: (AddressModel.SWEEP, 80.0, 4200, 0.0, 0.70, 0.05, 0.01, 0.08,
                            0.0, ContentKind.ALL_ZEROS),
    ClassLabel.IDLE: (AddressModel.HOTSET, 10.0, 900, 2.1, 0.12, 0.03, 0.10, 0.0,
                      0.4, ContentKind.COMPRESSIBLE_TEXT),
    ClassLabel.AESCRYPT: (AddressModel.SWEEP, 20.0, 600, 0.0, 0.55, 0.10, 0.02, 0.15,
                          0.0, ContentKind.HIGH_ENTROPY_RANDOM),
    ClassLabel.ZIP: (AddressModel.SWEEP, 10.0, 280, 0.0, 0.45, 0.10, 0.02, 0.15,
                     0.0, ContentKind.HIGH_ENTROPY_RANDOM),
    ClassLabel.OFFICE: (AddressModel.HOTSET, 9.0, 2000, 1.6, 0.20, 0.05, 0.25, 0.0,
                        0.8, ContentKind.MIXED_OFFICE),
}

# Background workloads are not flat: Idle sees short periodic bursts of
# system activity, Office has two longer activity stretches.
_EXTRA_BURSTS = {
    ClassLabel.IDLE: tuple(Burst(t, t + 2.0, 8.0) for t in (3.0, 13.0, 23.0, 33.0, 43.0, 53.0)),
    ClassLabel.OFFICE: (Burst(4.0, 14.0, 6.0), Burst(33.0, 44.0, 6.0)),
}


def make_profile(label: ClassLabel, seed: int = 0) -> WorkloadProfile:
    """Canonical workload profile for a class.

    The seed jitters rates, region size and region placement by a few
    percent so repeated trials of one class are similar but not identical;
    class separations are far wider than the jitter.
    """
    model, rate, pages, skew, w, rw, ex, revisit, mmio, content = _PROFILE_TABLE[label]
    rng = np.random.default_rng(np.random.SeedSequence((seed & 0xFFFF_FFFF_FFFF_FFFF, int(label), 0xB0)))
    rate *= rng.uniform(0.94, 1.06)
    pages = int(pages * rng.uniform(0.93, 1.07))
    start = PROFILE_REGION_FLOOR + int(rng.integers(0, 64 * 1024)) * PAGE_4KB_SIZE
    bursts = _steady(rate) + tuple(
        Burst(b.start, b.end, b.rate * rng.uniform(0.9, 1.1))
        for b in _EXTRA_BURSTS.get(label, ())
    )
    return WorkloadProfile(
        label=label,
        bursts=bursts,
        address_model=model,
        region_start=start,
        region_pages=pages,
        content=content,
        hot_skew=skew,
        revisit_prob=revisit,
        working_set=64,
        write_frac=w,
        rw_frac=rw,
        exec_frac=ex,
        mmio_rate=mmio,
    )


def simulate_trial(label: ClassLabel, trial_id: int, config: SimConfig) -> Trace:
    """Profile + run for one (class, trial): the dataset-building unit."""
    profile = make_profile(label, seed=config.seed + 0x9E37 * trial_id)
    return run_workload(profile, config, trial_id)
