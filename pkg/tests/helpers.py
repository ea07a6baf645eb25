"""Independent oracles and small utilities shared by the test modules.

Everything here is deliberately written without the package's own numerics:
entropy from collections.Counter and math.log2, variance as an explicit
two-pass loop, the permission replay as a bare dictionary machine. The
oracles stay independent of the code paths they check.
"""
import math
import socket
from collections import Counter

import numpy as np

from eptmon.trace import AccessEvent, AccessType, PageType


def oracle_entropy(content: bytes) -> float:
    """Histogram Shannon entropy in bits, via Counter and math.log2."""
    if not content:
        return 0.0
    n = len(content)
    total = 0.0
    for count in Counter(content).values():
        p = count / n
        total -= p * math.log2(p)
    return total


def oracle_variance(values) -> float:
    """Two-pass sample variance with the N-1 denominator; 0 below N=2."""
    values = list(values)
    n = len(values)
    if n < 2:
        return 0.0
    mean = sum(values) / n
    return sum((v - mean) ** 2 for v in values) / (n - 1)


NEEDED = {
    AccessType.READ: {"r"},
    AccessType.WRITE: {"w"},
    AccessType.EXECUTE: {"x"},
    AccessType.READ_WRITE: {"r", "w"},
}


def oracle_replay(stream, t_flush_us=None):
    """Brute-force permission-map replay of (timestamp_us, page, access).

    Returns the boolean violation sequence. A page's permission set grows on
    every violation; the map clears at each multiple of t_flush_us.
    """
    perms = {}
    out = []
    next_flush = t_flush_us
    for ts, page, access in stream:
        if t_flush_us is not None:
            while ts >= next_flush:
                perms = {}
                next_flush += t_flush_us
        have = perms.get(page, set())
        need = NEEDED[access]
        if need <= have:
            out.append(False)
        else:
            perms[page] = have | need
            out.append(True)
    return out


def oracle_window_vector(events, start, t_window):
    """Recompute all 18 window components directly from raw events."""
    lo, hi = start * 1_000_000, (start + t_window) * 1_000_000
    window = [e for e in events if lo <= e.timestamp_us < hi]
    out = []
    for access in (AccessType.READ, AccessType.WRITE, AccessType.EXECUTE, AccessType.READ_WRITE):
        evs = [e for e in window if e.access == access]
        if access in (AccessType.WRITE, AccessType.READ_WRITE):
            ents = [oracle_entropy(e.content) for e in evs if e.content is not None]
            out.append(sum(ents) / len(ents) / 8.0 if ents else 0.0)
        out.append(float(sum(1 for e in evs if e.page == PageType.PAGE_4KB)))
        out.append(float(sum(1 for e in evs if e.page == PageType.PAGE_2MB)))
        out.append(float(sum(1 for e in evs if e.page == PageType.MMIO)))
        out.append(oracle_variance([e.phys_addr for e in evs]))
    return out


def random_event(rng: np.random.Generator, max_ts=60_000_000) -> AccessEvent:
    """One random valid AccessEvent."""
    access = AccessType(int(rng.integers(4)))
    page = PageType(int(rng.integers(3)))
    if page == PageType.PAGE_4KB:
        addr = int(rng.integers(0, 2**20)) * 4096
    elif page == PageType.PAGE_2MB:
        addr = int(rng.integers(0, 2**12)) * (2 * 1024 * 1024)
    else:
        addr = 0xC000_0000 + int(rng.integers(0, 2**20))
    content = None
    if access in (AccessType.WRITE, AccessType.READ_WRITE) and page != PageType.MMIO:
        if rng.random() < 0.8:
            content = rng.integers(0, 256, int(rng.integers(0, 4097)), dtype=np.uint8).tobytes()
    return AccessEvent(int(rng.integers(0, max_ts)), access, page, addr, content)


def random_events(rng: np.random.Generator, n: int, max_ts=60_000_000):
    events = sorted((random_event(rng, max_ts) for _ in range(n)), key=lambda e: e.timestamp_us)
    return tuple(events)


def free_udp_port() -> int:
    sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    sock.bind(("127.0.0.1", 0))
    port = sock.getsockname()[1]
    sock.close()
    return port


def make_blobs(n_per, n_classes=8, d=18, sep=12.0, seed=5, spread=1.0):
    """Well-separated seeded Gaussian blobs."""
    rng = np.random.default_rng(seed)
    centers = rng.normal(0.0, sep, size=(n_classes, d))
    X = np.vstack([centers[c] + rng.normal(0.0, spread, size=(n_per, d)) for c in range(n_classes)])
    y = np.repeat(np.arange(n_classes), n_per)
    return X, y
