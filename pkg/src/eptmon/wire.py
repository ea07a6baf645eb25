"""Binary telemetry wire format, UDP batching/collection, and trace files.

Record layout (little-endian, 21 fixed bytes + content):

    offset  size  field
    0       8     timestamp_us   u64
    8       1     access type    u8   0=Read 1=Write 2=Execute 3=ReadWrite
    9       1     page type      u8   0=4KB  1=2MB   2=MMIO
    10      1     flags          u8   bit 0: capture present; rest reserved 0
    11      8     phys_addr      u64
    19      2     content_len    u16  (<= 4096)
    21      *     content bytes

The capture flag separates "no capture happened" (flag 0) from "the capture
ran but every byte was zero-skipped" (flag 1, content_len 0); both encode
zero content bytes.

Datagram layout: an 11-byte header (magic "EPTD", version u8, label u8,
trial u8, sequence u32) followed by whole records. A datagram never exceeds
8972 bytes: a 9000-byte jumbo Ethernet frame minus 20 bytes of IPv4 and
8 bytes of UDP header. A header-only datagram with sequence 0xFFFFFFFF is
the end-of-trial sentinel.

Trace file layout: magic "EPTTRACE", version u8, label u8, trial u32,
duration f64, event count u64, then concatenated records.
"""
from __future__ import annotations

import socket
import struct
import time
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

from .trace import AccessEvent, AccessType, ClassLabel, PageType, Trace, MAX_CONTENT_LEN

RECORD_FIXED = struct.Struct("<QBBBQH")
RECORD_HEADER_LEN = RECORD_FIXED.size  # 21
MAX_RECORD_LEN = RECORD_HEADER_LEN + MAX_CONTENT_LEN  # 4117
FLAG_CAPTURE = 0x01

DATAGRAM_MAGIC = b"EPTD"
DATAGRAM_HEADER = struct.Struct("<4sBBBI")
DATAGRAM_HEADER_LEN = DATAGRAM_HEADER.size  # 11
MAX_DATAGRAM_LEN = 8972  # 9000-byte jumbo frame - 20 (IPv4) - 8 (UDP)
DATAGRAM_CAPACITY = MAX_DATAGRAM_LEN - DATAGRAM_HEADER_LEN
SENTINEL_SEQ = 0xFFFFFFFF

TRACE_MAGIC = b"EPTTRACE"
TRACE_HEADER = struct.Struct("<8sBBIdQ")
WIRE_VERSION = 1

DEFAULT_PORT = 35001


class WireDecodeError(ValueError):
    """Malformed wire bytes. `kind` distinguishes the failure mode."""

    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


class WireFormatError(ValueError):
    """Trace file container problems (bad magic, version mismatch)."""


def encode_record(event: AccessEvent) -> bytes:
    """Serialize one AccessEvent. Decoding the result reproduces it exactly."""
    content = event.content
    flags = 0
    if content is not None:
        if event.page == PageType.MMIO:
            raise ValueError("content on MMIO page cannot be encoded")
        if not event.access.is_write_like:
            raise ValueError(f"content on {event.access.name} access cannot be encoded")
        if len(content) > MAX_CONTENT_LEN:
            raise ValueError(f"content length {len(content)} exceeds {MAX_CONTENT_LEN}")
        flags = FLAG_CAPTURE
    else:
        content = b""
    header = RECORD_FIXED.pack(
        event.timestamp_us,
        int(event.access),
        int(event.page),
        flags,
        event.phys_addr,
        len(content),
    )
    return header + content


def decode_record(data: bytes, offset: int = 0) -> Tuple[AccessEvent, int]:
    """Decode one record starting at `offset`.

    Returns the event and the number of bytes consumed. Exact inverse of
    encode_record.
    """
    if len(data) - offset < RECORD_HEADER_LEN:
        raise WireDecodeError(
            "truncated",
            f"record header needs {RECORD_HEADER_LEN} bytes, "
            f"got {len(data) - offset}",
        )
    ts, access_code, page_code, flags, phys_addr, content_len = RECORD_FIXED.unpack_from(
        data, offset
    )
    try:
        access = AccessType(access_code)
    except ValueError:
        raise WireDecodeError("unknown_access", f"unknown access code {access_code}") from None
    try:
        page = PageType(page_code)
    except ValueError:
        raise WireDecodeError("unknown_page", f"unknown page code {page_code}") from None
    if content_len > MAX_CONTENT_LEN:
        raise WireDecodeError(
            "content_too_long", f"content_len {content_len} exceeds {MAX_CONTENT_LEN}"
        )
    end = offset + RECORD_HEADER_LEN + content_len
    if end > len(data):
        raise WireDecodeError(
            "content_overrun",
            f"content_len {content_len} exceeds the {len(data) - offset - RECORD_HEADER_LEN} "
            "bytes remaining",
        )
    captured = bool(flags & FLAG_CAPTURE)
    if captured and (not access.is_write_like or page == PageType.MMIO):
        raise WireDecodeError(
            "content_unexpected", f"capture flag on a {access.name}/{page.name} record"
        )
    if content_len > 0 and not captured:
        raise WireDecodeError(
            "content_unexpected", f"{content_len} content bytes without the capture flag"
        )
    content: Optional[bytes]
    content = bytes(data[offset + RECORD_HEADER_LEN:end]) if captured else None
    event = AccessEvent(ts, access, page, phys_addr, content)
    return event, end - offset


def decode_records(data: bytes) -> List[AccessEvent]:
    """Decode back-to-back records until the buffer is exhausted."""
    events = []
    offset = 0
    while offset < len(data):
        event, consumed = decode_record(data, offset)
        events.append(event)
        offset += consumed
    return events


@dataclass(frozen=True)
class DatagramBatch:
    """One UDP datagram: header plus the records it carries."""
    label: ClassLabel
    trial_id: int
    sequence: int
    events: Tuple[AccessEvent, ...] = field(default_factory=tuple)

    @property
    def is_sentinel(self) -> bool:
        return self.sequence == SENTINEL_SEQ

    def encode(self) -> bytes:
        payload = b"".join(encode_record(e) for e in self.events)
        header = DATAGRAM_HEADER.pack(
            DATAGRAM_MAGIC, WIRE_VERSION, int(self.label), self.trial_id, self.sequence
        )
        data = header + payload
        if len(data) > MAX_DATAGRAM_LEN:
            raise ValueError(f"datagram of {len(data)} bytes exceeds {MAX_DATAGRAM_LEN}")
        return data

    @classmethod
    def decode(cls, data: bytes) -> "DatagramBatch":
        if len(data) < DATAGRAM_HEADER_LEN:
            raise WireDecodeError("truncated", f"datagram header needs {DATAGRAM_HEADER_LEN} bytes")
        magic, version, label_code, trial, seq = DATAGRAM_HEADER.unpack_from(data)
        if magic != DATAGRAM_MAGIC:
            raise WireDecodeError("bad_magic", f"bad datagram magic {magic!r}")
        if version != WIRE_VERSION:
            raise WireDecodeError("bad_version", f"unsupported wire version {version}")
        try:
            label = ClassLabel(label_code)
        except ValueError:
            raise WireDecodeError("unknown_label", f"unknown label code {label_code}") from None
        events = tuple(decode_records(data[DATAGRAM_HEADER_LEN:]))
        return cls(label, trial, seq, events)


def pack_datagrams(
    events: Sequence[AccessEvent], label: ClassLabel, trial_id: int
) -> List[DatagramBatch]:
    """Greedily pack timestamp-ordered events into maximal datagrams.

    Order is preserved: concatenating the batches' events in sequence order
    reproduces the input. Every encoded datagram fits in MAX_DATAGRAM_LEN.
    """
    if not 0 <= trial_id <= 255:
        raise ValueError(f"trial_id {trial_id} does not fit the wire's trial byte")
    batches: List[DatagramBatch] = []
    current: List[AccessEvent] = []
    used = 0
    for event in events:
        record_len = RECORD_HEADER_LEN + len(event.content or b"")
        if current and used + record_len > DATAGRAM_CAPACITY:
            batches.append(DatagramBatch(label, trial_id, len(batches), tuple(current)))
            current = []
            used = 0
        current.append(event)
        used += record_len
    if current:
        batches.append(DatagramBatch(label, trial_id, len(batches), tuple(current)))
    return batches


def sentinel_datagram(label: ClassLabel, trial_id: int, sequence: int = SENTINEL_SEQ) -> DatagramBatch:
    return DatagramBatch(label, trial_id, sequence)


def send_trace(
    trace: Trace,
    host: str = "127.0.0.1",
    port: int = DEFAULT_PORT,
    pace_every: int = 64,
    pace_sleep: float = 0.001,
) -> int:
    """Stream a trace's events over UDP, ending with the sentinel datagram.

    Briefly sleeps every `pace_every` datagrams so bursts of large traces do
    not overrun the receiver's socket buffer on loopback. Returns the number
    of data datagrams sent (sentinel excluded).
    """
    batches = pack_datagrams(trace.events, trace.label, trace.trial_id)
    sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    try:
        for i, batch in enumerate(batches):
            sock.sendto(batch.encode(), (host, port))
            if pace_every and (i + 1) % pace_every == 0:
                time.sleep(pace_sleep)
        sock.sendto(sentinel_datagram(trace.label, trace.trial_id).encode(), (host, port))
    finally:
        sock.close()
    return len(batches)


@dataclass(frozen=True)
class CollectResult:
    """Collector output: the reassembled trace plus a loss/garbage report."""
    trace: Trace
    received: int                 # valid data datagrams (duplicates excluded)
    duplicates: int
    malformed: int
    missing_seqs: Tuple[int, ...]  # gaps relative to the highest sequence seen

    @property
    def lost(self) -> int:
        return len(self.missing_seqs)


def collect(
    port: int = DEFAULT_PORT,
    duration: float = 60.0,
    label: ClassLabel = ClassLabel.IDLE,
    trial_id: int = 0,
    host: str = "127.0.0.1",
    socket_timeout: float = 0.25,
) -> CollectResult:
    """Receive datagrams until the sentinel arrives or `duration` elapses.

    Datagrams are buffered and reassembled in sequence order, so any amount
    of in-flight reordering is tolerated (the reorder window spans the whole
    trial at this scale). Malformed datagrams are counted and skipped: UDP
    is lossy by design and one bad packet must not kill a trial. `label` and
    `trial_id` are defaults for an empty collection; real values come from
    the datagram headers.

    The returned trace's duration is `duration`, stretched to the next whole
    second if a received timestamp exceeds it.
    """
    sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    try:
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF, 8 * 1024 * 1024)
        sock.bind((host, port))
        sock.settimeout(socket_timeout)
        deadline = time.monotonic() + duration
        by_seq: dict[int, DatagramBatch] = {}
        duplicates = 0
        malformed = 0
        while time.monotonic() < deadline:
            try:
                data, _addr = sock.recvfrom(65536)
            except socket.timeout:
                continue
            try:
                batch = DatagramBatch.decode(data)
            except WireDecodeError:
                malformed += 1
                continue
            if batch.is_sentinel:
                break
            if batch.sequence in by_seq:
                duplicates += 1
                continue
            by_seq[batch.sequence] = batch
    finally:
        sock.close()

    events: List[AccessEvent] = []
    missing: List[int] = []
    if by_seq:
        first = by_seq[min(by_seq)]
        label = first.label
        trial_id = first.trial_id
        top = max(by_seq)
        for seq in range(top + 1):
            batch = by_seq.get(seq)
            if batch is None:
                missing.append(seq)
            else:
                events.extend(batch.events)
    trace_duration = float(duration)
    if events:
        last_s = events[-1].timestamp_us / 1e6
        while trace_duration <= last_s:
            trace_duration += 1.0
    trace = Trace(label, trial_id, trace_duration, tuple(events))
    return CollectResult(trace, len(by_seq), duplicates, malformed, tuple(missing))


def write_trace_file(path, trace: Trace) -> None:
    """Write a trace to disk. read_trace_file(write_trace_file(t)) == t."""
    header = TRACE_HEADER.pack(
        TRACE_MAGIC,
        WIRE_VERSION,
        int(trace.label),
        trace.trial_id,
        trace.duration,
        len(trace.events),
    )
    with open(path, "wb") as fh:
        fh.write(header)
        for event in trace.events:
            fh.write(encode_record(event))


def read_trace_file(path) -> Trace:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < TRACE_HEADER.size:
        raise WireFormatError(f"{path}: file shorter than the trace header")
    magic, version, label_code, trial, duration, count = TRACE_HEADER.unpack_from(data)
    if magic != TRACE_MAGIC:
        raise WireFormatError(f"{path}: bad magic {magic!r}, expected {TRACE_MAGIC!r}")
    if version != WIRE_VERSION:
        raise WireFormatError(f"{path}: version {version} not supported (expected {WIRE_VERSION})")
    try:
        label = ClassLabel(label_code)
    except ValueError:
        raise WireFormatError(f"{path}: unknown label code {label_code}") from None
    try:
        events = decode_records(data[TRACE_HEADER.size:])
    except WireDecodeError as exc:
        raise WireFormatError(f"{path}: corrupt record stream: {exc}") from exc
    if len(events) != count:
        raise WireFormatError(f"{path}: header claims {count} events, found {len(events)}")
    return Trace(label, trial, duration, tuple(events))
