"""Image fragmentation and single-slot reassembly.

Large frames travel as one START packet announcing the frame geometry
followed by FRAGMENT packets carrying pixel slices. The reassembler keeps
at most one frame buffer per stream: when a START for a newer frame
arrives while an older one is still incomplete, the older frame is
dropped on the spot. Fragments that can't be matched to the in-flight
frame are orphans; repeats of an already-stored fragment are duplicates.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Union

from .wire import (
    HEADER_SIZE,
    UDP_MAX_DATAGRAM,
    DEFAULT_FRAG_PAYLOAD,
    Image,
    ImageStartMeta,
    InvariantError,
    PacketHeader,
    PacketKind,
    StreamId,
    WireError,
    decode_header,
    decode_start_meta,
    encode_header,
    encode_start_meta,
)

MIN_FRAG_PAYLOAD = 256
MAX_FRAG_PAYLOAD = 65000


@dataclass(frozen=True)
class Packet:
    """One datagram: validated header plus payload bytes."""

    header: PacketHeader
    payload: bytes = b""

    def __post_init__(self) -> None:
        if self.header.payload_len != len(self.payload):
            raise InvariantError(
                f"header announces {self.header.payload_len} payload bytes, got {len(self.payload)}"
            )
        if HEADER_SIZE + len(self.payload) > UDP_MAX_DATAGRAM:
            raise InvariantError(
                f"datagram of {HEADER_SIZE + len(self.payload)} bytes exceeds UDP maximum {UDP_MAX_DATAGRAM}"
            )

    @property
    def size(self) -> int:
        return HEADER_SIZE + len(self.payload)

    def to_bytes(self) -> bytes:
        return encode_header(self.header) + self.payload

    @classmethod
    def from_bytes(cls, b: bytes) -> "Packet":
        header = decode_header(b)
        payload = bytes(b[HEADER_SIZE:])
        if len(payload) != header.payload_len:
            raise InvariantError(
                f"datagram carries {len(payload)} payload bytes, header announces {header.payload_len}"
            )
        return cls(header=header, payload=payload)


# --- events returned by Reassembler.step (None means "nothing happened") ---

@dataclass(frozen=True)
class ImageComplete:
    image: Image


@dataclass(frozen=True)
class SingleDelivered:
    stream_id: StreamId
    payload: bytes
    seq: int
    timestamp_us: int


@dataclass(frozen=True)
class Dropped:
    """An incomplete frame was evicted (preempted by a newer START, or timed out)."""

    seq: int


@dataclass(frozen=True)
class Orphan:
    """Packet could not be attached to any in-flight frame and was discarded."""

    seq: int
    frag_index: int = 0


@dataclass(frozen=True)
class Duplicate:
    seq: int
    frag_index: int = 0


Event = Union[ImageComplete, SingleDelivered, Dropped, Orphan, Duplicate]


@dataclass
class StreamStats:
    """Monotonic counters kept by a reassembler."""

    frames_complete: int = 0
    frames_dropped_preempted: int = 0
    frames_dropped_timeout: int = 0
    orphan_fragments: int = 0
    duplicate_fragments: int = 0
    bytes_received: int = 0
    latency_accumulator_us: int = 0

    def snapshot(self) -> "StreamStats":
        return replace(self)


def packetize_image(img: Image, frag_payload: int = DEFAULT_FRAG_PAYLOAD,
                    seq: Optional[int] = None) -> list[Packet]:
    """Split an image into one START packet plus its fragments.

    Fragment ``i`` carries pixel bytes ``[i*frag_payload, (i+1)*frag_payload)``
    (the last one may be shorter). All packets share the image's seq and
    timestamp.
    """
    if not MIN_FRAG_PAYLOAD <= frag_payload <= MAX_FRAG_PAYLOAD:
        raise ValueError(
            f"frag_payload must lie in [{MIN_FRAG_PAYLOAD}, {MAX_FRAG_PAYLOAD}], got {frag_payload}"
        )
    data = img.pixels
    if len(data) == 0:
        raise ValueError("cannot packetize an empty image")
    if seq is None:
        seq = img.seq
    meta = ImageStartMeta(total_len=len(data), width=img.width, height=img.height,
                          encoding=img.encoding, frag_payload=frag_payload)
    frag_count = meta.frag_count
    meta_bytes = encode_start_meta(meta)
    packets = [Packet(
        header=PacketHeader(
            stream_id=StreamId.IMAGE, kind=PacketKind.START, seq=seq,
            frag_index=0, frag_count=frag_count, payload_len=len(meta_bytes),
            timestamp_us=img.timestamp_us,
        ),
        payload=meta_bytes,
    )]
    for i in range(frag_count):
        chunk = data[i * frag_payload:(i + 1) * frag_payload]
        packets.append(Packet(
            header=PacketHeader(
                stream_id=StreamId.IMAGE, kind=PacketKind.FRAGMENT, seq=seq,
                frag_index=i, frag_count=frag_count, payload_len=len(chunk),
                timestamp_us=img.timestamp_us,
            ),
            payload=chunk,
        ))
    return packets


def packetize_single(payload: bytes, stream_id: StreamId, seq: int, timestamp_us: int) -> Packet:
    """Wrap a payload that fits one datagram into a SINGLE packet."""
    if HEADER_SIZE + len(payload) > UDP_MAX_DATAGRAM:
        raise ValueError(
            f"payload of {len(payload)} bytes does not fit one datagram "
            f"(max {UDP_MAX_DATAGRAM - HEADER_SIZE})"
        )
    return Packet(
        header=PacketHeader(
            stream_id=stream_id, kind=PacketKind.SINGLE, seq=seq,
            payload_len=len(payload), timestamp_us=timestamp_us,
        ),
        payload=bytes(payload),
    )


@dataclass
class _Slot:
    seq: int
    meta: ImageStartMeta
    frag_count: int
    buffer: bytearray
    received: list[bool]
    received_count: int
    timestamp_us: int
    started_now_us: Optional[int]


class Reassembler:
    """Single-consumer reassembly state machine.

    One instance per receive loop. Frames are kept in one slot per stream;
    the only evictions are preemption by the next frame's START and, when
    ``timeout_us`` is set, explicit :meth:`poll` calls. Feed packets whose
    headers already passed validation (``Packet.from_bytes`` does).
    """

    def __init__(self, timeout_us: Optional[int] = None):
        self.timeout_us = timeout_us
        self._slots: dict[int, _Slot] = {}
        self._stats = StreamStats()

    def stats(self) -> StreamStats:
        """Read-only snapshot of the counters."""
        return self._stats.snapshot()

    @property
    def collecting(self) -> bool:
        return bool(self._slots)

    def step(self, pkt: Packet, now_us: Optional[int] = None) -> Optional[Event]:
        """Consume one packet and report what it completed, dropped or was."""
        st = self._stats
        st.bytes_received += pkt.size
        h = pkt.header
        if h.kind == PacketKind.SINGLE:
            return SingleDelivered(stream_id=h.stream_id, payload=pkt.payload,
                                   seq=h.seq, timestamp_us=h.timestamp_us)
        if h.kind == PacketKind.START:
            return self._on_start(pkt, now_us)
        return self._on_fragment(pkt, now_us)

    def poll(self, now_us: int) -> Optional[Dropped]:
        """Evict a frame whose slot exceeded the inactivity timeout, if any."""
        if self.timeout_us is None:
            return None
        for stream, slot in self._slots.items():
            if slot.started_now_us is not None and now_us - slot.started_now_us > self.timeout_us:
                del self._slots[stream]
                self._stats.frames_dropped_timeout += 1
                return Dropped(seq=slot.seq)
        return None

    def _on_start(self, pkt: Packet, now_us: Optional[int]) -> Optional[Event]:
        h = pkt.header
        try:
            meta = decode_start_meta(pkt.payload)
        except WireError:
            self._stats.orphan_fragments += 1
            return Orphan(seq=h.seq)
        if meta.total_len == 0 or meta.frag_count != h.frag_count:
            self._stats.orphan_fragments += 1
            return Orphan(seq=h.seq)

        slot = self._slots.get(h.stream_id)
        if slot is not None and slot.seq == h.seq:
            self._stats.duplicate_fragments += 1
            return Duplicate(seq=h.seq)

        evicted = None
        if slot is not None:
            evicted = Dropped(seq=slot.seq)
            self._stats.frames_dropped_preempted += 1

        self._slots[h.stream_id] = _Slot(
            seq=h.seq,
            meta=meta,
            frag_count=h.frag_count,
            buffer=bytearray(meta.total_len),
            received=[False] * h.frag_count,
            received_count=0,
            timestamp_us=h.timestamp_us,
            started_now_us=now_us,
        )
        return evicted

    def _on_fragment(self, pkt: Packet, now_us: Optional[int]) -> Optional[Event]:
        h = pkt.header
        slot = self._slots.get(h.stream_id)
        if slot is None or slot.seq != h.seq:
            self._stats.orphan_fragments += 1
            return Orphan(seq=h.seq, frag_index=h.frag_index)
        if h.frag_index >= slot.frag_count:
            self._stats.orphan_fragments += 1
            return Orphan(seq=h.seq, frag_index=h.frag_index)
        offset = h.frag_index * slot.meta.frag_payload
        expected_len = min(slot.meta.frag_payload, slot.meta.total_len - offset)
        if len(pkt.payload) != expected_len:
            self._stats.orphan_fragments += 1
            return Orphan(seq=h.seq, frag_index=h.frag_index)
        if slot.received[h.frag_index]:
            self._stats.duplicate_fragments += 1
            return Duplicate(seq=h.seq, frag_index=h.frag_index)

        slot.buffer[offset:offset + expected_len] = pkt.payload
        slot.received[h.frag_index] = True
        slot.received_count += 1
        if slot.received_count < slot.frag_count:
            return None

        del self._slots[h.stream_id]
        self._stats.frames_complete += 1
        if now_us is not None:
            self._stats.latency_accumulator_us += max(0, now_us - slot.timestamp_us)
        image = Image(
            width=slot.meta.width,
            height=slot.meta.height,
            pixels=bytes(slot.buffer),
            encoding=slot.meta.encoding,
            seq=slot.seq,
            timestamp_us=slot.timestamp_us,
        )
        return ImageComplete(image=image)
