"""Dataset logging, replay, and image export.

Log files (``.nbl``) are append-only and self-delimiting: a 16-byte file
header followed by length-prefixed records, so any prefix that ends on a
record boundary is itself a valid log. Records store payload bytes exactly
as they crossed the bus; sequence numbers are not stored and are assigned
afresh on replay.

File header:  magic "NBLG" | version u8 | 3 reserved bytes | epoch wall-clock µs u64
Record:       stream_id u8 | reserved u8 | payload_len u32 | timestamp_us u64 | payload
Image record payload: 12-byte start metadata (geometry/encoding) + pixel bytes.
"""

from __future__ import annotations

import math
import struct
import time
from dataclasses import dataclass
from typing import Iterator, Optional, Union

import numpy as np

from .bridge import (
    TOPIC_COMMAND,
    TOPIC_IMAGE,
    TOPIC_MOTION,
    BoundedFifo,
    CameraFrame,
    TopicBus,
)
from .wire import (
    BadMagicError,
    BadVersionError,
    Encoding,
    Image,
    ImageStartMeta,
    MotionReading,
    MotionRequest,
    StreamId,
    TooShortError,
    decode_motion,
    decode_request,
    decode_start_meta,
    encode_motion,
    encode_request,
    encode_start_meta,
)

LOG_MAGIC = b"NBLG"
LOG_VERSION = 1
LOG_HEADER_SIZE = 16
RECORD_HEADER_SIZE = 14

_LOG_HEADER = struct.Struct("<4sB3sQ")
_RECORD_HEADER = struct.Struct("<BBIQ")

assert _LOG_HEADER.size == LOG_HEADER_SIZE
assert _RECORD_HEADER.size == RECORD_HEADER_SIZE


@dataclass(frozen=True)
class LogRecord:
    stream_id: StreamId
    timestamp_us: int
    payload: bytes


@dataclass(frozen=True)
class Truncated:
    """End-of-file fell inside a record; everything before ``offset`` is intact."""

    offset: int


def image_to_record_payload(img: Image) -> bytes:
    meta = ImageStartMeta(total_len=len(img.pixels), width=img.width,
                          height=img.height, encoding=img.encoding)
    return encode_start_meta(meta) + img.pixels


def image_from_record_payload(payload: bytes, *, seq: int = 0,
                              timestamp_us: int = 0) -> Image:
    meta = decode_start_meta(payload)
    pixels = payload[12:]
    if len(pixels) != meta.total_len:
        raise TooShortError(
            f"image record carries {len(pixels)} pixel bytes, metadata announces {meta.total_len}"
        )
    return Image(width=meta.width, height=meta.height, pixels=pixels,
                 encoding=meta.encoding, seq=seq, timestamp_us=timestamp_us)


def message_to_record(message) -> LogRecord:
    """Map a bus message to its log representation."""
    if isinstance(message, CameraFrame):
        message = message.image
    if isinstance(message, Image):
        return LogRecord(StreamId.IMAGE, message.timestamp_us,
                         image_to_record_payload(message))
    if isinstance(message, MotionReading):
        return LogRecord(StreamId.MOTION, message.timestamp_us, encode_motion(message))
    if isinstance(message, MotionRequest):
        return LogRecord(StreamId.COMMAND, 0, encode_request(message))
    raise TypeError(f"no log representation for {type(message).__name__}")


class LogWriter:
    """Sequential record writer. On write failure the file is cut back to
    the last complete record, so readers always get a clean prefix."""

    def __init__(self, path, epoch_us: Optional[int] = None):
        self.path = path
        self.epoch_us = int(time.time() * 1e6) if epoch_us is None else epoch_us
        self._f = open(path, "wb")
        self._f.write(_LOG_HEADER.pack(LOG_MAGIC, LOG_VERSION, b"\x00\x00\x00", self.epoch_us))
        self._last_ts: dict[int, int] = {}
        self.records_written = 0

    def write(self, stream_id: StreamId, timestamp_us: int, payload: bytes) -> None:
        if timestamp_us < self._last_ts.get(int(stream_id), 0):
            raise ValueError(
                f"timestamps must be non-decreasing per stream: "
                f"{timestamp_us} after {self._last_ts[int(stream_id)]}"
            )
        start = self._f.tell()
        try:
            self._f.write(_RECORD_HEADER.pack(int(stream_id), 0, len(payload), timestamp_us))
            self._f.write(payload)
        except OSError:
            # disk full or similar: drop the partial record, keep the prefix valid
            try:
                self._f.truncate(start)
            except OSError:
                pass
            raise
        self._last_ts[int(stream_id)] = timestamp_us
        self.records_written += 1

    def write_message(self, message) -> None:
        rec = message_to_record(message)
        self.write(rec.stream_id, rec.timestamp_us, rec.payload)

    def close(self) -> None:
        if not self._f.closed:
            self._f.flush()
            self._f.close()

    def __enter__(self) -> "LogWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def read_log_epoch_us(path) -> int:
    """Wall-clock epoch stamped into the file header at creation."""
    with open(path, "rb") as f:
        head = f.read(LOG_HEADER_SIZE)
    if len(head) < LOG_HEADER_SIZE:
        raise TooShortError(f"log header needs {LOG_HEADER_SIZE} bytes, got {len(head)}")
    magic, version, _reserved, epoch_us = _LOG_HEADER.unpack(head)
    if magic != LOG_MAGIC:
        raise BadMagicError(f"bad log magic {magic!r}")
    if version != LOG_VERSION:
        raise BadVersionError(f"unsupported log version {version}")
    return epoch_us


def read_log(path) -> Iterator[Union[LogRecord, Truncated]]:
    """Yield records in file order; a final ``Truncated`` marks a cut file.

    The header is validated up front (bad magic or version raise); after
    that the reader never raises — a file cut mid-record yields every
    complete record followed by one ``Truncated``.
    """
    read_log_epoch_us(path)  # validates magic/version
    with open(path, "rb") as f:
        f.seek(LOG_HEADER_SIZE)
        while True:
            start = f.tell()
            head = f.read(RECORD_HEADER_SIZE)
            if not head:
                return
            if len(head) < RECORD_HEADER_SIZE:
                yield Truncated(offset=start)
                return
            stream_raw, _reserved, payload_len, timestamp_us = _RECORD_HEADER.unpack(head)
            payload = f.read(payload_len)
            if len(payload) < payload_len:
                yield Truncated(offset=start)
                return
            try:
                stream_id = StreamId(stream_raw)
            except ValueError:
                yield Truncated(offset=start)  # unknown stream: cannot trust the rest
                return
            yield LogRecord(stream_id=stream_id, timestamp_us=timestamp_us, payload=payload)


def record(bus: TopicBus, path, duration_s: float,
           topics: tuple[str, ...] = (TOPIC_IMAGE, TOPIC_MOTION),
           epoch_us: Optional[int] = None) -> int:
    """Subscribe to ``topics`` and log everything seen for ``duration_s``.

    Returns the number of records written. The file is valid even if the
    run observes nothing (header-only).
    """
    subs = [bus.subscribe(t, BoundedFifo(1024)) for t in topics]
    deadline = time.monotonic() + duration_s
    try:
        with LogWriter(path, epoch_us=epoch_us) as w:
            while True:
                wrote = False
                for sub in subs:
                    for message in sub.drain():
                        w.write_message(message)
                        wrote = True
                if time.monotonic() >= deadline:
                    break
                if not wrote:
                    time.sleep(0.002)
            for sub in subs:  # final sweep so nothing queued is lost
                for message in sub.drain():
                    w.write_message(message)
            return w.records_written
    finally:
        for sub in subs:
            sub.close()


def record_messages(messages, path, epoch_us: Optional[int] = None) -> int:
    """Log an already-collected message sequence (no bus, no clock)."""
    with LogWriter(path, epoch_us=epoch_us) as w:
        for message in messages:
            w.write_message(message)
        return w.records_written


def replay(path, bus: TopicBus, speed: float = 1.0) -> int:
    """Republish a log onto the bus; returns how many records went out.

    Inter-record delays are the recorded timestamp deltas divided by
    ``speed``; ``speed=math.inf`` (or anything non-finite) replays as fast
    as possible. Sequence numbers are assigned afresh per stream, counting
    from zero. A truncated file replays its valid prefix.
    """
    if not speed > 0:
        raise ValueError(f"speed must be positive, got {speed}")
    paced = math.isfinite(speed)
    prev_ts: Optional[int] = None
    seq = {s: 0 for s in StreamId}
    published = 0
    for rec in read_log(path):
        if isinstance(rec, Truncated):
            break
        if paced and prev_ts is not None:
            delay = (rec.timestamp_us - prev_ts) / 1e6 / speed
            if delay > 0:
                time.sleep(delay)
        prev_ts = rec.timestamp_us
        n = seq[rec.stream_id]
        if rec.stream_id == StreamId.IMAGE:
            img = image_from_record_payload(rec.payload, seq=n,
                                            timestamp_us=rec.timestamp_us)
            bus.publish(TOPIC_IMAGE, CameraFrame(image=img, recv_timestamp_us=rec.timestamp_us))
        elif rec.stream_id == StreamId.MOTION:
            bus.publish(TOPIC_MOTION, decode_motion(rec.payload, seq=n,
                                                    timestamp_us=rec.timestamp_us))
        else:
            bus.publish(TOPIC_COMMAND, decode_request(rec.payload))
        seq[rec.stream_id] = n + 1
        published += 1
    return published


# --- image export ----------------------------------------------------------

def yuv422_to_rgb(img: Image) -> np.ndarray:
    """Convert packed YUYV to an (h, w, 3) uint8 RGB array.

    BT.601 full-range: R = Y + 1.402 (V-128); G = Y - 0.344136 (U-128)
    - 0.714136 (V-128); B = Y + 1.772 (U-128); clamped to [0, 255] and
    rounded to nearest (ties away from zero).
    """
    if img.encoding != Encoding.YUV422:
        raise ValueError(f"expected YUV422, got {img.encoding!r}")
    if img.width % 2 != 0:
        raise ValueError(f"YUV422 requires even width, got {img.width}")
    w, h = img.width, img.height
    data = np.frombuffer(img.pixels, dtype=np.uint8).astype(np.float64)
    y = data[0::2].reshape(h, w)
    u = np.repeat(data[1::4].reshape(h, w // 2), 2, axis=1) - 128.0
    v = np.repeat(data[3::4].reshape(h, w // 2), 2, axis=1) - 128.0
    rgb = np.stack([
        y + 1.402 * v,
        y - 0.344136 * u - 0.714136 * v,
        y + 1.772 * u,
    ], axis=-1)
    np.clip(rgb, 0.0, 255.0, out=rgb)
    return np.floor(rgb + 0.5).astype(np.uint8)


def export_ppm(img: Image, path) -> None:
    """Write a frame as binary PPM (P6, maxval 255)."""
    rgb = yuv422_to_rgb(img)
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (img.width, img.height))
        f.write(rgb.tobytes())
