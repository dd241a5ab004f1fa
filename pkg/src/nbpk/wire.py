"""Binary wire format for the streaming bridge.

Every datagram starts with a fixed 26-byte header (see ``PacketHeader``)
followed by an opaque payload. All multi-byte integers are little-endian;
floats are IEEE-754 binary32. The full layout, with a worked example, is
documented in FORMAT.md at the repository root.

Encoding functions reject invalid values with a diagnostic; decoding
functions accept arbitrary bytes and either return a valid value or raise
a classified :class:`WireError` subclass. They never raise anything else.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from enum import IntEnum

MAGIC = b"NBPK"
WIRE_VERSION = 1

HEADER_SIZE = 26
START_META_SIZE = 12
REQUEST_SIZE = 14

#: Largest UDP payload over IPv4 (65535 - 8 UDP - 20 IP).
UDP_MAX_DATAGRAM = 65507

DEFAULT_FRAG_PAYLOAD = 1400
DEFAULT_JOINT_COUNT = 25

_HEADER = struct.Struct("<4sBBBBIHHHQ")
_START_META = struct.Struct("<IHHBBH")
_REQUEST = struct.Struct("<BBfff")
_F32 = struct.Struct("<f")

assert _HEADER.size == HEADER_SIZE
assert _START_META.size == START_META_SIZE
assert _REQUEST.size == REQUEST_SIZE


class StreamId(IntEnum):
    IMAGE = 1
    MOTION = 2
    COMMAND = 3


class PacketKind(IntEnum):
    SINGLE = 0
    START = 1
    FRAGMENT = 2


class Encoding(IntEnum):
    YUV422 = 1


class MotionMode(IntEnum):
    STAND = 0
    WALK = 1
    SPECIAL = 2


class WireError(ValueError):
    """Base class for every wire encode/decode failure."""


class TooShortError(WireError):
    """Buffer ends before the value it should contain."""


class BadMagicError(WireError):
    """First header bytes are not the NBPK magic."""


class BadVersionError(WireError):
    """Header carries an unsupported format version."""


class InvariantError(WireError):
    """Structurally well-formed bytes that violate a field invariant."""


def as_f32(x: float) -> float:
    """Quantize a Python float to the nearest binary32 value."""
    return _F32.unpack(_F32.pack(x))[0]


def _check_uint(name: str, value: int, bits: int) -> None:
    if not isinstance(value, int) or not 0 <= value < (1 << bits):
        raise InvariantError(f"{name} must be an unsigned {bits}-bit integer, got {value!r}")


@dataclass(frozen=True)
class PacketHeader:
    """Fixed 26-byte prefix of every datagram.

    ``seq`` counts messages per stream; all packets belonging to one
    message share the same ``seq`` and ``timestamp_us``.
    """

    stream_id: StreamId
    kind: PacketKind
    seq: int
    frag_index: int = 0
    frag_count: int = 0
    payload_len: int = 0
    timestamp_us: int = 0
    flags: int = 0
    version: int = WIRE_VERSION

    def validate(self) -> None:
        if self.version != WIRE_VERSION:
            raise BadVersionError(f"unsupported version {self.version}")
        if self.stream_id not in StreamId.__members__.values():
            raise InvariantError(f"unknown stream id {self.stream_id!r}")
        if self.kind not in PacketKind.__members__.values():
            raise InvariantError(f"unknown packet kind {self.kind!r}")
        if self.flags != 0:
            raise InvariantError(f"reserved flags must be 0, got {self.flags:#x}")
        _check_uint("seq", self.seq, 32)
        _check_uint("frag_index", self.frag_index, 16)
        _check_uint("frag_count", self.frag_count, 16)
        _check_uint("payload_len", self.payload_len, 16)
        _check_uint("timestamp_us", self.timestamp_us, 64)
        if self.kind == PacketKind.SINGLE:
            if self.frag_index != 0 or self.frag_count != 0:
                raise InvariantError("SINGLE packets must carry frag_index=0 and frag_count=0")
        elif self.kind == PacketKind.START:
            if self.frag_index != 0:
                raise InvariantError("START packets must carry frag_index=0")
            if self.frag_count < 1:
                raise InvariantError("START packets must announce frag_count >= 1")
        elif self.kind == PacketKind.FRAGMENT:
            if self.frag_index >= self.frag_count:
                raise InvariantError(
                    f"fragment index {self.frag_index} out of range for frag_count {self.frag_count}"
                )


def encode_header(h: PacketHeader) -> bytes:
    """Serialize a header to its 26-byte wire form. Raises on invalid fields."""
    h.validate()
    return _HEADER.pack(
        MAGIC,
        h.version,
        int(h.stream_id),
        int(h.kind),
        h.flags,
        h.seq,
        h.frag_index,
        h.frag_count,
        h.payload_len,
        h.timestamp_us,
    )


def decode_header(b: bytes) -> PacketHeader:
    """Parse the first 26 bytes of ``b`` into a validated header."""
    if len(b) < HEADER_SIZE:
        raise TooShortError(f"header needs {HEADER_SIZE} bytes, got {len(b)}")
    magic, version, stream_raw, kind_raw, flags, seq, frag_index, frag_count, payload_len, ts = (
        _HEADER.unpack_from(b)
    )
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}")
    if version != WIRE_VERSION:
        raise BadVersionError(f"unsupported version {version}")
    try:
        stream_id = StreamId(stream_raw)
    except ValueError:
        raise InvariantError(f"unknown stream id {stream_raw}") from None
    try:
        kind = PacketKind(kind_raw)
    except ValueError:
        raise InvariantError(f"unknown packet kind {kind_raw}") from None
    h = PacketHeader(
        stream_id=stream_id,
        kind=kind,
        seq=seq,
        frag_index=frag_index,
        frag_count=frag_count,
        payload_len=payload_len,
        timestamp_us=ts,
        flags=flags,
        version=version,
    )
    h.validate()
    return h


@dataclass(frozen=True)
class ImageStartMeta:
    """Announcement carried by a START packet: what the fragments assemble into."""

    total_len: int
    width: int
    height: int
    encoding: Encoding = Encoding.YUV422
    frag_payload: int = DEFAULT_FRAG_PAYLOAD

    @classmethod
    def for_image(cls, width: int, height: int, frag_payload: int = DEFAULT_FRAG_PAYLOAD) -> "ImageStartMeta":
        return cls(total_len=width * height * 2, width=width, height=height, frag_payload=frag_payload)

    @property
    def frag_count(self) -> int:
        return -(-self.total_len // self.frag_payload)

    def validate(self) -> None:
        _check_uint("total_len", self.total_len, 32)
        _check_uint("width", self.width, 16)
        _check_uint("height", self.height, 16)
        _check_uint("frag_payload", self.frag_payload, 16)
        if self.encoding not in Encoding.__members__.values():
            raise InvariantError(f"unknown encoding {self.encoding!r}")
        if self.frag_payload == 0:
            raise InvariantError("frag_payload must be nonzero")
        if self.encoding == Encoding.YUV422 and self.total_len != self.width * self.height * 2:
            raise InvariantError(
                f"total_len {self.total_len} inconsistent with "
                f"{self.width}x{self.height} YUV422 ({self.width * self.height * 2} bytes)"
            )


def encode_start_meta(m: ImageStartMeta) -> bytes:
    m.validate()
    return _START_META.pack(m.total_len, m.width, m.height, int(m.encoding), 0, m.frag_payload)


def decode_start_meta(b: bytes) -> ImageStartMeta:
    if len(b) < START_META_SIZE:
        raise TooShortError(f"start meta needs {START_META_SIZE} bytes, got {len(b)}")
    total_len, width, height, enc_raw, reserved, frag_payload = _START_META.unpack_from(b)
    try:
        encoding = Encoding(enc_raw)
    except ValueError:
        raise InvariantError(f"unknown encoding {enc_raw}") from None
    if reserved != 0:
        raise InvariantError(f"reserved byte must be 0, got {reserved:#x}")
    m = ImageStartMeta(total_len=total_len, width=width, height=height,
                       encoding=encoding, frag_payload=frag_payload)
    m.validate()
    return m


@dataclass(frozen=True)
class Image:
    """One camera frame: packed pixel bytes plus stream metadata."""

    width: int
    height: int
    pixels: bytes
    encoding: Encoding = Encoding.YUV422
    seq: int = 0
    timestamp_us: int = 0

    def __post_init__(self) -> None:
        expected = self.width * self.height * 2
        if self.encoding == Encoding.YUV422 and len(self.pixels) != expected:
            raise InvariantError(
                f"YUV422 {self.width}x{self.height} needs {expected} pixel bytes, got {len(self.pixels)}"
            )


@dataclass(frozen=True)
class MotionReading:
    """Joint, IMU and locomotion state sampled by the robot's motion loop.

    ``seq`` and ``timestamp_us`` travel in the packet header, not in the
    payload; ``decode_motion`` takes them as arguments.
    """

    positions: tuple[float, ...]
    gyro: tuple[float, float, float] = (0.0, 0.0, 0.0)
    accel: tuple[float, float, float] = (0.0, 0.0, 0.0)
    torso_angle: tuple[float, float] = (0.0, 0.0)
    velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)
    joint_count: int = DEFAULT_JOINT_COUNT
    seq: int = 0
    timestamp_us: int = 0

    @classmethod
    def zero(cls, joint_count: int = DEFAULT_JOINT_COUNT) -> "MotionReading":
        return cls(positions=(0.0,) * joint_count, joint_count=joint_count)

    @staticmethod
    def payload_size(joint_count: int) -> int:
        return 2 + 4 * joint_count + 12 + 12 + 8 + 12


def encode_motion(m: MotionReading) -> bytes:
    """Serialize a reading; payload length is ``2 + 4*joints + 44`` bytes."""
    _check_uint("joint_count", m.joint_count, 8)
    if len(m.positions) != m.joint_count:
        raise InvariantError(
            f"joint_count={m.joint_count} but {len(m.positions)} positions given"
        )
    if len(m.gyro) != 3 or len(m.accel) != 3 or len(m.torso_angle) != 2 or len(m.velocity) != 3:
        raise InvariantError("gyro/accel must be 3-vectors, torso_angle 2, velocity 3")
    values = (*m.positions, *m.gyro, *m.accel, *m.torso_angle, *m.velocity)
    try:
        body = struct.pack(f"<BB{len(values)}f", m.joint_count, 0, *values)
    except (struct.error, OverflowError) as exc:
        raise InvariantError(f"unpackable motion value: {exc}") from None
    return body


def decode_motion(b: bytes, *, seq: int = 0, timestamp_us: int = 0) -> MotionReading:
    """Parse a motion payload; ``seq``/``timestamp_us`` come from the header."""
    if len(b) < 2:
        raise TooShortError(f"motion payload needs at least 2 bytes, got {len(b)}")
    joint_count = b[0]
    reserved = b[1]
    if reserved != 0:
        raise InvariantError(f"reserved byte must be 0, got {reserved:#x}")
    expected = MotionReading.payload_size(joint_count)
    if len(b) < expected:
        raise TooShortError(f"motion payload for {joint_count} joints needs {expected} bytes, got {len(b)}")
    if len(b) != expected:
        raise InvariantError(f"motion payload has {len(b) - expected} trailing bytes")
    n = joint_count + 11
    values = struct.unpack_from(f"<{n}f", b, 2)
    j = joint_count
    return MotionReading(
        positions=values[:j],
        gyro=values[j:j + 3],
        accel=values[j + 3:j + 6],
        torso_angle=values[j + 6:j + 8],
        velocity=values[j + 8:j + 11],
        joint_count=joint_count,
        seq=seq,
        timestamp_us=timestamp_us,
    )


@dataclass(frozen=True)
class MotionRequest:
    """Gait order sent back to the robot.

    Velocities are fractions of the robot's maximum speed in [-1, 1].
    STAND always carries zero velocities; nonzero values passed to the
    constructor are forced to zero.
    """

    mode: MotionMode
    action_id: int = 0
    vx: float = 0.0
    vy: float = 0.0
    omega: float = 0.0

    def __post_init__(self) -> None:
        if self.mode == MotionMode.STAND:
            object.__setattr__(self, "vx", 0.0)
            object.__setattr__(self, "vy", 0.0)
            object.__setattr__(self, "omega", 0.0)

    @classmethod
    def stand(cls) -> "MotionRequest":
        return cls(mode=MotionMode.STAND)

    @classmethod
    def walk(cls, vx: float, vy: float = 0.0, omega: float = 0.0) -> "MotionRequest":
        return cls(mode=MotionMode.WALK, vx=vx, vy=vy, omega=omega)


def _check_velocity(name: str, v: float) -> None:
    if not math.isfinite(v):
        raise InvariantError(f"{name} must be finite, got {v!r}")
    if not -1.0 <= v <= 1.0:
        raise InvariantError(f"{name} must lie in [-1, 1], got {v!r}")


def encode_request(r: MotionRequest) -> bytes:
    if r.mode not in MotionMode.__members__.values():
        raise InvariantError(f"unknown motion mode {r.mode!r}")
    _check_uint("action_id", r.action_id, 8)
    for name, v in (("vx", r.vx), ("vy", r.vy), ("omega", r.omega)):
        _check_velocity(name, v)
    return _REQUEST.pack(int(r.mode), r.action_id, r.vx, r.vy, r.omega)


def decode_request(b: bytes) -> MotionRequest:
    if len(b) < REQUEST_SIZE:
        raise TooShortError(f"motion request needs {REQUEST_SIZE} bytes, got {len(b)}")
    if len(b) != REQUEST_SIZE:
        raise InvariantError(f"motion request has {len(b) - REQUEST_SIZE} trailing bytes")
    mode_raw, action_id, vx, vy, omega = _REQUEST.unpack(b)
    try:
        mode = MotionMode(mode_raw)
    except ValueError:
        raise InvariantError(f"unknown motion mode {mode_raw}") from None
    for name, v in (("vx", vx), ("vy", vy), ("omega", omega)):
        _check_velocity(name, v)
    if mode == MotionMode.STAND and (vx != 0.0 or vy != 0.0 or omega != 0.0):
        raise InvariantError("STAND request must carry zero velocities")
    return MotionRequest(mode=mode, action_id=action_id, vx=vx, vy=vy, omega=omega)
