"""Backpack-side driver: receive loops, reassembly, topic bus, command path.

The bus is a small in-process publish/subscribe fabric: named topics,
typed payloads, and per-subscriber queues. Publishing never blocks — each
subscriber chooses what it can afford to lose via its queue policy
(``LatestWins`` keeps only the newest message, ``BoundedFifo`` keeps the
last N and counts what it sheds).

The bridge itself runs one receive loop per stream, publishes completed
images on ``camera/image_raw`` and motion readings on ``motion/state``,
emits a stats snapshot on ``bridge/stats`` once per period, and forwards
anything published on ``motion/request`` to the robot as a command packet.
"""

from __future__ import annotations

import json
import threading
import time
from collections import deque
from dataclasses import asdict, dataclass
from typing import Any, Callable, Optional, Union

from .channel import (
    DEFAULT_COMMAND_PORT,
    DEFAULT_IMAGE_PORT,
    DEFAULT_MOTION_PORT,
    EndpointConfig,
    TruncatedDatagramError,
    UdpEndpoint,
)
from .fragment import (
    ImageComplete,
    Packet,
    Reassembler,
    SingleDelivered,
    StreamStats,
    packetize_single,
)
from .wire import (
    Image,
    MotionReading,
    MotionRequest,
    StreamId,
    WireError,
    decode_motion,
    encode_request,
)

TOPIC_IMAGE = "camera/image_raw"
TOPIC_MOTION = "motion/state"
TOPIC_STATS = "bridge/stats"
TOPIC_COMMAND = "motion/request"


# --- topic bus -------------------------------------------------------------

@dataclass(frozen=True)
class LatestWins:
    """Depth-1 queue: a newer message silently replaces the pending one."""

    @property
    def depth(self) -> int:
        return 1


@dataclass(frozen=True)
class BoundedFifo:
    """Keep the newest ``depth`` messages; overflow sheds the oldest."""

    depth: int = 64

    def __post_init__(self) -> None:
        if self.depth < 1:
            raise ValueError(f"queue depth must be >= 1, got {self.depth}")


QueuePolicy = Union[LatestWins, BoundedFifo]


class Subscription:
    """One subscriber's view of a topic. Created via :meth:`TopicBus.subscribe`."""

    def __init__(self, bus: "TopicBus", topic: str, policy: QueuePolicy):
        self._bus = bus
        self.topic = topic
        self.policy = policy
        self._dq: deque = deque()
        self._cond = threading.Condition()
        self._closed = False
        self.drops = 0

    def _offer(self, message: Any) -> None:
        with self._cond:
            if self._closed:
                return
            if len(self._dq) >= self.policy.depth:
                self._dq.popleft()
                self.drops += 1
            self._dq.append(message)
            self._cond.notify()

    def get(self, timeout: Optional[float] = None) -> Optional[Any]:
        """Pop the next message, waiting up to ``timeout``; None if none came."""
        with self._cond:
            self._cond.wait_for(lambda: self._dq or self._closed, timeout)
            if self._dq:
                return self._dq.popleft()
            return None

    def get_nowait(self) -> Optional[Any]:
        with self._cond:
            return self._dq.popleft() if self._dq else None

    def drain(self) -> list:
        """Pop everything currently queued."""
        with self._cond:
            out = list(self._dq)
            self._dq.clear()
            return out

    @property
    def pending(self) -> int:
        with self._cond:
            return len(self._dq)

    def close(self) -> None:
        self._bus._unsubscribe(self)
        with self._cond:
            self._closed = True
            self._cond.notify_all()


class _Topic:
    __slots__ = ("name", "payload_type", "subscribers")

    def __init__(self, name: str):
        self.name = name
        self.payload_type: Optional[type] = None
        self.subscribers: list[Subscription] = []


class TopicBus:
    """Named topics with typed payloads and non-blocking fan-out."""

    def __init__(self):
        self._lock = threading.Lock()
        self._topics: dict[str, _Topic] = {}

    def _topic(self, name: str) -> _Topic:
        if not name:
            raise ValueError("topic name must be non-empty")
        t = self._topics.get(name)
        if t is None:
            t = self._topics[name] = _Topic(name)
        return t

    def register(self, topic: str, payload_type: type) -> None:
        """Pin a topic's payload type ahead of the first publish."""
        with self._lock:
            t = self._topic(topic)
            if t.payload_type is not None and t.payload_type is not payload_type:
                raise TypeError(
                    f"topic {topic!r} already carries {t.payload_type.__name__}, "
                    f"cannot re-register as {payload_type.__name__}"
                )
            t.payload_type = payload_type

    def publish(self, topic: str, message: Any) -> None:
        """Hand a message to every current subscriber of ``topic``.

        Never blocks: each subscriber's queue policy decides what is kept.
        Subscribers observe one topic's messages in publish order.
        """
        if message is None:
            raise TypeError("cannot publish None")
        with self._lock:
            t = self._topic(topic)
            if t.payload_type is None:
                t.payload_type = type(message)
            elif not isinstance(message, t.payload_type):
                raise TypeError(
                    f"topic {topic!r} carries {t.payload_type.__name__}, "
                    f"got {type(message).__name__}"
                )
            subs = list(t.subscribers)
        for sub in subs:
            sub._offer(message)

    def subscribe(self, topic: str, policy: QueuePolicy) -> Subscription:
        sub = Subscription(self, topic, policy)
        with self._lock:
            self._topic(topic).subscribers.append(sub)
        return sub

    def _unsubscribe(self, sub: Subscription) -> None:
        with self._lock:
            t = self._topics.get(sub.topic)
            if t is not None and sub in t.subscribers:
                t.subscribers.remove(sub)

    def topics(self) -> list[str]:
        with self._lock:
            return sorted(self._topics)


def publish(bus: TopicBus, topic: str, message: Any) -> None:
    bus.publish(topic, message)


def subscribe(bus: TopicBus, topic: str, policy: QueuePolicy) -> Subscription:
    return bus.subscribe(topic, policy)


# --- bridge ----------------------------------------------------------------

@dataclass(frozen=True)
class CameraFrame:
    """A completed image plus the local receive time.

    ``image.timestamp_us`` is the sender's clock at capture;
    ``recv_timestamp_us`` is this process's clock at reassembly.
    """

    image: Image
    recv_timestamp_us: int


@dataclass(frozen=True)
class BridgeStats:
    """One stats-tick snapshot, published on ``bridge/stats``."""

    image: StreamStats
    motion: StreamStats
    frames_published: int
    motions_published: int
    commands_forwarded: int
    frames_stale: int
    malformed_packets: int
    uptime_s: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


@dataclass(frozen=True)
class BridgeConfig:
    """Listen ports, robot address, and publication cadence."""

    image_port: int = DEFAULT_IMAGE_PORT
    motion_port: int = DEFAULT_MOTION_PORT
    bind_host: str = "0.0.0.0"
    robot_host: str = "127.0.0.1"
    robot_command_port: int = DEFAULT_COMMAND_PORT
    stats_period_s: float = 1.0
    reassembly_timeout_ms: Optional[int] = None

    def __post_init__(self) -> None:
        if self.image_port == self.motion_port and self.image_port != 0:
            raise ValueError("image and motion ports must be distinct")
        if self.stats_period_s <= 0:
            raise ValueError(f"stats_period_s must be positive, got {self.stats_period_s}")
        if self.reassembly_timeout_ms is not None and self.reassembly_timeout_ms <= 0:
            raise ValueError("reassembly_timeout_ms must be positive when set")


def _now_us() -> int:
    return int(time.monotonic() * 1e6)


class Bridge:
    """Threaded receive/publish/forward engine. Use as a context manager.

    Frames that fail reassembly never reach the bus; frames that complete
    out of order (possible only under reordering transports) are counted
    stale and suppressed so subscribers always see strictly increasing
    sequence numbers.
    """

    def __init__(self, cfg: BridgeConfig, bus: Optional[TopicBus] = None,
                 on_stats: Optional[Callable[[BridgeStats], None]] = None):
        self.cfg = cfg
        self.bus = bus if bus is not None else TopicBus()
        self._on_stats = on_stats
        self._image_in = UdpEndpoint(EndpointConfig(
            bind_host=cfg.bind_host, bind_port=cfg.image_port))
        self._motion_in = UdpEndpoint(EndpointConfig(
            bind_host=cfg.bind_host, bind_port=cfg.motion_port))
        self._command_out = UdpEndpoint(EndpointConfig(bind_host="0.0.0.0", bind_port=0))
        self._robot_addr = (cfg.robot_host, cfg.robot_command_port)
        timeout_us = None if cfg.reassembly_timeout_ms is None else cfg.reassembly_timeout_ms * 1000
        self._image_rx = Reassembler(timeout_us=timeout_us)
        self._motion_rx = Reassembler()
        self.bus.register(TOPIC_IMAGE, CameraFrame)
        self.bus.register(TOPIC_MOTION, MotionReading)
        self.bus.register(TOPIC_STATS, BridgeStats)
        self.bus.register(TOPIC_COMMAND, MotionRequest)
        self._cmd_sub = self.bus.subscribe(TOPIC_COMMAND, BoundedFifo(64))
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []
        self._cmd_lock = threading.Lock()
        self._cmd_seq = 0
        self._last_image_seq = -1
        self._last_motion_seq = -1
        self._started_at = time.monotonic()
        self.frames_published = 0
        self.motions_published = 0
        self.commands_forwarded = 0
        self.frames_stale = 0
        self.malformed_packets = 0

    @property
    def image_port(self) -> int:
        return self._image_in.local_port

    @property
    def motion_port(self) -> int:
        return self._motion_in.local_port

    def set_robot_address(self, host: str, port: int) -> None:
        """Repoint the command back-channel (e.g. after the robot's port is known)."""
        self._robot_addr = (host, port)

    def start(self) -> None:
        if self._threads:
            raise RuntimeError("bridge already started")
        self._started_at = time.monotonic()
        for name, fn in (("nbpk-bridge-image", self._image_loop),
                         ("nbpk-bridge-motion", self._motion_loop),
                         ("nbpk-bridge-stats", self._stats_loop),
                         ("nbpk-bridge-command", self._command_loop)):
            t = threading.Thread(target=fn, name=name, daemon=True)
            t.start()
            self._threads.append(t)

    def stop(self) -> None:
        self._stop.set()
        for t in self._threads:
            t.join(timeout=5.0)
        self._threads.clear()
        for ep in (self._image_in, self._motion_in, self._command_out):
            ep.close()

    def __enter__(self) -> "Bridge":
        self.start()
        return self

    def __exit__(self, *exc) -> None:
        self.stop()

    def stats(self) -> BridgeStats:
        return BridgeStats(
            image=self._image_rx.stats(),
            motion=self._motion_rx.stats(),
            frames_published=self.frames_published,
            motions_published=self.motions_published,
            commands_forwarded=self.commands_forwarded,
            frames_stale=self.frames_stale,
            malformed_packets=self.malformed_packets,
            uptime_s=time.monotonic() - self._started_at,
        )

    def command_forward(self, req: MotionRequest) -> Packet:
        """Send one command packet to the robot; returns what went on the wire."""
        payload = encode_request(req)  # rejects non-finite or out-of-range values
        with self._cmd_lock:
            seq = self._cmd_seq
            self._cmd_seq += 1
        pkt = packetize_single(payload, StreamId.COMMAND, seq=seq, timestamp_us=_now_us())
        self._command_out.send_to(pkt.to_bytes(), self._robot_addr)
        self.commands_forwarded += 1
        return pkt

    def _recv_packet(self, endpoint: UdpEndpoint, expect: StreamId) -> Optional[Packet]:
        try:
            r = endpoint.recv(timeout=0.1)
        except TruncatedDatagramError:
            self.malformed_packets += 1
            return None
        except OSError:
            if self._stop.is_set():
                return None
            raise
        if r is None:
            return None
        data, _addr = r
        try:
            pkt = Packet.from_bytes(data)
        except WireError:
            self.malformed_packets += 1
            return None
        if pkt.header.stream_id != expect:
            self.malformed_packets += 1
            return None
        return pkt

    def _image_loop(self) -> None:
        rx = self._image_rx
        while not self._stop.is_set():
            pkt = self._recv_packet(self._image_in, StreamId.IMAGE)
            now = _now_us()
            if pkt is not None:
                event = rx.step(pkt, now_us=now)
                if isinstance(event, ImageComplete):
                    img = event.image
                    if img.seq <= self._last_image_seq:
                        self.frames_stale += 1
                    else:
                        self._last_image_seq = img.seq
                        self.bus.publish(TOPIC_IMAGE, CameraFrame(image=img, recv_timestamp_us=now))
                        self.frames_published += 1
            rx.poll(now)

    def _motion_loop(self) -> None:
        rx = self._motion_rx
        while not self._stop.is_set():
            pkt = self._recv_packet(self._motion_in, StreamId.MOTION)
            if pkt is None:
                continue
            event = rx.step(pkt, now_us=_now_us())
            if not isinstance(event, SingleDelivered):
                continue
            try:
                reading = decode_motion(event.payload, seq=event.seq,
                                        timestamp_us=event.timestamp_us)
            except WireError:
                self.malformed_packets += 1
                continue
            if reading.seq <= self._last_motion_seq:
                self.frames_stale += 1
                continue
            self._last_motion_seq = reading.seq
            self.bus.publish(TOPIC_MOTION, reading)
            self.motions_published += 1

    def _stats_loop(self) -> None:
        while not self._stop.wait(self.cfg.stats_period_s):
            snap = self.stats()
            self.bus.publish(TOPIC_STATS, snap)
            if self._on_stats is not None:
                self._on_stats(snap)

    def _command_loop(self) -> None:
        while not self._stop.is_set():
            req = self._cmd_sub.get(timeout=0.1)
            if req is None:
                continue
            try:
                self.command_forward(req)
            except (WireError, OSError):
                self.malformed_packets += 1


def run_bridge(cfg: BridgeConfig, bus: Optional[TopicBus] = None,
               on_stats: Optional[Callable[[BridgeStats], None]] = None,
               duration: Optional[float] = None) -> None:
    """Run a bridge until interrupted (or for ``duration`` seconds)."""
    bridge = Bridge(cfg, bus=bus, on_stats=on_stats)
    bridge.start()
    try:
        if duration is not None:
            time.sleep(duration)
        else:
            while True:
                time.sleep(0.5)
    except KeyboardInterrupt:
        pass
    finally:
        bridge.stop()
