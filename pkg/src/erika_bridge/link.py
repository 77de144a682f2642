"""Byte transport with software flow control and print-speed pacing.

Two transports share one contract (ordered, lossless byte streams in both
directions): an in-memory duplex pair for the simulator and tests, and a
POSIX serial port for real hardware. Flow control is in-band XON/XOFF: the
reader routes those bytes into a FlowMonitor that the paced sender consults
before every byte.
"""

from __future__ import annotations

import os
import threading
from collections import deque
from dataclasses import dataclass
from typing import Callable, Iterator, Optional

from .clock import Clock, MonotonicClock
from .codec import (
    CodePage,
    ControlEvent,
    ControlKind,
    DeviceEvent,
    decode_byte,
)


class LinkError(Exception):
    """Transport failure; ``kind`` is a stable machine-readable tag."""

    def __init__(self, kind: str, message: str) -> None:
        self.kind = kind
        super().__init__(message)


class TransportClosed(LinkError):
    def __init__(self, message: str = "transport closed") -> None:
        super().__init__("closed", message)


@dataclass(frozen=True)
class PacingPolicy:
    """Rate limit matching mechanical print speed.

    The first ``burst`` bytes (beyond the opening byte) go out immediately;
    afterwards consecutive bytes are spaced at least 1/chars_per_second apart.
    """

    chars_per_second: float = 10.0
    burst: int = 8

    def __post_init__(self) -> None:
        if self.chars_per_second <= 0:
            raise ValueError("chars_per_second must be positive")
        if self.burst < 0:
            raise ValueError("burst must be non-negative")


class FlowState:
    RUNNING = "Running"
    PAUSED = "Paused"


class FlowMonitor:
    """Shared XON/XOFF state between the read side and the send side.

    The reader calls observe() for every flow byte; the sender waits on the
    condition. No transition is lost: state changes happen under the lock and
    wake all waiters.
    """

    def __init__(self) -> None:
        self._cond = threading.Condition()
        self._paused = False
        self.transitions = 0

    def observe(self, kind: ControlKind) -> None:
        with self._cond:
            if kind is ControlKind.XOFF and not self._paused:
                self._paused = True
                self.transitions += 1
                self._cond.notify_all()
            elif kind is ControlKind.XON and self._paused:
                self._paused = False
                self.transitions += 1
                self._cond.notify_all()

    @property
    def paused(self) -> bool:
        with self._cond:
            return self._paused

    @property
    def state(self) -> str:
        return FlowState.PAUSED if self.paused else FlowState.RUNNING

    def wait_not_paused(self, timeout: float) -> bool:
        """Block (real time) until running; True if running on return."""
        with self._cond:
            return self._cond.wait_for(lambda: not self._paused, timeout)


class InMemoryEndpoint:
    """One end of a paired in-memory duplex byte channel (FIFO, lossless)."""

    def __init__(self, name: str = "mem") -> None:
        self.name = name
        self._rx: deque[int] = deque()
        self._cond = threading.Condition()
        self._closed = False
        self._peer: Optional["InMemoryEndpoint"] = None
        self._sink: Optional[Callable[[int], None]] = None

    # -- wiring -----------------------------------------------------------

    def set_sink(self, sink: Optional[Callable[[int], None]]) -> None:
        """Deliver incoming bytes synchronously to ``sink`` instead of the FIFO.

        Used to wire the simulator directly to its end of the channel; must be
        installed before traffic starts.
        """
        self._sink = sink

    # -- byte stream ------------------------------------------------------

    def write(self, data: bytes) -> None:
        peer = self._peer
        if peer is None:
            raise LinkError("unwired", "endpoint has no peer")
        if self._closed or peer._closed:
            raise TransportClosed()
        sink = peer._sink
        if sink is not None:
            for b in data:
                sink(b)
            return
        with peer._cond:
            peer._rx.extend(data)
            peer._cond.notify_all()

    def read(self, max_bytes: int = 4096, timeout: float | None = None) -> bytes:
        """Read up to max_bytes. b"" means timeout expired or EOF (closed and
        drained); check ``closed`` to tell the two apart."""
        with self._cond:
            if not self._rx and not self._closed:
                self._cond.wait_for(lambda: self._rx or self._closed, timeout)
            if not self._rx:
                return b""
            out = bytearray()
            while self._rx and len(out) < max_bytes:
                out.append(self._rx.popleft())
            return bytes(out)

    def bytes_available(self) -> int:
        with self._cond:
            return len(self._rx)

    @property
    def closed(self) -> bool:
        return self._closed or (self._peer is not None and self._peer._closed)

    def close(self) -> None:
        self._closed = True
        with self._cond:
            self._cond.notify_all()
        peer = self._peer
        if peer is not None:
            with peer._cond:
                peer._cond.notify_all()


def open_in_memory(name: str = "mem") -> tuple[InMemoryEndpoint, InMemoryEndpoint]:
    """Return both ends of a connected in-memory duplex channel."""
    a = InMemoryEndpoint(f"{name}:a")
    b = InMemoryEndpoint(f"{name}:b")
    a._peer = b
    b._peer = a
    return a, b


class SerialEndpoint:
    """POSIX serial port in raw mode: 8 data bits, no parity, 1 stop bit.

    XON/XOFF handling stays in this library (termios flow control off) so
    the same FlowMonitor logic governs hardware and simulator alike.
    """

    def __init__(self, device: str, baud: int = 1200) -> None:
        import errno
        import fcntl
        import termios

        self.device = device
        self.baud = baud
        try:
            self._fd = os.open(device, os.O_RDWR | os.O_NOCTTY | os.O_NONBLOCK)
        except FileNotFoundError:
            raise LinkError("device-not-found", f"no such device: {device}") from None
        except PermissionError:
            raise LinkError("permission-denied", f"cannot open {device}") from None
        except OSError as exc:
            if exc.errno == errno.EBUSY:
                raise LinkError("already-open", f"{device} is already open") from None
            raise LinkError("device-not-found", f"cannot open {device}: {exc}") from None
        self._closed = False
        try:
            fcntl.ioctl(self._fd, termios.TIOCEXCL)  # second opener gets EBUSY
        except OSError:
            pass  # exclusivity unsupported here (some pty flavours); carry on
        baud_const = getattr(termios, f"B{baud}", None)
        if baud_const is None:
            os.close(self._fd)
            raise LinkError("bad-config", f"unsupported baud rate {baud}")
        try:
            attrs = termios.tcgetattr(self._fd)
            iflag, oflag, cflag, lflag, _, _, cc = attrs
            iflag = 0  # no IXON/IXOFF: flow control is ours
            oflag = 0
            cflag = termios.CREAD | termios.CLOCAL | termios.CS8
            lflag = 0
            cc[termios.VMIN] = 0
            cc[termios.VTIME] = 1  # 0.1 s read granularity
            termios.tcsetattr(
                self._fd,
                termios.TCSANOW,
                [iflag, oflag, cflag, lflag, baud_const, baud_const, cc],
            )
        except termios.error as exc:
            os.close(self._fd)
            raise LinkError("bad-config", f"cannot configure {device}: {exc}") from None

    def write(self, data: bytes) -> None:
        if self._closed:
            raise TransportClosed()
        view = memoryview(data)
        while view:
            try:
                n = os.write(self._fd, view)
            except OSError as exc:
                raise TransportClosed(f"serial write failed: {exc}") from None
            view = view[n:]

    def read(self, max_bytes: int = 4096, timeout: float | None = None) -> bytes:
        if self._closed:
            return b""
        try:
            return os.read(self._fd, max_bytes)
        except BlockingIOError:
            if timeout:
                import select

                select.select([self._fd], [], [], timeout)
                try:
                    return os.read(self._fd, max_bytes)
                except (BlockingIOError, OSError):
                    return b""
            return b""
        except OSError:
            return b""

    @property
    def closed(self) -> bool:
        return self._closed

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            os.close(self._fd)


@dataclass(frozen=True)
class InMemoryDescriptor:
    name: str = "mem"


@dataclass(frozen=True)
class SerialDescriptor:
    device: str
    baud: int = 1200


def open_transport(descriptor: InMemoryDescriptor | SerialDescriptor):
    """Open a transport; in-memory descriptors return both ends."""
    if isinstance(descriptor, InMemoryDescriptor):
        return open_in_memory(descriptor.name)
    return SerialEndpoint(descriptor.device, descriptor.baud)


@dataclass
class SendReport:
    bytes_sent: int = 0
    pause_time: float = 0.0
    duration: float = 0.0
    completed: bool = False
    paused: bool = False       # gave up while flow-paused
    aborted: bool = False      # cancelled by caller
    closed: bool = False       # transport went away mid-send

    @property
    def flow_state(self) -> str:
        return FlowState.PAUSED if self.paused else FlowState.RUNNING


_POLL_TICK = 0.005


def send_paced(
    endpoint,
    data: bytes,
    policy: PacingPolicy,
    flow: FlowMonitor | None = None,
    clock: Clock | None = None,
    *,
    poll: Callable[[], None] | None = None,
    should_abort: Callable[[], bool] | None = None,
    max_pause: float | None = None,
    on_byte: Callable[[int], None] | None = None,
) -> SendReport:
    """Send bytes in order, rate-limited and flow-controlled.

    ``poll`` is the co-operative hook for single-threaded setups: it is called
    before each byte and while paused, and is expected to move any pending
    receive-side bytes through the decoder (which updates ``flow``). With a
    reader thread doing that job, leave it None. ``max_pause`` bounds the
    total time spent waiting on XOFF; exceeding it returns a report with
    ``paused=True`` instead of blocking forever.
    """
    clock = clock or MonotonicClock()
    report = SendReport()
    gap = 1.0 / policy.chars_per_second
    start = clock.now()
    # Pacing anchors on a fixed schedule (anchor + k*gap) instead of
    # accumulating sleeps, so rounding never lets N bytes finish a whisker
    # early; the per-gap minimum against the previous write still holds.
    anchor = start
    gaps = 0
    last_write: float | None = None
    for index, b in enumerate(data):
        if should_abort is not None and should_abort():
            report.aborted = True
            break
        if poll is not None:
            poll()
        if flow is not None and flow.paused:
            pause_start = clock.now()
            gave_up = False
            while flow.paused:
                if should_abort is not None and should_abort():
                    report.aborted = True
                    gave_up = True
                    break
                waited = clock.now() - pause_start
                if max_pause is not None and report.pause_time + waited >= max_pause:
                    report.paused = True
                    gave_up = True
                    break
                if poll is not None:
                    clock.sleep(_POLL_TICK)
                    poll()
                else:
                    flow.wait_not_paused(timeout=0.05)
            report.pause_time += clock.now() - pause_start
            if gave_up:
                break
            anchor = clock.now()  # restart the schedule; no catch-up burst
            gaps = 0
        if index >= max(1, policy.burst):
            gaps += 1
            target = anchor + gaps * gap
            if last_write is not None:
                target = max(target, last_write + gap)
            now = clock.now()
            if now < target:
                clock.sleep(target - now)
        try:
            endpoint.write(bytes([b]))
        except (TransportClosed, LinkError):
            report.closed = True
            break
        report.bytes_sent += 1
        last_write = clock.now()
        if on_byte is not None:
            on_byte(b)
    else:
        report.completed = True
    report.duration = clock.now() - start
    return report


def drain_events(
    endpoint,
    cp: CodePage,
    flow: FlowMonitor | None = None,
) -> list[DeviceEvent]:
    """Decode every byte currently available, without blocking.

    XON/XOFF events hit the FlowMonitor first, then appear in the returned
    list like everything else.
    """
    events: list[DeviceEvent] = []
    while True:
        data = endpoint.read(4096, timeout=0)
        if not data:
            return events
        for b in data:
            ev = decode_byte(cp, b)
            if flow is not None and isinstance(ev, ControlEvent) and ev.kind in (
                ControlKind.XON,
                ControlKind.XOFF,
            ):
                flow.observe(ev.kind)
            events.append(ev)


def read_events(
    endpoint,
    cp: CodePage,
    flow: FlowMonitor | None = None,
    stop: Callable[[], bool] | None = None,
) -> Iterator[DeviceEvent]:
    """Blocking event stream: one DeviceEvent per received byte, in order.

    Terminates cleanly when the transport closes (after draining) or when
    ``stop`` returns True.
    """
    while True:
        if stop is not None and stop():
            return
        data = endpoint.read(4096, timeout=0.1)
        if not data:
            if endpoint.closed:
                return
            continue
        for b in data:
            ev = decode_byte(cp, b)
            if flow is not None and isinstance(ev, ControlEvent) and ev.kind in (
                ControlKind.XON,
                ControlKind.XOFF,
            ):
                flow.observe(ev.kind)
            yield ev
