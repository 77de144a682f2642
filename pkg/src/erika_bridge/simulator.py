"""A virtual daisy-wheel typewriter.

Consumes print bytes into a paper-page model with real carriage semantics
(no auto-wrap: the carriage stops at the right margin and further characters
overstrike the last column), emits key bytes for injected keystrokes with
local echo, and protects a small receive buffer with XON/XOFF exactly like
a slow mechanical printer would.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Optional

from .clock import Clock, MonotonicClock
from .codec import (
    CharEvent,
    CodePage,
    ControlEvent,
    ControlKind,
    decode_byte,
)


class UnencodableKey(Exception):
    """Keystroke has no byte in the active codepage."""


@dataclass(frozen=True)
class DeviceBuffer:
    """Receive buffer geometry; XOFF asserts at high_water, XON below low_water."""

    capacity: int = 16
    high_water: int = 12
    low_water: int = 4

    def __post_init__(self) -> None:
        if not 0 < self.low_water < self.high_water <= self.capacity:
            raise ValueError("need 0 < low_water < high_water <= capacity")


@dataclass(frozen=True)
class PaperPage:
    """Immutable snapshot of the simulated sheet."""

    width: int
    rows: tuple[str, ...]          # last stroke per cell, right-trimmed
    carriage_row: int
    carriage_col: int
    printed_chars: int

    def text(self) -> str:
        return "\n".join(self.rows)

    def to_payload(self) -> dict:
        return {
            "width": self.width,
            "rows": list(self.rows),
            "carriage_row": self.carriage_row,
            "carriage_col": self.carriage_col,
        }


class PageModel:
    """Mutable paper sheet: a grid of cells, each holding its strokes in order.

    Carriage column ranges 0..width inclusive; at ``width`` the carriage has
    hit the stop and visible characters overstrike the final column.
    """

    def __init__(self, width: int) -> None:
        if width < 1:
            raise ValueError("width must be positive")
        self.width = width
        self.cells: list[list[str]] = [self._fresh_row()]
        self.row = 0
        self.col = 0
        self.printed_chars = 0

    def _fresh_row(self) -> list[str]:
        return [""] * self.width

    def _ensure_row(self) -> None:
        while self.row >= len(self.cells):
            self.cells.append(self._fresh_row())

    def put_char(self, ch: str) -> tuple[int, int]:
        """Strike ``ch`` at the carriage; returns the cell actually printed."""
        self._ensure_row()
        col = self.col if self.col < self.width else self.width - 1
        self.cells[self.row][col] += ch
        self.printed_chars += 1
        if self.col < self.width:
            self.col += 1
        return self.row, col

    def carriage_return(self) -> None:
        self.col = 0

    def line_feed(self) -> None:
        self.row += 1
        self._ensure_row()

    def backspace(self) -> None:
        if self.col > 0:
            self.col -= 1

    def rendered_rows(self) -> tuple[str, ...]:
        out = []
        for cells in self.cells:
            out.append("".join(c[-1] if c else " " for c in cells).rstrip())
        return tuple(out)

    def snapshot(self) -> PaperPage:
        return PaperPage(
            width=self.width,
            rows=self.rendered_rows(),
            carriage_row=self.row,
            carriage_col=self.col,
            printed_chars=self.printed_chars,
        )


class ErikaSimulator:
    """Software stand-in for the typewriter on the device end of a transport.

    One byte-consumer (the bridge's print path, via the endpoint sink) and one
    keystroke-injector may run concurrently; internal state is serialized by a
    lock. UI callbacks fire outside the lock.
    """

    def __init__(
        self,
        codepage: CodePage,
        endpoint,
        clock: Clock | None = None,
        *,
        page_width: int = 60,
        buffer: DeviceBuffer = DeviceBuffer(),
        print_cps: float = 12.0,
        on_print: Optional[Callable[[str, int, int], None]] = None,
        on_motion: Optional[Callable[[int, int], None]] = None,
        on_bell: Optional[Callable[[], None]] = None,
    ) -> None:
        if print_cps <= 0:
            raise ValueError("print_cps must be positive")
        self.codepage = codepage
        self.endpoint = endpoint
        self.clock = clock or MonotonicClock()
        self.page = PageModel(page_width)
        self.buffer = buffer
        self.print_cps = print_cps
        self.on_print = on_print
        self.on_motion = on_motion
        self.on_bell = on_bell

        self._lock = threading.RLock()
        self._occupancy = 0
        self._drain_credit = 0.0
        self._last_drain = self.clock.now()
        self._xoff_asserted = False
        self._poll_scheduled = False

        # diagnostics
        self.overflow_count = 0
        self.ignored_bytes = 0
        self.bell_count = 0
        self.consumed_bytes = 0
        self.printed_from_wire = 0
        self.echoed_keys = 0
        self.xoff_emitted = 0
        self.xon_emitted = 0
        self.arrivals_while_xoff = 0
        self.max_xoff_overshoot = 0

        endpoint.set_sink(self.consume_print_byte)

    # -- buffer model -------------------------------------------------------

    def _update_drain(self, now: float) -> None:
        elapsed = now - self._last_drain
        self._last_drain = now
        if elapsed <= 0:
            return
        if self._occupancy == 0:
            self._drain_credit = 0.0
            return
        self._drain_credit += elapsed * self.print_cps
        drained = min(self._occupancy, int(self._drain_credit))
        self._occupancy -= drained
        self._drain_credit -= drained
        if self._occupancy == 0:
            self._drain_credit = 0.0

    def _flow_check(self, emit: list[int]) -> None:
        """Queue XOFF/XON bytes for emission after the lock is released."""
        if not self._xoff_asserted and self._occupancy >= self.buffer.high_water:
            self._xoff_asserted = True
            self.xoff_emitted += 1
            emit.append(self.codepage.control_byte(ControlKind.XOFF))
            self._schedule_poll()
        elif self._xoff_asserted and self._occupancy < self.buffer.low_water:
            self._xoff_asserted = False
            self.xon_emitted += 1
            emit.append(self.codepage.control_byte(ControlKind.XON))

    def _schedule_poll(self) -> None:
        if self._poll_scheduled:
            return
        self._poll_scheduled = True
        self.clock.call_later(1.0 / self.print_cps, self._drain_poll)

    def _drain_poll(self) -> None:
        emit: list[int] = []
        with self._lock:
            self._poll_scheduled = False
            self._update_drain(self.clock.now())
            self._flow_check(emit)
            if self._xoff_asserted:
                self._schedule_poll()
        self._emit(emit)

    def _emit(self, emit: list[int]) -> None:
        for b in emit:
            try:
                self.endpoint.write(bytes([b]))
            except Exception:
                pass  # bridge side gone; nothing left to throttle

    # -- print path ----------------------------------------------------------

    def consume_print_byte(self, b: int) -> None:
        emit: list[int] = []
        callbacks: list[tuple] = []
        with self._lock:
            self._update_drain(self.clock.now())
            self._occupancy += 1
            if self._xoff_asserted:
                self.arrivals_while_xoff += 1
                self.max_xoff_overshoot = max(
                    self.max_xoff_overshoot, self.arrivals_while_xoff
                )
            if self._occupancy > self.buffer.capacity:
                self.overflow_count += 1
                self._occupancy = self.buffer.capacity
            self.consumed_bytes += 1
            self._apply_byte(b, callbacks)
            self._flow_check(emit)
            if not self._xoff_asserted:
                self.arrivals_while_xoff = 0
        self._emit(emit)
        self._fire(callbacks)

    def _apply_byte(self, b: int, callbacks: list[tuple]) -> None:
        ev = decode_byte(self.codepage, b)
        if isinstance(ev, CharEvent):
            row, col = self.page.put_char(ev.char)
            self.printed_from_wire += 1
            callbacks.append(("print", ev.char, row, col))
        elif isinstance(ev, ControlEvent):
            if ev.kind is ControlKind.CARRIAGE_RETURN:
                self.page.carriage_return()
                callbacks.append(("motion", self.page.row, self.page.col))
            elif ev.kind is ControlKind.LINE_FEED:
                self.page.line_feed()
                callbacks.append(("motion", self.page.row, self.page.col))
            elif ev.kind is ControlKind.BACKSPACE:
                self.page.backspace()
                callbacks.append(("motion", self.page.row, self.page.col))
            elif ev.kind is ControlKind.BELL:
                self.bell_count += 1
                callbacks.append(("bell",))
            else:
                self.ignored_bytes += 1  # XON/XOFF on the print channel
        else:
            self.ignored_bytes += 1

    def _fire(self, callbacks: list[tuple]) -> None:
        for item in callbacks:
            if item[0] == "print" and self.on_print is not None:
                self.on_print(item[1], item[2], item[3])
            elif item[0] == "motion" and self.on_motion is not None:
                self.on_motion(item[1], item[2])
            elif item[0] == "bell" and self.on_bell is not None:
                self.on_bell()

    # -- keyboard -------------------------------------------------------------

    def inject_keystroke(self, key: str | ControlKind) -> int:
        """Type one key: emits exactly one byte upstream and echoes locally."""
        if isinstance(key, str):
            if len(key) != 1:
                raise UnencodableKey(f"expected a single character, got {key!r}")
            b = self.codepage.char_map.get(key)
            if b is None:
                raise UnencodableKey(f"{key!r} is not on this typewheel")
        else:
            b = self.codepage.control_map.get(key)
            if b is None:
                raise UnencodableKey(f"{key.value} not mapped in this codepage")
        callbacks: list[tuple] = []
        with self._lock:
            if isinstance(key, str):
                row, col = self.page.put_char(key)
                self.echoed_keys += 1
                callbacks.append(("print", key, row, col))
            elif key is ControlKind.CARRIAGE_RETURN:
                self.page.carriage_return()
                callbacks.append(("motion", self.page.row, self.page.col))
            elif key is ControlKind.LINE_FEED:
                self.page.line_feed()
                callbacks.append(("motion", self.page.row, self.page.col))
            elif key is ControlKind.BACKSPACE:
                self.page.backspace()
                callbacks.append(("motion", self.page.row, self.page.col))
            elif key is ControlKind.BELL:
                self.bell_count += 1
                callbacks.append(("bell",))
        self.endpoint.write(bytes([b]))
        self._fire(callbacks)
        return b

    def type_text(self, text: str) -> None:
        """Convenience: inject a string, mapping '\\n' to LineFeed."""
        for ch in text:
            if ch == "\n":
                self.inject_keystroke(ControlKind.LINE_FEED)
            else:
                self.inject_keystroke(ch)

    # -- observability ---------------------------------------------------------

    def snapshot(self) -> PaperPage:
        with self._lock:
            return self.page.snapshot()

    @property
    def occupancy(self) -> int:
        with self._lock:
            self._update_drain(self.clock.now())
            return self._occupancy

    @property
    def xoff_asserted(self) -> bool:
        with self._lock:
            return self._xoff_asserted
