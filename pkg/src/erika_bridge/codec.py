"""Transcoding between Unicode text and the typewriter's 8-bit byte set.

A CodePage is pure data loaded from a ``.cpt`` file: visible characters map
codepoint <-> byte, control commands (carriage return, line feed, backspace,
bell, XON, XOFF) map to their own bytes, and one substitution character
covers everything Unicode that the machine cannot strike. The shipped
``fixture-a.cpt`` is a spec fixture; a table transcribed from real hardware
drops in without code changes.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Union


class ControlKind(enum.Enum):
    CARRIAGE_RETURN = "CarriageReturn"
    LINE_FEED = "LineFeed"
    BACKSPACE = "Backspace"
    BELL = "Bell"
    XON = "Xon"
    XOFF = "Xoff"


# Every usable table must at least cover carriage motion and flow control.
MANDATORY_CONTROLS = frozenset(
    {
        ControlKind.CARRIAGE_RETURN,
        ControlKind.LINE_FEED,
        ControlKind.BACKSPACE,
        ControlKind.XON,
        ControlKind.XOFF,
    }
)

_CONTROL_BY_NAME = {kind.value: kind for kind in ControlKind}


@dataclass(frozen=True)
class CharEvent:
    """A decoded visible character (single codepoint)."""

    char: str


@dataclass(frozen=True)
class ControlEvent:
    kind: ControlKind


@dataclass(frozen=True)
class UnknownEvent:
    """A byte absent from the active table; carried through unchanged."""

    byte: int


DeviceEvent = Union[CharEvent, ControlEvent, UnknownEvent]


class CodecError(Exception):
    """Raised for malformed or inconsistent codepage documents."""

    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class CodePage:
    name: str
    char_map: dict[str, int]            # codepoint -> device byte
    control_map: dict[ControlKind, int]
    substitution: str
    byte_to_char: dict[int, str] = field(repr=False, default_factory=dict)
    byte_to_control: dict[int, ControlKind] = field(repr=False, default_factory=dict)

    @staticmethod
    def build(
        name: str,
        char_map: dict[str, int],
        control_map: dict[ControlKind, int],
        substitution: str,
    ) -> "CodePage":
        """Validate the invariants and precompute reverse lookup tables."""
        byte_to_char: dict[int, str] = {}
        for ch, b in char_map.items():
            _check_byte(b)
            if b in byte_to_char:
                raise CodecError(f"byte 0x{b:02X} assigned to multiple characters")
            byte_to_char[b] = ch
        byte_to_control: dict[int, ControlKind] = {}
        for kind, b in control_map.items():
            _check_byte(b)
            if b in byte_to_char:
                raise CodecError(f"byte 0x{b:02X} used for both a character and {kind.value}")
            if b in byte_to_control:
                raise CodecError(f"byte 0x{b:02X} assigned to multiple controls")
            byte_to_control[b] = kind
        missing = MANDATORY_CONTROLS - control_map.keys()
        if missing:
            names = ", ".join(sorted(k.value for k in missing))
            raise CodecError(f"missing mandatory control entries: {names}")
        if substitution not in char_map:
            raise CodecError(
                f"substitution character U+{ord(substitution):04X} is not in the character table"
            )
        return CodePage(
            name=name,
            char_map=dict(char_map),
            control_map=dict(control_map),
            substitution=substitution,
            byte_to_char=byte_to_char,
            byte_to_control=byte_to_control,
        )

    def control_byte(self, kind: ControlKind) -> int:
        return self.control_map[kind]


def _check_byte(b: int) -> None:
    if not 0 <= b <= 0xFF:
        raise CodecError(f"byte value {b} out of range 0..255")


def _parse_codepoint(token: str, line_no: int) -> str:
    if not token.upper().startswith("U+"):
        raise CodecError(f"expected U+XXXX codepoint, got {token!r}", line_no)
    try:
        value = int(token[2:], 16)
    except ValueError:
        raise CodecError(f"bad codepoint {token!r}", line_no) from None
    if not 0 <= value <= 0x10FFFF:
        raise CodecError(f"codepoint {token!r} out of Unicode range", line_no)
    return chr(value)


def _parse_byte(token: str, line_no: int) -> int:
    try:
        value = int(token, 16)
    except ValueError:
        raise CodecError(f"bad hex byte {token!r}", line_no) from None
    if not 0 <= value <= 0xFF:
        raise CodecError(f"byte {token!r} out of range 00..FF", line_no)
    return value


def parse_codepage(source: str, name: str = "codepage") -> CodePage:
    """Parse the ``.cpt`` text format.

    One entry per line: ``CHAR <hex-byte> <U+XXXX>``, ``CTRL <hex-byte>
    <ControlKind>`` or ``SUBST <U+XXXX>`` (exactly once). ``#`` starts a
    comment, blank lines are ignored.
    """
    char_map: dict[str, int] = {}
    control_map: dict[ControlKind, int] = {}
    claimed_bytes: dict[int, int] = {}  # byte -> line that claimed it
    substitution: str | None = None

    for line_no, raw in enumerate(source.splitlines(), start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        fields = text.split()
        keyword = fields[0].upper()
        if keyword == "NAME":
            if len(fields) < 2:
                raise CodecError("NAME needs a value", line_no)
            name = " ".join(fields[1:])
        elif keyword == "CHAR":
            if len(fields) != 3:
                raise CodecError("CHAR needs <hex-byte> <U+XXXX>", line_no)
            b = _parse_byte(fields[1], line_no)
            ch = _parse_codepoint(fields[2], line_no)
            if b in claimed_bytes:
                raise CodecError(
                    f"duplicate byte 0x{b:02X} (already used on line {claimed_bytes[b]})",
                    line_no,
                )
            if ch in char_map:
                raise CodecError(f"duplicate codepoint U+{ord(ch):04X}", line_no)
            claimed_bytes[b] = line_no
            char_map[ch] = b
        elif keyword == "CTRL":
            if len(fields) != 3:
                raise CodecError("CTRL needs <hex-byte> <ControlKind>", line_no)
            b = _parse_byte(fields[1], line_no)
            kind = _CONTROL_BY_NAME.get(fields[2])
            if kind is None:
                raise CodecError(f"unknown control kind {fields[2]!r}", line_no)
            if b in claimed_bytes:
                raise CodecError(
                    f"duplicate byte 0x{b:02X} (already used on line {claimed_bytes[b]})",
                    line_no,
                )
            if kind in control_map:
                raise CodecError(f"duplicate control entry {kind.value}", line_no)
            claimed_bytes[b] = line_no
            control_map[kind] = b
        elif keyword == "SUBST":
            if len(fields) != 2:
                raise CodecError("SUBST needs <U+XXXX>", line_no)
            if substitution is not None:
                raise CodecError("SUBST given more than once", line_no)
            substitution = _parse_codepoint(fields[1], line_no)
        else:
            raise CodecError(f"unknown directive {fields[0]!r}", line_no)

    if substitution is None:
        raise CodecError("missing SUBST entry")
    try:
        return CodePage.build(name, char_map, control_map, substitution)
    except CodecError:
        raise


def load_codepage(path: str | Path) -> CodePage:
    path = Path(path)
    return parse_codepage(path.read_text(encoding="utf-8"), name=path.stem)


@dataclass(frozen=True)
class Substitution:
    """One unmappable input codepoint, by position in the input string."""

    position: int
    char: str


@dataclass(frozen=True)
class EncodeResult:
    data: bytes
    substitutions: tuple[Substitution, ...]


def encode_text(cp: CodePage, text: str) -> EncodeResult:
    """Encode Unicode text to device bytes; total over all input.

    Each ``\\n`` becomes the CR byte followed by the LF byte (two bytes).
    Any codepoint outside the table encodes as the substitution byte and is
    reported with its position.
    """
    cr = cp.control_map[ControlKind.CARRIAGE_RETURN]
    lf = cp.control_map[ControlKind.LINE_FEED]
    subst_byte = cp.char_map[cp.substitution]
    out = bytearray()
    report: list[Substitution] = []
    for pos, ch in enumerate(text):
        if ch == "\n":
            out.append(cr)
            out.append(lf)
            continue
        b = cp.char_map.get(ch)
        if b is None:
            report.append(Substitution(pos, ch))
            out.append(subst_byte)
        else:
            out.append(b)
    return EncodeResult(bytes(out), tuple(report))


def decode_byte(cp: CodePage, b: int) -> DeviceEvent:
    """Decode one device byte: control wins, then character, else unknown."""
    kind = cp.byte_to_control.get(b)
    if kind is not None:
        return ControlEvent(kind)
    ch = cp.byte_to_char.get(b)
    if ch is not None:
        return CharEvent(ch)
    return UnknownEvent(b)


def decode_bytes(cp: CodePage, data: Iterable[int]) -> list[DeviceEvent]:
    return [decode_byte(cp, b) for b in data]
