"""Conversation state machine and text shaping.

The session assembles keystrokes into a prompt, decides when the prompt is
finished (double line feed or an idle timeout), hands it off exactly once,
and formats the answer for the carriage width. It is a deterministic,
single-threaded machine: every input (device event, answer, timer, print
completion) arrives as one call and yields a list of actions for the caller
to execute.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Union

from .codec import CharEvent, ControlEvent, ControlKind, DeviceEvent, UnknownEvent


# -- text shaping ------------------------------------------------------------


def finalize_prompt(buffer: str) -> str:
    """Trim and collapse whitespace; carriage corrections must not litter the
    prompt. Empty result means: nothing to dispatch."""
    return " ".join(buffer.split())


@dataclass(frozen=True)
class WrapConfig:
    width: int = 60
    # Kept for configuration compatibility; words longer than the width are
    # hard-split at the width regardless (a physical carriage forces it).
    hard_break_long_words: bool = True

    def __post_init__(self) -> None:
        if self.width < 10:
            raise ValueError("width must be at least 10 columns")


def wrap_text(text: str, cfg: WrapConfig) -> list[str]:
    """Greedy wrap to at most cfg.width columns.

    Breaks at whitespace where possible; a word longer than the width is
    hard-split into width-sized chunks, its tail joinable with following
    words. Whitespace runs collapse to single spaces.
    """
    width = cfg.width
    lines: list[str] = []
    current = ""
    for word in text.split():
        while len(word) > width:
            if current:
                lines.append(current)
                current = ""
            lines.append(word[:width])
            word = word[width:]
        if not word:
            continue
        if not current:
            current = word
        elif len(current) + 1 + len(word) <= width:
            current += " " + word
        else:
            lines.append(current)
            current = word
    if current:
        lines.append(current)
    return lines


# -- chat history --------------------------------------------------------------


class Role(enum.Enum):
    SYSTEM = "system"
    USER = "user"
    ASSISTANT = "assistant"


@dataclass(frozen=True)
class ChatTurn:
    role: Role
    text: str
    at: float = 0.0

    def __post_init__(self) -> None:
        if self.role is not Role.SYSTEM and not self.text:
            raise ValueError(f"{self.role.value} turn must carry text")


class BudgetError(Exception):
    """History cannot fit: budget is below system + newest turn."""


def budget_history(history: list[ChatTurn], budget: int) -> list[ChatTurn]:
    """Keep the system turn plus the longest fitting suffix of the rest.

    The newest turn is always retained; total text length never exceeds the
    budget. Raises BudgetError when even system + newest turn will not fit.
    """
    if not history:
        return []
    system: ChatTurn | None = None
    rest = history
    if history[0].role is Role.SYSTEM:
        system = history[0]
        rest = history[1:]
    if not rest:
        return [system] if system else []
    base = len(system.text) if system else 0
    newest = rest[-1]
    if base + len(newest.text) > budget:
        raise BudgetError(
            f"budget {budget} below system ({base}) + newest turn ({len(newest.text)})"
        )
    remaining = budget - base
    total = 0
    start = len(rest)
    for i in range(len(rest) - 1, -1, -1):
        if total + len(rest[i].text) > remaining:
            break
        total += len(rest[i].text)
        start = i
    kept = rest[start:]
    return ([system] if system else []) + kept


# -- state machine ---------------------------------------------------------------


@dataclass(frozen=True)
class Idle:
    pass


@dataclass(frozen=True)
class Composing:
    buffer: str = ""


@dataclass(frozen=True)
class AwaitingAnswer:
    prompt: str = ""


@dataclass(frozen=True)
class Printing:
    remaining: int = 0


SessionState = Union[Idle, Composing, AwaitingAnswer, Printing]


def state_name(state: SessionState) -> str:
    return type(state).__name__


# session inputs beyond device events
@dataclass(frozen=True)
class AnswerArrived:
    text: str
    ok: bool = True


@dataclass(frozen=True)
class PrintFinished:
    aborted: bool = False


@dataclass(frozen=True)
class TimerFired:
    kind: str  # "prompt" | "reset"
    gen: int


SessionEvent = Union[DeviceEvent, AnswerArrived, PrintFinished, TimerFired]


# actions for the caller
@dataclass(frozen=True)
class DispatchPrompt:
    prompt: str


@dataclass(frozen=True)
class PrintAnswer:
    text: str


@dataclass(frozen=True)
class AbortPrint:
    pass


@dataclass(frozen=True)
class ArmTimer:
    kind: str
    gen: int
    delay: float


Action = Union[DispatchPrompt, PrintAnswer, AbortPrint, ArmTimer]


@dataclass
class SessionConfig:
    double_lf_trigger: bool = True
    prompt_idle_timeout: float = 20.0   # 0 disables
    reset_idle_timeout: float = 120.0   # 0 disables
    max_prompt_chars: int = 2000
    system_prompt: str = ""


class Session:
    """The FSM proper. Total over every event in every state."""

    def __init__(self, config: SessionConfig | None = None) -> None:
        self.config = config or SessionConfig()
        self.state: SessionState = Idle()
        self.history: list[ChatTurn] = []
        if self.config.system_prompt:
            self.history.append(ChatTurn(Role.SYSTEM, self.config.system_prompt))
        self.dropped_input = 0
        self.lf_run = 0
        self.compose_gen = 0
        self.idle_gen = 0

    # -- event entry point ----------------------------------------------------

    def handle(self, event: SessionEvent) -> list[Action]:
        if isinstance(event, (CharEvent, ControlEvent, UnknownEvent)):
            return self._on_device(event)
        if isinstance(event, AnswerArrived):
            return self._on_answer(event)
        if isinstance(event, PrintFinished):
            return self._on_print_finished(event)
        if isinstance(event, TimerFired):
            return self._on_timer(event)
        return []

    # -- device events -----------------------------------------------------------

    def _on_device(self, ev: DeviceEvent) -> list[Action]:
        if isinstance(ev, UnknownEvent):
            return []  # unknown bytes never change state
        state = self.state
        if isinstance(state, Idle):
            if isinstance(ev, CharEvent):
                self.state = Composing(ev.char)
                self.lf_run = 0
                return self._composing_activity()
            return []
        if isinstance(state, Composing):
            return self._compose(state, ev)
        # AwaitingAnswer or Printing: keystrokes strike paper but are not queued
        if isinstance(state, Printing) and (
            isinstance(ev, ControlEvent) and ev.kind is ControlKind.BELL
        ):
            return [AbortPrint()]
        self.dropped_input += 1
        return []

    def _compose(self, state: Composing, ev: DeviceEvent) -> list[Action]:
        if isinstance(ev, CharEvent):
            self.lf_run = 0
            buffer = state.buffer
            if len(buffer) < self.config.max_prompt_chars:
                buffer += ev.char
            else:
                self.dropped_input += 1
            self.state = Composing(buffer)
            return self._composing_activity()
        assert isinstance(ev, ControlEvent)
        kind = ev.kind
        if kind is ControlKind.BACKSPACE:
            self.lf_run = 0
            self.state = Composing(state.buffer[:-1])
            return self._composing_activity()
        if kind is ControlKind.LINE_FEED:
            if self.config.double_lf_trigger:
                self.lf_run += 1
                if self.lf_run >= 2:
                    return self._finish_prompt(state.buffer)
            self.state = Composing(state.buffer + "\n")
            return self._composing_activity()
        if kind is ControlKind.CARRIAGE_RETURN:
            # carriage motion, not content; does not break an LF pair
            return self._composing_activity()
        return self._composing_activity()  # Bell etc.: keystroke activity only

    def _composing_activity(self) -> list[Action]:
        self.compose_gen += 1
        if self.config.prompt_idle_timeout > 0:
            return [ArmTimer("prompt", self.compose_gen, self.config.prompt_idle_timeout)]
        return []

    def _finish_prompt(self, buffer: str) -> list[Action]:
        self.lf_run = 0
        self.compose_gen += 1
        prompt = finalize_prompt(buffer)
        if not prompt:
            return self._enter_idle()
        self.state = AwaitingAnswer(prompt)
        self.history.append(ChatTurn(Role.USER, prompt))
        return [DispatchPrompt(prompt)]

    # -- answers and printing ------------------------------------------------------

    def _on_answer(self, event: AnswerArrived) -> list[Action]:
        if not isinstance(self.state, AwaitingAnswer):
            return []  # stale or duplicate completion
        if event.ok:
            if event.text:
                self.history.append(ChatTurn(Role.ASSISTANT, event.text))
        else:
            # failed exchange: the dangling user turn must not haunt history
            if self.history and self.history[-1].role is Role.USER:
                self.history.pop()
        self.state = Printing(remaining=len(event.text))
        return [PrintAnswer(event.text)]

    def _on_print_finished(self, event: PrintFinished) -> list[Action]:
        if not isinstance(self.state, Printing):
            return []
        return self._enter_idle()

    def _enter_idle(self) -> list[Action]:
        self.state = Idle()
        self.idle_gen += 1
        if self.config.reset_idle_timeout > 0:
            return [ArmTimer("reset", self.idle_gen, self.config.reset_idle_timeout)]
        return []

    # -- timers ---------------------------------------------------------------------

    def _on_timer(self, event: TimerFired) -> list[Action]:
        if event.kind == "prompt":
            if (
                isinstance(self.state, Composing)
                and self.config.prompt_idle_timeout > 0
                and event.gen == self.compose_gen
            ):
                return self._finish_prompt(self.state.buffer)
            return []
        if event.kind == "reset":
            if isinstance(self.state, Idle) and event.gen == self.idle_gen:
                self.reset_history()
            return []
        return []

    def reset_history(self) -> None:
        """Fresh visitor: drop all turns except the system prompt."""
        self.history = [t for t in self.history if t.role is Role.SYSTEM]

    # -- introspection -----------------------------------------------------------------

    @property
    def current_prompt(self) -> str | None:
        if isinstance(self.state, AwaitingAnswer):
            return self.state.prompt
        return None

    def note_print_size(self, nbytes: int) -> None:
        if isinstance(self.state, Printing):
            self.state = replace(self.state, remaining=nbytes)
