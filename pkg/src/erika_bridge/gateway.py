"""The bridge engine: codec, link, session, backend, simulator and archive
wired around one ordered event queue.

Device events, LLM completions, print completions and timer expirations all
become queue items; the consumer is the sole mutator of session state, which
makes the exactly-once accounting (dispatched = printed = archived) checkable.
The engine runs in two modes with identical logic: co-operative single-thread
(tests, virtual clock) and threaded (production, behind the FastAPI service).
"""

from __future__ import annotations

import logging
import queue
import threading
import uuid
from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path
from typing import Callable, Optional, Union

from .archive import ArchiveError, RuleSet, TranscriptStore, PromptRecord, categorize, load_rules
from .clock import Clock, MonotonicClock, VirtualClock
from .codec import (
    CharEvent,
    CodecError,
    CodePage,
    ControlEvent,
    ControlKind,
    DeviceEvent,
    decode_byte,
    encode_text,
    load_codepage,
)
from .link import (
    FlowMonitor,
    InMemoryDescriptor,
    PacingPolicy,
    SendReport,
    SerialDescriptor,
    drain_events,
    open_in_memory,
    open_transport,
    read_events,
    send_paced,
)
from .llm import BackendConfig, BackendError, Completion, DEFAULT_SYSTEM_PROMPT, make_backend
from .session import (
    AnswerArrived,
    ArmTimer,
    AbortPrint,
    BudgetError,
    DispatchPrompt,
    Idle,
    PrintAnswer,
    PrintFinished,
    Session,
    SessionConfig,
    TimerFired,
    WrapConfig,
    budget_history,
    state_name,
    wrap_text,
)
from .simulator import ErikaSimulator, PageModel, UnencodableKey

log = logging.getLogger(__name__)


class ConfigError(Exception):
    pass


class DeviceOwned(Exception):
    """UI tried to type while real hardware owns the keyboard."""


def default_codepage_path() -> Path:
    return Path(str(resources.files("erika_bridge").joinpath("data/fixture-a.cpt")))


def default_rules_path() -> Path:
    return Path(str(resources.files("erika_bridge").joinpath("data/categories.rules")))


@dataclass(frozen=True)
class GatewayConfig:
    transport: str = "sim"                 # "sim" | "serial:<device>"
    baud: int = 1200
    codepage: str = ""                     # empty -> packaged fixture table
    width: int = 60
    cps: float = 10.0
    burst: int = 8
    double_lf_trigger: bool = True
    prompt_idle_timeout: float = 20.0      # 0 disables
    reset_idle_timeout: float = 120.0      # 0 disables
    history_budget: int = 4000
    backend: str = "mock"                  # "mock" | "openai"
    base_url: str = ""
    model: str = ""
    temperature: float = 0.7
    max_answer_chars: int = 600
    system_prompt: str = DEFAULT_SYSTEM_PROMPT
    timeout: float = 30.0
    api_key_env: str = "ERIKA_API_KEY"
    transcript: str = "transcript.jsonl"
    rules: str = ""                        # empty -> packaged rule file
    listen: str = "127.0.0.1:8765"
    sim_print_cps: float = 12.0
    max_print_pause: float = 120.0
    apology_line: str = "Entschuldigung, ich kann gerade nicht antworten."
    archive_apology_line: str = "Entschuldigung, das Protokoll konnte nicht gespeichert werden."

    # -- derived views ------------------------------------------------------

    @property
    def sim_mode(self) -> bool:
        return self.transport == "sim"

    def transport_descriptor(self) -> Union[InMemoryDescriptor, SerialDescriptor]:
        if self.transport == "sim":
            return InMemoryDescriptor()
        if self.transport.startswith("serial:"):
            device = self.transport.split(":", 1)[1]
            if not device:
                raise ConfigError("serial transport needs a device path")
            return SerialDescriptor(device, self.baud)
        raise ConfigError(f"unknown transport {self.transport!r} (use sim or serial:<device>)")

    def codepage_path(self) -> Path:
        return Path(self.codepage) if self.codepage else default_codepage_path()

    def rules_path(self) -> Path:
        return Path(self.rules) if self.rules else default_rules_path()

    def listen_address(self) -> tuple[str, int]:
        host, _, port = self.listen.rpartition(":")
        if not host or not port.isdigit():
            raise ConfigError(f"listen must be host:port, got {self.listen!r}")
        return host, int(port)

    def backend_config(self) -> BackendConfig:
        if self.backend == "mock":
            return BackendConfig(
                kind="mock",
                model=self.model or "mock",
                max_answer_chars=self.max_answer_chars,
                system_prompt=self.system_prompt,
                temperature=self.temperature,
                timeout=self.timeout,
            )
        if self.backend == "openai":
            try:
                return BackendConfig(
                    kind="openai-compatible",
                    base_url=self.base_url,
                    model=self.model,
                    api_key_env=self.api_key_env,
                    temperature=self.temperature,
                    max_answer_chars=self.max_answer_chars,
                    system_prompt=self.system_prompt,
                    timeout=self.timeout,
                )
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        raise ConfigError(f"unknown backend {self.backend!r} (use mock or openai)")

    def validate(self) -> "GatewayConfig":
        """Fail fast: every referenced file must exist and parse."""
        if self.width < 10:
            raise ConfigError("width must be at least 10 columns")
        if self.cps <= 0 or self.sim_print_cps <= 0:
            raise ConfigError("character rates must be positive")
        if self.burst < 0:
            raise ConfigError("burst must be non-negative")
        self.transport_descriptor()
        self.listen_address()
        self.backend_config()
        try:
            load_codepage(self.codepage_path())
        except OSError as exc:
            raise ConfigError(f"cannot read codepage: {exc}") from None
        except CodecError as exc:
            raise ConfigError(f"bad codepage {self.codepage_path()}: {exc}") from None
        try:
            load_rules(self.rules_path())
        except OSError as exc:
            raise ConfigError(f"cannot read rule file: {exc}") from None
        except Exception as exc:
            raise ConfigError(f"bad rule file {self.rules_path()}: {exc}") from None
        parent = Path(self.transcript).expanduser().resolve().parent
        if not parent.is_dir():
            raise ConfigError(f"transcript directory does not exist: {parent}")
        return self


_BOOL_WORDS = {"true": True, "yes": True, "on": True, "1": True,
               "false": False, "no": False, "off": False, "0": False}


def _coerce(name: str, kind: type, raw: str):
    raw = raw.strip()
    if kind is bool:
        value = _BOOL_WORDS.get(raw.lower())
        if value is None:
            raise ConfigError(f"{name}: expected true/false, got {raw!r}")
        return value
    try:
        return kind(raw) if kind in (int, float) else raw
    except ValueError:
        raise ConfigError(f"{name}: expected {kind.__name__}, got {raw!r}") from None


def parse_config_text(source: str) -> dict:
    """``key = value`` lines; '#' comments; keys match GatewayConfig fields."""
    defaults = GatewayConfig()
    types = {f.name: type(getattr(defaults, f.name)) for f in fields(GatewayConfig)}
    values: dict = {}
    for line_no, raw in enumerate(source.splitlines(), start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"line {line_no}: expected key = value")
        key, _, value = text.partition("=")
        key = key.strip()
        if key not in types:
            raise ConfigError(f"line {line_no}: unknown setting {key!r}")
        values[key] = _coerce(key, types[key], value)
    return values


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> GatewayConfig:
    """Build a validated config. Precedence: overrides (CLI) > file > defaults."""
    values: dict = {}
    if path is not None:
        try:
            source = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from None
        values.update(parse_config_text(source))
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
    try:
        cfg = GatewayConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return cfg.validate()


# -- queue items ---------------------------------------------------------------


@dataclass(frozen=True)
class _DeviceMsg:
    ev: DeviceEvent


@dataclass(frozen=True)
class _AnswerMsg:
    gen: int
    completion: Optional[Completion] = None
    error_kind: str = ""
    error_text: str = ""


@dataclass(frozen=True)
class _PrintDone:
    gen: int
    report: SendReport


@dataclass(frozen=True)
class _TimerMsg:
    kind: str
    gen: int


@dataclass
class _Exchange:
    gen: int
    prompt: str
    started: float


class Bridge:
    """One running gateway instance."""

    def __init__(
        self,
        cfg: GatewayConfig,
        *,
        clock: Clock | None = None,
        backend=None,
    ) -> None:
        self.cfg = cfg
        self.clock = clock or MonotonicClock()
        self.codepage: CodePage = load_codepage(cfg.codepage_path())
        self.rules: RuleSet = load_rules(cfg.rules_path())
        self.store = TranscriptStore(cfg.transcript)
        self.flow = FlowMonitor()
        self.pacing = PacingPolicy(cfg.cps, cfg.burst)
        self.wrap_cfg = WrapConfig(cfg.width)
        self.session = Session(
            SessionConfig(
                double_lf_trigger=cfg.double_lf_trigger,
                prompt_idle_timeout=cfg.prompt_idle_timeout,
                reset_idle_timeout=cfg.reset_idle_timeout,
                system_prompt=cfg.system_prompt,
            )
        )
        self.backend = backend or make_backend(cfg.backend_config())
        self.sim: ErikaSimulator | None = None
        self._shadow: PageModel | None = None
        self._shadow_lock = threading.Lock()

        if cfg.sim_mode:
            self.port, device_end = open_in_memory("bridge")
            self.sim = ErikaSimulator(
                self.codepage,
                device_end,
                self.clock,
                page_width=cfg.width,
                print_cps=cfg.sim_print_cps,
                on_print=self._on_sim_print,
                on_motion=self._on_sim_motion,
                on_bell=self._on_sim_bell,
            )
        else:
            self.port = open_transport(cfg.transport_descriptor())
            self._shadow = PageModel(cfg.width)

        self.queue: "queue.Queue" = queue.Queue()
        self.session_id = uuid.uuid4().hex[:12]

        # exactly-once accounting
        self.dispatched = 0
        self.printed = 0
        self.archived = 0
        self.archive_failures = 0
        self.apologies = 0
        self.substituted_chars = 0

        self._exchange: _Exchange | None = None
        self._exchange_gen = 0
        self._print_gen = 0
        self._print_abort = threading.Event()
        self._last_state = state_name(self.session.state)

        self._listeners: list[Callable[[dict], None]] = []
        self._hub_lock = threading.Lock()

        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []
        self._threaded = False

    # ------------------------------------------------------------------ wiring

    def _on_sim_print(self, ch: str, row: int, col: int) -> None:
        self._broadcast({"type": "print", "ch": ch, "row": row, "col": col})

    def _on_sim_motion(self, row: int, col: int) -> None:
        self._broadcast({"type": "carriage", "row": row, "col": col})

    def _on_sim_bell(self) -> None:
        self._broadcast({"type": "bell"})

    def _shadow_apply_event(self, ev: DeviceEvent) -> None:
        """Mirror what the real machine does on paper (spectator screen)."""
        shadow = self._shadow
        if shadow is None:
            return
        msg: dict | None = None
        with self._shadow_lock:
            if isinstance(ev, CharEvent):
                row, col = shadow.put_char(ev.char)
                msg = {"type": "print", "ch": ev.char, "row": row, "col": col}
            elif isinstance(ev, ControlEvent):
                if ev.kind is ControlKind.CARRIAGE_RETURN:
                    shadow.carriage_return()
                elif ev.kind is ControlKind.LINE_FEED:
                    shadow.line_feed()
                elif ev.kind is ControlKind.BACKSPACE:
                    shadow.backspace()
                elif ev.kind is ControlKind.BELL:
                    msg = {"type": "bell"}
                if msg is None:
                    msg = {"type": "carriage", "row": shadow.row, "col": shadow.col}
        if msg is not None:
            self._broadcast(msg)

    def _shadow_apply_byte(self, b: int) -> None:
        self._shadow_apply_event(decode_byte(self.codepage, b))

    # ------------------------------------------------------------- event intake

    def _ingest_event(self, ev: DeviceEvent) -> None:
        if isinstance(ev, ControlEvent) and ev.kind in (ControlKind.XON, ControlKind.XOFF):
            return  # link-level; FlowMonitor already updated by the decoder
        if self._shadow is not None:
            self._shadow_apply_event(ev)  # mechanical local echo, mirrored
        self.queue.put(_DeviceMsg(ev))

    def _drain_inbound(self) -> None:
        for ev in drain_events(self.port, self.codepage, self.flow):
            self._ingest_event(ev)

    def _co_op_poll(self) -> None:
        """In-print hook for single-threaded mode: keep consuming queued
        events (a Bell must be able to abort the ongoing print), exactly as
        the consumer thread would do concurrently in production."""
        self._drain_inbound()
        while True:
            try:
                msg = self.queue.get_nowait()
            except queue.Empty:
                return
            self._handle(msg)

    def inject_key(self, key: str | ControlKind) -> None:
        """UI keystroke; only legal when the simulator owns the keyboard."""
        if self.sim is None:
            raise DeviceOwned("the typewriter owns the keyboard")
        self.sim.inject_keystroke(key)

    # ------------------------------------------------------------------ UI hub

    def add_listener(self, fn: Callable[[dict], None]) -> list[dict]:
        """Register a UI listener; returns snapshot-first initial messages."""
        with self._hub_lock:
            initial = [
                {"type": "snapshot", "page": self.page_snapshot()},
                {"type": "state", "value": self._last_state},
            ]
            self._listeners.append(fn)
            return initial

    def remove_listener(self, fn: Callable[[dict], None]) -> None:
        with self._hub_lock:
            try:
                self._listeners.remove(fn)
            except ValueError:
                pass

    def _broadcast(self, msg: dict) -> None:
        with self._hub_lock:
            listeners = list(self._listeners)
        for fn in listeners:
            try:
                fn(msg)
            except Exception:
                log.exception("UI listener failed; removing it")
                self.remove_listener(fn)

    def page_snapshot(self) -> dict:
        if self.sim is not None:
            return self.sim.snapshot().to_payload()
        assert self._shadow is not None
        with self._shadow_lock:
            return self._shadow.snapshot().to_payload()

    def diagnostics(self) -> dict:
        return {
            "state": self._last_state,
            "mode": "sim" if self.sim is not None else "device",
            "flow": self.flow.state,
            "dispatched": self.dispatched,
            "printed": self.printed,
            "archived": self.archived,
            "archive_failures": self.archive_failures,
            "apologies": self.apologies,
            "dropped_input": self.session.dropped_input,
            "substituted_chars": self.substituted_chars,
            "session_id": self.session_id,
            "model": getattr(getattr(self.backend, "cfg", None), "model", ""),
        }

    # ---------------------------------------------------------------- processing

    def _submit(self, task: Callable[[], None]) -> None:
        if self._threaded:
            worker = threading.Thread(target=task, daemon=True)
            worker.start()
        else:
            task()

    def _handle(self, msg) -> None:
        if isinstance(msg, _DeviceMsg):
            actions = self.session.handle(msg.ev)
        elif isinstance(msg, _TimerMsg):
            actions = self.session.handle(TimerFired(msg.kind, msg.gen))
        elif isinstance(msg, _AnswerMsg):
            actions = self._on_answer(msg)
        elif isinstance(msg, _PrintDone):
            actions = self._on_print_done(msg)
        else:
            return
        for action in actions:
            self._execute(action)
        self._note_state()

    def _note_state(self) -> None:
        name = state_name(self.session.state)
        if name != self._last_state:
            self._last_state = name
            self._broadcast({"type": "state", "value": name})

    def _execute(self, action) -> None:
        if isinstance(action, DispatchPrompt):
            self._dispatch(action.prompt)
        elif isinstance(action, PrintAnswer):
            self._start_print(action.text)
        elif isinstance(action, AbortPrint):
            self._print_abort.set()
        elif isinstance(action, ArmTimer):
            kind, gen = action.kind, action.gen
            self.clock.call_later(action.delay, lambda: self.queue.put(_TimerMsg(kind, gen)))

    # -- the LLM leg -------------------------------------------------------------

    def _dispatch(self, prompt: str) -> None:
        self.dispatched += 1
        self._exchange_gen += 1
        gen = self._exchange_gen
        self._exchange = _Exchange(gen=gen, prompt=prompt, started=self.clock.now())
        history = list(self.session.history)
        budget = self.cfg.history_budget

        def task() -> None:
            try:
                turns = budget_history(history, budget)
                completion = self.backend.complete(turns)
                self.queue.put(_AnswerMsg(gen, completion=completion))
            except BudgetError as exc:
                self.queue.put(_AnswerMsg(gen, error_kind="budget", error_text=str(exc)))
            except BackendError as exc:
                self.queue.put(_AnswerMsg(gen, error_kind=exc.kind, error_text=str(exc)))
            except Exception as exc:  # crash containment: never kill the loop
                log.exception("backend call failed unexpectedly")
                self.queue.put(_AnswerMsg(gen, error_kind="internal", error_text=repr(exc)))

        self._submit(task)

    def _on_answer(self, msg: _AnswerMsg) -> list:
        exchange = self._exchange
        if exchange is None or msg.gen != exchange.gen:
            return []  # stale completion
        self._exchange = None
        latency_ms = int((self.clock.now() - exchange.started) * 1000)
        if msg.completion is not None:
            answer = msg.completion.text
            finish = msg.completion.finish
            model = msg.completion.model
            latency_ms = msg.completion.latency_ms or latency_ms
            ok = True
            print_text = answer
        else:
            log.warning("exchange failed (%s): %s", msg.error_kind, msg.error_text)
            answer = ""
            finish = f"error:{msg.error_kind}"
            model = getattr(getattr(self.backend, "cfg", None), "model", "") or self.cfg.model
            ok = False
            print_text = self.cfg.apology_line
            self.apologies += 1

        record = PromptRecord(
            session_id=self.session_id,
            at=_utc_now_iso(),
            prompt=exchange.prompt,
            answer=answer,
            model=model or "unknown",
            category=categorize(exchange.prompt, self.rules),
            latency_ms=max(0, latency_ms),
            finish=finish,
        )
        try:
            self.store.append(record)
            self.archived += 1
        except ArchiveError as exc:
            self.archive_failures += 1
            log.error("archive append failed: %s", exc)
            print_text = print_text + "\n" + self.cfg.archive_apology_line
        return self.session.handle(AnswerArrived(print_text, ok=ok))

    # -- the print leg --------------------------------------------------------------

    def _start_print(self, text: str) -> None:
        lines = wrap_text(text, self.wrap_cfg)
        formatted = "\n" + "\n".join(lines) + "\n\n"
        result = encode_text(self.codepage, formatted)
        self.substituted_chars += len(result.substitutions)
        self.session.note_print_size(len(result.data))
        self._print_gen += 1
        gen = self._print_gen
        self._print_abort.clear()
        data = result.data
        poll = None if self._threaded else self._co_op_poll
        on_byte = self._shadow_apply_byte if self._shadow is not None else None

        def task() -> None:
            report = send_paced(
                self.port,
                data,
                self.pacing,
                self.flow,
                self.clock,
                poll=poll,
                should_abort=self._print_abort.is_set,
                max_pause=self.cfg.max_print_pause,
                on_byte=on_byte,
            )
            self.queue.put(_PrintDone(gen, report))

        self._submit(task)

    def _on_print_done(self, msg: _PrintDone) -> list:
        if msg.gen != self._print_gen:
            return []
        self.printed += 1
        report = msg.report
        if not report.completed:
            log.warning(
                "print ended early: sent=%d aborted=%s paused=%s closed=%s",
                report.bytes_sent, report.aborted, report.paused, report.closed,
            )
        return self.session.handle(PrintFinished(aborted=report.aborted))

    # ------------------------------------------------------------ co-op driving

    def pump(self) -> int:
        """Single-threaded driver: drain inbound bytes, process queued events."""
        handled = 0
        while True:
            self._drain_inbound()
            try:
                msg = self.queue.get_nowait()
            except queue.Empty:
                return handled
            self._handle(msg)
            handled += 1

    def run_until(self, predicate: Callable[[], bool], timeout: float, tick: float = 0.05) -> bool:
        """Advance a virtual clock in small steps until the predicate holds."""
        if not isinstance(self.clock, VirtualClock):
            raise RuntimeError("run_until needs a VirtualClock")
        deadline = self.clock.now() + timeout
        self.pump()
        while not predicate():
            if self.clock.now() >= deadline:
                return False
            self.clock.advance(tick)
            self.pump()
        return True

    def is_idle(self) -> bool:
        return isinstance(self.session.state, Idle) and self.queue.empty()

    def type_on_device(self, text: str, *, end_prompt: bool = True) -> None:
        """Test/demo helper: type text on the simulated machine, then the
        double-LF prompt trigger."""
        if self.sim is None:
            raise DeviceOwned("no simulator attached")
        self.sim.type_text(text)
        if end_prompt:
            self.sim.inject_keystroke(ControlKind.LINE_FEED)
            self.sim.inject_keystroke(ControlKind.LINE_FEED)

    # ------------------------------------------------------------- threaded mode

    def start(self) -> None:
        """Spawn the reader and consumer threads (production mode)."""
        if self._threaded:
            return
        self._threaded = True
        self._stop.clear()
        reader = threading.Thread(target=self._read_loop, name="erika-reader", daemon=True)
        consumer = threading.Thread(target=self._consume_loop, name="erika-consumer", daemon=True)
        self._threads = [reader, consumer]
        reader.start()
        consumer.start()
        log.info("bridge started (session %s, %s mode)", self.session_id,
                 "sim" if self.sim is not None else "device")

    def stop(self) -> None:
        if not self._threaded:
            return
        self._stop.set()
        try:
            self.port.close()
        except Exception:
            pass
        for thread in self._threads:
            thread.join(timeout=2.0)
        self._threads = []
        self._threaded = False
        log.info("bridge stopped; transcript flushed per exchange")

    def _read_loop(self) -> None:
        try:
            for ev in read_events(self.port, self.codepage, self.flow, stop=self._stop.is_set):
                self._ingest_event(ev)
        except Exception:
            log.exception("reader thread failed")

    def _consume_loop(self) -> None:
        while not self._stop.is_set():
            try:
                msg = self.queue.get(timeout=0.1)
            except queue.Empty:
                continue
            try:
                self._handle(msg)
            except Exception:
                log.exception("event handling failed; continuing")


def _utc_now_iso() -> str:
    from datetime import datetime, timezone

    return datetime.now(timezone.utc).isoformat(timespec="seconds")
