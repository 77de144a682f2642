import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from erika_bridge.codec import CharEvent, ControlEvent, ControlKind, UnknownEvent
from erika_bridge.session import (
    AbortPrint,
    AnswerArrived,
    ArmTimer,
    AwaitingAnswer,
    BudgetError,
    ChatTurn,
    Composing,
    DispatchPrompt,
    Idle,
    PrintAnswer,
    PrintFinished,
    Printing,
    Role,
    Session,
    SessionConfig,
    TimerFired,
    WrapConfig,
    budget_history,
    finalize_prompt,
    wrap_text,
)

LF = ControlEvent(ControlKind.LINE_FEED)
CR = ControlEvent(ControlKind.CARRIAGE_RETURN)
BS = ControlEvent(ControlKind.BACKSPACE)
BELL = ControlEvent(ControlKind.BELL)


def fresh(**kwargs):
    defaults = dict(prompt_idle_timeout=0.0, reset_idle_timeout=0.0)
    defaults.update(kwargs)
    return Session(SessionConfig(**defaults))


def dispatches(actions):
    return [a for a in actions if isinstance(a, DispatchPrompt)]


class TestFinalizePrompt:
    def test_trims_paper_fixture(self):
        assert finalize_prompt("  Wer bist du?  ") == "Wer bist du?"

    def test_collapses_internal_whitespace(self):
        assert finalize_prompt("a \n b") == "a b"

    def test_all_whitespace_is_empty(self):
        assert finalize_prompt("   ") == ""


class TestWrap:
    def test_empty(self):
        assert wrap_text("", WrapConfig(60)) == []

    def test_break_at_whitespace(self):
        assert wrap_text("hello world", WrapConfig(10)) == ["hello", "world"]

    def test_hard_split_exact(self):
        assert wrap_text("abcdefgh", WrapConfig(10)) == ["abcdefgh"]
        cfg = WrapConfig(10)
        assert wrap_text("abcdefghijklmnopqrstuvwx", cfg) == ["abcdefghij", "klmnopqrst", "uvwx"]

    def test_minimum_width_enforced(self):
        with pytest.raises(ValueError):
            WrapConfig(9)

    def test_long_word_tail_joinable(self):
        lines = wrap_text("abcdefghijklmn and more", WrapConfig(10))
        assert lines == ["abcdefghij", "klmn and", "more"]

    @staticmethod
    def oracle_wrap(text, width):
        """Independent greedy re-implementation, character-walking style."""
        words = []
        for raw in text.split():
            while len(raw) > width:
                words.append(raw[:width])
                raw = raw[width:]
            if raw:
                words.append(raw)
        lines = []
        line = ""
        for word in words:
            candidate = word if not line else line + " " + word
            if len(candidate) <= width:
                line = candidate
            else:
                lines.append(line)
                line = word
        if line:
            lines.append(line)
        return lines

    def test_against_oracle_random(self):
        rng = random.Random(77)
        alphabet = "ab cde fgh  ijklmnopqrstuvwxyz   "
        for _ in range(500):
            width = rng.randint(10, 40)
            text = "".join(rng.choices(alphabet, k=rng.randint(0, 200)))
            assert wrap_text(text, WrapConfig(width)) == self.oracle_wrap(text, width)

    @given(st.text(alphabet="abc xyz\n\t", max_size=300), st.integers(10, 50))
    @settings(max_examples=300)
    def test_soundness_properties(self, text, width):
        lines = wrap_text(text, WrapConfig(width))
        assert all(len(line) <= width for line in lines)
        # character conservation modulo whitespace
        assert "".join(text.split()) == "".join(" ".join(lines).split())


class TestBudget:
    @staticmethod
    def oracle(history, budget):
        """Brute force: try every non-empty suffix of the non-system turns
        (newest turn always retained), keep the longest one that fits."""
        system = history[0] if history and history[0].role is Role.SYSTEM else None
        rest = history[1:] if system else list(history)
        base = len(system.text) if system else 0
        best = None
        for start in range(len(rest)):
            suffix = rest[start:]
            if base + sum(len(t.text) for t in suffix) <= budget:
                best = suffix
                break  # first (longest) fitting suffix
        if best is None:
            return None
        return ([system] if system else []) + best

    def test_spec_example_derived(self):
        history = [ChatTurn(Role.SYSTEM, "s" * 20)] + [
            ChatTurn(Role.USER if i % 2 == 0 else Role.ASSISTANT, str(i) * 100)
            for i in range(5)
        ]
        expected = self.oracle(history, 240)
        assert expected is not None
        assert len(expected) == 3  # system + newest 2
        assert budget_history(history, 240) == expected

    def test_budget_covers_everything(self):
        history = [
            ChatTurn(Role.SYSTEM, "sys"),
            ChatTurn(Role.USER, "hallo"),
            ChatTurn(Role.ASSISTANT, "hi"),
        ]
        assert budget_history(history, 10_000) == history

    def test_budget_too_small(self):
        history = [ChatTurn(Role.SYSTEM, "s" * 50), ChatTurn(Role.USER, "u" * 100)]
        with pytest.raises(BudgetError):
            budget_history(history, 120)

    def test_random_against_oracle(self):
        rng = random.Random(123)
        for _ in range(300):
            history = []
            if rng.random() < 0.7:
                history.append(ChatTurn(Role.SYSTEM, "s" * rng.randint(0, 30)))
            for i in range(rng.randint(1, 8)):
                role = Role.USER if i % 2 == 0 else Role.ASSISTANT
                history.append(ChatTurn(role, "x" * rng.randint(1, 60)))
            budget = rng.randint(1, 300)
            expected = self.oracle(history, budget)
            if expected is None:
                with pytest.raises(BudgetError):
                    budget_history(history, budget)
            else:
                got = budget_history(history, budget)
                assert got == expected
                total = sum(len(t.text) for t in got)
                assert total <= budget
                assert got[-1] == history[-1]  # newest always kept

    def test_monotonic_subsequence_property(self):
        history = [ChatTurn(Role.USER, "a" * 10), ChatTurn(Role.ASSISTANT, "b" * 10),
                   ChatTurn(Role.USER, "c" * 10)]
        got = budget_history(history, 25)
        indices = [history.index(t) for t in got]
        assert indices == sorted(indices)


class TestTransitions:
    def test_idle_char_starts_composing(self):
        s = fresh()
        actions = s.handle(CharEvent("W"))
        assert s.state == Composing("W")
        assert dispatches(actions) == []

    def test_double_lf_dispatches(self):
        s = fresh()
        for ch in "Hallo":
            s.handle(CharEvent(ch))
        s.handle(LF)
        actions = s.handle(LF)
        assert s.state == AwaitingAnswer("Hallo")
        assert dispatches(actions) == [DispatchPrompt("Hallo")]

    def test_backspace_no_underflow(self):
        s = fresh()
        s.handle(CharEvent("a"))
        s.handle(BS)
        assert s.state == Composing("")
        s.handle(BS)
        assert s.state == Composing("")

    def test_cr_between_lfs_does_not_break_trigger(self):
        s = fresh()
        s.handle(CharEvent("x"))
        s.handle(LF)
        s.handle(CR)
        actions = s.handle(LF)
        assert dispatches(actions) == [DispatchPrompt("x")]

    def test_char_resets_lf_run(self):
        s = fresh()
        s.handle(CharEvent("x"))
        s.handle(LF)
        s.handle(CharEvent("y"))
        s.handle(LF)
        assert isinstance(s.state, Composing)  # still composing, one LF so far

    def test_empty_prompt_returns_to_idle(self):
        s = fresh()
        s.handle(CharEvent(" "))
        s.handle(LF)
        actions = s.handle(LF)
        assert s.state == Idle()
        assert dispatches(actions) == []

    def test_unknown_never_changes_state(self):
        s = fresh()
        assert s.handle(UnknownEvent(0xFE)) == []
        assert s.state == Idle()
        s.handle(CharEvent("a"))
        s.handle(UnknownEvent(0xFE))
        assert s.state == Composing("a")

    def test_input_dropped_while_awaiting(self):
        s = fresh()
        s.handle(CharEvent("a"))
        s.handle(LF)
        s.handle(LF)
        assert isinstance(s.state, AwaitingAnswer)
        s.handle(CharEvent("z"))
        s.handle(LF)
        assert isinstance(s.state, AwaitingAnswer)
        assert s.dropped_input == 2

    def test_answer_moves_to_printing_then_idle(self):
        s = fresh()
        s.handle(CharEvent("a"))
        s.handle(LF)
        s.handle(LF)
        actions = s.handle(AnswerArrived("antwort"))
        assert isinstance(s.state, Printing)
        assert actions == [PrintAnswer("antwort")]
        s.handle(PrintFinished())
        assert s.state == Idle()

    def test_bell_aborts_printing(self):
        s = fresh()
        s.handle(CharEvent("a"))
        s.handle(LF)
        s.handle(LF)
        s.handle(AnswerArrived("x"))
        actions = s.handle(BELL)
        assert actions == [AbortPrint()]
        s.handle(PrintFinished(aborted=True))
        assert s.state == Idle()

    def test_stale_answer_ignored(self):
        s = fresh()
        assert s.handle(AnswerArrived("ghost")) == []
        assert s.state == Idle()

    def test_prompt_timeout_dispatches(self):
        s = fresh(prompt_idle_timeout=20.0)
        actions = s.handle(CharEvent("a"))
        timers = [a for a in actions if isinstance(a, ArmTimer)]
        assert timers and timers[0].kind == "prompt" and timers[0].delay == 20.0
        gen = timers[0].gen
        actions = s.handle(TimerFired("prompt", gen))
        assert dispatches(actions) == [DispatchPrompt("a")]

    def test_stale_prompt_timer_ignored(self):
        s = fresh(prompt_idle_timeout=20.0)
        actions = s.handle(CharEvent("a"))
        gen = [a for a in actions if isinstance(a, ArmTimer)][0].gen
        s.handle(CharEvent("b"))  # newer activity invalidates the timer
        assert s.handle(TimerFired("prompt", gen)) == []
        assert s.state == Composing("ab")

    def test_reset_timer_clears_history(self):
        s = fresh(reset_idle_timeout=120.0, system_prompt="sys")
        s.handle(CharEvent("a"))
        s.handle(LF)
        s.handle(LF)
        s.handle(AnswerArrived("b"))
        actions = s.handle(PrintFinished())
        assert len(s.history) == 3  # system + user + assistant
        timer = [a for a in actions if isinstance(a, ArmTimer)][0]
        assert timer.kind == "reset"
        s.handle(TimerFired("reset", timer.gen))
        assert [t.role for t in s.history] == [Role.SYSTEM]

    def test_failed_answer_pops_user_turn(self):
        s = fresh()
        s.handle(CharEvent("a"))
        s.handle(LF)
        s.handle(LF)
        assert [t.role for t in s.history] == [Role.USER]
        s.handle(AnswerArrived("sorry", ok=False))
        assert s.history == []

    def test_prompt_cap_drops_excess(self):
        s = Session(SessionConfig(prompt_idle_timeout=0, reset_idle_timeout=0,
                                  max_prompt_chars=5))
        for ch in "abcdefgh":
            s.handle(CharEvent(ch))
        assert s.state == Composing("abcde")
        assert s.dropped_input == 3


class TestEchoDiscipline:
    def test_device_events_never_print(self):
        """No sequence of raw device events yields a PrintAnswer action."""
        rng = random.Random(9)
        events = [CharEvent("a"), CharEvent("b"), LF, CR, BS, BELL, UnknownEvent(0xEE)]
        for _ in range(200):
            s = fresh()
            for _ in range(rng.randint(1, 30)):
                actions = s.handle(rng.choice(events))
                assert not any(isinstance(a, PrintAnswer) for a in actions)


class TestExactlyOnce:
    ALPHABET = ("char", "lf", "bs", "answer", "timeout")

    @staticmethod
    def apply(session, name):
        if name == "char":
            return session.handle(CharEvent("a"))
        if name == "lf":
            return session.handle(LF)
        if name == "bs":
            return session.handle(BS)
        if name == "answer":
            return session.handle(AnswerArrived("ok"))
        return session.handle(TimerFired("prompt", session.compose_gen))

    def test_exhaustive_short_sequences(self):
        """Every event sequence of length <= 5 keeps outstanding dispatches <= 1
        (the acceptance suite pushes this to length 8)."""
        import itertools

        config = SessionConfig(prompt_idle_timeout=20.0, reset_idle_timeout=0)
        for length in range(1, 6):
            for seq in itertools.product(self.ALPHABET, repeat=length):
                s = Session(config)
                outstanding = 0
                for name in seq:
                    consumed_answer = name == "answer" and isinstance(s.state, AwaitingAnswer)
                    actions = self.apply(s, name)
                    outstanding += len(dispatches(actions))
                    assert outstanding <= 1, f"sequence {seq} produced a double dispatch"
                    if consumed_answer:
                        outstanding -= 1
