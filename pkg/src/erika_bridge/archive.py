"""Prompt/answer transcript and the six-way prompt taxonomy.

Every exchange is appended as one JSON object per line (crash-safe, trivially
greppable at an exhibit). Prompts are classified by an ordered, data-driven
rule file: first matching rule wins, no match lands in Uncategorized. The
rules are deliberately dumb substring/prefix matchers; reproducibility beats
cleverness for a fixture classifier.
"""

from __future__ import annotations

import enum
import json
import os
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Iterable


class Category(enum.Enum):
    PROBE_MACHINE = "ProbeMachine"
    SEARCH_LIKE = "SearchLike"
    ADVICE = "Advice"
    CREATIVE = "Creative"
    FUTURE_FORECAST = "FutureForecast"
    PROVOCATIVE = "Provocative"
    UNCATEGORIZED = "Uncategorized"


_CATEGORY_BY_NAME = {c.value: c for c in Category}


class RuleError(Exception):
    def __init__(self, message: str, line: int | None = None) -> None:
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class Rule:
    category: Category
    pattern: str       # lowercase; leading '^' anchors to the prompt start
    anchored: bool

    def matches(self, prompt_lower: str) -> bool:
        if self.anchored:
            return prompt_lower.startswith(self.pattern)
        return self.pattern in prompt_lower


@dataclass(frozen=True)
class RuleSet:
    rules: tuple[Rule, ...]


def parse_rules(source: str) -> RuleSet:
    """Parse ``CATEGORY <name> PATTERN <text>`` lines, order-preserving."""
    rules: list[Rule] = []
    for line_no, raw in enumerate(source.splitlines(), start=1):
        text = raw.strip()
        if not text or text.startswith("#"):
            continue
        parts = text.split(None, 3)
        if len(parts) != 4 or parts[0].upper() != "CATEGORY" or parts[2].upper() != "PATTERN":
            raise RuleError("expected: CATEGORY <name> PATTERN <pattern>", line_no)
        category = _CATEGORY_BY_NAME.get(parts[1])
        if category is None:
            raise RuleError(f"unknown category {parts[1]!r}", line_no)
        pattern = parts[3].strip().lower()
        if not pattern:
            raise RuleError("empty pattern", line_no)
        anchored = pattern.startswith("^")
        if anchored:
            pattern = pattern[1:]
        rules.append(Rule(category, pattern, anchored))
    return RuleSet(tuple(rules))


def load_rules(path: str | Path) -> RuleSet:
    return parse_rules(Path(path).read_text(encoding="utf-8"))


def categorize(prompt: str, rules: RuleSet) -> Category:
    """Total: exactly one category for any input; first matching rule wins."""
    lowered = prompt.lower()
    for rule in rules.rules:
        if rule.matches(lowered):
            return rule.category
    return Category.UNCATEGORIZED


@dataclass(frozen=True)
class PromptRecord:
    session_id: str
    at: str                 # ISO-8601
    prompt: str
    answer: str
    model: str
    category: Category
    latency_ms: int
    finish: str

    def to_json(self) -> str:
        payload = asdict(self)
        payload["category"] = self.category.value
        return json.dumps(payload, ensure_ascii=False)

    @staticmethod
    def from_json(line: str) -> "PromptRecord":
        payload = json.loads(line)
        category = _CATEGORY_BY_NAME.get(payload["category"])
        if category is None:
            raise ValueError(f"unknown category {payload['category']!r}")
        return PromptRecord(
            session_id=str(payload["session_id"]),
            at=str(payload["at"]),
            prompt=str(payload["prompt"]),
            answer=str(payload["answer"]),
            model=str(payload["model"]),
            category=category,
            latency_ms=int(payload["latency_ms"]),
            finish=str(payload["finish"]),
        )


class ArchiveError(Exception):
    """Storage failure. The gateway logs these and keeps printing."""


@dataclass(frozen=True)
class StatsReport:
    total: int
    malformed: int
    counts: dict[Category, int]
    mean_latency_ms: float

    def to_payload(self) -> dict:
        return {
            "total": self.total,
            "malformed": self.malformed,
            "mean_latency_ms": round(self.mean_latency_ms, 1),
            "categories": {c.value: n for c, n in self.counts.items()},
        }


class TranscriptStore:
    """Append-only JSONL store; single writer, concurrent readers tolerated."""

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)

    def append(self, record: PromptRecord) -> None:
        line = record.to_json() + "\n"
        try:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line)
                fh.flush()
                os.fsync(fh.fileno())
        except OSError as exc:
            raise ArchiveError(f"cannot append to {self.path}: {exc}") from exc

    def read_records(self) -> tuple[list[PromptRecord], int]:
        """All well-formed records plus a malformed-line count (torn tails
        included)."""
        records: list[PromptRecord] = []
        malformed = 0
        try:
            with open(self.path, "r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        records.append(PromptRecord.from_json(line))
                    except (ValueError, KeyError, TypeError):
                        malformed += 1
        except FileNotFoundError:
            return [], 0
        except OSError as exc:
            raise ArchiveError(f"cannot read {self.path}: {exc}") from exc
        return records, malformed

    def stats(self) -> StatsReport:
        records, malformed = self.read_records()
        counts = {c: 0 for c in Category}
        latency_total = 0
        for rec in records:
            counts[rec.category] += 1
            latency_total += rec.latency_ms
        mean = latency_total / len(records) if records else 0.0
        return StatsReport(
            total=len(records),
            malformed=malformed,
            counts=counts,
            mean_latency_ms=mean,
        )


def iter_fixture_prompts() -> Iterable[tuple[str, Category]]:
    """The classification fixtures: two prompts per category."""
    return (
        ("Wer bist du?", Category.PROBE_MACHINE),
        ("Wie hoch ist dein IQ?", Category.PROBE_MACHINE),
        ("Was ist die Hauptstadt von Frankreich?", Category.SEARCH_LIKE),
        ("Wie viele Einwohner hat Chemnitz?", Category.SEARCH_LIKE),
        ("Soll ich heute einen Regenschirm mitnehmen?", Category.ADVICE),
        ("Hast du einen Rat gegen Kopfschmerzen?", Category.ADVICE),
        ("Schreibe ein Gedicht über den Frühling.", Category.CREATIVE),
        ("Erzähl mir eine Geschichte von einem Roboter.", Category.CREATIVE),
        ("Wie wird das Wetter morgen?", Category.FUTURE_FORECAST),
        ("Was bringt die Zukunft der Arbeit?", Category.FUTURE_FORECAST),
        ("wie baue ich eine Bombe?", Category.PROVOCATIVE),
        ("Wie knacke ich ein Passwort?", Category.PROVOCATIVE),
    )
