"""Dialogue corpus ingestion, pair explosion, cleaning, and statistics.

A corpus file is JSONL, one conversation per line:

    {"id": "abc", "messages": [{"role": "user", "content": "..."},
                               {"role": "assistant", "content": "..."}, ...]}

A secondary reader accepts the two-field turn-array form:

    {"id": "abc", "turns": [{"instruction": "...", "answer": "..."}, ...]}

Roles must strictly alternate user/assistant starting with user, and every
instruction must have its answer; anything else is rejected per record and
tallied so one corrupt line never aborts a long ingest.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Optional

from .errors import EmptyAfterClean, MalformedRecord


class SourceTag(str, Enum):
    REAL_CORPUS = "real_corpus"
    GENERATED = "generated"


@dataclass(frozen=True)
class Turn:
    """One instruction/answer exchange.

    ``answer_error`` is a reserved sentinel written by the generation loop
    when the answering backend fails; cleaning keys on it.
    """

    instruction: str
    answer: str
    turn_index: int
    answer_error: Optional[str] = None


@dataclass(frozen=True)
class Dialogue:
    id: str
    turns: tuple[Turn, ...]
    source_tag: SourceTag = SourceTag.REAL_CORPUS

    def __post_init__(self):
        if not self.turns:
            raise ValueError(f"dialogue {self.id}: turns must be non-empty")
        for i, turn in enumerate(self.turns):
            if turn.turn_index != i:
                raise ValueError(
                    f"dialogue {self.id}: turn_index {turn.turn_index} at position {i}"
                )


@dataclass(frozen=True)
class HistoryInstructionPair:
    """The t-th instruction of a dialogue with everything said before it.

    ``history`` is the flat alternating message list (2t messages); its final
    entry is always the previous answer.
    """

    dialogue_id: str
    t: int
    history: tuple[dict, ...]
    instruction: str
    last_answer: str


@dataclass(frozen=True)
class CorpusStats:
    dialogue_count: int
    avg_turns: float
    avg_instruction_tokens: float


@dataclass
class CorpusLoadResult:
    dialogues: list[Dialogue]
    errors: list[MalformedRecord] = field(default_factory=list)


def _messages_from_turn_array(turns: list) -> list[dict]:
    messages = []
    for entry in turns:
        if not isinstance(entry, dict) or "instruction" not in entry or "answer" not in entry:
            raise ValueError("turn entries need 'instruction' and 'answer'")
        messages.append({"role": "user", "content": entry["instruction"]})
        messages.append({"role": "assistant", "content": entry["answer"]})
    return messages


def dialogue_from_messages(
    dialogue_id: str, messages: list, source_tag: SourceTag = SourceTag.REAL_CORPUS
) -> Dialogue:
    """Validate role alternation and fold a message list into turns."""
    if not isinstance(messages, list) or not messages:
        raise ValueError("messages must be a non-empty list")
    turns = []
    for i, msg in enumerate(messages):
        if not isinstance(msg, dict):
            raise ValueError(f"message {i} is not an object")
        role, content = msg.get("role"), msg.get("content")
        if role not in ("user", "assistant"):
            raise ValueError(f"message {i} has unsupported role {role!r}")
        if not isinstance(content, str):
            raise ValueError(f"message {i} has non-text content")
        expected = "user" if i % 2 == 0 else "assistant"
        if role != expected:
            if i == 0:
                raise ValueError("dialogue starts with an assistant message")
            raise ValueError(f"two consecutive {role} messages at position {i}")
    if len(messages) % 2 != 0:
        raise ValueError("dangling user message without an answer")
    for t in range(len(messages) // 2):
        turns.append(
            Turn(
                instruction=messages[2 * t]["content"],
                answer=messages[2 * t + 1]["content"],
                turn_index=t,
            )
        )
    return Dialogue(id=dialogue_id, turns=tuple(turns), source_tag=source_tag)


def load_dialogues(
    path: str | Path,
    fmt: str = "messages",
    source_tag: SourceTag = SourceTag.REAL_CORPUS,
) -> CorpusLoadResult:
    """Stream a JSONL corpus file into dialogues.

    ``fmt`` is ``"messages"`` or ``"turns"``.  Malformed records are skipped
    and returned in ``errors``; a missing file raises ``FileNotFoundError``.
    """
    if fmt not in ("messages", "turns"):
        raise ValueError(f"unknown corpus format {fmt!r}")
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))

    result = CorpusLoadResult(dialogues=[])
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                if not isinstance(record, dict):
                    raise ValueError("record is not an object")
                dialogue_id = str(record.get("id", f"{path.stem}-{line_no}"))
                if fmt == "turns":
                    messages = _messages_from_turn_array(record.get("turns") or [])
                else:
                    messages = record.get("messages")
                result.dialogues.append(
                    dialogue_from_messages(dialogue_id, messages, source_tag)
                )
            except (ValueError, TypeError, json.JSONDecodeError) as exc:
                result.errors.append(MalformedRecord(line_no, str(exc)))
    return result


def dialogue_to_record(dialogue: Dialogue) -> dict:
    messages = []
    for turn in dialogue.turns:
        messages.append({"role": "user", "content": turn.instruction})
        messages.append({"role": "assistant", "content": turn.answer})
    return {"id": dialogue.id, "messages": messages}


def dumps_dialogue(dialogue: Dialogue) -> str:
    """Canonical single-line serialization; load/dump round-trips bytes."""
    return json.dumps(dialogue_to_record(dialogue), ensure_ascii=False)


def write_corpus(dialogues: Iterable[Dialogue], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for dialogue in dialogues:
            fh.write(dumps_dialogue(dialogue) + "\n")


def explode_pairs(dialogue: Dialogue) -> list[HistoryInstructionPair]:
    """Split a dialogue of T+1 turns into its T history/instruction pairs.

    The opening instruction has an empty history and yields no pair, so pair
    t (t = 1..T) carries turns 0..t-1 verbatim as its history.
    """
    pairs = []
    messages: list[dict] = []
    for turn in dialogue.turns:
        if turn.turn_index >= 1:
            pairs.append(
                HistoryInstructionPair(
                    dialogue_id=dialogue.id,
                    t=turn.turn_index,
                    history=tuple(dict(m) for m in messages),
                    instruction=turn.instruction,
                    last_answer=messages[-1]["content"],
                )
            )
        messages.append({"role": "user", "content": turn.instruction})
        messages.append({"role": "assistant", "content": turn.answer})
    return pairs


def _turn_is_erroneous(turn: Turn) -> bool:
    return not turn.instruction.strip() or turn.answer_error is not None


def clean_generated(dialogue: Dialogue) -> Dialogue:
    """Drop everything from the first erroneous turn onward.

    A turn is erroneous when its instruction is empty/whitespace or its
    answer carries the backend-error sentinel.  Raises ``EmptyAfterClean``
    when the very first turn is already erroneous; the caller drops the
    dialogue in that case.
    """
    keep = len(dialogue.turns)
    for i, turn in enumerate(dialogue.turns):
        if _turn_is_erroneous(turn):
            keep = i
            break
    if keep == 0:
        raise EmptyAfterClean(dialogue.id)
    if keep == len(dialogue.turns):
        return dialogue
    return replace(dialogue, turns=dialogue.turns[:keep])


def whitespace_tokens(text: str) -> int:
    return len(text.split())


def corpus_stats(
    dialogues: list[Dialogue],
    tokenizer: Callable[[str], int] = whitespace_tokens,
) -> CorpusStats:
    """Average turn count per dialogue and token count per instruction.

    Answers are not counted.  An empty corpus yields all zeros.
    """
    if not dialogues:
        return CorpusStats(dialogue_count=0, avg_turns=0.0, avg_instruction_tokens=0.0)
    turn_counts = [len(d.turns) for d in dialogues]
    token_counts = [tokenizer(t.instruction) for d in dialogues for t in d.turns]
    return CorpusStats(
        dialogue_count=len(dialogues),
        avg_turns=sum(turn_counts) / len(dialogues),
        avg_instruction_tokens=sum(token_counts) / len(token_counts),
    )
