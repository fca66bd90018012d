"""Loading, validation, and summary statistics for figure-QA datasets.

A split is a UTF-8 JSONL file, one record per line. Records are validated
eagerly on load; gold answers stay raw strings (any normalization is the
scorer's business, not the loader's).
"""

from __future__ import annotations

import json
import string
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path


class DatasetError(ValueError):
    """Raised for malformed split files or invalid records."""


_REQUIRED_FIELDS = (
    "instance_id",
    "figure_path",
    "caption",
    "figure_type",
    "is_compound",
    "answer_set",
    "binary",
    "visual",
    "unanswerable",
    "question",
)


@dataclass(frozen=True)
class QAFlags:
    answer_set: str  # "infinite" | "finite"
    binary: bool
    visual: bool
    unanswerable: bool

    def label(self) -> str:
        """Canonical combo label used by stats histograms and breakdowns."""
        parts = [
            self.answer_set,
            "binary" if self.binary else "non-binary",
            "visual" if self.visual else "non-visual",
        ]
        if self.unanswerable:
            parts.append("unanswerable")
        return "/".join(parts)


@dataclass(frozen=True)
class QARecord:
    instance_id: str
    figure_path: str
    caption: str
    figure_type: str
    is_compound: bool
    qa_flags: QAFlags
    question: str
    fig_numb: str | None = None
    answer_options: tuple[tuple[str, str], ...] = ()
    gold_answer: str | None = None


@dataclass
class SplitStats:
    total: int
    by_figure_type: dict[str, int] = field(default_factory=dict)
    by_qa_flags: dict[str, int] = field(default_factory=dict)


def _validate_options(options: tuple[tuple[str, str], ...], where: str) -> None:
    expected = string.ascii_uppercase
    for i, (letter, _text) in enumerate(options):
        if i >= len(expected) or letter != expected[i]:
            raise DatasetError(
                f"{where}: answer_options letters must be consecutive uppercase "
                f"starting at 'A', got {[l for l, _ in options]!r}"
            )


def _parse_line(obj: dict, lineno: int, gold: bool) -> QARecord:
    where = f"line {lineno}"
    for name in _REQUIRED_FIELDS:
        if name not in obj:
            raise DatasetError(f"{where}: missing field {name}")

    answer_set = obj["answer_set"]
    if answer_set not in ("infinite", "finite"):
        raise DatasetError(
            f"{where}: field answer_set must be 'infinite' or 'finite', got {answer_set!r}"
        )
    for name in ("is_compound", "binary", "visual", "unanswerable"):
        if not isinstance(obj[name], bool):
            raise DatasetError(f"{where}: field {name} must be a boolean")

    flags = QAFlags(
        answer_set=answer_set,
        binary=obj["binary"],
        visual=obj["visual"],
        unanswerable=obj["unanswerable"],
    )

    raw_options = obj.get("answer_options") or []
    if not isinstance(raw_options, list):
        raise DatasetError(f"{where}: field answer_options must be a list")
    options: list[tuple[str, str]] = []
    for opt in raw_options:
        if not isinstance(opt, dict) or "letter" not in opt or "text" not in opt:
            raise DatasetError(
                f"{where}: field answer_options entries need 'letter' and 'text'"
            )
        options.append((str(opt["letter"]), str(opt["text"])))
    opts = tuple(options)
    _validate_options(opts, where)

    if flags.binary and opts:
        raise DatasetError(f"{where}: field answer_options must be empty for binary questions")
    needs_options = flags.answer_set == "finite" and not flags.binary
    if needs_options and not opts and not flags.unanswerable:
        raise DatasetError(
            f"{where}: field answer_options must be nonempty for finite non-binary questions"
        )
    if not needs_options and opts:
        raise DatasetError(
            f"{where}: field answer_options given but question is not finite non-binary"
        )

    fig_numb = obj.get("fig_numb")
    if fig_numb is not None and not obj["is_compound"]:
        raise DatasetError(f"{where}: field fig_numb only allowed on compound figures")

    gold_answer = None
    if gold and obj.get("gold_answer") is not None:
        gold_answer = str(obj["gold_answer"])

    return QARecord(
        instance_id=str(obj["instance_id"]),
        figure_path=str(obj["figure_path"]),
        caption=str(obj["caption"]),
        figure_type=str(obj["figure_type"]),
        is_compound=obj["is_compound"],
        qa_flags=flags,
        question=str(obj["question"]),
        fig_numb=None if fig_numb is None else str(fig_numb),
        answer_options=opts,
        gold_answer=gold_answer,
    )


def load_split(path: str | Path, gold: bool = False) -> list[QARecord]:
    """Load a JSONL split, validating every record.

    gold=True populates gold_answer where the field is present; gold=False
    drops it even when present so prediction runs can never peek.
    """
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"dataset file not found: {path}")
    records: list[QARecord] = []
    seen: set[str] = set()
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(obj, dict):
                raise DatasetError(f"line {lineno}: record must be an object")
            record = _parse_line(obj, lineno, gold)
            if record.instance_id in seen:
                raise DatasetError(f"duplicate instance_id: {record.instance_id}")
            seen.add(record.instance_id)
            records.append(record)
    return records


def record_to_obj(record: QARecord) -> dict:
    """Serialize one record back to the on-disk schema."""
    obj: dict = {
        "instance_id": record.instance_id,
        "figure_path": record.figure_path,
        "caption": record.caption,
        "figure_type": record.figure_type,
        "is_compound": record.is_compound,
        "fig_numb": record.fig_numb,
        "answer_set": record.qa_flags.answer_set,
        "binary": record.qa_flags.binary,
        "visual": record.qa_flags.visual,
        "unanswerable": record.qa_flags.unanswerable,
        "question": record.question,
        "answer_options": [{"letter": l, "text": t} for l, t in record.answer_options],
    }
    if record.gold_answer is not None:
        obj["gold_answer"] = record.gold_answer
    return obj


def write_split(records: list[QARecord], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record_to_obj(record), ensure_ascii=False) + "\n")


def strip_gold(record: QARecord) -> QARecord:
    return replace(record, gold_answer=None)


def compute_stats(records: list[QARecord]) -> SplitStats:
    """Histogram records over figure_type and qa-flag combinations."""
    if not records:
        raise DatasetError("cannot compute stats over an empty record list")
    by_type: Counter[str] = Counter()
    by_flags: Counter[str] = Counter()
    for record in records:
        by_type[record.figure_type] += 1
        by_flags[record.qa_flags.label()] += 1
    return SplitStats(
        total=len(records),
        by_figure_type=dict(sorted(by_type.items(), key=lambda kv: (-kv[1], kv[0]))),
        by_qa_flags=dict(sorted(by_flags.items(), key=lambda kv: (-kv[1], kv[0]))),
    )
