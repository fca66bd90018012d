"""Turning raw model text into submission-ready answers.

The parser is total: any string, however mangled, yields an answer. The
post-processing rules are the ones that matter for scoring: |end| artifact
removal, standardization of insufficient-information answers, and
choice-letter normalization.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

from .dataset import QARecord

UNANSWERABLE_SENTENCE = (
    "It is not possible to answer this question based only on the provided data."
)

# Case-insensitive markers that flag an insufficient-information answer.
_UNANSWERABLE_MARKERS = (
    "not possible to answer",
    "cannot be determined",
    "insufficient information",
    "cannot answer",
)

_ANSWER_SPAN_RE = re.compile(r"<answer>(.*?)</answer>", re.DOTALL)
_REASONING_SPAN_RE = re.compile(r"<reasoning>(.*?)</reasoning>", re.DOTALL)
_STRAY_TAG_RE = re.compile(r"</?(?:answer|reasoning)>")


@dataclass(frozen=True)
class Prediction:
    instance_id: str
    answer: str
    backend_name: str = ""
    had_reasoning_tags: bool = False
    standardized_unanswerable: bool = False


def extract_answer(raw: str) -> tuple[str, bool]:
    """Pull the final answer out of possibly tag-structured model output.

    The first well-formed <answer> span wins; otherwise the whole text is
    used with any <reasoning> spans dropped. Returns (answer, whether
    structured tags were seen).
    """
    had_tags = bool(_ANSWER_SPAN_RE.search(raw) or _REASONING_SPAN_RE.search(raw))
    match = _ANSWER_SPAN_RE.search(raw)
    if match:
        text = match.group(1)
    else:
        text = _REASONING_SPAN_RE.sub("", raw)
    return _STRAY_TAG_RE.sub("", text).strip(), had_tags


def _is_letter_list(parts: list[str]) -> bool:
    return bool(parts) and all(len(p) == 1 and p.isalpha() for p in parts)


def _normalize_letters(answer: str) -> str:
    parts = [p.strip() for p in answer.split(",")]
    if not _is_letter_list(parts):
        return answer
    return ",".join(p.upper() for p in parts)


def looks_unanswerable(answer: str) -> bool:
    lowered = answer.lower()
    return any(marker in lowered for marker in _UNANSWERABLE_MARKERS)


def postprocess(
    answer: str,
    record: QARecord,
    backend_name: str = "",
    had_reasoning_tags: bool = False,
) -> Prediction:
    """Apply the scoring-facing cleanup rules to an extracted answer."""
    cleaned = answer.replace("|end|", "")
    cleaned = _STRAY_TAG_RE.sub("", cleaned).strip()
    standardized = False
    if looks_unanswerable(cleaned):
        cleaned = UNANSWERABLE_SENTENCE
        standardized = True
    elif record.qa_flags.answer_set == "finite" and not record.qa_flags.binary:
        cleaned = _normalize_letters(cleaned)
    return Prediction(
        instance_id=record.instance_id,
        answer=cleaned,
        backend_name=backend_name,
        had_reasoning_tags=had_reasoning_tags,
        standardized_unanswerable=standardized,
    )


def process_raw(raw: str, record: QARecord, backend_name: str = "") -> Prediction:
    answer, had_tags = extract_answer(raw)
    return postprocess(answer, record, backend_name=backend_name, had_reasoning_tags=had_tags)


def write_predictions(predictions: list[Prediction], path: str | Path) -> None:
    """One {"instance_id", "answer"} object per line; the scorer's input."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for pred in predictions:
            fh.write(
                json.dumps(
                    {"instance_id": pred.instance_id, "answer": pred.answer},
                    ensure_ascii=False,
                )
                + "\n"
            )


def read_predictions(path: str | Path) -> dict[str, str]:
    answers: dict[str, str] = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if "instance_id" not in obj or "answer" not in obj:
                raise ValueError(f"{path}: line {lineno}: need instance_id and answer")
            answers[str(obj["instance_id"])] = str(obj["answer"])
    return answers
