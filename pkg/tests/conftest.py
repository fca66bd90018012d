import base64
import json
from pathlib import Path

import pytest

from figvqa.dataset import QAFlags, QARecord

# Smallest valid PNG (1x1), shared by every record that needs a figure file.
PNG_1PX = base64.b64decode(
    "iVBORw0KGgoAAAANSUhEUgAAAAEAAAABCAYAAAAfFcSJAAAADUlEQVR42mNk"
    "YPhfDwAChwGA60e6kgAAAABJRU5ErkJggg=="
)


@pytest.fixture
def figure_file(tmp_path) -> Path:
    path = tmp_path / "figure.png"
    path.write_bytes(PNG_1PX)
    return path


class OrthonormalEmbedder:
    """Whitespace tokens mapped to fixed one-hot axes; cosine is exactly 0/1."""

    def __init__(self, dim: int = 32):
        self.dim = dim
        self.axes: dict[str, int] = {}

    def _vector(self, token: str) -> list[float]:
        if token not in self.axes:
            self.axes[token] = len(self.axes)
        vec = [0.0] * self.dim
        vec[self.axes[token]] = 1.0
        return vec

    def embed(self, texts):
        token_lists = [text.split() for text in texts]
        vectors = [[self._vector(t) for t in toks] for toks in token_lists]
        return token_lists, vectors


def make_record(
    instance_id="inst-001",
    figure_path="",
    caption="A caption.",
    figure_type="line_chart",
    is_compound=False,
    fig_numb=None,
    answer_set="infinite",
    binary=False,
    visual=False,
    unanswerable=False,
    question="What is the peak value?",
    answer_options=(),
    gold_answer=None,
) -> QARecord:
    return QARecord(
        instance_id=instance_id,
        figure_path=figure_path,
        caption=caption,
        figure_type=figure_type,
        is_compound=is_compound,
        fig_numb=fig_numb,
        qa_flags=QAFlags(
            answer_set=answer_set, binary=binary, visual=visual, unanswerable=unanswerable
        ),
        question=question,
        answer_options=tuple(answer_options),
        gold_answer=gold_answer,
    )


def record_obj(record: QARecord) -> dict:
    obj = {
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


def write_dataset(records, path: Path) -> Path:
    with path.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record_obj(record)) + "\n")
    return path
