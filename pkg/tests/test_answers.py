import random
import string

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from figvqa.answers import (
    UNANSWERABLE_SENTENCE,
    extract_answer,
    postprocess,
    process_raw,
    read_predictions,
    write_predictions,
)

from conftest import make_record


def finite_record(**kw):
    return make_record(
        answer_set="finite",
        answer_options=(("A", "one"), ("B", "two"), ("C", "three")),
        **kw,
    )


def test_extract_tagged_answer():
    assert extract_answer("<reasoning>r</reasoning><answer>42</answer>") == ("42", True)


def test_extract_plain_text():
    assert extract_answer("just text") == ("just text", False)


def test_extract_first_span_wins():
    assert extract_answer("<answer>A,B</answer> trailing") == ("A,B", True)
    assert extract_answer("<answer>x</answer><answer>y</answer>") == ("x", True)


def test_extract_reasoning_only_is_dropped():
    answer, had_tags = extract_answer("<reasoning>long thoughts</reasoning>final")
    assert answer == "final"
    assert had_tags is True


def test_extract_unclosed_tag_falls_back_to_full_text():
    answer, had_tags = extract_answer("<answer>oops never closed")
    assert answer == "oops never closed"
    assert had_tags is False


def test_postprocess_strips_end_tags():
    assert postprocess("42|end|", make_record()).answer == "42"
    assert postprocess("|end|a|end|b|end|", make_record()).answer == "ab"


def test_postprocess_standardizes_unanswerable():
    pred = postprocess("cannot be determined from the figure", make_record())
    assert pred.answer == UNANSWERABLE_SENTENCE
    assert pred.standardized_unanswerable is True
    assert pred.answer == (
        "It is not possible to answer this question based only on the provided data."
    )


@pytest.mark.parametrize(
    "raw",
    [
        "It is Not Possible To Answer this",
        "there is insufficient information here",
        "I cannot answer",
        "The value cannot be determined.",
    ],
)
def test_unanswerable_detector_is_case_insensitive(raw):
    assert postprocess(raw, make_record()).standardized_unanswerable


def test_letter_normalization_on_choice_records():
    assert postprocess("b, c", finite_record()).answer == "B,C"
    assert postprocess("a", finite_record()).answer == "A"
    assert postprocess("C,A", finite_record()).answer == "C,A"  # order preserved


def test_letter_normalization_skipped_when_not_letters():
    assert postprocess("blue, red", finite_record()).answer == "blue, red"
    assert postprocess("b, c", make_record()).answer == "b, c"  # infinite answer set


def test_process_raw_end_to_end():
    raw = "<reasoning>looking</reasoning><answer>b,c</answer>|end|"
    pred = process_raw(raw, finite_record(), backend_name="mock")
    assert pred.answer == "B,C"
    assert pred.backend_name == "mock"
    assert pred.had_reasoning_tags is True


def test_prediction_never_contains_tags_or_end():
    raw = "<answer>left |end| <reasoning>x</reasoning> right</answer>"
    pred = process_raw(raw, make_record())
    for banned in ("|end|", "<answer>", "</answer>", "<reasoning>", "</reasoning>"):
        assert banned not in pred.answer


def _fuzz_inputs(n=1000, seed=20250810):
    rng = random.Random(seed)
    pieces = [
        "<answer>", "</answer>", "<reasoning>", "</reasoning>", "|end|",
        "b, c", "B,C", "cannot answer", "42", " ", "\n", "x" * 5,
        string.punctuation, "Insufficient Information",
    ]
    for _ in range(n):
        yield "".join(rng.choice(pieces) for _ in range(rng.randint(0, 12)))


@pytest.mark.parametrize("record_kind", ["infinite", "finite"])
def test_postprocess_idempotent_over_fuzzed_inputs(record_kind):
    record = finite_record() if record_kind == "finite" else make_record()
    for raw in _fuzz_inputs():
        answer, tags = extract_answer(raw)
        once = postprocess(answer, record, had_reasoning_tags=tags)
        twice = postprocess(once.answer, record, had_reasoning_tags=tags)
        assert twice.answer == once.answer


@settings(max_examples=200, deadline=None)
@given(st.text(max_size=80))
def test_postprocess_idempotent_property(raw):
    record = finite_record()
    once = postprocess(extract_answer(raw)[0], record)
    assert postprocess(once.answer, record).answer == once.answer


def test_prediction_file_roundtrip(tmp_path):
    preds = [
        process_raw("<answer>1</answer>", make_record(instance_id="a")),
        process_raw("two", make_record(instance_id="b")),
    ]
    path = tmp_path / "pred.jsonl"
    write_predictions(preds, path)
    assert read_predictions(path) == {"a": "1", "b": "two"}
    obj_keys = [sorted(__import__("json").loads(line)) for line in path.read_text().splitlines()]
    assert obj_keys == [["answer", "instance_id"], ["answer", "instance_id"]]
