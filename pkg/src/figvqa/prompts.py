"""Prompt rendering for the four inference modes.

Every template lives here verbatim so the exact wording stays auditable
(`figvqa dump-prompts` re-emits all of it). Rendering is pure string
interpolation: a record plus a mode always yields byte-identical text.

Block composition per mode:
  baseline1 / baseline2: one fixed template with caption and question.
  single: base + compound? + figure-type focus + question + binary? + choice?
  cot:    step 1 = analysis base + compound?
          step 2 = inference base + figure-type focus + binary? + choice?
Binary and choice blocks are mutually exclusive (choice applies only to
finite non-binary questions). Blocks are joined by one blank line.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .dataset import QARecord

BASELINE_1 = (
    "You are a helpful assistant. Give the concise answer for the context given below. "
    "The caption of the figure is mentioned as, [caption]. "
    "The question for the figure is, [question]"
)

BASELINE_2 = (
    "Answer the question with only the raw numerical value or single word/phrase, "
    "omitting all units, context words, and explanatory text. "
    "The caption of the figure is mentioned as, [caption]. "
    "The question for the figure is, [question]"
)

SINGLE_BASE = (
    "Answer the question with only the raw numerical value or single word/phrase, "
    "omitting all units, context words, and explanatory text. "
    "The caption of the figure is mentioned as, [caption]."
)

COMPOUND_BLOCK = (
    "This is a compound figure containing multiple subfigures. "
    "Navigate to [fig_numb] graph in the compound figure to answer the question."
)

BINARY_BLOCK = (
    "This is a binary question. Answer with 'Yes' or 'No' based on [visual/textual] "
    "evidence. Respond affirmatively only if supported."
)

CHOICE_BLOCK = (
    "Return only the corresponding letter(s) of the correct answer(s). "
    "Only output the letter(s) corresponding to the correct choice.\n"
    "[answer_choices]"
)

COT_STEP1_BASE = """STEP 1: INITIAL ANALYSIS

Given the figure, caption, and question, analyze and answer step by step.
Regularly perform self-questioning, self-verification, self-correction to check your ongoing reasoning, using connectives such as "Wait a moment", "Wait, does it seem right?" etc.

Caption: [caption]

Question: [question]

Analyse the key visual elements (lines, shapes, colors) that address the question and analyze the relationships between elements. Then, extract the specific numerical/positional information from the figure and caption to answer the question."""

COT_STEP2_BASE = """STEP 2: COT INFERENCE

Answer the question with only the raw numerical value or single word/phrase, omitting all units, context words, and explanatory text. Approximations in the scale are allowed."""

COT_CHOICE_BLOCK = """Based on the reasoning above, match it to one or more of the provided answer options:
[answer_choices]

Return only the corresponding letter(s) of the correct answer(s).
Do not explain your choice, do not rephrase the answer, and do not repeat the option text.
Only output the letter(s) corresponding to the correct choice.
If multiple letters are correct, separate them by commas without spaces (for example: B,C).
If all options are correct, return A,B,C,D.
Do not add anything else."""

_FOCUS_ASPECTS: dict[str, tuple[str, list[str]]] = {
    "line_chart": (
        "line chart",
        [
            "Colors of different lines and their meanings",
            "X and Y axis labels and their units",
            "Scale and range of values",
            "Trends and patterns in the lines",
        ],
    ),
    "bar_chart": (
        "bar chart",
        [
            "Colors of different bars and their meanings",
            "X and Y axis labels and their units",
            "Scale and range of values",
            "Height and position of bars",
        ],
    ),
    "box_plot": (
        "box plot",
        [
            "Median line position",
            "Box boundaries (Q1 and Q3)",
            "Whisker extent",
            "Outliers if present",
        ],
    ),
    "confusion_matrix": (
        "confusion matrix",
        [
            "Row and column labels",
            "Numerical values in each cell",
            "Color intensity if present",
            "Overall distribution of values",
        ],
    ),
    "pie_chart": (
        "pie chart",
        [
            "Segments and their labels",
            "Percentage or proportion values",
            "Colors of different segments",
            "Size of each segment relative to others",
        ],
    ),
}

_OTHERS_ASPECTS = [
    "Colors and the labels present in the figure",
    "Any other relevant information present in the figure",
]

_PLACEHOLDER_RE = re.compile(
    r"\[caption\]|\[question\]|\[fig_numb\]|\[answer_choices\]|\[visual/textual\]"
)

PLACEHOLDERS = (
    "[caption]",
    "[question]",
    "[fig_numb]",
    "[answer_choices]",
    "[visual/textual]",
)


class PromptError(ValueError):
    """Raised when a record cannot be rendered under the requested mode."""


@dataclass(frozen=True)
class PromptBundle:
    mode: str  # baseline1 | baseline2 | single | cot
    step2_text: str
    step1_text: str | None = None
    image_ref: str = ""


def _fill(template: str, values: dict[str, str]) -> str:
    # Single-pass substitution so interpolated values are never re-scanned
    # for further placeholders.
    return _PLACEHOLDER_RE.sub(lambda m: values[m.group(0)], template)


def figure_type_block(figure_type: str) -> str:
    """Focus block for a figure-type label.

    Compound labels like "line_chart,table" select the first listed type;
    anything without a dedicated block falls back to the generic one.
    """
    first = figure_type.split(",")[0].strip()
    if first in _FOCUS_ASPECTS:
        noun, aspects = _FOCUS_ASPECTS[first]
        head = f"Focus on the following aspects of the {noun}:"
    else:
        aspects = _OTHERS_ASPECTS
        head = "Focus on the following aspects of the figure:"
    return "\n".join([head] + [f"- {a}" for a in aspects])


def _choices_text(record: QARecord) -> str:
    return "\n".join(f"{letter}. {text}" for letter, text in record.answer_options)


def _is_choice(record: QARecord) -> bool:
    return record.qa_flags.answer_set == "finite" and not record.qa_flags.binary


def _check_choice_options(record: QARecord) -> None:
    if _is_choice(record) and not record.answer_options:
        raise PromptError(
            f"record {record.instance_id}: finite non-binary question has no answer options"
        )


def _binary_block(record: QARecord) -> str:
    evidence = "visual" if record.qa_flags.visual else "textual"
    return _fill(BINARY_BLOCK, {"[visual/textual]": evidence})


def _compound_block(record: QARecord) -> str:
    return _fill(COMPOUND_BLOCK, {"[fig_numb]": record.fig_numb or ""})


def render_baseline(record: QARecord, variant: int) -> PromptBundle:
    if variant not in (1, 2):
        raise PromptError(f"unknown baseline variant: {variant}")
    template = BASELINE_1 if variant == 1 else BASELINE_2
    text = _fill(template, {"[caption]": record.caption, "[question]": record.question})
    return PromptBundle(mode=f"baseline{variant}", step2_text=text, image_ref=record.figure_path)


def render_single(record: QARecord) -> PromptBundle:
    """Composite one-shot prompt: every applicable block in fixed order."""
    _check_choice_options(record)
    blocks = [_fill(SINGLE_BASE, {"[caption]": record.caption})]
    if record.is_compound:
        blocks.append(_compound_block(record))
    blocks.append(figure_type_block(record.figure_type))
    blocks.append(record.question)
    if record.qa_flags.binary:
        blocks.append(_binary_block(record))
    elif _is_choice(record):
        blocks.append(_fill(CHOICE_BLOCK, {"[answer_choices]": _choices_text(record)}))
    return PromptBundle(mode="single", step2_text="\n\n".join(blocks), image_ref=record.figure_path)


def render_cot(record: QARecord) -> PromptBundle:
    """Two-step prompt pair: free-form analysis, then constrained inference."""
    _check_choice_options(record)
    step1_blocks = [
        _fill(COT_STEP1_BASE, {"[caption]": record.caption, "[question]": record.question})
    ]
    if record.is_compound:
        step1_blocks.append(_compound_block(record))

    step2_blocks = [COT_STEP2_BASE, figure_type_block(record.figure_type)]
    if record.qa_flags.binary:
        step2_blocks.append(_binary_block(record))
    elif _is_choice(record):
        step2_blocks.append(
            _fill(COT_CHOICE_BLOCK, {"[answer_choices]": _choices_text(record)})
        )
    return PromptBundle(
        mode="cot",
        step1_text="\n\n".join(step1_blocks),
        step2_text="\n\n".join(step2_blocks),
        image_ref=record.figure_path,
    )


def render(record: QARecord, mode: str) -> PromptBundle:
    if mode == "baseline1":
        return render_baseline(record, 1)
    if mode == "baseline2":
        return render_baseline(record, 2)
    if mode == "single":
        return render_single(record)
    if mode == "cot":
        return render_cot(record)
    raise PromptError(f"unknown prompting mode: {mode}")


def dump_templates() -> str:
    """All template texts with placeholders intact, for snapshot auditing."""
    sections = [
        ("baseline-1", BASELINE_1),
        ("baseline-2", BASELINE_2),
        ("single: base", SINGLE_BASE),
        ("single: compound images", COMPOUND_BLOCK),
    ]
    for key in _FOCUS_ASPECTS:
        sections.append((f"single: figure type ({key})", figure_type_block(key)))
    sections.append(("single: figure type (others)", figure_type_block("other")))
    sections += [
        ("single: binary", BINARY_BLOCK),
        ("single: choice", CHOICE_BLOCK),
        ("cot: step 1 base", COT_STEP1_BASE),
        ("cot: step 2 base", COT_STEP2_BASE),
        ("cot: step 2 choice", COT_CHOICE_BLOCK),
    ]
    out = []
    for title, body in sections:
        out.append(f"=== {title} ===")
        out.append(body)
        out.append("")
    return "\n".join(out)
