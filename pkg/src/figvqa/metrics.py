"""Scoring: ROUGE-1, ROUGE-L, BERTScore, and exact match.

Pinned configuration, documented so score differences against other
harnesses are attributable:
  - tokenizer: casefold, then alphanumeric runs (punctuation dropped,
    digit runs kept intact: "52,3%" -> ["52", "3"])
  - ROUGE F1 is the plain harmonic mean (beta = 1)
  - BERTScore: greedy cosine matching over service-provided token
    embeddings, no IDF weighting, no baseline rescaling
  - exact match: byte equality after trim + casefold
"""

from __future__ import annotations

import csv
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Protocol, Sequence

import numpy as np
import requests

from .dataset import QARecord
from .tables import format_table

logger = logging.getLogger(__name__)

_TOKEN_RE = re.compile(r"[^\W_]+")

# Column layout for emitted reports (exact match appended last).
METRIC_COLUMNS = ["r1_f1", "r1_p", "r1_r", "rl_f1", "rl_p", "rl_r", "bs_f1", "bs_p", "bs_r", "exact"]
COLUMN_TITLES = {
    "r1_f1": "R1-F1", "r1_p": "R1-P", "r1_r": "R1-R",
    "rl_f1": "RL-F1", "rl_p": "RL-P", "rl_r": "RL-R",
    "bs_f1": "BS-F1", "bs_p": "BS-P", "bs_r": "BS-R",
    "exact": "Exact",
}


class MetricsError(ValueError):
    pass


class EmbedderTransportError(MetricsError):
    """The embedding service could not be reached or answered abnormally."""


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.casefold())


def _harmonic(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def rouge1(candidate: Sequence[str], reference: Sequence[str]) -> tuple[float, float, float]:
    """Clipped unigram overlap precision/recall/F1."""
    if not candidate and not reference:
        return 1.0, 1.0, 1.0
    if not candidate or not reference:
        return 0.0, 0.0, 0.0
    cand_counts = Counter(candidate)
    ref_counts = Counter(reference)
    matches = sum(min(count, ref_counts[tok]) for tok, count in cand_counts.items())
    p = matches / len(candidate)
    r = matches / len(reference)
    return p, r, _harmonic(p, r)


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    """Longest common subsequence length, two-row dynamic program."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        curr = [0] * (len(b) + 1)
        for j, y in enumerate(b, start=1):
            if x == y:
                curr[j] = prev[j - 1] + 1
            else:
                curr[j] = max(prev[j], curr[j - 1])
        prev = curr
    return prev[-1]


def rougeL(candidate: Sequence[str], reference: Sequence[str]) -> tuple[float, float, float]:
    """LCS-based precision/recall/F1."""
    if not candidate and not reference:
        return 1.0, 1.0, 1.0
    if not candidate or not reference:
        return 0.0, 0.0, 0.0
    lcs = lcs_length(candidate, reference)
    p = lcs / len(candidate)
    r = lcs / len(reference)
    return p, r, _harmonic(p, r)


def normalize_exact(text: str) -> str:
    return text.strip().casefold()


def exact_match(candidate: str, reference: str) -> bool:
    return normalize_exact(candidate) == normalize_exact(reference)


class Embedder(Protocol):
    """Per-token contextual embeddings: texts -> (tokens, unit vectors)."""

    def embed(self, texts: list[str]) -> tuple[list[list[str]], list[list[list[float]]]]: ...


class HttpEmbedder:
    """Client for the embedding sidecar (POST {base_url}/embed)."""

    def __init__(self, base_url: str, timeout: float = 120.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout

    def embed(self, texts: list[str]) -> tuple[list[list[str]], list[list[list[float]]]]:
        try:
            resp = requests.post(
                f"{self.base_url}/embed", json={"texts": texts}, timeout=self.timeout
            )
        except requests.RequestException as exc:
            raise EmbedderTransportError(f"embedding service unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise EmbedderTransportError(
                f"embedding service error: HTTP {resp.status_code}: {resp.text[:300]}"
            )
        data = resp.json()
        return data["tokens"], data["vectors"]


def _greedy_match(cand_vecs: np.ndarray, ref_vecs: np.ndarray) -> tuple[float, float, float]:
    def unit(m: np.ndarray) -> np.ndarray:
        norms = np.linalg.norm(m, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        return m / norms

    sim = unit(cand_vecs) @ unit(ref_vecs).T
    p = float(sim.max(axis=1).mean())
    r = float(sim.max(axis=0).mean())
    f1 = _harmonic(p, r)
    # Harmonic mean degenerates under mixed-sign inputs; keep the score in
    # the cosine range.
    return p, r, float(np.clip(f1, -1.0, 1.0))


def bertscore_from_vectors(
    cand_vecs: list[list[float]], ref_vecs: list[list[float]]
) -> tuple[float, float, float]:
    if not cand_vecs or not ref_vecs:
        logger.warning("bertscore: empty tokenization, scoring (0, 0, 0)")
        return 0.0, 0.0, 0.0
    return _greedy_match(np.asarray(cand_vecs, dtype=np.float64),
                         np.asarray(ref_vecs, dtype=np.float64))


def bertscore(candidate: str, reference: str, embedder: Embedder) -> tuple[float, float, float]:
    """Greedy-matching similarity of two strings under an embedding backend."""
    _tokens, vectors = embedder.embed([candidate, reference])
    return bertscore_from_vectors(vectors[0], vectors[1])


@dataclass
class MetricOptions:
    rouge: bool = True
    bertscore: bool = False
    exact: bool = True
    embedder: Embedder | None = None
    batch_size: int = 64


@dataclass
class MetricReport:
    columns: list[str]
    per_instance: list[dict] = field(default_factory=list)
    aggregates: dict[str, float] = field(default_factory=dict)
    by_figure_type: dict[str, dict] = field(default_factory=dict)
    by_qa_flags: dict[str, dict] = field(default_factory=dict)


def _embed_unique(texts: list[str], embedder: Embedder, batch_size: int) -> dict[str, list[list[float]]]:
    unique = list(dict.fromkeys(texts))
    vectors_by_text: dict[str, list[list[float]]] = {}
    for start in range(0, len(unique), batch_size):
        batch = unique[start : start + batch_size]
        _tokens, vectors = embedder.embed(batch)
        for text, vecs in zip(batch, vectors):
            vectors_by_text[text] = vecs
    return vectors_by_text


def evaluate(
    predictions: Mapping[str, str],
    gold_records: list[QARecord],
    options: MetricOptions | None = None,
) -> MetricReport:
    """Score predictions against gold, with per-type breakdowns.

    Requires an exact id bijection between predictions and gold records;
    anything missing on either side is an error so silent partial scoring
    can never happen.
    """
    options = options or MetricOptions()
    gold_by_id = {r.instance_id: r for r in gold_records}
    missing_gold = sorted(set(predictions) - set(gold_by_id))
    missing_pred = sorted(set(gold_by_id) - set(predictions))
    if missing_gold or missing_pred:
        raise MetricsError(
            f"id mismatch: {len(missing_gold)} predictions without gold {missing_gold[:5]}, "
            f"{len(missing_pred)} gold without predictions {missing_pred[:5]}"
        )
    without_answer = sorted(i for i, r in gold_by_id.items() if r.gold_answer is None)
    if without_answer:
        raise MetricsError(f"gold records without gold_answer: {without_answer[:5]}")
    if options.bertscore and options.embedder is None:
        raise MetricsError("bertscore requested but no embedder configured")

    columns = []
    if options.rouge:
        columns += ["r1_f1", "r1_p", "r1_r", "rl_f1", "rl_p", "rl_r"]
    if options.bertscore:
        columns += ["bs_f1", "bs_p", "bs_r"]
    if options.exact:
        columns += ["exact"]

    ordered_ids = sorted(predictions)
    vectors_by_text: dict[str, list[list[float]]] = {}
    if options.bertscore:
        texts = []
        for instance_id in ordered_ids:
            texts.append(predictions[instance_id])
            texts.append(gold_by_id[instance_id].gold_answer)
        vectors_by_text = _embed_unique(texts, options.embedder, options.batch_size)

    report = MetricReport(columns=columns)
    for instance_id in ordered_ids:
        pred_text = predictions[instance_id]
        gold_text = gold_by_id[instance_id].gold_answer
        row: dict = {"instance_id": instance_id}
        if options.rouge:
            cand, ref = tokenize(pred_text), tokenize(gold_text)
            row["r1_p"], row["r1_r"], row["r1_f1"] = rouge1(cand, ref)
            row["rl_p"], row["rl_r"], row["rl_f1"] = rougeL(cand, ref)
        if options.bertscore:
            row["bs_p"], row["bs_r"], row["bs_f1"] = bertscore_from_vectors(
                vectors_by_text[pred_text], vectors_by_text[gold_text]
            )
        if options.exact:
            row["exact"] = 1.0 if exact_match(pred_text, gold_text) else 0.0
        report.per_instance.append(row)

    def aggregate(rows: list[dict]) -> dict[str, float]:
        return {col: sum(r[col] for r in rows) / len(rows) for col in columns}

    report.aggregates = aggregate(report.per_instance)

    groups_type: dict[str, list[dict]] = {}
    groups_flags: dict[str, list[dict]] = {}
    for row in report.per_instance:
        record = gold_by_id[row["instance_id"]]
        groups_type.setdefault(record.figure_type, []).append(row)
        groups_flags.setdefault(record.qa_flags.label(), []).append(row)
    for label in sorted(groups_type):
        report.by_figure_type[label] = {"n": len(groups_type[label]), **aggregate(groups_type[label])}
    for label in sorted(groups_flags):
        report.by_qa_flags[label] = {"n": len(groups_flags[label]), **aggregate(groups_flags[label])}
    return report


def _score_row(label: str, n: int, scores: dict, columns: list[str]) -> list[str]:
    return [label, str(n)] + [f"{scores[c]:.4f}" for c in columns]


def render_report(report: MetricReport) -> str:
    headers = ["group", "n"] + [COLUMN_TITLES[c] for c in report.columns]
    n_total = len(report.per_instance)
    rows = [_score_row("all", n_total, report.aggregates, report.columns)]
    sections = [format_table(headers, rows)]
    if report.by_figure_type:
        rows = [
            _score_row(label, scores["n"], scores, report.columns)
            for label, scores in report.by_figure_type.items()
        ]
        sections.append("by figure type:\n" + format_table(headers, rows))
    if report.by_qa_flags:
        rows = [
            _score_row(label, scores["n"], scores, report.columns)
            for label, scores in report.by_qa_flags.items()
        ]
        sections.append("by qa type:\n" + format_table(headers, rows))
    return "\n\n".join(sections) + "\n"


def write_report_csv(report: MetricReport, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["group", "n"] + [COLUMN_TITLES[c] for c in report.columns])
        writer.writerow(
            ["all", len(report.per_instance)]
            + [f"{report.aggregates[c]:.6f}" for c in report.columns]
        )
        for label, scores in report.by_figure_type.items():
            writer.writerow(
                [f"figure_type:{label}", scores["n"]]
                + [f"{scores[c]:.6f}" for c in report.columns]
            )
        for label, scores in report.by_qa_flags.items():
            writer.writerow(
                [f"qa_flags:{label}", scores["n"]]
                + [f"{scores[c]:.6f}" for c in report.columns]
            )


def write_per_instance_csv(report: MetricReport, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["instance_id"] + [COLUMN_TITLES[c] for c in report.columns])
        for row in report.per_instance:
            writer.writerow(
                [row["instance_id"]] + [f"{row[c]:.6f}" for c in report.columns]
            )
