"""Combining per-backend prediction sets.

Two strategies: figure-type routing (each figure type is answered by the
backend that earned it) and majority voting with a fixed priority order for
ties. The per-type exact-match table is the evidence used to pick routes.
"""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .answers import Prediction
from .dataset import QARecord
from .metrics import exact_match, normalize_exact
from .tables import format_table


class EnsembleError(ValueError):
    pass


@dataclass
class RoutingTable:
    mapping: dict[str, str] = field(default_factory=dict)
    default_backend: str = ""

    def backends_used(self) -> set[str]:
        return set(self.mapping.values()) | {self.default_backend}


def load_routing(path: str | Path) -> RoutingTable:
    """Parse a key=value routing file; a `default=` line is required."""
    table = RoutingTable()
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise EnsembleError(f"{path}: line {lineno}: expected figure_type=backend")
            key, value = line.split("=", 1)
            key, value = key.strip(), value.strip()
            if not value:
                raise EnsembleError(f"{path}: line {lineno}: empty backend name")
            if key == "default":
                table.default_backend = value
            else:
                table.mapping[key] = value
    if not table.default_backend:
        raise EnsembleError(f"{path}: missing default= line")
    return table


def validate_routing(table: RoutingTable, known_backends: set[str]) -> None:
    unknown = sorted(table.backends_used() - known_backends)
    if unknown:
        raise EnsembleError(f"routing table names unknown backends: {unknown}")


def route(record: QARecord, table: RoutingTable) -> str:
    return table.mapping.get(record.figure_type, table.default_backend)


def ensemble_predictions(
    per_backend: Mapping[str, Mapping[str, str]],
    records: list[QARecord],
    table: RoutingTable,
) -> list[Prediction]:
    """One prediction per record, drawn from its routed backend."""
    combined = []
    for record in records:
        backend = route(record, table)
        answers = per_backend.get(backend)
        if answers is None or record.instance_id not in answers:
            raise EnsembleError(
                f"no prediction for instance {record.instance_id} from routed backend {backend}"
            )
        combined.append(
            Prediction(
                instance_id=record.instance_id,
                answer=answers[record.instance_id],
                backend_name=backend,
            )
        )
    return combined


def majority_vote(
    per_backend: Mapping[str, Mapping[str, str]],
    records: list[QARecord],
    priority: list[str] | None = None,
) -> list[Prediction]:
    """Modal answer per record after trim+casefold normalization.

    Ties are broken by the priority list (defaults to sorted backend names);
    the emitted text is the highest-priority voter's original answer.
    """
    if len(per_backend) < 2:
        raise EnsembleError("majority voting needs at least 2 backends")
    if priority is None:
        priority = sorted(per_backend)
    missing_priority = sorted(set(per_backend) - set(priority))
    if missing_priority:
        raise EnsembleError(f"priority list missing backends: {missing_priority}")

    combined = []
    for record in records:
        votes: dict[str, str] = {}
        for backend in priority:
            answers = per_backend.get(backend)
            if answers is None or record.instance_id not in answers:
                raise EnsembleError(
                    f"no prediction for instance {record.instance_id} from backend {backend}"
                )
            votes[backend] = answers[record.instance_id]
        counts = Counter(normalize_exact(a) for a in votes.values())
        best_count = max(counts.values())
        tied = {form for form, c in counts.items() if c == best_count}
        winner = next(b for b in priority if normalize_exact(votes[b]) in tied)
        combined.append(
            Prediction(
                instance_id=record.instance_id,
                answer=votes[winner],
                backend_name=winner,
            )
        )
    return combined


@dataclass(frozen=True)
class ExactMatchCell:
    figure_type: str
    backend_name: str
    accuracy_mean: float  # percent
    accuracy_std: float   # percent, population std of the 0/1 indicator
    n: int


def exact_match_table(
    per_backend: Mapping[str, Mapping[str, str]],
    gold_records: list[QARecord],
) -> list[ExactMatchCell]:
    """Per (figure_type, backend) exact-match mean and std, in percent.

    The std is fully determined by the mean (population std of a Bernoulli
    indicator: 100 * sqrt(p * (1 - p))); both are reported to 2 decimals.
    """
    missing_gold = sorted(r.instance_id for r in gold_records if r.gold_answer is None)
    if missing_gold:
        raise EnsembleError(f"gold records without gold_answer: {missing_gold[:5]}")

    by_type: dict[str, list[QARecord]] = {}
    for record in gold_records:
        by_type.setdefault(record.figure_type, []).append(record)

    cells = []
    for figure_type in sorted(by_type):
        group = by_type[figure_type]
        for backend in sorted(per_backend):
            answers = per_backend[backend]
            matches = 0
            for record in group:
                if record.instance_id not in answers:
                    raise EnsembleError(
                        f"no prediction for instance {record.instance_id} from backend {backend}"
                    )
                if exact_match(answers[record.instance_id], record.gold_answer):
                    matches += 1
            p = matches / len(group)
            cells.append(
                ExactMatchCell(
                    figure_type=figure_type,
                    backend_name=backend,
                    accuracy_mean=round(100.0 * p, 2),
                    accuracy_std=round(100.0 * math.sqrt(p * (1.0 - p)), 2),
                    n=len(group),
                )
            )
    return cells


def render_exact_match_table(cells: list[ExactMatchCell]) -> str:
    backends = sorted({c.backend_name for c in cells})
    by_key = {(c.figure_type, c.backend_name): c for c in cells}
    headers = ["figure_type", "n"]
    for backend in backends:
        headers += [f"{backend} acc", f"{backend} std"]
    rows = []
    for figure_type in sorted({c.figure_type for c in cells}):
        first = next(c for c in cells if c.figure_type == figure_type)
        row = [figure_type, str(first.n)]
        for backend in backends:
            cell = by_key.get((figure_type, backend))
            row += ["-", "-"] if cell is None else [f"{cell.accuracy_mean:.2f}", f"{cell.accuracy_std:.2f}"]
        rows.append(row)
    return format_table(headers, rows) + "\n"


def write_exact_match_csv(cells: list[ExactMatchCell], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["figure_type", "backend", "accuracy_mean", "accuracy_std", "n"])
        for cell in cells:
            writer.writerow(
                [cell.figure_type, cell.backend_name,
                 f"{cell.accuracy_mean:.2f}", f"{cell.accuracy_std:.2f}", cell.n]
            )
