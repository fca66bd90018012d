"""Batch execution of a prompting mode over a record set.

This is the only concurrent part of the pipeline: up to `parallelism`
records are in flight at once, each worker issuing its requests
sequentially. Results always come back in input order, failures are
collected per record instead of aborting the run, and every raw output
lands in a line-delimited file that downstream stages replay from.
"""

from __future__ import annotations

import json
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path

from . import prompts
from .backend import BackendConfig, BackendError, ResponseCache, Turn, chat
from .dataset import QARecord

SINGLE_MODES = ("baseline1", "baseline2", "single")
ALL_MODES = SINGLE_MODES + ("cot",)


class OrchestratorError(RuntimeError):
    pass


@dataclass
class RawItem:
    instance_id: str
    mode: str
    backend_name: str
    step1_text: str | None
    raw_text: str
    fingerprint: str


@dataclass
class RunFailure:
    instance_id: str
    error: str


@dataclass
class RunManifest:
    run_id: str
    backend_name: str
    mode: str
    record_count: int
    failed_count: int
    started: str
    finished: str
    parallelism: int
    network_requests: int
    cache_hits: int


@dataclass
class RunOutcome:
    items: list[RawItem]
    failures: list[RunFailure]
    manifest: RunManifest


def _image_for(record: QARecord) -> str | None:
    return record.figure_path or None


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _execute(
    records: list[QARecord],
    config: BackendConfig,
    mode: str,
    cache: ResponseCache,
    parallelism: int,
    offline: bool,
    run_id: str | None,
) -> RunOutcome:
    if parallelism < 1:
        raise OrchestratorError("parallelism must be >= 1")
    started = _utcnow()

    def one(record: QARecord) -> tuple[RawItem | None, RunFailure | None, int, int]:
        network = 0
        cache_hits = 0
        try:
            if mode == "cot":
                bundle = prompts.render_cot(record)
                step1 = chat(
                    config,
                    [Turn("user", bundle.step1_text, image=_image_for(record))],
                    cache,
                    offline=offline,
                )
                network += 0 if step1.from_cache else 1
                cache_hits += 1 if step1.from_cache else 0
                step2_text = f"Previous analysis:\n{step1.text}\n{bundle.step2_text}"
                step2 = chat(
                    config,
                    [Turn("user", step2_text, image=_image_for(record))],
                    cache,
                    offline=offline,
                )
                network += 0 if step2.from_cache else 1
                cache_hits += 1 if step2.from_cache else 0
                item = RawItem(
                    instance_id=record.instance_id,
                    mode=mode,
                    backend_name=config.name,
                    step1_text=step1.text,
                    raw_text=step2.text,
                    fingerprint=step2.request_fingerprint,
                )
            else:
                bundle = prompts.render(record, mode)
                response = chat(
                    config,
                    [Turn("user", bundle.step2_text, image=_image_for(record))],
                    cache,
                    offline=offline,
                )
                network += 0 if response.from_cache else 1
                cache_hits += 1 if response.from_cache else 0
                item = RawItem(
                    instance_id=record.instance_id,
                    mode=mode,
                    backend_name=config.name,
                    step1_text=None,
                    raw_text=response.text,
                    fingerprint=response.request_fingerprint,
                )
            return item, None, network, cache_hits
        except (BackendError, prompts.PromptError) as exc:
            return None, RunFailure(record.instance_id, f"{type(exc).__name__}: {exc}"), network, cache_hits

    if parallelism == 1:
        results = [one(r) for r in records]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(one, records))

    items = [item for item, _f, _n, _c in results if item is not None]
    failures = [failure for _i, failure, _n, _c in results if failure is not None]
    if records and not items:
        raise OrchestratorError(
            f"all {len(records)} records failed; first error: {failures[0].error}"
        )
    manifest = RunManifest(
        run_id=run_id or f"{config.name}-{mode}-{uuid.uuid4().hex[:8]}",
        backend_name=config.name,
        mode=mode,
        record_count=len(items),
        failed_count=len(failures),
        started=started,
        finished=_utcnow(),
        parallelism=parallelism,
        network_requests=sum(n for _i, _f, n, _c in results),
        cache_hits=sum(c for _i, _f, _n, c in results),
    )
    return RunOutcome(items=items, failures=failures, manifest=manifest)


def run_single(
    records: list[QARecord],
    config: BackendConfig,
    mode: str,
    cache: ResponseCache,
    parallelism: int = 1,
    offline: bool = False,
    run_id: str | None = None,
) -> RunOutcome:
    """One request per record under a one-shot mode."""
    if mode not in SINGLE_MODES:
        raise OrchestratorError(f"run_single cannot handle mode {mode!r}")
    return _execute(records, config, mode, cache, parallelism, offline, run_id)


def run_cot(
    records: list[QARecord],
    config: BackendConfig,
    cache: ResponseCache,
    parallelism: int = 1,
    offline: bool = False,
    run_id: str | None = None,
) -> RunOutcome:
    """Two requests per record: analysis, then inference over the analysis.

    The step-1 output is spliced into the step-2 user turn verbatim and also
    persisted on the raw item. A step-1 failure skips step 2 for that record.
    """
    return _execute(records, config, "cot", cache, parallelism, offline, run_id)


def write_raw_items(items: list[RawItem], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for item in items:
            fh.write(json.dumps(asdict(item), ensure_ascii=False) + "\n")


def read_raw_items(path: str | Path) -> list[RawItem]:
    items = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                items.append(RawItem(**json.loads(line)))
    return items


def write_failures(failures: list[RunFailure], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for failure in failures:
            fh.write(json.dumps(asdict(failure), ensure_ascii=False) + "\n")


def write_manifest(manifest: RunManifest, path: str | Path) -> None:
    Path(path).write_text(json.dumps(asdict(manifest), indent=2) + "\n", encoding="utf-8")


def pending_records(records: list[QARecord], existing: list[RawItem]) -> list[QARecord]:
    """Records not yet covered by a previous run's raw items (for --resume)."""
    done = {item.instance_id for item in existing}
    return [r for r in records if r.instance_id not in done]


def merge_items(
    records: list[QARecord], existing: list[RawItem], fresh: list[RawItem]
) -> list[RawItem]:
    """Stitch resumed results back into dataset order."""
    by_id = {item.instance_id: item for item in existing}
    by_id.update({item.instance_id: item for item in fresh})
    return [by_id[r.instance_id] for r in records if r.instance_id in by_id]
