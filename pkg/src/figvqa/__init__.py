"""figvqa: prompted VQA over scientific figures.

Pipeline stages: dataset loading -> prompt rendering -> batched inference
against OpenAI-compatible vision endpoints -> answer post-processing ->
ensembling -> ROUGE / BERTScore / exact-match evaluation.
"""

from .answers import Prediction, extract_answer, postprocess, process_raw
from .backend import BackendConfig, ModelResponse, ResponseCache, Turn, chat, probe
from .dataset import QAFlags, QARecord, SplitStats, compute_stats, load_split
from .ensemble import RoutingTable, ensemble_predictions, exact_match_table, majority_vote, route
from .metrics import MetricOptions, MetricReport, bertscore, evaluate, rouge1, rougeL, tokenize
from .orchestrator import RunManifest, run_cot, run_single
from .prompts import PromptBundle, figure_type_block, render_baseline, render_cot, render_single

__version__ = "0.1.0"

__all__ = [
    "BackendConfig",
    "MetricOptions",
    "MetricReport",
    "ModelResponse",
    "Prediction",
    "PromptBundle",
    "QAFlags",
    "QARecord",
    "ResponseCache",
    "RoutingTable",
    "RunManifest",
    "SplitStats",
    "Turn",
    "bertscore",
    "chat",
    "compute_stats",
    "ensemble_predictions",
    "evaluate",
    "exact_match_table",
    "extract_answer",
    "figure_type_block",
    "load_split",
    "majority_vote",
    "postprocess",
    "probe",
    "process_raw",
    "render_baseline",
    "render_cot",
    "render_single",
    "rouge1",
    "rougeL",
    "route",
    "run_cot",
    "run_single",
    "tokenize",
]
