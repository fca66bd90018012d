#!/usr/bin/env python3
"""End-to-end pipeline demo against a scripted local mock backend.

Generates a small synthetic split, serves four fake backends from one mock
endpoint (each with a different accuracy profile), runs single-shot and CoT
inference, combines predictions by figure-type routing and by majority vote,
and scores everything. No GPUs, no network, finishes in seconds.

Usage: python scripts/run_mock_pipeline.py [--out demo_out] [--n 40]
"""

from __future__ import annotations

import argparse
import base64
import hashlib
import json
import re
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from figvqa import cli
from figvqa.mockserver import MockVisionServer, last_user_text

PNG_1PX = base64.b64decode(
    "iVBORw0KGgoAAAANSUhEUgAAAAEAAAABCAYAAAAfFcSJAAAADUlEQVR42mNk"
    "YPhfDwAChwGA60e6kgAAAABJRU5ErkJggg=="
)

FIGURE_TYPES = [
    "line_chart", "bar_chart", "scatter_plot", "pie_chart", "box_plot",
    "confusion_matrix", "tree", "graph", "histogram", "venn_diagram",
]

# Per-backend probability (out of 10) of reading the chart correctly.
SKILL = {"internvl3": 8, "qwen2.5-vl": 6, "bespoke-minichart": 6, "phi-4": 5}

_CODE_RE = re.compile(r"series code (\d+)")


def make_dataset(path: Path, figure: Path, n: int) -> None:
    rows = []
    for i in range(n):
        code = 100 + i
        figure_type = FIGURE_TYPES[i % len(FIGURE_TYPES)]
        rows.append(
            {
                "instance_id": f"demo-{i:04d}",
                "figure_path": str(figure),
                "caption": f"Synthetic {figure_type.replace('_', ' ')} number {i}.",
                "figure_type": figure_type,
                "is_compound": False,
                "fig_numb": None,
                "answer_set": "infinite",
                "binary": False,
                "visual": i % 2 == 0,
                "unanswerable": False,
                "question": f"What is the peak value of series code {code}?",
                "answer_options": [],
                "gold_answer": str(code),
            }
        )
    with path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")


def scripted_model(payload: dict, hit: int) -> str:
    """Answer the series-code question, with skill depending on the model id."""
    text = last_user_text(payload)
    match = _CODE_RE.search(text)
    if match is None:
        return "OK"
    code = match.group(1)
    if "STEP 1: INITIAL ANALYSIS" in text:
        return f"The figure appears to peak where series code {code} is plotted."
    model = payload.get("model", "")
    name = model.split("/")[0].lower()
    skill = next((s for key, s in SKILL.items() if key.split("-")[0] in name), 7)
    die = int(hashlib.sha1(f"{model}:{code}".encode()).hexdigest(), 16) % 10
    answer = code if die < skill else str(int(code) + 1)
    return f"<reasoning>Peak read from the axis.</reasoning><answer>{answer}</answer>|end|"


def make_registry(path: Path, url: str) -> None:
    backends = [
        {
            "name": name,
            "base_url": url,
            "model_id": f"{name}/mock",
            "api_key_env": "",
            "max_tokens": 256,
            "timeout": 10.0,
            "max_retries": 1,
        }
        for name in SKILL
    ]
    path.write_text(json.dumps({"backends": backends}, indent=2), encoding="utf-8")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="demo_out")
    parser.add_argument("--n", type=int, default=40)
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    figure = out / "figure.png"
    figure.write_bytes(PNG_1PX)
    dataset = out / "dataset.jsonl"
    make_dataset(dataset, figure, args.n)

    routing = Path(__file__).resolve().parent.parent / "configs" / "figure_routing.txt"

    with MockVisionServer(responder=scripted_model) as server:
        registry = out / "registry.json"
        make_registry(registry, server.url)

        for name in SKILL:
            code = cli.main(
                ["run", "--dataset", str(dataset), "--backend", name,
                 "--registry", str(registry), "--mode", "single",
                 "--out", str(out), "--parallelism", "4"]
            )
            assert code == 0, f"run failed for {name}"

        # CoT for the strongest backend, to show the two-step flow.
        assert cli.main(
            ["run", "--dataset", str(dataset), "--backend", "internvl3",
             "--registry", str(registry), "--mode", "cot",
             "--out", str(out), "--parallelism", "4"]
        ) == 0

        preds = [f"{name}={out / (name + '-single.pred.jsonl')}" for name in SKILL]
        pred_flags = []
        for p in preds:
            pred_flags += ["--pred", p]

        assert cli.main(
            ["ensemble", "--dataset", str(dataset), *pred_flags,
             "--routing", str(routing), "--out", str(out / "routed.pred.jsonl")]
        ) == 0
        assert cli.main(
            ["ensemble", "--dataset", str(dataset), *pred_flags,
             "--vote", "--out", str(out / "voted.pred.jsonl")]
        ) == 0

        for label, pred_file in [
            ("internvl3 single", out / "internvl3-single.pred.jsonl"),
            ("internvl3 cot", out / "internvl3-cot.pred.jsonl"),
            ("routed ensemble", out / "routed.pred.jsonl"),
            ("majority vote", out / "voted.pred.jsonl"),
        ]:
            print(f"\n=== eval: {label} ===")
            assert cli.main(
                ["eval", "--predictions", str(pred_file), "--gold", str(dataset),
                 "--metrics", "rouge,exact", "--out", str(out / "eval" / label.replace(" ", "_"))]
            ) == 0

        print("\n=== breakdown: routed ensemble ===")
        assert cli.main(
            ["breakdown", "--predictions", str(out / "routed.pred.jsonl"),
             "--gold", str(dataset), "--out", str(out / "triage")]
        ) == 0

    print(f"\nmock backend served {server.hits} requests; artifacts in {out}/")
    return 0


if __name__ == "__main__":
    sys.exit(main())
