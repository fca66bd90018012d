"""Token-embedding HTTP sidecar.

POST /embed returns, for each input text, the encoder's sub-word tokens and
one unit-normalized contextual embedding per token. Sequence-boundary
(special) tokens are excluded since they distort greedy matching; sub-word
pieces are served as-is. Inference is serialized behind a lock and runs in
eval mode, so identical text always yields identical vectors within a
process.
"""

from __future__ import annotations

import argparse
import threading

import torch
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel
from transformers import AutoModel, AutoTokenizer

DEFAULT_MODEL = "prajjwal1/bert-tiny"
DEFAULT_MAX_LENGTH = 512


class EmbedRequest(BaseModel):
    texts: list[str]


class EmbedResponse(BaseModel):
    tokens: list[list[str]]
    vectors: list[list[list[float]]]
    truncated: list[bool]
    model_name: str
    dim: int


class TokenEmbedder:
    """Wraps a bidirectional encoder as a text -> per-token-vectors map."""

    def __init__(self, model_name: str, max_length: int = DEFAULT_MAX_LENGTH,
                 batch_size: int = 32):
        self.model_name = model_name
        self.max_length = max_length
        self.batch_size = batch_size
        self.tokenizer = AutoTokenizer.from_pretrained(model_name)
        self.model = AutoModel.from_pretrained(model_name)
        self.model.eval()
        self.dim = int(self.model.config.hidden_size)
        self._lock = threading.Lock()

    @torch.no_grad()
    def _embed_batch(self, batch: list[str]) -> tuple[list, list, list]:
        enc = self.tokenizer(
            batch,
            return_tensors="pt",
            padding=True,
            truncation=True,
            max_length=self.max_length,
            return_special_tokens_mask=True,
        )
        hidden = self.model(
            input_ids=enc["input_ids"], attention_mask=enc["attention_mask"]
        ).last_hidden_state
        untruncated_lengths = [
            len(ids) for ids in self.tokenizer(batch, truncation=False)["input_ids"]
        ]

        tokens, vectors, truncated = [], [], []
        for i in range(len(batch)):
            keep = (enc["attention_mask"][i] == 1) & (enc["special_tokens_mask"][i] == 0)
            ids = enc["input_ids"][i][keep]
            vecs = hidden[i][keep]
            norms = vecs.norm(dim=1, keepdim=True).clamp_min(1e-12)
            vecs = vecs / norms
            tokens.append(self.tokenizer.convert_ids_to_tokens(ids.tolist()))
            vectors.append(vecs.tolist())
            truncated.append(untruncated_lengths[i] > int(enc["attention_mask"][i].sum()))
        return tokens, vectors, truncated

    def embed(self, texts: list[str]) -> tuple[list, list, list]:
        tokens, vectors, truncated = [], [], []
        with self._lock:
            for start in range(0, len(texts), self.batch_size):
                t, v, flags = self._embed_batch(texts[start : start + self.batch_size])
                tokens.extend(t)
                vectors.extend(v)
                truncated.extend(flags)
        return tokens, vectors, truncated


class _LazyEmbedder:
    """Defers model loading so a broken model path surfaces as HTTP 500."""

    def __init__(self, model_name: str, max_length: int):
        self.model_name = model_name
        self.max_length = max_length
        self._embedder: TokenEmbedder | None = None
        self._error: str | None = None
        self._lock = threading.Lock()

    def get(self) -> TokenEmbedder:
        with self._lock:
            if self._embedder is None and self._error is None:
                try:
                    self._embedder = TokenEmbedder(self.model_name, self.max_length)
                except Exception as exc:
                    self._error = f"{type(exc).__name__}: {exc}"
        if self._error is not None:
            raise HTTPException(status_code=500, detail=f"model load failure: {self._error}")
        return self._embedder


def create_app(model_name: str = DEFAULT_MODEL,
               max_length: int = DEFAULT_MAX_LENGTH) -> FastAPI:
    app = FastAPI(title="embed-service")
    lazy = _LazyEmbedder(model_name, max_length)

    @app.get("/health")
    def health():
        embedder = lazy.get()
        return {"status": "ok", "model_name": embedder.model_name, "dim": embedder.dim}

    @app.post("/embed", response_model=EmbedResponse)
    def embed(request: EmbedRequest):
        if not request.texts:
            raise HTTPException(status_code=400, detail="texts must be a nonempty list")
        embedder = lazy.get()
        tokens, vectors, truncated = embedder.embed(request.texts)
        return EmbedResponse(
            tokens=tokens,
            vectors=vectors,
            truncated=truncated,
            model_name=embedder.model_name,
            dim=embedder.dim,
        )

    return app


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--model", default=DEFAULT_MODEL,
                        help="encoder name or local model directory")
    parser.add_argument("--port", type=int, default=8900)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--max-length", type=int, default=DEFAULT_MAX_LENGTH)
    args = parser.parse_args(argv)

    import uvicorn

    uvicorn.run(create_app(args.model, args.max_length), host=args.host, port=args.port)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
