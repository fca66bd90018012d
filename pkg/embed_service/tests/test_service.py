import math
import socket
import threading
import time

import pytest
from fastapi.testclient import TestClient

from embed_service import create_app


@pytest.fixture(scope="module")
def client(tiny_model_dir):
    return TestClient(create_app(tiny_model_dir, max_length=32))


def _norm(vector):
    return math.sqrt(sum(x * x for x in vector))


def test_health_reports_model_and_dim(client, tiny_model_dir):
    resp = client.get("/health")
    assert resp.status_code == 200
    body = resp.json()
    assert body["status"] == "ok"
    assert body["model_name"] == tiny_model_dir
    assert body["dim"] == 32


def test_embed_shapes(client):
    resp = client.post("/embed", json={"texts": ["hello world"]})
    assert resp.status_code == 200
    body = resp.json()
    assert len(body["tokens"]) == len(body["vectors"]) == 1
    assert len(body["tokens"][0]) >= 2
    assert len(body["tokens"][0]) == len(body["vectors"][0])
    assert all(len(vec) == body["dim"] for vec in body["vectors"][0])
    assert body["truncated"] == [False]


def test_special_tokens_excluded(client):
    body = client.post("/embed", json={"texts": ["the cat"]}).json()
    assert body["tokens"][0] == ["the", "cat"]


def test_subword_tokens_served_as_is(client):
    body = client.post("/embed", json={"texts": ["values"]}).json()
    assert body["tokens"][0] == ["value", "##s"]


def test_same_text_same_vectors(client):
    body = client.post("/embed", json={"texts": ["the chart peak", "the chart peak"]}).json()
    assert body["vectors"][0] == body["vectors"][1]
    assert body["tokens"][0] == body["tokens"][1]


def test_determinism_across_requests(client):
    first = client.post("/embed", json={"texts": ["a short test sentence"]}).json()
    second = client.post("/embed", json={"texts": ["a short test sentence"]}).json()
    assert first["vectors"] == second["vectors"]


def test_unit_norms(client):
    body = client.post("/embed", json={"texts": ["a"]}).json()
    for vec in body["vectors"][0]:
        assert abs(_norm(vec) - 1.0) <= 1e-4


def test_empty_text_yields_empty_rows(client):
    body = client.post("/embed", json={"texts": [""]}).json()
    assert body["tokens"] == [[]]
    assert body["vectors"] == [[]]


def test_empty_list_is_400(client):
    assert client.post("/embed", json={"texts": []}).status_code == 400


def test_truncation_flag(client):
    long_text = "chart " * 100
    body = client.post("/embed", json={"texts": [long_text, "short"]}).json()
    assert body["truncated"] == [True, False]
    assert len(body["tokens"][0]) <= 32


def test_batching_keeps_text_order(client):
    texts = [f"series code {i}" for i in range(50)]
    body = client.post("/embed", json={"texts": texts}).json()
    assert len(body["tokens"]) == 50
    single = client.post("/embed", json={"texts": [texts[37]]}).json()
    assert body["vectors"][37] == single["vectors"][0]


def test_model_load_failure_is_500(tmp_path):
    broken = TestClient(create_app(str(tmp_path / "nothing-here")))
    resp = broken.get("/health")
    assert resp.status_code == 500
    assert "model load failure" in resp.json()["detail"]
    assert broken.post("/embed", json={"texts": ["x"]}).status_code == 500


# --- acceptance: live HTTP service scored by the pipeline client ---------

SENTENCES = [
    "the chart peak is 42",
    "a short test sentence",
    "series code 107 reads 12 against the axis",
    "hello world",
    "the line trend is flat",
    "what is the value of the bar",
    "label of the axis",
    "the dog is in the figure",
    "a cat sits on the plot",
    "peak value 99",
    "the series is short",
    "code 5 and code 7",
    "trend reads against the label",
    "the figure is a chart",
    "bar value of 3",
    "what sentence is this",
    "hello chart world",
    "the peak of the trend",
    "axis label value",
    "a test of the series code",
]


@pytest.fixture(scope="module")
def live_server(tiny_model_dir):
    import uvicorn

    sock = socket.socket()
    sock.bind(("127.0.0.1", 0))
    port = sock.getsockname()[1]
    sock.close()

    config = uvicorn.Config(
        create_app(tiny_model_dir, max_length=64),
        host="127.0.0.1", port=port, log_level="error",
    )
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.time() + 15
    while not server.started:
        if time.time() > deadline:
            raise RuntimeError("embed service did not start")
        time.sleep(0.05)
    yield f"http://127.0.0.1:{port}"
    server.should_exit = True
    thread.join(timeout=5)


def test_acceptance_health_over_http(live_server):
    import requests

    body = requests.get(f"{live_server}/health", timeout=10).json()
    assert body["status"] == "ok"
    assert body["dim"] == 32
    print("[ACCEPTANCE] embed service /health responds: PASS")


def test_acceptance_self_bertscore_and_contracts(live_server):
    from figvqa.metrics import HttpEmbedder, bertscore

    embedder = HttpEmbedder(live_server)
    tokens, vectors = embedder.embed(SENTENCES)
    assert len(tokens) == len(vectors) == 20
    for token_row, vector_row in zip(tokens, vectors):
        assert len(token_row) == len(vector_row)
        for vec in vector_row:
            assert abs(_norm(vec) - 1.0) <= 1e-4

    for sentence in SENTENCES:
        p, r, f1 = bertscore(sentence, sentence, embedder)
        assert f1 >= 0.999, sentence
    print("[ACCEPTANCE] self-BERTScore F1 >= 0.999 on 20 sentences: PASS")
