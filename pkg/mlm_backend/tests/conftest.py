import json
import socket
import threading
import time

import pytest
import torch
import uvicorn
from transformers import BertConfig, BertForMaskedLM

from mlm_backend.config import BackendConfig
from mlm_backend.scorer import MaskedWordScorer
from mlm_backend.service import create_app

# Whole words cover the wire-protocol suite tokens and the scale-sanity
# corpus; the ##-pieces give some words multi-subtoken expansions.
WORDS = (
    ["alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta"]
    + [f"w{i:02d}" for i in range(20)]
    + ["play", "work", "game", "team"]
)
PIECES = ["##ing", "##s", "##er"]


@pytest.fixture(scope="session")
def model_dir(tmp_path_factory):
    """A real (randomly initialized, seeded) masked LM saved to disk."""
    target = tmp_path_factory.mktemp("tiny-mlm")
    vocab = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"] + WORDS + PIECES
    (target / "vocab.txt").write_text("\n".join(vocab) + "\n")
    (target / "tokenizer_config.json").write_text(json.dumps(
        {"tokenizer_class": "BertTokenizer", "do_lower_case": True}))
    config = BertConfig(
        vocab_size=len(vocab),
        hidden_size=32,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=64,
        max_position_embeddings=64,
    )
    torch.manual_seed(20240502)
    model = BertForMaskedLM(config)
    model.eval()
    model.save_pretrained(str(target))
    return target


@pytest.fixture(scope="session")
def backend_config(model_dir):
    return BackendConfig(model_id=str(model_dir), device="cpu",
                         max_batch=16, max_context=64)


@pytest.fixture(scope="session")
def scorer(backend_config):
    return MaskedWordScorer(backend_config)


@pytest.fixture(scope="session")
def service_url(backend_config, scorer):
    """The service running for real: uvicorn on an ephemeral loopback port."""
    app = create_app(backend_config, scorer)
    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.bind(("127.0.0.1", 0))
    port = sock.getsockname()[1]
    server = uvicorn.Server(uvicorn.Config(app, log_level="warning"))
    thread = threading.Thread(target=server.run, kwargs={"sockets": [sock]},
                              daemon=True)
    thread.start()
    deadline = time.monotonic() + 30
    while not server.started:
        if time.monotonic() > deadline:
            raise RuntimeError("service did not start")
        time.sleep(0.05)
    yield f"http://127.0.0.1:{port}"
    server.should_exit = True
    thread.join(timeout=10)
