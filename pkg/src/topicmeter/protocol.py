"""Wire-protocol conformance checks for masked-logprob backends.

These checks define what any backend implementation must satisfy, mock or
real. They are deliberately model-agnostic: values are checked for shape,
finiteness, sign, order preservation, and determinism, never for specific
numbers. The same suite runs against the loopback mocks and against a live
model service.
"""

from __future__ import annotations

import math

import requests

from .backends import HttpLmBackend, TargetSpec


def _post_raw(base_url: str, payload: dict, timeout: float = 60.0) -> requests.Response:
    return requests.post(base_url.rstrip("/") + "/v1/masked-logprob",
                         json=payload, timeout=timeout)


def check_health(base_url: str) -> str:
    """GET /health returns ok plus a nonempty fingerprint."""
    resp = requests.get(base_url.rstrip("/") + "/health", timeout=60.0)
    assert resp.status_code == 200, f"health returned {resp.status_code}"
    body = resp.json()
    assert body.get("status") == "ok", f"unexpected health body {body}"
    fingerprint = body.get("fingerprint")
    assert isinstance(fingerprint, str) and fingerprint, "missing fingerprint"
    return fingerprint


def check_single_query(base_url: str, tokens: list[str]) -> float:
    """A minimal one-target request returns one finite logprob <= 0."""
    payload = {
        "tokens": tokens,
        "targets": [{"target_position": 0, "masked_positions": [0]}],
    }
    resp = _post_raw(base_url, payload)
    assert resp.status_code == 200, f"got {resp.status_code}: {resp.text[:200]}"
    logprobs = resp.json()["logprobs"]
    assert len(logprobs) == 1
    value = float(logprobs[0])
    assert math.isfinite(value) and value <= 0.0, f"invalid logprob {value}"
    return value


def check_batch_order(base_url: str, tokens: list[str]) -> list[float]:
    """Batched targets come back one-per-target in request order.

    Order preservation is proved by permuting the same batch: identical
    batch shape, so values must match their reordered selves exactly.
    Single-target requests need only agree to numerical tolerance, since a
    backend may batch its arithmetic differently.
    """
    n = len(tokens)
    targets = [{"target_position": i, "masked_positions": [i]} for i in range(n)]
    resp = _post_raw(base_url, {"tokens": tokens, "targets": targets})
    assert resp.status_code == 200, f"got {resp.status_code}: {resp.text[:200]}"
    batch = [float(v) for v in resp.json()["logprobs"]]
    assert len(batch) == n, f"expected {n} logprobs, got {len(batch)}"
    reversed_resp = _post_raw(base_url, {
        "tokens": tokens, "targets": list(reversed(targets))})
    assert reversed_resp.status_code == 200
    reordered = [float(v) for v in reversed_resp.json()["logprobs"]]
    assert reordered == list(reversed(batch)), "response order does not follow targets"
    for i in range(n):
        single = _post_raw(base_url, {"tokens": tokens, "targets": [targets[i]]})
        assert single.status_code == 200
        lone = float(single.json()["logprobs"][0])
        assert abs(lone - batch[i]) <= 1e-6 + 1e-6 * abs(batch[i]), (
            f"target {i}: batched {batch[i]} vs single {lone}"
        )
    return batch


def check_determinism(base_url: str, tokens: list[str], rounds: int = 3) -> None:
    """Identical requests return identical logprobs."""
    targets = [
        {"target_position": 0, "masked_positions": [0]},
        {"target_position": len(tokens) - 1,
         "masked_positions": [0, len(tokens) - 1]},
    ]
    payload = {"tokens": tokens, "targets": targets}
    first = _post_raw(base_url, payload).json()["logprobs"]
    for _ in range(rounds - 1):
        again = _post_raw(base_url, payload).json()["logprobs"]
        assert again == first, f"nondeterministic response: {again} != {first}"


def check_values_valid(base_url: str, tokens: list[str]) -> None:
    """Every logprob over varied maskings is finite and <= 0."""
    n = len(tokens)
    targets = []
    for i in range(n):
        targets.append({"target_position": i, "masked_positions": [i]})
        for j in range(n):
            if j != i:
                targets.append({"target_position": i, "masked_positions": sorted({i, j})})
    resp = _post_raw(base_url, {"tokens": tokens, "targets": targets})
    assert resp.status_code == 200
    for value in resp.json()["logprobs"]:
        v = float(value)
        assert math.isfinite(v) and v <= 0.0, f"invalid logprob {v}"


def check_rejects_invalid(base_url: str, tokens: list[str]) -> None:
    """Malformed queries are refused with a 4xx, not mis-scored."""
    bad = [
        # target not masked
        {"tokens": tokens,
         "targets": [{"target_position": 0, "masked_positions": [1] if len(tokens) > 1 else []}]},
        # out of range
        {"tokens": tokens,
         "targets": [{"target_position": len(tokens),
                      "masked_positions": [len(tokens)]}]},
    ]
    for payload in bad:
        resp = _post_raw(base_url, payload)
        assert 400 <= resp.status_code < 500, (
            f"expected 4xx for invalid query, got {resp.status_code}"
        )


def check_client_roundtrip(base_url: str, tokens: list[str]) -> None:
    """The batching HTTP client agrees with raw requests."""
    backend = HttpLmBackend(base_url, max_batch=2)
    targets = [TargetSpec(i, frozenset({i})) for i in range(len(tokens))]
    via_client = backend.score(tokens, targets)
    raw = _post_raw(base_url, {
        "tokens": tokens,
        "targets": [t.to_dict() for t in targets],
    }).json()["logprobs"]
    assert len(via_client) == len(raw)
    for mine, theirs in zip(via_client, [float(v) for v in raw]):
        assert abs(mine - theirs) <= 1e-6 + 1e-6 * abs(theirs)
    assert backend.fingerprint


def run_conformance_suite(base_url: str, tokens: list[str] | None = None) -> dict:
    """Run every check; returns a summary of observed values."""
    tokens = tokens or ["alpha", "beta", "gamma", "delta"]
    fingerprint = check_health(base_url)
    single = check_single_query(base_url, tokens)
    batch = check_batch_order(base_url, tokens)
    check_determinism(base_url, tokens)
    check_values_valid(base_url, tokens)
    check_rejects_invalid(base_url, tokens)
    check_client_roundtrip(base_url, tokens)
    return {"fingerprint": fingerprint, "single": single, "batch": batch}
