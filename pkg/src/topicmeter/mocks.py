"""Deterministic stand-in backends for offline testing.

Three mock language-model distributions:

  uniform     ln(1/V) for every query, regardless of context.
  unigram     context-independent corpus frequencies.
  pair_boost  the target's base probability is multiplied by a rule's
              boost whenever the rule's context word is visible (present
              and unmasked); the remaining words share the residual mass
              proportionally, so the distribution still sums to one while
              the boosted word's probability ratio is exactly the boost.

Both mocks run in-process and behind the real wire protocol on a loopback
HTTP server, so protocol serialization is covered by the same tests.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Sequence

from .backends import TargetSpec
from .errors import InvalidQuery, ValidationError

MOCK_KINDS = ("uniform", "unigram", "pair_boost")


@dataclass(frozen=True)
class MockLmSpec:
    kind: str
    vocabulary: tuple[str, ...] = ()
    unigram_counts: tuple[tuple[str, int], ...] = ()
    boost_rules: tuple[tuple[str, str, float], ...] = ()  # (target, context, boost)

    def __post_init__(self):
        if self.kind not in MOCK_KINDS:
            raise ValidationError(f"unknown mock kind {self.kind!r}")
        if self.kind != "uniform" and not (self.vocabulary or self.unigram_counts):
            raise ValidationError(f"{self.kind} mock needs a vocabulary or counts")
        if self.kind == "uniform" and not self.vocabulary:
            raise ValidationError("uniform mock needs a vocabulary")
        for target, context, boost in self.boost_rules:
            if boost <= 0:
                raise ValidationError(f"boost for ({target},{context}) must be > 0")

    @classmethod
    def uniform(cls, vocabulary: Sequence[str]) -> "MockLmSpec":
        return cls(kind="uniform", vocabulary=tuple(vocabulary))

    @classmethod
    def unigram(cls, counts: dict[str, int]) -> "MockLmSpec":
        return cls(
            kind="unigram",
            vocabulary=tuple(sorted(counts)),
            unigram_counts=tuple(sorted(counts.items())),
        )

    @classmethod
    def pair_boost(cls, vocabulary: Sequence[str],
                   rules: dict[tuple[str, str], float],
                   counts: dict[str, int] | None = None,
                   symmetric: bool = False) -> "MockLmSpec":
        """Boost rules are (target, context) -> multiplier; with
        ``symmetric`` every rule is mirrored so both directions boost."""
        expanded = dict(rules)
        if symmetric:
            for (t, c), m in rules.items():
                expanded.setdefault((c, t), m)
        return cls(
            kind="pair_boost",
            vocabulary=tuple(vocabulary),
            unigram_counts=tuple(sorted((counts or {}).items())),
            boost_rules=tuple(sorted((t, c, m) for (t, c), m in expanded.items())),
        )

    def fingerprint(self) -> str:
        payload = json.dumps({
            "kind": self.kind,
            "vocabulary": list(self.vocabulary),
            "unigram_counts": [list(x) for x in self.unigram_counts],
            "boost_rules": [list(x) for x in self.boost_rules],
        }, sort_keys=True).encode()
        return f"mock-{self.kind}-{hashlib.sha256(payload).hexdigest()[:16]}"

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "vocabulary": list(self.vocabulary),
            "unigram_counts": [list(x) for x in self.unigram_counts],
            "boost_rules": [list(x) for x in self.boost_rules],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MockLmSpec":
        return cls(
            kind=d["kind"],
            vocabulary=tuple(d.get("vocabulary", ())),
            unigram_counts=tuple((w, int(c)) for w, c in d.get("unigram_counts", ())),
            boost_rules=tuple((t, c, float(m)) for t, c, m in d.get("boost_rules", ())),
        )


class MockLmBackend:
    """In-process backend satisfying the masked-logprob contract."""

    def __init__(self, spec: MockLmSpec):
        self.spec = spec
        self._fingerprint = spec.fingerprint()
        counts = dict(spec.unigram_counts)
        self._vocab = tuple(spec.vocabulary) or tuple(sorted(counts))
        if spec.kind in ("unigram",) or (spec.kind == "pair_boost" and counts):
            total = sum(counts.values())
            if total <= 0 or any(c <= 0 for c in counts.values()):
                raise ValidationError("unigram counts must be positive")
            self._base = {w: counts[w] / total for w in self._vocab}
        else:
            self._base = {w: 1.0 / len(self._vocab) for w in self._vocab}
        self._rules: dict[str, list[tuple[str, float]]] = {}
        for target, context, boost in spec.boost_rules:
            self._rules.setdefault(target, []).append((context, boost))

    @property
    def fingerprint(self) -> str:
        return self._fingerprint

    def health(self) -> dict:
        return {"status": "ok", "fingerprint": self._fingerprint}

    def _boosted(self, visible: set[str]) -> dict[str, float]:
        """Boosted-word probabilities for this context (empty if none fire)."""
        out: dict[str, float] = {}
        for target, rules in self._rules.items():
            mult = 1.0
            for context_word, boost in rules:
                if context_word in visible:
                    mult *= boost
            if mult != 1.0:
                out[target] = self._base[target] * mult
        return out

    def _logprob(self, tokens: Sequence[str], target: TargetSpec) -> float:
        word = tokens[target.target_position]
        if self.spec.kind == "uniform":
            return math.log(1.0 / len(self._vocab))
        if word not in self._base:
            raise InvalidQuery(f"word {word!r} not in mock vocabulary")
        if self.spec.kind == "unigram":
            return math.log(self._base[word])
        visible = {
            tok for pos, tok in enumerate(tokens)
            if pos not in target.masked_positions
        }
        boosted = self._boosted(visible)
        if word in boosted:
            value = boosted[word]
        else:
            boosted_mass = sum(boosted.values())
            base_mass = sum(self._base[w] for w in boosted)
            if boosted_mass >= 1.0:
                raise ValidationError("boost rules allocate probability mass >= 1")
            value = self._base[word] * (1.0 - boosted_mass) / (1.0 - base_mass)
        return math.log(value)

    def score(self, tokens: Sequence[str], targets: Sequence[TargetSpec]) -> list[float]:
        tokens = list(tokens)
        n = len(tokens)
        out = []
        for t in targets:
            if not 0 <= t.target_position < n:
                raise InvalidQuery(f"target_position {t.target_position} out of range")
            if any(not 0 <= p < n for p in t.masked_positions):
                raise InvalidQuery("masked position out of range")
            if t.target_position not in t.masked_positions:
                raise InvalidQuery("target_position must be masked")
            out.append(self._logprob(tokens, t))
        return out


def serve_mock_lm(spec: MockLmSpec) -> MockLmBackend:
    return MockLmBackend(spec)


@dataclass
class MockChatScript:
    """Canned chat responses keyed by (topic_index, kind), served in order.

    ``topics`` carries the word lists so the mock can route an incoming
    prompt back to its topic; the last response of a key repeats once the
    queue is exhausted, so an always-malformed entry stays malformed.
    """

    topics: list[list[str]]
    responses: dict[tuple[int, str], list[str]]

    def __post_init__(self):
        for key, queue in self.responses.items():
            if not queue:
                raise ValidationError(f"scripted key {key} has no responses")


class MockChatClient:
    """In-process client satisfying the chat contract, with a request log."""

    def __init__(self, script: MockChatScript):
        self.script = script
        self.request_log: list[str] = []
        self._cursor: dict[tuple[int, str], int] = {}
        self._lock = threading.Lock()

    def _classify(self, prompt: str) -> tuple[int, str]:
        kind = "intrusion" if "intruders:" in prompt else "rating"
        for idx, words in enumerate(self.script.topics):
            if ", ".join(words) in prompt:
                return idx, kind
        raise LookupError(f"prompt does not match any scripted topic: {prompt[:80]}...")

    def complete(self, prompt: str) -> str:
        with self._lock:
            self.request_log.append(prompt)
            key = self._classify(prompt)
            queue = self.script.responses[key]
            i = self._cursor.get(key, 0)
            response = queue[min(i, len(queue) - 1)]
            self._cursor[key] = i + 1
            return response


def serve_mock_chat(script: MockChatScript) -> MockChatClient:
    return MockChatClient(script)


class _MockHandler(BaseHTTPRequestHandler):
    server: "LoopbackServer"

    def log_message(self, *args):  # keep test output quiet
        pass

    def _send_json(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        if self.path == "/health":
            self._send_json(200, self.server.health_payload())
        else:
            self._send_json(404, {"error": f"no route {self.path}"})

    def do_POST(self):
        length = int(self.headers.get("Content-Length", "0"))
        try:
            payload = json.loads(self.rfile.read(length) or b"{}")
        except json.JSONDecodeError:
            self._send_json(400, {"error": "invalid JSON body"})
            return
        try:
            if self.path == "/v1/masked-logprob" and self.server.lm is not None:
                self._send_json(200, self._masked_logprob(payload))
            elif self.path == "/v1/chat/completions" and self.server.chat is not None:
                self._send_json(200, self._chat(payload))
            else:
                self._send_json(404, {"error": f"no route {self.path}"})
        except (InvalidQuery, ValidationError, LookupError, KeyError, TypeError) as exc:
            self._send_json(400, {"error": str(exc)})

    def _masked_logprob(self, payload: dict) -> dict:
        tokens = payload["tokens"]
        targets = [
            TargetSpec(int(t["target_position"]), frozenset(int(p) for p in t["masked_positions"]))
            for t in payload["targets"]
        ]
        return {"logprobs": self.server.lm.score(tokens, targets)}

    def _chat(self, payload: dict) -> dict:
        prompt = payload["messages"][-1]["content"]
        content = self.server.chat.complete(prompt)
        return {"choices": [{"message": {"role": "assistant", "content": content}}]}


class LoopbackServer:
    """Mock backend behind the real wire protocol on an ephemeral port."""

    def __init__(self, lm: MockLmBackend | None = None,
                 chat: MockChatClient | None = None):
        if lm is None and chat is None:
            raise ValidationError("loopback server needs at least one mock")
        self.lm = lm
        self.chat = chat
        self._httpd = ThreadingHTTPServer(("127.0.0.1", 0), _MockHandler)
        self._httpd.lm = lm          # type: ignore[attr-defined]
        self._httpd.chat = chat      # type: ignore[attr-defined]
        self._httpd.health_payload = self.health_payload  # type: ignore[attr-defined]
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)

    def health_payload(self) -> dict:
        fingerprint = self.lm.fingerprint if self.lm is not None else "mock-chat"
        return {"status": "ok", "fingerprint": fingerprint}

    @property
    def port(self) -> int:
        return self._httpd.server_address[1]

    @property
    def url(self) -> str:
        return f"http://127.0.0.1:{self.port}"

    def start(self) -> "LoopbackServer":
        if not self._thread.is_alive():
            self._thread.start()
        return self

    def close(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()

    def __enter__(self) -> "LoopbackServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.close()


def serve_mock_lm_http(spec: MockLmSpec) -> LoopbackServer:
    return LoopbackServer(lm=MockLmBackend(spec)).start()


def serve_mock_chat_http(script: MockChatScript) -> LoopbackServer:
    return LoopbackServer(chat=MockChatClient(script)).start()


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="python -m topicmeter.mocks",
        description="Serve a mock masked-LM or chat backend on a loopback port.",
    )
    parser.add_argument("--lm-spec", help="path to a MockLmSpec JSON file")
    parser.add_argument("--chat-script", help="path to a chat script JSON file "
                        "({topics: [[...]], responses: {'idx:kind': [...]}})")
    args = parser.parse_args(argv)
    lm = chat = None
    if args.lm_spec:
        with open(args.lm_spec) as fh:
            lm = MockLmBackend(MockLmSpec.from_dict(json.load(fh)))
    if args.chat_script:
        with open(args.chat_script) as fh:
            raw = json.load(fh)
        responses = {
            (int(k.split(":")[0]), k.split(":")[1]): v
            for k, v in raw["responses"].items()
        }
        chat = MockChatClient(MockChatScript(topics=raw["topics"], responses=responses))
    server = LoopbackServer(lm=lm, chat=chat).start()
    print(server.url, flush=True)
    try:
        threading.Event().wait()
    except KeyboardInterrupt:
        server.close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
