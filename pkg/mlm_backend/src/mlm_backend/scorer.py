"""Masked-word probability scoring over a pretrained bidirectional LM.

Words map to subtoken spans; a query's probability is the product of its
target word's subtoken probabilities with every masked word's entire span
replaced by the mask symbol (policy "masked-subtoken-product"). Natural-log
units throughout. Inputs longer than the context limit are truncated from
the right and flagged; a query touching a truncated position is an error.
"""

from __future__ import annotations

import torch
from transformers import AutoModelForMaskedLM, AutoTokenizer

from .config import BackendConfig


class QueryError(ValueError):
    """Client-side problem with a scoring request (HTTP 400)."""


class MaskedWordScorer:
    def __init__(self, config: BackendConfig):
        self.config = config
        self.tokenizer = AutoTokenizer.from_pretrained(config.model_id)
        self.model = AutoModelForMaskedLM.from_pretrained(config.model_id)
        self.model.to(config.device)
        self.model.eval()
        if self.tokenizer.mask_token_id is None:
            raise RuntimeError(f"{config.model_id} has no mask token; not a masked LM")
        self._subtoken_cache: dict[str, list[int]] = {}

    @property
    def fingerprint(self) -> str:
        return self.config.fingerprint

    def _subtokens(self, word: str) -> list[int]:
        ids = self._subtoken_cache.get(word)
        if ids is None:
            ids = self.tokenizer.encode(word, add_special_tokens=False)
            if not ids:
                ids = [self.tokenizer.unk_token_id]
            self._subtoken_cache[word] = ids
        return ids

    def _layout(self, tokens: list[str]) -> tuple[list[int], list[tuple[int, int]], bool]:
        """Flatten words to subtokens with [CLS]/[SEP]; truncate from the right.

        Returns (input ids, per-word (start, end) spans, truncated flag);
        spans of truncated words are marked (-1, -1).
        """
        cls_id = self.tokenizer.cls_token_id
        sep_id = self.tokenizer.sep_token_id
        budget = self.config.max_context - 2
        ids: list[int] = [cls_id]
        spans: list[tuple[int, int]] = []
        truncated = False
        used = 0
        for word in tokens:
            sub = self._subtokens(word)
            if truncated or used + len(sub) > budget:
                truncated = True
                spans.append((-1, -1))
                continue
            spans.append((len(ids), len(ids) + len(sub)))
            ids.extend(sub)
            used += len(sub)
        ids.append(sep_id)
        return ids, spans, truncated

    def score(self, tokens: list[str],
              targets: list[dict]) -> tuple[list[float], bool]:
        """One natural-log probability per target, order preserving."""
        if not tokens:
            raise QueryError("tokens must be nonempty")
        n = len(tokens)
        for t in targets:
            pos = t["target_position"]
            masked = t["masked_positions"]
            if not isinstance(pos, int) or not 0 <= pos < n:
                raise QueryError(f"target_position {pos} out of range 0..{n - 1}")
            if any(not isinstance(p, int) or not 0 <= p < n for p in masked):
                raise QueryError("masked position out of range")
            if pos not in masked:
                raise QueryError("target_position must be in masked_positions")

        ids, spans, truncated = self._layout(tokens)
        if all(span == (-1, -1) for span in spans):
            raise QueryError("no word fits within the context limit")
        for t in targets:
            touched = [t["target_position"], *t["masked_positions"]]
            if any(spans[p] == (-1, -1) for p in touched):
                raise QueryError(
                    "query touches a position truncated away by the context limit")

        mask_id = self.tokenizer.mask_token_id
        logprobs: list[float] = []
        for start in range(0, len(targets), self.config.max_batch):
            chunk = targets[start:start + self.config.max_batch]
            rows = []
            for t in chunk:
                row = list(ids)
                for p in set(t["masked_positions"]):
                    lo, hi = spans[p]
                    for i in range(lo, hi):
                        row[i] = mask_id
                rows.append(row)
            batch = torch.tensor(rows, dtype=torch.long, device=self.config.device)
            with torch.no_grad():
                logits = self.model(input_ids=batch).logits
                log_probs = torch.log_softmax(logits.double(), dim=-1)
            for r, t in enumerate(chunk):
                lo, hi = spans[t["target_position"]]
                total = 0.0
                for i in range(lo, hi):
                    total += float(log_probs[r, i, ids[i]])
                logprobs.append(min(total, 0.0))
        return logprobs, truncated
