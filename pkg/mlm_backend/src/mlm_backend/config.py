"""Environment-driven service configuration."""

from __future__ import annotations

import os
from dataclasses import dataclass

SUBWORD_POLICY = "masked-subtoken-product"


@dataclass(frozen=True)
class BackendConfig:
    model_id: str = "bert-base-uncased"
    device: str = "cpu"
    max_batch: int = 32
    max_context: int = 512
    port: int = 8100

    @classmethod
    def from_env(cls) -> "BackendConfig":
        return cls(
            model_id=os.environ.get("MODEL_ID", cls.model_id),
            device=os.environ.get("DEVICE", cls.device),
            max_batch=int(os.environ.get("MAX_BATCH", cls.max_batch)),
            max_context=int(os.environ.get("MAX_CONTEXT", cls.max_context)),
            port=int(os.environ.get("PORT", cls.port)),
        )

    @property
    def fingerprint(self) -> str:
        return f"{self.model_id}|subword={SUBWORD_POLICY}|log=e"
