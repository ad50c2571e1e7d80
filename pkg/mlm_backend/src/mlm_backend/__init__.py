"""Masked-LM probability service for the topicmeter wire protocol."""

from .config import BackendConfig, SUBWORD_POLICY
from .scorer import MaskedWordScorer, QueryError
from .service import create_app

__version__ = "0.1.0"
