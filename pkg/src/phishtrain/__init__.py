"""Adaptive phishing-training engine: an instance-based learning model with
embedding-based partial matching, adaptive email selection, a simulation and
analysis toolkit, and an interactive training service."""

from .ibl import (
    HAM,
    PHISHING,
    ChoiceMode,
    IBLParams,
    Instance,
    MemoryStore,
)

__version__ = "0.1.0"

__all__ = [
    "HAM",
    "PHISHING",
    "ChoiceMode",
    "IBLParams",
    "Instance",
    "MemoryStore",
]
