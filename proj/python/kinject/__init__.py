"""Knowledge-injection pipeline: KG matching, dual-index encoding and training stages."""

from ._core import (
    ConfigError,
    ConsistencyError,
    DataError,
    DimensionError,
    Error,
    ParseError,
    UsageError,
    Config,
    KnowledgeBase,
    ablate,
    evaluate,
    finetune,
    gen_synth,
    inject_train,
    position_code,
    pretrain,
    tokenize,
)

__all__ = [
    "ConfigError",
    "ConsistencyError",
    "DataError",
    "DimensionError",
    "Error",
    "ParseError",
    "UsageError",
    "Config",
    "KnowledgeBase",
    "ablate",
    "evaluate",
    "finetune",
    "gen_synth",
    "inject_train",
    "position_code",
    "pretrain",
    "tokenize",
]
