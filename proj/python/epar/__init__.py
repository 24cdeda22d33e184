"""Python access to the multi-hop reader: synthetic data, training, prediction."""

from ._epar import (
    ConfigError,
    IngestionError,
    Model,
    config,
    synthetic,
    tfidf_scores,
    train,
    two_hop_select,
    write_synthetic,
)

__all__ = [
    "ConfigError",
    "IngestionError",
    "Model",
    "config",
    "synthetic",
    "tfidf_scores",
    "train",
    "two_hop_select",
    "write_synthetic",
]
