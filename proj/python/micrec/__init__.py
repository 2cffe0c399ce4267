"""Inductive multimodal cross-domain recommendation.

Configs are plain dicts of the same keys the command-line tool accepts
(values may be any type whose str() parses, e.g. ``{"dim": 32}``).
"""

from . import _micrec
from ._micrec import (
    ConfigError,
    DataError,
    DivergenceError,
    IncompleteFeaturesError,
    MicrecError,
    VersionError,
    fused_similarity,
    load_features,
    metrics_at,
    neighbor_index,
    save_features,
    selftest,
)

__all__ = [
    "ConfigError",
    "DataError",
    "DivergenceError",
    "IncompleteFeaturesError",
    "MicrecError",
    "VersionError",
    "config_entries",
    "config_hash",
    "evaluate",
    "fused_similarity",
    "load_features",
    "metrics_at",
    "neighbor_index",
    "prepare",
    "recommend",
    "save_features",
    "selftest",
    "train",
]


def _kv(config):
    out = {}
    for k, v in config.items():
        if isinstance(v, bool):
            v = "true" if v else "false"
        out[str(k)] = str(v)
    return out


def config_hash(config):
    return _micrec.config_hash(_kv(config))


def config_entries(config):
    return dict(_micrec.config_entries(_kv(config)))


def prepare(config):
    return _micrec.prepare(_kv(config))


def train(config, state="", resume=""):
    return _micrec.train(_kv(config), str(state), str(resume))


def evaluate(checkpoint, ns=(20,), slices=("all",), data=""):
    return _micrec.evaluate(str(checkpoint), list(ns), list(slices), str(data))


def recommend(checkpoint, domain, user, top_n=10, data=""):
    return _micrec.recommend(str(checkpoint), domain, user, top_n, str(data))
