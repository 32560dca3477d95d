"""Python access to the persona-dialogue harness.

Thin wrappers over the native core: pipeline stages, the overlap metrics,
guess parsing and the identification scores.
"""

import json
from pathlib import Path

from . import _core
from ._core import (
    STAGES,
    ConfigError,
    HarnessError,
    MissingArtifactError,
    ReferentialError,
    RunConfig,
    SchemaError,
    TransportError,
    bleu1,
    macro_scores,
    meteor_lite,
    parse_guess,
    porter_stem,
    rouge1,
    tokens,
)

__all__ = [
    "STAGES", "ConfigError", "HarnessError", "MissingArtifactError", "ReferentialError", "RunConfig",
    "SchemaError", "TransportError", "bleu1", "load_config", "macro_scores", "meteor_lite", "parse_guess",
    "porter_stem", "rouge1", "run_all", "run_stage", "split_corpus", "tokens",
]


def load_config(path, *, seed=None, out=None, endpoints=(), offline=None):
    """Reads a run config. `endpoints` takes "name=url" overrides, like --endpoint."""
    return _core.load_config(Path(path), seed, None if out is None else Path(out), list(endpoints), offline)


def run_stage(stage, config, *, disclosures=(), judge=None, arm=None, slice=()):
    """Runs one stage and returns its summary (outputs, problems, notes, counts, text)."""
    return json.loads(_core.run_stage(stage, config, list(disclosures), judge, arm, list(slice)))


def run_all(config):
    return json.loads(_core.run_all(config))


def split_corpus(profiles, dialogues, seed, ratio=(0.8, 0.1, 0.1)):
    return json.loads(_core.split_corpus(Path(profiles), Path(dialogues), seed, list(ratio)))
