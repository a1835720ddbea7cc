"""Python bindings for the slicesim RAN slicing simulator."""

import json

from ._slicesim import (
    ConfigError,
    SliceEnv,
    __version__,
    config_hash,
    derive_seed,
    gini,
    main,
    q_function,
    replay,
)
from ._slicesim import case_study as _case_study
from ._slicesim import default_config as _default_config


def default_config():
    return json.loads(_default_config())


def case_study(checkpoint, seed=1, spike=True, config=None):
    text = "" if config is None else json.dumps(config)
    return json.loads(_case_study(str(checkpoint), seed, spike, text))


__all__ = [
    "ConfigError",
    "SliceEnv",
    "__version__",
    "case_study",
    "config_hash",
    "default_config",
    "derive_seed",
    "gini",
    "main",
    "q_function",
    "replay",
]
