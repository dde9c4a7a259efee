# Copyright 2026 The edpo-lab Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Adaptive-beta preference optimization lab."""

import json as _json

from . import _edpo
from ._edpo import (
    ConfigError,
    InternalError,
    NoRunsFound,
    ParseError,
    RuntimeFailure,
    config_hash,
    dpo_loss,
    dpo_loss_dz,
    epsilon_grid,
    estimated_perturbed_logprob,
    gen_data,
    interpolate_logits,
    mean_beta,
    perturbed_betas,
    preference_prob,
    select_beta,
    sweep,
    analyze,
)


def load_config(path):
    """Validated config with defaults filled in, as a dict."""
    return _json.loads(_edpo.load_config(str(path)))


def train(config, out, data_dir="", method=None, beta=None, eps=None, seed=None):
    """Train and evaluate one run; returns its summary.json as a dict."""
    summary = _edpo.train(str(config), str(out), str(data_dir), method, beta, eps, seed)
    with open(summary) as f:
        return _json.load(f)


__all__ = [
    "ConfigError",
    "InternalError",
    "NoRunsFound",
    "ParseError",
    "RuntimeFailure",
    "analyze",
    "config_hash",
    "dpo_loss",
    "dpo_loss_dz",
    "epsilon_grid",
    "estimated_perturbed_logprob",
    "gen_data",
    "interpolate_logits",
    "load_config",
    "mean_beta",
    "perturbed_betas",
    "preference_prob",
    "select_beta",
    "sweep",
    "train",
]
