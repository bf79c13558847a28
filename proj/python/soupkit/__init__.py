# Copyright (c) 2026, The soupkit Authors
# SPDX-License-Identifier: Apache-2.0
#
# Python interface to the soupkit core library.

from ._core import (
    Checkpoint,
    Dataset,
    LinearModel,
    LogitModel,
    Mlp,
    SoupkitError,
    Split,
    combine,
    dataset_config,
    ece,
    evaluate_logits,
    finetune,
    fit_temperature,
    generate,
    greedy_soup,
    hyper_config,
    interpolation_curve,
    learned_soup,
    logit_ensemble,
    pretrain,
    soup_vs_ensemble_approx,
    uniform_soup,
)

__version__ = "0.1.0"

__all__ = [
    "Checkpoint",
    "Dataset",
    "LinearModel",
    "LogitModel",
    "Mlp",
    "SoupkitError",
    "Split",
    "combine",
    "dataset_config",
    "ece",
    "evaluate_logits",
    "finetune",
    "fit_temperature",
    "generate",
    "greedy_soup",
    "hyper_config",
    "interpolation_curve",
    "learned_soup",
    "logit_ensemble",
    "pretrain",
    "soup_vs_ensemble_approx",
    "uniform_soup",
]
