# Copyright 2026 The PRDP Lab Authors
# SPDX-License-Identifier: Apache-2.0
"""Reward-difference finetuning of toy diffusion models."""

from ._core import (
    Checkpoint,
    Config,
    RunResult,
    TabularModel,
    evaluate,
    load_checkpoint,
    pretrain_reference,
    run_training,
    verify,
)

__all__ = [
    "Checkpoint",
    "Config",
    "RunResult",
    "TabularModel",
    "evaluate",
    "load_checkpoint",
    "pretrain_reference",
    "run_training",
    "verify",
]
