"""Rank-based split of local regions into ID-relevant and ID-irrelevant sets.

A local feature whose true class falls outside the top C of its softmax
ranking is treated as background (set J); the rest are foreground (J').
Rank uses strictly-greater counting, so ties with the true class do not
push it down.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigError


def default_rank_threshold(K: int) -> int:
    """C = 100 for large label sets, else K/5 floored, never below 1."""
    if K >= 200:
        return 100
    return max(1, K // 5)


@dataclass(frozen=True)
class SoftmaxConfig:
    tau: float = 0.01
    C: int | None = None  # None -> default_rank_threshold(K) at use site

    def __post_init__(self):
        if not np.isfinite(self.tau) or self.tau <= 0.0:
            raise ConfigError(f"temperature must be finite and positive, got {self.tau}")
        if self.C is not None and self.C < 0:
            raise ConfigError(f"rank threshold must be >= 0, got {self.C}")

    def rank_threshold(self, K: int) -> int:
        return default_rank_threshold(K) if self.C is None else self.C


@dataclass(frozen=True)
class RegionPartition:
    """Index arrays into the region axis; J ∪ J' covers 0..total-1."""

    J: np.ndarray  # ID-irrelevant (background) region indices, sorted
    J_prime: np.ndarray  # ID-relevant region indices, sorted
    total: int


def class_probs(feats: np.ndarray, text_feats: np.ndarray, cfg: SoftmaxConfig) -> np.ndarray:
    """Softmax over cosine similarities at temperature tau, row-wise.

    `feats` is (R, D) or (D,); output matches with a trailing K axis.
    """
    feats = np.asarray(feats, dtype=np.float64)
    single = feats.ndim == 1
    if single:
        feats = feats[None, :]
    P = kernels.cosine_softmax(feats, np.asarray(text_feats, dtype=np.float64), cfg.tau)
    return P[0] if single else P


def rank_of_true(probs: np.ndarray, y: int) -> np.ndarray:
    """1 + count of classes with strictly greater probability, per row."""
    probs = np.asarray(probs, dtype=np.float64)
    single = probs.ndim == 1
    if single:
        probs = probs[None, :]
    ranks = 1 + np.sum(probs > probs[:, y][:, None], axis=1)
    return int(ranks[0]) if single else ranks


def partition_regions(
    local_feats: np.ndarray, text_feats: np.ndarray, y: int, cfg: SoftmaxConfig
) -> RegionPartition:
    """Split the R local features of one labeled sample by true-class rank.

    Regions with rank > C go to J, the rest to J'. C = 0 sends everything
    to J; C >= K sends everything to J'.
    """
    local_feats = np.asarray(local_feats, dtype=np.float64)
    if local_feats.ndim != 2:
        raise ConfigError(f"local features must be R x D, got shape {local_feats.shape}")
    K = text_feats.shape[0]
    if not (0 <= y < K):
        raise ConfigError(f"label {y} out of range for {K} classes")
    C = cfg.rank_threshold(K)
    P = class_probs(local_feats, text_feats, cfg)
    ranks = rank_of_true(P, y)
    in_J = ranks > C
    idx = np.arange(local_feats.shape[0])
    return RegionPartition(J=idx[in_J], J_prime=idx[~in_J], total=local_feats.shape[0])
