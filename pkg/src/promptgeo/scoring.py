"""Detection scores over embedded samples.

Two score functions:

* mcm:   max_k softmax_k(cos(f_global, g)/tau)
* glmcm: the mcm term plus max over local regions of the per-region max
         softmax probability

Higher score means more ID-like. Thresholding is inclusive: score >= eta
is called ID.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import kernels
from .embedstore import Dataset
from .encoder import SurrogateEncoder, encode_all
from .errors import ConfigError
from .regions import SoftmaxConfig
from .subspace import PromptMatrix

SCORE_METHODS = ("mcm", "glmcm")


def mcm_score(global_feat: np.ndarray, text_feats: np.ndarray, tau: float) -> float:
    """Max softmax probability of the global feature."""
    P = kernels.cosine_softmax(
        np.asarray(global_feat, dtype=np.float64)[None, :],
        np.asarray(text_feats, dtype=np.float64),
        tau,
    )
    return float(P[0].max())


def glmcm_score(
    global_feat: np.ndarray,
    local_feats: np.ndarray,
    text_feats: np.ndarray,
    tau: float,
) -> float:
    """mcm score plus the best per-region max softmax probability."""
    G = np.asarray(text_feats, dtype=np.float64)
    Pl = kernels.cosine_softmax(np.asarray(local_feats, dtype=np.float64), G, tau)
    return mcm_score(global_feat, G, tau) + float(Pl.max())


def detect(scores: np.ndarray, eta: float) -> np.ndarray:
    """Boolean ID mask; the threshold itself counts as ID."""
    return np.asarray(scores, dtype=np.float64) >= eta


@dataclass(frozen=True)
class ScoredSample:
    sample_index: int
    source: str  # typically "id" or "ood"
    score: float
    predicted_class: int


def score_dataset(
    ds: Dataset,
    pm: PromptMatrix,
    enc: SurrogateEncoder,
    cfg: SoftmaxConfig,
    method: str = "glmcm",
) -> tuple[np.ndarray, np.ndarray]:
    """(scores, predicted_classes) over every record, in file order.

    The predicted class is the argmax of the global softmax regardless of
    the score method.
    """
    if method not in SCORE_METHODS:
        raise ConfigError(f"score method must be one of {SCORE_METHODS}, got {method!r}")
    G = encode_all(enc, pm, ds.classes)
    N = ds.header.N
    if N == 0:
        return np.zeros(0), np.zeros(0, dtype=np.int64)
    Pg = kernels.cosine_softmax(ds.global_feats, G, cfg.tau)
    scores = Pg.max(axis=1)
    predicted = Pg.argmax(axis=1).astype(np.int64)
    if method == "glmcm":
        if ds.local_feats is None:
            raise ConfigError("glmcm scoring needs local features; this file has none")
        N_, R, D = ds.local_feats.shape
        Pl = kernels.cosine_softmax(
            np.ascontiguousarray(ds.local_feats.reshape(N_ * R, D)), G, cfg.tau
        )
        scores = scores + Pl.reshape(N_, R, -1).max(axis=(1, 2))
    return scores, predicted


def as_scored_samples(
    scores: np.ndarray, predicted: np.ndarray, source: str
) -> list[ScoredSample]:
    return [
        ScoredSample(i, source, float(s), int(p))
        for i, (s, p) in enumerate(zip(scores, predicted))
    ]


def write_scores_csv(path, samples: list[ScoredSample]) -> None:
    """CSV with header sample_index,source,score,predicted_class."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_index", "source", "score", "predicted_class"])
        for s in samples:
            w.writerow([s.sample_index, s.source, repr(s.score), s.predicted_class])
