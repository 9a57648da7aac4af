"""Threshold-free detection metrics, computed exactly.

No interpolation anywhere: FPR@95TPR picks the largest threshold eta among
the distinct ID scores whose inclusive TPR reaches 0.95, using integer
comparisons; AUROC is the exact sampled rank statistic with half credit for
ties, evaluated as an integer ratio.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, EmptySetError


def _clean(scores, name: str) -> np.ndarray:
    s = np.asarray(scores, dtype=np.float64).ravel()
    if s.size == 0:
        raise EmptySetError(f"{name} score set is empty")
    if np.isnan(s).any():
        raise DataError(f"{name} scores contain NaN")
    return s


def fpr_at_95_tpr(id_scores, ood_scores) -> tuple[float, float]:
    """(FPR, eta) at the loosest threshold reaching 95% inclusive TPR.

    TPR(eta) = |{id >= eta}| / n. The candidate thresholds are the distinct
    ID scores; the largest one with 20*count >= 19*n wins, so no floating
    division enters the comparison.
    """
    ids = np.sort(_clean(id_scores, "ID"))
    oods = np.sort(_clean(ood_scores, "OOD"))
    n, m = ids.size, oods.size
    need = -(-19 * n // 20)  # ceil(0.95 n) via integer ceil division
    eta = float(ids[n - need])
    fpr = float(m - np.searchsorted(oods, eta, side="left")) / m
    return fpr, eta


def auroc(id_scores, ood_scores) -> float:
    """P(id > ood) + 0.5 P(id == ood) over all pairs, exactly.

    Computed as (2G + E) / (2nm) with integer pair counts G (strict wins)
    and E (ties).
    """
    ids = _clean(id_scores, "ID")
    oods = np.sort(_clean(ood_scores, "OOD"))
    n, m = ids.size, oods.size
    lo = np.searchsorted(oods, ids, side="left")
    hi = np.searchsorted(oods, ids, side="right")
    G = int(lo.sum())
    E = int((hi - lo).sum())
    return (2 * G + E) / (2 * n * m)


def id_accuracy(predicted, labels) -> float:
    predicted = np.asarray(predicted).ravel()
    labels = np.asarray(labels).ravel()
    if predicted.size == 0:
        raise EmptySetError("accuracy over zero samples is undefined")
    if predicted.shape != labels.shape:
        raise DataError("prediction/label length mismatch")
    return float(np.mean(predicted == labels))


@dataclass(frozen=True)
class DetectionReport:
    fpr95: float
    auroc: float
    eta: float
    n_id: int
    n_ood: int
    extras: dict = field(default_factory=dict)  # e.g. id_accuracy

    def to_dict(self) -> dict:
        d = {
            "fpr95": self.fpr95,
            "auroc": self.auroc,
            "eta": self.eta,
            "n_id": self.n_id,
            "n_ood": self.n_ood,
        }
        d.update(self.extras)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def format_table(self) -> str:
        rows = [(k, v) for k, v in self.to_dict().items()]
        width = max(len(k) for k, _ in rows)
        lines = []
        for k, v in rows:
            val = f"{v:.6f}" if isinstance(v, float) else str(v)
            lines.append(f"{k.ljust(width)}  {val}")
        return "\n".join(lines)


def build_report(id_scores, ood_scores, **extras) -> DetectionReport:
    """Bundle both metrics over one ID/OOD score split."""
    fpr, eta = fpr_at_95_tpr(id_scores, ood_scores)
    return DetectionReport(
        fpr95=fpr,
        auroc=auroc(id_scores, ood_scores),
        eta=eta,
        n_id=int(np.asarray(id_scores).size),
        n_ood=int(np.asarray(ood_scores).size),
        extras=dict(extras),
    )
