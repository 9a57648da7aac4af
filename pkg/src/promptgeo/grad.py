"""Analytic loss gradients and the finite-difference harness that audits them.

The discrete parts of the objective (region membership J/J' and the
modulation weight w) are held fixed while W moves: the analytic gradient
treats them as constants, so the numeric probe must too. Central
differences with step h, per-entry relative error
|a - n| / max(|a|, |n|, floor).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embedstore import ClassTable
from .encoder import SurrogateEncoder
from .errors import NumericalError
from .losses import LossBreakdown, LossWeights, _eval
from .regions import SoftmaxConfig
from .subspace import PromptMatrix


@dataclass(frozen=True)
class GradientResult:
    value: float  # equals breakdown.total bit-for-bit
    grad: np.ndarray  # (D, M)
    breakdown: LossBreakdown


@dataclass(frozen=True)
class FiniteDiffReport:
    analytic: np.ndarray
    numeric: np.ndarray
    max_rel_error: float
    worst_entry: tuple[int, int]

    def ok(self, tol: float = 1e-4) -> bool:
        return self.max_rel_error <= tol


def loss_and_grad(
    pm: PromptMatrix,
    enc: SurrogateEncoder,
    classes: ClassTable,
    labels: np.ndarray,
    global_feats: np.ndarray,
    local_feats: np.ndarray | None,
    cfg: SoftmaxConfig,
    weights: LossWeights,
) -> GradientResult:
    """Batch loss plus its gradient in the prompt matrix."""
    breakdown, grad, _ = _eval(
        pm, enc, classes, labels, global_feats, local_feats, cfg, weights,
        need_grad=True,
    )
    if not np.all(np.isfinite(grad)):
        raise NumericalError("non-finite entries in the loss gradient")
    return GradientResult(value=breakdown.total, grad=grad, breakdown=breakdown)


def finite_diff_check(
    pm: PromptMatrix,
    enc: SurrogateEncoder,
    classes: ClassTable,
    labels: np.ndarray,
    global_feats: np.ndarray,
    local_feats: np.ndarray | None,
    cfg: SoftmaxConfig,
    weights: LossWeights,
    h: float = 1e-5,
    rel_floor: float = 1e-6,
) -> FiniteDiffReport:
    """Compare the analytic gradient against central differences entrywise."""
    base_breakdown, analytic, selections = _eval(
        pm, enc, classes, labels, global_feats, local_feats, cfg, weights,
        need_grad=True,
    )
    del base_breakdown
    D, M = pm.W.shape
    numeric = np.zeros((D, M))
    for d in range(D):
        for m in range(M):
            vals = []
            for sign in (1.0, -1.0):
                Wp = pm.W.copy()
                Wp[d, m] += sign * h
                pb, _, _ = _eval(
                    PromptMatrix(Wp, epsilon=pm.epsilon), enc, classes,
                    labels, global_feats, local_feats, cfg, weights,
                    selections=selections,
                )
                vals.append(pb.total)
            numeric[d, m] = (vals[0] - vals[1]) / (2.0 * h)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), rel_floor)
    rel = np.abs(analytic - numeric) / denom
    worst = np.unravel_index(int(np.argmax(rel)), rel.shape)
    return FiniteDiffReport(
        analytic=analytic,
        numeric=numeric,
        max_rel_error=float(rel[worst]),
        worst_entry=(int(worst[0]), int(worst[1])),
    )


# Term-isolating weight settings for gradient audits. Cross-entropy is part
# of the objective in every mode, so the "only" settings isolate one
# regularizer on top of it via the lambda weights; the last entry exercises
# the full modulated objective.
GRADCHECK_CONFIGS: dict[str, LossWeights] = {
    "ce_only": LossWeights(0.0, 0.0, 0.0, "none"),
    "ent_only": LossWeights(0.0, 0.0, 1.0, "none"),
    "sub_id_only": LossWeights(1.0, 0.0, 0.0, "none"),
    "sub_ood_only": LossWeights(0.0, 1.0, 0.0, "none"),
    "full_sct": LossWeights(0.25, 2.0, 5.0, "sct"),
}


@dataclass(frozen=True)
class CheckInstance:
    pm: PromptMatrix
    enc: SurrogateEncoder
    classes: ClassTable
    labels: np.ndarray
    global_feats: np.ndarray
    local_feats: np.ndarray
    cfg: SoftmaxConfig


def make_check_instance(
    seed: int,
    D: int = 32,
    M: int = 4,
    K: int = 5,
    R: int = 6,
    B: int = 3,
    tau: float = 0.5,
) -> CheckInstance:
    """Small random problem for gradient audits.

    The temperature is kept moderate; at the production 0.01 the softmax
    saturates and every numeric probe lands on a flat region, which checks
    nothing.
    """
    rng = np.random.default_rng(seed)
    ctab = rng.standard_normal((K, D))
    ctab /= np.linalg.norm(ctab, axis=1, keepdims=True)
    W = rng.standard_normal((D, M)) / np.sqrt(D)
    global_feats = rng.standard_normal((B, D))
    local_feats = rng.standard_normal((B, R, D))
    labels = rng.integers(0, K, size=B)
    return CheckInstance(
        pm=PromptMatrix(W),
        enc=SurrogateEncoder.surrogate(D, seed + 1),
        classes=ClassTable(ctab),
        labels=labels,
        global_feats=global_feats,
        local_feats=local_feats,
        cfg=SoftmaxConfig(tau=tau),
    )


def run_gradcheck(
    seeds=range(20),
    h: float = 1e-5,
    tol: float = 1e-4,
    configs: dict[str, LossWeights] | None = None,
) -> list[dict]:
    """Audit every weight configuration over several seeded instances.

    Returns one row per (config, seed) with the observed max relative error.
    """
    if configs is None:
        configs = GRADCHECK_CONFIGS
    rows = []
    for name, weights in configs.items():
        for seed in seeds:
            inst = make_check_instance(int(seed))
            rep = finite_diff_check(
                inst.pm, inst.enc, inst.classes, inst.labels,
                inst.global_feats, inst.local_feats, inst.cfg, weights, h=h,
            )
            rows.append(
                {
                    "config": name,
                    "seed": int(seed),
                    "max_rel_error": rep.max_rel_error,
                    "ok": rep.ok(tol),
                }
            )
    return rows
