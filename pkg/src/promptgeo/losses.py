"""Training objective: cross-entropy plus geometry regularizers.

Per labeled sample with global feature f_g and local features f_i:

* CE       = -ln Pr(y | f_g), probability floored at 1e-12 (floor hits
             are counted in the breakdown, and the gradient is zero there)
* Ent      = -sum_{i in J} H(p_i)            (background entropy, <= 0)
* Sub-ID   = sum_{i in J'} ||orth_i|| / ||f_i||
* Sub-OOD  = sum_{i in J}  ||par_i||  / ||f_i||

with J/J' the rank partition from `regions`. Two composition modes:

* "sct":  total = (1-w)*CE + w*(l1*SubID + l2*SubOOD + l3*Ent), w = Pr(y|f_g)
          treated as a constant (no gradient flows through w)
* "none": total = CE + l1*SubID + l2*SubOOD + l3*Ent

Batch values are per-sample means accumulated in sample order, so repeated
evaluation of the same batch is bit-for-bit reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import encoder as enc_mod
from . import kernels
from .embedstore import ClassTable
from .errors import ConfigError, EmptyBatchError
from .regions import SoftmaxConfig
from .subspace import PromptMatrix, gram_inverse

CE_PROB_FLOOR = 1e-12

MODULATION_MODES = ("sct", "none")


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 0.25
    lambda2: float = 2.0
    lambda3: float = 5.0
    modulation: str = "sct"

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambda3"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0.0:
                raise ConfigError(f"{name} must be finite and >= 0, got {v}")
        if self.modulation not in MODULATION_MODES:
            raise ConfigError(
                f"modulation must be one of {MODULATION_MODES}, got {self.modulation!r}"
            )


@dataclass(frozen=True)
class LossBreakdown:
    """Unweighted term values plus the composed total.

    For batches every field is the per-sample mean except `clamp_events`,
    which counts CE floor hits across the batch.
    """

    ce: float
    ent: float
    sub_id: float
    sub_ood: float
    modulation_weight: float
    total: float
    clamp_events: int = 0


@dataclass(frozen=True)
class SampleSelection:
    """Discrete per-sample choices frozen during finite-difference checks.

    `in_J` marks background regions (None when the sample has no locals);
    `w` is the stop-gradient modulation weight.
    """

    in_J: np.ndarray | None
    w: float


def cross_entropy(probs: np.ndarray, y: int) -> tuple[float, bool]:
    """(-ln max(p_y, floor), floor_hit) for one probability vector."""
    probs = np.asarray(probs, dtype=np.float64)
    if not (0 <= y < probs.shape[-1]):
        raise ConfigError(f"label {y} out of range for {probs.shape[-1]} classes")
    py = float(probs[y])
    clamped = py < CE_PROB_FLOOR
    return -math.log(max(py, CE_PROB_FLOOR)), clamped


def entropy_reg(probs: np.ndarray, J: np.ndarray) -> float:
    """-sum_{i in J} H(p_i) = sum_{i in J} sum_k p ln p, with 0 ln 0 = 0."""
    probs = np.asarray(probs, dtype=np.float64)
    J = np.asarray(J, dtype=np.int64)
    if J.size == 0:
        return 0.0
    PJ = probs[J]
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(PJ > 0.0, PJ * np.log(PJ), 0.0)
    return float(plogp.sum())


def _masked_ratio_sums(pm: PromptMatrix, local_feats: np.ndarray, in_J: np.ndarray):
    Ginv = gram_inverse(pm)
    F = np.ascontiguousarray(local_feats, dtype=np.float64)
    sub_id, sub_ood, _, _ = kernels.ratio_terms(
        F, pm.W, Ginv, np.ascontiguousarray(in_J, dtype=np.bool_), pm.epsilon, False
    )
    return sub_id, sub_ood


def sub_id_loss(pm: PromptMatrix, local_feats: np.ndarray, J_prime: np.ndarray) -> float:
    """Sum of orthogonal alignment ratios over the foreground regions."""
    R = np.asarray(local_feats).shape[0]
    in_J = np.ones(R, dtype=np.bool_)
    in_J[np.asarray(J_prime, dtype=np.int64)] = False
    return _masked_ratio_sums(pm, local_feats, in_J)[0]


def sub_ood_loss(pm: PromptMatrix, local_feats: np.ndarray, J: np.ndarray) -> float:
    """Sum of parallel alignment ratios over the background regions."""
    R = np.asarray(local_feats).shape[0]
    in_J = np.zeros(R, dtype=np.bool_)
    in_J[np.asarray(J, dtype=np.int64)] = True
    return _masked_ratio_sums(pm, local_feats, in_J)[1]


def _compose(ce: float, ent: float, sub_id: float, sub_ood: float, w: float,
             weights: LossWeights) -> float:
    reg = weights.lambda1 * sub_id + weights.lambda2 * sub_ood + weights.lambda3 * ent
    if weights.modulation == "sct":
        return (1.0 - w) * ce + w * reg
    return ce + reg


def _eval(
    pm: PromptMatrix,
    enc: enc_mod.SurrogateEncoder,
    classes: ClassTable,
    labels: np.ndarray,
    global_feats: np.ndarray,
    local_feats: np.ndarray | None,
    cfg: SoftmaxConfig,
    weights: LossWeights,
    need_grad: bool = False,
    selections: list[SampleSelection] | None = None,
):
    """Shared forward/backward over a batch.

    Forward statements are identical whether or not gradients are requested,
    so `batch_loss` and the gradient path agree bitwise on every term.
    `selections` replays frozen J/w choices (finite-difference probes hold
    the discrete parts of the loss fixed while W moves).

    Returns (breakdown, grad-or-None, selections-used).
    """
    labels = np.asarray(labels, dtype=np.int64)
    global_feats = np.asarray(global_feats, dtype=np.float64)
    B = labels.shape[0]
    if B == 0:
        raise EmptyBatchError("loss over an empty batch is undefined")
    if selections is not None and len(selections) != B:
        raise ConfigError("selection replay length does not match batch size")
    K = classes.K
    if np.any(labels < 0) or np.any(labels >= K):
        raise ConfigError(f"labels must lie in [0, {K}) for this class table")
    tau = cfg.tau
    C = cfg.rank_threshold(K)

    G, U, Unorms = enc_mod._encode_all_cached(enc, pm, classes)
    Ginv = gram_inverse(pm)
    W = pm.W

    ce_sum = ent_sum = id_sum = ood_sum = w_sum = total_sum = 0.0
    clamp_count = 0
    used: list[SampleSelection] = []
    dW = np.zeros_like(W) if need_grad else None
    dG = np.zeros_like(G) if need_grad else None
    touched_G = False

    for n in range(B):
        y = int(labels[n])
        pg = kernels.cosine_softmax(global_feats[n : n + 1], G, tau)[0]
        py = float(pg[y])
        clamped = py < CE_PROB_FLOOR
        ce = -math.log(max(py, CE_PROB_FLOOR))
        w = selections[n].w if selections is not None else py

        ent = sub_id = sub_ood = 0.0
        in_J = None
        Pl = None
        grad_id = grad_ood = None
        if local_feats is not None:
            F = np.ascontiguousarray(local_feats[n], dtype=np.float64)
            Pl = kernels.cosine_softmax(F, G, tau)
            if selections is not None:
                in_J = selections[n].in_J
            else:
                ranks = 1 + np.sum(Pl > Pl[:, y][:, None], axis=1)
                in_J = ranks > C
            with np.errstate(divide="ignore", invalid="ignore"):
                lnP = np.log(Pl)
            plogp = np.where(Pl > 0.0, Pl * lnP, 0.0)
            ent = float(plogp[in_J].sum())
            sub_id, sub_ood, grad_id, grad_ood = kernels.ratio_terms(
                F, W, Ginv, np.ascontiguousarray(in_J, dtype=np.bool_), pm.epsilon, need_grad
            )

        total = _compose(ce, ent, sub_id, sub_ood, w, weights)
        ce_sum += ce
        ent_sum += ent
        id_sum += sub_id
        ood_sum += sub_ood
        w_sum += w
        total_sum += total
        clamp_count += int(clamped)
        used.append(SampleSelection(in_J=None if in_J is None else np.array(in_J), w=w))

        if not need_grad:
            continue
        if weights.modulation == "sct":
            coef_ce, coef_reg = 1.0 - w, w
        else:
            coef_ce, coef_reg = 1.0, 1.0
        if local_feats is not None:
            if weights.lambda1 != 0.0:
                dW += (coef_reg * weights.lambda1) * grad_id
            if weights.lambda2 != 0.0:
                dW += (coef_reg * weights.lambda2) * grad_ood
        if enc.differentiable:
            if coef_ce != 0.0 and not clamped:
                fg = global_feats[n]
                fg = fg / np.linalg.norm(fg)
                dce_ds = pg.copy()
                dce_ds[y] -= 1.0
                dG += (coef_ce / tau) * dce_ds[:, None] * fg[None, :]
                touched_G = True
            lam_ent = coef_reg * weights.lambda3
            if lam_ent != 0.0 and local_feats is not None and np.any(in_J):
                PJ = Pl[in_J]
                lnPJ = lnP[in_J]
                phi = plogp[in_J].sum(axis=1)
                coefmat = np.where(PJ > 0.0, (PJ / tau) * (lnPJ - phi[:, None]), 0.0)
                FJ = local_feats[n][in_J]
                FJ = FJ / np.linalg.norm(FJ, axis=1)[:, None]
                dG += lam_ent * (coefmat.T @ FJ)
                touched_G = True

    breakdown = LossBreakdown(
        ce=ce_sum / B,
        ent=ent_sum / B,
        sub_id=id_sum / B,
        sub_ood=ood_sum / B,
        modulation_weight=w_sum / B,
        total=total_sum / B,
        clamp_events=clamp_count,
    )
    if not need_grad:
        return breakdown, None, used
    if touched_G:
        dW += enc_mod.backward_to_prompts(enc, pm, (G, U, Unorms), dG)
    dW /= B
    return breakdown, dW, used


def composite_loss(
    pm: PromptMatrix,
    enc: enc_mod.SurrogateEncoder,
    classes: ClassTable,
    y: int,
    global_feat: np.ndarray,
    local_feats: np.ndarray | None,
    cfg: SoftmaxConfig,
    weights: LossWeights,
) -> LossBreakdown:
    """Full objective for a single labeled sample."""
    locals_b = None if local_feats is None else np.asarray(local_feats)[None, :, :]
    breakdown, _, _ = _eval(
        pm, enc, classes, np.array([y]), np.asarray(global_feat)[None, :], locals_b,
        cfg, weights,
    )
    return breakdown


def batch_loss(
    pm: PromptMatrix,
    enc: enc_mod.SurrogateEncoder,
    classes: ClassTable,
    labels: np.ndarray,
    global_feats: np.ndarray,
    local_feats: np.ndarray | None,
    cfg: SoftmaxConfig,
    weights: LossWeights,
) -> LossBreakdown:
    """Termwise-mean objective over a batch, reduced in sample order."""
    breakdown, _, _ = _eval(
        pm, enc, classes, labels, global_feats, local_feats, cfg, weights
    )
    return breakdown
