"""Pure-numpy kernel implementations.

Reference backend for the hot numeric paths: cosine-similarity softmax over
class features, batched subspace projection, and the projection-ratio terms
with their analytic gradients. `_kernels_numba` mirrors these signatures; the
dispatch lives in `kernels`.

All inputs are float64 C-contiguous arrays. Functions never raise on
mathematical edge cases; zero-norm guards are the caller's contract, except
for the documented near-zero gradient skips in `ratio_terms`.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "numpy"


def cosine_softmax(F: np.ndarray, G: np.ndarray, tau: float) -> np.ndarray:
    """Row-wise softmax over cosine similarities.

    Parameters
    ----------
    F : (n, D) feature rows, nonzero norm.
    G : (K, D) class feature rows, nonzero norm.
    tau : temperature > 0.

    Returns
    -------
    (n, K) array; row i is softmax_k(cos(F[i], G[k]) / tau).
    """
    Fh = F / np.linalg.norm(F, axis=1, keepdims=True)
    Gh = G / np.linalg.norm(G, axis=1, keepdims=True)
    S = (Fh @ Gh.T) / tau
    S -= S.max(axis=1, keepdims=True)
    np.exp(S, out=S)
    S /= S.sum(axis=1, keepdims=True)
    return S


def project_rows(F: np.ndarray, W: np.ndarray, Ginv: np.ndarray) -> np.ndarray:
    """Project each row of F onto span(W) using a precomputed Gram inverse.

    Computed as ((F W) Ginv) Wᵀ so the D×D projector is never formed;
    per-row cost O(DM + M²).
    """
    return ((F @ W) @ Ginv) @ W.T


def ratio_terms(
    F: np.ndarray,
    W: np.ndarray,
    Ginv: np.ndarray,
    ood_mask: np.ndarray,
    eps: float,
    need_grad: bool,
):
    """Projection-ratio sums and, optionally, their gradients in W.

    For each row f with projection q = W Ginv Wᵀ f and residual e = f − q:
    rows with ood_mask set contribute ‖q‖/‖f‖ to sub_ood, the rest contribute
    ‖e‖/‖f‖ to sub_id.

    Gradients use the exact differentials of the regularized projector
    (Ginv = (WᵀW + εI)⁻¹).  With z = Ginv Wᵀ f and y₂ = Ginv z:

        ∇(‖q‖/‖f‖) = (e (z − ε y₂)ᵀ + ε (W y₂) zᵀ) / (‖q‖ ‖f‖)
        ∇(‖e‖/‖f‖) = −(e (z + ε y₂)ᵀ − ε (W y₂) zᵀ) / (‖e‖ ‖f‖)

    Rows whose ‖q‖ (resp. ‖e‖) falls below 1e-12·‖f‖ contribute zero gradient:
    the ratio is not differentiable at that boundary and zero is the chosen
    subgradient.

    Returns
    -------
    (sub_id, sub_ood, grad_id, grad_ood); the gradient arrays are zeros when
    need_grad is false.  Forward sums are computed identically in both modes.
    """
    D, M = W.shape
    T = F @ W
    Z = T @ Ginv
    Q = Z @ W.T
    E = F - Q
    nf = np.linalg.norm(F, axis=1)
    nq = np.linalg.norm(Q, axis=1)
    ne = np.linalg.norm(E, axis=1)

    ood = ood_mask.astype(bool)
    idr = ~ood
    sub_ood = float((nq[ood] / nf[ood]).sum())
    sub_id = float((ne[idr] / nf[idr]).sum())

    grad_id = np.zeros((D, M))
    grad_ood = np.zeros((D, M))
    if need_grad:
        Y2 = Z @ Ginv
        WY2 = Y2 @ W.T

        live_o = ood & (nq > 1e-12 * nf)
        if live_o.any():
            a = 1.0 / (nq[live_o] * nf[live_o])
            Vq = Z[live_o] - eps * Y2[live_o]
            grad_ood += E[live_o].T @ (a[:, None] * Vq)
            grad_ood += eps * (WY2[live_o].T @ (a[:, None] * Z[live_o]))

        live_i = idr & (ne > 1e-12 * nf)
        if live_i.any():
            b = 1.0 / (ne[live_i] * nf[live_i])
            Vp = Z[live_i] + eps * Y2[live_i]
            grad_id -= E[live_i].T @ (b[:, None] * Vp)
            grad_id += eps * (WY2[live_i].T @ (b[:, None] * Z[live_i]))

    return sub_id, sub_ood, grad_id, grad_ood
