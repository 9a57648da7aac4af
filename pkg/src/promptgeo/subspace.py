"""Projector algebra over the prompt matrix W.

Column-space and null-space projections through the regularized Gram inverse
(WᵀW + εI)⁻¹ and the alignment ratios built from them. The D×D projector is
never materialized: projections go through W·(Ginv·(Wᵀf)), O(DM + M²) per
feature. The complement projector is I − P operationally, so the parallel and
orthogonal parts always recompose to the input by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from . import kernels
from .errors import ConfigError, NumericalError, SingularGramError, ZeroFeatureError

DEFAULT_EPSILON = 1e-4


@dataclass(frozen=True)
class PromptMatrix:
    """The learnable D×M matrix of prompt vectors, plus its Gram regularizer.

    Columns are the prompt vectors ω_1..ω_M. M must stay strictly below D so
    the column space is a proper subspace; ε ≥ 0 regularizes the Gram solve.
    """

    W: np.ndarray
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        W = np.asarray(self.W, dtype=np.float64)
        if W.ndim != 2:
            raise ConfigError(f"prompt matrix must be 2-D, got shape {W.shape}")
        D, M = W.shape
        if M < 1:
            raise ConfigError("prompt count M must be >= 1")
        if M >= D:
            raise ConfigError(f"prompt count M={M} must stay below the feature dim D={D}")
        if not np.all(np.isfinite(W)):
            raise ConfigError("prompt matrix has non-finite entries")
        if not (np.isfinite(self.epsilon) and self.epsilon >= 0):
            raise ConfigError(f"epsilon must be finite and >= 0, got {self.epsilon}")
        object.__setattr__(self, "W", W)

    @property
    def D(self) -> int:
        return self.W.shape[0]

    @property
    def M(self) -> int:
        return self.W.shape[1]


@dataclass(frozen=True)
class ProjectionPair:
    """Parallel/orthogonal split of a feature; parts sum to the input by
    construction (orthogonal is computed as input − parallel)."""

    parallel: np.ndarray
    orthogonal: np.ndarray


def gram_inverse(pm: PromptMatrix) -> np.ndarray:
    """(WᵀW + εI)⁻¹ via a symmetric positive-definite factorization.

    Raises SingularGramError when the factorization fails, which at ε = 0
    means W is rank-deficient.
    """
    W = pm.W
    # W passes the matrix guards yet WᵀW can still overflow for huge norms
    with np.errstate(over="ignore"):
        G = W.T @ W
    if not np.all(np.isfinite(G)):
        raise NumericalError("prompt Gram matrix overflowed to non-finite values")
    G[np.diag_indices_from(G)] += pm.epsilon
    try:
        c, low = cho_factor(G, lower=True)
    except LinAlgError as exc:
        raise SingularGramError(
            f"prompt Gram matrix singular at epsilon={pm.epsilon:g}: {exc}"
        ) from exc
    inv = cho_solve((c, low), np.eye(pm.M))
    return (inv + inv.T) / 2.0


def project_onto(pm: PromptMatrix, f: np.ndarray) -> np.ndarray:
    """Projection of f onto span(W): W (WᵀW + εI)⁻¹ Wᵀ f."""
    f = np.asarray(f, dtype=np.float64)
    Ginv = gram_inverse(pm)
    return kernels.project_rows(f.reshape(1, -1), pm.W, Ginv)[0]


def project_complement(pm: PromptMatrix, f: np.ndarray) -> np.ndarray:
    """Projection of f onto the orthogonal complement of span(W): f − Pf."""
    f = np.asarray(f, dtype=np.float64)
    return f - project_onto(pm, f)


def projection_pair(pm: PromptMatrix, f: np.ndarray) -> ProjectionPair:
    f = np.asarray(f, dtype=np.float64)
    par = project_onto(pm, f)
    return ProjectionPair(parallel=par, orthogonal=f - par)


def alignment_ratios(pm: PromptMatrix, f: np.ndarray) -> tuple[float, float]:
    """(‖Pf‖/‖f‖, ‖P⊥f‖/‖f‖), each clamped into [0, 1].

    The clamp removes last-ulp excursions only; the projector's eigenvalues
    lie in [0, 1]. Raises ZeroFeatureError when ‖f‖ = 0.
    """
    f = np.asarray(f, dtype=np.float64)
    nf = float(np.linalg.norm(f))
    if nf == 0.0:
        raise ZeroFeatureError("alignment ratios need a nonzero feature vector")
    par = project_onto(pm, f)
    r_par = min(float(np.linalg.norm(par)) / nf, 1.0)
    r_orth = min(float(np.linalg.norm(f - par)) / nf, 1.0)
    return r_par, r_orth
