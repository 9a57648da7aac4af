"""Text-feature encoder: maps prompts plus a class embedding to g_k.

Two modes:

* surrogate-linear: g_k = normalize(c_k + (1/M)·A·Σ_m ω_m) with A a fixed
  seeded standard-normal D×D matrix scaled by 1/√D. This is the cheapest
  nontrivial differentiable coupling between the prompt matrix and the text
  features; the analytic backward pass lives here next to the forward.
* frozen: g_k comes from a precomputed table (for real text features
  produced by an external extractor); constant in W, so cross-entropy and
  entropy terms carry no gradient in this mode.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embedstore import ClassTable, read_dataset
from .errors import ConfigError, DegenerateTextFeatureError
from .subspace import PromptMatrix

MODE_SURROGATE = "surrogate-linear"
MODE_FROZEN = "frozen"


@dataclass(frozen=True)
class SurrogateEncoder:
    """Deterministic encoder state; immutable after construction."""

    mode: str
    mix: np.ndarray | None = None  # (D, D), surrogate-linear only
    frozen_features: np.ndarray | None = None  # (K, D) unit rows, frozen only
    seed: int | None = None

    @staticmethod
    def surrogate(D: int, seed: int) -> "SurrogateEncoder":
        """Draw the fixed mixing matrix A ~ N(0, 1/D) from `seed`.

        Stream key [seed, 2]: namespaced against the prompt init ([seed, 3])
        and data streams so equal seeds never alias the draws.
        """
        A = np.random.default_rng([seed, 2]).standard_normal((D, D)) / np.sqrt(D)
        return SurrogateEncoder(mode=MODE_SURROGATE, mix=A, seed=seed)

    @staticmethod
    def frozen(features: np.ndarray) -> "SurrogateEncoder":
        """Wrap precomputed text features; rows are unit-normalized here."""
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2:
            raise ConfigError(f"frozen features must be K x D, got shape {features.shape}")
        norms = np.linalg.norm(features, axis=1)
        if np.any(norms == 0.0):
            k = int(np.flatnonzero(norms == 0.0)[0])
            raise DegenerateTextFeatureError(f"frozen text feature {k} has zero norm")
        return SurrogateEncoder(mode=MODE_FROZEN, frozen_features=features / norms[:, None])

    @property
    def differentiable(self) -> bool:
        return self.mode == MODE_SURROGATE


def load_frozen(path) -> SurrogateEncoder:
    """Build a frozen encoder from an `.sbcp` file's class table.

    The conventional frozen-text file has N = 0 and carries g_k as its class
    table, but any valid dataset file works.
    """
    ds = read_dataset(path)
    return SurrogateEncoder.frozen(ds.classes.embeddings)


def _prompt_shift(enc: SurrogateEncoder, pm: PromptMatrix) -> np.ndarray:
    # (1/M)·A·Σ_m ω_m == A @ mean of prompt columns
    return enc.mix @ pm.W.mean(axis=1)


def encode_class(
    enc: SurrogateEncoder, pm: PromptMatrix, c_k: np.ndarray, k: int | None = None
) -> np.ndarray:
    """Text feature for one class; unit-norm output.

    Frozen mode is a table lookup and needs the class index `k`; the
    surrogate mode ignores it.
    """
    if enc.mode == MODE_FROZEN:
        if k is None:
            raise ValueError("frozen mode needs the class index k")
        return enc.frozen_features[k]
    u = np.asarray(c_k, dtype=np.float64) + _prompt_shift(enc, pm)
    # axis-form norm keeps this bitwise equal to the encode_all rows
    # (the 1-D norm takes a different BLAS path)
    n = float(np.linalg.norm(u[None, :], axis=1)[0])
    if n == 0.0:
        raise DegenerateTextFeatureError("class embedding plus prompt shift has zero norm")
    return u / n


def encode_all(enc: SurrogateEncoder, pm: PromptMatrix, classes: ClassTable) -> np.ndarray:
    """K×D matrix G with row k = encode_class(enc, pm, c_k, k)."""
    G, _, _ = _encode_all_cached(enc, pm, classes)
    return G


def _encode_all_cached(enc: SurrogateEncoder, pm: PromptMatrix, classes: ClassTable):
    """Forward pass keeping (G, pre-normalization rows U, their norms).

    The cache feeds `backward_to_prompts`; frozen mode has no meaningful
    cache (G is constant in W).
    """
    if enc.mode == MODE_FROZEN:
        return enc.frozen_features, None, None
    U = classes.embeddings + _prompt_shift(enc, pm)[None, :]
    norms = np.linalg.norm(U, axis=1)
    if np.any(norms == 0.0):
        k = int(np.flatnonzero(norms == 0.0)[0])
        raise DegenerateTextFeatureError(f"class {k}: embedding plus prompt shift has zero norm")
    return U / norms[:, None], U, norms


def backward_to_prompts(
    enc: SurrogateEncoder,
    pm: PromptMatrix,
    cache,
    dG: np.ndarray,
) -> np.ndarray:
    """Map a loss gradient w.r.t. G back to the prompt matrix.

    For g = u/‖u‖ with u = c_k + A·mean(ω): dL/du = (dg − g(g·dg))/‖u‖, and
    the mean-pooled prompt path sends Σ_k dL/du_k through Aᵀ, divided by M,
    identically into every column. Frozen mode returns zeros.
    """
    if enc.mode == MODE_FROZEN:
        return np.zeros_like(pm.W)
    G, U, norms = cache
    inner = np.einsum("kd,kd->k", G, dG)
    dU = (dG - G * inner[:, None]) / norms[:, None]
    col = enc.mix.T @ dU.sum(axis=0) / pm.M
    return np.tile(col[:, None], (1, pm.M))
