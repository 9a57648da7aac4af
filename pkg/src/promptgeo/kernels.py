"""Backend dispatch for the numeric kernels.

Two interchangeable implementations exist: numba-compiled loops
(`_kernels_numba`) and vectorized numpy (`_kernels_numpy`). The active one is
chosen once, at first use, from the PROMPTGEO_BACKEND environment variable
("numba" or "numpy"); unset means numba when importable, else numpy.

Within one backend the forward quantities are bit-identical whether or not
gradients are requested; across backends agreement is numerical (different
summation orders), not bitwise.
"""

from __future__ import annotations

import os

from .errors import ConfigError
from . import _kernels_numpy

try:
    from . import _kernels_numba
except ImportError:  # pragma: no cover - numba present in the supported env
    _kernels_numba = None

ENV_VAR = "PROMPTGEO_BACKEND"

_active = None


def available_backends() -> tuple[str, ...]:
    if _kernels_numba is not None:
        return ("numba", "numpy")
    return ("numpy",)


def resolve_backend_name(value: str | None = None) -> str:
    """Map an override string (or the environment) to a backend name."""
    if value is None:
        value = os.environ.get(ENV_VAR, "")
    value = value.strip().lower()
    if value == "":
        return "numba" if _kernels_numba is not None else "numpy"
    if value not in ("numba", "numpy"):
        raise ConfigError(f"unknown kernel backend {value!r}; expected numba or numpy")
    if value == "numba" and _kernels_numba is None:
        raise ConfigError("numba backend requested but numba is not importable")
    return value


def get_backend(name: str | None = None):
    """Return the kernel module for `name` (active backend when None)."""
    if name is None:
        global _active
        if _active is None:
            _active = get_backend(resolve_backend_name())
        return _active
    name = resolve_backend_name(name)
    return _kernels_numba if name == "numba" else _kernels_numpy


def set_backend(name: str | None) -> None:
    """Force the active backend (None re-resolves from the environment)."""
    global _active
    _active = None if name is None else get_backend(name)


def active_backend_name() -> str:
    return get_backend().BACKEND_NAME


def cosine_softmax(F, G, tau):
    return get_backend().cosine_softmax(F, G, tau)


def project_rows(F, W, Ginv):
    return get_backend().project_rows(F, W, Ginv)


def ratio_terms(F, W, Ginv, ood_mask, eps, need_grad):
    return get_backend().ratio_terms(F, W, Ginv, ood_mask, eps, need_grad)
