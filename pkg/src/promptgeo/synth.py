"""Synthetic embedding benchmark with a planted ID subspace.

Construction: an orthonormal basis U (D x M*) is planted; class prototypes
mu_k = U a_k live in span(U) and double (normalized) as the class table.
ID features are a prototype plus in-span noise sigma * U xi / sqrt(M*)
(RMS sigma, so alignment ratios stay within 3*sigma except with negligible
probability); OOD features start from a unit vector in the complement of U
and get the same in-span noise. A fraction `ood_leak` of every training
record's local regions is drawn from the complement instead of the class
prototype; those are the ground-truth ID-irrelevant regions and their
indices go into the truth sidecar. ID test records keep all regions
ID-relevant; OOD test records are complement-only.

Every stored vector is unit-normalized, and every draw comes from one
seeded generator in a fixed order, so output files are byte-identical
across runs with the same config.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .embedstore import (
    FLAG_HAS_LOCALS,
    FLAG_PRE_NORMALIZED,
    VERSION,
    ClassTable,
    Dataset,
    DatasetHeader,
    EmbeddingRecord,
    write_dataset,
    write_manifest,
)
from .errors import ConfigError

TRAIN_FILE = "train.sbcp"
ID_TEST_FILE = "id_test.sbcp"
OOD_TEST_FILE = "ood_test.sbcp"
TRUTH_FILE = "truth.json"
MANIFEST_FILE = "manifest.json"


@dataclass(frozen=True)
class SynthConfig:
    D: int = 64
    K: int = 5
    M_star: int = 8  # planted subspace dimension
    n_train_per_class: int = 16
    n_id_test: int = 200
    n_ood_test: int = 200
    H_loc: int = 4
    W_map: int = 4
    noise_sigma: float = 0.05  # RMS of the in-span noise component
    ood_leak: float = 0.0  # fraction of train local regions from the complement
    seed: int = 0

    def __post_init__(self):
        if self.D < 2:
            raise ConfigError(f"D must be >= 2, got {self.D}")
        if self.K < 2:
            raise ConfigError(f"K must be >= 2, got {self.K}")
        if not (1 <= self.M_star < self.D):
            raise ConfigError(f"M_star must lie in [1, D), got {self.M_star}")
        for name in ("n_train_per_class", "n_id_test", "n_ood_test", "H_loc", "W_map"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not np.isfinite(self.noise_sigma) or self.noise_sigma < 0.0:
            raise ConfigError(f"noise_sigma must be finite and >= 0, got {self.noise_sigma}")
        if not (0.0 <= self.ood_leak < 1.0):
            raise ConfigError(f"ood_leak must lie in [0, 1), got {self.ood_leak}")

    @property
    def regions(self) -> int:
        return self.H_loc * self.W_map

    @property
    def leaked_per_record(self) -> int:
        return int(self.ood_leak * self.regions)


@dataclass(frozen=True)
class SynthResult:
    config: SynthConfig
    basis: np.ndarray  # (D, M_star), orthonormal columns
    classes: ClassTable
    train: Dataset
    id_test: Dataset
    ood_test: Dataset
    truth: dict


def _orthonormal_basis(rng: np.random.Generator, D: int, M: int) -> np.ndarray:
    Q, Rm = np.linalg.qr(rng.standard_normal((D, M)))
    return Q * np.sign(np.diag(Rm))[None, :]


def _in_span_noise(rng, U, sigma):
    xi = rng.standard_normal(U.shape[1])
    return U @ (sigma * xi / np.sqrt(U.shape[1]))


def _complement_unit(rng, U):
    # redraw guard is unreachable in practice but keeps the math total
    while True:
        v = rng.standard_normal(U.shape[0])
        v -= U @ (U.T @ v)
        n = np.linalg.norm(v)
        if n > 1e-9:
            return v / n


def _id_vector(rng, U, mu, sigma):
    x = mu + _in_span_noise(rng, U, sigma)
    return x / np.linalg.norm(x)


def _ood_vector(rng, U, sigma):
    x = _complement_unit(rng, U) + _in_span_noise(rng, U, sigma)
    return x / np.linalg.norm(x)


def generate(cfg: SynthConfig) -> SynthResult:
    """Build the three datasets plus ground-truth metadata in memory."""
    rng = np.random.default_rng(cfg.seed)
    U = _orthonormal_basis(rng, cfg.D, cfg.M_star)

    coeffs = np.empty((cfg.K, cfg.M_star))
    mus = np.empty((cfg.K, cfg.D))
    for k in range(cfg.K):
        while True:
            a = rng.standard_normal(cfg.M_star)
            mu = U @ a
            if np.linalg.norm(mu) > 1e-9:
                break
        coeffs[k] = a
        mus[k] = mu
    ctab = ClassTable(mus / np.linalg.norm(mus, axis=1, keepdims=True))

    R = cfg.regions
    n_leak = cfg.leaked_per_record
    leaked_idx = list(range(R - n_leak, R))  # last regions of each train record

    def id_record(k: int, leak: bool) -> EmbeddingRecord:
        g = _id_vector(rng, U, mus[k], cfg.noise_sigma)
        loc = np.empty((R, cfg.D))
        for r in range(R):
            if leak and r >= R - n_leak:
                loc[r] = _ood_vector(rng, U, cfg.noise_sigma)
            else:
                loc[r] = _id_vector(rng, U, mus[k], cfg.noise_sigma)
        return EmbeddingRecord(k, g, loc)

    def ood_record() -> EmbeddingRecord:
        g = _ood_vector(rng, U, cfg.noise_sigma)
        loc = np.empty((R, cfg.D))
        for r in range(R):
            loc[r] = _ood_vector(rng, U, cfg.noise_sigma)
        return EmbeddingRecord(0, g, loc)

    train_recs = [
        id_record(k, leak=True) for k in range(cfg.K) for _ in range(cfg.n_train_per_class)
    ]
    id_recs = [id_record(i % cfg.K, leak=False) for i in range(cfg.n_id_test)]
    ood_recs = [ood_record() for _ in range(cfg.n_ood_test)]

    flags = FLAG_HAS_LOCALS | FLAG_PRE_NORMALIZED

    def as_dataset(recs: list[EmbeddingRecord]) -> Dataset:
        N = len(recs)
        header = DatasetHeader(VERSION, cfg.D, cfg.K, cfg.H_loc, cfg.W_map, N, flags)
        labels = np.array([r.label for r in recs], dtype=np.int64)
        return Dataset(
            header,
            ctab,
            labels,
            np.stack([r.global_feat for r in recs]),
            np.stack([r.local_feats for r in recs]),
        )

    truth = {
        "config": asdict(cfg),
        "basis": U.tolist(),
        "class_coeffs": coeffs.tolist(),
        # ground-truth ID-irrelevant regions, per training record
        "train_id_irrelevant_regions": [leaked_idx for _ in train_recs],
        "files": {"train": TRAIN_FILE, "id_test": ID_TEST_FILE, "ood_test": OOD_TEST_FILE},
    }
    return SynthResult(
        config=cfg,
        basis=U,
        classes=ctab,
        train=as_dataset(train_recs),
        id_test=as_dataset(id_recs),
        ood_test=as_dataset(ood_recs),
        truth=truth,
    )


def write_synth(result: SynthResult, outdir) -> dict:
    """Write the dataset files, truth sidecar and class manifest.

    Returns the path map. File contents are a pure function of the config.
    """
    import json
    import os

    os.makedirs(outdir, exist_ok=True)
    paths = {
        "train": os.path.join(outdir, TRAIN_FILE),
        "id_test": os.path.join(outdir, ID_TEST_FILE),
        "ood_test": os.path.join(outdir, OOD_TEST_FILE),
        "truth": os.path.join(outdir, TRUTH_FILE),
        "manifest": os.path.join(outdir, MANIFEST_FILE),
    }
    for key in ("train", "id_test", "ood_test"):
        ds: Dataset = getattr(result, key)
        write_dataset(ds.header, ds.classes, ds.records, paths[key])
    with open(paths["truth"], "w") as fh:
        json.dump(result.truth, fh)
        fh.write("\n")
    write_manifest(paths["manifest"], [f"class_{k}" for k in range(result.config.K)])
    return paths
