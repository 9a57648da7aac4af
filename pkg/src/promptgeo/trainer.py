"""SGD loop over the prompt matrix, plus checkpoint and evaluation glue.

Update rule per batch: W <- W - lr * (grad + weight_decay * W). All
randomness flows from named seeded streams (init, shuffle, encoder), so a
rerun with the same config and data is bit-for-bit identical. When lr is 0
the update is skipped outright and W never changes, not even in the last
bit.

Checkpoints use a small container in the same spirit as the embedding
files: magic "SBCW", three little-endian u32 fields (version, D, M) and the
prompt matrix as row-major f32. A JSON sidecar `<path>.json` echoes the
resolved config; `<path>.loss.csv` records per-epoch loss means.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .embedstore import Dataset
from .encoder import SurrogateEncoder, load_frozen
from .errors import ConfigError, FormatError, IoError, NumericalError
from .grad import loss_and_grad
from .losses import LossWeights
from .metrics import DetectionReport, build_report, id_accuracy
from .regions import SoftmaxConfig
from .scoring import score_dataset
from .subspace import DEFAULT_EPSILON, PromptMatrix

CKPT_MAGIC = b"SBCW"
CKPT_VERSION = 1
_CKPT_STRUCT = struct.Struct("<3I")

LOSS_CSV_COLUMNS = ("epoch", "ce", "ent", "sub_id", "sub_ood", "total")


@dataclass(frozen=True)
class TrainConfig:
    M: int = 16
    lr: float = 0.002
    batch_size: int = 32
    epochs: int = 25
    weight_decay: float = 5e-4
    init_std: float = 0.02
    seed: int = 0
    encoder_seed: int | None = None  # None -> seed
    shots: int | None = None  # None -> use every training sample
    tau: float = 0.01
    C: int | None = None
    epsilon: float = DEFAULT_EPSILON
    lambda1: float = 0.25
    lambda2: float = 2.0
    lambda3: float = 5.0
    modulation: str = "sct"

    def __post_init__(self):
        if self.M < 1:
            raise ConfigError(f"M must be >= 1, got {self.M}")
        if not np.isfinite(self.lr) or self.lr < 0.0:
            raise ConfigError(f"lr must be finite and >= 0, got {self.lr}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if not np.isfinite(self.weight_decay):
            raise ConfigError("weight_decay must be finite")
        if not np.isfinite(self.init_std) or self.init_std < 0.0:
            raise ConfigError(f"init_std must be finite and >= 0, got {self.init_std}")
        if self.shots is not None and self.shots < 1:
            raise ConfigError(f"shots must be >= 1, got {self.shots}")
        # delegate range checks for the composed pieces
        self.softmax_config()
        self.loss_weights()

    def softmax_config(self) -> SoftmaxConfig:
        return SoftmaxConfig(tau=self.tau, C=self.C)

    def loss_weights(self) -> LossWeights:
        return LossWeights(self.lambda1, self.lambda2, self.lambda3, self.modulation)


@dataclass(frozen=True)
class TrainState:
    """Last consistent state, attached to divergence errors."""

    pm: PromptMatrix
    epoch: int
    batch: int
    history: list


@dataclass(frozen=True)
class TrainResult:
    pm: PromptMatrix
    enc: SurrogateEncoder
    history: list  # one dict per epoch with LOSS_CSV_COLUMNS keys
    config: TrainConfig
    epochs_run: int


def init_prompts(D: int, M: int, seed: int, std: float = 0.02,
                 epsilon: float = DEFAULT_EPSILON) -> PromptMatrix:
    """Gaussian initialization, W ~ N(0, std^2) entrywise.

    The stream key is namespaced ([seed, 3]; the shuffle uses [seed, 1] and
    the encoder mix [seed, 2]) so that equal user-facing seeds across
    components never replay the same underlying draws. Tags are nonzero
    because SeedSequence([s, 0]) collapses to SeedSequence(s).
    """
    W = np.random.default_rng([seed, 3]).standard_normal((D, M)) * std
    return PromptMatrix(W, epsilon=epsilon)


def select_shots(ds: Dataset, shots: int | None) -> Dataset:
    """First `shots` records of each class, in file order."""
    if shots is None:
        return ds
    taken = np.zeros(ds.classes.K, dtype=np.int64)
    keep = []
    for i in range(ds.header.N):
        y = int(ds.labels[i])
        if taken[y] < shots:
            taken[y] += 1
            keep.append(i)
    keep = np.asarray(keep, dtype=np.int64)
    header = dataclasses.replace(ds.header, N=len(keep))
    return Dataset(
        header,
        ds.classes,
        ds.labels[keep],
        ds.global_feats[keep],
        None if ds.local_feats is None else ds.local_feats[keep],
    )


def build_encoder(ds: Dataset, cfg: TrainConfig, frozen_text_path=None) -> SurrogateEncoder:
    if frozen_text_path is not None:
        enc = load_frozen(frozen_text_path)
        if enc.frozen_features.shape != (ds.classes.K, ds.classes.D):
            raise ConfigError(
                f"frozen text table {enc.frozen_features.shape} does not match "
                f"dataset classes ({ds.classes.K}, {ds.classes.D})"
            )
        return enc
    seed = cfg.seed if cfg.encoder_seed is None else cfg.encoder_seed
    return SurrogateEncoder.surrogate(ds.classes.D, seed)


def train(
    ds: Dataset,
    cfg: TrainConfig,
    enc: SurrogateEncoder | None = None,
    on_epoch=None,
) -> TrainResult:
    """Run the SGD loop over one training dataset.

    Epoch order is a seeded shuffle; batches are consecutive slices with the
    final short batch kept. History rows are sample-weighted means per
    epoch. A non-finite loss, gradient or update aborts with
    NumericalError; the exception carries the last good state in its
    `state` attribute.
    """
    if enc is None:
        enc = build_encoder(ds, cfg)
    work = select_shots(ds, cfg.shots)
    N = work.header.N
    if N == 0:
        raise ConfigError("training dataset has no records")
    pm = init_prompts(work.classes.D, cfg.M, cfg.seed, cfg.init_std, cfg.epsilon)
    scfg = cfg.softmax_config()
    weights = cfg.loss_weights()
    shuffle_rng = np.random.default_rng([cfg.seed, 1])
    history: list[dict] = []

    for epoch in range(1, cfg.epochs + 1):
        perm = shuffle_rng.permutation(N)
        sums = {k: 0.0 for k in ("ce", "ent", "sub_id", "sub_ood", "total")}
        for start in range(0, N, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            locals_b = None if work.local_feats is None else work.local_feats[idx]
            try:
                res = loss_and_grad(
                    pm, enc, work.classes, work.labels[idx], work.global_feats[idx],
                    locals_b, scfg, weights,
                )
            except NumericalError as exc:
                exc.state = TrainState(pm, epoch, start // cfg.batch_size, history)
                raise
            if not np.isfinite(res.value):
                err = NumericalError(
                    f"non-finite loss at epoch {epoch}, batch {start // cfg.batch_size}"
                )
                err.state = TrainState(pm, epoch, start // cfg.batch_size, history)
                raise err
            b = len(idx)
            br = res.breakdown
            sums["ce"] += br.ce * b
            sums["ent"] += br.ent * b
            sums["sub_id"] += br.sub_id * b
            sums["sub_ood"] += br.sub_ood * b
            sums["total"] += br.total * b
            if cfg.lr != 0.0:
                W_new = pm.W - cfg.lr * (res.grad + cfg.weight_decay * pm.W)
                if not np.all(np.isfinite(W_new)):
                    err = NumericalError(
                        f"prompt update diverged at epoch {epoch}, "
                        f"batch {start // cfg.batch_size}"
                    )
                    err.state = TrainState(pm, epoch, start // cfg.batch_size, history)
                    raise err
                pm = PromptMatrix(W_new, epsilon=cfg.epsilon)
        row = {"epoch": epoch, **{k: sums[k] / N for k in sums}}
        history.append(row)
        if on_epoch is not None:
            on_epoch(row)

    return TrainResult(pm=pm, enc=enc, history=history, config=cfg, epochs_run=cfg.epochs)


@dataclass(frozen=True)
class EvalOutputs:
    report: DetectionReport
    id_scores: np.ndarray
    ood_scores: np.ndarray
    id_predicted: np.ndarray
    ood_predicted: np.ndarray


def evaluate(
    pm: PromptMatrix,
    enc: SurrogateEncoder,
    id_ds: Dataset,
    ood_ds: Dataset,
    cfg: SoftmaxConfig,
    method: str = "glmcm",
) -> EvalOutputs:
    """Score both test splits and compute the detection metrics."""
    id_scores, id_pred = score_dataset(id_ds, pm, enc, cfg, method)
    ood_scores, ood_pred = score_dataset(ood_ds, pm, enc, cfg, method)
    report = build_report(
        id_scores, ood_scores, id_accuracy=id_accuracy(id_pred, id_ds.labels)
    )
    return EvalOutputs(report, id_scores, ood_scores, id_pred, ood_pred)


def save_checkpoint(path, pm: PromptMatrix, meta: dict, history: list | None = None) -> None:
    """Write the prompt container, its JSON sidecar and the loss CSV."""
    blob = bytearray()
    blob += CKPT_MAGIC
    blob += _CKPT_STRUCT.pack(CKPT_VERSION, pm.D, pm.M)
    blob += pm.W.astype(np.float32).tobytes()
    try:
        with open(path, "wb") as fh:
            fh.write(blob)
        with open(f"{path}.json", "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise IoError(f"cannot write checkpoint {path}: {exc}") from exc
    if history is not None:
        write_loss_csv(f"{path}.loss.csv", history)


def write_loss_csv(path, history: list) -> None:
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(LOSS_CSV_COLUMNS)
            for row in history:
                w.writerow(
                    [row["epoch"]] + [repr(row[k]) for k in LOSS_CSV_COLUMNS[1:]]
                )
    except OSError as exc:
        raise IoError(f"cannot write loss history {path}: {exc}") from exc


def load_checkpoint(path) -> tuple[PromptMatrix, dict]:
    """Read a prompt container; sidecar metadata is returned when present."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(raw) < 4 + _CKPT_STRUCT.size or raw[:4] != CKPT_MAGIC:
        raise FormatError(f"{path} is not a prompt checkpoint (bad magic)")
    version, D, M = _CKPT_STRUCT.unpack_from(raw, 4)
    if version != CKPT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    body = raw[4 + _CKPT_STRUCT.size :]
    expected = D * M * 4
    if len(body) != expected:
        raise FormatError(
            f"checkpoint payload is {len(body)} bytes, expected {expected}"
        )
    W = np.frombuffer(body, dtype="<f4").astype(np.float64).reshape(D, M)
    meta = {}
    try:
        with open(f"{path}.json") as fh:
            meta = json.load(fh)
    except OSError:
        pass
    epsilon = float(meta.get("epsilon", DEFAULT_EPSILON))
    return PromptMatrix(W, epsilon=epsilon), meta


def config_meta(cfg: TrainConfig, extra: dict | None = None) -> dict:
    meta = dataclasses.asdict(cfg)
    if extra:
        meta.update(extra)
    return meta
