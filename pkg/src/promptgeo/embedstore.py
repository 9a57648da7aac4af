"""Binary embedding dataset container (`.sbcp`): read, write, validate.

File layout (all integers u32 little-endian, all floats f32 little-endian):

    bytes 0..3   magic "SBCP"
    7 x u32      version (=1), D, K, H_loc, W_map, N, flags
    K*D f32      class table, row-major (class embeddings c_k)
    N records    u32 label, D f32 global feature,
                 and when flag bit0 is set: H_loc*W_map*D f32 local features,
                 region-major (region index i = h*W_map + w)

Flags: bit0 = local features present, bit1 = features stored pre-normalized.
All other bits must be zero.

Header invariants: D >= 1, K >= 2, H_loc >= 1 and W_map >= 1 when bit0 is
set, N >= 0.  N = 0 is legal and is the convention for frozen-text-feature
files, whose payload is the class table alone.

The declared sizes must match the file length exactly; a file that is
truncated or carries trailing bytes is rejected as a whole (no partial data).
Payloads round-trip bit-exactly: floats are widened to float64 in memory and
narrow back to the identical f32 bytes on write.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, FormatError, IoError, SchemaError

MAGIC = b"SBCP"
VERSION = 1
FLAG_HAS_LOCALS = 1
FLAG_PRE_NORMALIZED = 2
_KNOWN_FLAGS = FLAG_HAS_LOCALS | FLAG_PRE_NORMALIZED
_HEADER_STRUCT = struct.Struct("<7I")
_HEADER_SIZE = 4 + _HEADER_STRUCT.size

# tolerance for the bit1 claim; generous because rows were rounded to f32
_UNIT_NORM_TOL = 1e-3


@dataclass(frozen=True)
class DatasetHeader:
    """Parsed fixed-width header of an `.sbcp` file."""

    version: int
    D: int
    K: int
    H_loc: int
    W_map: int
    N: int
    flags: int

    @property
    def has_locals(self) -> bool:
        return bool(self.flags & FLAG_HAS_LOCALS)

    @property
    def pre_normalized(self) -> bool:
        return bool(self.flags & FLAG_PRE_NORMALIZED)

    @property
    def regions(self) -> int:
        return self.H_loc * self.W_map if self.has_locals else 0


@dataclass(frozen=True)
class ClassTable:
    """Per-class name embeddings c_k, one row per class."""

    embeddings: np.ndarray  # (K, D) float64

    @property
    def K(self) -> int:
        return self.embeddings.shape[0]

    @property
    def D(self) -> int:
        return self.embeddings.shape[1]


@dataclass(frozen=True)
class EmbeddingRecord:
    """One image's cached features: label, global vector, local grid."""

    label: int
    global_feat: np.ndarray  # (D,) float64
    local_feats: np.ndarray | None  # (H_loc*W_map, D) float64, or None


@dataclass(frozen=True)
class Dataset:
    """A fully loaded `.sbcp` file.

    `labels`, `global_feats` and `local_feats` are the stacked payload arrays
    (float64 in memory); `records` presents the same data as per-record views.
    """

    header: DatasetHeader
    classes: ClassTable
    labels: np.ndarray  # (N,) int64
    global_feats: np.ndarray  # (N, D) float64
    local_feats: np.ndarray | None  # (N, R, D) float64 or None

    @property
    def records(self) -> list[EmbeddingRecord]:
        loc = self.local_feats
        return [
            EmbeddingRecord(
                int(self.labels[i]),
                self.global_feats[i],
                None if loc is None else loc[i],
            )
            for i in range(self.header.N)
        ]


@dataclass(frozen=True)
class Violation:
    """One invariant violation found by validate_dataset."""

    record: int | None
    region: int | None
    message: str

    def __str__(self) -> str:
        where = ""
        if self.record is not None:
            where = f"record {self.record}"
            if self.region is not None:
                where += f", region {self.region}"
            where += ": "
        return where + self.message


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, message: str, record: int | None = None, region: int | None = None):
        self.violations.append(Violation(record, region, message))

    def __str__(self) -> str:
        if self.ok:
            return "valid: no violations"
        lines = [f"{len(self.violations)} violation(s):"]
        lines += [f"  - {v}" for v in self.violations]
        return "\n".join(lines)


def _record_dtype(D: int, regions: int) -> np.dtype:
    fields = [("label", "<u4"), ("global", "<f4", (D,))]
    if regions:
        fields.append(("locals", "<f4", (regions, D)))
    return np.dtype(fields)


def _check_header(h: DatasetHeader) -> None:
    if h.version != VERSION:
        raise FormatError(f"unsupported version {h.version}; this reader handles {VERSION}")
    if h.flags & ~_KNOWN_FLAGS:
        raise SchemaError(f"unknown flag bits 0x{h.flags & ~_KNOWN_FLAGS:x} set")
    if h.D < 1:
        raise SchemaError(f"D must be >= 1, got {h.D}")
    if h.K < 2:
        raise SchemaError(f"K must be >= 2, got {h.K}")
    if h.has_locals and (h.H_loc < 1 or h.W_map < 1):
        raise SchemaError(
            f"H_loc and W_map must be >= 1 when locals are present, got {h.H_loc}x{h.W_map}"
        )


def read_dataset(path, validate: bool = True) -> Dataset:
    """Load and fully validate an `.sbcp` file.

    Raises FormatError for anything structural (magic, version, byte length),
    SchemaError for header invariant violations, DataError for payload value
    violations, IoError for filesystem failures. `validate=False` skips only
    the payload value scan (callers that want the Violation list instead of
    an exception run `validate_dataset` themselves).
    """
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc

    if len(buf) < _HEADER_SIZE:
        raise FormatError(f"file too short for header ({len(buf)} bytes)")
    if buf[:4] != MAGIC:
        raise FormatError(f"bad magic {buf[:4]!r}, expected {MAGIC!r}")
    header = DatasetHeader(*_HEADER_STRUCT.unpack_from(buf, 4))
    _check_header(header)

    regions = header.regions
    rec_size = 4 + 4 * header.D + 4 * regions * header.D
    expected = _HEADER_SIZE + 4 * header.K * header.D + header.N * rec_size
    if len(buf) != expected:
        kind = "truncated" if len(buf) < expected else "trailing bytes:"
        raise FormatError(
            f"{kind} file is {len(buf)} bytes but header declares {expected}"
        )

    class_f32 = np.frombuffer(buf, dtype="<f4", count=header.K * header.D, offset=_HEADER_SIZE)
    class_emb = class_f32.reshape(header.K, header.D).astype(np.float64)

    rec_off = _HEADER_SIZE + 4 * header.K * header.D
    if header.N:
        raw = np.frombuffer(buf, dtype=_record_dtype(header.D, regions), count=header.N, offset=rec_off)
        labels = raw["label"].astype(np.int64)
        global_feats = raw["global"].astype(np.float64)
        local_feats = raw["locals"].astype(np.float64) if regions else None
    else:
        labels = np.zeros(0, dtype=np.int64)
        global_feats = np.zeros((0, header.D))
        local_feats = np.zeros((0, regions, header.D)) if regions else None

    ds = Dataset(header, ClassTable(class_emb), labels, global_feats, local_feats)
    if validate:
        report = validate_dataset(ds)
        if not report.ok:
            raise DataError(f"{path}: {report}")
    return ds


def validate_dataset(ds: Dataset) -> ValidationReport:
    """Scan every invariant; the report is empty iff the dataset is valid.

    Never raises: violations become report entries citing the record (and,
    for local features, the region) they were found in.
    """
    rep = ValidationReport()
    h = ds.header
    K, D = ds.classes.embeddings.shape
    if (K, D) != (h.K, h.D):
        rep.add(f"class table is {K}x{D}, header declares {h.K}x{h.D}")
        return rep

    for k in range(K):
        row = ds.classes.embeddings[k]
        if not np.all(np.isfinite(row)):
            rep.add(f"class embedding {k} has non-finite entries")
        elif not row.any():
            rep.add(f"class embedding {k} has zero norm")

    if ds.global_feats.shape != (h.N, h.D):
        rep.add(f"global features are {ds.global_feats.shape}, expected ({h.N}, {h.D})")
        return rep
    if h.has_locals:
        if ds.local_feats is None or ds.local_feats.shape != (h.N, h.regions, h.D):
            rep.add(f"local features missing or misshaped, expected ({h.N}, {h.regions}, {h.D})")
            return rep
    elif ds.local_feats is not None:
        rep.add("local features present but flag bit0 is unset")
        return rep

    for i in range(h.N):
        if not 0 <= ds.labels[i] < h.K:
            rep.add(f"label {ds.labels[i]} outside [0, {h.K})", record=i)
        g = ds.global_feats[i]
        if not np.all(np.isfinite(g)):
            rep.add("global feature has non-finite entries", record=i)
        elif not g.any():
            rep.add("global feature has zero norm", record=i)
        if h.has_locals:
            loc = ds.local_feats[i]
            finite = np.isfinite(loc).all(axis=1)
            nonzero = loc.any(axis=1)
            for r in np.flatnonzero(~finite):
                rep.add("local feature has non-finite entries", record=i, region=int(r))
            for r in np.flatnonzero(finite & ~nonzero):
                rep.add("local feature has zero norm", record=i, region=int(r))

    if h.pre_normalized:
        norms = [np.linalg.norm(ds.classes.embeddings, axis=1)]
        if h.N:
            norms.append(np.linalg.norm(ds.global_feats, axis=1))
            if h.has_locals:
                norms.append(np.linalg.norm(ds.local_feats, axis=2).ravel())
        worst = max(float(np.abs(n - 1.0).max()) for n in norms if n.size)
        if worst > _UNIT_NORM_TOL:
            rep.add(f"pre-normalized flag set but a row norm deviates from 1 by {worst:.2e}")
    return rep


def write_dataset(header: DatasetHeader, classes: ClassTable, records, path) -> None:
    """Serialize to the byte layout above; byte-identical for identical input.

    Raises SchemaError when the payload shapes or label bounds disagree with
    the header, DataError for non-finite values, IoError on filesystem
    failure.
    """
    _check_header(header)
    records = list(records)
    if len(records) != header.N:
        raise SchemaError(f"header declares N={header.N} but {len(records)} records given")
    if classes.embeddings.shape != (header.K, header.D):
        raise SchemaError(
            f"class table is {classes.embeddings.shape}, header declares ({header.K}, {header.D})"
        )
    if not np.all(np.isfinite(classes.embeddings)):
        raise DataError("class table has non-finite entries")

    regions = header.regions
    out = np.zeros(header.N, dtype=_record_dtype(header.D, regions))
    for i, rec in enumerate(records):
        if not 0 <= rec.label < header.K:
            raise SchemaError(f"record {i}: label {rec.label} outside [0, {header.K})")
        if rec.global_feat.shape != (header.D,):
            raise SchemaError(f"record {i}: global feature shape {rec.global_feat.shape}")
        if header.has_locals:
            if rec.local_feats is None or rec.local_feats.shape != (regions, header.D):
                raise SchemaError(f"record {i}: expected {regions}x{header.D} local features")
        elif rec.local_feats is not None:
            raise SchemaError(f"record {i}: locals given but flag bit0 is unset")
        if not np.all(np.isfinite(rec.global_feat)) or (
            header.has_locals and not np.all(np.isfinite(rec.local_feats))
        ):
            raise DataError(f"record {i}: non-finite feature values")
        out[i]["label"] = rec.label
        out[i]["global"] = rec.global_feat.astype(np.float32)
        if regions:
            out[i]["locals"] = rec.local_feats.astype(np.float32)

    blob = bytearray()
    blob += MAGIC
    blob += _HEADER_STRUCT.pack(
        header.version, header.D, header.K, header.H_loc, header.W_map, header.N, header.flags
    )
    blob += classes.embeddings.astype(np.float32).tobytes()
    blob += out.tobytes()
    try:
        with open(path, "wb") as fh:
            fh.write(blob)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def write_manifest(path, class_names: list[str]) -> None:
    """Optional JSON sidecar mapping class indices to readable names."""
    try:
        with open(path, "w") as fh:
            json.dump({"class_names": class_names}, fh, indent=2)
            fh.write("\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
