"""Product quantization: per-subspace codebooks and compact codes.

Vectors are split into ``num_subspaces`` contiguous subvectors; each
subspace is quantized independently with Lloyd's k-means (k-means++
seeding). Every random draw comes from a Philox counter-based generator
keyed by ``(seed, subspace_index)``, so training output is a pure
function of (data, config) down to the bit.

The trained index persists as a "GMVI v1" file: magic ``GMVI``, u32 LE
version=1, u32 LE num_subspaces, u32 LE subspace_dim, u32 LE
codebook_size, u64 LE count, centroid tables (float32 LE), then codes
(one byte each if codebook_size <= 256, else two bytes LE).
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .embeddings import EmbeddingMatrix
from .errors import ConfigError, CorruptionError, FormatError, InternalError

GMVI_MAGIC = b"GMVI"
GMVI_VERSION = 1

_HEADER = struct.Struct("<4sIIIIQ")  # magic, version, M, subspace_dim, Ks, count
_OFF_VERSION = 4
_OFF_M = 8
_OFF_SUBDIM = 12
_OFF_KS = 16
_OFF_COUNT = 20
_OFF_TABLES = 28

# Relative tolerance for the Lloyd objective monotonicity self-check;
# float64 rounding sits around 1e-16, real regressions far above this.
_OBJECTIVE_SLACK = 1e-9


@dataclass(frozen=True)
class PQConfig:
    num_subspaces: int = 8
    codebook_size: int = 256
    kmeans_iters: int = 25
    seed: int = 0

    def validate(self, dim: int, count: int) -> None:
        if self.num_subspaces < 1:
            raise ConfigError("num_subspaces must be >= 1")
        if not 1 <= self.codebook_size <= 65536:
            raise ConfigError("codebook_size must be in [1, 65536]")
        if self.kmeans_iters < 1:
            raise ConfigError("kmeans_iters must be >= 1")
        if dim % self.num_subspaces != 0:
            raise ConfigError(
                f"dim {dim} is not divisible by num_subspaces {self.num_subspaces}"
            )
        if self.codebook_size > count:
            raise ConfigError(
                f"codebook_size {self.codebook_size} exceeds "
                f"training count {count}"
            )


@dataclass(frozen=True)
class Codebook:
    """Per-subspace centroid tables, shape (M, codebook_size, subspace_dim)."""

    centroids: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.centroids, dtype=np.float32)
        if arr.ndim != 3:
            raise ConfigError("centroids must have shape (M, Ks, subspace_dim)")
        if not np.isfinite(arr).all():
            raise CorruptionError("codebook contains non-finite centroids")
        arr.flags.writeable = False
        object.__setattr__(self, "centroids", arr)

    @property
    def num_subspaces(self) -> int:
        return self.centroids.shape[0]

    @property
    def codebook_size(self) -> int:
        return self.centroids.shape[1]

    @property
    def subspace_dim(self) -> int:
        return self.centroids.shape[2]

    @property
    def dim(self) -> int:
        return self.num_subspaces * self.subspace_dim


@dataclass(frozen=True)
class PQCodes:
    """Code matrix, shape (count, M); each entry addresses a centroid."""

    codes: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.codes)
        if arr.ndim != 2:
            raise CorruptionError("codes must have shape (count, M)")
        if not np.issubdtype(arr.dtype, np.unsignedinteger):
            raise CorruptionError("codes must be unsigned integers")
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "codes", arr)

    @property
    def count(self) -> int:
        return self.codes.shape[0]

    @property
    def num_subspaces(self) -> int:
        return self.codes.shape[1]


def _subspace_rng(seed: int, subspace: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, subspace])))


def _sq_dists_to_point(points: np.ndarray, center: np.ndarray) -> np.ndarray:
    diff = points - center
    return np.einsum("ij,ij->i", diff, diff)


def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding; returns initial centroids (k, dim) float64."""
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = _sq_dists_to_point(points, points[chosen[0]])
    for _ in range(1, k):
        total = float(d2.sum())
        if total > 0.0:
            r = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(d2), r, side="right"))
            idx = min(idx, n - 1)
        else:
            # all remaining mass is on already-chosen points; take the
            # lowest-index point not chosen yet to keep output deterministic
            taken = set(chosen)
            idx = next((i for i in range(n) if i not in taken), chosen[0])
        chosen.append(idx)
        d2 = np.minimum(d2, _sq_dists_to_point(points, points[idx]))
    return points[np.array(chosen)].copy()


def _assign(points: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, float]:
    """Nearest-centroid assignment (ties to lowest index) and objective."""
    # |x-c|^2 = |x|^2 - 2 x.c + |c|^2; the |x|^2 term does not affect argmin
    cross = points @ centroids.T
    c2 = np.einsum("ij,ij->i", centroids, centroids)
    scores = c2[None, :] - 2.0 * cross
    assign = np.argmin(scores, axis=1)
    x2 = np.einsum("ij,ij->i", points, points)
    obj = float(np.maximum(scores[np.arange(points.shape[0]), assign] + x2, 0.0).sum())
    return assign, obj


def _lloyd(points: np.ndarray, k: int, iters: int, rng: np.random.Generator) -> tuple[np.ndarray, list[float]]:
    """Lloyd's algorithm; returns (centroids, per-iteration objectives)."""
    n, d = points.shape
    centroids = _kmeans_pp_init(points, k, rng)
    prev_assign = None
    objectives: list[float] = []
    for _ in range(iters):
        assign, obj = _assign(points, centroids)
        if objectives and obj > objectives[-1] * (1.0 + _OBJECTIVE_SLACK) + 1e-12:
            raise InternalError(
                f"k-means objective increased: {objectives[-1]} -> {obj}"
            )
        objectives.append(obj)
        if prev_assign is not None and np.array_equal(assign, prev_assign):
            break
        sums = np.zeros((k, d))
        np.add.at(sums, assign, points)
        counts = np.bincount(assign, minlength=k)
        empty = np.flatnonzero(counts == 0)
        nonempty = counts > 0
        centroids[nonempty] = sums[nonempty] / counts[nonempty, None]
        for j in empty:
            # reseed an orphaned centroid to the point farthest from its
            # stale position; argmax takes the lowest row index on ties
            far = int(np.argmax(_sq_dists_to_point(points, centroids[j])))
            centroids[j] = points[far]
        prev_assign = assign
    return centroids, objectives


def train_codebooks(data: EmbeddingMatrix, cfg: PQConfig) -> Codebook:
    """Train one k-means codebook per subspace; deterministic in (data, cfg)."""
    cfg.validate(data.dim, data.count)
    sub_dim = data.dim // cfg.num_subspaces
    points = data.data.astype(np.float64)
    tables = np.empty(
        (cfg.num_subspaces, cfg.codebook_size, sub_dim), dtype=np.float32
    )
    for s in range(cfg.num_subspaces):
        sub = np.ascontiguousarray(points[:, s * sub_dim : (s + 1) * sub_dim])
        rng = _subspace_rng(cfg.seed, s)
        centroids, _ = _lloyd(sub, cfg.codebook_size, cfg.kmeans_iters, rng)
        tables[s] = centroids.astype(np.float32)
    return Codebook(tables)


def _code_dtype(codebook_size: int):
    return np.uint8 if codebook_size <= 256 else np.uint16


def encode(data: EmbeddingMatrix, codebook: Codebook, chunk: int = 1024) -> PQCodes:
    """Map each subvector to its nearest centroid (ties to lowest index).

    Distances are evaluated by direct subtraction in float64 so that
    exactly equidistant centroids really compare equal.
    """
    if data.dim != codebook.dim:
        raise ConfigError(
            f"data dim {data.dim} does not match codebook dim {codebook.dim}"
        )
    m, sd = codebook.num_subspaces, codebook.subspace_dim
    codes = np.empty((data.count, m), dtype=_code_dtype(codebook.codebook_size))
    points = data.data.astype(np.float64)
    cents = codebook.centroids.astype(np.float64)
    for s in range(m):
        sub = points[:, s * sd : (s + 1) * sd]
        for lo in range(0, data.count, chunk):
            block = sub[lo : lo + chunk]
            diff = block[:, None, :] - cents[s][None, :, :]
            d2 = np.einsum("ijk,ijk->ij", diff, diff)
            codes[lo : lo + chunk, s] = np.argmin(d2, axis=1)
    return PQCodes(codes)


def decode(codes: PQCodes, codebook: Codebook) -> EmbeddingMatrix:
    """Reconstruct vectors by concatenating the addressed centroids."""
    if codes.num_subspaces != codebook.num_subspaces:
        raise CorruptionError(
            f"codes have {codes.num_subspaces} subspaces, "
            f"codebook has {codebook.num_subspaces}"
        )
    if codes.count and codes.codes.max() >= codebook.codebook_size:
        bad = np.argwhere(codes.codes >= codebook.codebook_size)[0]
        raise CorruptionError(
            f"code {codes.codes[bad[0], bad[1]]} at row {bad[0]}, subspace {bad[1]} "
            f"addresses no centroid (codebook_size {codebook.codebook_size})"
        )
    m, sd = codebook.num_subspaces, codebook.subspace_dim
    out = np.empty((codes.count, codebook.dim), dtype=np.float32)
    for s in range(m):
        out[:, s * sd : (s + 1) * sd] = codebook.centroids[s][codes.codes[:, s]]
    return EmbeddingMatrix(out)


def quantization_error(data: EmbeddingMatrix, codebook: Codebook) -> float:
    """Mean squared Euclidean distance between vectors and reconstructions."""
    recon = decode(encode(data, codebook), codebook)
    diff = data.data.astype(np.float64) - recon.data.astype(np.float64)
    return float(np.einsum("ij,ij->i", diff, diff).mean())


def save_index(codebook: Codebook, codes: PQCodes, path) -> None:
    """Write codebook + codes as a GMVI v1 file."""
    if codes.num_subspaces != codebook.num_subspaces:
        raise CorruptionError("codes/codebook subspace count mismatch")
    header = _HEADER.pack(
        GMVI_MAGIC,
        GMVI_VERSION,
        codebook.num_subspaces,
        codebook.subspace_dim,
        codebook.codebook_size,
        codes.count,
    )
    code_dtype = "<u1" if codebook.codebook_size <= 256 else "<u2"
    with open(Path(path), "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(codebook.centroids, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(codes.codes, dtype=code_dtype).tobytes())


def load_index(path) -> tuple[Codebook, PQCodes]:
    """Read a GMVI v1 file back into (Codebook, PQCodes)."""
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < _OFF_TABLES:
        raise FormatError(
            f"{path}: truncated header, file ends at byte {len(blob)} "
            f"but the header needs {_OFF_TABLES} bytes"
        )
    magic, version, m, sub_dim, ks, count = _HEADER.unpack_from(blob, 0)
    if magic != GMVI_MAGIC:
        off = next(i for i in range(4) if magic[i] != GMVI_MAGIC[i])
        raise FormatError(
            f"{path}: bad magic at byte {off}, expected {GMVI_MAGIC!r} found {magic!r}"
        )
    if version != GMVI_VERSION:
        raise FormatError(f"{path}: unsupported version {version} at byte {_OFF_VERSION}")
    if m < 1:
        raise FormatError(f"{path}: num_subspaces must be >= 1 (byte {_OFF_M})")
    if sub_dim < 1:
        raise FormatError(f"{path}: subspace_dim must be >= 1 (byte {_OFF_SUBDIM})")
    if not 1 <= ks <= 65536:
        raise FormatError(f"{path}: codebook_size out of range (byte {_OFF_KS})")
    table_bytes = m * ks * sub_dim * 4
    code_width = 1 if ks <= 256 else 2
    code_bytes = count * m * code_width
    expected = _OFF_TABLES + table_bytes + code_bytes
    if len(blob) != expected:
        raise FormatError(
            f"{path}: wrong size at byte {min(len(blob), expected)}, "
            f"expected {expected} bytes total, found {len(blob)}"
        )
    tables = np.frombuffer(
        blob, dtype="<f4", count=m * ks * sub_dim, offset=_OFF_TABLES
    ).reshape(m, ks, sub_dim)
    codes = np.frombuffer(
        blob,
        dtype="<u1" if code_width == 1 else "<u2",
        count=count * m,
        offset=_OFF_TABLES + table_bytes,
    ).reshape(count, m)
    if codes.size and codes.max() >= ks:
        raise CorruptionError(f"{path}: code value >= codebook_size {ks}")
    return Codebook(tables), PQCodes(codes)
