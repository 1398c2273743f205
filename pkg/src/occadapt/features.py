"""Feature matrices: OCCF binary / CSV persistence and synthetic benchmark data.

OCCF binary layout (little-endian):
    magic   4 bytes  "OCCF" (4F 43 43 46)
    version u32      = 1
    flags   u8       bit0: labels present
    n       u64      number of rows
    d       u64      feature dimension
    data    n*d f32  row-major
    labels  n*i32    only when flags bit0 is set

CSV layout: header ``f0,f1,...,f{d-1}[,label]``, one sample per line, floats
printed with shortest round-trip formatting.  The binary format is the source
of truth; CSV exists for interop and eyeballing.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import CenterSamplingFailed, FormatError, IoError
from .numeric import l2_normalize, make_rng

MAGIC = b"OCCF"
VERSION = 1
_HEADER = struct.Struct("<4sIBQQ")

# Labels: training files carry class ids >= 0; test files use 0 = inlier,
# 1 = outlier (the positive class for AUROC).
LABEL_INLIER = 0
LABEL_OUTLIER = 1


@dataclass
class FeatureMatrix:
    """n x d float32 embedding matrix with optional integer row labels."""

    data: np.ndarray
    labels: Optional[np.ndarray] = None
    ids: Optional[list] = None

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.data.ndim != 2:
            raise FormatError(f"expected 2-D data, got shape {self.data.shape}")
        n, d = self.data.shape
        if n < 1 or d < 2:
            raise FormatError(f"need n >= 1 and d >= 2, got n={n}, d={d}")
        if not np.all(np.isfinite(self.data)):
            raise FormatError("non-finite value in feature data")
        if self.labels is not None:
            self.labels = np.ascontiguousarray(self.labels, dtype=np.int32)
            if self.labels.shape != (n,):
                raise FormatError(
                    f"labels shape {self.labels.shape} != ({n},)")
        if self.ids is not None and len(self.ids) != n:
            raise FormatError(f"{len(self.ids)} ids for {n} rows")

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]


def to_bytes(fm: FeatureMatrix) -> bytes:
    """Serialize to the OCCF binary layout."""
    flags = 1 if fm.labels is not None else 0
    parts = [_HEADER.pack(MAGIC, VERSION, flags, fm.n, fm.d),
             fm.data.astype("<f4").tobytes()]
    if fm.labels is not None:
        parts.append(fm.labels.astype("<i4").tobytes())
    return b"".join(parts)


def from_bytes(buf: bytes) -> FeatureMatrix:
    """Parse an OCCF binary blob, validating magic, version, and payload."""
    if len(buf) < _HEADER.size:
        raise FormatError("truncated header")
    magic, version, flags, n, d = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    if flags & ~1:
        raise FormatError(f"unknown flag bits in {flags:#x}")
    off = _HEADER.size
    need = off + n * d * 4 + (n * 4 if flags & 1 else 0)
    if len(buf) != need:
        raise FormatError(f"payload size {len(buf)} != expected {need}")
    data = np.frombuffer(buf, dtype="<f4", count=n * d, offset=off)
    data = data.reshape(n, d).copy()
    labels = None
    if flags & 1:
        labels = np.frombuffer(buf, dtype="<i4", count=n,
                               offset=off + n * d * 4).copy()
    return FeatureMatrix(data=data, labels=labels)


def save_features(fm: FeatureMatrix, path, format: str = "binary") -> None:
    """Write a FeatureMatrix as OCCF binary or CSV."""
    try:
        if format == "binary":
            with open(path, "wb") as f:
                f.write(to_bytes(fm))
        elif format == "csv":
            with open(path, "w") as f:
                cols = [f"f{j}" for j in range(fm.d)]
                if fm.labels is not None:
                    cols.append("label")
                f.write(",".join(cols) + "\n")
                for i in range(fm.n):
                    cells = [np.format_float_positional(x, unique=True)
                             for x in fm.data[i]]
                    if fm.labels is not None:
                        cells.append(str(int(fm.labels[i])))
                    f.write(",".join(cells) + "\n")
        else:
            raise ValueError(f"unknown format {format!r}")
    except OSError as e:
        raise IoError(str(e)) from e


def load_features(path) -> FeatureMatrix:
    """Load a feature file, auto-detecting OCCF binary vs CSV by magic."""
    try:
        with open(path, "rb") as f:
            buf = f.read()
    except OSError as e:
        raise IoError(str(e)) from e
    if buf[:4] == MAGIC:
        return from_bytes(buf)
    return _parse_csv(buf, path)


def _parse_csv(buf: bytes, path) -> FeatureMatrix:
    try:
        text = buf.decode("utf-8")
    except UnicodeDecodeError as e:
        raise FormatError(f"{path}: not OCCF and not text") from e
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise FormatError(f"{path}: empty file")
    header = lines[0].split(",")
    has_labels = header[-1].strip() == "label"
    d = len(header) - (1 if has_labels else 0)
    for j in range(d):
        if header[j].strip() != f"f{j}":
            raise FormatError(f"{path}: bad header column {header[j]!r}")
    rows, labels = [], []
    for ln_no, ln in enumerate(lines[1:], start=2):
        cells = ln.split(",")
        if len(cells) != len(header):
            raise FormatError(f"{path}:{ln_no}: expected {len(header)} cells")
        try:
            vals = [float(c) for c in cells[:d]]
        except ValueError as e:
            raise FormatError(f"{path}:{ln_no}: {e}") from e
        if not all(np.isfinite(vals)):
            raise FormatError(f"{path}:{ln_no}: non-finite value")
        rows.append(vals)
        if has_labels:
            try:
                labels.append(int(cells[d]))
            except ValueError as e:
                raise FormatError(f"{path}:{ln_no}: bad label") from e
    if not rows:
        raise FormatError(f"{path}: no data rows")
    return FeatureMatrix(
        data=np.array(rows, dtype=np.float32),
        labels=np.array(labels, dtype=np.int32) if has_labels else None)


@dataclass
class SyntheticSpec:
    """Gaussian clusters on the unit sphere mimicking pre-trained geometry:
    class centers are mutually spread out, samples of one class stay adjacent.
    """

    d: int = 32
    m: int = 4                    # inlier classes
    n_per_class: int = 64
    noise_sigma: float = 0.05
    o: int = 1                    # outlier classes
    n_per_outlier_class: int = 64
    min_center_cosine_gap: float = 0.5   # max allowed pairwise center cosine
    # Log-std of a per-sample radius multiplier.  0 gives plain isotropic
    # Gaussian clusters; > 0 spreads samples from dense cores to sparse
    # edges, the density profile the hard-weight gate relies on.
    radial_spread: float = 0.0
    # "separated": outlier centers rejection-sampled under the same gap as
    # inlier centers.  "between": each outlier center is the normalized mean
    # of a random pair of inlier centers (near-distribution outliers living
    # inside the inlier span; needs m >= 2).  "edge": outlier centers are
    # inlier centers themselves, so outliers form a wide shell around an
    # inlier class (use with outlier_noise_factor > 1).
    outlier_mode: str = "separated"
    # Noise multiplier for outlier draws; > 1 spreads outliers into the edge
    # regions of the inlier classes (the overlapping near-distribution case).
    outlier_noise_factor: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.m < 1 or self.o < 1 or self.d < 2:
            raise ValueError("need m >= 1, o >= 1, d >= 2")
        if not self.noise_sigma > 0:
            raise ValueError("noise_sigma must be > 0")
        if self.radial_spread < 0:
            raise ValueError("radial_spread must be >= 0")
        if self.outlier_mode not in ("separated", "between", "edge"):
            raise ValueError(f"unknown outlier_mode {self.outlier_mode!r}")
        if self.outlier_mode == "between" and self.m < 2:
            raise ValueError("outlier_mode 'between' needs m >= 2")
        if not self.outlier_noise_factor > 0:
            raise ValueError("outlier_noise_factor must be > 0")
        if not -1 < self.min_center_cosine_gap < 1:
            raise ValueError("min_center_cosine_gap must be in (-1, 1)")
        if self.n_per_class < 1 or self.n_per_outlier_class < 1:
            raise ValueError("per-class counts must be >= 1")


_CENTER_BUDGET = 10_000


def _sample_centers(rng, count: int, d: int, max_cos: float) -> np.ndarray:
    """Rejection-sample `count` unit vectors with pairwise cosine <= max_cos."""
    centers = []
    for _ in range(_CENTER_BUDGET):
        cand = l2_normalize(rng.standard_normal(d))
        if all(float(np.dot(cand.astype(np.float64), c.astype(np.float64)))
               <= max_cos for c in centers):
            centers.append(cand)
            if len(centers) == count:
                return np.stack(centers)
    raise CenterSamplingFailed(
        f"placed {len(centers)}/{count} centers in {_CENTER_BUDGET} draws "
        f"(d={d}, max cosine {max_cos})")


def gen_synthetic(spec: SyntheticSpec):
    """Generate (train, test) feature matrices from a SyntheticSpec.

    Train holds the m inlier classes with class-id labels; test holds fresh
    inlier draws (label 0) plus outlier draws (label 1).
    """
    rng = make_rng(spec.seed)
    if spec.outlier_mode == "edge":
        inlier_centers = _sample_centers(rng, spec.m, spec.d,
                                         spec.min_center_cosine_gap)
        picks = rng.choice(spec.m, size=spec.o, replace=spec.o > spec.m)
        outlier_centers = inlier_centers[np.sort(picks)]
    elif spec.outlier_mode == "between":
        inlier_centers = _sample_centers(rng, spec.m, spec.d,
                                         spec.min_center_cosine_gap)
        outlier_centers = []
        for _ in range(spec.o):
            i, j = rng.choice(spec.m, size=2, replace=False)
            mix = (inlier_centers[i].astype(np.float64)
                   + inlier_centers[j].astype(np.float64))
            outlier_centers.append(l2_normalize(mix))
        outlier_centers = np.stack(outlier_centers)
    else:
        centers = _sample_centers(rng, spec.m + spec.o, spec.d,
                                  spec.min_center_cosine_gap)
        inlier_centers = centers[:spec.m]
        outlier_centers = centers[spec.m:]

    def draw(center, count, noise_factor=1.0):
        noise = rng.standard_normal((count, spec.d)) * spec.noise_sigma
        if spec.radial_spread > 0:
            scale = np.exp(rng.standard_normal(count) * spec.radial_spread)
            noise *= scale[:, None]
        return (center.astype(np.float64)
                + noise * noise_factor).astype(np.float32)

    train_rows, train_labels = [], []
    for c, center in enumerate(inlier_centers):
        train_rows.append(draw(center, spec.n_per_class))
        train_labels.append(np.full(spec.n_per_class, c, dtype=np.int32))

    test_rows, test_labels = [], []
    for center in inlier_centers:
        test_rows.append(draw(center, spec.n_per_class))
        test_labels.append(
            np.full(spec.n_per_class, LABEL_INLIER, dtype=np.int32))
    for center in outlier_centers:
        test_rows.append(draw(center, spec.n_per_outlier_class,
                              spec.outlier_noise_factor))
        test_labels.append(
            np.full(spec.n_per_outlier_class, LABEL_OUTLIER, dtype=np.int32))

    train = FeatureMatrix(data=np.concatenate(train_rows),
                          labels=np.concatenate(train_labels))
    test = FeatureMatrix(data=np.concatenate(test_rows),
                         labels=np.concatenate(test_labels))
    return train, test
