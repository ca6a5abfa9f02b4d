"""Feature ingestion, batching, and the synthetic sequence-labeling task.

Feature files use the QFEA binary container (bit-exact round-trips, no
external dependencies):

    magic "QFEA" | version u32=1 | utterance count u32
    per utterance: id length u32 | id bytes UTF-8 | T u32 | D u32
                   | T*D float32 row-major | T int32 labels

All integers and floats are little-endian. A CSV fallback
(`id,frame,label,f0..f{D-1}` header, one row per frame) covers hand-written
fixtures.

The synthetic task is framewise classification with C classes over
D-dimensional frames. Utterances are concatenations of random-length
segments; each segment draws a class and emits its spectral template plus
Gaussian noise. The last two classes are *delta-coded*: they share one
template exactly and differ only in the sign of a temporal ramp centred on
the segment midpoint, so their single-frame marginal distributions are
identical and only temporal context can separate them.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass

import numpy as np

from qnn.errors import ConfigError, DataError, FormatError

QFEA_MAGIC = b"QFEA"
QFEA_VERSION = 1


@dataclass
class Utterance:
    id: str
    features: np.ndarray  # (T, D) float32
    labels: np.ndarray    # (T,) int32

    def validate(self) -> None:
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise DataError(f"utterance '{self.id}': features must be (T>=1, D), got {self.features.shape}")
        if self.labels.shape != (self.features.shape[0],):
            raise DataError(
                f"utterance '{self.id}': label length {self.labels.shape} does not match T={self.features.shape[0]}"
            )
        if not np.isfinite(self.features).all():
            t, d = np.argwhere(~np.isfinite(self.features))[0]
            raise DataError(f"utterance '{self.id}': non-finite feature at frame {t}, dim {d}")

    def __len__(self) -> int:
        return self.features.shape[0]


@dataclass
class UtteranceBatch:
    features: np.ndarray  # (T_max, B, D), zero on padded frames
    labels: np.ndarray    # (T_max, B) int32
    mask: np.ndarray      # (T_max, B) bool, True on valid frames
    ids: tuple

    @property
    def valid_frames(self) -> int:
        return int(self.mask.sum())


def write_features(path: str, utterances: list) -> None:
    with open(path, "wb") as fh:
        fh.write(QFEA_MAGIC)
        fh.write(struct.pack("<II", QFEA_VERSION, len(utterances)))
        for utt in utterances:
            utt.validate()
            ident = utt.id.encode("utf-8")
            t_len, dim = utt.features.shape
            fh.write(struct.pack("<I", len(ident)))
            fh.write(ident)
            fh.write(struct.pack("<II", t_len, dim))
            fh.write(np.ascontiguousarray(utt.features, dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(utt.labels, dtype="<i4").tobytes())


class _Reader:
    """Byte-counting wrapper so format errors can name the offset."""

    def __init__(self, fh):
        self.fh = fh
        self.offset = 0

    def take(self, n: int, what: str) -> bytes:
        chunk = self.fh.read(n)
        if len(chunk) != n:
            raise FormatError(
                f"truncated QFEA file: wanted {n} bytes for {what} at byte offset {self.offset}, got {len(chunk)}"
            )
        self.offset += n
        return chunk

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]


def _read_qfea(fh) -> list:
    reader = _Reader(fh)
    magic = reader.take(4, "magic")
    if magic != QFEA_MAGIC:
        raise FormatError(f"bad magic {magic!r} at byte offset 0 (expected {QFEA_MAGIC!r})")
    version = reader.u32("version")
    if version != QFEA_VERSION:
        raise FormatError(f"unsupported QFEA version {version} at byte offset 4")
    count = reader.u32("utterance count")
    utterances = []
    for index in range(count):
        id_len = reader.u32(f"id length of utterance {index}")
        ident = reader.take(id_len, f"id of utterance {index}").decode("utf-8")
        t_len = reader.u32(f"frame count of '{ident}'")
        dim = reader.u32(f"feature dim of '{ident}'")
        feat_bytes = reader.take(4 * t_len * dim, f"features of '{ident}'")
        label_bytes = reader.take(4 * t_len, f"labels of '{ident}'")
        features = np.frombuffer(feat_bytes, dtype="<f4").reshape(t_len, dim).astype(np.float32)
        labels = np.frombuffer(label_bytes, dtype="<i4").astype(np.int32)
        utt = Utterance(ident, features, labels)
        utt.validate()
        utterances.append(utt)
    return utterances


def _read_csv(path: str) -> list:
    order = []
    rows = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty CSV file") from None
        if header[:3] != ["id", "frame", "label"] or any(
            name != f"f{i}" for i, name in enumerate(header[3:])
        ):
            raise FormatError(f"{path}: CSV header must be id,frame,label,f0..f{{D-1}}, got {header}")
        dim = len(header) - 3
        if dim < 1:
            raise FormatError(f"{path}: CSV header declares no feature columns")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3 + dim:
                raise FormatError(f"{path}:{lineno}: expected {3 + dim} fields, got {len(row)}")
            ident = row[0]
            try:
                frame = int(row[1])
                label = int(row[2])
                values = [float(v) for v in row[3:]]
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
            if ident not in rows:
                rows[ident] = {}
                order.append(ident)
            if frame in rows[ident]:
                raise FormatError(f"{path}:{lineno}: duplicate frame {frame} for utterance '{ident}'")
            rows[ident][frame] = (label, values)
    utterances = []
    for ident in order:
        frames = rows[ident]
        t_len = len(frames)
        if sorted(frames) != list(range(t_len)):
            raise FormatError(f"{path}: utterance '{ident}' frames are not contiguous from 0")
        features = np.array([frames[t][1] for t in range(t_len)], dtype=np.float32)
        labels = np.array([frames[t][0] for t in range(t_len)], dtype=np.int32)
        utt = Utterance(ident, features, labels)
        utt.validate()
        utterances.append(utt)
    return utterances


def read_features(path: str) -> list:
    """Read a QFEA file, falling back to CSV when the magic is absent."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == QFEA_MAGIC:
        with open(path, "rb") as fh:
            return _read_qfea(fh)
    if head[:3] in (b"id,", b"\xef\xbb\xbfi"):
        return _read_csv(path)
    raise FormatError(f"{path}: bad magic {head!r} at byte offset 0 (expected {QFEA_MAGIC!r} or a CSV header)")


def naive_quat_compose(features: np.ndarray) -> np.ndarray:
    """Reinterpret each frame of D reals as ceil(D/4) quaternions.

    Coefficients (4k, 4k+1, 4k+2, 4k+3) become quaternion k = (r, x, y, z),
    repacked to the quarter-block layout. Widths not divisible by 4 are
    zero-padded on the right first. Works on any leading shape (..., D).
    """
    dim = features.shape[-1]
    pad = (-dim) % 4
    if pad:
        widths = [(0, 0)] * (features.ndim - 1) + [(0, pad)]
        features = np.pad(features, widths)
    quats = (dim + pad) // 4
    grouped = features.reshape(features.shape[:-1] + (quats, 4))
    return np.ascontiguousarray(grouped.swapaxes(-1, -2)).reshape(features.shape[:-1] + (4 * quats,))


def naive_quat_decompose(packed: np.ndarray) -> np.ndarray:
    """Inverse of naive_quat_compose on the padded width."""
    width = packed.shape[-1]
    if width % 4 != 0:
        raise DataError(f"quarter-block width must be divisible by 4, got {width}")
    quats = width // 4
    grouped = packed.reshape(packed.shape[:-1] + (4, quats))
    return np.ascontiguousarray(grouped.swapaxes(-1, -2)).reshape(packed.shape[:-1] + (width,))


@dataclass
class SynthSpec:
    classes: int = 4
    dim: int = 40
    seg_min: int = 8          # frames per segment, inclusive bounds
    seg_max: int = 16
    segments_per_utt: int = 6
    train_utts: int = 200
    valid_utts: int = 60
    test_utts: int = 60
    noise: float = 0.1
    slope: float = 0.05       # per-frame ramp step for the delta-coded pair
    seed: int = 0

    def validate(self) -> None:
        if self.classes < 2:
            raise ConfigError(f"synthetic task needs classes >= 2, got {self.classes}")
        if self.dim < 4:
            raise ConfigError(f"synthetic task needs dim >= 4, got {self.dim}")
        if not 1 <= self.seg_min <= self.seg_max:
            raise ConfigError(f"need 1 <= seg_min <= seg_max, got {self.seg_min}..{self.seg_max}")
        if self.segments_per_utt < 1:
            raise ConfigError(f"segments_per_utt must be >= 1, got {self.segments_per_utt}")
        if min(self.train_utts, self.valid_utts, self.test_utts) < 1:
            raise ConfigError("each split needs at least one utterance")
        if self.noise < 0:
            raise ConfigError(f"noise must be >= 0, got {self.noise}")

    @property
    def delta_classes(self) -> tuple:
        """The two classes distinguishable only through temporal context."""
        return (self.classes - 2, self.classes - 1)


def class_templates(spec: SynthSpec) -> np.ndarray:
    """(C, D) mean spectra: one Gaussian bump per class; the delta-coded
    pair shares the last bump exactly."""
    n_bumps = spec.classes - 1
    centers = np.linspace(0.15, 0.85, n_bumps) * (spec.dim - 1)
    width = max(spec.dim / 10.0, 1.0)
    dims = np.arange(spec.dim)
    bumps = np.exp(-0.5 * ((dims[None, :] - centers[:, None]) / width) ** 2)
    return np.concatenate([bumps, bumps[-1:]], axis=0).astype(np.float64)


def _synth_split(spec: SynthSpec, templates: np.ndarray, name: str, count: int,
                 rng: np.random.Generator) -> list:
    lo, hi = spec.delta_classes
    utterances = []
    for i in range(count):
        feats, labels = [], []
        for _ in range(spec.segments_per_utt):
            cls = int(rng.integers(spec.classes))
            length = int(rng.integers(spec.seg_min, spec.seg_max + 1))
            ramp = np.arange(length, dtype=np.float64) - (length - 1) / 2.0
            slope = spec.slope if cls == hi else (-spec.slope if cls == lo else 0.0)
            segment = templates[cls][None, :] + slope * ramp[:, None]
            segment = segment + spec.noise * rng.standard_normal((length, spec.dim))
            feats.append(segment)
            labels.append(np.full(length, cls, dtype=np.int32))
        utterances.append(
            Utterance(
                f"{name}-{i:04d}",
                np.concatenate(feats).astype(np.float32),
                np.concatenate(labels),
            )
        )
    return utterances


def generate_synthetic(spec: SynthSpec):
    """(train, valid, test) utterance lists; splits use disjoint seed streams."""
    spec.validate()
    templates = class_templates(spec)
    seeds = np.random.SeedSequence(spec.seed).spawn(3)
    return tuple(
        _synth_split(spec, templates, name, count, np.random.default_rng(seed))
        for name, count, seed in zip(
            ("train", "valid", "test"),
            (spec.train_utts, spec.valid_utts, spec.test_utts),
            seeds,
        )
    )


def make_batches(utterances: list, batch_size: int, rng=None, sort_by_length: bool = False) -> list:
    """Group utterances into right-padded batches.

    With rng given the utterance order (or, under sort_by_length, the batch
    order) is shuffled; sort_by_length buckets similar lengths together to
    limit padding.
    """
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    if not utterances:
        return []
    order = list(range(len(utterances)))
    if sort_by_length:
        order.sort(key=lambda i: (len(utterances[i]), i))
    elif rng is not None:
        order = list(rng.permutation(len(utterances)))
    chunks = [order[i:i + batch_size] for i in range(0, len(order), batch_size)]
    if sort_by_length and rng is not None:
        chunks = [chunks[i] for i in rng.permutation(len(chunks))]

    dim = utterances[0].features.shape[1]
    batches = []
    for chunk in chunks:
        members = [utterances[i] for i in chunk]
        t_max = max(len(u) for u in members)
        feats = np.zeros((t_max, len(members), dim), dtype=np.float32)
        labels = np.zeros((t_max, len(members)), dtype=np.int32)
        mask = np.zeros((t_max, len(members)), dtype=bool)
        for b, utt in enumerate(members):
            t_len = len(utt)
            feats[:t_len, b, :] = utt.features
            labels[:t_len, b] = utt.labels
            mask[:t_len, b] = True
        batches.append(UtteranceBatch(feats, labels, mask, tuple(u.id for u in members)))
    return batches


def total_frames(utterances: list) -> int:
    return sum(len(u) for u in utterances)
