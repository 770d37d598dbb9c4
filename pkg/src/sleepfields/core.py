"""Data model shared by every model: sequences, label alphabets, datasets,
CSV ingestion, standardization and sequence-level fold splitting."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, DataError, InputError, SchemaError

__all__ = [
    "ObservationSequence",
    "LabelSequence",
    "LabelAlphabet",
    "Dataset",
    "FoldSplit",
    "CsvSchema",
    "Scaler",
    "load_dataset",
    "write_dataset",
    "standardize",
    "split_folds",
    "chunk_dataset",
    "context_features",
    "pack",
    "Packed",
]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class ObservationSequence:
    """Per-epoch feature vectors of one recording, shape ``(n, m)``."""

    id: str
    epochs: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.epochs, dtype=float)
        if x.ndim != 2:
            raise SchemaError(f"sequence {self.id!r}: epochs must be 2-D, got shape {x.shape}")
        if x.shape[0] < 1:
            raise DataError(f"sequence {self.id!r} is empty")
        if not np.all(np.isfinite(x)):
            raise DataError(f"sequence {self.id!r} contains non-finite feature values")
        object.__setattr__(self, "epochs", _frozen(x))

    @property
    def n(self) -> int:
        return self.epochs.shape[0]

    @property
    def m(self) -> int:
        return self.epochs.shape[1]

    def __len__(self):
        return self.n

    def __eq__(self, other):
        if not isinstance(other, ObservationSequence):
            return NotImplemented
        return self.id == other.id and np.array_equal(self.epochs, other.epochs)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class LabelSequence:
    labels: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.labels)
        if y.ndim != 1:
            raise SchemaError("labels must be 1-D")
        if y.size and not np.issubdtype(y.dtype, np.integer):
            raise DataError("label indices must be integers")
        object.__setattr__(self, "labels", _frozen(y.astype(np.int64)))

    @property
    def n(self) -> int:
        return self.labels.shape[0]

    def __len__(self):
        return self.n

    def __eq__(self, other):
        if not isinstance(other, LabelSequence):
            return NotImplemented
        return np.array_equal(self.labels, other.labels)

    __hash__ = None


@dataclass(frozen=True)
class LabelAlphabet:
    names: tuple[str, ...]

    def __post_init__(self):
        names = tuple(str(s) for s in self.names)
        if len(set(names)) != len(names):
            raise DataError(f"label names must be distinct: {names}")
        if len(names) < 2:
            raise DataError(f"need at least 2 labels, got {names}")
        object.__setattr__(self, "names", names)

    @property
    def size(self) -> int:
        return len(self.names)

    def __len__(self):
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise DataError(f"unknown label {name!r}") from None

    def encode(self, names: Iterable[str]) -> LabelSequence:
        return LabelSequence(np.array([self.index(s) for s in names], dtype=np.int64))

    def decode(self, y: LabelSequence) -> list[str]:
        return [self.names[i] for i in y.labels]


@dataclass(frozen=True, eq=False)
class Dataset:
    """A list of aligned (observations, labels) pairs sharing one alphabet and dimension."""

    sequences: tuple[tuple[ObservationSequence, LabelSequence], ...]
    alphabet: LabelAlphabet
    m: int = field(default=-1)

    def __post_init__(self):
        seqs = tuple((x, y) for x, y in self.sequences)
        m = self.m if self.m >= 0 else (seqs[0][0].m if seqs else 0)
        ids = set()
        for x, y in seqs:
            if x.m != m:
                raise SchemaError(f"sequence {x.id!r} has dimension {x.m}, expected {m}")
            if y.n != x.n:
                raise DataError(f"sequence {x.id!r}: {x.n} epochs but {y.n} labels")
            if y.n and (y.labels.min() < 0 or y.labels.max() >= self.alphabet.size):
                raise DataError(f"sequence {x.id!r}: label index outside alphabet")
            if x.id in ids:
                raise DataError(f"duplicate sequence id {x.id!r}")
            ids.add(x.id)
        object.__setattr__(self, "sequences", seqs)
        object.__setattr__(self, "m", m)

    def __len__(self):
        return len(self.sequences)

    def __iter__(self):
        return iter(self.sequences)

    @property
    def ids(self) -> list[str]:
        return [x.id for x, _ in self.sequences]

    @property
    def n_epochs(self) -> int:
        return sum(x.n for x, _ in self.sequences)

    def epochs(self) -> np.ndarray:
        """All epochs stacked in sequence order, shape ``(total, m)``."""
        if not self.sequences:
            return np.zeros((0, self.m))
        return np.concatenate([x.epochs for x, _ in self.sequences])

    def labels(self) -> np.ndarray:
        if not self.sequences:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate([y.labels for _, y in self.sequences])

    def subset(self, ids: Sequence[str]) -> Dataset:
        by_id = {x.id: (x, y) for x, y in self.sequences}
        return Dataset(tuple(by_id[i] for i in ids), self.alphabet, self.m)

    def map_features(self, fn) -> Dataset:
        """Apply ``fn`` to every sequence's ``(n, m)`` feature matrix."""
        out = [(ObservationSequence(x.id, fn(x.epochs)), y) for x, y in self.sequences]
        return Dataset(tuple(out), self.alphabet)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.alphabet == other.alphabet
            and self.m == other.m
            and len(self) == len(other)
            and all(a == c and b == d for (a, b), (c, d) in zip(self.sequences, other.sequences))
        )

    __hash__ = None


@dataclass(frozen=True)
class FoldSplit:
    k: int
    assignments: dict

    def test_ids(self, fold: int) -> list[str]:
        return [i for i, f in self.assignments.items() if f == fold]

    def train_ids(self, fold: int) -> list[str]:
        return [i for i, f in self.assignments.items() if f != fold]


@dataclass(frozen=True)
class CsvSchema:
    sequence_col: str = "sequence_id"
    index_col: str = "epoch_index"
    label_col: str = "label"


def load_dataset(path, schema: CsvSchema | None = None) -> Dataset:
    """Read a one-row-per-epoch CSV into a :class:`Dataset`.

    Every column other than the sequence id, epoch index and label is a
    feature, in header order. Labels are indexed in order of first appearance.
    """
    schema = schema or CsvSchema()
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such dataset file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        for col in (schema.sequence_col, schema.index_col, schema.label_col):
            if col not in header:
                raise SchemaError(f"{path}: missing column {col!r}")
        i_seq = header.index(schema.sequence_col)
        i_idx = header.index(schema.index_col)
        i_lab = header.index(schema.label_col)
        feat_cols = [j for j in range(len(header)) if j not in (i_seq, i_idx, i_lab)]

        rows: dict[str, dict[int, tuple[list[float], str]]] = {}
        label_order: list[str] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise SchemaError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            sid = row[i_seq]
            try:
                idx = int(row[i_idx])
            except ValueError:
                raise DataError(f"{path}:{lineno}: bad epoch index {row[i_idx]!r}") from None
            try:
                feats = [float(row[j]) for j in feat_cols]
            except ValueError as e:
                raise DataError(f"{path}:{lineno}: {e}") from None
            if not all(math.isfinite(v) for v in feats):
                raise DataError(f"{path}:{lineno}: non-finite feature value")
            lab = row[i_lab]
            if lab not in label_order:
                label_order.append(lab)
            seq = rows.setdefault(sid, {})
            if idx in seq:
                raise DataError(f"{path}:{lineno}: duplicate epoch ({sid}, {idx})")
            seq[idx] = (feats, lab)

    alphabet = LabelAlphabet(tuple(label_order))
    m = len(feat_cols)
    seqs = []
    for sid, epochs in rows.items():
        order = sorted(epochs)
        x = np.array([epochs[i][0] for i in order], dtype=float).reshape(len(order), m)
        y = alphabet.encode(epochs[i][1] for i in order)
        seqs.append((ObservationSequence(sid, x), y))
    return Dataset(tuple(seqs), alphabet, m)


def write_dataset(d: Dataset, path, feature_names: Sequence[str] | None = None) -> None:
    names = list(feature_names) if feature_names else [f"f{j + 1}" for j in range(d.m)]
    if len(names) != d.m:
        raise SchemaError(f"{len(names)} feature names for dimension {d.m}")
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sequence_id", "epoch_index", *names, "label"])
        for x, y in d:
            for t in range(x.n):
                w.writerow([x.id, t, *(repr(float(v)) for v in x.epochs[t]), d.alphabet.names[y.labels[t]]])


@dataclass(frozen=True)
class Scaler:
    mean: np.ndarray
    scale: np.ndarray

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.scale


def standardize(train: Dataset, apply_to: Dataset) -> tuple[Dataset, Scaler]:
    """Z-score ``apply_to`` with column statistics computed from ``train`` epochs only."""
    if len(train) == 0:
        raise DataError("cannot fit a scaler on an empty dataset")
    if train.m != apply_to.m:
        raise SchemaError(f"dimension mismatch: train has {train.m}, target has {apply_to.m}")
    x = train.epochs()
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    # constant columns: centre only
    scale = np.where(std > 0, std, 1.0)
    scaler = Scaler(_frozen(mean), _frozen(scale))
    return apply_to.map_features(scaler.apply), scaler


def split_folds(d: Dataset, k: int, seed: int) -> FoldSplit:
    """Assign whole sequences to ``k`` folds whose sizes differ by at most one."""
    if k < 2:
        raise ConfigurationError(f"k must be >= 2, got {k}")
    if k > len(d):
        raise ConfigurationError(f"k={k} folds but only {len(d)} sequences")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(d))
    ids = d.ids
    assignments = {ids[j]: int(pos % k) for pos, j in enumerate(perm)}
    # keep dataset order for stable iteration
    return FoldSplit(k, {i: assignments[i] for i in ids})


def chunk_dataset(d: Dataset, max_len: int) -> Dataset:
    """Cut sequences into consecutive segments of at most ``max_len`` epochs."""
    if max_len < 1:
        raise ConfigurationError("max_len must be positive")
    out = []
    for x, y in d:
        if x.n <= max_len:
            out.append((x, y))
            continue
        for part, start in enumerate(range(0, x.n, max_len)):
            sl = slice(start, start + max_len)
            out.append(
                (ObservationSequence(f"{x.id}#{part}", x.epochs[sl]), LabelSequence(y.labels[sl]))
            )
    return Dataset(tuple(out), d.alphabet, d.m)


def context_features(x: np.ndarray, window: int) -> np.ndarray:
    """Concatenate each epoch with its ``window`` neighbours on either side.

    Sequence ends are padded by repeating the first/last epoch. ``window=0``
    returns ``x`` unchanged.
    """
    if window < 0:
        raise ConfigurationError("context window must be >= 0")
    if window == 0:
        return x
    n = x.shape[0]
    idx = np.clip(np.arange(n)[:, None] + np.arange(-window, window + 1)[None, :], 0, n - 1)
    return x[idx].reshape(n, -1)


@dataclass(frozen=True, eq=False)
class Packed:
    """Sequences padded to a common length for batched chain computations.

    ``x`` is ``(B, T, m)``, ``y`` is ``(B, T)`` with -1 at padding, ``lengths`` is ``(B,)``.
    """

    x: np.ndarray
    y: np.ndarray
    lengths: np.ndarray

    @property
    def mask(self) -> np.ndarray:
        return np.arange(self.x.shape[1])[None, :] < self.lengths[:, None]


def pack(features: Sequence[np.ndarray], labels: Sequence[np.ndarray] | None = None) -> Packed:
    lengths = np.array([f.shape[0] for f in features], dtype=np.int64)
    if lengths.size == 0:
        raise InputError("nothing to pack")
    B, T, m = len(features), int(lengths.max()), features[0].shape[1]
    x = np.zeros((B, T, m))
    y = np.full((B, T), -1, dtype=np.int64)
    for b, f in enumerate(features):
        x[b, : f.shape[0]] = f
        if labels is not None:
            y[b, : f.shape[0]] = labels[b]
    return Packed(x, y, lengths)
