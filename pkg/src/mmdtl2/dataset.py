"""Labeled feature containers, CSV ingest, synthetic data, splits.

Conventions used across the package: feature matrices store one sample per
COLUMN (dim x count); class labels are integers 1..K; one-vs-rest sign
matrices and every flattened per-class vector use k-major order, i.e. the
pair (class k, sample m) maps to flat index (k-1)*M + m for 1-based k, m.
"""

import warnings
from dataclasses import dataclass

import numpy as np


class ParseError(ValueError):
    """Malformed input file; message carries the 1-based row number."""


@dataclass(eq=False)
class DomainDataset:
    """Feature matrix (dim x count, columns are samples) plus labels in 1..K.

    class_count is the number K of classes the labels are drawn from; it can
    exceed the number of classes actually present (a split may lose one).
    Arrays are frozen after validation.
    """

    features: np.ndarray
    labels: np.ndarray
    class_count: int = 0

    def __post_init__(self):
        self.features = np.ascontiguousarray(
            np.asarray(self.features, dtype=np.float64)
        )
        self.labels = np.asarray(self.labels, dtype=np.int64).ravel()
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-D (dim x count) matrix")
        if self.features.shape[0] < 1:
            raise ValueError("feature dimension must be at least 1")
        if self.features.shape[1] != self.labels.shape[0]:
            raise ValueError(
                f"feature columns ({self.features.shape[1]}) and labels "
                f"({self.labels.shape[0]}) disagree"
            )
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features contain non-finite entries")
        if self.class_count == 0:
            self.class_count = int(self.labels.max()) if self.count else 1
        if self.class_count < 1:
            raise ValueError("class_count must be at least 1")
        if self.count and (
            self.labels.min() < 1 or self.labels.max() > self.class_count
        ):
            raise ValueError(
                f"labels must lie in 1..{self.class_count}"
            )
        self.features.setflags(write=False)
        self.labels.setflags(write=False)

    @property
    def dim(self):
        return self.features.shape[0]

    @property
    def count(self):
        return self.features.shape[1]

    def class_sizes(self):
        """Sample count per class id, as a dict {k: count}."""
        ids, counts = np.unique(self.labels, return_counts=True)
        return {int(k): int(c) for k, c in zip(ids, counts)}

    def take(self, indices):
        """New dataset restricted to the given column indices."""
        idx = np.asarray(indices, dtype=np.int64)
        return DomainDataset(
            self.features[:, idx], self.labels[idx], self.class_count
        )


def augment(x):
    """Append the constant 1 to a single feature vector."""
    x = np.asarray(x, dtype=np.float64).ravel()
    return np.append(x, 1.0)


def augment_columns(features):
    """Append a row of ones: each column x becomes (x; 1)."""
    features = np.asarray(features, dtype=np.float64)
    ones = np.ones((1, features.shape[1]))
    return np.ascontiguousarray(np.vstack([features, ones]))


def load_csv(path):
    """Read `label,f1,...,fL` rows (no header) into a DomainDataset.

    Labels must be positive integers, every row must have the same number
    of features, and the file must be non-empty. Errors name the offending
    1-based row. LF and CRLF line endings both work.
    """
    with open(path, "r", encoding="utf-8", newline="") as handle:
        text = handle.read()
    rows = []
    labels = []
    width = None
    row_no = 0
    for raw in text.splitlines():
        row_no += 1
        line = raw.strip()
        if not line:
            raise ParseError(f"row {row_no}: blank line")
        cells = [c.strip() for c in line.split(",")]
        if len(cells) < 2:
            raise ParseError(f"row {row_no}: need a label and at least one feature")
        try:
            label = int(cells[0])
        except ValueError:
            raise ParseError(
                f"row {row_no}: label {cells[0]!r} is not an integer"
            ) from None
        if label < 1:
            raise ParseError(f"row {row_no}: label must be at least 1, got {label}")
        try:
            feats = [float(c) for c in cells[1:]]
        except ValueError:
            raise ParseError(f"row {row_no}: malformed feature value") from None
        if width is None:
            width = len(feats)
        elif len(feats) != width:
            raise ParseError(
                f"row {row_no}: expected {width} features, got {len(feats)}"
            )
        labels.append(label)
        rows.append(feats)
    if not rows:
        raise ParseError("file contains no data rows")
    return DomainDataset(np.array(rows, dtype=np.float64).T, np.array(labels))


def save_csv(data, path):
    """Write a DomainDataset in the `label,f1,...,fL` format load_csv reads."""
    with open(path, "w", encoding="utf-8") as handle:
        for m in range(data.count):
            cells = [str(int(data.labels[m]))]
            cells += [repr(float(v)) for v in data.features[:, m]]
            handle.write(",".join(cells) + "\n")


@dataclass(eq=False)
class WeightModel:
    """Pairwise anchoring weights between source and target samples.

    matrix[n, m] is c_d when source sample n and target sample m share a
    label, else 0. col_sums[m] and row_sums[n] are the marginals that the
    transform solver consumes (col_sums is the diagonal of the target-side
    weight matrix).
    """

    matrix: np.ndarray
    col_sums: np.ndarray
    row_sums: np.ndarray
    c_d: float

    @property
    def all_positive_cols(self):
        return bool(np.all(self.col_sums > 0))

    @property
    def all_zero(self):
        return bool(np.all(self.matrix == 0))


def build_weight_model(source_labels, target_labels, c_d):
    if c_d < 0:
        raise ValueError(f"c_d must be non-negative, got {c_d}")
    src = np.asarray(source_labels, dtype=np.int64).ravel()
    tgt = np.asarray(target_labels, dtype=np.int64).ravel()
    s = c_d * (src[:, None] == tgt[None, :]).astype(np.float64)
    return WeightModel(s, s.sum(axis=0), s.sum(axis=1), float(c_d))


@dataclass(eq=False)
class OvrLabelMatrix:
    """One-vs-rest sign matrix: signs[k-1, m-1] = +1 iff sample m is class k."""

    signs: np.ndarray

    @property
    def class_count(self):
        return self.signs.shape[0]

    @property
    def count(self):
        return self.signs.shape[1]

    @property
    def flat(self):
        """k-major flattening: entry (k-1)*M + (m-1) is signs[k-1, m-1]."""
        return self.signs.ravel()

    @property
    def upsilon(self):
        """count x class_count transpose, the layout the dual solver reports."""
        return np.ascontiguousarray(self.signs.T)


def ovr_labels(labels, class_count):
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if labels.size == 0:
        raise ValueError("cannot build a sign matrix from zero samples")
    if labels.min() < 1 or labels.max() > class_count:
        raise ValueError(f"labels must lie in 1..{class_count}")
    ks = np.arange(1, class_count + 1)
    signs = np.where(labels[None, :] == ks[:, None], 1.0, -1.0)
    return OvrLabelMatrix(np.ascontiguousarray(signs))


@dataclass(eq=False)
class AffineShift:
    """Target-domain map x -> matrix @ x + offset."""

    matrix: np.ndarray
    offset: np.ndarray

    def apply(self, columns):
        return self.matrix @ columns + self.offset[:, None]


def _make_shift(description, l_s, l_t, rng):
    if isinstance(description, AffineShift):
        return description
    kind, _, arg = str(description).partition(":")
    if kind == "identity":
        if l_s != l_t:
            raise ValueError("identity shift needs matching dimensions")
        return AffineShift(np.eye(l_t), np.zeros(l_t))
    if kind == "scale":
        if l_s != l_t:
            raise ValueError("scale shift needs matching dimensions")
        a = float(arg) if arg else 1.0
        return AffineShift(a * np.eye(l_t), np.zeros(l_t))
    if kind == "random":
        spread = float(arg) if arg else 1.0
        # Near-orthogonal map keeps the class geometry learnable: QR of a
        # Gaussian draw, padded or cut when the dimensions differ.
        square = rng.standard_normal((max(l_s, l_t), max(l_s, l_t)))
        q, _ = np.linalg.qr(square)
        mat = spread * q[:l_t, :l_s]
        offset = spread * rng.standard_normal(l_t)
        return AffineShift(mat, offset)
    if kind == "rotation":
        # Orthogonal map with an independently scaled translation; the
        # optional argument is the per-coordinate offset sd (default 0).
        offset_sd = float(arg) if arg else 0.0
        square = rng.standard_normal((max(l_s, l_t), max(l_s, l_t)))
        q, _ = np.linalg.qr(square)
        offset = offset_sd * rng.standard_normal(l_t)
        return AffineShift(q[:l_t, :l_s].copy(), offset)
    raise ValueError(f"unknown shift description {description!r}")


@dataclass
class SynthConfig:
    """Gaussian-blob generator settings for a paired source/target draw.

    Targets are fresh draws from the source blobs pushed through the affine
    shift, plus isotropic noise of sd noise_sd. mean_scale controls blob
    separation (class means are mean_scale * standard normal vectors).
    """

    class_count: int = 3
    source_per_class: int = 100
    target_per_class: int = 100
    source_dim: int = 64
    target_dim: int = 64
    shift: object = "random"
    noise_sd: float = 0.3
    seed: int = 0
    blob_sd: float = 1.0
    mean_scale: float = 0.45

    def validate(self):
        if self.class_count < 1:
            raise ValueError("class_count must be at least 1")
        if self.source_per_class < 1 or self.target_per_class < 1:
            raise ValueError("per-class counts must be at least 1")
        if self.source_dim < 1 or self.target_dim < 1:
            raise ValueError("dimensions must be at least 1")
        if self.noise_sd < 0 or self.blob_sd < 0:
            raise ValueError("standard deviations must be non-negative")


def synth_generate(config):
    """Deterministic source/target pair of Gaussian class blobs.

    Returns (source, target) DomainDatasets. The draw order is fixed, so a
    given config reproduces byte-identical arrays.
    """
    config.validate()
    rng = np.random.Generator(np.random.PCG64(config.seed))
    k, l_s, l_t = config.class_count, config.source_dim, config.target_dim
    means = config.mean_scale * rng.standard_normal((l_s, k))
    shift = _make_shift(config.shift, l_s, l_t, rng)

    def blob(count_per_class):
        cols = []
        labels = []
        for c in range(k):
            draw = rng.standard_normal((l_s, count_per_class))
            cols.append(means[:, [c]] + config.blob_sd * draw)
            labels.extend([c + 1] * count_per_class)
        return np.hstack(cols), np.array(labels)

    src_feats, src_labels = blob(config.source_per_class)
    tgt_raw, tgt_labels = blob(config.target_per_class)
    tgt_feats = shift.apply(tgt_raw)
    if config.noise_sd > 0:
        tgt_feats = tgt_feats + config.noise_sd * rng.standard_normal(tgt_feats.shape)
    return (
        DomainDataset(src_feats, src_labels, k),
        DomainDataset(tgt_feats, tgt_labels, k),
    )


def standard_synth_config(seed=0):
    """The stock benchmark configuration used by the experiment harness."""
    return SynthConfig(
        class_count=3,
        source_per_class=100,
        target_per_class=100,
        source_dim=64,
        target_dim=64,
        shift="random",
        noise_sd=0.4,
        seed=seed,
        blob_sd=1.0,
        mean_scale=0.45,
    )


def split_indices(labels, per_class_cap, test_fraction, seed):
    """Stratified train/test index split with a per-class training cap.

    Per class: a seeded shuffle, round(test_fraction * n) samples to test,
    the first per_class_cap of the rest to train. The shuffle depends only
    on (seed, class), so smaller caps give nested subsets of larger ones.
    A class that ends up with zero test samples raises a UserWarning.
    """
    if not 0 <= test_fraction <= 1:
        raise ValueError("test_fraction must lie in [0, 1]")
    if per_class_cap < 0:
        raise ValueError("per_class_cap must be non-negative")
    labels = np.asarray(labels, dtype=np.int64).ravel()
    train_idx = []
    test_idx = []
    for k in np.unique(labels):
        rng = np.random.Generator(np.random.PCG64([seed, int(k)]))
        members = np.flatnonzero(labels == k)
        members = members[rng.permutation(members.size)]
        n_test = int(round(test_fraction * members.size))
        if n_test == 0 and test_fraction > 0:
            warnings.warn(
                f"class {int(k)} received no test samples", stacklevel=2
            )
        test_idx.append(members[:n_test])
        train_idx.append(members[n_test : n_test + per_class_cap])
    train = np.concatenate(train_idx) if train_idx else np.empty(0, np.int64)
    test = np.concatenate(test_idx) if test_idx else np.empty(0, np.int64)
    return train, test


def split_per_class(data, per_class_cap, test_fraction, seed):
    """Stratified split of a DomainDataset; see split_indices for the rules."""
    train_idx, test_idx = split_indices(
        data.labels, per_class_cap, test_fraction, seed
    )
    return data.take(train_idx), data.take(test_idx)
