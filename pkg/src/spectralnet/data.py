"""Toy dataset generators and the CSV data format.

CSV layout: header ``f0,...,f{d-1}`` optionally followed by ``label``; one
point per line; floats written with 17 significant digits so that values
written by this module read back bit-identical.
"""

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ParseError, RaggedRows, UnknownKind

KINDS = ("nested_c", "concentric_circles", "spirals", "moons", "blobs", "blobs3d")
DEFAULT_NOISE = {
    "nested_c": 0.1,
    "concentric_circles": 0.05,
    "spirals": 0.1,
    "moons": 0.05,
    "blobs": 0.5,
    "blobs3d": 0.5,
}


@dataclass(frozen=True)
class DatasetSpec:
    kind: str
    n: int
    noise: Optional[float] = None
    seed: int = 0
    # extra coordinates of pure Gaussian noise appended after the shape's own
    noise_dims: int = 0
    noise_dim_std: float = 0.5

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if self.noise is not None and self.noise < 0:
            raise ValueError("noise must be nonnegative")
        if self.noise_dims < 0 or self.noise_dim_std < 0:
            raise ValueError("noise_dims and noise_dim_std must be nonnegative")


@dataclass
class DataMatrix:
    features: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise ValueError("features must be 2-D")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.features.shape[0],):
                raise ValueError("labels must have one entry per row")

    @property
    def n(self):
        return self.features.shape[0]

    def subset(self, idx):
        return DataMatrix(self.features[idx], None if self.labels is None else self.labels[idx])


def _split(n, parts):
    sizes = [n // parts] * parts
    for i in range(n % parts):
        sizes[i] += 1
    return sizes


def _arc(rng, count, radius, start, stop, center=(0.0, 0.0)):
    t = rng.uniform(start, stop, size=count)
    return np.column_stack([center[0] + radius * np.cos(t), center[1] + radius * np.sin(t)])


def _nested_c(rng, n):
    # two 270-degree arcs, radii 1 and 2.5, both open towards +x
    a, b = _split(n, 2)
    lo, hi = np.pi / 4, 7 * np.pi / 4
    return [_arc(rng, a, 1.0, lo, hi), _arc(rng, b, 2.5, lo, hi)]


def _circles(rng, n):
    a, b = _split(n, 2)
    return [_arc(rng, a, 1.0, 0, 2 * np.pi), _arc(rng, b, 2.0, 0, 2 * np.pi)]


def _moons(rng, n):
    a, b = _split(n, 2)
    upper = _arc(rng, a, 1.0, 0, np.pi)
    lower = _arc(rng, b, 1.0, np.pi, 2 * np.pi, center=(1.0, 0.5))
    return [upper, lower]


def _spirals(rng, n):
    a, b = _split(n, 2)
    out = []
    for count, phase in ((a, 0.0), (b, np.pi)):
        t = rng.uniform(np.pi / 2, 3 * np.pi, size=count)
        out.append(np.column_stack([t * np.cos(t + phase), t * np.sin(t + phase)]))
    return out


def _blobs(rng, n, centers):
    centers = np.asarray(centers, dtype=np.float64)
    return [np.tile(c, (s, 1)) for c, s in zip(centers, _split(n, len(centers)))]


def generate(spec):
    """Generate ``spec.kind`` with ground-truth labels; deterministic in ``spec.seed``."""
    if spec.kind not in KINDS:
        raise UnknownKind(f"unknown dataset kind {spec.kind!r}; choose from {', '.join(KINDS)}")
    rng = np.random.default_rng(spec.seed)
    noise = DEFAULT_NOISE[spec.kind] if spec.noise is None else spec.noise
    if spec.kind == "nested_c":
        parts = _nested_c(rng, spec.n)
    elif spec.kind == "concentric_circles":
        parts = _circles(rng, spec.n)
    elif spec.kind == "moons":
        parts = _moons(rng, spec.n)
    elif spec.kind == "spirals":
        parts = _spirals(rng, spec.n)
    elif spec.kind == "blobs":
        parts = _blobs(rng, spec.n, [(0.0, 0.0), (10.0, 0.0)])
    else:
        parts = _blobs(rng, spec.n, [(0.0, 0.0, 0.0), (10.0, 0.0, 0.0), (5.0, 8.66, 0.0)])
    x = np.vstack(parts)
    x = x + noise * rng.standard_normal(x.shape)
    if spec.noise_dims:
        x = np.hstack([x, spec.noise_dim_std * rng.standard_normal((x.shape[0], spec.noise_dims))])
    labels = np.concatenate([np.full(len(p), i) for i, p in enumerate(parts)])
    return DataMatrix(x, labels)


def save_csv(data, path):
    d = data.features.shape[1]
    header = [f"f{i}" for i in range(d)]
    if data.labels is not None:
        header.append("label")
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for i, row in enumerate(data.features):
            cells = [f"{v:.17g}" for v in row]
            if data.labels is not None:
                cells.append(str(int(data.labels[i])))
            fh.write(",".join(cells) + "\n")


def load_csv(path):
    """Read a data CSV; raises ParseError/RaggedRows with the 1-based line number."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError("empty file", line=1) from None
        has_label = bool(header) and header[-1] == "label"
        n_feat = len(header) - has_label
        expected = [f"f{i}" for i in range(n_feat)]
        if header[:n_feat] != expected:
            raise ParseError(f"header must be f0..f{n_feat - 1}[,label], got {','.join(header)}", line=1)
        rows, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise RaggedRows(f"expected {len(header)} fields, got {len(row)}", line=lineno)
            try:
                rows.append([float(c) for c in row[:n_feat]])
                if has_label:
                    labels.append(int(row[-1]))
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from None
    features = np.array(rows, dtype=np.float64).reshape(len(rows), n_feat)
    if not np.all(np.isfinite(features)):
        raise ParseError("non-finite feature value")
    return DataMatrix(features, np.array(labels, dtype=np.int64) if has_label else None)


def save_matrix(matrix, path):
    """Write a bare matrix (embeddings, eigenvectors) with an ``f0..`` header."""
    save_csv(DataMatrix(np.asarray(matrix)), path)


def save_labels(labels, path):
    Path(path).write_text("label\n" + "".join(f"{int(v)}\n" for v in labels))


def load_labels(path):
    """Read a label column: either a labels file or a data CSV with a label column."""
    with open(path, newline="") as fh:
        header = fh.readline().strip().split(",")
    if header == ["label"]:
        values = []
        for lineno, line in enumerate(Path(path).read_text().splitlines()[1:], start=2):
            if not line.strip():
                continue
            try:
                values.append(int(line))
            except ValueError:
                raise ParseError(f"bad label {line!r}", line=lineno) from None
        return np.array(values, dtype=np.int64)
    data = load_csv(path)
    if data.labels is None:
        raise ParseError(f"{path} has no label column", line=1)
    return data.labels
