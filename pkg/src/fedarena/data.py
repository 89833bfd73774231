"""Dataset ingestion (IDX binary format), synthetic blobs, and non-i.i.d.
partitioning of examples across federated clients."""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError
from .model import Batch

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass
class Dataset:
    inputs: np.ndarray  # n x d, in [0, 1]
    labels: np.ndarray
    class_count: int

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.size and self.labels.max() >= self.class_count:
            raise ValueError("label exceeds class_count")

    def __len__(self):
        return self.inputs.shape[0]

    def subset(self, indices):
        return Batch(self.inputs[indices], self.labels[indices])


@dataclass
class Partition:
    client_indices: list  # per client, array of example indices

    def validate(self, n_examples):
        seen = np.concatenate([np.asarray(c) for c in self.client_indices])
        if len(seen) != n_examples or len(np.unique(seen)) != n_examples:
            raise ValueError("partition is not a disjoint cover of the dataset")
        if any(len(c) == 0 for c in self.client_indices):
            raise ValueError("partition left a client empty")


def _read_exact(f, n, path, what):
    buf = f.read(n)
    if len(buf) != n:
        raise FormatError(
            f"{path}: truncated while reading {what} at offset {f.tell() - len(buf)}"
        )
    return buf


def load_idx(images_path, labels_path):
    """Load an IDX image/label file pair; pixels are scaled into [0, 1]."""
    with open(images_path, "rb") as f:
        magic, n, rows, cols = struct.unpack(">iiii", _read_exact(f, 16, images_path, "header"))
        if magic != IDX_IMAGES_MAGIC:
            raise FormatError(f"{images_path}: bad magic 0x{magic:08x} at offset 0")
        pixels = np.frombuffer(
            _read_exact(f, n * rows * cols, images_path, "pixel data"), dtype=np.uint8
        )
    with open(labels_path, "rb") as f:
        magic, n_labels = struct.unpack(">ii", _read_exact(f, 8, labels_path, "header"))
        if magic != IDX_LABELS_MAGIC:
            raise FormatError(f"{labels_path}: bad magic 0x{magic:08x} at offset 0")
        labels = np.frombuffer(_read_exact(f, n_labels, labels_path, "labels"), dtype=np.uint8)
    if n_labels != n:
        raise FormatError(
            f"{labels_path}: {n_labels} labels but {images_path} holds {n} images"
        )
    inputs = pixels.reshape(n, rows * cols).astype(np.float64) / 255.0
    class_count = int(labels.max()) + 1 if n else 1
    return Dataset(inputs, labels.astype(np.int64), class_count)


def write_idx(dataset, images_path, labels_path, rows, cols):
    """Inverse of load_idx (values are quantized back to bytes)."""
    n, d = dataset.inputs.shape
    if rows * cols != d:
        raise ValueError("rows*cols must equal input width")
    pixels = np.rint(dataset.inputs * 255.0).astype(np.uint8)
    with open(images_path, "wb") as f:
        f.write(struct.pack(">iiii", IDX_IMAGES_MAGIC, n, rows, cols))
        f.write(pixels.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">ii", IDX_LABELS_MAGIC, n))
        f.write(dataset.labels.astype(np.uint8).tobytes())


def synth_blobs(class_count, dim, per_class, spread, seed):
    """Gaussian class blobs with centers inside [0.2, 0.8]^dim, clamped to [0, 1]."""
    if class_count < 1 or dim < 1 or per_class < 1:
        raise ValueError("class_count, dim, per_class must be >= 1")
    if spread <= 0:
        raise ValueError("spread must be > 0")
    rng = np.random.default_rng(seed)
    centers = rng.uniform(0.2, 0.8, size=(class_count, dim))
    inputs = np.empty((class_count * per_class, dim))
    labels = np.empty(class_count * per_class, dtype=np.int64)
    for c in range(class_count):
        lo, hi = c * per_class, (c + 1) * per_class
        inputs[lo:hi] = centers[c] + rng.normal(0.0, spread, size=(per_class, dim))
        labels[lo:hi] = c
    np.clip(inputs, 0.0, 1.0, out=inputs)
    order = rng.permutation(len(labels))
    return Dataset(inputs[order], labels[order], class_count)


def _largest_remainder(proportions, total):
    """Integer counts summing to total, proportional to the given fractions."""
    raw = proportions * total
    counts = np.floor(raw).astype(int)
    short = total - counts.sum()
    # ties go to the lowest client index for determinism
    order = np.lexsort((np.arange(len(raw)), -(raw - counts)))
    counts[order[:short]] += 1
    return counts


def dirichlet_partition(dataset, n_clients, concentration, seed):
    """Non-i.i.d. split: per class, client shares are drawn from a symmetric
    Dirichlet and examples assigned by largest-remainder rounding."""
    if n_clients < 1:
        raise ValueError("n_clients must be >= 1")
    if concentration <= 0:
        raise ValueError("concentration must be > 0")
    if n_clients > len(dataset):
        raise ValueError("more clients than examples")
    rng = np.random.default_rng(seed)
    buckets = [[] for _ in range(n_clients)]
    for c in range(dataset.class_count):
        idx = np.flatnonzero(dataset.labels == c)
        if idx.size == 0:
            continue
        rng.shuffle(idx)
        props = rng.dirichlet(np.full(n_clients, concentration))
        counts = _largest_remainder(props, idx.size)
        pos = 0
        for client, cnt in enumerate(counts):
            buckets[client].extend(idx[pos : pos + cnt])
            pos += cnt
    # repair empty clients from the largest one
    for client in range(n_clients):
        while not buckets[client]:
            donor = max(range(n_clients), key=lambda i: len(buckets[i]))
            buckets[client].append(buckets[donor].pop())
    part = Partition([np.sort(np.array(b, dtype=np.int64)) for b in buckets])
    part.validate(len(dataset))
    return part


def train_test_split(indices, test_fraction, seed):
    """Seeded shuffle split of one client's example indices."""
    indices = np.asarray(indices)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(indices))
    n_test = max(1, int(round(test_fraction * len(indices)))) if len(indices) > 1 else 0
    test = indices[order[:n_test]]
    train = indices[order[n_test:]]
    if len(train) == 0:
        train, test = test, train
    return train, test
