"""Synthetic heterogeneous sources, dataset files, and non-iid partitioning.

Synthetic clients draw latent factors z ~ N(0, diag(sigma_i^2)) with
per-client scale vectors and push them through one shared generative map
(identity, a seeded orthogonal matrix, or a small fixed MLP). All draws
derive from SeedSequence spawn keys of (stream, client index), so shards
are reproducible per client and eval shards never overlap training ones.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, PartitionError, ShapeError

DATASET_MAGIC = b"FNDS"
DATASET_VERSION = 1
_DS_HEADER = struct.Struct("<4sHQIB")  # magic, version, N, d, has_labels

CIFAR10_RECORD = 3073  # 1 label byte + 32*32*3 pixel bytes
TRAIN_STREAM = 0
EVAL_STREAM = 1


@dataclass
class Dataset:
    samples: np.ndarray  # [N, d] float64
    labels: np.ndarray | None = None  # [N] int64

    def __post_init__(self):
        self.samples = np.ascontiguousarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2:
            raise ShapeError(f"dataset samples must be [N, d], got {self.samples.shape}")
        if self.labels is not None:
            self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.samples.shape[0],):
                raise ShapeError(
                    f"labels shape {self.labels.shape} does not match "
                    f"{self.samples.shape[0]} samples"
                )


@dataclass
class SourceSpec:
    """Shared generative map plus per-client latent scales."""

    latent_dim: int
    ambient_dim: int
    scales: np.ndarray  # [n_clients, latent_dim] standard deviations
    map_kind: str = "orthogonal"  # identity | orthogonal | mlp
    map_seed: int = 0
    map_widths: tuple[int, ...] = (32,)

    def __post_init__(self):
        self.scales = np.ascontiguousarray(self.scales, dtype=np.float64)
        if self.scales.ndim != 2 or self.scales.shape[1] != self.latent_dim:
            raise ShapeError(
                f"scales must be [n_clients, {self.latent_dim}], got {self.scales.shape}"
            )
        if (self.scales < 0).any():
            raise ShapeError("scales must be nonnegative")
        if self.map_kind not in ("identity", "orthogonal", "mlp"):
            raise ShapeError(f"unknown map kind {self.map_kind!r}")
        if self.map_kind == "identity" and self.ambient_dim != self.latent_dim:
            raise ShapeError("identity map requires ambient_dim == latent_dim")
        if self.ambient_dim < self.latent_dim and self.map_kind == "orthogonal":
            raise ShapeError("orthogonal map requires ambient_dim >= latent_dim")

    @property
    def n_clients(self) -> int:
        return self.scales.shape[0]


class GenerativeMap:
    """The fixed map f shared by all clients; parameters depend only on map_seed."""

    def __init__(self, spec: SourceSpec):
        self.kind = spec.map_kind
        rng = np.random.default_rng(np.random.SeedSequence(spec.map_seed))
        if self.kind == "identity":
            self.matrix = None
        elif self.kind == "orthogonal":
            g = rng.standard_normal((spec.ambient_dim, spec.ambient_dim))
            q, r = np.linalg.qr(g)
            # Fix the sign convention so the factorization is unique.
            q = q * np.sign(np.diag(r))[None, :]
            self.matrix = q[:, : spec.latent_dim]
        else:  # mlp
            widths = (spec.latent_dim,) + tuple(spec.map_widths) + (spec.ambient_dim,)
            self.weights = []
            for k in range(len(widths) - 1):
                lim = np.sqrt(6.0 / (widths[k] + widths[k + 1]))
                w = rng.uniform(-lim, lim, size=(widths[k + 1], widths[k]))
                b = rng.uniform(-0.1, 0.1, size=widths[k + 1])
                self.weights.append((w, b))

    def apply(self, z: np.ndarray) -> np.ndarray:
        if self.kind == "identity":
            return z
        if self.kind == "orthogonal":
            return z @ self.matrix.T
        x = z
        for i, (w, b) in enumerate(self.weights):
            x = x @ w.T + b
            if i < len(self.weights) - 1:
                x = np.tanh(x)
        return x


def draw_client_samples(
    spec: SourceSpec, scales_row: np.ndarray, m: int, seed_seq: np.random.SeedSequence
) -> np.ndarray:
    """One shard of m ambient samples for a client with the given latent scales."""
    rng = np.random.default_rng(seed_seq)
    z = rng.standard_normal((m, spec.latent_dim)) * scales_row[None, :]
    return GenerativeMap(spec).apply(z)


def gen_synthetic(
    spec: SourceSpec, samples_per_client: int, seed: int, stream: int = TRAIN_STREAM
) -> list[np.ndarray]:
    """Per-client shards; stream separates train/eval draws under one seed."""
    shards = []
    for i in range(spec.n_clients):
        ss = np.random.SeedSequence(seed, spawn_key=(stream, i))
        shards.append(draw_client_samples(spec, spec.scales[i], samples_per_client, ss))
    return shards


def heterogeneous_scales(
    n_clients: int,
    latent_dim: int,
    active_dims: int | None = None,
    sigma_active=8.0,
    sigma_inactive=0.5,
) -> np.ndarray:
    """Per-client scale rows with rotated high-variance supports.

    Client i is 'hot' on active_dims consecutive dimensions starting at
    i * active_dims (mod latent_dim), so supports are disjoint whenever
    n_clients * active_dims <= latent_dim and merely distinct otherwise.
    The sigma arguments accept either a scalar shared by all clients or a
    sequence cycled over clients, so populations can mix scale levels (a
    cheap stand-in for devices with different gains).
    """
    if active_dims is None:
        active_dims = max(1, latent_dim // n_clients)
    if not 1 <= active_dims <= latent_dim:
        raise ShapeError(f"active_dims must be in [1, {latent_dim}], got {active_dims}")

    def per_client(value, what):
        arr = np.atleast_1d(np.asarray(value, dtype=np.float64))
        if arr.ndim != 1 or arr.size < 1:
            raise ShapeError(f"{what} must be a scalar or a 1-d sequence")
        if np.any(arr < 0):
            raise ShapeError(f"{what} must be nonnegative")
        return arr[np.arange(n_clients) % arr.size]

    hot = per_client(sigma_active, "sigma_active")
    cold = per_client(sigma_inactive, "sigma_inactive")
    scales = np.repeat(cold[:, None], latent_dim, axis=1)
    for i in range(n_clients):
        cols = (i * active_dims + np.arange(active_dims)) % latent_dim
        scales[i, cols] = hot[i]
    return scales


# -- non-iid label partitioning ------------------------------------------


@dataclass
class PartitionPlan:
    assignments: list[np.ndarray]  # per-client sorted original indices
    shards_per_client: int
    shard_size: int
    seed: int = 0
    shard_owners: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))


def partition_non_iid(
    labels: np.ndarray, n_clients: int, shards_per_client: int, seed: int
) -> PartitionPlan:
    """Sort by label, slice into n*S equal contiguous shards, deal S per client.

    Shards are dealt without replacement from a seeded permutation; every
    sample lands on exactly one client. Requires len(labels) divisible by
    n_clients * shards_per_client.
    """
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise PartitionError(f"labels must be 1-D, got shape {labels.shape}")
    n = int(n_clients)
    s = int(shards_per_client)
    if n < 1 or s < 1:
        raise PartitionError(f"need positive client and shard counts, got n={n}, S={s}")
    n_shards = n * s
    total = labels.shape[0]
    if total == 0 or total % n_shards != 0:
        raise PartitionError(
            f"{total} samples cannot be cut into {n_shards} equal shards "
            f"({n} clients x {s} shards)"
        )
    shard_size = total // n_shards
    order = np.argsort(labels, kind="stable")
    shards = order.reshape(n_shards, shard_size)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    perm = rng.permutation(n_shards)
    owners = np.empty(n_shards, dtype=np.int64)
    assignments = []
    for i in range(n):
        mine = perm[i * s : (i + 1) * s]
        owners[mine] = i
        assignments.append(np.sort(shards[mine].reshape(-1)))
    return PartitionPlan(
        assignments=assignments,
        shards_per_client=s,
        shard_size=shard_size,
        seed=seed,
        shard_owners=owners,
    )


def trim_to_shardable(labels: np.ndarray, n_clients: int, shards_per_client: int) -> np.ndarray:
    """Indices (ascending) of the largest label-balanced subset that shards evenly.

    Drops the tail of the stable label-sorted order, so the result is
    deterministic for a given label array.
    """
    labels = np.asarray(labels)
    n_shards = n_clients * shards_per_client
    keep = (labels.shape[0] // n_shards) * n_shards
    if keep == 0:
        raise PartitionError(
            f"{labels.shape[0]} samples cannot fill even one round of {n_shards} shards"
        )
    order = np.argsort(labels, kind="stable")
    return np.sort(order[:keep])


# -- dataset files --------------------------------------------------------


def save_raw_f64(path, dataset: Dataset) -> None:
    """Write the native container: header, f64 sample block, optional u16 labels."""
    n, d = dataset.samples.shape
    has_labels = dataset.labels is not None
    if has_labels and (dataset.labels.min() < 0 or dataset.labels.max() > 0xFFFF):
        raise ShapeError("labels must fit u16 to be stored")
    with open(path, "wb") as f:
        f.write(_DS_HEADER.pack(DATASET_MAGIC, DATASET_VERSION, n, d, int(has_labels)))
        f.write(dataset.samples.astype("<f8").tobytes())
        if has_labels:
            f.write(dataset.labels.astype("<u2").tobytes())


def _load_raw_f64(data: bytes) -> Dataset:
    if len(data) < _DS_HEADER.size:
        raise FormatError("file shorter than dataset header", offset=len(data))
    magic, version, n, d, has_labels = _DS_HEADER.unpack(data[: _DS_HEADER.size])
    if magic != DATASET_MAGIC:
        raise FormatError(f"bad dataset magic {magic!r}", offset=0)
    if version != DATASET_VERSION:
        raise FormatError(f"unsupported dataset version {version}", offset=4)
    if d == 0 or n == 0:
        raise FormatError("empty dataset", offset=6)
    sample_bytes = n * d * 8
    expected = _DS_HEADER.size + sample_bytes + (2 * n if has_labels else 0)
    if len(data) < expected:
        raise FormatError(
            f"dataset truncated, expected {expected} bytes", offset=len(data)
        )
    if len(data) > expected:
        raise FormatError("trailing bytes after dataset payload", offset=expected)
    samples = np.frombuffer(
        data, dtype="<f8", count=n * d, offset=_DS_HEADER.size
    ).reshape(n, d)
    labels = None
    if has_labels:
        labels = np.frombuffer(
            data, dtype="<u2", count=n, offset=_DS_HEADER.size + sample_bytes
        ).astype(np.int64)
    return Dataset(samples=samples.copy(), labels=labels)


def _load_cifar10_binary(data: bytes) -> Dataset:
    if len(data) == 0 or len(data) % CIFAR10_RECORD != 0:
        raise FormatError(
            f"length {len(data)} is not a multiple of the {CIFAR10_RECORD}-byte record",
            offset=(len(data) // CIFAR10_RECORD) * CIFAR10_RECORD,
        )
    n = len(data) // CIFAR10_RECORD
    raw = np.frombuffer(data, dtype=np.uint8).reshape(n, CIFAR10_RECORD)
    labels = raw[:, 0].astype(np.int64)
    samples = raw[:, 1:].astype(np.float64) / 255.0
    return Dataset(samples=samples, labels=labels)


def load_image_dataset(path, fmt: str) -> Dataset:
    """Load a dataset file; fmt is 'cifar10-binary' or 'raw-f64'.

    Image pixel bytes are scaled to [0, 1]; raw-f64 values are taken as is.
    """
    with open(path, "rb") as f:
        data = f.read()
    if fmt == "cifar10-binary":
        return _load_cifar10_binary(data)
    if fmt == "raw-f64":
        return _load_raw_f64(data)
    raise FormatError(f"unknown dataset format {fmt!r}")
