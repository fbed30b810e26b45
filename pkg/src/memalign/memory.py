"""Category-partitioned feature memory with quality-gated insertion.

Source instance features land in per-category slots only when the model
predicted their category correctly, up to a capacity set by the storage
policy. Banks are rebuilt wholesale at a fixed training cadence; between
rebuilds a bank is treated as immutable, which makes concurrent reads safe
and keeps retrieval deterministic.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterable, Iterator, Mapping

import numpy as np

from .errors import ConfigError, InvalidFeatureError, SnapshotFormatError

IMBALANCED = "imbalanced"
BALANCED = "balanced"

_HEADER = struct.Struct("<4sHBxIIQd")
_MAGIC = b"MBNK"
_VERSION = 1


def validate_feature(vector: np.ndarray, dim: int) -> np.ndarray:
    """Check a feature vector against the bank contract and return it as f64.

    Rejects wrong dimension, non-finite components, and zero norm (a zero
    vector can never participate in cosine similarity).
    """
    arr = np.asarray(vector, dtype=np.float64)
    if arr.shape != (dim,):
        raise InvalidFeatureError(f"feature shape {arr.shape} != ({dim},)")
    if not np.all(np.isfinite(arr)):
        raise InvalidFeatureError("feature contains NaN or Inf")
    if not np.any(arr):
        raise InvalidFeatureError("feature has zero norm")
    return arr


@dataclass(frozen=True)
class StoragePolicy:
    """Capacity policy: which fraction of source instances to retain, and how.

    ``imbalanced`` keeps a gamma fraction of each category's own count;
    ``balanced`` gives every category the same quota.
    """

    variant: str = IMBALANCED
    gamma: float = 1.0

    def __post_init__(self) -> None:
        if self.variant not in (IMBALANCED, BALANCED):
            raise ConfigError(
                f"storage_policy: unknown variant {self.variant!r} "
                f"(expected {IMBALANCED!r} or {BALANCED!r})"
            )
        if not (0.0 < self.gamma <= 1.0):
            raise ConfigError(f"gamma: {self.gamma} outside (0, 1]")


@dataclass(frozen=True)
class InstanceRecord:
    """One source instance offered to the bank during a build pass."""

    feature: np.ndarray
    category: int
    predicted_category: int
    source_image_id: int
    instance_index: int


class InsertOutcome(Enum):
    STORED = "stored"
    REJECTED_WRONG_PREDICTION = "rejected_wrong_prediction"
    REJECTED_FULL = "rejected_full"


def compute_capacities(
    policy: StoragePolicy, category_counts: Mapping[int, int], num_categories: int
) -> Dict[int, int]:
    """Per-category slot capacities for the given source category counts.

    imbalanced: ceil(gamma * count(c)); balanced: floor(gamma * total / C)
    for every category. The balanced quota must not exceed any category's
    available count, otherwise the configuration is rejected naming the
    deficient category.
    """
    if num_categories < 2:
        raise ConfigError(f"categories: need >= 2, got {num_categories}")
    counts = {c: int(category_counts.get(c, 0)) for c in range(1, num_categories + 1)}
    if any(v < 0 for v in counts.values()):
        raise ConfigError("category_counts: negative count")

    if policy.variant == IMBALANCED:
        return {c: math.ceil(policy.gamma * n) for c, n in counts.items()}

    total = sum(counts.values())
    quota = math.floor(policy.gamma * total / num_categories)
    for c in range(1, num_categories + 1):
        if counts[c] < quota:
            raise ConfigError(
                f"storage_policy: balanced quota {quota} exceeds the "
                f"{counts[c]} available source instances of category {c}"
            )
    return {c: quota for c in counts}


class MemoryBank:
    """Per-category store of quality-gated source features.

    Slots are fixed-capacity float64 buffers; ``insert_filtered`` appends in
    arrival order, so identical record streams always produce identical
    banks. ``build_generation`` counts completed rebuilds.
    """

    def __init__(
        self,
        num_categories: int,
        dim: int,
        policy: StoragePolicy,
        capacities: Mapping[int, int],
        build_generation: int = 0,
    ) -> None:
        if num_categories < 2:
            raise ConfigError(f"categories: need >= 2, got {num_categories}")
        if dim < 1:
            raise ConfigError(f"feature_dim: need >= 1, got {dim}")
        self.num_categories = num_categories
        self.dim = dim
        self.policy = policy
        self.capacities = {
            c: int(capacities.get(c, 0)) for c in range(1, num_categories + 1)
        }
        self.build_generation = build_generation
        self._buffers = {
            c: np.empty((self.capacities[c], dim), dtype=np.float64)
            for c in range(1, num_categories + 1)
        }
        self._counts = {c: 0 for c in range(1, num_categories + 1)}

    @classmethod
    def create(
        cls,
        num_categories: int,
        dim: int,
        policy: StoragePolicy,
        category_counts: Mapping[int, int],
    ) -> "MemoryBank":
        caps = compute_capacities(policy, category_counts, num_categories)
        return cls(num_categories, dim, policy, caps)

    def categories(self) -> Iterator[int]:
        return iter(range(1, self.num_categories + 1))

    def count(self, category: int) -> int:
        return self._counts[category]

    def counts(self) -> Dict[int, int]:
        return dict(self._counts)

    @property
    def total_count(self) -> int:
        return sum(self._counts.values())

    @property
    def fully_populated(self) -> bool:
        return all(n >= 1 for n in self._counts.values())

    def category_matrix(self, category: int) -> np.ndarray:
        """(count, dim) view of the stored vectors, insertion order."""
        return self._buffers[category][: self._counts[category]]

    def insert_filtered(self, record: InstanceRecord) -> InsertOutcome:
        """Offer one record; store it only if it passes the quality gate.

        The gate (predicted category equals true category) is checked before
        capacity, so a wrong prediction is always reported as such even when
        the slot is full.
        """
        for name, value in (
            ("category", record.category),
            ("predicted_category", record.predicted_category),
        ):
            if not 1 <= value <= self.num_categories:
                raise ValueError(
                    f"{name} {value} outside [1, {self.num_categories}]"
                )
        feature = validate_feature(record.feature, self.dim)

        if record.predicted_category != record.category:
            return InsertOutcome.REJECTED_WRONG_PREDICTION
        c = record.category
        if self._counts[c] >= self.capacities[c]:
            return InsertOutcome.REJECTED_FULL
        self._buffers[c][self._counts[c]] = feature
        self._counts[c] += 1
        return InsertOutcome.STORED

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MemoryBank):
            return NotImplemented
        if (
            self.num_categories != other.num_categories
            or self.dim != other.dim
            or self.policy != other.policy
            or self.capacities != other.capacities
            or self.build_generation != other.build_generation
            or self._counts != other._counts
        ):
            return False
        return all(
            self.category_matrix(c).tobytes() == other.category_matrix(c).tobytes()
            for c in self.categories()
        )

    def __repr__(self) -> str:
        return (
            f"MemoryBank(C={self.num_categories}, d={self.dim}, "
            f"policy={self.policy.variant}/{self.policy.gamma}, "
            f"stored={self.total_count}, generation={self.build_generation})"
        )


def rebuild(bank: MemoryBank, source_stream: Iterable[InstanceRecord]) -> MemoryBank:
    """Fresh bank from a full filtered pass over the stream, in stream order.

    Old contents are discarded entirely; the generation counter advances by
    one. An empty stream yields a valid empty bank.
    """
    fresh = MemoryBank(
        bank.num_categories,
        bank.dim,
        bank.policy,
        bank.capacities,
        build_generation=bank.build_generation + 1,
    )
    for record in source_stream:
        fresh.insert_filtered(record)
    return fresh


def snapshot(bank: MemoryBank) -> bytes:
    """Serialize a bank: versioned header, per-category counts, f64 payload.

    Little-endian throughout; load_snapshot(snapshot(b)) == b bit for bit.
    """
    variant_code = 0 if bank.policy.variant == IMBALANCED else 1
    parts = [
        _HEADER.pack(
            _MAGIC,
            _VERSION,
            variant_code,
            bank.num_categories,
            bank.dim,
            bank.build_generation,
            bank.policy.gamma,
        )
    ]
    caps = np.array(
        [bank.capacities[c] for c in bank.categories()], dtype="<u8"
    )
    counts = np.array([bank.count(c) for c in bank.categories()], dtype="<u8")
    parts.append(caps.tobytes())
    parts.append(counts.tobytes())
    for c in bank.categories():
        parts.append(
            np.ascontiguousarray(bank.category_matrix(c), dtype="<f8").tobytes()
        )
    return b"".join(parts)


def load_snapshot(data: bytes) -> MemoryBank:
    """Inverse of :func:`snapshot`; raises SnapshotFormatError with the byte
    offset at which parsing failed."""
    if len(data) < _HEADER.size:
        raise SnapshotFormatError("truncated header", len(data))
    magic, version, variant_code, num_categories, dim, generation, gamma = (
        _HEADER.unpack_from(data, 0)
    )
    if magic != _MAGIC:
        raise SnapshotFormatError(f"bad magic {magic!r}", 0)
    if version != _VERSION:
        raise SnapshotFormatError(f"unsupported version {version}", 4)
    if variant_code not in (0, 1):
        raise SnapshotFormatError(f"unknown policy code {variant_code}", 6)
    if not (0.0 < gamma <= 1.0):
        raise SnapshotFormatError(f"gamma {gamma} outside (0, 1]", 24)
    if num_categories < 2 or dim < 1:
        raise SnapshotFormatError(
            f"implausible shape C={num_categories} d={dim}", 8
        )

    offset = _HEADER.size
    table_bytes = 8 * num_categories
    if len(data) < offset + 2 * table_bytes:
        raise SnapshotFormatError("truncated capacity/count tables", len(data))
    caps = np.frombuffer(data, dtype="<u8", count=num_categories, offset=offset)
    offset += table_bytes
    counts = np.frombuffer(data, dtype="<u8", count=num_categories, offset=offset)
    for i in range(num_categories):
        if counts[i] > caps[i]:
            raise SnapshotFormatError(
                f"count {counts[i]} exceeds capacity {caps[i]} "
                f"for category {i + 1}",
                offset + 8 * i,
            )
    offset += table_bytes

    policy = StoragePolicy(
        variant=IMBALANCED if variant_code == 0 else BALANCED, gamma=gamma
    )
    capacities = {c: int(caps[c - 1]) for c in range(1, num_categories + 1)}
    bank = MemoryBank(num_categories, dim, policy, capacities, generation)
    for c in range(1, num_categories + 1):
        n = int(counts[c - 1])
        payload = n * dim * 8
        if len(data) < offset + payload:
            raise SnapshotFormatError(
                f"truncated payload for category {c}", len(data)
            )
        block = np.frombuffer(
            data, dtype="<f8", count=n * dim, offset=offset
        ).reshape(n, dim)
        if not np.all(np.isfinite(block)):
            raise SnapshotFormatError(
                f"non-finite stored vector in category {c}", offset
            )
        bank._buffers[c][:n] = block
        bank._counts[c] = n
        offset += payload
    if offset != len(data):
        raise SnapshotFormatError(
            f"{len(data) - offset} trailing bytes after payload", offset
        )
    return bank
