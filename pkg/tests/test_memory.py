"""Feature memory: capacity policies, the quality gate, rebuilds, snapshots."""

import math

import numpy as np
import pytest

from memalign.errors import ConfigError, InvalidFeatureError, SnapshotFormatError
from memalign.memory import (
    BALANCED,
    IMBALANCED,
    InsertOutcome,
    InstanceRecord,
    MemoryBank,
    StoragePolicy,
    compute_capacities,
    load_snapshot,
    rebuild,
    snapshot,
)


def record(category, predicted, dim=4, seed=0, image=0, index=0):
    rng = np.random.default_rng(seed)
    return InstanceRecord(
        feature=rng.standard_normal(dim),
        category=category,
        predicted_category=predicted,
        source_image_id=image,
        instance_index=index,
    )


def small_bank(capacity=2, categories=3, dim=4):
    policy = StoragePolicy(IMBALANCED, 1.0)
    return MemoryBank(categories, dim, policy, {c: capacity for c in range(1, categories + 1)})


# -- capacities --------------------------------------------------------------


def test_imbalanced_capacity_rounds_up():
    caps = compute_capacities(StoragePolicy(IMBALANCED, 0.2), {1: 7, 2: 0}, 2)
    assert caps == {1: 2, 2: 0}  # ceil(1.4) = 2


def test_imbalanced_capacity_identity_at_gamma_one():
    caps = compute_capacities(StoragePolicy(IMBALANCED, 1.0), {1: 7, 2: 3}, 2)
    assert caps == {1: 7, 2: 3}


def test_balanced_capacity_floors_shared_quota():
    counts = {1: 30, 2: 25, 3: 20, 4: 15, 5: 10}  # total 100
    caps = compute_capacities(StoragePolicy(BALANCED, 0.3), counts, 5)
    assert caps == {c: 6 for c in range(1, 6)}


def test_balanced_quota_rejected_when_category_short():
    counts = {1: 90, 2: 6, 3: 4}  # quota floor(100/3) = 33 > 6 and 4
    with pytest.raises(ConfigError) as err:
        compute_capacities(StoragePolicy(BALANCED, 1.0), counts, 3)
    assert "category 2" in str(err.value)


def test_policy_validation():
    with pytest.raises(ConfigError):
        StoragePolicy(IMBALANCED, 0.0)
    with pytest.raises(ConfigError):
        StoragePolicy(IMBALANCED, 1.5)
    with pytest.raises(ConfigError):
        StoragePolicy("weird", 0.5)


def test_capacity_formulas_match_direct_arithmetic():
    rng = np.random.default_rng(42)
    for _ in range(50):
        gamma = float(rng.uniform(0.01, 1.0))
        counts = {c: int(rng.integers(0, 500)) for c in range(1, 7)}
        caps = compute_capacities(StoragePolicy(IMBALANCED, gamma), counts, 6)
        assert caps == {c: math.ceil(gamma * n) for c, n in counts.items()}


# -- insertion gate ----------------------------------------------------------


def test_insert_stores_correct_prediction():
    bank = small_bank()
    assert bank.insert_filtered(record(3, 3)) is InsertOutcome.STORED
    assert bank.count(3) == 1


def test_insert_rejects_wrong_prediction():
    bank = small_bank()
    assert bank.insert_filtered(record(3, 1)) is InsertOutcome.REJECTED_WRONG_PREDICTION
    assert bank.total_count == 0


def test_insert_rejects_when_full():
    bank = small_bank(capacity=1)
    assert bank.insert_filtered(record(2, 2, seed=1)) is InsertOutcome.STORED
    assert bank.insert_filtered(record(2, 2, seed=2)) is InsertOutcome.REJECTED_FULL
    assert bank.count(2) == 1


def test_wrong_prediction_reported_even_when_full():
    bank = small_bank(capacity=0)
    assert bank.insert_filtered(record(1, 2)) is InsertOutcome.REJECTED_WRONG_PREDICTION


def test_insert_validates_feature():
    bank = small_bank()
    bad_dim = InstanceRecord(np.ones(7), 1, 1, 0, 0)
    with pytest.raises(InvalidFeatureError):
        bank.insert_filtered(bad_dim)
    nan = InstanceRecord(np.array([1.0, np.nan, 0.0, 0.0]), 1, 1, 0, 0)
    with pytest.raises(InvalidFeatureError):
        bank.insert_filtered(nan)
    zero = InstanceRecord(np.zeros(4), 1, 1, 0, 0)
    with pytest.raises(InvalidFeatureError):
        bank.insert_filtered(zero)
    with pytest.raises(ValueError):
        bank.insert_filtered(record(9, 9))


def test_capacity_never_exceeded_and_gate_sound():
    rng = np.random.default_rng(7)
    policy = StoragePolicy(IMBALANCED, 0.5)
    counts = {c: int(rng.integers(1, 40)) for c in range(1, 6)}
    bank = MemoryBank.create(5, 8, policy, counts)
    stored_from = []
    for i in range(500):
        rec = InstanceRecord(
            feature=rng.standard_normal(8),
            category=int(rng.integers(1, 6)),
            predicted_category=int(rng.integers(1, 6)),
            source_image_id=i,
            instance_index=0,
        )
        if bank.insert_filtered(rec) is InsertOutcome.STORED:
            stored_from.append(rec)
        for c in bank.categories():
            assert bank.count(c) <= bank.capacities[c]
    assert all(r.predicted_category == r.category for r in stored_from)


# -- rebuild -----------------------------------------------------------------


def test_rebuild_empty_stream_gives_empty_bank():
    bank = small_bank()
    bank.insert_filtered(record(1, 1))
    fresh = rebuild(bank, [])
    assert fresh.total_count == 0
    assert fresh.build_generation == bank.build_generation + 1


def test_rebuild_all_wrong_predictions_gives_empty_bank():
    bank = small_bank()
    stream = [record(1, 2, seed=i) for i in range(10)]
    assert rebuild(bank, stream).total_count == 0


def test_rebuild_gamma_one_stores_all_correct():
    counts = {1: 5, 2: 3}
    bank = MemoryBank.create(2, 4, StoragePolicy(IMBALANCED, 1.0), counts)
    stream = [record(1, 1, seed=i, image=i) for i in range(5)] + [
        record(2, 2, seed=10 + i, image=10 + i) for i in range(3)
    ]
    fresh = rebuild(bank, stream)
    assert fresh.counts() == counts


def test_rebuild_deterministic_and_order_preserving():
    bank = small_bank(capacity=10)
    stream = [record(1, 1, seed=i, image=i) for i in range(6)]
    a = rebuild(bank, stream)
    b = rebuild(bank, stream)
    assert a == b
    stored = a.category_matrix(1)
    for i in range(6):
        assert np.array_equal(stored[i], stream[i].feature)


def test_balanced_rebuild_equalizes_counts():
    counts = {1: 40, 2: 20, 3: 12}
    bank = MemoryBank.create(3, 4, StoragePolicy(BALANCED, 0.5), counts)
    quota = math.floor(0.5 * 72 / 3)
    stream = []
    i = 0
    for c, n in counts.items():
        for _ in range(n):
            stream.append(record(c, c, seed=i, image=i))
            i += 1
    fresh = rebuild(bank, stream)
    assert all(fresh.count(c) == quota for c in fresh.categories())


# -- snapshots ---------------------------------------------------------------


def test_snapshot_round_trip_empty_bank():
    bank = small_bank()
    assert load_snapshot(snapshot(bank)) == bank


def test_snapshot_round_trip_populated_bank():
    rng = np.random.default_rng(5)
    counts = {c: int(rng.integers(0, 30)) for c in range(1, 8)}
    bank = MemoryBank.create(7, 16, StoragePolicy(BALANCED, 0.1), {c: 100 for c in counts})
    i = 0
    for c, n in counts.items():
        for _ in range(n):
            bank.insert_filtered(
                InstanceRecord(rng.standard_normal(16), c, c, i, 0)
            )
            i += 1
    blob = snapshot(bank)
    restored = load_snapshot(blob)
    assert restored == bank
    assert snapshot(restored) == blob


def test_snapshot_truncation_reports_offset():
    bank = small_bank()
    bank.insert_filtered(record(1, 1))
    blob = snapshot(bank)
    with pytest.raises(SnapshotFormatError) as err:
        load_snapshot(blob[: len(blob) - 5])
    assert err.value.offset == len(blob) - 5

    with pytest.raises(SnapshotFormatError) as err:
        load_snapshot(blob[:10])
    assert "truncated" in str(err.value)


def test_snapshot_bad_magic_and_trailing_garbage():
    bank = small_bank()
    blob = snapshot(bank)
    with pytest.raises(SnapshotFormatError) as err:
        load_snapshot(b"XXXX" + blob[4:])
    assert err.value.offset == 0
    with pytest.raises(SnapshotFormatError):
        load_snapshot(blob + b"\x00")
