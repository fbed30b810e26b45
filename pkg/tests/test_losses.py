"""Loss kernels: analytic values and finite-difference gradient checks."""

import math

import numpy as np
import pytest

from conftest import central_difference, relative_error
from memalign.errors import NonFiniteLossError
from memalign.losses import (
    LossBreakdown,
    LossWeights,
    combine,
    discriminator_feature_gradients,
    discriminator_loss,
    instance_alignment_loss,
    negative_loss,
    positive_loss,
)
from memalign.retrieval import RetrievalResult


def as_positives(vectors):
    return [(np.asarray(v, float), 0.0) for v in vectors]


def result_for(positives, negatives):
    return RetrievalResult(
        query_category=1,
        positives=as_positives(positives),
        positive_indices=list(range(len(positives))),
        short=False,
        negatives=[(np.asarray(v, float), 2 + i) for i, v in enumerate(negatives)],
    )


# -- positive loss -------------------------------------------------------------


def test_positive_loss_zero_at_coincidence():
    v = np.array([1.0, 2.0])
    value, grad = positive_loss(v, as_positives([v]))
    assert value == 0.0
    assert np.array_equal(grad, np.zeros(2))


def test_positive_loss_analytic_value():
    value, _ = positive_loss(np.array([1.0, 0.0]), as_positives([[1.0, 1.0]]))
    assert abs(value - 1.0 / math.sqrt(2.0)) < 1e-12


def test_positive_loss_gradient_matches_finite_differences():
    rng = np.random.default_rng(17)
    for _ in range(20):
        target = rng.standard_normal(64)
        positives = as_positives(rng.standard_normal((3, 64)))
        _, grad = positive_loss(target, positives)
        fd = central_difference(lambda x: positive_loss(x, positives)[0], target)
        assert relative_error(grad, fd) < 1e-6


def test_positive_loss_stopped_similarity_gradient():
    rng = np.random.default_rng(3)
    target = rng.standard_normal(8)
    positives = as_positives(rng.standard_normal((2, 8)))
    _, grad_full = positive_loss(target, positives)
    _, grad_stop = positive_loss(target, positives, stop_similarity_grad=True)
    assert not np.allclose(grad_full, grad_stop)
    # stopped variant: only the distance factor moves
    expected = np.zeros(8)
    for vec, _ in positives:
        diff = target - vec
        dist = np.linalg.norm(diff)
        sim = float(target @ vec) / (np.linalg.norm(target) * np.linalg.norm(vec))
        expected += sim * diff / dist
    assert np.allclose(grad_stop, expected / 2.0, atol=1e-12)


def test_positive_loss_requires_nonempty():
    with pytest.raises(ValueError):
        positive_loss(np.ones(2), [])


# -- negative loss -------------------------------------------------------------


def test_negative_loss_inactive_hinges_zero():
    target = np.array([0.0, 0.0])
    negatives = [np.array([1.5, 0.0]), np.array([0.0, 2.0])]
    value, grad = negative_loss(target, negatives, margin=1.0)
    assert value == 0.0
    assert np.array_equal(grad, np.zeros(2))


def test_negative_loss_analytic_value():
    target = np.array([0.0, 0.0])
    negatives = [np.array([0.4, 0.0]), np.array([0.9, 0.0])]
    value, _ = negative_loss(target, negatives, margin=1.0)
    assert abs(value - 0.35) < 1e-12


def test_negative_loss_gradient_matches_finite_differences():
    rng = np.random.default_rng(11)
    checked = 0
    while checked < 20:
        target = rng.standard_normal(32)
        negatives = list(target + 0.5 * rng.standard_normal((4, 32)))
        dists = [np.linalg.norm(target - n) for n in negatives]
        if any(abs(d - 1.0) < 1e-3 for d in dists):
            continue  # skip hinge kinks
        _, grad = negative_loss(target, negatives, margin=1.0)
        fd = central_difference(lambda x: negative_loss(x, negatives, 1.0)[0], target)
        assert relative_error(grad, fd) < 1e-6
        checked += 1


# -- instance alignment aggregation --------------------------------------------


def test_instance_alignment_empty_batch():
    value, grads = instance_alignment_loss([], margin=1.0)
    assert value == 0.0 and grads == []
    value, grads = instance_alignment_loss([[], []], margin=1.0)
    assert value == 0.0 and grads == []


def test_instance_alignment_single_instance_is_plus_plus_minus():
    rng = np.random.default_rng(5)
    f = rng.standard_normal(6)
    res = result_for(rng.standard_normal((2, 6)), rng.standard_normal((3, 6)))
    value, grads = instance_alignment_loss([[(f, res)]], margin=1.0)
    pos_val, _ = positive_loss(f, res.positives)
    neg_val, _ = negative_loss(f, res.negative_vectors, 1.0)
    assert abs(value - (pos_val + neg_val)) < 1e-12
    assert len(grads) == 1


def test_instance_alignment_nested_mean_two_images():
    rng = np.random.default_rng(9)
    images = []
    per_instance = []
    for n_instances in (1, 3):
        group = []
        for _ in range(n_instances):
            f = rng.standard_normal(4)
            res = result_for(rng.standard_normal((2, 4)), rng.standard_normal((2, 4)))
            group.append((f, res))
            pos_val, _ = positive_loss(f, res.positives)
            neg_val, _ = negative_loss(f, res.negative_vectors, 1.0)
            per_instance.append((n_instances, pos_val + neg_val))
        images.append(group)
    by_hand = 0.5 * sum(v / k for k, v in per_instance)
    value, grads = instance_alignment_loss(images, margin=1.0)
    assert abs(value - by_hand) < 1e-12
    assert len(grads) == 4


def test_instance_alignment_gradients_match_finite_differences():
    rng = np.random.default_rng(23)
    features = [rng.standard_normal(16) for _ in range(3)]
    results = [
        result_for(rng.standard_normal((2, 16)), features[i] + rng.standard_normal((3, 16)))
        for i in range(3)
    ]
    batch = [[(features[0], results[0])], [(features[1], results[1]), (features[2], results[2])]]
    _, grads = instance_alignment_loss(batch, margin=1.0)

    flat = [(0, 0), (1, 0), (1, 1)]
    for slot, (img, pos) in enumerate(flat):
        def value_of(x, img=img, pos=pos):
            rebuilt = [list(group) for group in batch]
            feature, res = rebuilt[img][pos]
            rebuilt[img][pos] = (x, res)
            return instance_alignment_loss(rebuilt, margin=1.0)[0]

        fd = central_difference(value_of, batch[img][pos][0])
        assert relative_error(grads[slot], fd) < 1e-6


# -- discriminator ---------------------------------------------------------------


def test_discriminator_at_chance_is_log_two():
    rng = np.random.default_rng(1)
    feats = [(rng.standard_normal(8), i % 2) for i in range(6)]
    params = np.zeros(9)  # p = 0.5 everywhere
    value, _, _ = discriminator_loss(feats, params)
    assert abs(value - math.log(2.0)) < 1e-12


def test_discriminator_reversal_is_exact_negation():
    rng = np.random.default_rng(2)
    feats = [(rng.standard_normal(8), i % 2) for i in range(10)]
    params = rng.standard_normal(9)
    _, _, reversed_grads = discriminator_loss(feats, params)
    unreversed = discriminator_feature_gradients(feats, params)
    for rev, raw in zip(reversed_grads, unreversed):
        assert np.array_equal(rev, -raw)
        assert not np.any(rev + raw)


def test_discriminator_gradients_match_finite_differences():
    rng = np.random.default_rng(31)
    dim = 12
    feats = [(rng.standard_normal(dim), i % 2) for i in range(32)]
    params = rng.standard_normal(dim + 1)
    _, grad_disc, reversed_grads = discriminator_loss(feats, params)

    fd_disc = central_difference(lambda p: discriminator_loss(feats, p)[0], params)
    assert relative_error(grad_disc, fd_disc) < 1e-6

    for idx in (0, 17, 31):
        def value_of(x, idx=idx):
            swapped = list(feats)
            swapped[idx] = (x, feats[idx][1])
            return discriminator_loss(swapped, params)[0]

        fd_feat = central_difference(value_of, feats[idx][0])
        assert relative_error(-reversed_grads[idx], fd_feat) < 1e-6


def test_discriminator_rejects_bad_input():
    with pytest.raises(ValueError):
        discriminator_loss([], np.zeros(3))
    with pytest.raises(ValueError):
        discriminator_loss([(np.ones(2), 0)], np.array([1.0, np.nan, 0.0]))
    with pytest.raises(ValueError):
        discriminator_loss([(np.ones(2), 2)], np.zeros(3))


# -- combination ---------------------------------------------------------------


def test_combine_paper_default_weights():
    w = LossWeights(lambda1=1.0, lambda2=0.1, lambda3=0.1, margin=1.0)
    breakdown = combine(2.0, 1.0, 0.5, 0.25, w)
    assert abs(breakdown.total - (2.0 + 1.0 + 0.05 + 0.025)) < 1e-15
    breakdown.verify()


def test_combine_lambda3_zero_ignores_alignment_term():
    w = LossWeights(lambda3=0.0)
    a = combine(1.0, 1.0, 1.0, 123.0, w)
    b = combine(1.0, 1.0, 1.0, -55.0, w)
    assert a.total == b.total


def test_combine_all_zero():
    assert combine(0.0, 0.0, 0.0, 0.0, LossWeights()).total == 0.0


def test_combine_affine_in_each_term():
    rng = np.random.default_rng(6)
    w = LossWeights(lambda1=0.7, lambda2=0.3, lambda3=0.2)
    base = combine(1.0, 2.0, 3.0, 4.0, w).total
    for coeff, position in ((1.0, 0), (0.7, 1), (0.3, 2), (0.2, 3)):
        for _ in range(5):
            eps = float(rng.standard_normal())
            terms = [1.0, 2.0, 3.0, 4.0]
            terms[position] += eps
            assert abs(combine(*terms, w).total - (base + coeff * eps)) < 1e-12


def test_combine_rejects_non_finite():
    with pytest.raises(NonFiniteLossError):
        combine(float("nan"), 0.0, 0.0, 0.0, LossWeights())
    with pytest.raises(NonFiniteLossError):
        combine(0.0, float("inf"), 0.0, 0.0, LossWeights())


def test_breakdown_verify_catches_mismatch():
    bad = LossBreakdown(1.0, 0.0, 0.0, 0.0, total=2.0, weights=LossWeights())
    with pytest.raises(AssertionError):
        bad.verify()
