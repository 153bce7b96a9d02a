'''
Tests for the similarity constructors and the semantic proxy assignment.
'''

import numpy as np
import pytest

from core.config import AssignConfig, SynthConfig
from core.errors import AssignmentTooLargeError, DegenerateSimilarityWarning, EmptyClassError, InvalidSimilarityError
from features.dataset import FeatureDataset
from features.synthetic import class_structure, synth_generate
from proxies.assignment import (Assignment, apply_assignment, assignment_objective, brute_force_assign, greedy_assign,
                                greedy_assign_with_trace)
from proxies.design import random_binary_proxies, random_proxies
from proxies.proxy_set import ProxySet
from proxies.similarity import (SimilarityMatrix, class_means, dataset_similarity, gaussian_similarity,
                                tag_cooccurrence_similarity)


def _random_instance(C, seed):
    rng = np.random.default_rng(seed)
    A = rng.uniform(size=(C, C))
    S = (A + A.T) / 2
    np.fill_diagonal(S, 1.0)
    return SimilarityMatrix(S=S, source="user_supplied"), random_proxies(C, 4, seed=seed)

# -------------------------------------------------------------------------------------------------
# Class means and similarities
# -------------------------------------------------------------------------------------------------

def test_class_means():
    data = FeatureDataset(features=[[1, 1], [3, 3], [5, 0]], labels=[0, 0, 1])
    means = class_means(data)
    np.testing.assert_allclose(means.u, [[2, 2], [5, 0]])
    np.testing.assert_array_equal(means.counts, [2, 1])


def test_empty_class_is_named():
    data = FeatureDataset(features=[[1.0], [2.0]], labels=[0, 2], num_classes=3)
    with pytest.raises(EmptyClassError, match="2"):
        class_means(data)


def test_means_recover_generator_centers():
    cfg = SynthConfig(superclasses=1, classes_per_superclass=3, samples_per_class=400, feature_dim=8, noise=0.2, seed=1)
    data = synth_generate(cfg)
    centers, _ = class_structure(cfg)
    means = class_means(data)
    assert np.max(np.abs(means.u - centers)) < 5 * cfg.noise / np.sqrt(cfg.samples_per_class)


def test_two_class_gaussian_similarity():
    data = FeatureDataset(features=[[0.0, 0.0], [3.0, 4.0]], labels=[0, 1])
    S = gaussian_similarity(class_means(data)).S
    assert S[0, 1] == pytest.approx(np.exp(-0.5))
    assert S[0, 1] == S[1, 0]


def test_coincident_means_fall_back_to_ones():
    data = FeatureDataset(features=[[1.0, 1.0], [1.0, 1.0]], labels=[0, 1])
    with pytest.warns(DegenerateSimilarityWarning):
        S = gaussian_similarity(class_means(data))
    assert S.degenerate
    np.testing.assert_array_equal(S.S, 1.0)


def test_superclass_structure_shows_in_similarity():
    data = synth_generate(SynthConfig(superclasses=2, classes_per_superclass=3, samples_per_class=50,
                                      superclass_separation=10.0, class_spread=1.0, seed=2))
    S = dataset_similarity(data).S
    group = np.arange(6) // 3
    within = S[(group[:, None] == group[None, :]) & ~np.eye(6, dtype=bool)]
    across = S[group[:, None] != group[None, :]]
    assert within.min() > across.max()


def test_cooccurrence_formula():
    tags = np.array([[1, 0], [1, 1], [0, 1]])
    S = tag_cooccurrence_similarity(tags).S
    assert S[0, 1] == pytest.approx(0.5)


def test_identical_and_disjoint_tags():
    tags = np.array([[1, 1, 0], [1, 1, 0], [0, 0, 1]])
    S = tag_cooccurrence_similarity(tags).S
    assert S[0, 1] == pytest.approx(1.0)
    assert S[0, 2] == 0.0


def test_missing_tag_is_rejected():
    with pytest.raises(InvalidSimilarityError, match="tag 2"):
        tag_cooccurrence_similarity(np.array([[1, 0], [1, 0]]))


def test_similarity_invariants_enforced():
    with pytest.raises(ValueError):
        SimilarityMatrix(S=[[1.0, 0.2], [0.3, 1.0]], source="user_supplied")
    with pytest.raises(ValueError):
        SimilarityMatrix(S=[[1.0, 1.5], [1.5, 1.0]], source="user_supplied")


def test_cooccurrence_needs_tags():
    data = FeatureDataset(features=[[0.0], [1.0]], labels=[0, 1])
    with pytest.raises(InvalidSimilarityError):
        dataset_similarity(data, "cooccur")


def test_similarity_frame_is_one_based():
    frame = tag_cooccurrence_similarity(np.array([[1, 0], [1, 1]])).to_frame()
    assert list(frame.index) == [1, 2]

# -------------------------------------------------------------------------------------------------
# Objective
# -------------------------------------------------------------------------------------------------

def test_two_classes_objective_is_swap_symmetric():
    S, p = _random_instance(2, 0)
    assert assignment_objective(S, p, [0, 1]) == pytest.approx(assignment_objective(S, p, [1, 0]))


def test_zero_similarity_gives_zero_objective():
    p = random_binary_proxies(4, 6, seed=1)
    S = SimilarityMatrix(S=np.eye(4), source="user_supplied")
    assert assignment_objective(S, p, [2, 0, 3, 1]) == 0.0


def test_hand_computed_objective():
    W = np.array([[1.0, 1.0, -1.0], [1.0, -1.0, 1.0]])
    S = np.array([[1.0, 0.5, 0.0], [0.5, 1.0, 0.2], [0.0, 0.2, 1.0]])
    # gram: w0·w1 = 0, w0·w2 = 0, w1·w2 = -2
    # identity: 2[0.5(1-0) + 0(1-0) + 0.2(1+2)] = 2.2
    assert assignment_objective(S, W, [0, 1, 2]) == pytest.approx(2.2)
    # γ = (1, 2, 0): pairs (w1,w2)=-2, (w1,w0)=0, (w2,w0)=0 → 2[0.5·3 + 0 + 0.2·1] = 3.4
    assert assignment_objective(S, W, [1, 2, 0]) == pytest.approx(3.4)


def test_assignment_must_be_bijective():
    with pytest.raises(ValueError):
        Assignment(gamma=[0, 1, 1])

# -------------------------------------------------------------------------------------------------
# Greedy and brute force
# -------------------------------------------------------------------------------------------------

def test_greedy_never_worse_than_start_and_trace_descends():
    for seed in range(10):
        S, p = _random_instance(7, seed)
        _, trace, initial = greedy_assign_with_trace(S, p, AssignConfig(restarts=1, seed=seed))
        assert trace[-1] <= initial
        assert all(b <= a for a, b in zip(trace, trace[1:]))


def test_brute_force_two_classes_is_identity():
    S, p = _random_instance(2, 3)
    np.testing.assert_array_equal(brute_force_assign(S, p).gamma, [0, 1])


def test_brute_force_finds_dominant_pairing():
    W = np.array([[1.0, 1.0, -1.0], [1.0, 1.0, -1.0]])
    # classes 1 and 2 are similar; they should share the two identical proxies
    S = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.9], [0.0, 0.9, 1.0]])
    gamma = brute_force_assign(S, W).gamma
    assert {gamma[1], gamma[2]} == {0, 1}
    np.testing.assert_array_equal(gamma, [2, 0, 1])


def test_brute_force_guard():
    S, p = _random_instance(10, 0)
    with pytest.raises(AssignmentTooLargeError):
        brute_force_assign(S, random_binary_proxies(10, 8))


def test_brute_force_bounds_greedy():
    for seed in range(5):
        S, p = _random_instance(6, seed)
        best = assignment_objective(S, p, brute_force_assign(S, p))
        greedy = assignment_objective(S, p, greedy_assign(S, p, AssignConfig(restarts=4, seed=seed)))
        assert best <= greedy + 1e-12


def test_greedy_matches_oracle_on_most_instances():
    hits, within = 0, 0
    for seed in range(50):
        S, p = _random_instance(6, 100 + seed)
        best = assignment_objective(S, p, brute_force_assign(S, p))
        greedy = assignment_objective(S, p, greedy_assign(S, p, AssignConfig(restarts=16, seed=seed)))
        hits += greedy <= best + 1e-9
        within += greedy <= best + 0.1 * abs(best) + 1e-9
    assert hits >= 45
    assert within == 50


def test_greedy_is_deterministic_and_thread_independent():
    S, p = _random_instance(8, 4)
    cfg = AssignConfig(restarts=6, seed=2)
    np.testing.assert_array_equal(greedy_assign(S, p, cfg, workers=1).gamma, greedy_assign(S, p, cfg, workers=3).gamma)


def test_argmin_invariant_to_proxy_scale():
    for seed in range(20):
        S, p = _random_instance(5, seed)
        a = brute_force_assign(S, p.W)
        b = brute_force_assign(S, 3.0 * p.W)
        np.testing.assert_array_equal(a.gamma, b.gamma)


def test_relabeling_permutes_the_assignment():
    for seed in range(10):
        S, p = _random_instance(5, 50 + seed)
        perm = np.random.default_rng(seed).permutation(5)
        S_perm = S.S[np.ix_(perm, perm)]
        base = brute_force_assign(S, p).gamma
        permuted = brute_force_assign(S_perm, p).gamma
        assert assignment_objective(S_perm, p, permuted) == pytest.approx(assignment_objective(S, p, base))
        assert assignment_objective(S_perm, p, base[perm]) == pytest.approx(assignment_objective(S, p, base))


def test_apply_assignment_turns_hclm_into_shclm():
    hclm = ProxySet.from_matrix(random_binary_proxies(4, 6, seed=0).W, "hclm")
    shclm = apply_assignment(hclm, Assignment(gamma=[3, 2, 1, 0]))
    assert shclm.kind == "shclm"
    np.testing.assert_array_equal(shclm.matrix[:, 0], hclm.W[:, 3])
