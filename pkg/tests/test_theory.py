'''
Tests for the softmax/Bregman equivalence and the rotational ambiguity checks.
'''

import numpy as np
import pytest

from core.errors import DimensionMismatchError, InvalidRotationError
from theory.equivalence import (EquivalenceCase, bregman_divergence, check_equivalence, matched_biases,
                                run_equivalence_suite, softmax_distance_form, softmax_dot_form)
from theory.rotation import orthant_layout, planar_rotation, rotation_ambiguity_demo, run_rotation_suite

# -------------------------------------------------------------------------------------------------
# Equivalence
# -------------------------------------------------------------------------------------------------

def test_two_class_worked_example():
    nu, W = np.array([1.0, 0.0]), np.eye(2)
    expected = np.e / (np.e + 1)
    assert softmax_dot_form(nu, W, matched_biases(W))[0] == pytest.approx(expected, abs=1e-15)
    assert softmax_distance_form(nu, W)[0] == pytest.approx(expected, abs=1e-15)


def test_bregman_divergence_is_half_squared_distance():
    assert bregman_divergence([1.0, 2.0], [4.0, -2.0]) == 12.5
    assert bregman_divergence([3.0], [3.0]) == 0.0


def test_shared_offset_does_not_matter():
    rng = np.random.default_rng(0)
    W = rng.standard_normal((5, 4))
    nu = rng.standard_normal(5)
    assert check_equivalence(EquivalenceCase(nu=nu, W=W, biases=matched_biases(W) + 7.5)) < 1e-12


def test_equal_norm_proxies_need_no_bias():
    W = np.array([[1.0, 0.0, -1.0], [0.0, 1.0, 0.0]])
    assert check_equivalence(EquivalenceCase(nu=[0.3, -0.2], W=W, biases=np.zeros(3))) < 1e-12


def test_unequal_norms_without_bias_disagree():
    W = np.array([[2.0, 0.0], [0.0, 0.5]])
    assert check_equivalence(EquivalenceCase(nu=[0.4, 0.4], W=W, biases=np.zeros(2))) > 1e-6


def test_default_case_uses_matched_biases():
    case = EquivalenceCase(nu=[1.0, 1.0], W=[[1.0, 2.0], [0.0, 1.0]])
    np.testing.assert_allclose(case.biases, [-0.5, -2.5])


def test_case_shapes_are_checked():
    with pytest.raises(DimensionMismatchError):
        EquivalenceCase(nu=[1.0, 2.0, 3.0], W=np.eye(2))


def test_equivalence_suite_passes():
    result = run_equivalence_suite(trials=200, seed=1)
    assert result.passed, result.failures
    assert result.worst < 1e-12
    assert result.notes["weakest_negative_control"] > 1e-6

# -------------------------------------------------------------------------------------------------
# Rotation
# -------------------------------------------------------------------------------------------------

def test_identity_rotation_changes_nothing():
    nu, labels, W = orthant_layout()
    report = rotation_ambiguity_demo(nu, labels, W, np.eye(2))
    assert report.loss_difference == 0.0
    assert report.codes_changed == 0
    assert report.distance_pairs_changed == 0


def test_quarter_of_a_quadrant_breaks_the_codes_but_not_the_loss():
    nu, labels, W = orthant_layout()
    report = rotation_ambiguity_demo(nu, labels, W, planar_rotation(45.0))
    assert report.loss_difference < 1e-12
    assert report.same_class_agreement_before == 1.0
    assert report.same_class_agreement_after < 1.0
    assert report.codes_changed > 0
    assert report.distance_pairs_changed > 0


def test_rotation_must_be_orthogonal():
    nu, labels, W = orthant_layout()
    with pytest.raises(InvalidRotationError):
        rotation_ambiguity_demo(nu, labels, W, np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_rotation_suite_passes():
    result = run_rotation_suite(trials=50, seed=2)
    assert result.passed, result.failures
    assert result.notes["trials_with_code_changes"] > 0
