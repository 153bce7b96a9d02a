'''
Tests for the ITQ rotation search, quantization error and binarization.
'''

import numpy as np
import pytest

from core.config import AlignConfig, TammesConfig
from core.errors import CollapsedProxiesWarning, InvalidProxySetError
from core.utils import orthogonality_error, random_orthogonal, sgn
from proxies.alignment import (RotationMatrix, alignment_trace_frame, binarize, exact_binary_rotation, itq_rotation,
                               l1_mass, quantization_error, rotate_proxies)
from proxies.design import margins, random_binary_proxies, random_proxies, solve_tammes
from proxies.proxy_set import ProxySet


def _unit(*columns):
    W = np.column_stack(columns).astype(float)
    return W / np.linalg.norm(W, axis=0, keepdims=True)


def _planted(C, d, seed):
    rng = np.random.default_rng(seed)
    B = rng.choice([-1.0, 1.0], size=(d, C))
    R = random_orthogonal(d, rng)
    return R @ B / np.sqrt(d)

# -------------------------------------------------------------------------------------------------
# quantization_error
# -------------------------------------------------------------------------------------------------

def test_scaled_binary_column_error():
    W = np.full((4, 1), 0.5)
    assert quantization_error(np.eye(4), W) == pytest.approx(1.0)


def test_sign_valued_columns_have_zero_error():
    W = np.array([[1.0, -1.0], [-1.0, -1.0], [1.0, 1.0]])
    assert quantization_error(np.eye(3), W) == 0.0


def test_zero_proxies_cost_d_per_column():
    R = random_orthogonal(5, np.random.default_rng(0))
    assert quantization_error(R, np.zeros((5, 3))) == pytest.approx(15.0)

# -------------------------------------------------------------------------------------------------
# itq_rotation
# -------------------------------------------------------------------------------------------------

def test_binary_directions_keep_identity():
    d = 4
    W = np.array([[1, 1, -1], [1, -1, 1], [-1, 1, 1], [1, 1, 1]], dtype=float) / np.sqrt(d)
    gamma, _ = itq_rotation(W, AlignConfig(seed=0, restarts=3))
    assert l1_mass(gamma, W) == pytest.approx(3 * np.sqrt(d), abs=1e-9)


def test_single_proxy_rotates_to_diagonal():
    gamma, trace = itq_rotation(np.array([[1.0], [0.0]]), AlignConfig(seed=0, restarts=4))
    rotated = gamma.gamma @ np.array([1.0, 0.0])
    np.testing.assert_allclose(np.abs(rotated), 1 / np.sqrt(2), atol=1e-8)
    assert trace.errors[-1] == pytest.approx(2 * (1 - 1 / np.sqrt(2)) ** 2, abs=1e-8)


def test_planted_rotation_is_recovered():
    W = _planted(32, 16, seed=7)
    gamma, _ = itq_rotation(W, AlignConfig(seed=7, restarts=16))
    assert l1_mass(gamma, W) == pytest.approx(32 * np.sqrt(16), abs=1e-6)


@pytest.mark.slow
def test_planted_recovery_rate():
    hits = 0
    for seed in range(20):
        W = _planted(32, 16, seed)
        gamma, _ = itq_rotation(W, AlignConfig(seed=seed, restarts=8))
        hits += abs(l1_mass(gamma, W) - 32 * 4.0) < 1e-6
    assert hits >= 18


def test_exact_rotation_makes_planted_proxies_binary():
    W = _planted(32, 16, seed=3)
    gamma = exact_binary_rotation(W)
    assert gamma is not None
    assert orthogonality_error(gamma) < 1e-8
    np.testing.assert_allclose(np.abs(gamma @ W), 0.25, atol=1e-9)


def test_exact_rotation_absent_for_generic_proxies():
    assert exact_binary_rotation(random_proxies(12, 6, seed=0).W) is None


@pytest.mark.parametrize("C, d, max_bits", [(4, 8, 16), (32, 16, 8)])
def test_exact_search_skips_wide_or_large_problems(C, d, max_bits):
    assert exact_binary_rotation(_planted(C, d, seed=0), max_bits=max_bits) is None


def test_plain_itq_when_exact_search_is_off():
    W = _planted(32, 16, seed=7)
    gamma, trace = itq_rotation(W, AlignConfig(seed=7, restarts=2, exact_search_bits=0))
    assert l1_mass(gamma, W) <= 32 * 4.0 + 1e-9
    assert all(b <= a for a, b in zip(trace.errors, trace.errors[1:]))


def test_rotation_is_orthogonal_and_trace_non_increasing():
    p = solve_tammes(6, 4, TammesConfig(seed=1, restarts=2))
    gamma, trace = itq_rotation(p, AlignConfig(seed=1))
    assert orthogonality_error(gamma.gamma) < 1e-8
    assert all(b <= a for a, b in zip(trace.errors, trace.errors[1:]))
    assert trace.iterations == len(trace.errors) - 1


def test_scale_invariance_of_argmin():
    W = random_proxies(8, 6, seed=3).W
    cfg = AlignConfig(seed=2, restarts=4)
    g1, _ = itq_rotation(W, cfg)
    g3, _ = itq_rotation(3.0 * W, cfg)
    assert l1_mass(g3, 3.0 * W) == pytest.approx(3.0 * l1_mass(g1, W), rel=1e-9)


def test_deterministic_and_thread_independent():
    p = random_proxies(10, 8, seed=5)
    cfg = AlignConfig(seed=9, restarts=4)
    a, _ = itq_rotation(p, cfg, workers=1)
    b, _ = itq_rotation(p, cfg, workers=4)
    np.testing.assert_array_equal(a.gamma, b.gamma)


def test_binary_proxies_are_rejected():
    with pytest.raises(InvalidProxySetError):
        itq_rotation(random_binary_proxies(4, 4))


def test_non_orthogonal_rotation_rejected():
    with pytest.raises(ValueError):
        RotationMatrix(gamma=np.array([[1.0, 0.1], [0.0, 1.0]]))


def test_trace_frame_columns():
    _, trace = itq_rotation(random_proxies(5, 4, seed=0), AlignConfig(seed=0, restarts=2))
    frame = alignment_trace_frame(trace)
    assert list(frame.columns) == ["iteration", "error"]
    assert len(frame) == len(trace.errors)

# -------------------------------------------------------------------------------------------------
# binarize / rotate_proxies
# -------------------------------------------------------------------------------------------------

def test_binarize_with_identity_is_elementwise_sign():
    p = ProxySet.from_matrix(_unit([0.9, -0.1], [-0.2, 0.8]), "tammes")
    hclm = binarize(RotationMatrix(gamma=np.eye(2)), p)
    np.testing.assert_array_equal(hclm.W, [[1.0, -1.0], [-1.0, 1.0]])
    assert hclm.kind == "hclm" and hclm.norm_constant == 2.0


def test_binarize_maps_zero_to_plus_one():
    p = ProxySet.from_matrix(_unit([1.0, 0.0], [-1.0, 0.0]), "tammes")
    quarter_turn = np.array([[0.0, -1.0], [1.0, 0.0]])
    hclm = binarize(RotationMatrix(gamma=quarter_turn), p)
    np.testing.assert_array_equal(hclm.W[:, 0], [1.0, 1.0])
    np.testing.assert_array_equal(hclm.W[:, 1], [1.0, -1.0])


def test_aligned_simplex_binarizes_to_valid_hclm():
    p = solve_tammes(3, 8, TammesConfig(seed=0, restarts=2))
    gamma, _ = itq_rotation(p, AlignConfig(seed=0))
    hclm = binarize(gamma, p)
    assert np.all(np.abs(hclm.W) == 1.0)
    assert hclm.norm_constant == 8.0
    # K - min <w_y, w_c> can exceed K when the closest other proxy is anti-correlated
    assert np.all(margins(hclm) > 0.0)
    assert np.all(margins(hclm) <= 2 * 8.0)


def test_collapsed_columns_warn_and_are_kept():
    p = ProxySet.from_matrix(_unit([0.6, 0.8], [0.8, 0.6], [-1.0, -1.0]), "tammes")
    with pytest.warns(CollapsedProxiesWarning):
        hclm = binarize(RotationMatrix(gamma=np.eye(2)), p)
    assert hclm.num_classes == 3


def test_binarize_rejects_binary_input():
    with pytest.raises(InvalidProxySetError):
        binarize(RotationMatrix(gamma=np.eye(4)), random_binary_proxies(3, 4))


def test_rotation_preserves_margins_and_assignment():
    p = solve_tammes(5, 4, TammesConfig(seed=4, restarts=2)).with_assignment(np.array([4, 2, 0, 1, 3]))
    gamma, _ = itq_rotation(p, AlignConfig(seed=4))
    aligned = rotate_proxies(gamma, p)
    assert aligned.kind == "aligned"
    np.testing.assert_array_equal(aligned.assignment, p.assignment)
    np.testing.assert_allclose(margins(aligned), margins(p), atol=1e-6)
    np.testing.assert_array_equal(binarize(gamma, p).W, sgn(aligned.W))
