import itertools

import numpy as np
import pytest
from scipy.stats import ortho_group

from btar.services.decomposition import (
    CPFactors,
    TuckerFactors,
    coeff_unfold,
    cp_reconstruct,
    cp_to_tucker,
    hosvd,
    is_all_orthogonal,
    param_count,
    projection_matrix,
    sign_normalize,
    superdiagonal,
    tucker_reconstruct,
)
from btar.services.tensor_ops import frobenius_norm, unfold
from btar.utils.errors import ShapeMismatchError


def _random_tucker(rng, dims, ranks):
    return TuckerFactors(
        core=rng.standard_normal(tuple(ranks)),
        factors=tuple(rng.standard_normal((i, r)) for i, r in zip(dims, ranks)),
    )


def _rotate(f, rng):
    """Rotate every factor by a random orthogonal matrix and compensate in the core."""
    core = f.core
    factors = []
    for mode, b in enumerate(f.factors, start=1):
        r = b.shape[1]
        q = ortho_group.rvs(r, random_state=rng) if r > 1 else np.array([[-1.0]])
        factors.append(b @ q)
        core = np.moveaxis(np.tensordot(q.T, core, axes=([1], [mode - 1])), 0, mode - 1)
    return TuckerFactors(core=core, factors=tuple(factors))


def test_reconstruct_unit_vectors_gives_single_entry():
    dims = (2, 3, 2, 2, 3, 2)
    factors = tuple(np.eye(d)[:, [d - 1]] for d in dims)
    out = tucker_reconstruct(TuckerFactors(core=np.ones((1,) * 6), factors=factors))
    assert out[1, 2, 1, 1, 2, 1] == 1.0
    assert np.count_nonzero(out) == 1


def test_reconstruct_matches_literal_outer_product_sum(rng):
    dims = (2, 2, 2, 2, 2, 2)
    f = _random_tucker(rng, dims, (2,) * 6)
    oracle = np.zeros(dims)
    for r in itertools.product(range(2), repeat=6):
        outer = f.factors[0][:, r[0]]
        for k in range(1, 6):
            outer = np.multiply.outer(outer, f.factors[k][:, r[k]])
        oracle += f.core[r] * outer
    np.testing.assert_allclose(tucker_reconstruct(f), oracle, atol=1e-12)


def test_cp_embedding_reconstructs_identically(rng):
    cp = CPFactors(factors=tuple(rng.standard_normal((d, 2)) for d in (2, 3, 2, 2, 3, 2)))
    assert cp.rank == 2
    np.testing.assert_allclose(tucker_reconstruct(cp_to_tucker(cp)), cp_reconstruct(cp), atol=1e-12)


def test_cp_rank_one_is_outer_product_and_zero_factors_give_zero(rng):
    vs = [rng.standard_normal((d, 1)) for d in (2, 2, 3)]
    out = cp_reconstruct(CPFactors(factors=tuple(vs)))
    for i, j, k in itertools.product(range(2), range(2), range(3)):
        assert out[i, j, k] == pytest.approx(vs[0][i, 0] * vs[1][j, 0] * vs[2][k, 0])
    zero = CPFactors(factors=tuple(np.zeros((d, 2)) for d in (2, 2, 2)))
    assert not np.any(cp_reconstruct(zero))


def test_cp_factors_require_common_rank(rng):
    with pytest.raises(ShapeMismatchError):
        CPFactors(factors=(np.zeros((2, 1)), np.zeros((2, 2))))


def test_tucker_factors_validate_shapes():
    with pytest.raises(ShapeMismatchError):
        TuckerFactors(core=np.ones((2, 2)), factors=(np.ones((3, 2)),))
    with pytest.raises(ShapeMismatchError):
        TuckerFactors(core=np.ones((3,)), factors=(np.ones((2, 3)),))


def test_coeff_unfold_matches_unfolded_reconstruction(rng):
    f = _random_tucker(rng, (3, 2, 2, 3, 2, 2), (2,) * 6)
    full = tucker_reconstruct(f)
    for mode in range(1, 7):
        assert np.max(np.abs(coeff_unfold(f, mode) - unfold(full, mode))) <= 1e-10
    with pytest.raises(ShapeMismatchError):
        coeff_unfold(f, 7)


def test_coeff_unfold_rank_one_case(rng):
    f = _random_tucker(rng, (2, 3, 2, 2, 3, 2), (1,) * 6)
    b = [v[:, 0] for v in f.factors]
    rest = b[5]
    for v in (b[4], b[3], b[2], b[1]):
        rest = np.kron(rest, v)
    expected = f.core.item() * np.outer(b[0], rest)
    np.testing.assert_allclose(coeff_unfold(f, 1), expected, atol=1e-12)


def test_hosvd_recovers_exact_low_rank_tensor(rng):
    f = _random_tucker(rng, (3, 3, 2, 3, 3, 2), (2,) * 6)
    t = tucker_reconstruct(f)
    est = hosvd(t, (2,) * 6)
    assert frobenius_norm(tucker_reconstruct(est) - t) <= 1e-10 * max(frobenius_norm(t), 1.0)
    for b in est.factors:
        assert np.max(np.abs(b.T @ b - np.eye(b.shape[1]))) <= 1e-10
    assert is_all_orthogonal(est.core, tol=1e-8)


def test_hosvd_full_rank_and_monotone_error(rng):
    t = rng.standard_normal((3, 2, 3))
    full = hosvd(t, (3, 2, 3))
    np.testing.assert_allclose(tucker_reconstruct(full), t, atol=1e-10)
    errors = [frobenius_norm(tucker_reconstruct(hosvd(t, (r, 2, 3))) - t) for r in (1, 2, 3)]
    assert errors[0] >= errors[1] - 1e-12 >= errors[2] - 2e-12


def test_hosvd_rejects_rank_above_dimension(rng):
    with pytest.raises(ShapeMismatchError):
        hosvd(rng.standard_normal((2, 2)), (3, 1))


def test_is_all_orthogonal_detects_correlated_core():
    core = np.ones((2, 2, 2))
    assert not is_all_orthogonal(core)
    assert is_all_orthogonal(superdiagonal(2, 3))


def test_sign_normalize_flips_negative_leading_loading(rng):
    b = np.array([[-3.0], [1.0]])
    f = TuckerFactors(core=np.array([[2.0]]), factors=(b, np.array([[1.0]])))
    out = sign_normalize(f)
    np.testing.assert_array_equal(out.factors[0], np.array([[3.0], [-1.0]]))
    np.testing.assert_allclose(tucker_reconstruct(out), tucker_reconstruct(f), atol=1e-12)


def test_sign_normalize_keeps_positive_columns_and_breaks_ties_by_lowest_row():
    f = TuckerFactors(core=np.eye(2), factors=(np.array([[1.0, 2.0], [0.5, -1.0]]), np.eye(2)))
    np.testing.assert_array_equal(sign_normalize(f).factors[0], f.factors[0])
    tie = TuckerFactors(core=np.array([[1.0]]), factors=(np.array([[-2.0], [2.0]]), np.array([[1.0]])))
    np.testing.assert_array_equal(sign_normalize(tie).factors[0], np.array([[2.0], [-2.0]]))


def test_sign_normalize_preserves_reconstruction(rng):
    f = _random_tucker(rng, (3, 2, 2, 3, 2, 2), (2, 2, 1, 2, 1, 2))
    np.testing.assert_allclose(tucker_reconstruct(sign_normalize(f)), tucker_reconstruct(f), atol=1e-12)


def test_rotation_leaves_reconstruction_and_projections_unchanged(rng):
    f = _random_tucker(rng, (3, 2, 2, 3, 2, 2), (2,) * 6)
    g = _rotate(f, rng)
    np.testing.assert_allclose(tucker_reconstruct(g), tucker_reconstruct(f), atol=1e-10)
    for a, b in zip(f.factors, g.factors):
        np.testing.assert_allclose(projection_matrix(a), projection_matrix(b), atol=1e-10)


def test_projection_of_orthonormal_factor_is_idempotent(rng):
    q, _ = np.linalg.qr(rng.standard_normal((4, 2)))
    p = projection_matrix(q)
    np.testing.assert_allclose(p @ p, p, atol=1e-10)
    np.testing.assert_allclose(p, p.T)
    assert not np.any(projection_matrix(np.zeros((3, 2))))


def test_param_count_examples():
    assert param_count((20, 20, 10), None, kind="full") == 16_000_000
    assert param_count((20, 20, 10), (2,) * 6) == 64 + 2 * 2 * (20 + 20 + 10)
    assert param_count((2, 2, 2), 1, kind="cp") == 12
    with pytest.raises(ShapeMismatchError):
        param_count((2, 2, 2), (2, 2))
