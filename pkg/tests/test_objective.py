import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from colocfw import (
    BoxGeometry, BoxIndexing, ModelParams, QuadraticProblem, assemble, chi2_similarity,
    colocalization_problem, discriminative_term, normalized_laplacian, saliency_prior_term,
    temporal_similarity,
)

# values computed with a standalone math-module script, independent of the package
CHI2_ORTHOGONAL_D2 = 0.6394073191618971  # exp(-2 / sqrt(20))
TEMPORAL_SHIFT_02 = 0.8187307530779818  # exp(-0.2)
PRIOR_HALF = 0.06931471805599453  # -0.1 * log(0.5)
PRIOR_CLAMPED = 1.3815510557964275  # -0.1 * log(1e-6)


# -- appearance similarity --------------------------------------------------------

def test_chi2_identical_rows_is_one():
    X = np.array([[0.2, 0.5, 0.0], [0.2, 0.5, 0.0]])
    S = chi2_similarity(X, [0, 1])
    assert S[0, 1] == 1.0 and S[1, 0] == 1.0


def test_chi2_scalar_example():
    S = chi2_similarity(np.array([[1.0, 0.0], [0.0, 1.0]]), [0, 1])
    assert S[0, 1] == pytest.approx(CHI2_ORTHOGONAL_D2, rel=1e-12)
    assert S[0, 1] == pytest.approx(0.63946, abs=1e-4)


def test_chi2_same_image_and_diagonal_zero():
    X = np.random.default_rng(0).uniform(size=(6, 4))
    S = chi2_similarity(X, [0, 0, 1, 1, 2, 2])
    for i in range(6):
        for j in range(6):
            if i // 2 == j // 2:
                assert S[i, j] == 0.0
            else:
                assert 0.0 < S[i, j] <= 1.0


def test_chi2_rejects_negative_features():
    with pytest.raises(ValueError):
        chi2_similarity(np.array([[-1.0], [1.0]]), [0, 1])


def test_chi2_chunking_does_not_change_result():
    r = np.random.default_rng(1)
    X = r.uniform(size=(300, 50))
    ids = np.repeat(np.arange(30), 10)
    S = chi2_similarity(X, ids)
    i, j = 3, 177
    direct = math.exp(-(500 ** -0.5) * sum((a - b) ** 2 / (a + b) for a, b in zip(X[i], X[j])))
    assert S[i, j] == pytest.approx(direct, rel=1e-12)
    assert np.array_equal(S, S.T)


# -- Laplacian -----------------------------------------------------------------------

def test_laplacian_of_zero_is_identity():
    assert np.array_equal(normalized_laplacian(np.zeros((3, 3))), np.eye(3))


def test_laplacian_two_nodes():
    L = normalized_laplacian(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert np.allclose(L, [[1.0, -1.0], [-1.0, 1.0]], atol=0, rtol=0)


def test_laplacian_spectrum_random_sparse():
    r = np.random.default_rng(2)
    S = r.uniform(size=(20, 20)) * (r.uniform(size=(20, 20)) < 0.3)
    S = np.triu(S, 1)
    S = S + S.T
    ev = np.linalg.eigvalsh(normalized_laplacian(sp.csr_matrix(S)))
    assert ev.min() >= -1e-9 and ev.max() <= 2 + 1e-9


def test_laplacian_validation():
    with pytest.raises(ValueError):
        normalized_laplacian(np.array([[0.0, 1.0], [0.5, 0.0]]))
    with pytest.raises(ValueError):
        normalized_laplacian(np.array([[0.0, -1.0], [-1.0, 0.0]]))
    with pytest.raises(ValueError):
        normalized_laplacian(np.zeros((2, 3)))


# -- discriminative term --------------------------------------------------------------------------

def test_discriminative_zero_features_is_centering():
    n = 5
    A = discriminative_term(np.zeros((n, 3)), 0.01)
    assert np.allclose(A, (np.eye(n) - 1.0 / n) / n, atol=1e-15)


def test_discriminative_matches_direct_formula():
    r = np.random.default_rng(3)
    X = r.uniform(size=(12, 3))
    n, d, kappa = 12, 3, 0.01
    P = np.eye(n) - np.ones((n, n)) / n
    M = X.T @ P @ X + n * kappa * np.eye(d)
    ref = P @ (np.eye(n) - X @ np.linalg.inv(M) @ X.T) @ P / n
    A = discriminative_term(X, kappa)
    assert np.allclose(A, ref, atol=1e-13)
    assert np.linalg.eigvalsh(A).min() >= -1e-9
    assert np.linalg.norm(A @ np.ones(n)) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 15), st.integers(1, 6)),
              elements=st.floats(0, 10, allow_nan=False)))
def test_discriminative_annihilates_constants(X):
    A = discriminative_term(X, 0.01)
    assert np.abs(A - A.T).max() == 0.0
    assert np.linalg.norm(A @ np.ones(X.shape[0])) <= 1e-9
    assert np.linalg.eigvalsh(A).min() >= -1e-9


def test_discriminative_rejects_bad_kappa():
    with pytest.raises(ValueError):
        discriminative_term(np.ones((3, 2)), 0.0)
    with pytest.raises(ValueError):
        discriminative_term(np.ones((1, 2)), 0.01)


# -- temporal similarity ----------------------------------------------------------------------

def _geometry(centers, areas):
    return BoxGeometry(np.array(centers, dtype=float), np.array(areas, dtype=float))


def test_temporal_same_box_is_one():
    g = _geometry([[0.4, 0.4], [0.4, 0.4]], [100, 100])
    S = temporal_similarity(g, BoxIndexing((2,), 1))
    assert S[0, 1] == 1.0


def test_temporal_scalar_example():
    g = _geometry([[0.5, 0.5], [0.5, 0.7]], [50, 50])
    S = temporal_similarity(g, BoxIndexing((2,), 1))
    assert S[0, 1] == pytest.approx(TEMPORAL_SHIFT_02, rel=1e-12)
    assert S[1, 0] == S[0, 1]


def test_temporal_area_term():
    g = _geometry([[0.5, 0.5], [0.5, 0.5]], [100, 25])
    S = temporal_similarity(g, BoxIndexing((2,), 1))
    assert S[0, 1] == pytest.approx(math.exp(-0.75), rel=1e-12)


def test_temporal_zero_beyond_adjacent_frames_and_across_videos():
    r = np.random.default_rng(4)
    ix = BoxIndexing((3, 2), 2)
    g = _geometry(r.uniform(size=(10, 2)), r.uniform(1, 10, size=10))
    S = temporal_similarity(g, ix).toarray()
    frame = np.arange(10) // 2
    video = np.array([0] * 6 + [1] * 4)
    for i in range(10):
        for j in range(10):
            adjacent = abs(frame[i] - frame[j]) == 1 and video[i] == video[j]
            assert (S[i, j] > 0) == adjacent
    assert np.array_equal(S, S.T)


def test_geometry_validation():
    with pytest.raises(ValueError):
        _geometry([[0.5, 0.5]], [0.0])
    with pytest.raises(ValueError):
        _geometry([[1.5, 0.5]], [1.0])


# -- saliency prior -----------------------------------------------------------------------------

def test_prior_examples():
    assert np.array_equal(saliency_prior_term(np.ones(3), 0.1), np.zeros(3))
    assert saliency_prior_term([0.5], 0.1)[0] == pytest.approx(PRIOR_HALF, rel=1e-12)
    assert saliency_prior_term([1e-30], 0.1, 1e-6)[0] == pytest.approx(PRIOR_CLAMPED, rel=1e-12)


def test_prior_without_floor_rejects_zero():
    with pytest.raises(ValueError):
        saliency_prior_term([0.0], 0.1, None)


# -- assembly and evaluation -------------------------------------------------------------------------

def _random_problem(seed=5, n_img=3, m=4, d=5):
    r = np.random.default_rng(seed)
    ix = BoxIndexing((n_img,), m)
    X = r.uniform(size=(ix.n_boxes, d))
    g = _geometry(r.uniform(size=(ix.n_boxes, 2)), r.uniform(1, 5, size=ix.n_boxes))
    sal = r.uniform(0.05, 1.0, size=ix.n_boxes)
    return ix, colocalization_problem(ix, X, g, sal)


def test_assemble_without_weights_is_laplacian():
    r = np.random.default_rng(6)
    S = r.uniform(size=(4, 4))
    S = S + S.T
    np.fill_diagonal(S, 0)
    L = normalized_laplacian(S)
    p = assemble(L, np.eye(4), np.eye(4), mu=0.0, mu_t=0.0)
    assert np.allclose(p.Q, L, atol=0)
    assert np.array_equal(p.gradient(np.zeros(4)), np.zeros(4))


def test_problem_is_symmetric_psd():
    _, p = _random_problem()
    assert np.abs(p.Q - p.Q.T).max() <= 1e-10
    assert np.linalg.eigvalsh(p.Q).min() >= -1e-8


def test_value_at_atom_matches_scalar_sum():
    ix, p = _random_problem()
    boxes = [1, 3, 0]
    sup = [j * 4 + b for j, b in enumerate(boxes)]
    ref = sum(p.Q[i, k] for i in sup for k in sup) + sum(p.c[i] for i in sup)
    z = np.zeros(ix.n_boxes)
    z[sup] = 1
    assert p.value(z) == pytest.approx(ref, rel=1e-12)


def test_value_grad_curv_at_zero():
    _, p = _random_problem()
    e = np.zeros(p.n)
    e[2] = 1.0
    f, g, q = p.value_grad_curv(np.zeros(p.n), e)
    assert f == 0.0 and np.array_equal(g, p.c) and q == p.Q[2, 2]


def test_gradient_matches_finite_differences():
    _, p = _random_problem()
    r = np.random.default_rng(8)
    h = 1e-5
    for _ in range(20):
        z = r.uniform(size=p.n)
        g = p.gradient(z)
        fd = np.array([(p.value(z + h * e) - p.value(z - h * e)) / (2 * h) for e in np.eye(p.n)])
        assert np.linalg.norm(g - fd) <= 1e-6 * max(1.0, np.linalg.norm(g))


def test_lipschitz_is_twice_top_eigenvalue():
    _, p = _random_problem()
    assert p.lipschitz() == pytest.approx(2 * np.linalg.eigvalsh(p.Q).max(), rel=1e-10)


def test_image_model_has_no_temporal_term():
    r = np.random.default_rng(9)
    ix = BoxIndexing.images(3, 2)
    X = r.uniform(size=(6, 3))
    p = colocalization_problem(ix, X, None, np.full(6, 0.5), ModelParams.image())
    assert p.mu == 0.4 and p.mu_t == 0.0


def test_problem_shape_validation():
    with pytest.raises(ValueError):
        QuadraticProblem(np.eye(2), np.zeros(3))
    with pytest.raises(ValueError):
        assemble(np.eye(2), np.eye(3))
