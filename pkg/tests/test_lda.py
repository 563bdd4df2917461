import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from msdiag import lda
from msdiag.errors import ModelError

MP = lda.RegularizerSpec(lda.MOORE_PENROSE)


def explicit_pooled(X, labels):
    """Reference pooled covariance by direct summation."""
    G = labels.max()
    S = np.zeros((X.shape[1], X.shape[1]))
    for g in range(1, G + 1):
        D = X[labels == g] - X[labels == g].mean(axis=0)
        S += D.T @ D
    return S / (X.shape[0] - G)


def test_hand_sscp_gives_identity():
    X = np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 1.0], [0.0, 3.0]])
    y = np.array([1, 1, 2, 2])
    clf = lda.fit(X, y, MP)
    assert np.allclose(clf.model.variances, [1.0, 1.0])
    x = np.array([1.0, 0.0])
    assert lda.regularized_distance(clf, x, 1) == pytest.approx(0.0, abs=1e-12)
    assert lda.regularized_distance(clf, x, 2) == pytest.approx(5.0, abs=1e-12)


def test_diagonal_covariance_distance():
    # within-group scatter diag(8, 2) over n - G = 2 -> S = diag(4, 1)
    X = np.array([[0.0, 0.0], [4.0, 0.0], [0.0, 1.0], [0.0, 3.0]])
    y = np.array([1, 1, 2, 2])
    clf = lda.fit(X, y, MP)
    assert sorted(clf.model.variances) == pytest.approx([1.0, 4.0])
    # offset (2, 1) from the group-1 mean (2, 0): 2^2/4 + 1^2/1
    assert lda.regularized_distance(clf, np.array([4.0, 1.0]), 1) == pytest.approx(2.0, abs=1e-12)


def test_mahalanobis_against_inverse(rng):
    for _ in range(20):
        X = rng.standard_normal((30, 5)) @ rng.standard_normal((5, 5))
        y = np.repeat([1, 2], 15)
        X[y == 1] += 1.0
        clf = lda.fit(X, y, MP)
        Sinv = np.linalg.inv(explicit_pooled(X, y))
        x = rng.standard_normal(5)
        for g in (1, 2):
            d = x - X[y == g].mean(axis=0)
            assert lda.regularized_distance(clf, x, g) == pytest.approx(d @ Sinv @ d, rel=1e-9)


@pytest.mark.parametrize("gamma", [1e-3, 0.2, 0.7, 1.0])
@pytest.mark.parametrize("shape", [(20, 6), (12, 30)])
def test_ridge_against_explicit_inverse(rng, gamma, shape):
    n, p = shape
    X = rng.standard_normal((n, p))
    y = np.repeat([1, 2], n // 2)
    S = explicit_pooled(X, y)
    Sg = (1 - gamma) * S + gamma * np.eye(p)
    clf = lda.fit(X, y, lda.RegularizerSpec(lda.RIDGE, gamma=gamma))
    x = rng.standard_normal(p)
    for g in (1, 2):
        d = x - X[y == g].mean(axis=0)
        assert lda.regularized_distance(clf, x, g) == pytest.approx(d @ np.linalg.solve(Sg, d), rel=1e-8)


def test_pca_k_against_truncated_inverse(rng):
    X = rng.standard_normal((14, 40))
    y = np.repeat([1, 2], 7)
    S = explicit_pooled(X, y)
    lam, Q = np.linalg.eigh(S)
    lam, Q = lam[::-1], Q[:, ::-1]
    x = rng.standard_normal(40)
    d = x - X[y == 1].mean(axis=0)
    for k in (1, 3, 12):
        clf = lda.fit(X, y, lda.RegularizerSpec(lda.PCA_K, k=k))
        z = Q[:, :k].T @ d
        assert lda.regularized_distance(clf, x, 1) == pytest.approx(np.sum(z**2 / lam[:k]), rel=1e-8)
        e = lda.fit(X, y, lda.RegularizerSpec(lda.PCA_K_EUCLID, k=k))
        assert lda.regularized_distance(e, x, 1) == pytest.approx(np.sum(z**2), rel=1e-8)


def test_rank_is_n_minus_groups_when_p_exceeds_n(rng):
    X = rng.standard_normal((10, 50))
    m = lda.pooled_eigen(X, np.repeat([1, 2], 5))
    assert m.rank == 8 and m.form == "dual"
    Q = m.loadings
    assert np.allclose(Q.T @ Q, np.eye(8), atol=1e-10)


def test_dual_and_primal_agree(rng):
    X = rng.standard_normal((12, 20))
    y = np.repeat([1, 2], 6)
    V = rng.standard_normal((3, 20))
    out = []
    for form in ("dual", "primal"):
        m = lda.pooled_eigen(X, y, form=form)
        out.append(lda.distance_profile(m, V, lda.MOORE_PENROSE))
    assert np.allclose(out[0], out[1], rtol=1e-8)


def test_mp_equals_pca_at_full_rank_exactly(rng):
    X = rng.standard_normal((16, 30))
    y = np.repeat([1, 2], 8)
    m = lda.pooled_eigen(X, y)
    V = rng.standard_normal((5, 30))
    a = lda.distance_profile(m, V, lda.MOORE_PENROSE)
    b = lda.distance_profile(m, V, lda.PCA_K, (m.rank,))
    assert np.array_equal(a, b)
    c = lda.distance_profile(m, V, lda.MP_EUCLID)
    d = lda.distance_profile(m, V, lda.PCA_K_EUCLID, (m.rank,))
    assert np.array_equal(c, d)


def test_distance_profile_clamps_k(rng):
    X = rng.standard_normal((8, 30))
    m = lda.pooled_eigen(X, np.repeat([1, 2], 4))
    V = rng.standard_normal((2, 30))
    a = lda.distance_profile(m, V, lda.PCA_K, (m.rank, m.rank + 5))
    assert np.array_equal(a[..., 0], a[..., 1])


def test_ridge_gamma_one_is_euclidean(rng):
    X = rng.standard_normal((10, 25))
    y = np.repeat([1, 2], 5)
    clf = lda.fit(X, y, lda.RegularizerSpec(lda.RIDGE, gamma=1.0))
    x = rng.standard_normal(25)
    d = x - X[y == 2].mean(axis=0)
    assert lda.regularized_distance(clf, x, 2) == pytest.approx(d @ d, rel=1e-10)


def test_posterior_properties():
    D = np.array([[0.0, 4.0], [3.0, 3.0]])
    P = lda.posterior_from_distances(D, np.array([0.5, 0.5]))
    assert np.allclose(P.sum(axis=1), 1.0)
    assert P[0, 0] == pytest.approx(1 / (1 + np.exp(-2)))
    assert np.allclose(P[1], [0.5, 0.5])
    P = lda.posterior_from_distances(np.array([[3.0, 3.0]]), np.array([0.8, 0.2]))
    assert np.allclose(P, [[0.8, 0.2]])
    P = lda.posterior_from_distances(np.array([[100.0, 0.0]]), np.array([1.0, 0.0]))
    assert np.array_equal(P, [[1.0, 0.0]])
    # huge distances do not underflow to nan
    P = lda.posterior_from_distances(np.array([[1e6, 1e6 + 2]]), np.array([0.5, 0.5]))
    assert np.all(np.isfinite(P))


def test_priors_validated_and_normalized(rng):
    X = rng.standard_normal((8, 3))
    y = np.repeat([1, 2], 4)
    clf = lda.fit(X, y, MP, priors=[2, 6])
    assert np.allclose(clf.priors, [0.25, 0.75])
    with pytest.raises(ModelError, match="priors"):
        lda.fit(X, y, MP, priors=[-1, 2])
    with pytest.raises(ModelError, match="priors"):
        lda.fit(X, y, MP, priors=[1, 1, 1])


def test_model_errors(rng):
    X = rng.standard_normal((6, 10))
    with pytest.raises(ModelError, match="empty"):
        lda.pooled_eigen(X, np.array([1] * 6), n_groups=2)
    with pytest.raises(ModelError, match="degrees of freedom"):
        lda.pooled_eigen(X[:2], np.array([1, 2]))
    with pytest.raises(ModelError, match="rank 0"):
        lda.pooled_eigen(np.ones((4, 3)), np.array([1, 1, 2, 2]))
    m = lda.pooled_eigen(X, np.repeat([1, 2], 3))
    with pytest.raises(ModelError, match="exceeds the covariance rank"):
        lda.Classifier(m, lda.RegularizerSpec(lda.PCA_K, k=5))
    with pytest.raises(ModelError):
        lda.RegularizerSpec(lda.RIDGE, gamma=0.0)
    with pytest.raises(ModelError):
        lda.RegularizerSpec("lasso")
    with pytest.raises(ModelError, match="length"):
        lda.Classifier(m, MP).distances(np.ones((1, 3)))


def test_discriminant_coefficients_full_rank(rng):
    X = rng.standard_normal((40, 4))
    y = np.repeat([1, 2], 20)
    clf = lda.fit(X, y, MP)
    diff = X[y == 1].mean(axis=0) - X[y == 2].mean(axis=0)
    assert np.allclose(lda.discriminant_coefficients(clf),
                       np.linalg.solve(explicit_pooled(X, y), diff), rtol=1e-9)


def test_discriminant_coefficients_ridge(rng):
    X = rng.standard_normal((10, 15))
    y = np.repeat([1, 2], 5)
    gamma = 0.3
    clf = lda.fit(X, y, lda.RegularizerSpec(lda.RIDGE, gamma=gamma))
    S = (1 - gamma) * explicit_pooled(X, y) + gamma * np.eye(15)
    diff = X[y == 1].mean(axis=0) - X[y == 2].mean(axis=0)
    assert np.allclose(lda.discriminant_coefficients(clf), np.linalg.solve(S, diff), rtol=1e-8)


def test_three_groups(rng):
    X = rng.standard_normal((15, 4)) + np.repeat(np.eye(3, 4) * 4, 5, axis=0)
    y = np.repeat([1, 2, 3], 5)
    clf = lda.fit(X, y, MP)
    assert clf.posterior(X).shape == (15, 3)
    assert np.mean(clf.predict(X) == y) > 0.8
    with pytest.raises(ModelError, match="two groups"):
        lda.discriminant_coefficients(clf)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), shift=st.floats(-50, 50),
       kind=st.sampled_from([lda.MOORE_PENROSE, lda.MP_EUCLID]))
def test_translation_invariance(seed, shift, kind):
    r = np.random.default_rng(seed)
    X = r.standard_normal((9, 12))
    y = np.array([1, 2] * 4 + [1])
    x = r.standard_normal(12)
    spec = lda.RegularizerSpec(kind)
    a = lda.fit(X, y, spec).distances(x[None, :])
    b = lda.fit(X + shift, y, spec).distances(x[None, :] + shift)
    assert np.allclose(a, b, rtol=1e-6, atol=1e-8)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_orthogonal_invariance_of_mp(seed):
    r = np.random.default_rng(seed)
    X = r.standard_normal((10, 6))
    y = np.repeat([1, 2], 5)
    R, _ = np.linalg.qr(r.standard_normal((6, 6)))
    x = r.standard_normal(6)
    a = lda.fit(X, y, MP).distances(x[None, :])
    b = lda.fit(X @ R, y, MP).distances((x @ R)[None, :])
    assert np.allclose(a, b, rtol=1e-7)
