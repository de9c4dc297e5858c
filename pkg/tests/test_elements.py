import numpy as np

from src.services.elements import P2, to_barycentric


def test_kronecker_property():
    assert np.allclose(P2.values(P2.nodes), np.eye(6), atol=1e-15)


def test_partition_of_unity(rng):
    bary = to_barycentric(rng.dirichlet(np.ones(3), size=50)[:, 1:])
    assert np.allclose(P2.values(bary).sum(axis=1), 1.0, atol=1e-14)
    assert np.allclose(P2.gradients(bary).sum(axis=1), 0.0, atol=1e-13)


def test_gradients_match_finite_differences(rng):
    points = rng.dirichlet(np.ones(3), size=10)[:, 1:]
    delta = 1e-6
    for p in points:
        grads = P2.gradients(to_barycentric(p)[None, :])[0]
        for k in range(2):
            step = np.zeros(2)
            step[k] = delta
            plus = P2.values(to_barycentric(p + step)[None, :])[0]
            minus = P2.values(to_barycentric(p - step)[None, :])[0]
            assert np.allclose((plus - minus) / (2 * delta), grads[:, k], atol=1e-8)


def test_sub_triangles_cover_every_node():
    assert sorted(np.unique(P2.sub_triangles)) == list(range(6))
