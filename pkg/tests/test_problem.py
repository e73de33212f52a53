import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from spp.errors import InfeasibleError, InvalidArgumentError, UnsupportedError
from spp.problem import (SaddlePointProblem, StochasticOracle, ball, box, dense, diagonal,
                         estimate_operator_norm, eval_primal, eval_Q, free, gradient1d, identity,
                         linear_simple, problem_from_json, problem_to_json, quadratic_smooth, simplex,
                         zero_simple, zero_smooth)
from spp.rng import stream


def rps():
    K = np.array([[0.0, -1.0, 1.0], [1.0, 0.0, -1.0], [-1.0, 1.0, 0.0]])
    return SaddlePointProblem(zero_smooth(3), dense(K), zero_simple(3), simplex(3), simplex(3),
                              L_G=0.0, L_K=float(np.linalg.norm(K, 2)))


def test_set_descriptor_basics():
    B = box([0.0, -1.0], [1.0, 1.0])
    np.testing.assert_array_equal(B.midpoint(), [0.5, 0.0])
    assert B.contains([1.0, -1.0]) and not B.contains([1.1, 0.0])
    assert B.violation([1.5, 0.0]) == pytest.approx(0.5)
    assert simplex(4).violation([0.5, 0.5, 0.5, -0.5]) == pytest.approx(0.5)
    assert ball(np.zeros(2), 1.0).support([3.0, 4.0]) == pytest.approx(5.0)
    assert free(2).support([0.0, 0.0]) == 0.0 and free(2).support([1.0, 0.0]) == math.inf
    assert not free(2).bounded and simplex(2).bounded
    with pytest.raises(InvalidArgumentError):
        box([1.0], [0.0])
    with pytest.raises(InvalidArgumentError):
        ball([0.0], 0.0)
    with pytest.raises(InvalidArgumentError):
        B.violation([1.0])


@given(arrays(float, 5, elements=st.floats(-10, 10)))
def test_support_functions_against_vertices(a):
    # linear functions attain their max over a polytope at a vertex
    assert simplex(5).support(a) == pytest.approx(max(np.eye(5) @ a))
    lo, hi = -np.ones(5), 2 * np.ones(5)
    verts = np.array(np.meshgrid(*[[-1.0, 2.0]] * 5)).reshape(5, -1).T
    assert box(lo, hi).support(a) == pytest.approx(np.max(verts @ a))


def test_couplings_adjoint_consistency(rng):
    ops = [dense(rng.standard_normal((3, 4))), diagonal(rng.standard_normal(4)), identity(4), gradient1d(4)]
    for op in ops:
        m, n = op.shape
        x, y = rng.standard_normal(n), rng.standard_normal(m)
        assert op.apply(x) @ y == pytest.approx(x @ op.adjoint(y))
        np.testing.assert_allclose(op.to_dense() @ x, op.apply(x))


def test_eval_Q_examples():
    P = rps()
    e = np.eye(3)
    # Q(z, z) = 0 and Q is antisymmetric for bilinear problems
    z = (np.ones(3) / 3, np.ones(3) / 3)
    assert eval_Q(P, z, z) == 0.0
    a, b = (e[0], e[1]), (e[2], e[0])
    assert eval_Q(P, a, b) == pytest.approx(-eval_Q(P, b, a))
    with pytest.raises(InfeasibleError) as ei:
        eval_Q(P, (np.array([1.0, 1.0, 0.0]), e[0]), a)
    assert ei.value.set_name == "X"


def test_eval_primal_matrix_game():
    P = rps()
    # the uniform strategy guarantees value 0; a pure strategy loses 1
    assert eval_primal(P, np.ones(3) / 3) == pytest.approx(0.0, abs=1e-15)
    assert eval_primal(P, np.eye(3)[0]) == pytest.approx(1.0)
    U = SaddlePointProblem(zero_smooth(1), dense([[1.0]]), zero_simple(1), box([0.0], [1.0]), free(1), 0.0, 1.0)
    with pytest.raises(UnsupportedError):
        eval_primal(U, np.array([1.0]))


def test_operator_norm(rng):
    K = rng.standard_normal((7, 5))
    est, conv = estimate_operator_norm(K, iterations=500)
    assert conv and abs(est - np.linalg.norm(K, 2)) <= 1e-6
    est, _ = estimate_operator_norm(gradient1d(50), iterations=3)
    assert est <= np.linalg.norm(gradient1d(50).to_dense(), 2) + 1e-12
    assert estimate_operator_norm(np.zeros((2, 2)))[0] == 0.0
    with pytest.raises(InvalidArgumentError):
        estimate_operator_norm(K, iterations=0)


def test_json_round_trip_exact(rng):
    H = rng.standard_normal((3, 3))
    P = SaddlePointProblem(quadratic_smooth(H @ H.T, rng.standard_normal(3)), dense(rng.standard_normal((2, 3))),
                           linear_simple(rng.standard_normal(2)), ball(np.zeros(3), 1.5), box(-np.ones(2), np.ones(2)),
                           L_G=1.0, L_K=2.0, known_saddle=(np.zeros(3), np.zeros(2)), name="q")
    text = problem_to_json(P, noise={"model": "gaussian"}, seed=9)
    Q, noise, seed = problem_from_json(text)
    assert problem_to_json(Q, noise, seed) == text
    np.testing.assert_array_equal(Q.smooth.hessian, P.smooth.hessian)
    assert noise == {"model": "gaussian"} and seed == 9


def test_problem_dimension_checks():
    with pytest.raises(InvalidArgumentError):
        SaddlePointProblem(zero_smooth(2), dense(np.ones((3, 3))), zero_simple(3), simplex(2), simplex(3), 0.0, 1.0)
    with pytest.raises(InvalidArgumentError):
        quadratic_smooth([[1.0, 2.0], [0.0, 1.0]])


def test_rng_streams_reproducible_and_distinct():
    a = stream(5, 1, 2).standard_normal(4)
    np.testing.assert_array_equal(a, stream(5, 1, 2).standard_normal(4))
    assert not np.array_equal(a, stream(5, 1, 3).standard_normal(4))
    assert not np.array_equal(a, stream(5, 2, 2).standard_normal(4))


def test_oracle_noiseless_is_exact(rng):
    P = rps()
    o = StochasticOracle(P, "none")
    x, y = rng.dirichlet(np.ones(3)), rng.dirichlet(np.ones(3))
    s = o.sample(x, y)
    np.testing.assert_array_equal(s.K_x, P.K(x))
    np.testing.assert_array_equal(s.K_y, P.KT(y))
    assert s.noise is None


def test_oracle_sign_convention(rng):
    P = rps()
    o = StochasticOracle(P, "gaussian", 0.3, 0.4, 0.5, seed=3, disclose_noise=True)
    x, y = np.ones(3) / 3, np.ones(3) / 3
    s = o.sample(x, y)
    n = s.noise
    np.testing.assert_allclose(s.grad_G - P.grad_G(x), n.delta_xG)
    np.testing.assert_allclose(s.K_y - P.KT(y), n.delta_xK)
    np.testing.assert_allclose(-(s.K_x - P.K(x)), n.delta_y)
    np.testing.assert_allclose(n.delta_x, n.delta_xG + n.delta_xK)


@pytest.mark.parametrize("model", ["gaussian", "bounded_uniform"])
def test_oracle_unbiased_and_second_moment(model):
    # E[Delta] = 0 and E||Delta||^2 <= sigma^2 for every oracle component
    P = SaddlePointProblem(zero_smooth(8), dense(np.eye(6, 8)), zero_simple(6), free(8), free(6), 0.0, 1.0)
    sg, sy, sk = 0.5, 0.7, 0.3
    o = StochasticOracle(P, model, sg, sy, sk, seed=11)
    R = 20000
    draws = [o.draw() for _ in range(R)]
    for name, sig, dim in (("delta_xG", sg, 8), ("delta_y", sy, 6), ("delta_xK", sk, 8)):
        D = np.array([getattr(d, name) for d in draws])
        sq = np.sum(D ** 2, axis=1)
        # mean within 5 standard errors of zero per coordinate
        assert np.all(np.abs(D.mean(0)) <= 5 * sig / math.sqrt(dim * R))
        if model == "bounded_uniform":
            np.testing.assert_allclose(sq, sig ** 2, rtol=1e-12)
        else:
            # chi-square with dim dof scaled by sig^2/dim: SE of mean is sig^2 sqrt(2/dim)/sqrt(R)
            assert sq.mean() <= sig ** 2 + 4 * sig ** 2 * math.sqrt(2 / dim / R)
            assert sq.mean() == pytest.approx(sig ** 2, rel=0.05)


def test_oracle_light_tail_bounded_uniform():
    # E exp(||Delta||^2 / sigma^2) <= e holds with equality for the sphere model
    P = SaddlePointProblem(zero_smooth(3), dense(np.eye(3)), zero_simple(3), free(3), free(3), 0.0, 1.0)
    o = StochasticOracle(P, "bounded_uniform", 0.2, 0.2, 0.2, seed=1)
    d = o.draw()
    assert math.exp(np.sum(d.delta_y ** 2) / 0.04) == pytest.approx(math.e)


def test_oracle_streams_by_seed():
    P = rps()
    a = StochasticOracle(P, "gaussian", 1, 1, 1, seed=4).draw()
    b = StochasticOracle(P, "gaussian", 1, 1, 1, seed=4).draw()
    c = StochasticOracle(P, "gaussian", 1, 1, 1, seed=5).draw()
    np.testing.assert_array_equal(a.delta_y, b.delta_y)
    assert not np.array_equal(a.delta_y, c.delta_y)


def test_oracle_errors():
    with pytest.raises(InvalidArgumentError):
        StochasticOracle(rps(), "cauchy")
    with pytest.raises(InvalidArgumentError):
        StochasticOracle(rps(), "gaussian", sigma_xG=-1.0)
