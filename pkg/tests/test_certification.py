import copy
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize

from spp import certification as cert
from spp.errors import CertificateUnavailableError, InsufficientCaptureError, UnsupportedError
from spp.geometry import ENTROPY
from spp.harness import build_schedule, ExperimentConfig, generate_problem
from spp.problem import (SaddlePointProblem, StochasticOracle, box, dense, eval_Q, quadratic_smooth,
                         zero_simple)
from spp.rng import stream
from spp.schedules import custom_schedule, make_schedule
from spp.solvers import CaptureOptions, apd_step, initial_state, run


def vertex_gap(K, x, y):
    """max over pure strategies, by enumeration of the simplex vertices."""
    m, n = K.shape
    best_y = max(float((K @ x) @ e) for e in np.eye(m))
    best_x = min(float(e @ (K.T @ y)) for e in np.eye(n))
    return best_y - best_x


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 6), st.integers(1, 6))
def test_exact_gap_matrix_game_matches_vertices(seed, m, n):
    P = generate_problem("matrix_game", {"m": m, "n": n}, seed)
    r = np.random.default_rng(seed)
    x, y = r.dirichlet(np.ones(n)), r.dirichlet(np.ones(m))
    g = cert.exact_gap(P, (x, y))
    assert g == pytest.approx(vertex_gap(P.coupling.matrix, x, y), abs=1e-12)
    assert g >= -1e-12


def test_exact_gap_zero_at_saddle():
    for name, params in [("matrix_game", {"m": 6, "n": 4}), ("quad_bilinear", {"n": 5, "m": 4, "L_G": 3.0})]:
        P = generate_problem(name, params, 5)
        assert abs(cert.exact_gap(P, P.known_saddle)) <= 1e-9


@pytest.mark.parametrize("seed", range(4))
def test_exact_gap_ball_against_numerical_max(seed):
    P = generate_problem("quad_bilinear", {"n": 4, "m": 3, "L_G": 5.0, "L_K": 2.0}, seed)
    r = np.random.default_rng(seed)
    z = (r.standard_normal(4) * 0.3, r.standard_normal(3) * 0.3)
    g = cert.exact_gap(P, z)
    cons = [{"type": "ineq", "fun": lambda w: 1 - w[:4] @ w[:4]},
            {"type": "ineq", "fun": lambda w: 1 - w[4:] @ w[4:]}]
    best = -np.inf
    for k in range(8):
        w0 = r.standard_normal(7) * 0.3
        res = minimize(lambda w: -eval_Q(P, z, (w[:4], w[4:]), check=False), w0,
                       constraints=cons, method="SLSQP", options={"ftol": 1e-14, "maxiter": 500})
        if np.linalg.norm(res.x[:4]) <= 1 + 1e-7 and np.linalg.norm(res.x[4:]) <= 1 + 1e-7:
            best = max(best, -res.fun)
    assert g >= best - 1e-7 and g == pytest.approx(best, abs=1e-6)


def test_exact_gap_box_diagonal():
    H = np.diag([2.0, 0.0, 1.0])
    P = SaddlePointProblem(quadratic_smooth(H, [0.5, -1.0, 0.0]), dense(np.eye(3)), zero_simple(3),
                           box(-np.ones(3), np.ones(3)), box(-np.ones(3), np.ones(3)), 2.0, 1.0)
    z = (np.array([0.2, -0.1, 0.4]), np.array([0.3, 0.3, -0.6]))
    grid = np.linspace(-1, 1, 41)
    # Q separates across coordinates, so the max is a sum of 1-D grid maxima
    xt, yt = z
    best = P.G(xt) + P.J(yt) + np.sum(np.abs(P.K(xt)))
    for i in range(3):
        best -= min(0.5 * H[i, i] * u * u + P.smooth.linear[i] * u + yt[i] * u for u in grid)
    assert cert.exact_gap(P, z) == pytest.approx(best, abs=1e-12)


def test_exact_gap_unsupported():
    P = generate_problem("unbounded_quad", {"n": 3, "m": 3}, 0)
    with pytest.raises(UnsupportedError):
        cert.exact_gap(P, P.known_saddle)


def test_certificate_hand_values(toy1d):
    st_ = apd_step(initial_state(toy1d, [1.0], [0.0]), toy1d,
                   make_schedule("bounded_det", {"L_G": 1, "L_K": 1, "D_X": 1, "D_Y": 1}))
    s = custom_schedule([1.0] * 10, [0.0] + [1.0] * 9, [1 / 11] * 10, [0.1] * 10, N=10)
    c = cert.perturbation_certificate_det(st_, s, toy1d)
    np.testing.assert_allclose(c.v, [22 / 3, -28 / 3], rtol=1e-14)
    assert c.delta == pytest.approx(67 / 9, rel=1e-14)


def _unbounded(seed=1, n=6, m=5):
    P = generate_problem("unbounded_quad", {"n": n, "m": m, "L_G": 4.0, "L_K": 1.5}, seed)
    return P


@pytest.mark.parametrize("N", [20, 60])
def test_det_certificate_is_sound(N):
    P = _unbounded()
    s = make_schedule("unbounded_det", {"L_G": P.L_G, "L_K": P.L_K}, N=N)
    tr = run("apd", P, s, N, capture=CaptureOptions(certificate=True))
    for rec in tr.records:
        assert rec["delta"] >= 0
    stt = tr.final_state
    c = cert.perturbation_certificate_det(stt, s, P)
    val, coef = cert.perturbed_gap_free(P, stt.z_ag, c.v)
    # the y-coefficient of the perturbed gap vanishes, so it is finite and below delta
    assert coef <= 1e-10 and val <= c.delta + 1e-10


def test_stoch_certificate_is_sound_pointwise():
    P = _unbounded()
    N = 80
    s = make_schedule("unbounded_stoch", {"L_G": P.L_G, "L_K": P.L_K, "sigma_x": 0.3, "sigma_y": 0.3,
                                          "D_tilde": 1.0}, N=N)
    for seed in range(5):
        o = StochasticOracle(P, "gaussian", 0.2, 0.3, 0.2, seed=seed, disclose_noise=True)
        tr = run("stochastic_apd", P, s, N, oracle=o)
        stt = tr.final_state
        c = cert.perturbation_certificate_stoch(stt, s, P)
        val, coef = cert.perturbed_gap_free(P, stt.z_ag, c.v)
        assert coef <= 1e-10 and val <= c.delta + 1e-10


def test_stoch_certificate_needs_disclosed_noise():
    P = _unbounded()
    s = make_schedule("unbounded_stoch", {"L_G": P.L_G, "L_K": P.L_K, "sigma_x": 0.3, "sigma_y": 0.3}, N=10)
    tr = run("stochastic_apd", P, s, 10, oracle=StochasticOracle(P, "gaussian", 0.1, 0.1, 0.1))
    with pytest.raises(CertificateUnavailableError):
        cert.perturbation_certificate_stoch(tr.final_state, s, P)


def test_certificate_needs_euclidean():
    P = generate_problem("matrix_game", {"m": 3, "n": 3}, 0)
    s = make_schedule("bounded_det", {"L_G": 0, "L_K": P.L_K, "D_X": 1, "D_Y": 1})
    stt = apd_step(initial_state(P, geometry=ENTROPY), P, s)
    with pytest.raises(UnsupportedError):
        cert.perturbation_certificate_det(stt, s, P)


def test_probe_gap_is_below_exact_free_gap():
    P = _unbounded()
    s = make_schedule("unbounded_det", {"L_G": P.L_G, "L_K": P.L_K}, N=30)
    stt = run("apd", P, s, 30).final_state
    c = cert.perturbation_certificate_det(stt, s, P)
    probes = cert.sample_probes(P, P.known_saddle, 2.0, 50, stream(3))
    exact, _ = cert.perturbed_gap_free(P, stt.z_ag, c.v)
    assert cert.perturbed_gap_on_probes(P, stt.z_ag, c.v, probes) <= exact + 1e-10


def test_bound_formulas():
    b = cert.theoretical_bound("bounded_det", {"L_G": 1e4, "L_K": 1, "D_X": 1, "D_Y": 1}, 100)
    assert b.value == pytest.approx(2e4 / 9900 + 0.02)
    u = cert.theoretical_bound("unbounded_det", {"L_G": 2, "L_K": 1, "D_hat": 3}, 10)
    assert u.value == pytest.approx(10 * 2 * 9 / 100 + 10 * 9 / 10)
    assert u.v_norm == pytest.approx(15 * 2 * 3 / 100 + 16 * 3 / 10)
    assert cert.high_prob_ceiling(4) == pytest.approx(3 * math.exp(-16 / 3) + 3 * math.exp(-4))
    assert cert.high_prob_ceiling(4) == pytest.approx(0.0695, abs=1e-4)
    with pytest.raises(ValueError):
        cert.theoretical_bound("bounded_det", {"D_X": 1, "D_Y": 1}, 1)


@pytest.mark.parametrize("N", [15, 16, 50, 200, 1000])
def test_closed_form_eps_dominates_schedule_bound(N):
    # the closed-form rates follow from the schedule-level bounds for N >= 15
    for L_G, L_K in [(10.0, 1.0), (0.0, 1.0), (1.0, 10.0)]:
        s = make_schedule("unbounded_det", {"L_G": L_G, "L_K": L_K}, N=N)
        D = 1.3
        closed = cert.theoretical_bound("unbounded_det", {"L_G": L_G, "L_K": L_K, "D_hat": D}, N)
        # eta_1 <= tau_1 gives D <= D_hat, so using D_hat for D only loosens the left side
        assert cert.eps_det(s, N - 1, D) <= closed.value * (1 + 1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 1000))
def test_bounded_stoch_bound_constants(seed):
    # C_0 and C_1 of the closed form match the schedule-level Q_0 / Q_1 only up to their stated constants
    r = np.random.default_rng(seed)
    L_G, L_K, sx, sy = r.uniform(0, 5), r.uniform(0.1, 5), r.uniform(0, 2), r.uniform(0, 2)
    N = int(r.integers(3, 300))
    s = make_schedule("bounded_stoch", {"L_G": L_G, "L_K": L_K, "D_X": 1, "D_Y": 1,
                                        "sigma_x": sx, "sigma_y": sy}, N=N)
    b = cert.theoretical_bound("bounded_stoch", dict(s.constants), N)
    # omega^2 = D^2/2 with alpha = 1
    q0 = cert.Q0(s, N - 1, 0.5, 0.5, sx, sy)
    assert q0 <= b.value * (1 + 1e-9)


def _audit_run(name, params, seed=0, N=101, corrupt=False):
    P = generate_problem(name, params, seed)
    cfg = ExperimentConfig(problem={"generator": name, "params": params, "seed": seed}, N=N)
    s = build_schedule(cfg, P)
    tr = run("apd", P, s, N, capture=CaptureOptions(iterates=True))
    probes = cert.sample_probes(P, (P.set_x.midpoint(), P.set_y.midpoint()), 1.0, 20, stream(seed, 0, 5))
    if corrupt:
        tr = corrupt_x5(tr, P)
    return cert.recursion_audit(tr, P, s, probes)


def corrupt_x5(tr, P):
    """Move x_5 to a distant feasible point, leaving everything else untouched."""
    its = list(tr.iterates)
    x5, y5 = its[4]
    if P.set_x.variant == "simplex":
        i, j = np.argmin(x5), np.argmax(x5)
        x5c = x5.copy()
        x5c[i] += x5[j]
        x5c[j] = 0.0
    else:
        x5c = -0.9 * P.set_x.radius * x5 / np.linalg.norm(x5)
    assert P.set_x.contains(x5c)
    its[4] = (x5c, y5)
    out = copy.copy(tr)
    out.iterates = its
    return out


@pytest.mark.parametrize("name,params", [("matrix_game", {"m": 3, "n": 3}),
                                         ("quad_bilinear", {"n": 3, "m": 3, "L_G": 1.0, "L_K": 1.0})])
@pytest.mark.parametrize("seed", range(3))
def test_recursion_audit(name, params, seed):
    assert _audit_run(name, params, seed).min_residual >= -1e-8
    bad = _audit_run(name, params, seed, corrupt=True)
    assert not bad.passed and bad.worst[0] in (4, 5)


def test_recursion_audit_stochastic():
    P = generate_problem("quad_bilinear", {"n": 3, "m": 3, "L_G": 2.0, "L_K": 1.0}, 2)
    s = make_schedule("bounded_stoch", {"L_G": P.L_G, "L_K": 1.0, "D_X": 2, "D_Y": 2,
                                        "sigma_x": 0.5, "sigma_y": 0.5}, N=60)
    o = StochasticOracle(P, "bounded_uniform", 0.3, 0.5, 0.3, seed=4, disclose_noise=True)
    tr = run("stochastic_apd", P, s, 60, oracle=o, capture=CaptureOptions(iterates=True))
    probes = cert.sample_probes(P, (np.zeros(3), np.zeros(3)), 1.0, 20, stream(1))
    assert cert.recursion_audit(tr, P, s, probes).passed


def test_recursion_audit_needs_iterates():
    P = generate_problem("matrix_game", {"m": 3, "n": 3}, 0)
    s = make_schedule("bounded_det", {"L_G": 0, "L_K": P.L_K, "D_X": 1, "D_Y": 1})
    tr = run("apd", P, s, 10)
    with pytest.raises(InsufficientCaptureError):
        cert.recursion_audit(tr, P, s, [P.known_saddle])


def test_distance_check_on_unbounded_run():
    P = _unbounded()
    s = make_schedule("unbounded_det", {"L_G": P.L_G, "L_K": P.L_K}, N=80)
    tr = run("apd", P, s, 80)
    ok, worst = cert.distance_check(tr, P, s)
    assert ok and worst >= 0
