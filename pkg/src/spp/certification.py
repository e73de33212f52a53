"""Gap certificates, theoretical bounds and the recursion audit.

Bounded problems are certified by the exact gap

    g(z~) = max_{z in Z} Q(z~, z),

computed in closed form. Unbounded problems are certified by a perturbation
pair (v, delta) with

    max_{z in Z} Q(z~, z) - <v, z~ - z>  <=  delta.

The dual component of v carries ``-K(x_{t+1} - x_t) / beta_t``: the coupling
term <K(x_{t+1} - x_t), y - y_{t+1}> splits into a part against y - y^ag,
which moves into <v, z^ag - z> with a negative sign, and a remainder that
the step-size margin absorbs.
"""
from dataclasses import dataclass
import math
from collections import namedtuple

import numpy as np
from scipy.optimize import brentq

from .errors import (CertificateUnavailableError, InsufficientCaptureError,
                     InvalidArgumentError, UnsupportedError)
from .geometry import EUCLIDEAN
from .problem import _vec

GAP_FLOOR = -1e-9


# ---------------------------------------------------------------------------
# exact gap

def _min_over_set(problem, a):
    """min_{x in X} G(x) + <a, x> in closed form."""
    sm, sx = problem.smooth, problem.set_x
    g = a if sm.linear is None else a + sm.linear
    if sm.hessian is None:
        val = -sx.support(-g)
        if not math.isfinite(val):
            raise UnsupportedError("X is unbounded in a descent direction; use a perturbation certificate")
        return val
    H = sm.hessian
    if sx.variant == "euclidean_ball":
        return _trust_region_min(H, g, sx.center, sx.radius)
    if sx.variant == "box" and np.count_nonzero(H - np.diag(np.diag(H))) == 0:
        h = np.diag(H)
        x = np.where(g > 0, sx.lower, sx.upper)
        pos = h > 0
        x[pos] = np.clip(-g[pos] / h[pos], sx.lower[pos], sx.upper[pos])
        return float(0.5 * np.sum(h * x * x) + g @ x)
    raise UnsupportedError(
        "exact gap with quadratic G is available on Euclidean balls and on boxes with a "
        "diagonal Hessian")


def _trust_region_min(H, g, center, radius):
    """min 0.5 x^T H x + <g, x> over ||x - center|| <= radius, H positive semidefinite."""
    gc = H @ center + g
    const = 0.5 * float(center @ (H @ center)) + float(g @ center)
    lam, Q = np.linalg.eigh(H)
    lam = np.maximum(lam, 0.0)
    c = Q.T @ gc
    scale = max(1.0, float(np.max(lam)))
    pos = lam > 1e-14 * scale
    null_mass = float(np.sum(c[~pos] ** 2))

    def value(s):
        return const + 0.5 * float(np.sum(lam * s * s)) + float(c @ s)

    if null_mass <= (1e-14 * max(1.0, float(np.linalg.norm(c)))) ** 2:
        s = np.zeros_like(c)
        s[pos] = -c[pos] / lam[pos]
        if np.linalg.norm(s) <= radius:
            return value(s)

    def phi(mu):
        return math.sqrt(float(np.sum((c / (lam + mu)) ** 2))) - radius

    # phi decreases in mu and phi(||c|| / R) <= 0; halve until the sign flips
    hi = float(np.linalg.norm(c)) / radius
    lo = hi
    while lo > 1e-300 and phi(lo) <= 0:
        hi, lo = lo, 0.5 * lo
    mu = brentq(phi, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps) if phi(lo) > 0 else hi
    s = -c / (lam + mu)
    return value(s)


def exact_gap(problem, z_tilde):
    """g(z~) = G(x~) + J(y~) + max_Y [<K x~, y> - J(y)] - min_X [G(x) + <K^T y~, x>]."""
    xt, yt = z_tilde
    xt = _vec(xt, problem.dim_x, "x~")
    yt = _vec(yt, problem.dim_y, "y~")
    if not (problem.set_x.bounded and problem.set_y.bounded):
        raise UnsupportedError("exact gap needs bounded X and Y; use a perturbation certificate")
    a = problem.K(xt)
    if problem.simple.linear is not None:
        a = a - problem.simple.linear
    y_part = problem.set_y.support(a)
    x_part = _min_over_set(problem, problem.KT(yt))
    return problem.G(xt) + problem.J(yt) + y_part - x_part


# ---------------------------------------------------------------------------
# perturbation certificates

@dataclass
class Certificate:
    kind: str
    t: int
    gap: float = None
    v: np.ndarray = None
    delta: float = None
    bound: float = None

    @property
    def v_norm(self):
        return None if self.v is None else float(np.linalg.norm(self.v))

    def to_dict(self):
        return {"kind": self.kind, "t": self.t, "gap": self.gap, "delta": self.delta,
                "v_norm": self.v_norm, "bound": self.bound,
                "v": None if self.v is None else self.v.tolist()}


def _require_euclidean(state):
    if any(g.variant != "euclidean" for g in state.geometry):
        raise UnsupportedError("perturbation certificates need Euclidean geometry on both blocks")
    if state.t < 2:
        raise InvalidArgumentError("a certificate needs at least one completed step")


def perturbation_certificate_det(state, schedule, problem):
    """(v, delta) for z^ag_{t+1} after the deterministic step t = state.t - 1."""
    _require_euclidean(state)
    t = state.t - 1
    b, eta, tau = schedule.beta(t), schedule.eta(t), schedule.tau(t)
    vx = (state.x1 - state.x) / (b * eta)
    vy = (state.y1 - state.y) / (b * tau) - problem.K(state.x - state.x_prev) / b
    dx = state.x_ag - state.x1
    dy = state.y_ag - state.y1
    delta = float(dx @ dx) / (2 * b * eta) + float(dy @ dy) / (2 * b * tau)
    return Certificate("perturbed", state.t, v=np.concatenate([vx, vy]), delta=delta)


def perturbation_certificate_stoch(state, schedule, problem):
    """(v, delta) for the stochastic method; needs the disclosed-noise sequence z^v and U_t."""
    _require_euclidean(state)
    if state.u_accum is None or state.xv is None:
        raise CertificateUnavailableError(
            "stochastic certificate needs disclosed oracle noise (z^v and U_t are not tracked)")
    if state.pq != (schedule.p, schedule.q):
        raise InvalidArgumentError(
            f"U_t was accumulated with (p, q) = {state.pq}, schedule uses {(schedule.p, schedule.q)}")
    t = state.t - 1
    b, eta, tau = schedule.beta(t), schedule.eta(t), schedule.tau(t)
    gam = schedule.gamma(t)
    vx = (2 * state.x1 - state.x - state.xv) / (b * eta)
    vy = (2 * state.y1 - state.y - state.yv) / (b * tau) - problem.K(state.x - state.x_prev) / b
    dx = state.x_ag - state.x1
    dy = state.y_ag - state.y1
    delta = float(dx @ dx) / (b * eta) + float(dy @ dy) / (b * tau) + state.u_accum / (b * gam)
    return Certificate("perturbed", state.t, v=np.concatenate([vx, vy]), delta=delta)


def perturbed_gap_on_probes(problem, z_tilde, v, probes):
    """max over the probe points of Q(z~, z) - <v, z~ - z> (a lower estimate of the perturbed gap)."""
    xt, yt = z_tilde
    zt = np.concatenate([xt, yt])
    best = -math.inf
    for x, y in probes:
        val = _q(problem, xt, yt, x, y) - float(v @ (zt - np.concatenate([x, y])))
        best = max(best, val)
    return best


def perturbed_gap_free(problem, z_tilde, v, rtol=1e-9):
    """Exact max_z Q(z~, z) - <v, z~ - z> when X and Y are free, G quadratic
    with positive definite Hessian and J linear.

    The objective is linear in y, so the value is finite only when the
    y-coefficient K x~ - b + v_y vanishes; a coefficient larger than ``rtol``
    relative to its terms yields ``inf``. Returns (value, coefficient norm).
    """
    if problem.set_x.bounded or problem.set_y.bounded or problem.smooth.hessian is None:
        raise UnsupportedError("closed form needs free X, Y and quadratic G")
    xt, yt = (np.asarray(a, dtype=float) for a in z_tilde)
    n = problem.dim_x
    vx, vy = v[:n], v[n:]
    b = problem.simple.linear if problem.simple.linear is not None else np.zeros(problem.dim_y)
    kx = problem.K(xt)
    coef = kx - b + vy
    cn = float(np.linalg.norm(coef))
    scale = max(1.0, float(np.linalg.norm(kx)), float(np.linalg.norm(b)), float(np.linalg.norm(vy)))
    if cn > rtol * scale:
        return math.inf, cn
    # x-part: sup_x -G(x) - <K x, y~> + <v_x, x> = 0.5 g^T H^{-1} g
    H = problem.smooth.hessian
    g = problem.KT(yt) - vx
    if problem.smooth.linear is not None:
        g = g + problem.smooth.linear
    sup_x = 0.5 * float(g @ np.linalg.solve(H, g))
    const = problem.G(xt) + problem.J(yt) - float(vx @ xt) - float(vy @ yt)
    return const + sup_x, cn


def _q(problem, xt, yt, x, y):
    return (problem.G(xt) + float(problem.K(xt) @ y) - problem.J(y)
            - problem.G(x) - float(problem.K(x) @ yt) + problem.J(yt))


def sample_probes(problem, center, radius, count, rng):
    """Points drawn uniformly from a ball around ``center`` (a pair), projected onto X x Y."""
    from .geometry import project
    xc, yc = center
    n, m = len(xc), len(yc)
    out = []
    for _ in range(count):
        d = rng.standard_normal(n + m)
        d *= radius * rng.random() ** (1.0 / (n + m)) / np.linalg.norm(d)
        out.append((project(problem.set_x, xc + d[:n]), project(problem.set_y, yc + d[n:])))
    return out


# ---------------------------------------------------------------------------
# theoretical bounds

Bound = namedtuple("Bound", ["value", "v_norm", "scale"], defaults=(None, None))


def high_prob_ceiling(lam):
    """3 exp(-lambda^2 / 3) + 3 exp(-lambda)."""
    return 3.0 * math.exp(-lam * lam / 3.0) + 3.0 * math.exp(-lam)


def theoretical_bound(variant, constants, t):
    """Closed-form rate bound at t (the iterate index, N for horizon variants).

    bounded_det: 2 L_G D_X^2 / (t(t-1)) + 2 L_K D_X D_Y / t             (t >= 2)
    unbounded_det: eps <= 10 L_G Dh^2/N^2 + 10 L_K Dh^2/N,
                   ||v|| <= 15 L_G Dh/N^2 + 16 L_K Dh/N
    bounded_stoch: C_0(N) (``value``) and C_1(N) (``scale``)
    unbounded_stoch: eps and E||v|| bounds with D, D~ and sigma.
    """
    c = constants
    if t < 2:
        raise InvalidArgumentError("bounds are stated for t >= 2")
    L_G, L_K = float(c.get("L_G", 0.0)), float(c.get("L_K", 0.0))
    if variant == "bounded_det":
        DX, DY = c["D_X"], c["D_Y"]
        return Bound(2 * L_G * DX ** 2 / (t * (t - 1)) + 2 * L_K * DX * DY / t)
    N = t
    if variant == "unbounded_det":
        Dh = c["D_hat"]
        return Bound(10 * L_G * Dh ** 2 / N ** 2 + 10 * L_K * Dh ** 2 / N,
                     v_norm=15 * L_G * Dh / N ** 2 + 16 * L_K * Dh / N)
    if variant == "bounded_stoch":
        DX, DY = c["D_X"], c["D_Y"]
        sx, sy = c.get("sigma_x", 0.0), c.get("sigma_y", 0.0)
        noise = (sx * DX + sy * DY) / math.sqrt(N - 1)
        C0 = 6 * L_G * DX ** 2 / (N * (N - 1)) + 6 * L_K * DX * DY / N + 4 * noise
        return Bound(C0, scale=3 * noise)
    if variant == "unbounded_stoch":
        D, Dt, s = c["D"], c["D_tilde"], c["sigma"]
        r = math.sqrt(N - 1)
        eps = (36 * L_G * D ** 2 / (N * (N - 1)) + 36 * L_K * D ** 2 / N
               + s * (18 * D * D / Dt + 3 * Dt) / r)
        v = (50 * L_G * D / (N * (N - 1)) + L_K * (55 * D + 3 * Dt) / N
             + s * (6 + 25 * D / Dt) / r)
        return Bound(eps, v_norm=v)
    raise InvalidArgumentError(f"no closed-form bound for variant {variant!r}")


def D_of(x_hat, y_hat, x1, y1, eta1, tau1):
    """D = sqrt(||x^ - x_1||^2 + (eta_1/tau_1) ||y^ - y_1||^2)."""
    return math.sqrt(float(np.sum((x_hat - x1) ** 2)) + eta1 / tau1 * float(np.sum((y_hat - y1) ** 2)))


def D_hat_of(x_hat, y_hat, x1, y1):
    return math.sqrt(float(np.sum((x_hat - x1) ** 2)) + float(np.sum((y_hat - y1) ** 2)))


def C_of(schedule, t, sigma_x, sigma_y, p=None, q=None):
    """C = sqrt(sum eta_i^2 s_x^2 / (1-q) + sum eta_i tau_i s_y^2 / (1-p)), i = 1..t."""
    p = schedule.p if p is None else p
    q = schedule.q if q is None else q
    sx = sum(schedule.eta(i) ** 2 for i in range(1, t + 1))
    sy = sum(schedule.eta(i) * schedule.tau(i) for i in range(1, t + 1))
    return math.sqrt(sx * sigma_x ** 2 / (1 - q) + sy * sigma_y ** 2 / (1 - p))


def eps_det(schedule, t, D, p=None):
    """(2 - p) D^2 / (beta_t eta_t (1 - p)): bound on delta_{t+1}."""
    p = schedule.p if p is None else p
    return (2 - p) * D * D / (schedule.beta(t) * schedule.eta(t) * (1 - p))


def v_bound_det(schedule, t, dist_x1, dist_y1, D, L_K, p=None):
    p = schedule.p if p is None else p
    b, e, tau = schedule.beta(t), schedule.eta(t), schedule.tau(t)
    ratio = schedule.eta(1) / (schedule.tau(1) * (1 - p))
    return dist_x1 / (b * e) + dist_y1 / (b * tau) + (
        (1 + math.sqrt(ratio)) / (b * e) + 2 * L_K / b) * D


def eps_stoch(schedule, t, D, C, p=None):
    p = schedule.p if p is None else p
    b, e = schedule.beta(t), schedule.eta(t)
    return ((6 - 4 * p) / (1 - p) * D * D + (5 - 3 * p) / (2 - 2 * p) * C * C) / (b * e)


def v_bound_stoch(schedule, t, dist_x1, dist_y1, D, C, L_K, p=None):
    p = schedule.p if p is None else p
    b, e, tau = schedule.beta(t), schedule.eta(t), schedule.tau(t)
    r = math.sqrt(2 * D * D + C * C)
    ratio = math.sqrt(schedule.tau(1) / schedule.eta(1))
    return (2 * dist_x1 / (b * e) + 2 * dist_y1 / (b * tau)
            + r * (2 / (b * e) + ratio / (b * tau) * (math.sqrt(1 / (1 - p)) + 1) + 2 * L_K / b))


def _variance_sum(schedule, t, sigma_x, sigma_y, alpha_x, alpha_y):
    p, q = schedule.p, schedule.q
    s = 0.0
    for i in range(1, t + 1):
        g = schedule.gamma(i)
        s += (2 - q) * schedule.eta(i) * g * sigma_x ** 2 / ((1 - q) * alpha_x)
        s += (2 - p) * schedule.tau(i) * g * sigma_y ** 2 / ((1 - p) * alpha_y)
    return s


def Q0(schedule, t, omega_x2, omega_y2, sigma_x, sigma_y, alpha_x=1.0, alpha_y=1.0):
    """Expected-gap bound for z^ag_{t+1} of the stochastic method on bounded sets."""
    b, g = schedule.beta(t), schedule.gamma(t)
    det = (2 * g / schedule.eta(t) * omega_x2 + 2 * g / schedule.tau(t) * omega_y2) / (b * g)
    return det + _variance_sum(schedule, t, sigma_x, sigma_y, alpha_x, alpha_y) / (2 * b * g)


def Q1(schedule, t, omega_x2, omega_y2, sigma_x, sigma_y, alpha_x=1.0, alpha_y=1.0):
    """High-probability scale; the variance sum of Q0 appears here a second time, as stated."""
    b, g = schedule.beta(t), schedule.gamma(t)
    root = math.sqrt(2 * sum(schedule.gamma(i) ** 2 for i in range(1, t + 1)))
    lead = (math.sqrt(2) * sigma_x * math.sqrt(omega_x2) / math.sqrt(alpha_x)
            + sigma_y * math.sqrt(omega_y2) / math.sqrt(alpha_y)) * root / (b * g)
    return lead + _variance_sum(schedule, t, sigma_x, sigma_y, alpha_x, alpha_y) / (2 * b * g)


def bound_context(problem, schedule, state):
    """Constants needed to fill the ``bound`` column, or None when unavailable."""
    if schedule.variant == "custom":
        return None
    c = dict(schedule.constants)
    if schedule.variant in ("unbounded_det", "unbounded_stoch"):
        if problem.known_saddle is None:
            return None
        xs, ys = problem.known_saddle
        c["D_hat"] = D_hat_of(xs, ys, state.x1, state.y1)
        c["D"] = D_of(xs, ys, state.x1, state.y1, schedule.eta(1), schedule.tau(1))
    return {"variant": schedule.variant, "constants": c}


def bound_column(ctx, t, N):
    """bounded_det: the per-t bound for t >= 2; horizon variants: only at t = N."""
    if ctx["variant"] == "bounded_det":
        return theoretical_bound("bounded_det", ctx["constants"], t).value if t >= 2 else None
    if t != N:
        return None
    return theoretical_bound(ctx["variant"], ctx["constants"], N).value


# ---------------------------------------------------------------------------
# audits

@dataclass
class AuditReport:
    residuals: np.ndarray     # shape (T - 1, P): RHS - LHS per step and probe
    min_residual: float
    worst: tuple              # (t, probe index)
    passed: bool
    tol: float

    def to_dict(self):
        return {"min_residual": self.min_residual, "worst_t": self.worst[0],
                "worst_probe": self.worst[1], "pass": self.passed, "tol": self.tol}


def _sqdist_rows(P, u):
    d = P - u
    return np.einsum("ij,ij->i", d, d)


def _breg_rows(geometry, P, u):
    if geometry.variant == "euclidean":
        return 0.5 * _sqdist_rows(P, u)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(P > 0, P * np.log(P / u), 0.0)
    return terms.sum(axis=1) - P.sum(axis=1) + u.sum()


def recursion_audit(trajectory, problem, schedule, probes, tol=1e-8):
    """Check, for every step t and probe z,

        beta_t gamma_t Q(z^ag_{t+1}, z) <= B_t(z) + gamma_t <K(x_{t+1} - x_t), y - y_{t+1}>
                                           - gamma_t (a_X/(2 eta_t) - L_G/(2 beta_t)) ||x_{t+1} - x_t||^2

    with B_t(z) = sum_i gamma_i/eta_i [V(x, x_i) - V(x, x_{i+1})] + gamma_i/tau_i [V(y, y_i) - V(y, y_{i+1})].
    For stochastic runs with recorded noise, a_X is replaced by q a_X and the
    noise terms Lambda_i(z) are added to the right side.
    """
    its, ags = trajectory.iterates, trajectory.aggregates
    if its is None or ags is None or len(its) < 2:
        raise InsufficientCaptureError("the audit needs every iterate (capture iterates=True)")
    noise = trajectory.noise
    stochastic = noise is not None and len(noise) > 0
    if stochastic and any(n is None for n in noise):
        raise InsufficientCaptureError("stochastic audit needs the realized noise of every step")
    st = trajectory.final_state
    gx, gy = st.geometry if st is not None else (EUCLIDEAN, EUCLIDEAN)
    if not probes:
        raise InvalidArgumentError("need at least one probe point")
    for x, y in probes:
        problem.check_feasible(x, y)
    PX = np.array([x for x, _ in probes], dtype=float)
    PY = np.array([y for _, y in probes], dtype=float)
    GP = np.array([problem.G(x) for x in PX])
    KP = np.array([problem.K(x) for x in PX])
    JP = np.array([problem.J(y) for y in PY])
    L_G = problem.L_G
    p, q = (schedule.p, schedule.q) if stochastic else (None, 1.0)

    T = len(its)
    res = np.empty((T - 1, len(probes)))
    B = np.zeros(len(probes))
    lam = np.zeros(len(probes))
    for t in range(1, T):
        x_t, y_t = its[t - 1]
        x_n, y_n = its[t]
        b, eta, tau, g = schedule.beta(t), schedule.eta(t), schedule.tau(t), schedule.gamma(t)
        B += g / eta * (_breg_rows(gx, PX, x_t) - _breg_rows(gx, PX, x_n))
        B += g / tau * (_breg_rows(gy, PY, y_t) - _breg_rows(gy, PY, y_n))
        dx, dy = x_n - x_t, y_n - y_t
        if stochastic:
            nz = noise[t - 1]
            lam += -(1 - q) * gx.alpha * g / (2 * eta) * float(dx @ dx)
            lam += -(1 - p) * gy.alpha * g / (2 * tau) * float(dy @ dy)
            lam -= g * ((x_n - PX) @ nz.delta_x + (y_n - PY) @ nz.delta_y)
        xa, ya = ags[t]
        Q = (problem.G(xa) + PY @ problem.K(xa) - JP) - (GP + KP @ ya - problem.J(ya))
        lhs = b * g * Q
        rhs = (B + g * ((PY - y_n) @ problem.K(dx))
               - g * (q * gx.alpha / (2 * eta) - L_G / (2 * b)) * float(dx @ dx) + lam)
        res[t - 1] = rhs - lhs
    i, j = np.unravel_index(int(np.argmin(res)), res.shape)
    mn = float(res[i, j])
    return AuditReport(res, mn, (int(i) + 1, int(j)), mn >= -tol, tol)


def distance_check(trajectory, problem, schedule, p=None, tol=1e-9):
    """||x^ - x_{t+1}||^2 + eta_t (1-p)/tau_t ||y^ - y_{t+1}||^2 <= ||x^ - x_1||^2 + eta_t/tau_t ||y^ - y_1||^2.

    Evaluated at every captured record; returns (passed, min relative residual).
    """
    if problem.known_saddle is None:
        raise CertificateUnavailableError("distance check needs the problem's known saddle point")
    p = schedule.p if p is None else p
    if p is None:
        raise InvalidArgumentError("distance check needs the slack p")
    xs, ys = problem.known_saddle
    st = trajectory.final_state
    x1, y1 = st.x1, st.y1
    a0 = float(np.sum((xs - x1) ** 2))
    b0 = float(np.sum((ys - y1) ** 2))
    worst = math.inf
    for r in trajectory.records:
        t = r["t"] - 1
        ratio = schedule.eta(t) / schedule.tau(t)
        rhs = a0 + ratio * b0
        lhs = float(np.sum((xs - r["x"]) ** 2)) + ratio * (1 - p) * float(np.sum((ys - r["y"]) ** 2))
        worst = min(worst, (rhs - lhs) / max(1.0, rhs))
    return worst >= -tol, worst
