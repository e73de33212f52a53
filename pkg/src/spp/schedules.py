"""Step-size schedules for the accelerated primal-dual method and their validation.

Built-in variants (all use beta_t = (t+1)/2 and theta_t = (t-1)/t):

``bounded_det``
    eta_t = a_X t / (2 L_G + t L_K D_Y/D_X),  tau_t = a_Y D_Y / (L_K D_X)
``unbounded_det`` (horizon N)
    eta_t = t / (2 (L_G + N L_K)),  tau_t = t / (2 N L_K)
``bounded_stoch`` (horizon N)
    eta_t = 2 a_X D_X t / (6 L_G D_X + 3 L_K D_Y (N-1) + 3 s_x N sqrt(N-1))
    tau_t = 2 a_Y D_Y t / (3 L_K D_X (N-1) + 3 s_y N sqrt(N-1))
``unbounded_stoch`` (horizon N)
    eta_t = 3t / (4 h),  tau_t = t / h,
    h = 2 L_G + 2 L_K (N-1) + N sqrt(N-1) s / D~,  s = sqrt(9 s_x^2 / 4 + s_y^2)

``unbounded_det`` grows the steps proportionally to t (not t+1) so that
theta_t equals the step ratios exactly, which the perturbation certificate
relies on.
"""
from dataclasses import dataclass, field
import math

import numpy as np

from .errors import DegenerateScheduleError, InvalidArgumentError, InvalidConstantsError

VARIANTS = ("bounded_det", "unbounded_det", "bounded_stoch", "unbounded_stoch", "custom")
MODES = ("bounded", "unbounded", "stochastic_bounded", "stochastic_unbounded", "baseline")
DEFAULT_MODE = {
    "bounded_det": "bounded",
    "unbounded_det": "unbounded",
    "bounded_stoch": "stochastic_bounded",
    "unbounded_stoch": "stochastic_unbounded",
}
# slack parameters the convergence proofs use for each variant
DEFAULT_PQ = {
    "bounded_det": (None, None),
    "unbounded_det": (0.25, None),
    "bounded_stoch": (2.0 / 3.0, 2.0 / 3.0),
    "unbounded_stoch": (0.25, 0.75),
}
RESIDUAL_TOL = 1e-10


def _as_fn(seq, name):
    if callable(seq):
        return seq
    arr = np.asarray(seq, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidArgumentError(f"{name} must be a callable or a non-empty 1-D sequence")

    def fn(t):
        if not 1 <= t <= arr.size:
            raise InvalidArgumentError(f"{name} defined for 1 <= t <= {arr.size}, got {t}")
        return float(arr[t - 1])

    return fn


class ParamSchedule:
    """Sequences beta_t, theta_t, eta_t, tau_t (t >= 1) plus metadata."""

    def __init__(self, variant, beta, theta, eta, tau, N=None, constants=None,
                 p=None, q=None, notes=()):
        if variant not in VARIANTS:
            raise InvalidArgumentError(f"unknown schedule variant {variant!r}")
        self.variant = variant
        self.N = None if N is None else int(N)
        self.constants = dict(constants or {})
        self.p = p
        self.q = q
        self.notes = list(notes)
        self._beta = _as_fn(beta, "beta")
        self._theta = _as_fn(theta, "theta")
        self._eta = _as_fn(eta, "eta")
        self._tau = _as_fn(tau, "tau")
        self._gamma = [1.0]
        self.validated_modes = set()

    def beta(self, t):
        return self._beta(t)

    def theta(self, t):
        return self._theta(t)

    def eta(self, t):
        return self._eta(t)

    def tau(self, t):
        return self._tau(t)

    def gamma(self, t):
        if t < 1:
            raise InvalidArgumentError("gamma is defined for t >= 1")
        g = self._gamma
        while len(g) < t:
            i = len(g) + 1
            th = self.theta(i)
            if th <= 0:
                raise DegenerateScheduleError(f"theta_{i} = {th} makes gamma undefined")
            g.append(g[-1] / th)
        return g[t - 1]

    @property
    def last_step(self):
        """Largest t for which a step may be taken (N - 1), or None."""
        return None if self.N is None else self.N - 1

    @property
    def default_mode(self):
        return DEFAULT_MODE.get(self.variant)

    def describe(self):
        return {"variant": self.variant, "N": self.N, "p": self.p, "q": self.q,
                "constants": self.constants, "notes": self.notes}

    def __repr__(self):
        return f"ParamSchedule({self.variant!r}, N={self.N})"


def _get(constants, key, default=None):
    v = constants.get(key, default)
    if v is None:
        raise InvalidConstantsError(f"missing constant {key!r}")
    v = float(v)
    if v < 0:
        raise InvalidConstantsError(f"constant {key!r} must be nonnegative")
    return v


def _need_N(N, variant):
    if N is None:
        raise InvalidConstantsError(f"variant {variant!r} needs the horizon N")
    if int(N) < 2:
        raise InvalidConstantsError("horizon N must be >= 2")
    return int(N)


def _positive(value, what):
    if not value > 0:
        raise InvalidConstantsError(
            f"{what} evaluates to {value}; supply a positive surrogate (e.g. L_K > 0)")
    return value


def make_schedule(variant, constants, N=None, p=None, q=None):
    """Build a built-in schedule.

    ``constants`` keys: L_G, L_K, alpha_x, alpha_y, D_X, D_Y, sigma_x,
    sigma_y, D_tilde. alpha's default to 1. When both D_X and D_Y are
    missing the ratio D_Y/D_X is taken as 1 and recorded in ``notes``.
    """
    if variant not in DEFAULT_MODE:
        raise InvalidArgumentError(f"make_schedule builds {sorted(DEFAULT_MODE)}, got {variant!r}")
    c = dict(constants)
    notes = []
    L_G = _get(c, "L_G")
    L_K = _get(c, "L_K")
    ax = _get(c, "alpha_x", 1.0)
    ay = _get(c, "alpha_y", 1.0)
    if ax <= 0 or ay <= 0:
        raise InvalidConstantsError("alpha_x and alpha_y must be positive")
    dp, dq = DEFAULT_PQ[variant]
    p = dp if p is None else p
    q = dq if q is None else q

    def beta(t):
        return (t + 1) / 2.0

    def theta(t):
        return (t - 1) / t

    if variant in ("bounded_det", "bounded_stoch"):
        if c.get("D_X") is None and c.get("D_Y") is None:
            c["D_X"] = c["D_Y"] = 1.0
            notes.append("D_X, D_Y unknown: ratio D_Y/D_X replaced by 1")
        D_X = _positive(_get(c, "D_X"), "D_X")
        D_Y = _positive(_get(c, "D_Y"), "D_Y")

    if variant == "bounded_det":
        r = D_Y / D_X
        tau_c = ay * D_Y / _positive(L_K * D_X, "L_K * D_X")

        def eta(t):
            return ax * t / (2.0 * L_G + t * L_K * r)

        def tau(t):
            return tau_c
        N = None if N is None else int(N)

    elif variant == "unbounded_det":
        N = _need_N(N, variant)
        den_x = _positive(2.0 * (L_G + N * L_K), "2 (L_G + N L_K)")
        den_y = _positive(2.0 * N * L_K, "2 N L_K")

        def eta(t):
            return t / den_x

        def tau(t):
            return t / den_y

    elif variant == "bounded_stoch":
        N = _need_N(N, variant)
        sx = _get(c, "sigma_x", 0.0)
        sy = _get(c, "sigma_y", 0.0)
        root = N * math.sqrt(N - 1)
        den_x = _positive(6 * L_G * D_X + 3 * L_K * D_Y * (N - 1) + 3 * sx * root, "eta denominator")
        den_y = _positive(3 * L_K * D_X * (N - 1) + 3 * sy * root, "tau denominator")

        def eta(t):
            return 2.0 * ax * D_X * t / den_x

        def tau(t):
            return 2.0 * ay * D_Y * t / den_y

    else:  # unbounded_stoch
        N = _need_N(N, variant)
        sx = _get(c, "sigma_x", 0.0)
        sy = _get(c, "sigma_y", 0.0)
        Dt = _positive(_get(c, "D_tilde", 1.0), "D_tilde")
        sigma = math.sqrt(9.0 * sx * sx / 4.0 + sy * sy)
        h = _positive(2 * L_G + 2 * L_K * (N - 1) + N * math.sqrt(N - 1) * sigma / Dt, "eta")
        c.update(D_tilde=Dt, sigma=sigma, eta_bar=h)

        def eta(t):
            return 3.0 * t / (4.0 * h)

        def tau(t):
            return t / h

    c.update(L_G=L_G, L_K=L_K, alpha_x=ax, alpha_y=ay)
    return ParamSchedule(variant, beta, theta, eta, tau, N=N, constants=c, p=p, q=q, notes=notes)


def custom_schedule(beta, theta, eta, tau, N=None, constants=None, p=None, q=None):
    """User-supplied sequences; must pass :func:`validate_schedule` before a solver accepts it."""
    return ParamSchedule("custom", beta, theta, eta, tau, N=N, constants=constants, p=p, q=q)


def gamma_of(schedule, t):
    """gamma_1 = 1, gamma_t = gamma_{t-1} / theta_t."""
    return schedule.gamma(t)


# ---------------------------------------------------------------------------
# validation

@dataclass
class ScheduleReport:
    mode: str
    t: list
    beta_residual: list
    step_residual: list
    margin: list
    margin_rel: list
    passed: bool = False
    min_margin: float = math.nan
    first_violation_t: int = None
    p: float = None
    q: float = None
    notes: list = field(default_factory=list)

    def summary(self):
        return {"pass": self.passed, "min_margin": self.min_margin,
                "first_violation_t": self.first_violation_t, "mode": self.mode,
                "p": self.p, "q": self.q, "t_checked": len(self.t), "notes": self.notes}

    def to_dict(self):
        return {"summary": self.summary(), "t": self.t, "beta_residual": self.beta_residual,
                "step_residual": self.step_residual, "margin": self.margin,
                "margin_rel": self.margin_rel}


def validate_schedule(schedule, constants=None, t_max=10_000, mode=None):
    """Evaluate the convergence conditions for 1 <= t <= t_max as residuals.

    Every residual is scaled to be dimensionless; the schedule passes iff all
    of them are >= -1e-10. Horizon schedules are checked up to N - 1, the
    last step they drive. The step-ratio condition is checked from t = 2 on
    (theta_1 is never used because x_0 := x_1).
    """
    mode = mode or schedule.default_mode
    if mode not in MODES:
        raise InvalidArgumentError(f"mode must be one of {MODES}")
    if t_max < 2:
        raise InvalidArgumentError("t_max must be >= 2")
    c = dict(schedule.constants)
    c.update(constants or {})
    L_G = float(c.get("L_G", 0.0))
    L_K = float(c.get("L_K", 0.0))
    ax = float(c.get("alpha_x", 1.0))
    ay = float(c.get("alpha_y", 1.0))
    p, q = schedule.p, schedule.q
    if mode in ("unbounded", "stochastic_bounded", "stochastic_unbounded") and p is None:
        p = DEFAULT_PQ["unbounded_det"][0] if mode == "unbounded" else 2.0 / 3.0
    if mode.startswith("stochastic") and q is None:
        q = 2.0 / 3.0
    for name, val in (("p", p), ("q", q)):
        if val is not None and not 0 < val < 1:
            raise InvalidArgumentError(f"{name} must lie in (0, 1)")

    last = t_max if schedule.last_step is None else min(t_max, schedule.last_step)
    ts, beta_r, step_r, margins, rels = [], [], [], [], []
    for t in range(1, last + 1):
        b, e, tau = schedule.beta(t), schedule.eta(t), schedule.tau(t)
        if not (e > 0 and tau > 0 and b > 0):
            raise DegenerateScheduleError(f"nonpositive beta/eta/tau at t={t}")
        # beta recursion
        if mode == "baseline":
            br = -abs(b - 1.0)
        else:
            br = -abs(schedule.beta(t + 1) - 1.0 - b * schedule.theta(t + 1)) / max(1.0, schedule.beta(t + 1))
            if t == 1:
                br = min(br, -abs(b - 1.0))
        # step-ratio condition
        if t == 1:
            sr = math.nan
        else:
            th = schedule.theta(t)
            re = schedule.eta(t - 1) / e
            rt = schedule.tau(t - 1) / tau
            if mode in ("bounded", "stochastic_bounded"):
                sr = min(re, rt) - th
            else:
                sr = -max(abs(th - re), abs(th - rt))
                if mode == "baseline" and th > 1:
                    sr = min(sr, 1.0 - th)
            if th <= 0:
                sr = min(sr, -1.0)
        # step-size margin
        if mode == "baseline":
            terms = (1.0, L_G * e, L_K ** 2 * e * tau)
        else:
            lead = (q if mode.startswith("stochastic") else 1.0) * ax / e
            pdiv = 1.0 if mode == "bounded" else p
            terms = (lead, L_G / b, L_K ** 2 * tau / (pdiv * ay))
        m = terms[0] - terms[1] - terms[2]
        ts.append(t)
        beta_r.append(br)
        step_r.append(sr)
        margins.append(m)
        rels.append(m / max(terms))

    report = ScheduleReport(mode, ts, beta_r, step_r, margins, rels, p=p, q=q,
                            notes=list(schedule.notes))
    first = None
    for i, t in enumerate(ts):
        bad = beta_r[i] < -RESIDUAL_TOL or rels[i] < -RESIDUAL_TOL
        if not math.isnan(step_r[i]) and step_r[i] < -RESIDUAL_TOL:
            bad = True
        if bad:
            first = t
            break
    report.passed = first is None
    report.first_violation_t = first
    report.min_margin = float(min(margins))
    if schedule.last_step is not None and schedule.last_step < t_max:
        report.notes.append(f"checked up to the horizon's last step t = {schedule.last_step}")
    if report.passed:
        schedule.validated_modes.add(mode)
    return report
