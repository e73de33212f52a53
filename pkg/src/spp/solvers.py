"""Primal-dual solvers: one-step transitions and full runs with trajectory capture.

Three algorithms are provided:

* ``apd``: the accelerated primal-dual method (middle point, prox steps,
  aggregate update, extrapolation),
* ``stochastic_apd``: the same iteration driven by a stochastic oracle,
* ``pd_baseline``: the plain primal-dual method with uniform output averages,
  optionally with G linearized at the current point.

States are never mutated; every step returns a fresh :class:`SolverState`.
"""
from dataclasses import dataclass, field, replace
import csv
import hashlib
import io
import json
import time

import numpy as np

from .errors import (HorizonError, InvalidArgumentError, ScheduleNotValidatedError,
                     UnsupportedError)
from .geometry import EUCLIDEAN, BregmanGeometry, prox_map

ALGORITHMS = ("apd", "stochastic_apd", "pd_baseline")
CSV_COLUMNS = ("t", "gap", "bound", "delta", "v_norm", "dist_to_saddle", "wall_ms")


def _geom_pair(geometry):
    if geometry is None:
        return EUCLIDEAN, EUCLIDEAN
    if isinstance(geometry, BregmanGeometry):
        return geometry, geometry
    gx, gy = geometry
    return gx, gy


@dataclass(frozen=True)
class SolverState:
    """Iterates after ``t - 1`` steps; ``x``, ``y`` hold x_t, y_t.

    ``x_ag``/``y_ag`` are the aggregate iterates for APD and the running
    uniform means for the baseline method. ``x_bar`` is the extrapolated
    point the next dual update will use.
    """

    t: int
    x: np.ndarray
    y: np.ndarray
    x_prev: np.ndarray
    x_bar: np.ndarray
    x_ag: np.ndarray
    y_ag: np.ndarray
    x1: np.ndarray
    y1: np.ndarray
    x_md: np.ndarray = None
    xv: np.ndarray = None
    yv: np.ndarray = None
    u_accum: float = None
    pq: tuple = None
    last_noise: object = None
    geometry: tuple = (EUCLIDEAN, EUCLIDEAN)

    @property
    def z(self):
        return self.x, self.y

    @property
    def z_ag(self):
        return self.x_ag, self.y_ag


def initial_state(problem, x1=None, y1=None, geometry=None, track_noise=False, pq=None):
    """State at t = 1 with x_0 := x_1 and x_bar_1 = x_1.

    Defaults: box midpoint, ball center, uniform simplex point, origin.
    With ``track_noise`` the auxiliary sequence z^v starts at z_1 and U_0 = 0.
    """
    x1 = problem.set_x.midpoint() if x1 is None else np.array(x1, dtype=float)
    y1 = problem.set_y.midpoint() if y1 is None else np.array(y1, dtype=float)
    if x1.shape != (problem.dim_x,) or y1.shape != (problem.dim_y,):
        raise InvalidArgumentError("start point has the wrong dimension")
    problem.check_feasible(x1, y1)
    kw = {}
    if track_noise:
        if pq is None or None in pq:
            raise InvalidArgumentError("noise tracking needs the schedule's (p, q)")
        kw = dict(xv=x1.copy(), yv=y1.copy(), u_accum=0.0, pq=tuple(pq))
    return SolverState(t=1, x=x1, y=y1, x_prev=x1, x_bar=x1, x_ag=x1, y_ag=y1,
                       x1=x1, y1=y1, geometry=_geom_pair(geometry), **kw)


def check_schedule(schedule, mode=None):
    if schedule.variant == "custom":
        ok = schedule.validated_modes if mode is None else (mode in schedule.validated_modes)
        if not ok:
            raise ScheduleNotValidatedError(
                "custom schedules must pass validate_schedule before a solver uses them")


def _check_horizon(state, schedule):
    last = schedule.last_step
    if last is not None and state.t > last:
        raise HorizonError(f"step t={state.t} exceeds the schedule horizon (last step {last})")


def _apd_update(state, problem, schedule, noise):
    """Shared body of the deterministic and stochastic steps.

    ``noise`` is an ``OracleNoise`` or ``None``; with ``None`` no arithmetic
    is spent on it, so both steps agree bit for bit.
    """
    _check_horizon(state, schedule)
    gx, gy = state.geometry
    t = state.t
    b = schedule.beta(t)
    eta, tau = schedule.eta(t), schedule.tau(t)
    w = 1.0 / b
    x_md = (1.0 - w) * state.x_ag + w * state.x

    lin_y = -problem.K(state.x_bar)
    if noise is not None:
        lin_y = lin_y + noise.delta_y
    y_new = prox_map(gy, problem.set_y, lin_y, problem.simple, state.y, tau)

    lin_x = problem.grad_G(x_md) + problem.KT(y_new)
    if noise is not None:
        lin_x = lin_x + noise.delta_x
    x_new = prox_map(gx, problem.set_x, lin_x, None, state.x, eta)

    x_ag = (1.0 - w) * state.x_ag + w * x_new
    y_ag = (1.0 - w) * state.y_ag + w * y_new
    x_bar = schedule.theta(t + 1) * (x_new - state.x) + x_new

    kw = {}
    if state.u_accum is not None:
        if noise is None:
            raise InvalidArgumentError("noise tracking is on but no realized noise was supplied")
        kw = _advance_noise(state, problem, schedule, noise, eta, tau, t)
    return replace(state, t=t + 1, x=x_new, y=y_new, x_prev=state.x, x_bar=x_bar,
                   x_md=x_md, x_ag=x_ag, y_ag=y_ag, last_noise=noise, **kw)


def _advance_noise(state, problem, schedule, noise, eta, tau, t):
    """z^v update and U_t accumulation from the realized noise of step t."""
    gx, gy = state.geometry
    p, q = state.pq
    gam = schedule.gamma(t)
    dx, dy = noise.delta_x, noise.delta_y
    u = state.u_accum
    u += (2 - q) * eta * gam / (2 * (1 - q) * gx.alpha) * gx.dual_norm(dx) ** 2
    u += (2 - p) * tau * gam / (2 * (1 - p) * gy.alpha) * gy.dual_norm(dy) ** 2
    u += gam * (float(dx @ (state.xv - state.x)) + float(dy @ (state.yv - state.y)))
    xv = prox_map(gx, problem.set_x, -dx, None, state.xv, eta)
    yv = prox_map(gy, problem.set_y, -dy, None, state.yv, tau)
    return dict(xv=xv, yv=yv, u_accum=u)


def apd_step(state, problem, schedule):
    """One accelerated primal-dual step with exact oracles."""
    check_schedule(schedule)
    if state.u_accum is not None:
        raise InvalidArgumentError("deterministic steps cannot advance a noise-tracking state")
    return _apd_update(state, problem, schedule, None)


def stochastic_apd_step(state, problem, oracle, schedule, noise=None):
    """One step of the stochastic method.

    The oracle's error triple for this iteration is drawn once; the gradient
    error applies at x^md, the dual error at x_bar_t and the adjoint error at
    y_{t+1}. ``noise`` injects a given ``OracleNoise`` instead (testing).
    With the oracle disclosing its noise and the state tracking it, z^v and
    U_t advance as well.
    """
    check_schedule(schedule)
    if noise is None:
        noise = oracle.draw() if oracle is not None else None
    return _apd_update(state, problem, schedule, noise)


def _exact_x_prox(problem, lin, center, step):
    """argmin_{x in X} G(x) + <lin, x> + ||x - center||^2 / (2 step) for quadratic G."""
    sm = problem.smooth
    if sm.kind != "quadratic":
        g = lin + sm.grad(center)  # gradient is constant
        return prox_map(EUCLIDEAN, problem.set_x, g, None, center, step)
    H = sm.hessian
    c = lin if sm.linear is None else lin + sm.linear
    rhs = center / step - c
    sx = problem.set_x
    if sx.variant == "free":
        return np.linalg.solve(H + np.eye(len(center)) / step, rhs)
    if sx.variant == "box" and np.count_nonzero(H - np.diag(np.diag(H))) == 0:
        return np.clip(rhs / (np.diag(H) + 1.0 / step), sx.lower, sx.upper)
    raise UnsupportedError("exact G-prox is available for quadratic G on free sets or "
                           "boxes with diagonal Hessian; use linearized=True")


def pd_baseline_step(state, problem, schedule, linearized=True):
    """One step of the plain primal-dual method.

    The dual step uses tau_t, the primal step eta_t, and the extrapolation
    x_bar_{t+1} = theta_t (x_{t+1} - x_t) + x_{t+1}. ``x_ag``/``y_ag`` hold
    the uniform means of z_1..z_{t+1}.
    """
    check_schedule(schedule)
    _check_horizon(state, schedule)
    gx, gy = state.geometry
    t = state.t
    eta, tau = schedule.eta(t), schedule.tau(t)
    y_new = prox_map(gy, problem.set_y, -problem.K(state.x_bar), problem.simple, state.y, tau)
    if linearized:
        lin = problem.grad_G(state.x) + problem.KT(y_new)
        x_new = prox_map(gx, problem.set_x, lin, None, state.x, eta)
    else:
        if gx.variant != "euclidean":
            raise UnsupportedError("exact G-prox is implemented for Euclidean geometry only")
        x_new = _exact_x_prox(problem, problem.KT(y_new), state.x, eta)
    x_bar = schedule.theta(t) * (x_new - state.x) + x_new
    k = t + 1
    x_avg = state.x_ag + (x_new - state.x_ag) / k
    y_avg = state.y_ag + (y_new - state.y_ag) / k
    return replace(state, t=k, x=x_new, y=y_new, x_prev=state.x, x_bar=x_bar,
                   x_ag=x_avg, y_ag=y_avg)


# ---------------------------------------------------------------------------
# full runs

@dataclass
class CaptureOptions:
    """What to record. ``cadence`` c records after step k when k % c == 0 and
    after the last step, giving ceil((N-1)/c) records."""

    cadence: int = 1
    gap: bool = False
    certificate: bool = False
    bound: bool = True
    dist: bool = False
    iterates: bool = False
    record_wall_time: bool = False

    def __post_init__(self):
        if self.cadence < 1:
            raise InvalidArgumentError("capture cadence must be >= 1")

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: v for k, v in (d or {}).items() if k in cls.__dataclass_fields__})


@dataclass
class Trajectory:
    records: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    iterates: list = None       # [(x_i, y_i)] for i = 1..T when capture.iterates
    aggregates: list = None     # [(x_ag_i, y_ag_i)]
    noise: list = None          # realized OracleNoise per step, when disclosed
    final_state: SolverState = None
    error: str = None

    def __len__(self):
        return len(self.records)

    def column(self, name):
        return [r.get(name) for r in self.records]

    def to_csv(self, path=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.records:
            w.writerow([_fmt(r.get(c)) for c in CSV_COLUMNS])
        text = buf.getvalue()
        if path is not None:
            from .harness import atomic_write
            atomic_write(path, text)
        return text

    def to_report(self):
        last = self.records[-1] if self.records else {}
        return {"meta": self.meta, "records": len(self.records), "error": self.error,
                "final": {c: last.get(c) for c in CSV_COLUMNS}}

    def to_json(self):
        return json.dumps(self.to_report(), sort_keys=True, indent=2, default=_json_default)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not serializable: {type(o)}")


def problem_digest(problem):
    from .problem import problem_to_json
    return hashlib.sha256(problem_to_json(problem).encode()).hexdigest()[:16]


def run(algorithm, problem, schedule, N, oracle=None, capture=None, start=None,
        geometry=None, linearized=True):
    """Execute N - 1 steps and return a :class:`Trajectory`.

    ``start`` is an optional (x_1, y_1). On a step failure the partial
    trajectory is attached to the exception as ``.trajectory``.
    """
    from . import certification as cert

    if algorithm not in ALGORITHMS:
        raise InvalidArgumentError(f"algorithm must be one of {ALGORITHMS}")
    if int(N) < 2:
        raise InvalidArgumentError("N must be >= 2")
    N = int(N)
    check_schedule(schedule)
    capture = capture or CaptureOptions()
    x1, y1 = (None, None) if start is None else start
    track = (algorithm == "stochastic_apd" and oracle is not None
             and getattr(oracle, "disclose_noise", False) and oracle.noise_model != "none")
    if track and (schedule.p is None or schedule.q is None):
        track = False
    state = initial_state(problem, x1, y1, geometry, track_noise=track,
                          pq=(schedule.p, schedule.q) if track else None)
    traj = Trajectory(meta={
        "algorithm": algorithm, "schedule": schedule.variant, "N": N,
        "seed": getattr(oracle, "seed", None), "problem": problem_digest(problem),
        "noise": oracle.describe() if oracle is not None else None,
        "linearized": linearized if algorithm == "pd_baseline" else None,
    })
    if capture.iterates:
        traj.iterates = [(state.x, state.y)]
        traj.aggregates = [(state.x_ag, state.y_ag)]
        traj.noise = [] if algorithm == "stochastic_apd" else None
    bound_ctx = cert.bound_context(problem, schedule, state) if capture.bound else None
    if capture.certificate and algorithm == "pd_baseline":
        raise InvalidArgumentError("perturbation certificates apply to the accelerated method only")

    t_start = time.perf_counter()
    try:
        for k in range(1, N):
            if algorithm == "apd":
                state = apd_step(state, problem, schedule)
            elif algorithm == "stochastic_apd":
                state = stochastic_apd_step(state, problem, oracle, schedule)
            else:
                state = pd_baseline_step(state, problem, schedule, linearized)
            if capture.iterates:
                traj.iterates.append((state.x, state.y))
                traj.aggregates.append((state.x_ag, state.y_ag))
                if traj.noise is not None:
                    traj.noise.append(state.last_noise)
            if k % capture.cadence == 0 or k == N - 1:
                traj.records.append(_record(state, problem, schedule, capture, bound_ctx,
                                            algorithm, N, t_start))
    except Exception as exc:
        traj.error = f"{type(exc).__name__}: {exc}"
        traj.final_state = state
        exc.trajectory = traj
        raise
    traj.final_state = state
    return traj


def _record(state, problem, schedule, capture, bound_ctx, algorithm, N, t_start):
    from . import certification as cert

    t = state.t
    rec = {"t": t, "x": state.x, "y": state.y, "x_ag": state.x_ag, "y_ag": state.y_ag,
           "gap": None, "bound": None, "delta": None, "v_norm": None,
           "dist_to_saddle": None, "wall_ms": None}
    if capture.gap:
        rec["gap"] = cert.exact_gap(problem, (state.x_ag, state.y_ag))
    if capture.certificate:
        if algorithm == "apd":
            c = cert.perturbation_certificate_det(state, schedule, problem)
        else:
            c = cert.perturbation_certificate_stoch(state, schedule, problem)
        rec["delta"] = c.delta
        rec["v_norm"] = c.v_norm
    if bound_ctx is not None:
        rec["bound"] = cert.bound_column(bound_ctx, t, N)
    if capture.dist and problem.known_saddle is not None:
        xs, ys = problem.known_saddle
        rec["dist_to_saddle"] = float(np.sqrt(np.sum((state.x_ag - xs) ** 2)
                                              + np.sum((state.y_ag - ys) ** 2)))
    if capture.record_wall_time:
        rec["wall_ms"] = (time.perf_counter() - t_start) * 1e3
    return rec
