"""Problem generators, experiment runner, replication statistics and bench suites."""
from dataclasses import asdict, dataclass, field
import json
import math
import os
import tempfile

import numpy as np
from scipy.optimize import linprog

from . import certification as cert
from .errors import ConfigError, InvalidArgumentError
from .geometry import EUCLIDEAN, diameter_D
from .problem import (SaddlePointProblem, StochasticOracle, ball, dense, free, linear_simple,
                      quadratic_smooth, simplex, zero_simple, zero_smooth)
from .rng import COMPONENTS, stream
from .schedules import make_schedule, validate_schedule, custom_schedule
from .solvers import CaptureOptions, run

GENERATORS = ("matrix_game", "quad_bilinear", "unbounded_quad")


def atomic_write(path, text):
    """Write via a temporary file in the same directory, then rename."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# generators

def _scaled(M, target):
    s = np.linalg.norm(M, 2)
    return M * (target / s) if s > 0 else M


def _game_saddle(K):
    """Mixed equilibrium of min_x max_y <K x, y> over two simplices by LP,
    polished by solving the equalizing system on the supports."""
    m, n = K.shape
    # x-player: min v  s.t.  K x <= v 1, 1^T x = 1, x >= 0
    res_x = linprog(np.r_[np.zeros(n), 1.0], A_ub=np.c_[K, -np.ones(m)], b_ub=np.zeros(m),
                    A_eq=np.r_[np.ones(n), 0.0][None, :], b_eq=[1.0],
                    bounds=[(0, None)] * n + [(None, None)], method="highs")
    # y-player: max w  s.t.  K^T y >= w 1, 1^T y = 1, y >= 0
    res_y = linprog(np.r_[np.zeros(m), -1.0], A_ub=np.c_[-K.T, np.ones(n)], b_ub=np.zeros(n),
                    A_eq=np.r_[np.ones(m), 0.0][None, :], b_eq=[1.0],
                    bounds=[(0, None)] * m + [(None, None)], method="highs")
    if res_x.status != 0 or res_y.status != 0:
        raise RuntimeError("linear program for the matrix game failed")
    x = np.maximum(res_x.x[:n], 0.0)
    y = np.maximum(res_y.x[:m], 0.0)
    x, y = x / x.sum(), y / y.sum()

    def gap(x, y):
        return float(np.max(K @ x) - np.min(K.T @ y))

    sx, sy = x > 1e-9, y > 1e-9
    if sx.sum() == sy.sum():
        A = K[np.ix_(sy, sx)]
        k = int(sx.sum())
        Mx = np.block([[A, -np.ones((k, 1))], [np.ones((1, k)), np.zeros((1, 1))]])
        My = np.block([[A.T, -np.ones((k, 1))], [np.ones((1, k)), np.zeros((1, 1))]])
        rhs = np.r_[np.zeros(k), 1.0]
        try:
            xs = np.linalg.solve(Mx, rhs)[:k]
            ys = np.linalg.solve(My, rhs)[:k]
        except np.linalg.LinAlgError:
            xs = ys = None
        if xs is not None and xs.min() >= 0 and ys.min() >= 0:
            x2, y2 = np.zeros(n), np.zeros(m)
            x2[sx], y2[sy] = xs, ys
            if gap(x2, y2) <= gap(x, y):
                x, y = x2, y2
    return x, y


def generate_problem(name, params=None, seed=0):
    """Build a named test instance, deterministic in ``seed``.

    matrix_game(m, n): K ~ U[-1, 1]^{m x n}, G = J = 0, simplices.
    quad_bilinear(n, m, L_G, L_K): G(x) = (L_G/2)||A x||^2 + <c, x>, ||A|| = 1,
        ||K|| = L_K, J(y) = <b, y>, unit balls; c and b place the saddle at an
        interior point drawn with norm <= 1/2.
    unbounded_quad(n, m, L_G, L_K): the same family on free sets, saddle ~ N(0, I/dim).
    """
    params = dict(params or {})
    rng = stream(int(seed), 0, COMPONENTS["problem"])
    meta = {"generator": name, "params": params, "seed": int(seed)}
    if name == "matrix_game":
        m, n = int(params.get("m", 10)), int(params.get("n", 10))
        if m < 1 or n < 1:
            raise InvalidArgumentError("dimensions must be positive")
        K = rng.uniform(-1.0, 1.0, size=(m, n))
        xs, ys = _game_saddle(K)
        return SaddlePointProblem(zero_smooth(n), dense(K), zero_simple(m), simplex(n), simplex(m),
                                  L_G=0.0, L_K=float(np.linalg.norm(K, 2)), known_saddle=(xs, ys),
                                  name=f"matrix_game({m},{n})", meta=meta)
    if name in ("quad_bilinear", "unbounded_quad"):
        n, m = int(params.get("n", 10)), int(params.get("m", 10))
        if n < 1 or m < 1:
            raise InvalidArgumentError("dimensions must be positive")
        L_G, L_K = float(params.get("L_G", 1.0)), float(params.get("L_K", 1.0))
        if L_G < 0 or L_K < 0:
            raise InvalidArgumentError("L_G and L_K must be nonnegative")
        A = _scaled(rng.standard_normal((n, n)), 1.0)
        H = L_G * (A.T @ A)
        H = 0.5 * (H + H.T)
        K = _scaled(rng.standard_normal((m, n)), L_K)
        if name == "quad_bilinear":
            xs = _in_ball(rng, n, 0.5)
            ys = _in_ball(rng, m, 0.5)
            sx, sy = ball(np.zeros(n), 1.0), ball(np.zeros(m), 1.0)
        else:
            xs = rng.standard_normal(n) / math.sqrt(n)
            ys = rng.standard_normal(m) / math.sqrt(m)
            sx, sy = free(n), free(m)
        b = K @ xs
        c = -(H @ xs) - K.T @ ys
        L_G_eff = float(np.linalg.norm(H, 2)) if L_G > 0 else 0.0
        return SaddlePointProblem(quadratic_smooth(H, c), dense(K), linear_simple(b), sx, sy,
                                  L_G=max(L_G, L_G_eff), L_K=L_K, known_saddle=(xs, ys),
                                  name=f"{name}({n},{m})", meta=meta)
    raise InvalidArgumentError(f"unknown generator {name!r}; choose from {GENERATORS}")


def _in_ball(rng, dim, radius):
    d = rng.standard_normal(dim)
    return d * (radius * rng.random() ** (1.0 / dim) / np.linalg.norm(d))


def saddle_residual(problem):
    """Norm of the first-order conditions at the known saddle of a free-set instance."""
    xs, ys = problem.known_saddle
    rx = problem.grad_G(xs) + problem.KT(ys)
    b = problem.simple.linear if problem.simple.linear is not None else 0.0
    ry = problem.K(xs) - b
    return float(np.sqrt(rx @ rx + ry @ ry))


# ---------------------------------------------------------------------------
# configuration

ALGORITHM_ALIASES = {"apd": "apd", "stochastic_apd": "stochastic_apd",
                     "pd_linearized": "pd_baseline", "pd_baseline": "pd_baseline"}


@dataclass
class ExperimentConfig:
    problem: dict
    algorithm: str = "apd"
    schedule: dict = field(default_factory=lambda: {"variant": "bounded_det"})
    N: int = 100
    replications: int = 1
    capture: dict = field(default_factory=lambda: {"cadence": 1, "gap": True})
    noise: dict = field(default_factory=lambda: {"model": "none"})
    seed: int = 0
    lambdas: list = field(default_factory=lambda: [1.0, 2.0, 4.0])
    output: dict = field(default_factory=dict)
    name: str = "experiment"

    def __post_init__(self):
        if not isinstance(self.problem, dict) or "generator" not in self.problem:
            raise ConfigError("problem must be an object with a 'generator' field")
        if self.problem["generator"] not in GENERATORS:
            raise ConfigError(f"unknown generator {self.problem['generator']!r}")
        if self.algorithm not in ALGORITHM_ALIASES:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        if int(self.N) < 2:
            raise ConfigError("N must be >= 2")
        if int(self.replications) < 1:
            raise ConfigError("replications must be >= 1")
        self.N = int(self.N)
        self.replications = int(self.replications)

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as e:
            raise ConfigError(str(e)) from None

    @classmethod
    def from_json(cls, text):
        try:
            d = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}") from None
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(d)

    @classmethod
    def load(cls, path):
        try:
            with open(path) as f:
                return cls.from_json(f.read())
        except OSError as e:
            raise ConfigError(f"cannot read config: {e}") from None

    def to_dict(self):
        return asdict(self)


def base_seed(config):
    env = os.environ.get("SPP_SEED")
    if env is not None and env.strip():
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"SPP_SEED must be an integer, got {env!r}") from None
    return int(config.seed)


def _noise_levels(noise):
    """(sigma_xG, sigma_xK, sigma_y). A combined ``sigma_x`` is split evenly between G and K."""
    sxg = noise.get("sigma_xG")
    sxk = noise.get("sigma_xK")
    if sxg is None and sxk is None:
        sx = float(noise.get("sigma_x", 0.0))
        sxg = sxk = sx / math.sqrt(2.0)
    return float(sxg or 0.0), float(sxk or 0.0), float(noise.get("sigma_y", 0.0))


def build_schedule(config, problem):
    """Schedule for the config, filling L_G, L_K, D_X, D_Y and sigmas from the problem."""
    sc = dict(config.schedule)
    variant = sc.get("variant", "bounded_det")
    consts = dict(sc.get("constants", {}))
    consts.setdefault("L_G", problem.L_G)
    consts.setdefault("L_K", problem.L_K)
    if problem.set_x.bounded and problem.set_y.bounded and "D_X" not in consts and "D_Y" not in consts:
        consts["D_X"] = diameter_D(EUCLIDEAN, problem.set_x)
        consts["D_Y"] = diameter_D(EUCLIDEAN, problem.set_y)
    sxg, sxk, sy = _noise_levels(config.noise)
    consts.setdefault("sigma_x", math.hypot(sxg, sxk))
    consts.setdefault("sigma_y", sy)
    if variant == "custom":
        seqs = {k: sc[k] for k in ("beta", "theta", "eta", "tau") if k in sc}
        if len(seqs) != 4:
            raise ConfigError("custom schedule needs beta, theta, eta and tau sequences")
        return custom_schedule(N=config.N, constants=consts, p=sc.get("p"), q=sc.get("q"), **seqs)
    try:
        return make_schedule(variant, consts, N=config.N, p=sc.get("p"), q=sc.get("q"))
    except InvalidArgumentError as e:
        raise ConfigError(str(e)) from None


def default_mode(config, schedule):
    mode = config.schedule.get("mode")
    if mode:
        return mode
    if ALGORITHM_ALIASES[config.algorithm] == "pd_baseline":
        return "baseline"
    return schedule.default_mode or "bounded"


# ---------------------------------------------------------------------------
# replication statistics

@dataclass
class ReplicationStats:
    values: list
    mean: float
    se: float            # None when a single replication leaves it undefined
    exceedance: dict     # lambda -> empirical frequency of value > C_0 + lambda C_1
    ceilings: dict       # lambda -> 3 exp(-lambda^2/3) + 3 exp(-lambda)

    def to_dict(self):
        return {"values": self.values, "mean": self.mean,
                "se": "unavailable" if self.se is None else self.se,
                "exceedance": {str(k): v for k, v in self.exceedance.items()},
                "ceilings": {str(k): v for k, v in self.ceilings.items()}}


def replicate_stats(values, C0=None, C1=None, lambdas=()):
    vals = [float(v) for v in values]
    if not vals:
        raise InvalidArgumentError("need at least one replication")
    arr = np.array(vals)
    mean = float(arr.mean())
    se = float(arr.std(ddof=1) / math.sqrt(len(arr))) if len(arr) > 1 else None
    exc, ceil = {}, {}
    if C0 is not None:
        for lam in lambdas:
            thr = C0 + lam * (C1 or 0.0)
            exc[float(lam)] = float(np.mean(arr > thr))
            ceil[float(lam)] = cert.high_prob_ceiling(lam)
    return ReplicationStats(vals, mean, se, exc, ceil)


def binomial_margin(p, R, z=1.96):
    """Normal-approximation 95% margin for a frequency over R trials."""
    return z * math.sqrt(max(p * (1 - p), 0.0) / R)


# ---------------------------------------------------------------------------
# experiments

@dataclass
class ExperimentResult:
    summary: dict
    exit_code: int
    trajectories: list = field(default_factory=list)


def _float_or_none(v):
    return None if v is None else float(v)


def run_experiment(config, out_dir=None, keep_trajectories=False):
    """Execute ``config.replications`` runs and evaluate the configured bound checks.

    Writes ``traj_rNNN.csv`` per replication, ``validation.json`` and
    ``summary.json`` into ``out_dir`` (when given). Exit code 0 when every
    check passes, 1 on a bound failure, 2 when the schedule fails validation.
    """
    algorithm = ALGORITHM_ALIASES[config.algorithm]
    pspec = config.problem
    problem = generate_problem(pspec["generator"], pspec.get("params", {}), pspec.get("seed", 0))
    schedule = build_schedule(config, problem)
    mode = default_mode(config, schedule)
    report = validate_schedule(schedule, t_max=max(2, config.N), mode=mode)
    if out_dir is not None:
        atomic_write(os.path.join(out_dir, "validation.json"),
                     json.dumps(report.summary(), sort_keys=True, indent=2))
    if not report.passed:
        summary = {"name": config.name, "pass": False, "error": "schedule validation failed",
                   "validation": report.summary()}
        if out_dir is not None:
            atomic_write(os.path.join(out_dir, "summary.json"), json.dumps(summary, sort_keys=True, indent=2))
        return ExperimentResult(summary, 2)

    seed0 = base_seed(config)
    cap = CaptureOptions.from_dict(config.capture)
    nz = dict(config.noise)
    model = nz.get("model", "none")
    sxg, sxk, sy = _noise_levels(nz)
    if algorithm == "stochastic_apd" and schedule.variant == "unbounded_stoch":
        nz.setdefault("disclose", True)
    finals = {"gap": [], "delta": [], "v_norm": []}
    trajs = []
    for r in range(config.replications):
        oracle = None
        if algorithm == "stochastic_apd":
            oracle = StochasticOracle(problem, model, sigma_xG=sxg, sigma_y=sy, sigma_xK=sxk,
                                      seed=seed0 + r, disclose_noise=bool(nz.get("disclose", False)))
        traj = run(algorithm, problem, schedule, config.N, oracle=oracle, capture=cap)
        last = traj.records[-1]
        for k in finals:
            finals[k].append(last.get(k))
        if out_dir is not None:
            traj.to_csv(os.path.join(out_dir, f"traj_r{r:03d}.csv"))
        if keep_trajectories:
            trajs.append(traj)
        if cap.gap and schedule.variant == "bounded_det":
            trajs_gaps = [(rec["t"], rec["gap"], rec["bound"]) for rec in traj.records]
            finals.setdefault("per_t_violations", []).append(
                sum(1 for t, g, b in trajs_gaps if b is not None and g > b + 1e-9))

    checks = _checks(config, problem, schedule, finals)
    passed = all(c["pass"] for c in checks)
    summary = {
        "name": config.name, "pass": passed, "algorithm": algorithm,
        "schedule": schedule.describe(), "validation": report.summary(),
        "N": config.N, "replications": config.replications, "base_seed": seed0,
        "final": {k: v for k, v in finals.items() if any(x is not None for x in v)},
        "checks": checks,
    }
    if finals["gap"] and all(g is not None for g in finals["gap"]):
        bnd = _horizon_bound(schedule, config.N)
        C0 = bnd.value if schedule.variant == "bounded_stoch" else None
        C1 = bnd.scale if schedule.variant == "bounded_stoch" else None
        summary["gap_stats"] = replicate_stats(finals["gap"], C0, C1, config.lambdas).to_dict()
    if out_dir is not None:
        atomic_write(os.path.join(out_dir, "summary.json"),
                     json.dumps(summary, sort_keys=True, indent=2, default=_json_default))
    return ExperimentResult(summary, 0 if passed else 1, trajs)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def _horizon_bound(schedule, N, problem=None, start=None):
    c = dict(schedule.constants)
    if problem is not None and problem.known_saddle is not None:
        xs, ys = problem.known_saddle
        x1, y1 = start
        c["D_hat"] = cert.D_hat_of(xs, ys, x1, y1)
        c["D"] = cert.D_of(xs, ys, x1, y1, schedule.eta(1), schedule.tau(1))
    try:
        return cert.theoretical_bound(schedule.variant, c, N)
    except (KeyError, InvalidArgumentError):
        return cert.Bound(None)


def _checks(config, problem, schedule, finals):
    """Bound checks matching the schedule variant; a list of {name, value, limit, pass}."""
    v = schedule.variant
    N = config.N
    out = []
    start = (problem.set_x.midpoint(), problem.set_y.midpoint())
    bnd = _horizon_bound(schedule, N, problem, start)
    if bnd.value is None:
        return out
    R = config.replications

    def mean_se(vals):
        s = replicate_stats(vals)
        return s.mean, (s.se or 0.0)

    if v == "bounded_det" and finals.get("per_t_violations") is not None:
        bad = sum(finals["per_t_violations"])
        out.append({"name": "gap <= bound at every captured t", "value": bad, "limit": 0,
                    "pass": bad == 0})
    elif v == "bounded_stoch" and all(g is not None for g in finals["gap"]):
        m, se = mean_se(finals["gap"])
        out.append({"name": "mean gap <= C_0 + 2 SE", "value": m, "limit": bnd.value + 2 * se,
                    "pass": m <= bnd.value + 2 * se})
        for lam in config.lambdas:
            freq = float(np.mean(np.array(finals["gap"]) > bnd.value + lam * bnd.scale))
            ceil = cert.high_prob_ceiling(lam)
            lim = ceil + binomial_margin(ceil, R)
            out.append({"name": f"P(gap > C_0 + {lam} C_1)", "value": freq, "limit": lim,
                        "pass": freq <= lim})
    elif v in ("unbounded_det", "unbounded_stoch") and all(d is not None for d in finals["delta"]):
        slack = 0.0
        md, sd = mean_se(finals["delta"])
        mv, sv = mean_se(finals["v_norm"])
        if v == "unbounded_stoch":
            slack = 2.0
        out.append({"name": "delta_N <= eps bound", "value": md, "limit": bnd.value + slack * sd,
                    "pass": md <= bnd.value + slack * sd})
        out.append({"name": "||v_N|| <= v bound", "value": mv, "limit": bnd.v_norm + slack * sv,
                    "pass": mv <= bnd.v_norm + slack * sv})
    return out


# ---------------------------------------------------------------------------
# bench suites

SUITES = ("det-bounded", "det-unbounded", "stoch-bounded", "stoch-unbounded", "baseline-compare")


def suite_configs(suite, quick=False):
    if suite == "det-bounded":
        return [ExperimentConfig(problem={"generator": "matrix_game", "params": {"m": 10, "n": 10}, "seed": 42},
                                 algorithm="apd", schedule={"variant": "bounded_det"},
                                 N=1000 if quick else 10_000, capture={"cadence": 1, "gap": True},
                                 name="det-bounded")]
    if suite == "det-unbounded":
        return [ExperimentConfig(problem={"generator": "unbounded_quad",
                                          "params": {"n": 20, "m": 20, "L_G": 10.0, "L_K": 1.0}, "seed": 1},
                                 algorithm="apd", schedule={"variant": "unbounded_det"}, N=N,
                                 capture={"cadence": max(1, N // 20), "certificate": True, "dist": True},
                                 name=f"det-unbounded-N{N}") for N in ((50,) if quick else (50, 200))]
    if suite == "stoch-bounded":
        return [ExperimentConfig(problem={"generator": "matrix_game", "params": {"m": 10, "n": 10}, "seed": 42},
                                 algorithm="stochastic_apd", schedule={"variant": "bounded_stoch"},
                                 N=200 if quick else 1000, replications=20 if quick else 100,
                                 noise={"model": "bounded_uniform", "sigma_x": 0.5, "sigma_y": 0.5},
                                 capture={"cadence": 10 ** 9, "gap": True}, lambdas=[1.0, 2.0, 4.0],
                                 name="stoch-bounded")]
    if suite == "stoch-unbounded":
        return [ExperimentConfig(problem={"generator": "unbounded_quad",
                                          "params": {"n": 20, "m": 20, "L_G": 10.0, "L_K": 1.0}, "seed": 1},
                                 algorithm="stochastic_apd",
                                 schedule={"variant": "unbounded_stoch", "constants": {"D_tilde": 1.0}},
                                 N=200, replications=10 if quick else 50,
                                 noise={"model": "gaussian", "sigma_x": 0.1, "sigma_y": 0.1, "disclose": True},
                                 capture={"cadence": 10 ** 9, "certificate": True}, name="stoch-unbounded")]
    if suite == "baseline-compare":
        N = 200 if quick else 1000
        prob = {"generator": "quad_bilinear", "params": {"n": 10, "m": 10, "L_G": 1e4, "L_K": 1.0}, "seed": 3}
        return [
            ExperimentConfig(problem=prob, algorithm="apd",
                             schedule={"variant": "bounded_det", "constants": {"D_X": 1.0, "D_Y": 1.0}},
                             N=N, capture={"cadence": max(1, N // 10), "gap": True}, name="apd"),
            ExperimentConfig(problem=prob, algorithm="pd_linearized",
                             schedule=baseline_schedule_spec(1e4, 1.0, N),
                             N=N, capture={"cadence": max(1, N // 10), "gap": True}, name="pd_linearized"),
        ]
    raise ConfigError(f"unknown suite {suite!r}; choose from {SUITES}")


def baseline_schedule_spec(L_G, L_K, N):
    """Constant steps eta = 1/(L_G + L_K) (primal), tau = 1/L_K (dual), theta = 1."""
    eta, tau = 1.0 / (L_G + L_K), 1.0 / L_K
    return {"variant": "custom", "mode": "baseline", "beta": [1.0] * (N + 1),
            "theta": [1.0] * (N + 1), "eta": [eta] * (N + 1), "tau": [tau] * (N + 1)}


def run_suite(suite, quick=False, out_dir=None):
    results = []
    for cfg in suite_configs(suite, quick):
        sub = None if out_dir is None else os.path.join(out_dir, cfg.name)
        results.append(run_experiment(cfg, sub))
    summary = {"suite": suite, "quick": quick,
               "experiments": [r.summary for r in results]}
    if suite == "baseline-compare":
        g_apd = results[0].summary["final"]["gap"][0]
        g_pd = results[1].summary["final"]["gap"][0]
        ratio = g_pd / g_apd if g_apd > 0 else math.inf
        summary["checks"] = [{"name": "baseline gap / APD gap >= 5", "value": ratio, "limit": 5.0,
                              "pass": ratio >= 5.0}]
    code = max(r.exit_code for r in results)
    if code == 0 and any(not c["pass"] for c in summary.get("checks", [])):
        code = 1
    summary["pass"] = code == 0
    if out_dir is not None:
        atomic_write(os.path.join(out_dir, "suite.json"),
                     json.dumps(summary, sort_keys=True, indent=2, default=_json_default))
    return summary, code
