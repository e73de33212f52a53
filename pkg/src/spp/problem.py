"""Saddle-point problem instances, exact oracles and the stochastic oracle.

The problem is

    min_{x in X} max_{y in Y}  G(x) + <K x, y> - J(y)

with G smooth convex (gradient Lipschitz constant ``L_G``), K linear with
operator norm ``L_K`` and J simple. Only the concrete families needed by
the toolkit are supported: G zero/linear/quadratic, J zero/linear, K a
dense matrix, a diagonal, the identity or a 1-D forward-difference stencil.
"""
from dataclasses import dataclass, field
import json
import math

import numpy as np

from .errors import InfeasibleError, InvalidArgumentError, UnsupportedError
from .rng import COMPONENTS, stream

FEAS_TOL = 1e-9


def _vec(a, dim=None, name="vector"):
    a = np.asarray(a, dtype=float)
    if a.ndim != 1:
        raise InvalidArgumentError(f"{name} must be one-dimensional, got shape {a.shape}")
    if dim is not None and a.shape[0] != dim:
        raise InvalidArgumentError(f"{name} has dimension {a.shape[0]}, expected {dim}")
    return a


# ---------------------------------------------------------------------------
# feasible sets

@dataclass(frozen=True, eq=False)
class SetDescriptor:
    """A closed convex set: ``box``, ``euclidean_ball``, ``simplex`` or ``free``."""

    variant: str
    dim: int
    lower: np.ndarray = None
    upper: np.ndarray = None
    center: np.ndarray = None
    radius: float = None

    def __post_init__(self):
        if self.dim < 1:
            raise InvalidArgumentError("set dimension must be >= 1")
        if self.variant == "box":
            if self.lower is None or self.upper is None:
                raise InvalidArgumentError("box needs lower and upper bounds")
            if np.any(self.lower > self.upper):
                raise InvalidArgumentError("box requires lower <= upper coordinate-wise")
        elif self.variant == "euclidean_ball":
            if self.radius is None or not self.radius > 0:
                raise InvalidArgumentError("ball radius must be > 0")
        elif self.variant not in ("simplex", "free"):
            raise InvalidArgumentError(f"unknown set variant {self.variant!r}")

    @property
    def bounded(self):
        return self.variant != "free"

    def midpoint(self):
        """Default starting point: box midpoint, ball center, uniform simplex point, origin."""
        if self.variant == "box":
            return 0.5 * (self.lower + self.upper)
        if self.variant == "euclidean_ball":
            return self.center.copy()
        if self.variant == "simplex":
            return np.full(self.dim, 1.0 / self.dim)
        return np.zeros(self.dim)

    def violation(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise InvalidArgumentError(f"point has shape {x.shape}, expected ({self.dim},)")
        if self.variant == "box":
            return float(max(0.0, np.max(self.lower - x), np.max(x - self.upper)))
        if self.variant == "euclidean_ball":
            return max(0.0, float(np.linalg.norm(x - self.center)) - self.radius)
        if self.variant == "simplex":
            return float(max(0.0, -np.min(x), abs(np.sum(x) - 1.0)))
        return 0.0

    def contains(self, x, tol=FEAS_TOL):
        return self.violation(x) <= tol

    def support(self, a):
        """Return ``max_{w in set} <a, w>`` (``inf`` when unbounded above)."""
        a = np.asarray(a, dtype=float)
        if self.variant == "box":
            return float(np.sum(np.maximum(a * self.lower, a * self.upper)))
        if self.variant == "euclidean_ball":
            return float(a @ self.center + self.radius * np.linalg.norm(a))
        if self.variant == "simplex":
            return float(np.max(a))
        return 0.0 if not np.any(a) else math.inf

    def to_dict(self):
        d = {"variant": self.variant, "dim": self.dim}
        if self.variant == "box":
            d.update(lower=self.lower.tolist(), upper=self.upper.tolist())
        elif self.variant == "euclidean_ball":
            d.update(center=self.center.tolist(), radius=self.radius)
        return d

    @classmethod
    def from_dict(cls, d):
        v = d["variant"]
        if v == "box":
            return box(d["lower"], d["upper"])
        if v == "euclidean_ball":
            return ball(d["center"], d["radius"])
        if v == "simplex":
            return simplex(d["dim"])
        if v == "free":
            return free(d["dim"])
        raise InvalidArgumentError(f"unknown set variant {v!r}")


def box(lower, upper):
    lower = _vec(lower, name="lower")
    upper = _vec(upper, len(lower), name="upper")
    return SetDescriptor("box", len(lower), lower=lower, upper=upper)


def ball(center, radius):
    center = _vec(center, name="center")
    return SetDescriptor("euclidean_ball", len(center), center=center, radius=float(radius))


def simplex(dim):
    return SetDescriptor("simplex", int(dim))


def free(dim):
    return SetDescriptor("free", int(dim))


# ---------------------------------------------------------------------------
# terms

@dataclass(frozen=True, eq=False)
class SmoothTerm:
    """G(x) = 0.5 x^T H x + <c, x>; ``kind`` is zero, linear or quadratic."""

    kind: str
    dim: int
    hessian: np.ndarray = None
    linear: np.ndarray = None

    def value(self, x):
        v = 0.0
        if self.linear is not None:
            v += float(self.linear @ x)
        if self.hessian is not None:
            v += 0.5 * float(x @ (self.hessian @ x))
        return v

    def grad(self, x):
        g = np.zeros(self.dim) if self.hessian is None else self.hessian @ x
        if self.linear is not None:
            g = g + self.linear
        return g

    def to_dict(self):
        params = {}
        if self.hessian is not None:
            params["hessian"] = self.hessian.tolist()
        if self.linear is not None:
            params["linear"] = self.linear.tolist()
        return {"kind": self.kind, "dim": self.dim, "params": params}

    @classmethod
    def from_dict(cls, d):
        p = d.get("params", {})
        h = np.asarray(p["hessian"], dtype=float) if "hessian" in p else None
        c = np.asarray(p["linear"], dtype=float) if "linear" in p else None
        return cls(d["kind"], int(d["dim"]), hessian=h, linear=c)


def zero_smooth(dim):
    return SmoothTerm("zero", dim)


def linear_smooth(c):
    c = _vec(c, name="c")
    return SmoothTerm("linear", len(c), linear=c)


def quadratic_smooth(hessian, c=None):
    h = np.asarray(hessian, dtype=float)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise InvalidArgumentError("hessian must be square")
    if not np.allclose(h, h.T, atol=1e-12):
        raise InvalidArgumentError("hessian must be symmetric")
    c = None if c is None else _vec(c, h.shape[0], name="c")
    return SmoothTerm("quadratic", h.shape[0], hessian=h, linear=c)


@dataclass(frozen=True, eq=False)
class SimpleTerm:
    """J(y) = <b, y> (``linear``/``indicator_linear``) or 0 (``zero``).

    ``indicator_linear`` adds the indicator of the problem's Y set, which the
    prox maps already enforce, so it evaluates like ``linear`` on Y.
    """

    kind: str
    dim: int
    linear: np.ndarray = None

    def __post_init__(self):
        if self.kind not in ("zero", "linear", "indicator_linear"):
            raise InvalidArgumentError(f"unknown simple term {self.kind!r}")

    def value(self, y):
        return 0.0 if self.linear is None else float(self.linear @ y)

    def to_dict(self):
        params = {} if self.linear is None else {"linear": self.linear.tolist()}
        return {"kind": self.kind, "dim": self.dim, "params": params}

    @classmethod
    def from_dict(cls, d):
        p = d.get("params", {})
        b = np.asarray(p["linear"], dtype=float) if "linear" in p else None
        return cls(d["kind"], int(d["dim"]), linear=b)


def zero_simple(dim):
    return SimpleTerm("zero", dim)


def linear_simple(b, indicator=False):
    b = _vec(b, name="b")
    return SimpleTerm("indicator_linear" if indicator else "linear", len(b), linear=b)


@dataclass(frozen=True, eq=False)
class Coupling:
    """Linear operator K: R^n -> R^m.

    ``dense`` stores a matrix, ``diagonal`` a vector (square), ``identity``
    nothing, ``gradient1d`` is the (n-1) x n forward-difference stencil.
    """

    kind: str
    shape: tuple
    matrix: np.ndarray = None
    diag: np.ndarray = None

    def apply(self, x):
        if self.kind == "dense":
            return self.matrix @ x
        if self.kind == "diagonal":
            return self.diag * x
        if self.kind == "identity":
            return x.copy()
        return x[1:] - x[:-1]

    def adjoint(self, y):
        if self.kind == "dense":
            return self.matrix.T @ y
        if self.kind == "diagonal":
            return self.diag * y
        if self.kind == "identity":
            return y.copy()
        out = np.zeros(self.shape[1])
        out[1:] += y
        out[:-1] -= y
        return out

    def to_dense(self):
        if self.kind == "dense":
            return self.matrix.copy()
        if self.kind == "diagonal":
            return np.diag(self.diag)
        if self.kind == "identity":
            return np.eye(self.shape[0])
        return np.array([self.apply(e) for e in np.eye(self.shape[1])]).T

    def to_dict(self):
        d = {"kind": self.kind, "shape": list(self.shape)}
        if self.kind == "dense":
            d["matrix"] = self.matrix.tolist()
        elif self.kind == "diagonal":
            d["diag"] = self.diag.tolist()
        return d

    @classmethod
    def from_dict(cls, d):
        k = d["kind"]
        if k == "dense":
            return dense(d["matrix"])
        if k == "diagonal":
            return diagonal(d["diag"])
        if k == "identity":
            return identity(d["shape"][0])
        if k == "gradient1d":
            return gradient1d(d["shape"][1])
        raise InvalidArgumentError(f"unknown coupling kind {k!r}")


def dense(matrix):
    m = np.array(matrix, dtype=float, ndmin=2)
    if m.ndim != 2:
        raise InvalidArgumentError("coupling matrix must be two-dimensional")
    return Coupling("dense", m.shape, matrix=m)


def diagonal(d):
    d = _vec(d, name="diag")
    return Coupling("diagonal", (len(d), len(d)), diag=d)


def identity(n):
    return Coupling("identity", (int(n), int(n)))


def gradient1d(n):
    if n < 2:
        raise InvalidArgumentError("gradient1d needs n >= 2")
    return Coupling("gradient1d", (int(n) - 1, int(n)))


# ---------------------------------------------------------------------------
# the problem

@dataclass(frozen=True, eq=False)
class SaddlePointProblem:
    smooth: SmoothTerm
    coupling: Coupling
    simple: SimpleTerm
    set_x: SetDescriptor
    set_y: SetDescriptor
    L_G: float
    L_K: float
    known_saddle: tuple = None
    name: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        m, n = self.coupling.shape
        if self.set_x.dim != n or self.set_y.dim != m:
            raise InvalidArgumentError(
                f"coupling shape {self.coupling.shape} incompatible with dims "
                f"x={self.set_x.dim}, y={self.set_y.dim}")
        if self.smooth.dim != n or self.simple.dim != m:
            raise InvalidArgumentError("smooth/simple term dimensions do not match the sets")
        if self.L_G < 0 or self.L_K < 0:
            raise InvalidArgumentError("L_G and L_K must be nonnegative")
        if self.known_saddle is not None:
            xs, ys = self.known_saddle
            object.__setattr__(self, "known_saddle", (_vec(xs, n), _vec(ys, m)))

    @property
    def dim_x(self):
        return self.set_x.dim

    @property
    def dim_y(self):
        return self.set_y.dim

    # exact oracles
    def G(self, x):
        return self.smooth.value(x)

    def grad_G(self, x):
        return self.smooth.grad(x)

    def K(self, x):
        return self.coupling.apply(x)

    def KT(self, y):
        return self.coupling.adjoint(y)

    def J(self, y):
        return self.simple.value(y)

    def check_feasible(self, x=None, y=None, tol=FEAS_TOL):
        if x is not None:
            v = self.set_x.violation(x)
            if v > tol:
                raise InfeasibleError("X", v)
        if y is not None:
            v = self.set_y.violation(y)
            if v > tol:
                raise InfeasibleError("Y", v)

    def to_dict(self):
        d = {
            "name": self.name,
            "dims": [self.dim_x, self.dim_y],
            "smooth": dict(self.smooth.to_dict(), L_G=self.L_G),
            "coupling": dict(self.coupling.to_dict(), L_K=self.L_K),
            "simple": self.simple.to_dict(),
            "sets": {"x": self.set_x.to_dict(), "y": self.set_y.to_dict()},
        }
        if self.known_saddle is not None:
            d["known_saddle"] = [self.known_saddle[0].tolist(), self.known_saddle[1].tolist()]
        return d

    @classmethod
    def from_dict(cls, d):
        ks = d.get("known_saddle")
        return cls(
            smooth=SmoothTerm.from_dict(d["smooth"]),
            coupling=Coupling.from_dict(d["coupling"]),
            simple=SimpleTerm.from_dict(d["simple"]),
            set_x=SetDescriptor.from_dict(d["sets"]["x"]),
            set_y=SetDescriptor.from_dict(d["sets"]["y"]),
            L_G=float(d["smooth"]["L_G"]),
            L_K=float(d["coupling"]["L_K"]),
            known_saddle=None if ks is None else (ks[0], ks[1]),
            name=d.get("name", ""),
        )


def problem_to_json(problem, noise=None, seed=None):
    """Serialize a problem (plus optional noise model and seed) to a JSON string.

    Python's float repr is the shortest round-trip representation, so
    ``problem_from_json(problem_to_json(p))`` reproduces every entry exactly.
    """
    d = problem.to_dict()
    d["noise"] = noise
    d["seed"] = seed
    return json.dumps(d, sort_keys=True)


def problem_from_json(text):
    d = json.loads(text)
    return SaddlePointProblem.from_dict(d), d.get("noise"), d.get("seed")


# ---------------------------------------------------------------------------
# operations

def apply_coupling(problem, x):
    x = _vec(x, problem.dim_x, name="x")
    return problem.K(x)


def apply_coupling_adjoint(problem, y):
    y = _vec(y, problem.dim_y, name="y")
    return problem.KT(y)


def eval_Q(problem, z_tilde, z, check=True):
    """Q(z~, z) = [G(x~) + <K x~, y> - J(y)] - [G(x) + <K x, y~> - J(y~)]."""
    xt, yt = z_tilde
    x, y = z
    xt = _vec(xt, problem.dim_x, "x~")
    yt = _vec(yt, problem.dim_y, "y~")
    x = _vec(x, problem.dim_x, "x")
    y = _vec(y, problem.dim_y, "y")
    if check:
        problem.check_feasible(xt, yt)
        problem.check_feasible(x, y)
    first = problem.G(xt) + float(problem.K(xt) @ y) - problem.J(y)
    second = problem.G(x) + float(problem.K(x) @ yt) - problem.J(yt)
    return first - second


def eval_primal(problem, x):
    """f(x) = G(x) + max_{y in Y} <K x, y> - J(y), in closed form per set variant."""
    x = _vec(x, problem.dim_x, "x")
    a = problem.K(x)
    if problem.simple.linear is not None:
        a = a - problem.simple.linear
    inner = problem.set_y.support(a)
    if not math.isfinite(inner):
        raise UnsupportedError("inner maximum over Y is unbounded; f(x) is +inf")
    return problem.G(x) + inner


def estimate_operator_norm(K, iterations=200, seed=0, tol=1e-12):
    """Power iteration on K^T K.

    Returns ``(estimate, converged)``. The estimate is ``||K v||`` for a unit
    vector ``v`` and therefore never exceeds the true spectral norm.
    """
    if iterations < 1:
        raise InvalidArgumentError("iterations must be >= 1")
    if isinstance(K, Coupling):
        fwd, adj, n = K.apply, K.adjoint, K.shape[1]
    else:
        M = np.array(K, dtype=float, ndmin=2)
        fwd, adj, n = (lambda v: M @ v), (lambda w: M.T @ w), M.shape[1]
    v = stream(seed, 0, COMPONENTS["init"]).standard_normal(n)
    v /= np.linalg.norm(v)
    est = float(np.linalg.norm(fwd(v)))
    for _ in range(iterations):
        w = adj(fwd(v))
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return est, True
        v = w / nw
        new = float(np.linalg.norm(fwd(v)))
        if abs(new - est) <= tol * max(new, 1e-300):
            return new, True
        est = new
    return est, False


# ---------------------------------------------------------------------------
# stochastic oracle

@dataclass(frozen=True)
class OracleNoise:
    """Realized noise of one oracle call.

    ``delta_xG`` = G^ - grad G, ``delta_xK`` = K^_y - K^T y and
    ``delta_y`` = -(K^_x - K x).
    """

    delta_xG: np.ndarray
    delta_xK: np.ndarray
    delta_y: np.ndarray

    @property
    def delta_x(self):
        return self.delta_xG + self.delta_xK


@dataclass(frozen=True)
class OracleSample:
    grad_G: np.ndarray
    K_x: np.ndarray
    K_y: np.ndarray
    noise: OracleNoise = None


NOISE_MODELS = ("none", "gaussian", "bounded_uniform")


class StochasticOracle:
    """Unbiased noisy first-order oracle around an exact problem.

    ``gaussian`` adds i.i.d. N(0, s^2/d) per coordinate, so the expected
    squared Euclidean norm of each error equals its budget s^2 exactly.
    ``bounded_uniform`` draws each error uniformly on the sphere of radius
    s: the squared norm equals s^2 surely, which satisfies both the
    second-moment and the light-tail assumption with equality.

    Each error component reads its own sub-stream of ``(seed, replication)``.
    One instance must not be shared between concurrent runs.
    """

    def __init__(self, base, noise_model="none", sigma_xG=0.0, sigma_y=0.0, sigma_xK=0.0,
                 seed=0, disclose_noise=False, replication=0):
        if noise_model not in NOISE_MODELS:
            raise InvalidArgumentError(f"unknown noise model {noise_model!r}")
        if min(sigma_xG, sigma_y, sigma_xK) < 0:
            raise InvalidArgumentError("noise levels must be nonnegative")
        self.base = base
        self.noise_model = noise_model
        self.sigma_xG = float(sigma_xG)
        self.sigma_y = float(sigma_y)
        self.sigma_xK = float(sigma_xK)
        self.seed = int(seed)
        self.replication = int(replication)
        self.disclose_noise = bool(disclose_noise)
        self._streams = {name: stream(seed, replication, COMPONENTS[name])
                         for name in ("grad_G", "K_x", "K_y")}

    @property
    def sigma_x(self):
        return math.hypot(self.sigma_xG, self.sigma_xK)

    def _draw(self, name, dim, sigma):
        rng = self._streams[name]
        if self.noise_model == "gaussian":
            return rng.normal(0.0, sigma / math.sqrt(dim), size=dim)
        z = rng.standard_normal(dim)
        nz = np.linalg.norm(z)
        return z * (sigma / nz) if nz > 0 else np.zeros(dim)

    def draw(self):
        """Consume one oracle call's worth of randomness; ``None`` when noiseless."""
        if self.noise_model == "none":
            return None
        p = self.base
        e_G = self._draw("grad_G", p.dim_x, self.sigma_xG)
        e_Kx = self._draw("K_x", p.dim_y, self.sigma_y)
        e_Ky = self._draw("K_y", p.dim_x, self.sigma_xK)
        return OracleNoise(delta_xG=e_G, delta_xK=e_Ky, delta_y=-e_Kx)

    def sample(self, x, y, x_coupling=None):
        """One oracle call: (G^(x), K^_x(x_coupling or x), K^_y(y)) and optional noise."""
        p = self.base
        x = _vec(x, p.dim_x, "x")
        y = _vec(y, p.dim_y, "y")
        xc = x if x_coupling is None else _vec(x_coupling, p.dim_x, "x_coupling")
        g, kx, ky = p.grad_G(x), p.K(xc), p.KT(y)
        noise = self.draw()
        if noise is not None:
            g = g + noise.delta_xG
            kx = kx - noise.delta_y
            ky = ky + noise.delta_xK
        return OracleSample(g, kx, ky, noise if self.disclose_noise else None)

    def describe(self):
        return {"model": self.noise_model, "sigma_xG": self.sigma_xG, "sigma_y": self.sigma_y,
                "sigma_xK": self.sigma_xK, "disclose": self.disclose_noise}


def sample_oracle(oracle, x, y):
    return oracle.sample(x, y)
