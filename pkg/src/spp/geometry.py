"""Bregman divergences and closed-form prox maps.

Two distance-generating functions are provided:

* ``euclidean``: d(x) = ||x||^2 / 2, V(x, u) = ||x - u||^2 / 2, alpha = 1
  with respect to the l2 norm.
* ``entropy``: d(x) = sum x_i log x_i on the simplex, V = KL(x || u),
  alpha = 1 with respect to the l1 norm (dual norm l-infinity).

The prox map solves

    argmin_{w in S} <g, w> + J(w) + V(w, center) / step

for J zero or linear.
"""
from dataclasses import dataclass
import math

import numpy as np

from .errors import InvalidArgumentError, UnsupportedError

UNBOUNDED = math.inf
SIMPLEX_FLOOR = 1e-12


@dataclass(frozen=True)
class BregmanGeometry:
    variant: str = "euclidean"
    alpha: float = 1.0
    floor: float = SIMPLEX_FLOOR

    def __post_init__(self):
        if self.variant not in ("euclidean", "entropy"):
            raise InvalidArgumentError(f"unknown geometry {self.variant!r}")
        if not self.alpha > 0:
            raise InvalidArgumentError("strong convexity modulus must be positive")

    def d(self, x):
        x = np.asarray(x, dtype=float)
        if self.variant == "euclidean":
            return 0.5 * float(x @ x)
        xs = x[x > 0]
        return float(np.sum(xs * np.log(xs)))

    def grad_d(self, x):
        x = np.asarray(x, dtype=float)
        if self.variant == "euclidean":
            return x.copy()
        return np.log(x) + 1.0

    def norm(self, x):
        return float(np.linalg.norm(x, 2 if self.variant == "euclidean" else 1))

    def dual_norm(self, g):
        return float(np.linalg.norm(g, 2 if self.variant == "euclidean" else np.inf))


EUCLIDEAN = BregmanGeometry("euclidean")
ENTROPY = BregmanGeometry("entropy")


def bregman_div(geometry, x, u):
    """V(x, u) = d(x) - d(u) - <grad d(u), x - u>."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape != u.shape:
        raise InvalidArgumentError("points must have the same shape")
    if geometry.variant == "euclidean":
        diff = x - u
        return 0.5 * float(diff @ diff)
    if np.any(u <= 0):
        raise InvalidArgumentError("entropy divergence needs a strictly positive second argument")
    if np.any(x < 0):
        raise InvalidArgumentError("entropy divergence needs a nonnegative first argument")
    pos = x > 0
    # sum x log(x/u) - sum x + sum u; the last two cancel on the simplex
    return max(0.0, float(np.sum(x[pos] * np.log(x[pos] / u[pos])) - x.sum() + u.sum()))


# ---------------------------------------------------------------------------
# Euclidean projections

def project_simplex(v):
    """Euclidean projection onto the probability simplex (sort-and-threshold)."""
    v = np.asarray(v, dtype=float)
    n = v.shape[0]
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, n + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def project(set_desc, v):
    """Euclidean projection of ``v`` onto ``set_desc``."""
    if set_desc.variant == "free":
        return np.array(v, dtype=float)
    if set_desc.variant == "box":
        return np.clip(v, set_desc.lower, set_desc.upper)
    if set_desc.variant == "euclidean_ball":
        d = v - set_desc.center
        nd = np.linalg.norm(d)
        if nd <= set_desc.radius:
            return np.array(v, dtype=float)
        return set_desc.center + d * (set_desc.radius / nd)
    return project_simplex(v)


def _linear_part(simple_term):
    if simple_term is None or simple_term.kind == "zero":
        return None
    if simple_term.kind in ("linear", "indicator_linear"):
        return simple_term.linear
    raise UnsupportedError(f"no closed-form prox for simple term {simple_term.kind!r}")


def prox_map(geometry, set_desc, linear_term, simple_term, center, step):
    """Closed-form prox step.

    Supported: Euclidean geometry with any set (gradient step then
    projection) and entropy geometry on the simplex (multiplicative weights,
    clipped at the floor and renormalized). J may be zero or linear.
    """
    if not step > 0:
        raise InvalidArgumentError("step must be positive")
    g = np.asarray(linear_term, dtype=float)
    b = _linear_part(simple_term)
    if b is not None:
        g = g + b
    if geometry.variant == "euclidean":
        return project(set_desc, center - step * g)
    if set_desc.variant != "simplex":
        raise UnsupportedError(
            "entropy prox is only available on the simplex; supported closed forms: "
            "(euclidean, any set), (entropy, simplex) with J zero or linear")
    logits = np.log(center) - step * g
    logits -= logits.max()
    w = np.exp(logits)
    w /= w.sum()
    return clip_simplex(w, geometry.floor)


def clip_simplex(w, floor=SIMPLEX_FLOOR):
    if w.min() >= floor:
        return w
    w = np.maximum(w, floor)
    return w / w.sum()


def set_radius(geometry, set_desc):
    """Omega^2 = sup over pairs in the set of V(., .); ``UNBOUNDED`` for free sets.

    Under entropy geometry the supremum is infinite on the closed simplex;
    the value returned, log(1/floor) + log(n), bounds it over the clipped
    simplex the prox map actually produces.
    """
    if set_desc.variant == "free":
        return UNBOUNDED
    if geometry.variant == "entropy":
        if set_desc.variant != "simplex":
            raise UnsupportedError("entropy geometry is only defined on the simplex")
        return math.log(1.0 / geometry.floor) + math.log(set_desc.dim)
    if set_desc.variant == "euclidean_ball":
        return 2.0 * set_desc.radius ** 2
    if set_desc.variant == "box":
        return 0.5 * float(np.sum((set_desc.upper - set_desc.lower) ** 2))
    return 1.0 if set_desc.dim >= 2 else 0.0


def diameter_D(geometry, set_desc):
    """D = Omega * sqrt(2 / alpha)."""
    om2 = set_radius(geometry, set_desc)
    return math.sqrt(2.0 * om2 / geometry.alpha) if math.isfinite(om2) else UNBOUNDED
