"""Design regions and their moment matrices.

All moments are normalised by the region measure, so the (intercept,
intercept) entry of every moment matrix is 1.  Closed forms are exact
rationals for the cube and products of double factorials for spheres:

    cube [-1, 1]^q       E[prod x_i^k_i] = prod 1/(k_i + 1)             (all k_i even)
    sphere surface, a    E[prod x_i^k_i] = a^K prod (k_i-1)!! / (q (q+2) ... (q+K-2))
    solid ball, rho      sphere-surface moment at rho times q / (q + K)

Odd moments vanish by symmetry.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

from .model import ModelSpec, format_value

CUBE = "cube"
SPHERE = "sphere"
VOLUME = "volume"
SURFACE = "surface"

# QMC points used for the cube volume fraction beyond the inscribed ball
VOLUME_QMC_POINTS = 2**20
VOLUME_QMC_SEED = 20170401


@dataclass(frozen=True)
class Region:
    """Cube [-1, 1]^q or a sphere of radius ``rho`` centred at the origin.

    ``measure`` picks how criteria average over a sphere: ``"surface"``
    (uniform on the sphere of radius rho) or ``"volume"`` (uniform in the
    solid ball).  It is ignored for cubes.
    """

    kind: str
    q: int
    rho: float = 1.0
    measure: str = VOLUME

    def __post_init__(self):
        if self.kind not in (CUBE, SPHERE):
            raise ValueError(f"unknown region kind {self.kind!r}")
        if self.q < 1:
            raise ValueError("q must be >= 1")
        if self.kind == SPHERE and not self.rho > 0:
            raise ValueError("sphere radius must be positive")
        if self.measure not in (VOLUME, SURFACE):
            raise ValueError(f"unknown measure {self.measure!r}")
        if self.kind == CUBE:
            object.__setattr__(self, "rho", 1.0)
            object.__setattr__(self, "measure", VOLUME)

    @classmethod
    def cube(cls, q: int) -> "Region":
        return cls(CUBE, q)

    @classmethod
    def sphere(cls, q: int, rho: float | None = None, measure: str = SURFACE) -> "Region":
        """Sphere through the factorial corners (rho = sqrt(q)) unless rho is given."""
        return cls(SPHERE, q, math.sqrt(q) if rho is None else float(rho), measure)

    @classmethod
    def ball(cls, q: int, rho: float | None = None) -> "Region":
        return cls.sphere(q, rho, measure=VOLUME)

    @property
    def radius(self) -> float:
        """Distance from the centre to the farthest point of the region."""
        return math.sqrt(self.q) if self.kind == CUBE else self.rho

    def contains(self, points, tol: float = 1e-9) -> np.ndarray:
        x = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind == CUBE:
            return np.all(np.abs(x) <= 1 + tol, axis=1)
        return np.linalg.norm(x, axis=1) <= self.rho + tol


def _double_factorial_odd(k: int) -> int:
    """(k-1)!! for even k >= 0."""
    out = 1
    for m in range(k - 1, 0, -2):
        out *= m
    return out


def _sphere_unit_moment(exps) -> Fraction:
    """E[prod x_i^k_i] for x uniform on the unit sphere in len(exps) dimensions."""
    q = len(exps)
    if any(k % 2 for k in exps):
        return Fraction(0)
    total = sum(exps)
    num = 1
    for k in exps:
        num *= _double_factorial_odd(k)
    den = 1
    for m in range(total // 2):
        den *= q + 2 * m
    return Fraction(num, den)


def monomial_moment(region: Region, exps, surface_radius: float | None = None) -> float:
    """Normalised moment of the monomial prod x_i^exps_i.

    With ``surface_radius`` set, the moment is taken uniformly over the
    sphere of that radius regardless of the region's own measure.
    """
    exps = tuple(int(k) for k in exps)
    if len(exps) != region.q:
        raise ValueError("exponent vector length must equal q")
    if any(k % 2 for k in exps):
        return 0.0
    total = sum(exps)
    if surface_radius is not None:
        return float(_sphere_unit_moment(exps)) * surface_radius**total
    if region.kind == CUBE:
        m = Fraction(1)
        for k in exps:
            m *= Fraction(1, k + 1)
        return float(m)
    base = _sphere_unit_moment(exps)
    if region.measure == VOLUME:
        base *= Fraction(region.q, region.q + total)
    return float(base) * region.rho**total


def _moments_from(model: ModelSpec, moment) -> np.ndarray:
    e = model.exponent_matrix
    p = model.p
    m = np.empty((p, p))
    for a in range(p):
        for b in range(a, p):
            m[a, b] = m[b, a] = moment(e[a] + e[b])
    m.setflags(write=False)
    return m


@lru_cache(maxsize=256)
def moment_matrix(region: Region, model: ModelSpec) -> np.ndarray:
    """Region moment matrix M = E[f(x) f(x)'] under the region's measure."""
    if region.q != model.q:
        raise ValueError(f"region q={region.q} does not match model q={model.q}")
    return _moments_from(model, lambda k: monomial_moment(region, k))


def zero_first(m: np.ndarray) -> np.ndarray:
    out = np.array(m, dtype=float, copy=True)
    out[0, :] = 0.0
    out[:, 0] = 0.0
    out.setflags(write=False)
    return out


@lru_cache(maxsize=256)
def difference_moment_matrix(region: Region, model: ModelSpec) -> np.ndarray:
    """M0: the moment matrix with its first row and column zeroed."""
    return zero_first(moment_matrix(region, model))


def shell_radius(region: Region, r: float) -> float:
    if not 0 <= r <= 1:
        raise ValueError(f"radius fraction {r} outside [0, 1]")
    return r * region.radius


@lru_cache(maxsize=4096)
def shell_moment_matrix(region: Region, model: ModelSpec, r: float) -> np.ndarray:
    """Moments uniform on the sphere of actual radius a = r * rho."""
    if region.kind != SPHERE:
        raise ValueError("shell moments are defined for spherical regions only")
    if r <= 0:
        raise ValueError("radius fraction must be positive")
    if r > 1:
        raise ValueError(f"radius fraction {r} exceeds 1")
    if region.q != model.q:
        raise ValueError(f"region q={region.q} does not match model q={model.q}")
    a = r * region.rho
    return _moments_from(model, lambda k: monomial_moment(region, k, surface_radius=a))


def shell_difference_moment_matrix(region: Region, model: ModelSpec, r: float) -> np.ndarray:
    return zero_first(shell_moment_matrix(region, model, r))


def unit_ball_volume(q: int) -> float:
    return math.pi ** (q / 2) / math.gamma(q / 2 + 1)


@lru_cache(maxsize=16)
def _cube_direction_reach(q: int) -> np.ndarray:
    """Sorted distances to the cube boundary along QMC-uniform directions."""
    # Scrambled Sobol mapped to Gaussian then normalised: uniform directions.
    u = qmc.Sobol(d=q, scramble=True, seed=VOLUME_QMC_SEED).random(VOLUME_QMC_POINTS)
    u = np.clip(u, 1e-16, 1 - 1e-16)
    g = ndtri(u)
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    reach = 1.0 / np.max(np.abs(g), axis=1)
    reach.sort()
    reach.setflags(write=False)
    return reach


def _cube_excess_integral(q: int, a: float) -> float:
    """Mean over directions of min(a, R)^q - 1, for a >= 1 (R >= 1 always)."""
    reach = _cube_direction_reach(q)
    k = np.searchsorted(reach, a)
    inside = reach[:k]
    # directions whose boundary lies before a contribute R^q, the rest a^q
    return (np.sum(inside**q) + (len(reach) - k) * a**q) / len(reach) - 1.0


# the tail series is used where q - a^2 <= this, so it converges geometrically
_TAIL_SPAN = 0.5
_TAIL_TERMS = 120


def _cube_tail(q: int, t: float) -> float:
    """P(sum (1 - u_i^2) < t) for u_i ~ U(0, 1) iid and 0 <= t <= 1.

    1 - u^2 has density 1/(2 sqrt(1 - w)) = sum_k c_k w^k on [0, 1), and the
    simplex integral of prod w_i^k_i is prod k_i! t^(K+q) / (K+q)!, so the
    probability is a power series in t.
    """
    k = np.arange(_TAIL_TERMS)
    log_c = np.array([math.lgamma(2 * j + 1) - 2 * math.lgamma(j + 1) - j * math.log(4) - math.log(2) for j in k])
    b = np.exp(log_c + np.array([math.lgamma(j + 1) for j in k]))  # c_k k!
    a = np.zeros(_TAIL_TERMS)
    a[0] = 1.0
    for _ in range(q):
        a = np.convolve(a, b)[:_TAIL_TERMS]
    logs = np.array([(j + q) * math.log(t) - math.lgamma(j + q + 1) if t > 0 else -math.inf for j in k])
    return float(np.sum(a * np.exp(logs)))


def _cube_fraction_exact(q: int, a: float) -> float | None:
    """Cube volume fraction within distance a, where a closed form or series applies."""
    if a <= 1:
        return unit_ball_volume(q) * a**q / 2**q
    if q == 1:
        return 1.0
    if q == 2:
        a = min(a, math.sqrt(2))
        return (math.pi * a * a - 4 * (a * a * math.acos(1 / a) - math.sqrt(a * a - 1))) / 4
    t = q - a * a
    if t <= _TAIL_SPAN:
        return 1.0 - _cube_tail(q, max(t, 0.0))
    return None


def volume_fraction(region: Region, r: float) -> float:
    """Fraction of the region volume within distance r * radius of the centre.

    Spheres: r^q.  Cube: exact while the ball is inscribed (r sqrt(q) <= 1)
    and near the corners (a power series in q - a^2); in between, the
    increase over the inscribed value is interpolated between those two
    exact anchors using scrambled Sobol directions, which keeps the result
    continuous and strictly increasing.
    """
    if not 0 <= r <= 1:
        raise ValueError(f"radius fraction {r} outside [0, 1]")
    q = region.q
    if region.kind == SPHERE:
        return float(r**q)
    if r == 1:
        return 1.0
    a = r * math.sqrt(q)
    exact = _cube_fraction_exact(q, a)
    if exact is not None:
        return float(exact)
    # vol(ball_a ∩ cube) = (area / q) E[min(a, R)^q] over directions
    a_hi = math.sqrt(q - _TAIL_SPAN)
    lo, hi = _cube_fraction_exact(q, 1.0), 1.0 - _cube_tail(q, _TAIL_SPAN)
    share = _cube_excess_integral(q, a) / _cube_excess_integral(q, a_hi)
    return float(lo + (hi - lo) * share)


def moment_matrix_csv(m: np.ndarray, model: ModelSpec, dest=None) -> str:
    buf = io.StringIO()
    labels = model.labels
    buf.write("term," + ",".join(labels) + "\n")
    for lab, row in zip(labels, np.asarray(m)):
        buf.write(lab + "," + ",".join(format_value(v) for v in row) + "\n")
    text = buf.getvalue()
    if dest is not None:
        if isinstance(dest, (str, Path)):
            Path(dest).write_text(text)
        else:
            dest.write(text)
    return text
