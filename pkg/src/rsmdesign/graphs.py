"""Plot data for prediction-variance diagnostics.

VDG / DVDG: min, mean and max of the (difference) prediction variance on
spheres of growing radius.  FDS / DFDS: sorted variances at points drawn
uniformly from the region, against the fraction of the region.

Variances are f(x)' (X'X)^-1 f(x) in units of sigma^2; the difference
variants use f(x) - f(0).  Plotting itself is left to external tools.
"""
from __future__ import annotations

import hashlib
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import Design, ModelSpec, df_accounting, expand, format_value, model_matrix, write_design
from .numerics import SingularMatrixError, cho_solve, cholesky, f_quantile
from .region import CUBE, SPHERE, Region, shell_difference_moment_matrix, shell_moment_matrix, volume_fraction

VDG, DVDG, FDS, DFDS = "VDG", "DVDG", "FDS", "DFDS"
VARIANTS = (VDG, DVDG, FDS, DFDS)
VARIANCE, SE = "variance", "se"
DISTANCE, VOLUME_FRACTION = "distance", "volume"

# cube shells need at least this many accepted points per radius
MIN_SHELL_POINTS = 1000
# rejection rounds on a cube shell before falling back to projection
_MAX_REJECTION_ROUNDS = 20
_FDS_BLOCK = 10_000


class ContractError(ValueError):
    """A graph was requested that the design cannot support (e.g. interval with d = 0)."""


@dataclass(frozen=True)
class GraphConfig:
    variant: str = VDG
    scale: str = VARIANCE
    interval: float | None = None  # alpha of the F(1, d; 1 - alpha) multiplier
    axis: str = DISTANCE
    n_radii: int = 101
    n_samples: int = 100_000  # FDS sample size N
    shell_samples: int = 10_000  # per radius, for VDG min/max
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "variant", self.variant.upper())
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown graph variant {self.variant!r}")
        if self.scale not in (VARIANCE, SE):
            raise ValueError(f"scale must be {VARIANCE!r} or {SE!r}")
        if self.axis not in (DISTANCE, VOLUME_FRACTION):
            raise ValueError(f"axis must be {DISTANCE!r} or {VOLUME_FRACTION!r}")
        if self.interval is not None and not 0 < self.interval < 1:
            raise ValueError("interval alpha must lie in (0, 1)")
        if self.n_radii < 2 or self.n_samples < 1 or self.shell_samples < 1:
            raise ValueError("n_radii must be >= 2 and sample sizes >= 1")

    @property
    def difference(self) -> bool:
        return self.variant in (DVDG, DFDS)


@dataclass
class GraphSeries:
    """Rows of (x, min, mean, max) or (fraction, value), plus metadata.

    ``mean`` is NaN where it is not computed (cube regions).
    """

    columns: tuple[str, ...]
    data: np.ndarray
    metadata: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return self.data[:, self.columns.index(name)]

    def __len__(self):
        return self.data.shape[0]

    def to_csv(self, dest=None) -> str:
        buf = io.StringIO()
        for key, v in self.metadata.items():
            buf.write(f"# {key}: {v}\n")
        buf.write(",".join(self.columns) + "\n")
        for row in self.data:
            buf.write(",".join("" if math.isnan(v) else format_value(v) for v in row) + "\n")
        text = buf.getvalue()
        if dest is not None:
            if isinstance(dest, (str, Path)):
                Path(dest).write_text(text)
            else:
                dest.write(text)
        return text


def information_inverse(design: Design, model: ModelSpec) -> np.ndarray:
    """(X'X)^-1, symmetrised.  Raises SingularMatrixError."""
    x = model_matrix(model, design)
    low = cholesky(x.T @ x)
    inv = cho_solve(low, np.eye(model.p))
    return 0.5 * (inv + inv.T)


def _quad_form(f: np.ndarray, ainv: np.ndarray) -> np.ndarray:
    return np.einsum("ij,jk,ik->i", f, ainv, f)


def prediction_variance(design: Design, model: ModelSpec, points, ainv=None) -> np.ndarray:
    """f(x)' (X'X)^-1 f(x) at each row of ``points``."""
    ainv = information_inverse(design, model) if ainv is None else ainv
    f = expand(model, np.atleast_2d(points)).reshape(-1, model.p)
    return _quad_form(f, ainv)


def difference_variance(design: Design, model: ModelSpec, points, ainv=None) -> np.ndarray:
    """(f(x) - f(0))' (X'X)^-1 (f(x) - f(0)); exactly 0 at the centre."""
    ainv = information_inverse(design, model) if ainv is None else ainv
    f = expand(model, np.atleast_2d(points)).reshape(-1, model.p)
    f0 = expand(model, np.zeros(model.q))
    return _quad_form(f - f0, ainv)


def _rng(seed: int, unit: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(unit,)))


def _directions(rng: np.random.Generator, n: int, q: int) -> np.ndarray:
    g = rng.standard_normal((n, q))
    norm = np.linalg.norm(g, axis=1, keepdims=True)
    norm[norm == 0] = 1.0
    return g / norm


def _project_to_cube_shell(u: np.ndarray, a: float) -> np.ndarray:
    """Map unit directions to points of the cube at distance a from the centre.

    Scales each direction by t and clips to [-1, 1]^q, choosing t by
    bisection so that the clipped point has norm a.  Needs a <= sqrt(q).
    """
    lo = np.zeros(len(u))
    # past a / min|u_i| every coordinate is clipped and the norm is sqrt(q) >= a
    hi = a / np.maximum(np.min(np.abs(u), axis=1), 1e-12)
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        big = np.linalg.norm(np.clip(u * mid[:, None], -1, 1), axis=1) > a
        hi = np.where(big, mid, hi)
        lo = np.where(big, lo, mid)
    return np.clip(u * (0.5 * (lo + hi))[:, None], -1, 1)


def shell_points(region: Region, r: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Seeded points on the sphere of radius r * region.radius within the region."""
    q = region.q
    a = r * region.radius
    if a == 0:
        return np.zeros((1, q))
    if region.kind == SPHERE or a <= 1:
        return _directions(rng, n, q) * a
    # the shell leaves the cube: rejection first, projection to top up
    want = max(n, MIN_SHELL_POINTS)
    kept = []
    total = 0
    for _ in range(_MAX_REJECTION_ROUNDS):
        x = _directions(rng, want, q) * a
        x = x[np.all(np.abs(x) <= 1.0, axis=1)]
        kept.append(x)
        total += len(x)
        if total >= want:
            break
    pts = np.vstack(kept)[:want]
    if len(pts) < MIN_SHELL_POINTS:
        extra = _project_to_cube_shell(_directions(rng, MIN_SHELL_POINTS - len(pts), q), a)
        pts = np.vstack([pts, extra])
    return pts


def region_points(region: Region, n: int, rng: np.random.Generator) -> np.ndarray:
    """Points uniform in the region volume (cube or solid ball)."""
    q = region.q
    if region.kind == CUBE:
        return rng.uniform(-1.0, 1.0, size=(n, q))
    u = _directions(rng, n, q)
    rad = region.rho * rng.uniform(size=n) ** (1.0 / q)
    return u * rad[:, None]


def _design_hash(design: Design) -> str:
    return hashlib.sha256(write_design(design).encode()).hexdigest()[:16]


def _prepare(design: Design, model: ModelSpec, cfg: GraphConfig):
    try:
        ainv = information_inverse(design, model)
    except SingularMatrixError:
        raise SingularMatrixError("X'X is singular; prediction variances are unbounded") from None
    d, _ = df_accounting(design, model)
    factor = None
    if cfg.interval is not None:
        if d == 0:
            raise ContractError("interval graphs need pure-error degrees of freedom, but the design has d = 0")
        factor = f_quantile(1, d, 1.0 - cfg.interval)
    return ainv, d, factor


def _transform(v: np.ndarray, cfg: GraphConfig, factor: float | None) -> np.ndarray:
    # applied column-wise as v * F or sqrt(v) * sqrt(F), so interval = point x multiplier exactly
    v = np.asarray(v, dtype=float)
    if cfg.scale == SE:
        v = np.sqrt(np.maximum(v, 0.0))
        if factor is not None:
            v = v * math.sqrt(factor)
    elif factor is not None:
        v = v * factor
    return v


def _metadata(design, cfg: GraphConfig, region: Region, d: int) -> dict:
    return {
        "variant": cfg.variant,
        "scale": cfg.scale,
        "interval_alpha": "none" if cfg.interval is None else format_value(cfg.interval),
        "axis": cfg.axis,
        "region": f"{region.kind} q={region.q} radius={format_value(region.radius)}",
        "pe_df": d,
        "seed": cfg.seed,
        "design_sha256": _design_hash(design),
    }


def _dispersion(design: Design, model: ModelSpec, region: Region, cfg: GraphConfig, difference: bool) -> GraphSeries:
    ainv, d, factor = _prepare(design, model, cfg)
    radii = np.linspace(0.0, 1.0, cfg.n_radii)
    f0 = expand(model, np.zeros(model.q))
    rows = []
    for k, r in enumerate(radii):
        if r == 0:
            v0 = 0.0 if difference else float(ainv[0, 0])
            rows.append((v0, v0 if region.kind == SPHERE else math.nan, v0))
            continue
        pts = shell_points(region, float(r), cfg.shell_samples, _rng(cfg.seed, k))
        f = expand(model, pts).reshape(-1, model.p)
        v = _quad_form(f - f0 if difference else f, ainv)
        lo, hi = float(v.min()), float(v.max())
        if region.kind == SPHERE:
            m = shell_difference_moment_matrix if difference else shell_moment_matrix
            mean = float(np.sum(m(region, model, float(r)) * ainv))
            # the mean is exact, the sampled extrema are not
            lo, hi = min(lo, mean), max(hi, mean)
        else:
            mean = math.nan
        rows.append((lo, mean, hi))
    vals = np.array(rows)
    out = np.column_stack([_transform(vals[:, j], cfg, factor) for j in range(3)])
    if cfg.axis == VOLUME_FRACTION:
        x = np.array([volume_fraction(region, float(r)) for r in radii])
    else:
        x = radii * region.radius
    meta = _metadata(design, cfg, region, d)
    meta["n_radii"] = cfg.n_radii
    meta["shell_samples"] = cfg.shell_samples
    return GraphSeries(("x", "min", "mean", "max"), np.column_stack([x, out]), meta)


def _fraction_plot(design: Design, model: ModelSpec, region: Region, cfg: GraphConfig, difference: bool) -> GraphSeries:
    ainv, d, factor = _prepare(design, model, cfg)
    n = cfg.n_samples
    f0 = expand(model, np.zeros(model.q))
    parts = []
    for block, start in enumerate(range(0, n, _FDS_BLOCK)):
        size = min(_FDS_BLOCK, n - start)
        pts = region_points(region, size, _rng(cfg.seed, block))
        f = expand(model, pts).reshape(-1, model.p)
        parts.append(_quad_form(f - f0 if difference else f, ainv))
    v = np.sort(np.concatenate(parts))
    frac = np.arange(1, n + 1) / (n + 1)
    meta = _metadata(design, cfg, region, d)
    meta["n_samples"] = n
    return GraphSeries(("fraction", "value"), np.column_stack([frac, _transform(v, cfg, factor)]), meta)


def vdg(design: Design, model: ModelSpec, region: Region, cfg: GraphConfig) -> GraphSeries:
    """Variance dispersion graph: min/mean/max of f'(X'X)^-1 f per radius.

    The mean is exact (shell moment matrix) on spheres and omitted on cubes.
    """
    return _dispersion(design, model, region, cfg, difference=False)


def dvdg(design: Design, model: ModelSpec, region: Region, cfg: GraphConfig) -> GraphSeries:
    return _dispersion(design, model, region, cfg, difference=True)


def fds(design: Design, model: ModelSpec, region: Region, cfg: GraphConfig) -> GraphSeries:
    """Fraction of design space plot: (j/(N+1), v_(j)) for N uniform points."""
    return _fraction_plot(design, model, region, cfg, difference=False)


def dfds(design: Design, model: ModelSpec, region: Region, cfg: GraphConfig) -> GraphSeries:
    return _fraction_plot(design, model, region, cfg, difference=True)


def graph(design: Design, model: ModelSpec, region: Region, cfg: GraphConfig) -> GraphSeries:
    return {VDG: vdg, DVDG: dvdg, FDS: fds, DFDS: dfds}[cfg.variant](design, model, region, cfg)
