"""Second-order polynomial models, designs and candidate sets.

Term order is fixed: intercept, linear terms ascending, pure quadratics
ascending, then two-factor interactions in lexicographic order.  Every
matrix produced by this package uses that order.
"""
from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import TYPE_CHECKING, Sequence

import numpy as np

if TYPE_CHECKING:
    from .region import Region

# coordinates are rounded to this many decimals before replicate detection
REPLICATE_DECIMALS = 10
# designs are often printed with sphere coordinates to two decimals
SNAP_TOLERANCE = 0.006


@dataclass(frozen=True)
class Term:
    kind: str  # "intercept" | "linear" | "quadratic" | "interaction"
    i: int = -1
    j: int = -1

    def exponents(self, q: int) -> tuple[int, ...]:
        e = [0] * q
        if self.kind == "linear":
            e[self.i] = 1
        elif self.kind == "quadratic":
            e[self.i] = 2
        elif self.kind == "interaction":
            e[self.i] = 1
            e[self.j] = 1
        return tuple(e)

    @property
    def label(self) -> str:
        if self.kind == "intercept":
            return "1"
        if self.kind == "linear":
            return f"x{self.i + 1}"
        if self.kind == "quadratic":
            return f"x{self.i + 1}^2"
        return f"x{self.i + 1}*x{self.j + 1}"


@dataclass(frozen=True)
class ModelSpec:
    q: int
    terms: tuple[Term, ...]

    def __post_init__(self):
        if self.q < 1:
            raise ValueError("q must be >= 1")
        if not self.terms or self.terms[0].kind != "intercept":
            raise ValueError("model terms must begin with the intercept")
        for t in self.terms:
            if t.kind not in ("intercept", "linear", "quadratic", "interaction"):
                raise ValueError(f"unsupported term kind {t.kind!r}")
            if t.kind != "intercept" and not 0 <= t.i < self.q:
                raise ValueError(f"term {t} out of range for q={self.q}")
            if t.kind == "interaction" and not t.i < t.j < self.q:
                raise ValueError(f"interaction {t} needs i < j < q")

    @classmethod
    def full_quadratic(cls, q: int) -> "ModelSpec":
        terms = [Term("intercept")]
        terms += [Term("linear", i) for i in range(q)]
        terms += [Term("quadratic", i) for i in range(q)]
        terms += [Term("interaction", i, j) for i, j in itertools.combinations(range(q), 2)]
        return cls(q, tuple(terms))

    @classmethod
    def intercept_only(cls, q: int) -> "ModelSpec":
        return cls(q, (Term("intercept"),))

    @property
    def p(self) -> int:
        return len(self.terms)

    @property
    def labels(self) -> list[str]:
        return [t.label for t in self.terms]

    @cached_property
    def exponent_matrix(self) -> np.ndarray:
        """p x q integer matrix of monomial exponents."""
        e = np.array([t.exponents(self.q) for t in self.terms], dtype=int)
        e.setflags(write=False)
        return e

    def is_full_quadratic(self) -> bool:
        return self.terms == ModelSpec.full_quadratic(self.q).terms


def expand(model: ModelSpec, point) -> np.ndarray:
    """Model expansion f(x) of one point (shape (q,)) or many (shape (n, q))."""
    x = np.asarray(point, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != model.q:
        raise ValueError(f"point has {x.shape[1]} coordinates, model expects {model.q}")
    cols = []
    for t in model.terms:
        if t.kind == "intercept":
            cols.append(np.ones(x.shape[0]))
        elif t.kind == "linear":
            cols.append(x[:, t.i])
        elif t.kind == "quadratic":
            cols.append(x[:, t.i] * x[:, t.i])
        else:
            cols.append(x[:, t.i] * x[:, t.j])
    f = np.column_stack(cols)
    return f[0] if single else f


@dataclass(frozen=True, eq=False)
class Design:
    """An exact design: n runs in q coded factors."""

    points: np.ndarray
    name: str = ""

    def __post_init__(self):
        pts = np.array(self.points, dtype=float, ndmin=2)
        if pts.ndim != 2:
            raise ValueError("design points must form an n x q array")
        if not np.all(np.isfinite(pts)):
            raise ValueError("design coordinates must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def q(self) -> int:
        return self.points.shape[1]

    def distinct_count(self) -> int:
        return len(np.unique(canonical(self.points), axis=0))

    def __len__(self):
        return self.n

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"<Design{label} n={self.n} q={self.q}>"


def canonical(points: np.ndarray) -> np.ndarray:
    # + 0.0 folds -0.0 into 0.0
    return np.round(np.asarray(points, dtype=float), REPLICATE_DECIMALS) + 0.0


def model_matrix(model: ModelSpec, design: Design) -> np.ndarray:
    return expand(model, design.points).reshape(design.n, model.p)


def model_matrix_no_intercept(model: ModelSpec, design: Design) -> np.ndarray:
    """X0: the model matrix with the intercept column removed."""
    return model_matrix(model, design)[:, 1:]


def centering_matrix(n: int) -> np.ndarray:
    """Q = I - 11'/n."""
    return np.eye(n) - np.full((n, n), 1.0 / n)


def df_accounting(design: Design, model: ModelSpec) -> tuple[int, int]:
    """Pure-error and lack-of-fit degrees of freedom ``(d, lof)``.

    lof is reported as-is and may be negative for designs with fewer
    distinct points than parameters.
    """
    t = design.distinct_count()
    return design.n - t, t - model.p


@dataclass(frozen=True, eq=False)
class CandidateSet:
    points: np.ndarray
    region: "Region"

    def __post_init__(self):
        pts = np.array(self.points, dtype=float, ndmin=2)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.points.shape[0]

    def index_of(self, design: Design) -> np.ndarray:
        """Candidate index of every design point; raises if a point is not a candidate."""
        lookup = {tuple(row): k for k, row in enumerate(canonical(self.points))}
        idx = []
        for row in canonical(design.points):
            try:
                idx.append(lookup[tuple(row)])
            except KeyError:
                raise ValueError(f"design point {tuple(row)} is not in the candidate set") from None
        return np.array(idx, dtype=int)


def candidate_set(q: int, region: "Region") -> CandidateSet:
    """The 3^q grid; for spheres every nonzero point is pushed radially onto the surface."""
    if q < 1:
        raise ValueError("q must be >= 1")
    if region.q != q:
        raise ValueError(f"region has q={region.q}, asked for q={q}")
    grid = np.array(list(itertools.product((-1.0, 0.0, 1.0), repeat=q)))
    if region.kind == "sphere":
        k = np.count_nonzero(grid, axis=1)
        scale = np.zeros(len(grid))
        scale[k > 0] = region.rho / np.sqrt(k[k > 0])
        grid = grid * scale[:, None] + 0.0
    return CandidateSet(grid, region)


def snap_to_sphere(points, rho: float, tol: float = SNAP_TOLERANCE) -> np.ndarray:
    """Replace rounded sphere coordinates (e.g. 1.12) by exact values rho/sqrt(k).

    A point is snapped only if all its k nonzero coordinates are within ``tol``
    of rho/sqrt(k) in magnitude; anything else is left untouched.
    """
    pts = np.array(points, dtype=float, copy=True)
    for row in pts:
        nz = row != 0
        k = int(nz.sum())
        if k == 0:
            continue
        target = rho / math.sqrt(k)
        if np.all(np.abs(np.abs(row[nz]) - target) <= tol):
            row[nz] = np.sign(row[nz]) * target
    return pts


def central_composite(q: int, n_center: int, rho: float | None = None, half_fraction: bool | None = None) -> Design:
    """Spherical CCD: two-level factorial, axial pairs at distance rho, centre runs.

    The half fraction sets the last factor to the product of the others
    (resolution V for q=5).  By default the half fraction is used for q >= 5.
    """
    if half_fraction is None:
        half_fraction = q >= 5
    if rho is None:
        rho = math.sqrt(q)
    if half_fraction:
        base = np.array(list(itertools.product((-1.0, 1.0), repeat=q - 1)))
        fact = np.column_stack([base, np.prod(base, axis=1)])
    else:
        fact = np.array(list(itertools.product((-1.0, 1.0), repeat=q)))
    axial = []
    for i in range(q):
        for s in (-1.0, 1.0):
            row = np.zeros(q)
            row[i] = s * rho
            axial.append(row)
    pts = np.vstack([fact, np.array(axial), np.zeros((n_center, q))])
    return Design(pts, name=f"ccd_q{q}_c{n_center}")


def read_design(source, region: "Region | None" = None, snap: bool = True, name: str | None = None) -> Design:
    """Read a design CSV (header x1..xq, '#' comment lines allowed).

    When a sphere region is given and ``snap`` is true, coordinates rounded
    for printing are re-derived exactly with :func:`snap_to_sphere`.
    """
    if isinstance(source, (str, Path)):
        path = Path(source)
        text = path.read_text()
        if name is None:
            name = path.stem
    else:
        text = source.read()
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise ValueError("design file is empty")
    reader = csv.reader(lines)
    header = [h.strip() for h in next(reader)]
    if header != [f"x{i + 1}" for i in range(len(header))]:
        raise ValueError(f"bad design header {header!r}; expected x1,...,xq")
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if len(row) != len(header):
            raise ValueError(f"row {lineno} has {len(row)} values, expected {len(header)}")
        rows.append([float(v) for v in row])
    if not rows:
        raise ValueError("design file has no runs")
    pts = np.array(rows)
    if region is not None:
        if region.q != pts.shape[1]:
            raise ValueError(f"design has q={pts.shape[1]} but region has q={region.q}")
        if snap and region.kind == "sphere":
            pts = snap_to_sphere(pts, region.rho)
    return Design(pts, name=name or "")


def format_value(v: float) -> str:
    return f"{v:.10g}"


def write_design(design_or_points, dest=None, comments: Sequence[str] = ()) -> str:
    """Write points as CSV with header x1..xq; returns the text."""
    pts = design_or_points.points if isinstance(design_or_points, (Design, CandidateSet)) else np.asarray(design_or_points)
    buf = io.StringIO()
    for c in comments:
        buf.write(f"# {c}\n")
    buf.write(",".join(f"x{i + 1}" for i in range(pts.shape[1])) + "\n")
    for row in pts:
        buf.write(",".join(format_value(v + 0.0) for v in row) + "\n")
    text = buf.getvalue()
    if dest is not None:
        if isinstance(dest, (str, Path)):
            Path(dest).write_text(text)
        else:
            dest.write(text)
    return text


def points_in(design: Design, candidates: CandidateSet) -> bool:
    try:
        candidates.index_of(design)
    except ValueError:
        return False
    return True

