"""F quantiles and the small symmetric-matrix kernels the criteria need."""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import betainc, ndtri

# relative pivot below which a PSD matrix is treated as singular
SINGULAR_PIVOT = 1e-12


class SingularMatrixError(np.linalg.LinAlgError):
    """Raised when an information matrix is singular to working precision."""


def _paulson_guess(df1: int, df2: int, level: float) -> float:
    # Wilson-Hilferty cube-root normal approximation for F (Paulson's form)
    z = ndtri(level)
    a = 2.0 / (9.0 * df1)
    b = 2.0 / (9.0 * df2)
    qa = (1 - b) ** 2 - z * z * b
    qb = -2 * (1 - a) * (1 - b)
    qc = (1 - a) ** 2 - z * z * a
    disc = qb * qb - 4 * qa * qc
    if qa <= 0 or disc < 0:
        return 1.0
    roots = [(-qb + s * math.sqrt(disc)) / (2 * qa) for s in (1, -1)]
    # pick the root on the side of the median implied by z
    x = max(roots) if z >= 0 else min(roots)
    return x**3 if x > 0 else 1.0


@lru_cache(maxsize=4096)
def f_quantile(df1: int, df2: int, level: float) -> float:
    """Quantile of the F(df1, df2) distribution at probability ``level``.

    Inverts the regularized incomplete beta function by bisection on
    y = df2 / (df2 + df1 F), where the upper tail is I_y(df2/2, df1/2).
    Working in y keeps full relative precision for large quantiles.
    df2 = 0 returns +inf (no pure-error degrees of freedom).
    """
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    if df1 < 1:
        raise ValueError("df1 must be >= 1")
    if df2 < 0:
        raise ValueError("df2 must be >= 0")
    if df2 == 0:
        return math.inf
    tail = 1.0 - level
    a, b = df2 / 2.0, df1 / 2.0

    def upper(y):
        return betainc(a, b, y)

    def y_of(f):
        return df2 / (df2 + df1 * f)

    # bracket around the approximation; upper(y) increases with y
    guess = _paulson_guess(df1, df2, level)
    lo_f, hi_f = guess / 2.0, guess * 2.0
    while upper(y_of(hi_f)) > tail:
        hi_f *= 4.0
    while upper(y_of(lo_f)) < tail:
        lo_f /= 4.0
    lo, hi = y_of(hi_f), y_of(lo_f)
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if upper(mid) < tail:
            lo = mid
        else:
            hi = mid
    y = 0.5 * (lo + hi)
    return float(df2 * (1.0 - y) / (df1 * y))


def check_symmetric(m: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("matrix must be square")
    scale = max(np.max(np.abs(m)), 1.0)
    if np.max(np.abs(m - m.T)) > rtol * scale:
        raise ValueError("matrix is not symmetric")
    return m


def cholesky(m: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor; SingularMatrixError when a pivot is tiny."""
    m = check_symmetric(m)
    try:
        low = np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        raise SingularMatrixError("matrix is not positive definite") from None
    piv = np.diag(low) ** 2
    if piv.size and piv.min() <= SINGULAR_PIVOT * piv.max():
        raise SingularMatrixError("matrix is singular to working precision")
    return low


def logdet_psd(m: np.ndarray) -> float:
    """log |m| for symmetric PSD m; -inf when singular."""
    try:
        low = cholesky(m)
    except SingularMatrixError:
        return -math.inf
    return float(2.0 * np.sum(np.log(np.diag(low))))


def cho_solve(low: np.ndarray, b: np.ndarray) -> np.ndarray:
    y = solve_triangular(low, b, lower=True)
    return solve_triangular(low.T, y, lower=False)


def trace_prod_inv(a: np.ndarray, m: np.ndarray) -> float:
    """trace(m a^-1) via a Cholesky solve.  Raises SingularMatrixError."""
    low = cholesky(a)
    return float(np.trace(cho_solve(low, np.asarray(m, dtype=float))))
