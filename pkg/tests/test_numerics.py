import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rsmdesign.numerics import SingularMatrixError, cholesky, f_quantile, logdet_psd, trace_prod_inv

import oracles


def mp_f_quantile(df1, df2, level):
    """F quantile by root finding on mpmath's regularised incomplete beta at 40 digits."""
    mpmath.mp.dps = 40
    a, b = mpmath.mpf(df1) / 2, mpmath.mpf(df2) / 2

    def cdf(f):
        x = df1 * f / (df1 * f + df2)
        return mpmath.betainc(a, b, 0, x, regularized=True) - level

    guess = mpmath.mpf(oracles.f_quantile_from_t(df2, level)) if df1 == 1 else mpmath.mpf(2)
    return float(mpmath.findroot(cdf, guess, tol=1e-35))


@pytest.mark.parametrize(
    "df1,df2,level",
    [(1, 1, 0.95), (1, 3, 0.99), (1, 12, 0.95), (9, 4, 0.95), (20, 9, 0.95), (20, 1, 0.9), (5, 30, 0.99), (2, 2, 0.5)],
)
def test_f_quantile_against_mpmath(df1, df2, level):
    assert f_quantile(df1, df2, level) == pytest.approx(mp_f_quantile(df1, df2, level), rel=1e-11)


def test_known_value():
    assert f_quantile(1, 12, 0.95) == pytest.approx(4.747225, abs=1e-5)


def test_zero_df_is_infinite():
    assert f_quantile(3, 0, 0.95) == math.inf


@pytest.mark.parametrize("args", [(1, 5, 0.0), (1, 5, 1.0), (0, 5, 0.5), (1, -1, 0.5)])
def test_f_quantile_domain(args):
    with pytest.raises(ValueError):
        f_quantile(*args)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 25), st.integers(1, 40), st.floats(0.5, 0.995), st.floats(0.5, 0.995))
def test_f_quantile_monotone_in_level(df1, df2, l1, l2):
    lo, hi = sorted((l1, l2))
    assert f_quantile(df1, df2, lo) <= f_quantile(df1, df2, hi)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 60), st.sampled_from([0.8, 0.9, 0.95, 0.975, 0.99]))
def test_f_one_df_is_squared_t(df2, level):
    assert f_quantile(1, df2, level) == pytest.approx(oracles.f_quantile_from_t(df2, level), rel=1e-8)


def test_cholesky_detects_singularity():
    a = np.array([[1.0, 1.0], [1.0, 1.0]])
    with pytest.raises(SingularMatrixError):
        cholesky(a)
    assert logdet_psd(a) == -math.inf


def test_cholesky_rejects_asymmetric():
    with pytest.raises(ValueError):
        cholesky(np.array([[1.0, 0.5], [0.0, 1.0]]))


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 8), st.integers(0, 10_000))
def test_logdet_and_trace_against_numpy(p, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((p + 5, p))
    a = x.T @ x
    m = rng.standard_normal((p, p))
    m = m @ m.T
    assert logdet_psd(a) == pytest.approx(np.linalg.slogdet(a)[1], rel=1e-9, abs=1e-9)
    assert trace_prod_inv(a, m) == pytest.approx(np.trace(m @ np.linalg.inv(a)), rel=1e-8)
