import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rsmdesign.model import (
    Design,
    ModelSpec,
    Term,
    candidate_set,
    canonical,
    central_composite,
    df_accounting,
    expand,
    model_matrix,
    points_in,
    read_design,
    snap_to_sphere,
    write_design,
)
from rsmdesign.region import Region


@pytest.mark.parametrize("q", range(1, 7))
def test_parameter_count(q):
    assert ModelSpec.full_quadratic(q).p == 1 + 2 * q + q * (q - 1) // 2


def test_term_order_and_labels():
    labels = ModelSpec.full_quadratic(3).labels
    assert labels == ["1", "x1", "x2", "x3", "x1^2", "x2^2", "x3^2", "x1*x2", "x1*x3", "x2*x3"]


def test_expand_matches_hand_expansion():
    m = ModelSpec.full_quadratic(2)
    assert np.allclose(expand(m, [2.0, 3.0]), [1, 2, 3, 4, 9, 6])
    many = expand(m, [[2.0, 3.0], [0.0, -1.0]])
    assert many.shape == (2, 6)
    assert np.allclose(many[1], [1, 0, -1, 0, 1, 0])


def test_expand_rejects_wrong_width():
    with pytest.raises(ValueError):
        expand(ModelSpec.full_quadratic(3), [1.0, 2.0])


def test_invalid_terms():
    with pytest.raises(ValueError):
        ModelSpec(2, (Term("linear", 0),))
    with pytest.raises(ValueError):
        ModelSpec(2, (Term("intercept"), Term("interaction", 1, 0)))


def test_design_is_read_only():
    d = Design([[0.0, 1.0], [1.0, 1.0]])
    with pytest.raises(ValueError):
        d.points[0, 0] = 5.0


def test_design_rejects_nan():
    with pytest.raises(ValueError):
        Design([[0.0, math.nan]])


def test_canonical_folds_negative_zero():
    assert np.array_equal(canonical(np.array([[-0.0, 1e-13]])), np.array([[0.0, 0.0]]))
    assert str(canonical(np.array([-0.0]))[0]) == "0.0"


def test_df_accounting_counts_replicates():
    m = ModelSpec.full_quadratic(1)
    d = Design([[-1.0], [0.0], [0.0], [1.0], [1.0], [1.0]])
    assert df_accounting(d, m) == (3, 0)


def test_negative_lack_of_fit_reported():
    m = ModelSpec.full_quadratic(2)
    d = Design([[0.0, 0.0]] * 7)
    assert df_accounting(d, m) == (6, -5)


@pytest.mark.parametrize("q", [1, 2, 3, 4])
def test_candidate_set_size_and_radius(q):
    cube = candidate_set(q, Region.cube(q))
    assert len(cube) == 3**q
    sph = candidate_set(q, Region.sphere(q))
    norms = np.linalg.norm(sph.points, axis=1)
    assert np.sum(norms == 0) == 1
    assert np.allclose(norms[norms > 0], math.sqrt(q))


def test_candidate_set_rejects_mismatched_region():
    with pytest.raises(ValueError):
        candidate_set(3, Region.cube(2))


def test_snap_to_sphere():
    rho = math.sqrt(5)
    pts = snap_to_sphere([[1.12, -1.12, 1.12, 1.12, 0], [1.58, 0, 0, 0, -1.58], [0.5, 0, 0, 0, 0]], rho)
    assert np.allclose(pts[0], [rho / 2, -rho / 2, rho / 2, rho / 2, 0], atol=0)
    assert pts[1, 0] == rho / math.sqrt(2)
    assert pts[2, 0] == 0.5  # not on the grid, left as is


def test_central_composite_shapes():
    d3 = central_composite(3, 4)
    assert d3.n == 8 + 6 + 4
    assert np.allclose(np.sort(np.linalg.norm(d3.points, axis=1))[-14:], math.sqrt(3))
    d5 = central_composite(5, 4)
    assert d5.n == 16 + 10 + 4
    fact = d5.points[:16]
    assert np.array_equal(fact[:, 4], np.prod(fact[:, :4], axis=1))


def test_central_composite_full_factorial_on_request():
    assert central_composite(5, 0, half_fraction=False).n == 32 + 10


def test_design_csv_roundtrip():
    d = central_composite(3, 2)
    text = write_design(d, comments=["a comment"])
    assert text.startswith("# a comment\nx1,x2,x3\n")
    back = read_design(io.StringIO(text))
    assert np.allclose(back.points, d.points, rtol=0, atol=1e-9)
    # ten significant digits are restored exactly by snapping onto the sphere
    exact = read_design(io.StringIO(text), region=Region.sphere(3))
    assert np.array_equal(exact.points, d.points)


def test_read_design_errors():
    with pytest.raises(ValueError):
        read_design(io.StringIO("a,b\n1,2\n"))
    with pytest.raises(ValueError):
        read_design(io.StringIO("x1,x2\n1\n"))
    with pytest.raises(ValueError):
        read_design(io.StringIO("# only a comment\n"))


def test_read_design_snaps_on_sphere(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("x1,x2,x3,x4,x5\n1.29,1.29,0,0,-1.29\n0,0,0,0,0\n")
    region = Region.sphere(5, math.sqrt(5))
    snapped = read_design(path, region=region)
    assert math.isclose(np.linalg.norm(snapped.points[0]), math.sqrt(5), rel_tol=1e-15)
    raw = read_design(path, region=region, snap=False)
    assert raw.points[0, 0] == 1.29
    assert snapped.name == "d"


def test_points_in_candidate_set():
    cands = candidate_set(2, Region.cube(2))
    assert points_in(Design([[1.0, -1.0], [0.0, 0.0]]), cands)
    assert not points_in(Design([[0.5, 0.0]]), cands)
    with pytest.raises(ValueError):
        cands.index_of(Design([[0.5, 0.0]]))


grid_points = st.lists(
    st.tuples(*[st.sampled_from([-1.0, 0.0, 1.0])] * 2), min_size=1, max_size=15
)


@settings(max_examples=60, deadline=None)
@given(grid_points)
def test_df_identity(points):
    d = Design(np.array(points))
    m = ModelSpec.full_quadratic(2)
    pe, lof = df_accounting(d, m)
    assert pe >= 0
    assert pe + lof == d.n - m.p
    assert pe + d.distinct_count() == d.n


@settings(max_examples=40, deadline=None)
@given(grid_points, st.randoms(use_true_random=False))
def test_distinct_count_permutation_invariant(points, rnd):
    shuffled = list(points)
    rnd.shuffle(shuffled)
    assert Design(np.array(points)).distinct_count() == Design(np.array(shuffled)).distinct_count()


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(*[st.floats(-2, 2)] * 3), min_size=1, max_size=8))
def test_model_matrix_rows_are_expansions(points):
    m = ModelSpec.full_quadratic(3)
    d = Design(np.array(points))
    x = model_matrix(m, d)
    for row, pt in zip(x, points):
        assert np.allclose(row, expand(m, np.array(pt)))
