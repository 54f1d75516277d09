import math

import numpy as np
import pytest
from scipy import stats

from rsmdesign.criteria import CriterionConfig, compound_value, id_value
from rsmdesign.data import example1_designs, example1_model, example1_region
from rsmdesign.model import Design, ModelSpec, candidate_set, central_composite
from rsmdesign.optimizer import InfeasibleSearchError, SearchConfig, exchange_search, verify_optimal
from rsmdesign.region import Region

import oracles


def test_finds_known_id_optimum_value():
    model, region = example1_model(), example1_region()
    cfg = SearchConfig(26, candidate_set(3, region), CriterionConfig.single("ID"), starts=30, seed=4)
    res = exchange_search(cfg)
    assert res.value.value == pytest.approx(id_value(example1_designs()[6], model, region), rel=1e-6)


def test_exhaustive_oracle_with_pure_error_criterion():
    # (DP)_S on q=2, n=8: every multiset of 8 from the 9 grid points
    region = Region.cube(2)
    cands = candidate_set(2, region)

    def dps(points):
        d = oracles.pure_error_df(points)
        if d == 0:
            return 0.0
        return oracles.brute_ds(points) / stats.f.ppf(0.95, 5, d)

    best, _ = oracles.exhaustive_best(cands.points, 8, dps)
    res = exchange_search(SearchConfig(8, cands, CriterionConfig.single("DPS"), starts=50, seed=8))
    assert res.value.value == pytest.approx(best, rel=1e-9)


def test_saturated_forced_start_is_returned_unchanged():
    region = Region.cube(1)
    cands = candidate_set(1, region)
    forced = Design(cands.points[::-1])
    cfg = SearchConfig(3, cands, CriterionConfig.single("DS"), starts=1, max_passes=0, initial=forced)
    res = exchange_search(cfg)
    assert np.array_equal(res.best.points, forced.points)
    assert res.history[0].passes == 0


def test_perturbed_ccd_is_improved_upon():
    region = Region.sphere(3)
    ccd = central_composite(3, 4)
    pts = np.array(ccd.points)
    pts[8] = [1.0, 1.0, 1.0]  # an axial run moved onto a factorial corner
    bad = Design(pts)
    cfg = SearchConfig(18, candidate_set(3, region), CriterionConfig.single("ID"), starts=30, seed=2)
    rep = verify_optimal(bad, cfg)
    assert rep.improved and rep.gap > 0
    assert rep.verdict == "improved upon"


@pytest.mark.parametrize("n", range(28, 33))
def test_four_factor_ccd_not_improved_upon(n):
    region = Region.sphere(4)
    ccd = central_composite(4, n - 24)
    cfg = SearchConfig(n, candidate_set(4, region), CriterionConfig.single("ID"), starts=100, seed=5)
    rep = verify_optimal(ccd, cfg)
    assert rep.verdict == "not improved upon", rep.gap


def test_four_factor_ccd_28_runs_counterexample_is_real():
    # on the projected candidate set a 28-run design beats the 4-centre CCD;
    # confirm with brute-force algebra against a quasi-MC surface moment matrix
    region = Region.sphere(4)
    model = ModelSpec.full_quadratic(4)
    cfg = SearchConfig(28, candidate_set(4, region), CriterionConfig.single("ID"), starts=100, seed=5)
    best = exchange_search(cfg).best
    m = oracles.mc_moment_matrices({"s": oracles.shell_sampler(4, 2.0)}, 4, 0, total=2**20)["s"]
    w = np.ones(model.p)
    ccd_ref = oracles.brute_criteria(central_composite(4, 4).points, m, w)["ID"]
    best_ref = oracles.brute_criteria(best.points, m, w)["ID"]
    assert ccd_ref == pytest.approx(1.2, rel=1e-6)
    assert best_ref > ccd_ref * 1.005


def test_history_is_monotone_and_points_are_candidates():
    region = example1_region()
    cands = candidate_set(3, region)
    cfg = SearchConfig(26, cands, CriterionConfig.from_mapping({"k1": 0.5, "k7": 0.5}), starts=10, seed=11)
    res = exchange_search(cfg)
    for rec in res.history:
        assert all(b >= a for a, b in zip(rec.trace, rec.trace[1:]))
        if rec.defined:
            assert math.log(rec.value) == pytest.approx(rec.trace[-1])
    assert max(r.value for r in res.history) == pytest.approx(res.value.value)
    idx = cands.index_of(res.best)
    assert np.array_equal(cands.points[idx], res.best.points)
    assert res.value.value == compound_value(res.best, cfg.model, region, cfg.criterion).value


def test_deterministic_and_worker_independent():
    cands = candidate_set(3, Region.cube(3))
    cfg = SearchConfig(14, cands, CriterionConfig.single("IP"), starts=6, seed=99)
    a = exchange_search(cfg, workers=1)
    b = exchange_search(cfg, workers=1)
    c = exchange_search(cfg, workers=2)
    for other in (b, c):
        assert np.array_equal(a.best.points, other.best.points)
        assert a.value.value == other.value.value
        assert [h.trace for h in a.history] == [h.trace for h in other.history]
        assert a.evaluations == other.evaluations


def test_seed_changes_starts():
    cands = candidate_set(2, Region.cube(2))
    a = exchange_search(SearchConfig(9, cands, CriterionConfig.single("I"), starts=3, seed=1))
    b = exchange_search(SearchConfig(9, cands, CriterionConfig.single("I"), starts=3, seed=2))
    assert [h.trace[0] for h in a.history] != [h.trace[0] for h in b.history]


def test_repairs_starts_without_pure_error():
    # random starts often have d = 0; the search must still reach a defined design
    cands = candidate_set(3, Region.cube(3))
    cfg = SearchConfig(12, cands, CriterionConfig.single("IDP"), starts=5, seed=0)
    res = exchange_search(cfg)
    assert res.value.defined and res.value.components["d"] >= 1
    assert all(rec.defined for rec in res.history)


def test_too_few_runs_is_infeasible():
    cands = candidate_set(3, Region.cube(3))
    with pytest.raises(InfeasibleSearchError):
        exchange_search(SearchConfig(9, cands, CriterionConfig.single("DS")))


def test_pure_error_needs_more_runs_than_parameters():
    # n = p leaves no room for a replicate: every nonsingular design has d = 0
    cands = candidate_set(2, Region.cube(2))
    with pytest.raises(InfeasibleSearchError):
        exchange_search(SearchConfig(6, cands, CriterionConfig.single("DPS"), starts=5))


def test_config_validation():
    cands = candidate_set(2, Region.cube(2))
    crit = CriterionConfig.single("DS")
    with pytest.raises(ValueError):
        SearchConfig(6, cands, crit, starts=0)
    with pytest.raises(ValueError):
        SearchConfig(6, cands, crit, max_passes=-1)
    with pytest.raises(ValueError):
        SearchConfig(6, cands, crit, initial=Design([[0.0, 0.0]]))
