import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from convexmarket.errors import DimensionError
from convexmarket.payoffs import PairBetPayoff
from convexmarket.regions import (
    BallRegion,
    BandRegion,
    GomRegion,
    HalfspaceTrimmedSimplex,
    PolyhedralRegion,
    SimplexRegion,
    project_simplex,
    region_from_dict,
)

REGIONS = [
    SimplexRegion(3),
    SimplexRegion(5),
    BallRegion(3),
    BandRegion(3, 0.5),
    GomRegion(4),
    GomRegion(5),
    HalfspaceTrimmedSimplex(3, ((1.0, 0.0, 0.0), (0.0, 1.0, 1.0)), (0.8, 0.7)),
]


def sample_members(region, rng, count):
    return [region.project(rng.normal(0.5, 1.5, region.dimension)) for _ in range(count)]


# contains ---------------------------------------------------------------------

def test_contains_examples():
    assert SimplexRegion(2).contains([0.5, 0.5])
    assert not GomRegion(3).contains([1.0, 0.0, 1.0])  # x12 = 1, x13 = 0, x23 = 1
    assert BallRegion(3).contains([2.0, 1.0, 1.0])


def test_contains_rejects_dimension_mismatch():
    with pytest.raises(DimensionError):
        SimplexRegion(3).contains([0.5, 0.5])
    with pytest.raises(DimensionError):
        GomRegion(3).contains(np.zeros(4))


def test_contains_tolerance():
    x = np.array([0.5, 0.5 + 5e-10])
    assert SimplexRegion(2).contains(x, 1e-9)
    assert not SimplexRegion(2).contains(x, 1e-10)
    band = BandRegion(2, 0.5)
    assert band.contains([0.75, 0.75])
    assert not band.contains([1.0, 0.6])
    assert not band.contains([0.4, 0.4])


# projection -------------------------------------------------------------------

def test_projection_examples():
    np.testing.assert_allclose(SimplexRegion(2).project([0.75, 0.75]), [0.5, 0.5], atol=1e-12)
    np.testing.assert_allclose(BallRegion(3).project([3.0, 1.0, 1.0]), [2.0, 1.0, 1.0], atol=1e-12)


@pytest.mark.parametrize("region", REGIONS, ids=lambda r: type(r).__name__ + str(r.dimension))
def test_projection_is_member_and_idempotent(region, rng):
    for _ in range(40):
        y = rng.normal(0.5, 2.0, region.dimension)
        x = region.project(y)
        assert region.contains(x, 1e-9)
        np.testing.assert_allclose(region.project(x), x, atol=1e-9)


@pytest.mark.parametrize("region", REGIONS, ids=lambda r: type(r).__name__ + str(r.dimension))
def test_projection_optimality(region, rng):
    members = sample_members(region, rng, 30)
    for _ in range(30):
        y = rng.normal(0.5, 2.0, region.dimension)
        d = np.linalg.norm(region.project(y) - y)
        for z in members:
            assert d <= np.linalg.norm(z - y) + 1e-7


@pytest.mark.parametrize("region", REGIONS, ids=lambda r: type(r).__name__ + str(r.dimension))
def test_projection_variational_inequality(region, rng):
    # (y - x) . (z - x) <= 0 for every member z characterizes the projection x
    members = sample_members(region, rng, 30)
    for _ in range(20):
        y = rng.normal(0.5, 2.0, region.dimension)
        x = region.project(y)
        for z in members:
            assert (y - x) @ (z - x) <= 1e-8


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=7), st.floats(0.1, 3.0))
def test_simplex_projection_sums_to_radius(y, radius):
    x = project_simplex(np.asarray(y), radius)
    assert np.all(x >= 0)
    assert abs(x.sum() - radius) < 1e-9


@pytest.mark.parametrize("region", [SimplexRegion(4), BandRegion(4, 0.7)])
def test_closed_form_projection_matches_dykstra(region, rng):
    for _ in range(30):
        y = rng.normal(0.3, 1.5, region.dimension)
        generic, _ = PolyhedralRegion.project_with_info(region, y)
        np.testing.assert_allclose(region.project(y), generic, atol=1e-8)


def test_dykstra_regression_correction_terms():
    # the iterate returns to the same point after one sweep while the
    # correction terms are still moving; convergence must not be declared
    t = HalfspaceTrimmedSimplex(2, ((1.0, 0.0),), (0.8,))
    np.testing.assert_allclose(t.project([-0.68, -1.49]), [0.8, 0.2], atol=1e-10)


def test_gom_projection_reports_polish(rng):
    g = GomRegion(8)
    polished = 0
    for _ in range(20):
        x, info = g.project_with_info(rng.normal(0.5, 1.0, g.dimension))
        assert info["converged"]
        assert g.violation(x) <= 1e-9
        polished += info["polished"]
    assert polished >= 15


# linear maximization ----------------------------------------------------------

def test_linear_maximize_examples():
    np.testing.assert_allclose(SimplexRegion(3).linear_maximize([1.0, 0.0, 0.0]), [1, 0, 0])
    np.testing.assert_allclose(BallRegion(3).linear_maximize([1.0, 0.0, 0.0]), [2, 1, 1])
    np.testing.assert_allclose(GomRegion(3).linear_maximize([1.0, 2.0, 0.5]), [1, 1, 1], atol=1e-12)


@pytest.mark.parametrize("region", REGIONS, ids=lambda r: type(r).__name__ + str(r.dimension))
def test_linear_maximize_dominates_members(region, rng):
    members = sample_members(region, rng, 40)
    for _ in range(10):
        c = rng.normal(size=region.dimension)
        v = region.linear_maximize(c)
        assert region.contains(v, 1e-9)
        assert all(c @ v >= c @ z - 1e-9 for z in members)


def test_band_linear_maximize_uses_lower_face_for_negative_objective():
    np.testing.assert_allclose(BandRegion(3, 0.5).linear_maximize([-1.0, -2.0, -3.0]), [1, 0, 0])


# diameter ---------------------------------------------------------------------

@pytest.mark.parametrize("region", REGIONS, ids=lambda r: type(r).__name__ + str(r.dimension))
def test_diameter_bounds_sampled_distances(region, rng):
    pts = sample_members(region, rng, 60)
    pts += [region.linear_maximize(rng.normal(size=region.dimension)) for _ in range(20)]
    dmax = max(np.linalg.norm(a - b) for a, b in itertools.combinations(pts, 2))
    assert dmax <= region.diameter + 1e-9


def test_diameter_values():
    assert SimplexRegion(4).diameter == pytest.approx(math.sqrt(2))
    assert BallRegion(3).diameter == 2.0
    assert GomRegion(5).diameter == pytest.approx(math.sqrt(10))
    assert BandRegion(3, 0.5).diameter == pytest.approx(math.sqrt(2) * 1.5)
    assert BandRegion(8, 0.5).diameter == pytest.approx(math.sqrt(2) * 1.5)


def test_gom_diameter_attained_by_order_matrices():
    g = GomRegion(4)
    P = PairBetPayoff(4).payoff_matrix()
    d = max(np.linalg.norm(a - b) for a, b in itertools.combinations(P, 2))
    assert d == pytest.approx(g.diameter)


# GOM structure ----------------------------------------------------------------

@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_order_matrices_lie_in_gom(n):
    g = GomRegion(n)
    for row in PairBetPayoff(n).payoff_matrix():
        assert g.contains(row, 0.0)


def test_gom_vertices_are_order_matrices_small_n(rng):
    g = GomRegion(4)
    perms = {tuple(r) for r in PairBetPayoff(4).payoff_matrix()}
    for _ in range(200):
        v = g.linear_maximize(rng.normal(size=g.dimension))
        assert tuple(np.round(v, 9)) in perms


def test_gom_constraint_count():
    g = GomRegion(6)
    assert g.dimension == 15
    assert g.constraints.n_rows == math.comb(6, 3)


# trimmed simplex --------------------------------------------------------------

def test_trimmed_simplex_excludes_vertex():
    t = HalfspaceTrimmedSimplex(2, ((1.0, 0.0),), (0.8,))
    assert not t.contains([1.0, 0.0])
    assert t.distance([1.0, 0.0]) == pytest.approx(0.2 * math.sqrt(2), abs=1e-12)
    assert t.contains(t.interior_point())


def test_trimmed_simplex_rejects_empty():
    with pytest.raises(Exception):
        HalfspaceTrimmedSimplex(2, ((1.0, 1.0),), (0.5,))


def test_region_round_trip():
    for r in REGIONS:
        assert region_from_dict(r.to_dict()) == r


def test_regions_are_immutable():
    r = SimplexRegion(3)
    with pytest.raises(Exception):
        r.n = 4
