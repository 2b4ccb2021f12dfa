import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bulkedge.geometry import (
    Complement,
    DualEdge,
    Site,
    SiteSet,
    ball,
    box,
    centered_box,
    distance,
    dual_edge_boundary,
    five_region_masks,
    random_connected_region,
    rectangle,
    set_distance,
    vertical_edges,
)

coord = st.integers(-20, 20)
sites = st.tuples(coord, coord)


def test_distance_examples():
    assert distance((0, 0), (0, 0)) == 0
    assert distance((1, 2), (-1, 5)) == 5
    assert distance((3, 0), (0, 4)) == 7


@given(sites, sites, sites)
def test_distance_is_a_metric(a, b, c):
    assert distance(a, b) >= 0
    assert distance(a, b) == distance(b, a)
    assert distance(a, c) <= distance(a, b) + distance(b, c)
    assert (distance(a, b) == 0) == (a == b)


def test_site_equality():
    assert Site(1, 2) == Site(1, 2)
    assert Site(1, 2) != Site(2, 1)


@pytest.mark.parametrize("L", [0, 1, 3, 6])
def test_box_sizes(L):
    assert len(box(L)) == (2 * L + 1) ** 2
    assert len(centered_box(L)) == (2 * L + 1) ** 2
    assert box(L).bounds() == (-L, L, 0, 2 * L)
    assert centered_box(L).bounds() == (-L, L, -L, L)


def test_membership_is_order_independent():
    a = SiteSet.custom([(0, 0), (1, 0), (0, 1)])
    b = SiteSet.custom([(0, 1), (0, 0), (1, 0)])
    assert a == b
    assert (1, 0) in a and (1, 1) not in a
    assert a.members == b.members


def test_set_distance_examples():
    X = SiteSet.custom([(0, 0)])
    assert set_distance(X, SiteSet.custom([(0, 3)])) == 3
    assert set_distance(X, SiteSet.custom([(0, 0), (4, 4)])) == 0
    assert set_distance(SiteSet.custom([(0, 2)]), Complement(box(2))) == 3
    assert set_distance(X, SiteSet.custom([])) == math.inf
    with pytest.raises(ValueError):
        set_distance(SiteSet.custom([]), X)


def test_complement_distance_matches_exhaustive_search():
    region = box(2)
    ring = [Site(i, j) for i in range(-5, 6) for j in range(-3, 8) if Site(i, j) not in region]
    for x in region:
        expected = min(distance(x, y) for y in ring)
        assert set_distance(SiteSet.custom([x]), Complement(region)) == expected


def test_ball():
    assert len(ball((0, 0), 0)) == 1
    assert len(ball((0, 0), 2)) == 13
    clipped = ball((0, 0), 2, within=box(2))
    assert all(x.x2 >= 0 for x in clipped)
    assert len(clipped) == 9


def test_boundary_of_interior_site():
    z = Site(0, 2)
    got = dual_edge_boundary(SiteSet.custom([z]), box(2))
    assert sorted(got) == sorted([
        (DualEdge(1, z), -1), (DualEdge(1, Site(-1, 2)), 1),
        (DualEdge(2, z), -1), (DualEdge(2, Site(0, 1)), 1),
    ])


def test_boundary_of_ambient_is_empty():
    assert dual_edge_boundary(box(2), box(2)) == []


def test_boundary_of_half_box_is_one_column():
    L = 3
    Z = SiteSet.custom(x for x in box(L) if x.x1 >= 0)
    got = dual_edge_boundary(Z, box(L))
    assert got == [(DualEdge(1, Site(-1, n)), 1) for n in range(2 * L + 1)]
    Zr = SiteSet.custom(x for x in box(L) if x.x1 >= 1)
    assert dual_edge_boundary(Zr, box(L)) == [(DualEdge(1, Site(0, n)), 1) for n in range(2 * L + 1)]
    Zl = SiteSet.custom(x for x in box(L) if x.x1 <= 0)
    assert dual_edge_boundary(Zl, box(L)) == [(DualEdge(1, Site(0, n)), -1) for n in range(2 * L + 1)]


def test_boundary_requires_subset():
    with pytest.raises(ValueError):
        dual_edge_boundary(SiteSet.custom([(10, 10)]), box(1))


def test_boundary_complement_flips_signs():
    rng = np.random.default_rng(3)
    amb = box(3)
    for _ in range(20):
        Z = random_connected_region(amb, int(rng.integers(1, 30)), rng)
        a = dual_edge_boundary(Z, amb)
        b = dual_edge_boundary(amb.difference(Z), amb)
        assert a == [(e, -s) for e, s in b]


def test_random_region_is_connected_and_seeded():
    amb = box(4)
    r1 = random_connected_region(amb, 25, np.random.default_rng(11))
    r2 = random_connected_region(amb, 25, np.random.default_rng(11))
    assert r1 == r2 and len(r1) == 25
    seen, todo = {r1.members[0]}, [r1.members[0]]
    while todo:
        x = todo.pop()
        for k in (1, 2):
            for s in (1, -1):
                y = x.shifted(k, s)
                if y in r1 and y not in seen:
                    seen.add(y)
                    todo.append(y)
    assert len(seen) == 25


def test_doubled_endpoints():
    assert DualEdge(1, Site(0, 0)).doubled_endpoints() == ((1, -1), (1, 1))
    assert DualEdge(2, Site(0, 0)).doubled_endpoints() == ((-1, 1), (1, 1))


def test_five_regions_counts():
    masks = five_region_masks(4, 2)
    assert sum(len(m) for m in masks.values()) == 72
    full = five_region_masks(5, 5)
    assert len(full["left"]) == len(full["right"]) == 5 * 11
    assert not (masks["bulk"].edges & masks["bottom"].edges)


@pytest.mark.parametrize("L,d", [(3, 1), (4, 2), (6, 3), (6, 6)])
def test_five_regions_partition(L, d):
    masks = five_region_masks(L, d)
    seen = [e for m in masks.values() for e in m.edges]
    assert len(seen) == len(set(seen)) == len(vertical_edges(L))


def test_five_regions_range_check():
    with pytest.raises(ValueError):
        five_region_masks(4, 2, R=1, D=1)
    with pytest.raises(ValueError):
        five_region_masks(4, 5)


def test_rectangle_row_major():
    r = rectangle((0, 1), (0, 1))
    assert r.members == (Site(0, 0), Site(1, 0), Site(0, 1), Site(1, 1))
