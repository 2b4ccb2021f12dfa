import csv
import io
import math

import numpy as np
import pytest

from bulkedge.currents import (
    FULL,
    HALF,
    DecayProfile,
    bloch_profile,
    conservation_families,
    conservation_sum,
    continuity_residuals,
    crossing_table,
    current_coefficients,
    current_field,
    current_terms,
    divergence_residual,
    edge_current,
    segment_hits_edge,
    theta_bound,
    upper_edge_current,
)
from bulkedge.fock import ThermoParams
from bulkedge.free import FreeGibbs, one_body
from bulkedge.geometry import DualEdge, Site, SiteSet, box, rectangle
from bulkedge.model import DensityInteraction, DensityTerm, HoppingMap, ModelSpec, hofstadter, spinless_tv
from bulkedge.operators import magnetic_derivative_terms, mode_index


def range_two(region, b, V=0.0):
    disp = {}
    for d in [(1, 0), (0, 1), (2, 0), (0, 2)]:
        disp[d] = 1.0
        disp[(-d[0], -d[1])] = 1.0
    for d in [(1, 1), (1, -1)]:
        disp[d] = 0.5
        disp[(-d[0], -d[1])] = 0.5
    templates = ()
    if V:
        templates = (DensityTerm((((0, 0), 0), ((1, 0), 0)), V),
                     DensityTerm((((0, 0), 0), ((0, 1), 0)), V))
    return ModelSpec(region, HoppingMap(1, 2, disp), bulk_interaction=DensityInteraction(templates),
                     b=b, D=2).validate()


def test_nearest_neighbour_crossing():
    spec = hofstadter(2, 0.3)
    c = current_coefficients(spec, DualEdge(1, Site(0, 2)))
    assert c.pairs() == {((1, 2), (0, 2)), ((0, 2), (1, 2))}
    for x, y, w, sign in c.entries:
        assert w == FULL
        assert sign == np.sign(x[0] - y[0])


def test_diagonal_hop_through_dual_vertex():
    z = (0, 1)
    x, y = (z[0], z[1] + 1), (z[0] + 1, z[1])
    assert segment_hits_edge(x, y, DualEdge(1, Site(0, 1))) == HALF
    assert segment_hits_edge(x, y, DualEdge(1, Site(0, 2))) == HALF
    assert segment_hits_edge(x, y, DualEdge(1, Site(0, 0))) == 0
    # the same hop crosses the horizontal dual line too
    assert segment_hits_edge(x, y, DualEdge(2, Site(0, 1))) == HALF
    assert segment_hits_edge(x, y, DualEdge(2, Site(1, 1))) == HALF


def test_range_two_horizontal_hop_in_two_lists():
    spec = range_two(rectangle((0, 2), (0, 3)), 0.4)
    x, y = Site(0, 0), Site(2, 0)
    hits = []
    for m in range(-1, 3):
        c = current_coefficients(spec, DualEdge(1, Site(m, 0)))
        hits += [(m, w) for a, b_, w, _ in c.entries if {a, b_} == {x, y}]
    # two edges, both directions of the hop, full weight
    assert sorted(hits) == [(0, FULL), (0, FULL), (1, FULL), (1, FULL)]
    assert sum(w for _, w in hits) / 2 == 2


def test_crossing_table_matches_direct_enumeration():
    spec = range_two(rectangle((-1, 2), (0, 3)), 0.4)
    table = crossing_table(spec)
    for k in (1, 2):
        for z1 in range(-2, 3):
            for z2 in range(-1, 4):
                e = DualEdge(k, Site(z1, z2))
                direct = sorted(current_coefficients(spec, e).entries)
                assert sorted(table.get(e, [])) == direct


def test_current_operator_hermitian():
    spec = range_two(rectangle((0, 2), (0, 3)), 0.7)
    for e in [DualEdge(1, Site(0, 1)), DualEdge(2, Site(1, 1)), DualEdge(1, Site(1, 2))]:
        c = current_coefficients(spec, e)
        keyed = {(x, y): (w, s) for x, y, w, s in c.entries}
        for (x, y), (w, s) in keyed.items():
            assert keyed[(y, x)] == (w, -s)
        m = current_terms(spec, e).one_body_matrix()
        assert np.abs(m - m.conj().T).max() < 1e-15


def test_zero_field_gives_zero_currents():
    spec = hofstadter(3, 0.0)
    f = current_field(spec, FreeGibbs(one_body(spec), ThermoParams(1.0, 0.3)))
    assert max(abs(v) for v in f.values.values()) < 1e-14


def test_reversed_field_reverses_currents(flux):
    params = ThermoParams(1.0, 0.3)
    a = current_field(hofstadter(3, flux), FreeGibbs.from_spec(hofstadter(3, flux), params))
    b = current_field(hofstadter(3, -flux), FreeGibbs.from_spec(hofstadter(3, -flux), params))
    assert max(abs(a.values[e] + b.values[e]) for e in a.values) < 1e-13
    assert max(abs(v) for v in a.values.values()) > 1e-3


def test_continuity_corner_and_centre(flux):
    spec = spinless_tv(1, flux, 1.0)
    res = continuity_residuals(spec)
    assert len(res) == 9
    assert max(res.values()) <= 1e-12
    assert divergence_residual(spec, (-1, 0)) <= 1e-12
    with pytest.raises(ValueError):
        divergence_residual(spec, (5, 5))


def test_continuity_range_two_with_interaction(flux):
    spec = range_two(rectangle((0, 2), (0, 3)), flux, V=0.6)
    res = continuity_residuals(spec, sites=[(0, 0), (1, 1), (2, 3), (1, 2)])
    assert max(res.values()) <= 1e-12


def test_conservation_examples(flux):
    L = 4
    spec = hofstadter(L, flux)
    f = current_field(spec, FreeGibbs.from_spec(spec, ThermoParams(1.0, 0.3)))
    assert abs(conservation_sum(f, SiteSet.custom([(0, 3)]))) < 1e-13
    worst = {}
    for fam, _, Z in conservation_families(L):
        worst[fam] = max(worst.get(fam, 0.0), abs(conservation_sum(f, Z)))
    assert set(worst) == {"a", "b", "c"}
    assert max(worst.values()) < 1e-13


def test_edge_current_range_and_top_line(flux):
    L = 5
    spec = hofstadter(L, flux)
    f = current_field(spec, FreeGibbs.from_spec(spec, ThermoParams(1.0, 0.3)))
    for d in (0, L + 1):
        with pytest.raises(ValueError):
            edge_current(f, d)
    # the full column carries no net current
    total = edge_current(f, L) + upper_edge_current(f, L) + f[(1, (0, L))]
    assert abs(total) < 1e-13
    assert abs(edge_current(f, L)) > 1e-3
    with pytest.raises(ValueError):
        edge_current(current_field(spec.replace(region=rectangle((0, 2), (0, 2))),
                                   FreeGibbs.from_spec(spec.replace(region=rectangle((0, 2), (0, 2))),
                                                       ThermoParams(1.0, 0.0))), 1)


def test_profile_and_theta_bound():
    zero = DecayProfile(np.array([1, 2, 3]), np.zeros(3))
    assert theta_bound(zero, 10, 1, 1) == 0.0

    q = 0.5
    r = np.arange(1, 40)
    prof = DecayProfile(r, q ** r)
    L, R, D = 20, 1, 1
    C = prof.shellmax.max()
    z = lambda n: q ** max(n, 1) / C  # noqa: E731
    brute = min(2 * d * d / L + sum(z(n) for n in range(d - R - D, 40)) for d in range(R + D, L + 1))
    assert theta_bound(prof, L, R, D) == pytest.approx(2 * C * brute, rel=1e-12)
    assert theta_bound(prof, L, R, D, zeta=lambda n: q ** n) == pytest.approx(
        2 * C * min(2 * d * d / L + sum(q ** n for n in range(d - 2, 40)) for d in range(2, L + 1)),
        rel=1e-12)
    values = [theta_bound(prof, L, R, D) for L in (10, 20, 40, 80)]
    assert all(a >= b for a, b in zip(values, values[1:]))


def test_bloch_profile_shells(flux):
    spec = hofstadter(6, flux)
    f = current_field(spec, FreeGibbs.from_spec(spec, ThermoParams(1.0, 0.3)))
    prof = bloch_profile(f)
    assert prof.r[0] == 1
    shells = f.shell_distances()
    for r, m in prof.as_rows():
        assert m == max(abs(f.values[e]) for e in f.values if shells[e] == r)
    assert prof.slope < 0


def test_csv_export_order(flux):
    spec = hofstadter(2, flux)
    f = current_field(spec, FreeGibbs.from_spec(spec, ThermoParams(1.0, 0.3)))
    rows = list(csv.reader(io.StringIO(f.to_csv())))
    assert rows[0] == ["k", "z1", "z2", "j", "shell_distance"]
    keys = [(int(a), int(b), int(c)) for a, b, c, _, _ in rows[1:]]
    assert keys == sorted(keys)
    assert len(keys) == 2 * 5 * 4
    for k, z1, z2, j, _ in rows[1:]:
        assert float(j) == f[(int(k), (int(z1), int(z2)))]


def test_magnetic_derivative_is_row_weighted_current_sum(flux):
    for spec in (hofstadter(2, flux), range_two(rectangle((0, 2), (0, 3)), flux)):
        modes = mode_index(spec)
        hp = magnetic_derivative_terms(spec, modes).one_body_matrix()
        acc = np.zeros_like(hp)
        for e in crossing_table(spec):
            if e.k == 1:
                acc += e.z.x2 * current_terms(spec, e, modes).one_body_matrix()
        assert np.abs(hp - acc).max() <= 1e-10
        h = 1e-6
        fd = (one_body(spec.with_field(flux + h)) - one_body(spec.with_field(flux - h))) / (2 * h)
        assert np.abs(fd - hp).max() <= 1e-8
