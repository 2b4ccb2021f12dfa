import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bulkedge.geometry import Site, SiteSet, ball, box, centered_box, rectangle
from bulkedge.model import (
    DensityInteraction,
    DensityTerm,
    HoppingMap,
    ModelError,
    ModelSpec,
    TranslationMap,
    add_edge_potential,
    bulk_hamiltonian,
    hofstadter,
    hofstadter_hubbard,
    local_norm_constant,
    magnetic_translation,
    peierls_element,
    peierls_phase,
    remove_site_hoppings,
    restrict,
    spinless_tv,
    strip_edge_terms,
)


def undirected_bonds(spec):
    return {frozenset((x, y)) for x, y, _ in spec.hopping_pairs()}


def test_peierls_examples():
    assert peierls_phase(0.7, (1, 0), (0, 0)) == 1
    assert cmath.isclose(peierls_phase(math.pi, (1, 2), (0, 2)), 1, abs_tol=1e-12)


def test_plaquette_flux_equals_b():
    b = 0.37
    loop = [(0, 0), (1, 0), (1, 1), (0, 1), (0, 0)]
    w = np.prod([peierls_phase(b, loop[k], loop[k + 1]) for k in range(4)])
    assert cmath.isclose(w, cmath.exp(1j * b), abs_tol=1e-12)


@given(st.floats(-4, 4), st.integers(-5, 5), st.integers(0, 8), st.integers(-5, 5), st.integers(0, 8))
def test_peierls_hermitian_pairing(b, a1, a2, c1, c2):
    T = HoppingMap(1, 20, {(a1 - c1, a2 - c2): 1.0, (c1 - a1, c2 - a2): 1.0}) if (a1, a2) != (c1, c2) \
        else HoppingMap(1, 20)
    xy = peierls_element(T, b, (a1, a2), (c1, c2))
    yx = peierls_element(T, b, (c1, c2), (a1, a2))
    assert np.allclose(xy, yx.conj().T, atol=1e-12)


def test_hofstadter_hubbard_counts():
    spec = hofstadter_hubbard(1, 1.0, 1.0)
    assert len(spec.region) == 9 and spec.s == 2
    assert len(spec.region) * spec.s == 18
    assert len(undirected_bonds(spec)) == 12
    assert len(spec.interaction_terms()) == 9
    assert hofstadter_hubbard(1, 1.0, 0.0).interaction_terms() == []
    assert all(np.all(t.imag == 0) for _, _, t in hofstadter_hubbard(1, 0.0, 1.0).hopping_pairs())


def test_bulk_amplitudes_are_translation_invariant():
    spec = hofstadter_hubbard(2, 0.4, 1.0)
    rng = np.random.default_rng(0)
    for _ in range(30):
        x = Site(*rng.integers(-3, 4, 2))
        y = x + Site(*[(1, 0), (0, 1), (-1, 0), (0, -1)][rng.integers(4)])
        z = Site(*rng.integers(-5, 6, 2))
        assert np.array_equal(spec.bulk_hopping.amplitude(x - z, y - z), spec.bulk_hopping.amplitude(x, y))


def test_validate_rejects_bad_models():
    with pytest.raises(ModelError):
        HoppingMap(1, 1, {(1, 0): 1.0}).check()
    with pytest.raises(ModelError):
        HoppingMap(1, 1, {(2, 0): 1.0, (-2, 0): 1.0}).check()
    with pytest.raises(ModelError):
        ModelSpec(box(1), HoppingMap(1, 2, {(2, 0): 1.0, (-2, 0): 1.0}), D=1).validate()
    edge = HoppingMap(1, 1, pairs={((0, 3), (1, 3)): 1.0, ((1, 3), (0, 3)): 1.0})
    with pytest.raises(ModelError):
        hofstadter(2, 0.1).replace(edge_hopping=edge).validate()


def test_presets_validate():
    for spec in (hofstadter(2, 0.3), hofstadter_hubbard(1, 0.3, 2.0), spinless_tv(1, 0.3, 1.0)):
        assert spec.validate() is spec


def test_restrict():
    spec = hofstadter_hubbard(1, 0.5, 1.0)
    same = restrict(spec, spec.region)
    assert [(x, y) for x, y, _ in same.hopping_pairs()] == [(x, y) for x, y, _ in spec.hopping_pairs()]
    one = restrict(spec, SiteSet.custom([(0, 1)]))
    assert one.hopping_pairs() == [] and len(one.interaction_terms()) == 1
    sub = ball((0, 1), 1, within=spec.region)
    assert restrict(restrict(spec, sub), sub).region == restrict(spec, sub).region
    with pytest.raises(ModelError):
        restrict(spec, SiteSet.custom([(5, 5)]))


def test_restrict_to_ball_drops_crossing_bonds():
    spec = hofstadter(3, 0.2)
    sub = ball((0, 3), 2, within=spec.region)
    kept = undirected_bonds(restrict(spec, sub))
    expected = {b for b in undirected_bonds(spec) if all(x in sub for x in b)}
    assert kept == expected


def test_edge_potential():
    spec = hofstadter(3, 0.2)
    assert add_edge_potential(spec, lambda x: 0.0) is spec
    row0 = add_edge_potential(spec, lambda x: 1.0 if x[1] == 0 else 0.0)
    assert len(row0.edge_interaction.terms) == 7
    assert row0.bulk_hopping is spec.bulk_hopping
    with pytest.raises(ModelError):
        add_edge_potential(spec, {(0, 1): 1.0})
    wide = add_edge_potential(spec.replace(D=2), {(0, 1): 1.0})
    assert len(wide.edge_interaction.terms) == 1
    assert strip_edge_terms(row0).edge_interaction.terms == ()


def test_edge_potential_commutes_with_restrict():
    spec = hofstadter(2, 0.2)
    sub = rectangle((-1, 1), (0, 2))
    phi = {(0, 0): 0.3, (1, 0): -0.2}
    a = restrict(add_edge_potential(spec, phi), sub).interaction_terms()
    b = add_edge_potential(restrict(spec, sub), phi).interaction_terms()
    assert a == b


def test_boundary_strip_potential():
    spec = hofstadter(3, 0.2).replace(edge_support="boundary")
    side = add_edge_potential(spec, {(3, 4): 0.5, (0, 6): 0.1})
    assert len(side.edge_interaction.terms) == 2
    with pytest.raises(ModelError):
        add_edge_potential(spec, {(0, 3): 0.5})


def test_remove_site_hoppings_decouples_site():
    spec = hofstadter(2, 0.4).replace(D=2)
    cut = remove_site_hoppings(spec, (0, 0))
    assert all(Site(0, 0) not in (x, y) for x, y, _ in cut.hopping_pairs())
    assert cut.validate() is cut
    assert len(undirected_bonds(cut)) == len(undirected_bonds(spec)) - 3
    with pytest.raises(ModelError):
        remove_site_hoppings(hofstadter(2, 0.4), (0, 0))


def test_bulk_hamiltonian_drops_edges():
    spec = add_edge_potential(hofstadter(2, 0.4), {(0, 0): 1.0})
    bulk = bulk_hamiltonian(spec)
    assert bulk.region == centered_box(2)
    assert bulk.interaction_terms() == []


def test_translation_map_examples():
    spec = hofstadter(2, 0.9)
    ident = magnetic_translation(spec, (0, 0))
    assert ident.phase((3, 4)) == 1
    shift = magnetic_translation(spec, (2, 0))
    assert all(shift.phase(x) == 1 for x in spec.region)


def test_translation_map_is_unitary():
    U = TranslationMap(Site(1, 2), 0.7)
    region = centered_box(2)
    u = U.matrix(region, region.translated((1, 2)))
    assert np.allclose(u.conj().T @ u, np.eye(len(region)))


def test_bulk_covariance_under_magnetic_translation():
    b = 0.83
    X = rectangle((-1, 2), (1, 3))
    y = Site(2, 3)
    spec = hofstadter(1, b, region=X)
    moved = hofstadter(1, b, region=X.translated(-y))
    h = np.zeros((len(X), len(X)), complex)
    for a, c, t in spec.hopping_pairs():
        h[X.index(a), X.index(c)] = t[0, 0]
    target = X.translated(-y)
    hm = np.zeros_like(h)
    for a, c, t in moved.hopping_pairs():
        hm[target.index(a), target.index(c)] = t[0, 0]
    # U maps l2(X - y) to l2(X); U^* h U is the Hamiltonian on X - y
    u = TranslationMap(y, b).matrix(target, X)
    assert np.allclose(u.conj().T @ h @ u, hm, atol=1e-12)


def test_local_norm_constant_examples():
    assert local_norm_constant(hofstadter(3, 0.2), 0.0, "bulk") == 8.0
    assert local_norm_constant(hofstadter(3, 0.2), 0.4, "edge") == 0.4
    assert local_norm_constant(hofstadter_hubbard(2, 0.2, 1.0), 0.3, "bulk") == pytest.approx(9.3)
    edged = add_edge_potential(hofstadter(3, 0.2).replace(D=2), lambda x: 0.7 if x[1] <= 1 else 0)
    assert local_norm_constant(edged, 0.0, "edge") == pytest.approx(0.7)


def test_density_term_normalisation():
    t = DensityTerm((((1, 0), 0), ((0, 0), 0), ((1, 0), 0)), 2)
    assert t.modes == ((Site(0, 0), 0), (Site(1, 0), 0))
    inter = DensityInteraction(templates=(DensityTerm((((3, 3), 0), ((4, 3), 0)), 1.0),))
    assert len(inter.instantiate(rectangle((0, 2), (0, 0)))) == 2
