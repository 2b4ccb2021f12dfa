import json
import math

import numpy as np
import pytest

from bulkedge.currents import current_field
from bulkedge.fock import ThermoParams
from bulkedge.free import FreeGibbs, one_body
from bulkedge.geometry import SiteSet, ball, box, rectangle
from bulkedge.model import add_edge_potential, hofstadter, spinless_tv
from bulkedge.operators import OperatorTerms, mode_index, number_terms
from bulkedge.thermo import (
    EngineMismatch,
    bulk_pressure_comparison,
    edge_independence_gap,
    engine_comparison,
    five_region_report,
    gibbs_state,
    indistinguishability_curve,
    indistinguishability_gap,
    magnetization,
    mu_derivative_report,
    pressure,
    resolve_engine,
    to_jsonable,
    translation_covariance,
)

P = ThermoParams(1.0, 0.3)


def test_pressure_examples():
    empty = hofstadter(1, 0.0, region=SiteSet.custom([]))
    assert pressure(empty, P) == 0.0
    one = hofstadter(1, 0.0, region=SiteSet.custom([(0, 0)]))
    want = -math.log1p(math.exp(P.beta * P.mu)) / P.beta
    assert pressure(one, P) == pytest.approx(want, rel=1e-14)
    assert pressure(one, P, "ed") == pytest.approx(want, rel=1e-14)


def test_engine_resolution():
    assert resolve_engine(hofstadter(1, 0.2)) == "free"
    assert resolve_engine(spinless_tv(1, 0.2, 1.0)) == "ed"
    with pytest.raises(EngineMismatch):
        resolve_engine(spinless_tv(1, 0.2, 1.0), "free")
    with pytest.raises(EngineMismatch):
        resolve_engine(hofstadter(1, 0.2), "qmc")


def test_magnetization_vanishes_without_field():
    r = magnetization(hofstadter(4, 0.0), P)
    assert abs(r.m_duhamel) < 1e-14
    assert abs(r.m_current_sum) < 1e-14
    assert abs(r.m_fd) < 1e-10


def test_magnetization_routes_agree(flux):
    r = magnetization(hofstadter(5, flux), P, d_values=[2, 3])
    assert r.identity_gap < 1e-12
    assert r.fd_gap < 1e-8
    assert set(r.edge_currents) == {2, 3, 5}
    ed = magnetization(spinless_tv(1, flux, 1.0), ThermoParams(1.0, 0.5))
    assert ed.identity_gap < 1e-12
    assert ed.fd_gap < 1e-8
    with pytest.raises(ValueError):
        magnetization(hofstadter(2, flux), P, fd_step=0.0)


def test_five_region_parts_sum_to_current_sum(flux):
    L, d = 12, 4
    spec = hofstadter(L, flux)
    f = current_field(spec, FreeGibbs.from_spec(spec, P))
    rep = five_region_report(f, L, d)
    assert abs(rep.total - rep.m_current_sum) < 1e-12
    assert abs(rep.parts["bulk"]) <= rep.bulk_abs_bound <= rep.bulk_shell_bound


def test_mu_derivative_report(flux):
    params = ThermoParams(1.0, 0.5)
    r = mu_derivative_report(hofstadter(4, flux), params, d_values=[2])
    assert r.max_relative_disagreement(1e-12) < 1e-6
    # p = -(V beta)^{-1} log Z, so dp/dmu is minus the density
    assert r.dp_fd == pytest.approx(-r.density, rel=1e-7)
    ed = mu_derivative_report(spinless_tv(1, flux, 1.0), params)
    assert ed.max_relative_disagreement(1e-12) < 1e-6
    assert ed.dp_fd == pytest.approx(-ed.density, rel=1e-6)


def test_indistinguishability_edge_cases(flux):
    spec = hofstadter(2, flux)
    X = SiteSet.custom([(0, 2)])

    def dens(s):
        return number_terms(X, mode_index(s))

    def ident(s):
        return OperatorTerms(mode_index(s).M)

    full = indistinguishability_gap(spec, P, spec.region, X, dens)
    assert full.gap == 0.0
    sub = ball((0, 2), 1, within=spec.region)
    assert indistinguishability_gap(spec, P, sub, X, ident).gap == 0.0
    part = indistinguishability_gap(spec, P, sub, X, dens)
    assert part.gap > 0
    assert part.dist_to_rest == 2
    with pytest.raises(ValueError):
        indistinguishability_gap(spec, P, SiteSet.custom([(1, 1)]), X, dens)


def test_indistinguishability_curve_decays(flux):
    spec = hofstadter(3, flux)
    params = ThermoParams(0.25, 1.0)
    rows = indistinguishability_curve(spec, params, (0, 3), range(0, 5))
    gaps = [r.gap for r in rows]
    assert all(a > b for a, b in zip(gaps, gaps[1:]))
    precise = indistinguishability_curve(spec, params, (0, 3), [2], digits=30)
    assert precise[0].gap == pytest.approx(rows[2].gap, rel=1e-6)
    with pytest.raises(ValueError):
        indistinguishability_curve(spec, params, (0, 3), [1], observable="spin")


def test_edge_independence(flux):
    L, d = 8, 3
    spec = hofstadter(L, flux).replace(D=2)
    same = edge_independence_gap(spec, spec, P, d)
    assert same.gap == 0.0
    other = add_edge_potential(spec, lambda x: 0.7 if x[1] <= 1 else 0.0)
    r = edge_independence_gap(spec, other, P, d)
    assert 0 < r.gap <= r.bound
    with pytest.raises(ValueError):
        edge_independence_gap(spec, hofstadter(L, -flux).replace(D=2), P, d)


def test_bulk_pressure(flux):
    params = ThermoParams(2.0, 0.0)
    plain = bulk_pressure_comparison(lambda L: hofstadter(L, flux), 6, params)
    assert plain.gap < 1e-14

    def edged(L):
        return add_edge_potential(hofstadter(L, flux).replace(D=2),
                                  lambda x: 0.7 if x[1] <= 1 else 0.0)

    r = bulk_pressure_comparison(edged, 6, params)
    assert r.C_edge == pytest.approx(0.7)
    assert 0 < r.gap <= r.bound


def test_engines_agree(flux):
    spec = add_edge_potential(hofstadter(1, flux, region=rectangle((0, 1), (0, 1))), {(0, 0): 0.3})
    gaps = engine_comparison(spec, ThermoParams(1.3, 0.2))
    assert set(gaps) == {"pressure", "number", "number_mu_derivative", "currents",
                         "current_mu_derivatives"}
    assert max(gaps.values()) < 1e-10


def test_translation_covariance(flux):
    spec = hofstadter(2, flux, region=rectangle((0, 3), (0, 2)))
    gaps = translation_covariance(spec, (2, 1), P)
    assert gaps["hopping"] < 1e-14
    assert gaps["currents"] < 1e-12
    with pytest.raises(ValueError):
        translation_covariance(add_edge_potential(spec, {(0, 0): 1.0}), (1, 0), P)


def test_reports_serialize(flux):
    r = magnetization(hofstadter(2, flux), P)
    data = json.loads(json.dumps(to_jsonable(r)))
    assert data["m_duhamel"] == r.m_duhamel
    assert data["identity_gap"] == r.identity_gap
