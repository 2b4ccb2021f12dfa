import math

import numpy as np
import pytest

from bulkedge.geometry import SiteSet, box
from bulkedge.model import ModelError, add_edge_potential, hofstadter, hofstadter_hubbard, spinless_tv
from bulkedge.modelio import dumps_model, load_model, loads_model, model_hash, save_model


def assert_same(a, b):
    assert a.region == b.region and a.b == b.b and a.s == b.s and a.D == b.D
    pa, pb = a.hopping_pairs(), b.hopping_pairs()
    assert [(x, y) for x, y, _ in pa] == [(x, y) for x, y, _ in pb]
    for (_, _, s), (_, _, t) in zip(pa, pb):
        assert np.array_equal(s, t)
    assert a.interaction_terms() == b.interaction_terms()


@pytest.mark.parametrize("spec", [
    hofstadter(2, 2 * math.pi * 0.15),
    hofstadter_hubbard(1, 1.0 / 3.0, 1.7),
    spinless_tv(1, 0.1234567890123, 0.3),
    add_edge_potential(hofstadter(2, 0.7).replace(D=2), lambda x: 0.1 * (x[0] + 3) if x[1] < 2 else 0),
])
def test_round_trip_is_bit_exact(spec):
    text = dumps_model(spec)
    back = loads_model(text)
    assert_same(spec, back)
    assert dumps_model(back) == text
    assert model_hash(back) == model_hash(spec)


def test_custom_region_round_trip(tmp_path):
    spec = hofstadter(1, 0.3, region=SiteSet.custom([(0, 0), (1, 0), (1, 1)]))
    save_model(spec, tmp_path / "m.toml")
    assert_same(spec, load_model(tmp_path / "m.toml"))


def test_preset_with_modifiers():
    text = """
[model]
preset = "hofstadter"
L = 3
b = 0.5
D = 2
edge_rows = [{rows = [0, 1], value = 0.7}]
edge_potential = [{site = [0, 0], value = 0.1}]
"""
    spec = loads_model(text)
    assert spec.D == 2
    assert len(spec.edge_interaction.terms) == 1 + 14
    at_origin = sum(t.coeff for t in spec.edge_interaction.terms if t.sites == ((0, 0),))
    assert at_origin == pytest.approx(0.8)


def test_hash_changes_with_model():
    assert model_hash(hofstadter(2, 0.5)) != model_hash(hofstadter(2, 0.5000001))


@pytest.mark.parametrize("text,needle", [
    ("[model]\npreset='nope'\nL=1", "preset"),
    ("[model]\npreset='hofstadter'\nL=1\nU=2", "unexpected"),
    ("[model]\ns=1\nR=1\nregion={kind='box', L=1}\nhopping=[{d=[1,0], matrix=[[[1.0,0.0]]]}]", "T(d)"),
    ("[model]\ns=1\nR=1\nregion={kind='box', L=1}\nhopping=[{d=[1,0], matrix=[[1.0]]}]", "hopping[0]"),
    ("[other]\nx=1", "missing [model]"),
])
def test_errors_name_the_field(text, needle):
    with pytest.raises(ModelError, match=None) as info:
        loads_model(text)
    assert needle in str(info.value)
