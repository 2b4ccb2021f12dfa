"""Model files: a TOML description of a :class:`ModelSpec`.

A model table either names a preset (``hofstadter``, ``hofstadter_hubbard``,
``spinless_tv``) with its parameters, or lists every term explicitly.
Complex matrix entries are written as ``[re, im]`` pairs.  Optional
``edge_potential`` and ``remove_sites`` entries are applied on top of either
form.  Writing then reading a model reproduces every float bit for bit.

Example::

    [model]
    preset = "hofstadter"
    L = 4
    b = 0.9424777960769379
    edge_potential = [{site = [0, 0], value = 0.7}]

``edge_rows = [{rows = [0, 1], value = 0.7}]`` puts a potential on whole
rows, which keeps one file valid for every box size.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
import tomli
import tomli_w

from .geometry import SiteSet, box, centered_box
from .model import (
    DensityInteraction,
    DensityTerm,
    HoppingMap,
    ModelError,
    ModelSpec,
    add_edge_potential,
    hofstadter,
    hofstadter_hubbard,
    remove_site_hoppings,
    spinless_tv,
)

__all__ = ["model_to_dict", "model_from_dict", "dumps_model", "loads_model",
           "load_model", "save_model", "model_hash"]

PRESETS = {
    "hofstadter": (hofstadter, {"L", "b", "t"}),
    "hofstadter_hubbard": (hofstadter_hubbard, {"L", "b", "U"}),
    "spinless_tv": (spinless_tv, {"L", "b", "V"}),
}
_MODIFIERS = {"edge_potential", "edge_rows", "edge_support", "remove_sites", "D"}


def _matrix_out(m: np.ndarray) -> list:
    return [[[float(v.real), float(v.imag)] for v in row] for row in np.asarray(m)]


def _matrix_in(rows, s: int, where: str) -> np.ndarray:
    try:
        m = np.array([[complex(re, im) for re, im in row] for row in rows], dtype=complex)
    except (TypeError, ValueError) as exc:
        raise ModelError(f"{where}: matrix entries must be [re, im] pairs") from exc
    if m.shape != (s, s):
        raise ModelError(f"{where}: expected a {s}x{s} matrix, got shape {m.shape}")
    return m


def _region_out(region: SiteSet) -> dict:
    n = len(region)
    for kind, make in (("box", box), ("centered_box", centered_box)):
        L = (int(round(n ** 0.5)) - 1) // 2
        if (2 * L + 1) ** 2 == n and region == make(L):
            return {"kind": kind, "L": L}
    return {"kind": "custom", "sites": [list(x) for x in region]}


def _region_in(d: dict) -> SiteSet:
    kind = d.get("kind", "box")
    if kind == "box":
        return box(int(d["L"]))
    if kind == "centered_box":
        return centered_box(int(d["L"]))
    if kind == "custom":
        return SiteSet.custom(tuple(p) for p in d["sites"])
    raise ModelError(f"region.kind: unknown kind {kind!r}")


def _terms_out(terms) -> list:
    return [{"modes": [[m[0].x1, m[0].x2, m[1]] for m in t.modes], "coeff": t.coeff} for t in terms]


def _terms_in(rows, where: str) -> tuple:
    out = []
    for k, row in enumerate(rows):
        try:
            out.append(DensityTerm(tuple(((a, b), j) for a, b, j in row["modes"]), row["coeff"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelError(f"{where}[{k}]: needs modes=[[x1, x2, j], ...] and coeff") from exc
    return tuple(out)


def model_to_dict(spec: ModelSpec) -> dict:
    """Fully explicit table for ``spec``."""
    disp = sorted(spec.bulk_hopping.displacements.items(), key=lambda kv: (kv[0].x2, kv[0].x1))
    pairs = sorted(spec.edge_hopping.pairs.items(),
                   key=lambda kv: (kv[0][0].x2, kv[0][0].x1, kv[0][1].x2, kv[0][1].x1))
    return {
        "name": spec.name,
        "s": spec.s,
        "R": spec.R,
        "D": spec.D,
        "b": spec.b,
        "edge_support": spec.edge_support,
        "region": _region_out(spec.region),
        "hopping": [{"d": list(k), "matrix": _matrix_out(v)} for k, v in disp],
        "interaction": _terms_out(spec.bulk_interaction.templates),
        "edge_hopping": [{"x": list(x), "y": list(y), "matrix": _matrix_out(v)}
                         for (x, y), v in pairs],
        "edge_interaction": _terms_out(spec.edge_interaction.terms),
    }


def model_from_dict(d: dict) -> ModelSpec:
    """Build and validate a model from a preset or an explicit table."""
    d = dict(d)
    if "preset" in d:
        name = d.pop("preset")
        if name not in PRESETS:
            raise ModelError(f"preset: unknown preset {name!r}; choose from {sorted(PRESETS)}")
        make, allowed = PRESETS[name]
        args = {k: v for k, v in d.items() if k not in _MODIFIERS}
        extra = set(args) - allowed
        if extra:
            raise ModelError(f"preset {name}: unexpected field(s) {sorted(extra)}")
        if "L" not in args:
            raise ModelError(f"preset {name}: missing field 'L'")
        args.setdefault("b", 0.0)
        if name == "hofstadter_hubbard":
            args.setdefault("U", 0.0)
        if name == "spinless_tv":
            args.setdefault("V", 0.0)
        spec = make(**args)
        if "D" in d:
            spec = spec.replace(D=int(d["D"]))
    else:
        spec = _explicit(d)
    if d.get("edge_potential"):
        phi = {}
        for k, row in enumerate(d["edge_potential"]):
            try:
                phi[tuple(row["site"])] = phi.get(tuple(row["site"]), 0.0) + float(row["value"])
            except (KeyError, TypeError) as exc:
                raise ModelError(f"edge_potential[{k}]: needs site=[x1, x2] and value") from exc
        spec = add_edge_potential(spec, phi, d.get("edge_support"))
    for k, row in enumerate(d.get("edge_rows", ())):
        try:
            rows, value = {int(r) for r in row["rows"]}, float(row["value"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelError(f"edge_rows[{k}]: needs rows=[n, ...] and value") from exc
        spec = add_edge_potential(spec, lambda x, rows=rows, value=value: value if x[1] in rows else 0.0,
                                  d.get("edge_support"))
    for site in d.get("remove_sites", ()):
        spec = remove_site_hoppings(spec, tuple(site))
    return spec


def _explicit(d: dict) -> ModelSpec:
    for key in ("s", "R", "region"):
        if key not in d:
            raise ModelError(f"model: missing field {key!r}")
    s, R = int(d["s"]), int(d["R"])
    disp = {tuple(row["d"]): _matrix_in(row["matrix"], s, f"hopping[{k}]")
            for k, row in enumerate(d.get("hopping", ()))}
    pairs = {(tuple(row["x"]), tuple(row["y"])): _matrix_in(row["matrix"], s, f"edge_hopping[{k}]")
             for k, row in enumerate(d.get("edge_hopping", ()))}
    spec = ModelSpec(
        _region_in(d["region"]),
        HoppingMap(s, R, displacements=disp),
        HoppingMap(s, R, pairs=pairs),
        DensityInteraction(templates=_terms_in(d.get("interaction", ()), "interaction")),
        DensityInteraction(terms=_terms_in(d.get("edge_interaction", ()), "edge_interaction")),
        b=float(d.get("b", 0.0)),
        D=int(d.get("D", R)),
        edge_support=d.get("edge_support", "bottom"),
        name=d.get("name", "custom"),
    )
    return spec.validate()


def dumps_model(spec: ModelSpec) -> str:
    return tomli_w.dumps({"model": model_to_dict(spec)})


def loads_model(text: str) -> ModelSpec:
    data = tomli.loads(text)
    if "model" not in data:
        raise ModelError("missing [model] table")
    return model_from_dict(data["model"])


def save_model(spec: ModelSpec, path) -> None:
    Path(path).write_text(dumps_model(spec))


def load_model(path) -> ModelSpec:
    return loads_model(Path(path).read_text())


def model_hash(spec: ModelSpec) -> str:
    """sha256 of the explicit model table; covers the mode order via the region."""
    blob = json.dumps(model_to_dict(spec), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()
