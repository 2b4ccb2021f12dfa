"""Lattice-fermion Hamiltonians with a uniform magnetic field.

A :class:`ModelSpec` holds a translation-invariant bulk part (hoppings
indexed by displacement, density interactions given as templates) and an
edge part (hoppings indexed by site pairs, explicit density terms) that
lives in a strip of width ``D`` along the lower boundary.

The Peierls gauge is fixed: a hop from ``y`` to ``x`` picks up
``exp(i b (x2 + y2)/2 (x1 - y1))``, so every unit plaquette carries flux
``b``.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .geometry import Site, SiteSet, box, centered_box, distance

__all__ = [
    "HoppingMap",
    "DensityTerm",
    "DensityInteraction",
    "ModelSpec",
    "TranslationMap",
    "ModelError",
    "peierls_phase",
    "peierls_element",
    "hofstadter",
    "hofstadter_hubbard",
    "spinless_tv",
    "restrict",
    "add_edge_potential",
    "remove_site_hoppings",
    "bulk_hamiltonian",
    "strip_edge_terms",
    "magnetic_translation",
    "local_norm_constant",
]

HERMITIAN_TOL = 1e-12


class ModelError(ValueError):
    """Raised when a model violates a structural requirement."""


def _as_matrix(t, s: int) -> np.ndarray:
    m = np.array(t, dtype=complex)
    if m.ndim == 0:
        m = m * np.eye(s, dtype=complex)
    if m.shape != (s, s):
        raise ModelError(f"hopping matrix must be {s}x{s}, got shape {m.shape}")
    return m


@dataclass(frozen=True, eq=False)
class HoppingMap:
    """Hopping amplitudes ``T(x, y)`` as ``s x s`` matrices.

    ``displacements`` maps ``x - y`` to a matrix (bulk, translation
    invariant); ``pairs`` maps ``(x, y)`` to a matrix (edge).  A map may
    carry both; the amplitude is their sum.
    """

    s: int = 1
    R: int = 1
    displacements: Mapping = field(default_factory=dict)
    pairs: Mapping = field(default_factory=dict)

    def __post_init__(self):
        disp = {Site(*k): _as_matrix(v, self.s) for k, v in dict(self.displacements).items()}
        prs = {
            (Site(*x), Site(*y)): _as_matrix(v, self.s) for (x, y), v in dict(self.pairs).items()
        }
        object.__setattr__(self, "displacements", {k: v for k, v in disp.items() if np.any(v)})
        object.__setattr__(self, "pairs", {k: v for k, v in prs.items() if np.any(v)})

    def __bool__(self) -> bool:
        return bool(self.displacements) or bool(self.pairs)

    def amplitude(self, x, y) -> np.ndarray:
        x, y = Site(*x), Site(*y)
        out = np.zeros((self.s, self.s), dtype=complex)
        if (t := self.displacements.get(x - y)) is not None:
            out = out + t
        if (t := self.pairs.get((x, y))) is not None:
            out = out + t
        return out

    def pairs_in(self, region: SiteSet):
        """Yield ``(x, y, T(x, y))`` for nonzero amplitudes inside ``region``.

        Row-major order in ``x``, then displacement order.
        """
        disp = sorted(self.displacements.items(), key=lambda kv: (kv[0].x2, kv[0].x1))
        extra: dict = {}
        for (x, y), t in self.pairs.items():
            if x in region and y in region:
                extra.setdefault(x, []).append((y, t))
        for x in region:
            acc: dict = {}
            for dxy, t in disp:
                y = x - dxy
                if y in region:
                    acc[y] = t
            for y, t in extra.get(x, ()):
                acc[y] = acc[y] + t if y in acc else t
            for y in sorted(acc, key=lambda p: (p.x2, p.x1)):
                if np.any(acc[y]):
                    yield x, y, acc[y]

    def check(self, name: str = "hopping") -> None:
        for dxy, t in self.displacements.items():
            if abs(dxy.x1) + abs(dxy.x2) > self.R:
                raise ModelError(f"{name}: displacement {tuple(dxy)} exceeds range R={self.R}")
            back = self.displacements.get(-dxy)
            if back is None or np.max(np.abs(t - back.conj().T)) > HERMITIAN_TOL:
                raise ModelError(f"{name}: T(d) != T(-d)^* for displacement {tuple(dxy)}")
        for (x, y), t in self.pairs.items():
            if distance(x, y) > self.R:
                raise ModelError(f"{name}: pair {tuple(x)}-{tuple(y)} exceeds range R={self.R}")
            back = self.pairs.get((y, x))
            if back is None or np.max(np.abs(t - back.conj().T)) > HERMITIAN_TOL:
                raise ModelError(f"{name}: T(x,y) != T(y,x)^* for pair {tuple(x)}-{tuple(y)}")

    def max_norm(self) -> float:
        mats = list(self.displacements.values()) + list(self.pairs.values())
        return max((float(np.linalg.norm(t, 2)) for t in mats), default=0.0)


@dataclass(frozen=True)
class DensityTerm:
    """``coeff * prod n_{site, j}`` over the listed ``(site, j)`` modes."""

    modes: tuple
    coeff: float

    def __post_init__(self):
        modes = tuple(sorted({(Site(*m[0]), int(m[1])) for m in self.modes},
                             key=lambda m: (m[0].x2, m[0].x1, m[1])))
        if not modes:
            raise ModelError("density term needs at least one mode")
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "coeff", float(self.coeff))

    @property
    def sites(self) -> tuple[Site, ...]:
        return tuple(dict.fromkeys(m[0] for m in self.modes))

    def shifted(self, y) -> "DensityTerm":
        return DensityTerm(tuple((m[0] + y, m[1]) for m in self.modes), self.coeff)


@dataclass(frozen=True)
class DensityInteraction:
    """Products of number operators with real coefficients.

    ``templates`` are instantiated at every anchor that keeps the whole
    support inside the region (the bulk, translation-invariant part);
    ``terms`` are absolute (the edge part).
    """

    templates: tuple = ()
    terms: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "templates", tuple(_normalize_template(t) for t in self.templates))
        object.__setattr__(self, "terms", tuple(t for t in self.terms if t.coeff != 0.0))

    def __bool__(self) -> bool:
        return bool(self.templates) or bool(self.terms)

    def instantiate(self, region: SiteSet) -> list[DensityTerm]:
        out = []
        for x in region:
            for t in self.templates:
                moved = t.shifted(x)
                if all(s in region for s in moved.sites):
                    out.append(moved)
        out.extend(t for t in self.terms if all(s in region for s in t.sites))
        return out

    def max_range(self) -> int:
        ts = list(self.templates) + list(self.terms)
        return max((SiteSet.custom(t.sites).diameter() for t in ts), default=0)


def _normalize_template(t: DensityTerm) -> DensityTerm:
    if t.coeff == 0.0:
        raise ModelError("zero-coefficient template")
    return t.shifted(-t.modes[0][0])


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """A member of the bulk-plus-edge Hamiltonian family on ``region``."""

    region: SiteSet
    bulk_hopping: HoppingMap
    edge_hopping: HoppingMap = None  # type: ignore[assignment]
    bulk_interaction: DensityInteraction = DensityInteraction()
    edge_interaction: DensityInteraction = DensityInteraction()
    b: float = 0.0
    D: int = 1
    edge_support: str = "bottom"
    name: str = "custom"

    def __post_init__(self):
        if self.edge_hopping is None:
            object.__setattr__(self, "edge_hopping", HoppingMap(self.s, self.R))
        object.__setattr__(self, "b", float(self.b))

    @property
    def s(self) -> int:
        return self.bulk_hopping.s

    @property
    def R(self) -> int:
        return self.bulk_hopping.R

    def replace(self, **changes) -> "ModelSpec":
        return dataclasses.replace(self, **changes)

    def with_field(self, b: float) -> "ModelSpec":
        return self.replace(b=float(b))

    def box_size(self) -> int | None:
        """``L`` when the region is exactly a half-plane box."""
        n = len(self.region)
        L = (math.isqrt(n) - 1) // 2
        return L if (2 * L + 1) ** 2 == n and self.region == box(L) else None

    def in_edge_strip(self, site) -> bool:
        if self.edge_support == "bottom":
            return 0 <= site[1] <= self.D - 1
        if self.edge_support == "boundary":
            L = self.box_size()
            if L is None:
                raise ModelError("boundary strips are only defined on half-plane boxes")
            inner = (-L + self.D <= site[0] <= L - self.D) and (site[1] <= 2 * L - self.D)
            return site in self.region and (not inner or site[1] <= self.D - 1)
        raise ModelError(f"unknown edge support {self.edge_support!r}")

    def is_quadratic(self) -> bool:
        """True when every density term touches a single mode."""
        terms = self.interaction_terms()
        return all(len(t.modes) == 1 for t in terms)

    def hopping_pairs(self):
        """``(x, y, T_b(x, y))`` for every nonzero hop inside the region."""
        acc: dict = {}
        order = []
        for hop in (self.bulk_hopping, self.edge_hopping):
            for x, y, t in hop.pairs_in(self.region):
                if (x, y) in acc:
                    acc[(x, y)] = acc[(x, y)] + t
                else:
                    acc[(x, y)] = t
                    order.append((x, y))
        out = []
        for x, y in order:
            t = acc[(x, y)]
            if np.any(t):
                out.append((x, y, peierls_phase(self.b, x, y) * t))
        return out

    def interaction_terms(self) -> list[DensityTerm]:
        return self.bulk_interaction.instantiate(self.region) + self.edge_interaction.instantiate(
            self.region
        )

    def validate(self) -> "ModelSpec":
        """Check Hermiticity, ranges and edge supports; returns ``self``."""
        if self.edge_hopping.s != self.s:
            raise ModelError("bulk and edge hoppings disagree on the internal dimension s")
        if self.D < self.R:
            raise ModelError(f"edge strip width D={self.D} must be at least R={self.R}")
        if self.bulk_hopping.pairs:
            raise ModelError("bulk hopping must be displacement indexed")
        if self.edge_hopping.displacements:
            raise ModelError("edge hopping must be site-pair indexed")
        self.bulk_hopping.check("bulk hopping")
        self.edge_hopping.check("edge hopping")
        for (x, y) in self.edge_hopping.pairs:
            if not (self.in_edge_strip(x) and self.in_edge_strip(y)):
                raise ModelError(f"edge hopping {tuple(x)}-{tuple(y)} leaves the edge strip")
        if self.bulk_interaction.terms:
            raise ModelError("bulk interaction must be given as templates")
        if self.edge_interaction.templates:
            raise ModelError("edge interaction must be given as explicit terms")
        for part in (self.bulk_interaction, self.edge_interaction):
            if part.max_range() > self.R:
                raise ModelError(f"interaction diameter exceeds range R={self.R}")
            for t in list(part.templates) + list(part.terms):
                if any(not 0 <= j < self.s for _, j in t.modes):
                    raise ModelError("density term internal index out of range")
        for t in self.edge_interaction.terms:
            if not all(self.in_edge_strip(x) for x in t.sites):
                raise ModelError(f"edge interaction on {t.sites} leaves the edge strip")
        return self


def peierls_phase(b: float, x, y) -> complex:
    """``exp(i b (x2 + y2)/2 (x1 - y1))``."""
    return complex(np.exp(0.5j * b * (x[1] + y[1]) * (x[0] - y[0])))


def peierls_element(T: HoppingMap, b: float, x, y) -> np.ndarray:
    """Magnetic hopping matrix ``T_b(x, y)``."""
    return peierls_phase(b, x, y) * T.amplitude(x, y)


def _nearest_neighbour(s: int, t: complex = 1.0) -> HoppingMap:
    eye = np.eye(s, dtype=complex)
    return HoppingMap(
        s, 1, {(1, 0): t * eye, (-1, 0): np.conj(t) * eye, (0, 1): t * eye, (0, -1): np.conj(t) * eye}
    )


def hofstadter(L: int, b: float, t: float = 1.0, region: SiteSet | None = None) -> ModelSpec:
    """Spinless nearest-neighbour magnetic Laplacian on the box (``s = 1``)."""
    if L < 1 and region is None:
        raise ModelError("L must be at least 1")
    return ModelSpec(region if region is not None else box(L), _nearest_neighbour(1, t),
                     b=b, D=1, name="hofstadter").validate()


def hofstadter_hubbard(L: int, b: float, U: float) -> ModelSpec:
    """Spin-1/2 magnetic Laplacian plus on-site repulsion ``U n_{x,1} n_{x,2}``."""
    if L < 1:
        raise ModelError("L must be at least 1")
    templates = (DensityTerm(((Site(0, 0), 0), (Site(0, 0), 1)), U),) if U != 0 else ()
    return ModelSpec(box(L), _nearest_neighbour(2), bulk_interaction=DensityInteraction(templates),
                     b=b, D=1, name="hofstadter_hubbard").validate()


def spinless_tv(L: int, b: float, V: float, region: SiteSet | None = None) -> ModelSpec:
    """Spinless magnetic hopping with nearest-neighbour repulsion ``V n_x n_y``."""
    templates = ()
    if V != 0:
        templates = (DensityTerm(((Site(0, 0), 0), (Site(1, 0), 0)), V),
                     DensityTerm(((Site(0, 0), 0), (Site(0, 1), 0)), V))
    return ModelSpec(region if region is not None else box(L), _nearest_neighbour(1),
                     bulk_interaction=DensityInteraction(templates), b=b, D=1,
                     name="spinless_tv").validate()


def restrict(spec: ModelSpec, sub: SiteSet) -> ModelSpec:
    """The same Hamiltonian with every sum limited to ``sub``."""
    if not sub.issubset(spec.region):
        raise ModelError("restriction target is not contained in the model region")
    return spec.replace(region=sub)


def add_edge_potential(spec: ModelSpec, phi, strip: str | None = None) -> ModelSpec:
    """Add ``phi(x) N_x`` on every site where ``phi`` is nonzero.

    ``phi`` is a mapping from sites to reals or a callable.  ``strip`` may be
    ``"bottom"`` (default) or ``"boundary"`` (all four sides); every
    nonzero value must sit inside that strip.
    """
    support = strip or spec.edge_support
    target = spec.replace(edge_support=support)
    values = _potential_values(spec.region, phi)
    new_terms = []
    for x, v in values:
        if not target.in_edge_strip(x):
            raise ModelError(f"potential at {tuple(x)} is outside the {support} strip")
        new_terms.extend(DensityTerm(((x, j),), v) for j in range(spec.s))
    if not new_terms:
        return spec
    inter = DensityInteraction(terms=spec.edge_interaction.terms + tuple(new_terms))
    return target.replace(edge_interaction=inter).validate()


def _potential_values(region: SiteSet, phi):
    if callable(phi):
        items = ((x, float(phi(x))) for x in region)
    else:
        items = ((Site(*x), float(v)) for x, v in dict(phi).items())
    out = []
    for x, v in items:
        if v != 0.0:
            if x not in region:
                raise ModelError(f"potential site {tuple(x)} is outside the region")
            out.append((x, v))
    return out


def remove_site_hoppings(spec: ModelSpec, site) -> ModelSpec:
    """Cancel every bulk hop attached to ``site`` by an opposite edge hop.

    The site stays in the region but is decoupled from its neighbours.
    Needs the whole neighbourhood inside the edge strip.
    """
    site = Site(*site)
    pairs = dict(spec.edge_hopping.pairs)
    touched = set()
    for dxy in spec.bulk_hopping.displacements:
        touched.add((site, site - dxy))
        touched.add((site + dxy, site))
    for x, y in touched:
        if x in spec.region and y in spec.region:
            t = spec.bulk_hopping.displacements[x - y]
            pairs[(x, y)] = pairs.get((x, y), 0) - t
    hop = HoppingMap(spec.s, spec.R, pairs=pairs)
    return spec.replace(edge_hopping=hop).validate()


def strip_edge_terms(spec: ModelSpec) -> ModelSpec:
    """The same bulk model on the same region with every edge term removed."""
    return spec.replace(edge_hopping=HoppingMap(spec.s, spec.R), edge_interaction=DensityInteraction())


def bulk_hamiltonian(spec: ModelSpec, L: int | None = None) -> ModelSpec:
    """Edge-free model on the centred box ``[-L, L]^2``."""
    if L is None:
        L = spec.box_size()
        if L is None:
            raise ModelError("pass L explicitly for non-box regions")
    return ModelSpec(centered_box(L), spec.bulk_hopping,
                     bulk_interaction=spec.bulk_interaction, b=spec.b, D=spec.D,
                     name=f"{spec.name}:bulk")


@dataclass(frozen=True)
class TranslationMap:
    """Magnetic translation by ``displacement`` at field ``b``.

    As a one-body unitary it sends the basis vector at ``x`` to
    ``phase(x + y) * (basis vector at x + y)`` with
    ``phase(x) = exp(i b y2 x1)``.  Conjugation acts on creation operators as
    ``U^* a*_x U = exp(-i b y2 x1) a*_{x - y}``.
    """

    displacement: Site
    b: float
    s: int = 1

    def phase(self, x) -> complex:
        return complex(np.exp(1j * self.b * self.displacement.x2 * x[0]))

    def conjugation_phase(self, x) -> complex:
        """Factor picked up by ``a*_x`` under ``U^* . U``."""
        return complex(np.exp(-1j * self.b * self.displacement.x2 * x[0]))

    def matrix(self, source: SiteSet, target: SiteSet) -> np.ndarray:
        """One-body matrix from ``l^2(source)`` to ``l^2(target)``."""
        u = np.zeros((len(target) * self.s, len(source) * self.s), dtype=complex)
        for x in source:
            xy = x + self.displacement
            if xy in target:
                for j in range(self.s):
                    u[target.index(xy) * self.s + j, source.index(x) * self.s + j] = self.phase(xy)
        return u

    def conjugate_hops(self, hops):
        """Map ``[(x, y, M)]`` meaning ``a*_x M a_y`` through ``U^* . U``."""
        y0 = self.displacement
        return [
            (x - y0, y - y0, self.conjugation_phase(x) * np.conj(self.conjugation_phase(y)) * m)
            for x, y, m in hops
        ]


def magnetic_translation(spec: ModelSpec, y) -> TranslationMap:
    return TranslationMap(Site(*y), spec.b, spec.s)


def local_norm_constant(spec: ModelSpec, mu: float, part: str = "bulk") -> float:
    """Per-site bound on hopping and interaction norms (plus ``mu``).

    ``sup_x (2 sum_y ||T(x, y)|| + sum_{X contains x} ||Phi(X)||) + mu`` over
    the region, with matrix operator norms and ``|coeff|`` for density terms.
    """
    if part == "bulk":
        hop = spec.bulk_hopping
        inter = spec.bulk_interaction
    elif part == "edge":
        hop = spec.edge_hopping
        inter = spec.edge_interaction
    else:
        raise ValueError("part must be 'bulk' or 'edge'")
    per_site = dict.fromkeys(spec.region, 0.0)
    for x, y, t in hop.pairs_in(spec.region):
        per_site[x] += 2.0 * float(np.linalg.norm(t, 2))
    for term in inter.instantiate(spec.region):
        for x in term.sites:
            per_site[x] += abs(term.coeff)
    return max(per_site.values(), default=0.0) + mu
