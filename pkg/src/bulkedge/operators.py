"""Engine-neutral description of number-conserving fermion operators.

An operator is stored as a quadratic part ``sum c a*_i a_j`` (arrays
``i, j, c``) plus a list of density monomials ``coeff * prod n_m``.  Both
engines consume this form: the many-body engine assembles it sector by
sector, the free engine reads the quadratic part as a one-body matrix.

Mode positions are fixed by :class:`ModeIndex`: sites in row-major order,
then the internal index, ``position = site_index * s + j``.  Fermionic signs
depend on this ordering.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Site, SiteSet
from .model import ModelSpec

__all__ = [
    "ModeIndex",
    "mode_index",
    "OperatorTerms",
    "hamiltonian_terms",
    "number_terms",
    "magnetic_derivative_terms",
    "hop_terms",
]


@dataclass(frozen=True, eq=False)
class ModeIndex:
    """Bijection between ``(site, j)`` and positions ``0 .. M-1``."""

    region: SiteSet
    s: int = 1

    @property
    def M(self) -> int:
        return len(self.region) * self.s

    def position(self, site, j: int = 0) -> int:
        if not 0 <= j < self.s:
            raise IndexError(f"internal index {j} out of range for s={self.s}")
        return self.region.index(site) * self.s + j

    def mode(self, p: int) -> tuple[Site, int]:
        return self.region.members[p // self.s], p % self.s

    def positions(self, Z) -> np.ndarray:
        """All mode positions on the sites of ``Z``; raises for foreign sites."""
        out = []
        for z in Z:
            if z not in self.region:
                raise KeyError(f"site {tuple(z)} is not in the mode region")
            base = self.region.index(z) * self.s
            out.extend(range(base, base + self.s))
        return np.array(sorted(out), dtype=np.int64)

    def key(self) -> tuple:
        return (self.s, tuple(self.region.members))

    def __eq__(self, other) -> bool:
        return isinstance(other, ModeIndex) and self.key() == other.key()

    def __hash__(self) -> int:
        return hash(self.key())


def _empty_i():
    return np.zeros(0, dtype=np.int64)


@dataclass(frozen=True, eq=False)
class OperatorTerms:
    """``sum c[k] a*_{i[k]} a_{j[k]} + sum coeff * prod_{m in modes} n_m``.

    Repeated ``(i, j)`` entries are allowed and add up.
    """

    M: int
    i: np.ndarray = field(default_factory=_empty_i)
    j: np.ndarray = field(default_factory=_empty_i)
    c: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))
    monomials: tuple = ()

    def __post_init__(self):
        i = np.asarray(self.i, dtype=np.int64).ravel()
        j = np.asarray(self.j, dtype=np.int64).ravel()
        c = np.asarray(self.c, dtype=complex).ravel()
        if not (len(i) == len(j) == len(c)):
            raise ValueError("i, j, c must have equal length")
        if len(i) and (min(i.min(), j.min()) < 0 or max(i.max(), j.max()) >= self.M):
            raise IndexError("mode index out of range")
        mono = []
        for modes, coeff in self.monomials:
            modes = tuple(sorted(set(int(m) for m in modes)))
            if any(m < 0 or m >= self.M for m in modes):
                raise IndexError("mode index out of range")
            if coeff != 0:
                mono.append((modes, float(coeff)))
        object.__setattr__(self, "i", i)
        object.__setattr__(self, "j", j)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "monomials", tuple(mono))

    def __add__(self, other: "OperatorTerms") -> "OperatorTerms":
        if self.M != other.M:
            raise ValueError("operators live on different mode sets")
        return OperatorTerms(
            self.M,
            np.concatenate([self.i, other.i]),
            np.concatenate([self.j, other.j]),
            np.concatenate([self.c, other.c]),
            self.monomials + other.monomials,
        )

    def __sub__(self, other: "OperatorTerms") -> "OperatorTerms":
        return self + other.scaled(-1.0)

    def scaled(self, a: complex) -> "OperatorTerms":
        if self.monomials and np.imag(a) != 0:
            raise ValueError("density monomials only accept real scale factors")
        return OperatorTerms(self.M, self.i, self.j, a * self.c,
                             tuple((m, float(np.real(a)) * v) for m, v in self.monomials))

    def dagger(self) -> "OperatorTerms":
        return OperatorTerms(self.M, self.j, self.i, np.conj(self.c), self.monomials)

    def is_quadratic(self) -> bool:
        return all(len(m) == 1 for m, _ in self.monomials)

    def one_body_matrix(self) -> np.ndarray:
        """Dense ``h`` with ``h[i, j]`` the coefficient of ``a*_i a_j``."""
        if not self.is_quadratic():
            raise ValueError("operator contains products of two or more densities")
        h = np.zeros((self.M, self.M), dtype=complex)
        np.add.at(h, (self.i, self.j), self.c)
        for (m,), v in self.monomials:
            h[m, m] += v
        return h

    def coefficient_list(self) -> list[tuple[int, int, complex]]:
        """Quadratic part with single-mode densities folded onto the diagonal."""
        if not self.is_quadratic():
            raise ValueError("operator contains products of two or more densities")
        out = [(int(a), int(b), complex(v)) for a, b, v in zip(self.i, self.j, self.c)]
        out.extend((m[0], m[0], complex(v)) for m, v in self.monomials)
        return out


def hop_terms(modes: ModeIndex, hops) -> OperatorTerms:
    """Expand ``[(x, y, matrix)]`` meaning ``a*_x matrix a_y`` into mode terms."""
    s = modes.s
    ii, jj, cc = [], [], []
    for x, y, m in hops:
        px = modes.region.index(x) * s
        py = modes.region.index(y) * s
        m = np.asarray(m, dtype=complex).reshape(s, s)
        for a in range(s):
            for b in range(s):
                if m[a, b] != 0:
                    ii.append(px + a)
                    jj.append(py + b)
                    cc.append(m[a, b])
    return OperatorTerms(modes.M, ii, jj, cc)


def _density_terms(modes: ModeIndex, terms) -> OperatorTerms:
    mono = tuple((tuple(modes.position(x, j) for x, j in t.modes), t.coeff) for t in terms)
    return OperatorTerms(modes.M, monomials=mono)


def mode_index(spec: ModelSpec) -> ModeIndex:
    return ModeIndex(spec.region, spec.s)


def hamiltonian_terms(spec: ModelSpec, modes: ModeIndex | None = None) -> OperatorTerms:
    """``H = sum a*_x T_b(x, y) a_y + sum Phi(X)`` restricted to the region."""
    modes = modes or mode_index(spec)
    return hop_terms(modes, spec.hopping_pairs()) + _density_terms(modes, spec.interaction_terms())


def number_terms(Z, modes: ModeIndex) -> OperatorTerms:
    """``N_Z``, the particle number on the sites of ``Z``."""
    pos = modes.positions(Z)
    return OperatorTerms(modes.M, pos, pos, np.ones(len(pos), dtype=complex))


def magnetic_derivative_terms(spec: ModelSpec, modes: ModeIndex | None = None) -> OperatorTerms:
    """``dH/db = sum (i/2)(x2 + y2)(x1 - y1) a*_x T_b(x, y) a_y``."""
    modes = modes or mode_index(spec)
    hops = [
        (x, y, 0.5j * (x.x2 + y.x2) * (x.x1 - y.x1) * t) for x, y, t in spec.hopping_pairs()
    ]
    return hop_terms(modes, [h for h in hops if np.any(h[2])])
