"""Bond currents through dual edges, their conservation laws and decay.

The current through ``e_{k,z}`` collects every hop ``a*_x T_b(x, y) a_y``
whose segment ``xy`` meets the dual edge, with coefficient
``i sgn(x_k - y_k)`` times weight 1 (the open edge is crossed) or 1/2 (the
segment only passes through an endpoint).  A hop through a dual vertex is
split evenly between the two edges sharing it.

All intersection decisions use doubled coordinates and integer arithmetic.
"""
from __future__ import annotations

import csv
import io
import math
from collections import defaultdict, deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .geometry import DualEdge, Site, SiteSet, dual_edge_boundary, set_distance, Complement
from .model import ModelSpec
from .operators import ModeIndex, OperatorTerms, hop_terms, mode_index

__all__ = [
    "CurrentCoefficients",
    "CurrentField",
    "DecayProfile",
    "segment_hits_edge",
    "current_coefficients",
    "current_terms",
    "crossing_table",
    "current_field",
    "divergence_terms",
    "divergence_residual",
    "continuity_residuals",
    "conservation_sum",
    "conservation_families",
    "edge_current",
    "upper_edge_current",
    "complement_distance_map",
    "bloch_profile",
    "theta_bound",
    "FULL",
    "HALF",
]

FULL = Fraction(1)
HALF = Fraction(1, 2)


def _swap(p):
    return (p[1], p[0])


def segment_hits_edge(x, y, e: DualEdge) -> Fraction:
    """Weight of the hop ``x - y`` in the current through ``e``.

    1 if the closed segment meets the open edge, 1/2 if it meets only an
    endpoint, 0 otherwise.  Exact: every comparison is between integers.
    """
    k, z = e
    if k == 2:
        x, y, z = _swap(x), _swap(y), _swap(z)
    dx = x[0] - y[0]
    if dx == 0:
        return Fraction(0)
    line = 2 * z[0] + 1  # doubled abscissa of the dual line
    lo, hi = sorted((2 * x[0], 2 * y[0]))
    if not lo < line < hi:
        return Fraction(0)
    # doubled ordinate at the crossing: 2Y = num / den with den > 0
    num = 2 * y[1] * dx + (line - 2 * y[0]) * (x[1] - y[1])
    den = dx
    if den < 0:
        num, den = -num, -den
    bottom, top = (2 * z[1] - 1) * den, (2 * z[1] + 1) * den
    if bottom < num < top:
        return FULL
    if num == bottom or num == top:
        return HALF
    return Fraction(0)


@dataclass(frozen=True)
class CurrentCoefficients:
    """Hops contributing to the current through ``edge``.

    Each entry is ``(x, y, weight, sign)``; the operator is
    ``sum i sign weight a*_x T_b(x, y) a_y``.
    """

    edge: DualEdge
    entries: tuple

    def pairs(self) -> set:
        return {(x, y) for x, y, _, _ in self.entries}


def current_coefficients(spec: ModelSpec, e: DualEdge) -> CurrentCoefficients:
    """Enumerate the contributing hops of ``e`` by direct intersection tests."""
    e = DualEdge(e[0], Site(*e[1]))
    k = e.k
    out = []
    for x, y, _ in spec.hopping_pairs():
        w = segment_hits_edge(x, y, e)
        if w:
            sign = int(np.sign(x[k - 1] - y[k - 1]))
            out.append((x, y, w, sign))
    return CurrentCoefficients(e, tuple(out))


def _crossings(x, y, k: int):
    """``(edge, weight)`` for every dual edge of direction ``k`` met by ``xy``."""
    if k == 2:
        xs, ys = _swap(x), _swap(y)
    else:
        xs, ys = x, y
    dx = xs[0] - ys[0]
    if dx == 0:
        return []
    out = []
    for m in range(min(xs[0], ys[0]), max(xs[0], ys[0])):
        line = 2 * m + 1
        num = 2 * ys[1] * dx + (line - 2 * ys[0]) * (xs[1] - ys[1])
        den = dx
        if den < 0:
            num, den = -num, -den
        q, r = divmod(num, den)  # 2Y = q + r/den
        if r == 0 and q % 2 != 0:
            # through a dual vertex at doubled height q
            for n in ((q - 1) // 2, (q + 1) // 2):
                out.append(((m, n), HALF))
        else:
            # unique n with 2n - 1 < 2Y < 2n + 1
            n = (q + 1) // 2
            out.append(((m, n), FULL))
    if k == 2:
        out = [((b, a), w) for (a, b), w in out]
    return [(DualEdge(k, Site(*z)), w) for z, w in out]


def crossing_table(spec: ModelSpec) -> dict:
    """``edge -> [(x, y, weight, sign)]`` for every dual edge with a hop.

    Built pair by pair; agrees with :func:`current_coefficients`.
    """
    table: dict = defaultdict(list)
    for x, y, _ in spec.hopping_pairs():
        for k in (1, 2):
            sign = int(np.sign(x[k - 1] - y[k - 1]))
            if sign == 0:
                continue
            for e, w in _crossings(x, y, k):
                table[e].append((x, y, w, sign))
    return dict(table)


def current_terms(spec: ModelSpec, e: DualEdge, modes: ModeIndex | None = None,
                  coefficients: CurrentCoefficients | None = None) -> OperatorTerms:
    """The current operator ``J^z_k`` in engine-neutral form."""
    modes = modes or mode_index(spec)
    coeffs = coefficients or current_coefficients(spec, e)
    hop = {(x, y): t for x, y, t in spec.hopping_pairs()}
    hops = [(x, y, 1j * sign * float(w) * hop[(x, y)]) for x, y, w, sign in coeffs.entries]
    return hop_terms(modes, hops)


def divergence_terms(spec: ModelSpec, z, modes: ModeIndex | None = None) -> OperatorTerms:
    """``J_1^z - J_1^{z-e1} + J_2^z - J_2^{z-e2}``."""
    modes = modes or mode_index(spec)
    z = Site(*z)
    total = OperatorTerms(modes.M)
    for k in (1, 2):
        total = total + current_terms(spec, DualEdge(k, z), modes)
        total = total - current_terms(spec, DualEdge(k, z.shifted(k, -1)), modes)
    return total


def divergence_residual(spec: ModelSpec, z, cap: int | None = None) -> float:
    """Largest entry of ``i[H, N_z] - div J`` over all particle-number sectors."""
    from .fock import assemble
    from .operators import hamiltonian_terms, number_terms

    z = Site(*z)
    if z not in spec.region:
        raise ValueError(f"site {tuple(z)} is not in the region")
    modes = mode_index(spec)
    H = assemble(hamiltonian_terms(spec, modes), cap=cap)
    Nz = assemble(number_terms([z], modes), cap=cap)
    div = assemble(divergence_terms(spec, z, modes), cap=cap)
    return (H.commutator(Nz).scaled(1j) - div).max_abs()


def continuity_residuals(spec: ModelSpec, sites=None, cap: int | None = None) -> dict:
    """``site -> divergence residual``, assembling ``H`` once for all sites."""
    from .fock import assemble
    from .operators import hamiltonian_terms, number_terms

    modes = mode_index(spec)
    H = assemble(hamiltonian_terms(spec, modes), cap=cap)
    sectors = H.sectors()
    out = {}
    for z in (spec.region if sites is None else sites):
        z = Site(*z)
        Nz = assemble(number_terms([z], modes), sectors=sectors)
        div = assemble(divergence_terms(spec, z, modes), sectors=sectors)
        out[z] = (H.commutator(Nz).scaled(1j) - div).max_abs()
    return out


def complement_distance_map(region: SiteSet) -> dict:
    """``site -> dist(site, Z^2 minus region)`` by breadth-first search."""
    dist = {}
    queue = deque()
    for x in region:
        if any(x.shifted(k, s) not in region for k in (1, 2) for s in (1, -1)):
            dist[x] = 1
            queue.append(x)
    while queue:
        x = queue.popleft()
        for k in (1, 2):
            for s in (1, -1):
                y = x.shifted(k, s)
                if y in region and y not in dist:
                    dist[y] = dist[x] + 1
                    queue.append(y)
    return dist


@dataclass
class CurrentField:
    """Expectation ``j`` of the current through each dual edge."""

    values: dict
    region: SiteSet
    meta: dict = field(default_factory=dict)

    def __getitem__(self, e) -> float:
        return self.values[DualEdge(e[0], Site(*e[1]))]

    def get(self, k: int, z, default=None):
        return self.values.get(DualEdge(k, Site(*z)), default)

    def edges(self) -> list[DualEdge]:
        return sorted(self.values, key=DualEdge.sort_key)

    def shell_distances(self) -> dict:
        dmap = complement_distance_map(self.region)
        out = {}
        for e in self.values:
            z = e.z
            out[e] = dmap[z] if z in dmap else set_distance(SiteSet.custom([z]), Complement(self.region))
        return out

    def to_csv(self) -> str:
        """Columns ``k, z1, z2, j, shell_distance``; rows ordered by ``(k, z1, z2)``."""
        shells = self.shell_distances()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "z1", "z2", "j", "shell_distance"])
        for e in self.edges():
            w.writerow([e.k, e.z.x1, e.z.x2, f"{self.values[e]:.17g}", shells[e]])
        return buf.getvalue()


def _field_edges(region: SiteSet) -> list[DualEdge]:
    out = []
    for z in region:
        for k in (1, 2):
            if z.shifted(k) in region:
                out.append(DualEdge(k, z))
    return sorted(out, key=DualEdge.sort_key)


def current_field(spec: ModelSpec, state, engine: str | None = None) -> CurrentField:
    """Gibbs expectation of every dual-edge current of the region.

    ``state`` is a :class:`~bulkedge.free.FreeGibbs` or an
    :class:`~bulkedge.fock.EDGibbs` built from the same model.
    """
    return CurrentField(_edge_values(spec, state, "expectation"), spec.region,
                        {"engine": engine or type(state).__name__})


def current_mu_derivative_field(spec: ModelSpec, state) -> CurrentField:
    """``d j / d mu`` for every dual edge, via the fluctuation formula."""
    return CurrentField(_edge_values(spec, state, "mu_derivative"), spec.region,
                        {"engine": type(state).__name__, "quantity": "mu_derivative"})


def _edge_values(spec: ModelSpec, state, what: str) -> dict:
    from .fock import EDGibbs, assemble
    from .free import FreeGibbs

    table = crossing_table(spec)
    edges = _field_edges(spec.region)
    modes = mode_index(spec)
    if isinstance(state, FreeGibbs):
        s = spec.s
        hop = {(x, y): t for x, y, t in spec.hopping_pairs()}
        ii, jj, cc, ee = [], [], [], []
        for eid, e in enumerate(edges):
            for x, y, w, sign in table.get(e, ()):
                t = hop[(x, y)]
                px, py = modes.position(x, 0), modes.position(y, 0)
                for a in range(s):
                    for b in range(s):
                        if t[a, b] != 0:
                            ii.append(px + a)
                            jj.append(py + b)
                            cc.append(1j * sign * float(w) * t[a, b])
                            ee.append(eid)
        weights = state.derivative_weights() if what == "mu_derivative" else None
        g = state.entries(ii, jj, weights) if ii else np.zeros(0, complex)
        vals = np.zeros(len(edges), dtype=complex)
        np.add.at(vals, np.asarray(ee, np.int64), np.asarray(cc) * g)
        return {e: float(vals[k].real) for k, e in enumerate(edges)}
    if isinstance(state, EDGibbs):
        out = {}
        for e in edges:
            coeffs = CurrentCoefficients(e, tuple(table.get(e, ())))
            op = assemble(current_terms(spec, e, modes, coeffs), sectors=state.spectrum.sectors())
            if what == "mu_derivative":
                out[e] = state.mu_derivative_expectation(op)
            else:
                out[e] = float(state.expectation(op).real)
        return out
    raise TypeError(f"unsupported state type {type(state).__name__}")


def conservation_sum(field_: CurrentField, Z: SiteSet, ambient: SiteSet | None = None) -> float:
    """Signed net current ``sum sign * j`` over the dual-edge boundary of ``Z``."""
    ambient = ambient or field_.region
    total = 0.0
    for e, sign in dual_edge_boundary(Z, ambient):
        if e not in field_.values:
            raise KeyError(f"current field has no value on edge {e}")
        total += sign * field_.values[e]
    return total


def conservation_families(L: int):
    """Rectangles in the box whose boundary currents must cancel.

    Yields ``(family, parameters, Z)`` for three families: ``"a"`` the part
    right of column ``m``, ``"b"`` the block ``1 <= x1 <= m`` below row
    ``L``, ``"c"`` the upper right corner ``x1 > m, x2 >= n``.
    """
    from .geometry import rectangle

    for m in range(-L, L):
        yield "a", (m,), rectangle((m + 1, L), (0, 2 * L))
    for m in range(1, L + 1):
        yield "b", (m,), rectangle((1, m), (0, L))
    for m in range(-L, L):
        for n in range(1, 2 * L + 1):
            yield "c", (m, n), rectangle((m + 1, L), (n, 2 * L))


def edge_current(field_: CurrentField, d: int, column: int = 0) -> float:
    """``I^d = sum_{n=0}^{d-1} j_1^{(column, n)}``."""
    L = _box_size(field_.region)
    if not 1 <= d <= L:
        raise ValueError(f"d must satisfy 1 <= d <= L={L}, got {d}")
    return float(sum(field_[(1, (column, n))] for n in range(d)))


def upper_edge_current(field_: CurrentField, d: int, column: int = 0) -> float:
    """The same line sum taken downward from the top row ``2L``."""
    L = _box_size(field_.region)
    if not 1 <= d <= L:
        raise ValueError(f"d must satisfy 1 <= d <= L={L}, got {d}")
    return float(sum(field_[(1, (column, 2 * L - n))] for n in range(d)))


def _box_size(region: SiteSet) -> int:
    x1a, x1b, x2a, x2b = region.bounds()
    L = x1b
    if x1a != -L or x2a != 0 or x2b != 2 * L or len(region) != (2 * L + 1) ** 2:
        raise ValueError("edge currents are defined on half-plane boxes")
    return L


@dataclass(frozen=True)
class DecayProfile:
    """Shell-maximum envelope ``r -> max |j|`` over edges at distance ``r``.

    ``slope`` and ``intercept`` fit ``log max|j| ~ intercept + slope r`` over
    the strictly positive shells.
    """

    r: np.ndarray
    shellmax: np.ndarray
    slope: float = math.nan
    intercept: float = math.nan

    def value(self, r: int) -> float:
        hit = np.nonzero(self.r == r)[0]
        return float(self.shellmax[hit[0]]) if len(hit) else 0.0

    def tail(self, r0: int) -> float:
        """``sum_{r >= r0} shellmax(r)``."""
        return float(self.shellmax[self.r >= r0].sum())

    def as_rows(self) -> list[tuple[int, float]]:
        return [(int(a), float(b)) for a, b in zip(self.r, self.shellmax)]


def bloch_profile(field_: CurrentField, spec: ModelSpec | None = None) -> DecayProfile:
    """Group the field by shell distance of the edge base and take maxima."""
    shells = field_.shell_distances()
    best: dict = {}
    for e, j in field_.values.items():
        r = shells[e]
        best[r] = max(best.get(r, 0.0), abs(j))
    r = np.array(sorted(best), dtype=np.int64)
    vals = np.array([best[k] for k in r])
    slope = intercept = math.nan
    pos = vals > 0
    if pos.sum() >= 2:
        slope, intercept = np.polyfit(r[pos].astype(float), np.log(vals[pos]), 1)
    return DecayProfile(r, vals, float(slope), float(intercept))


def theta_bound(profile: DecayProfile, L: int, R: int, D: int,
                C: float | None = None, zeta=None) -> float:
    """``2 C min_{R+D <= d <= L} (2 d^2 / L + sum_{n >= d-R-D} zeta(n))``.

    By default ``C`` is the largest shell value and ``zeta`` the profile
    divided by ``C``; distances below the first measured shell reuse its
    value and distances beyond the last count as zero.  A callable ``zeta``
    replaces the measured one, summed over ``n <= max(profile.r, L)``.
    """
    if C is None:
        C = float(profile.shellmax.max()) if len(profile.shellmax) else 0.0
    if C == 0.0:
        return 0.0
    top = int(max(profile.r.max() if len(profile.r) else 0, L))
    if zeta is None:
        first = int(profile.r.min())

        def zeta(n):
            return profile.value(max(n, first)) / C

    z = np.array([zeta(n) for n in range(top + 1)])
    tails = np.cumsum(z[::-1])[::-1]
    best = math.inf
    for d in range(R + D, L + 1):
        start = d - R - D
        best = min(best, 2.0 * d * d / L + (tails[start] if start <= top else 0.0))
    return 2.0 * C * best
