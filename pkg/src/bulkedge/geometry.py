"""Finite regions of the square lattice, dual edges and boundary bookkeeping.

All coordinates are integers.  Points of the dual lattice sit at
half-integer positions; wherever they are needed they are stored doubled,
so every geometric decision is made in exact integer arithmetic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple

__all__ = [
    "Site",
    "SiteSet",
    "DualEdge",
    "RegionMask",
    "Complement",
    "distance",
    "set_distance",
    "box",
    "centered_box",
    "rectangle",
    "ball",
    "random_connected_region",
    "dual_edge_boundary",
    "vertical_edges",
    "horizontal_edges",
    "five_region_masks",
    "REGION_LABELS",
]


class Site(NamedTuple):
    """A lattice point ``(x1, x2)``; ``x1`` is the column, ``x2`` the row."""

    x1: int
    x2: int

    def __add__(self, other):  # type: ignore[override]
        return Site(self.x1 + other[0], self.x2 + other[1])

    def __sub__(self, other):
        return Site(self.x1 - other[0], self.x2 - other[1])

    def __neg__(self):
        return Site(-self.x1, -self.x2)

    def shifted(self, k: int, step: int = 1) -> "Site":
        """Move ``step`` units along direction ``k`` (1 or 2)."""
        return Site(self.x1 + step, self.x2) if k == 1 else Site(self.x1, self.x2 + step)


def distance(a, b) -> int:
    """1-metric distance between two sites."""
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


def _row_major(site: Site) -> tuple[int, int]:
    return (site[1], site[0])


@dataclass(frozen=True, eq=False)
class SiteSet:
    """Immutable finite set of sites, kept in row-major order.

    Row-major means sorted by row ``x2`` first and column ``x1`` second; the
    fermionic mode ordering is derived from it, so it is part of the contract.
    """

    members: tuple[Site, ...]
    kind: str = "custom"
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        sites = sorted({Site(int(s[0]), int(s[1])) for s in self.members}, key=_row_major)
        object.__setattr__(self, "members", tuple(sites))
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(sites)})

    @classmethod
    def custom(cls, sites: Iterable) -> "SiteSet":
        return cls(tuple(sites), "custom")

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self) -> Iterator[Site]:
        return iter(self.members)

    def __contains__(self, site) -> bool:
        return (site[0], site[1]) in self._index

    def __eq__(self, other) -> bool:
        if not isinstance(other, SiteSet):
            return NotImplemented
        return self.members == other.members

    def __hash__(self) -> int:
        return hash(self.members)

    def index(self, site) -> int:
        return self._index[(site[0], site[1])]

    def issubset(self, other: "SiteSet") -> bool:
        return all(s in other for s in self.members)

    def difference(self, other: "SiteSet") -> "SiteSet":
        return SiteSet.custom(s for s in self.members if s not in other)

    def intersection(self, other: "SiteSet") -> "SiteSet":
        return SiteSet.custom(s for s in self.members if s in other)

    def union(self, other: "SiteSet") -> "SiteSet":
        return SiteSet.custom(self.members + other.members)

    def translated(self, y) -> "SiteSet":
        return SiteSet.custom(s + y for s in self.members)

    def bounds(self) -> tuple[int, int, int, int]:
        """``(x1_min, x1_max, x2_min, x2_max)``; raises on the empty set."""
        if not self.members:
            raise ValueError("empty SiteSet has no bounds")
        xs = [s.x1 for s in self.members]
        ys = [s.x2 for s in self.members]
        return min(xs), max(xs), min(ys), max(ys)

    def diameter(self) -> int:
        return max((distance(a, b) for a in self.members for b in self.members), default=0)


def rectangle(x1_range: tuple[int, int], x2_range: tuple[int, int], kind="custom") -> SiteSet:
    """Sites with ``x1`` and ``x2`` in the given inclusive ranges."""
    (a, b), (c, d) = x1_range, x2_range
    return SiteSet(tuple(Site(i, j) for j in range(c, d + 1) for i in range(a, b + 1)), kind)


def box(L: int) -> SiteSet:
    """The half-plane box ``[-L, L] x [0, 2L]``."""
    if L < 0:
        raise ValueError("L must be nonnegative")
    return rectangle((-L, L), (0, 2 * L), kind="box")


def centered_box(L: int) -> SiteSet:
    """The box ``[-L, L]^2`` centred on the origin."""
    if L < 0:
        raise ValueError("L must be nonnegative")
    return rectangle((-L, L), (-L, L), kind="centered_box")


def ball(center, radius: int, within: SiteSet | None = None) -> SiteSet:
    """1-metric ball around ``center``, optionally intersected with ``within``."""
    c = Site(*center)
    pts = [
        Site(c.x1 + i, c.x2 + j)
        for j in range(-radius, radius + 1)
        for i in range(-(radius - abs(j)), radius - abs(j) + 1)
    ]
    if within is not None:
        pts = [p for p in pts if p in within]
    return SiteSet(tuple(pts), "ball")


def random_connected_region(ambient: SiteSet, size: int, rng) -> SiteSet:
    """Grow a nearest-neighbour connected set of ``size`` sites inside ``ambient``.

    ``rng`` is a :class:`numpy.random.Generator`; the result only depends on
    its state, so seeded runs repeat exactly.
    """
    if not 1 <= size <= len(ambient):
        raise ValueError(f"size must lie in 1..{len(ambient)}")
    start = ambient.members[int(rng.integers(len(ambient)))]
    chosen = {start}
    frontier = []

    def grow(x):
        for k in (1, 2):
            for step in (1, -1):
                y = x.shifted(k, step)
                if y in ambient and y not in chosen and y not in frontier:
                    frontier.append(y)

    grow(start)
    while len(chosen) < size and frontier:
        y = frontier.pop(int(rng.integers(len(frontier))))
        chosen.add(y)
        grow(y)
    return SiteSet.custom(chosen)


@dataclass(frozen=True)
class Complement:
    """The infinite set ``Z^2 minus base``; only usable as a distance target."""

    base: SiteSet

    def __contains__(self, site) -> bool:
        return site not in self.base


def _distance_to_complement(x: Site, base: SiteSet) -> int:
    if x not in base:
        return 0
    r = 1
    while True:
        for j in range(-r, r + 1):
            rem = r - abs(j)
            for i in {-rem, rem}:
                if Site(x.x1 + i, x.x2 + j) not in base:
                    return r
        r += 1


def set_distance(X: SiteSet, Y) -> float:
    """Minimal 1-metric distance between ``X`` and ``Y``.

    ``Y`` is a :class:`SiteSet` or a :class:`Complement`.  An empty ``Y``
    gives ``math.inf``.
    """
    if len(X) == 0:
        raise ValueError("set_distance needs a nonempty first argument")
    if isinstance(Y, Complement):
        return min(_distance_to_complement(x, Y.base) for x in X)
    if len(Y) == 0:
        return math.inf
    return min(distance(x, y) for x in X for y in Y)


class DualEdge(NamedTuple):
    """Dual edge ``e_{k,z}`` crossing the bond from ``z`` to ``z + e_k``."""

    k: int
    z: Site

    def doubled_endpoints(self) -> tuple[tuple[int, int], tuple[int, int]]:
        """Endpoints of the closed edge, coordinates multiplied by two."""
        z1, z2 = self.z
        if self.k == 1:
            return (2 * z1 + 1, 2 * z2 - 1), (2 * z1 + 1, 2 * z2 + 1)
        return (2 * z1 - 1, 2 * z2 + 1), (2 * z1 + 1, 2 * z2 + 1)

    def sort_key(self) -> tuple[int, int, int]:
        return (self.k, self.z[0], self.z[1])


def vertical_edges(L: int) -> list[DualEdge]:
    """All ``e_{1,(m,n)}`` of the box: ``-L <= m <= L-1``, ``0 <= n <= 2L``."""
    return [DualEdge(1, Site(m, n)) for m in range(-L, L) for n in range(0, 2 * L + 1)]


def horizontal_edges(L: int) -> list[DualEdge]:
    """All ``e_{2,(m,n)}`` of the box: ``-L <= m <= L``, ``0 <= n <= 2L-1``."""
    return [DualEdge(2, Site(m, n)) for m in range(-L, L + 1) for n in range(0, 2 * L)]


def dual_edge_boundary(Z: SiteSet, ambient: SiteSet) -> list[tuple[DualEdge, int]]:
    """Signed dual-edge boundary of ``Z`` inside ``ambient``.

    Returns ``(edge, sign)`` for every ``e_{k,z}`` with ``z`` and ``z + e_k``
    in ``ambient`` and exactly one of them in ``Z``.  The sign is ``-1`` when
    the base ``z`` lies in ``Z`` and ``+1`` otherwise.  Sorted by
    ``(k, z1, z2)``.
    """
    if not Z.issubset(ambient):
        raise ValueError("Z must be a subset of the ambient region")
    out = []
    for z in ambient:
        for k in (1, 2):
            w = z.shifted(k)
            if w not in ambient:
                continue
            zin, win = z in Z, w in Z
            if zin != win:
                out.append((DualEdge(k, z), -1 if zin else 1))
    out.sort(key=lambda p: p[0].sort_key())
    return out


REGION_LABELS = ("bulk", "left", "right", "bottom", "top")


@dataclass(frozen=True)
class RegionMask:
    label: str
    edges: frozenset

    def __len__(self) -> int:
        return len(self.edges)

    def __contains__(self, edge) -> bool:
        return edge in self.edges


def five_region_masks(L: int, d: int, R: int = 0, D: int = 0) -> dict[str, RegionMask]:
    """Split the vertical dual edges of the box into bulk/left/right/bottom/top.

    Requires ``R + D < d <= L``.
    """
    if not (R + D < d <= L):
        raise ValueError(f"need R + D < d <= L, got R={R}, D={D}, d={d}, L={L}")
    groups: dict[str, set] = {name: set() for name in REGION_LABELS}
    for e in vertical_edges(L):
        m, n = e.z
        if m <= -L + d - 1:
            groups["left"].add(e)
        elif m >= L - d:
            groups["right"].add(e)
        elif n <= d - 1:
            groups["bottom"].add(e)
        elif n >= 2 * L - d + 1:
            groups["top"].add(e)
        else:
            groups["bulk"].add(e)
    return {name: RegionMask(name, frozenset(groups[name])) for name in REGION_LABELS}
