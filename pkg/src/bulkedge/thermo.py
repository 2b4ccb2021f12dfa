"""Thermodynamic observables built on top of either engine.

Pressure is ``p = -(volume beta)^{-1} log Z``; the volume is the number of
sites (``(2L+1)^2`` on boxes).  The magnetization ``m = dp/db`` is computed
three ways: a central difference of ``p`` in ``b``, the expectation of the
magnetic derivative ``H'`` and the row-weighted sum of vertical currents.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import currents as cur
from .fock import EDGibbs, ThermoParams, assemble, solve
from .free import FreeGibbs, PreciseFreeGibbs, one_body, one_body_eigenvalues, _pressure_from_values
from .geometry import REGION_LABELS, Complement, SiteSet, five_region_masks, set_distance
from .model import ModelSpec, bulk_hamiltonian, local_norm_constant, restrict
from .operators import OperatorTerms, magnetic_derivative_terms, mode_index, number_terms

__all__ = [
    "EngineMismatch",
    "gibbs_state",
    "resolve_engine",
    "pressure",
    "MagnetizationReport",
    "magnetization",
    "MuDerivativeReport",
    "mu_derivative_report",
    "FiveRegionReport",
    "five_region_report",
    "IndistinguishabilityGap",
    "indistinguishability_gap",
    "BulkPressureComparison",
    "bulk_pressure_comparison",
    "EdgeIndependence",
    "edge_independence_gap",
    "observable_expectation",
    "format_float",
    "engine_comparison",
    "translation_covariance",
    "indistinguishability_curve",
    "to_jsonable",
]

DEFAULT_B_STEP = 1e-5
DEFAULT_MU_STEP = 1e-4


class EngineMismatch(ValueError):
    """The requested engine cannot represent the model."""


def format_float(x: float) -> str:
    return f"{x:.17g}"


def resolve_engine(spec: ModelSpec, engine: str = "auto") -> str:
    if engine == "auto":
        return "free" if spec.is_quadratic() else "ed"
    if engine == "free" and not spec.is_quadratic():
        raise EngineMismatch("the free engine needs a quadratic model; use engine='ed'")
    if engine not in ("ed", "free"):
        raise EngineMismatch(f"unknown engine {engine!r}")
    return engine


def gibbs_state(spec: ModelSpec, params: ThermoParams, engine: str = "auto", **kw):
    """:class:`FreeGibbs` or :class:`EDGibbs` for ``spec``."""
    if resolve_engine(spec, engine) == "free":
        return FreeGibbs(one_body(spec), params)
    return solve(spec, params, **kw)


def _volume(spec: ModelSpec) -> int:
    return len(spec.region)


def pressure(spec: ModelSpec, params: ThermoParams, engine: str = "auto", state=None) -> float:
    """``-(volume beta)^{-1} log Z``; ``0`` on the empty region."""
    if len(spec.region) == 0:
        return 0.0
    if state is not None:
        return -state.log_partition / (params.beta * _volume(spec))
    if resolve_engine(spec, engine) == "free":
        return _pressure_from_values(one_body_eigenvalues(one_body(spec)), params, _volume(spec))
    return -solve(spec, params).log_partition / (params.beta * _volume(spec))


def observable_expectation(state, terms: OperatorTerms) -> complex:
    """``<A>`` for an operator in engine-neutral form."""
    if isinstance(state, FreeGibbs):
        return state.expectation(terms)
    return state.expectation(assemble(terms, sectors=state.spectrum.sectors()))


def observable_mu_derivative(state, terms: OperatorTerms) -> float:
    if isinstance(state, FreeGibbs):
        return float(state.mu_derivative(terms).real)
    return state.mu_derivative_expectation(assemble(terms, sectors=state.spectrum.sectors()))


def _row_weighted_sum(field_: cur.CurrentField) -> float:
    return float(sum(e.z.x2 * j for e, j in field_.values.items() if e.k == 1))


@dataclass
class MagnetizationReport:
    """Three routes to ``m_L`` plus edge currents ``I^d``."""

    L: int
    m_fd: float
    m_duhamel: float
    m_current_sum: float
    fd_step: float
    edge_currents: dict = field(default_factory=dict)
    fd_table: list = field(default_factory=list)

    @property
    def identity_gap(self) -> float:
        return abs(self.m_duhamel - self.m_current_sum)

    @property
    def fd_gap(self) -> float:
        return abs(self.m_fd - self.m_duhamel)

    @property
    def edge_gap(self) -> float:
        """``m_L - I^L``."""
        return self.m_duhamel - self.edge_currents[self.L]

    @property
    def edge_sum(self) -> float:
        """``m_L + I^L``; small when the current sum runs opposite to ``I``."""
        return self.m_duhamel + self.edge_currents[self.L]


def _fd_in_b(spec, params, engine, h) -> float:
    lo = pressure(spec.with_field(spec.b - h), params, engine)
    hi = pressure(spec.with_field(spec.b + h), params, engine)
    return (hi - lo) / (2.0 * h)


def magnetization(spec: ModelSpec, params: ThermoParams, engine: str = "auto",
                  fd_step: float = DEFAULT_B_STEP, d_values: Sequence[int] = (),
                  extra_steps: Sequence[float] = (), state=None, field_=None) -> MagnetizationReport:
    """Magnetization by finite differences, by ``<H'>`` and by the current sum.

    ``I^L`` is always included in ``edge_currents`` for box regions;
    ``extra_steps`` adds rows ``(h, m_fd(h))`` to ``fd_table``.
    """
    if fd_step <= 0:
        raise ValueError("fd_step must be positive")
    engine = resolve_engine(spec, engine)
    state = state or gibbs_state(spec, params, engine)
    V = _volume(spec)
    m_duhamel = float(observable_expectation(state, magnetic_derivative_terms(spec)).real) / V
    field_ = field_ or cur.current_field(spec, state, engine)
    m_sum = _row_weighted_sum(field_) / V
    m_fd = _fd_in_b(spec, params, engine, fd_step)
    table = [(fd_step, m_fd)] + [(h, _fd_in_b(spec, params, engine, h)) for h in extra_steps]
    L = spec.box_size()
    edges = {}
    if L is not None:
        for d in sorted(set(d_values) | {L}):
            edges[d] = cur.edge_current(field_, d)
    return MagnetizationReport(L if L is not None else -1, m_fd, m_duhamel, m_sum, fd_step, edges, table)


@dataclass
class MuDerivativeReport:
    """``mu``-derivatives by the fluctuation formula and by central differences."""

    L: int
    dm_cov: float
    dm_fd: float
    dI_cov: dict
    dI_fd: dict
    dp_fd: float
    density: float
    fd_step: float

    @property
    def gap(self) -> float:
        """``|d_mu m_L - d_mu I^L|`` from the covariance route."""
        return abs(self.dm_cov - self.dI_cov[self.L])

    def max_relative_disagreement(self, floor: float = 0.0) -> float:
        pairs = [(self.dm_cov, self.dm_fd)] + [(self.dI_cov[d], self.dI_fd[d]) for d in self.dI_cov]
        worst = 0.0
        for a, b in pairs:
            scale = max(abs(a), abs(b))
            if scale > floor:
                worst = max(worst, abs(a - b) / scale)
        return worst


def _with_mu(state, mu):
    return state.with_mu(mu)


def mu_derivative_report(spec: ModelSpec, params: ThermoParams, engine: str = "auto",
                         fd_step: float = DEFAULT_MU_STEP, d_values: Sequence[int] = (),
                         state=None) -> MuDerivativeReport:
    """``d/dmu`` of ``m_L``, ``I^d`` and ``p_L`` two ways each."""
    if fd_step <= 0:
        raise ValueError("fd_step must be positive")
    engine = resolve_engine(spec, engine)
    state = state or gibbs_state(spec, params, engine)
    L = spec.box_size()
    if L is None:
        raise ValueError("mu-derivative reports need a half-plane box")
    V = _volume(spec)
    hprime = magnetic_derivative_terms(spec)
    ds = sorted(set(d_values) | {L})

    dm_cov = observable_mu_derivative(state, hprime) / V
    dfield = cur.current_mu_derivative_field(spec, state)
    dI_cov = {d: cur.edge_current(dfield, d) for d in ds}

    lo, hi = _with_mu(state, params.mu - fd_step), _with_mu(state, params.mu + fd_step)
    m_lo = float(observable_expectation(lo, hprime).real) / V
    m_hi = float(observable_expectation(hi, hprime).real) / V
    f_lo, f_hi = cur.current_field(spec, lo), cur.current_field(spec, hi)
    dI_fd = {d: (cur.edge_current(f_hi, d) - cur.edge_current(f_lo, d)) / (2 * fd_step) for d in ds}
    dp_fd = (hi.log_partition - lo.log_partition) / (-params.beta * V * 2 * fd_step)
    density = state.number_expectation() / V
    return MuDerivativeReport(L, dm_cov, (m_hi - m_lo) / (2 * fd_step), dI_cov, dI_fd, dp_fd,
                              density, fd_step)


@dataclass
class FiveRegionReport:
    L: int
    d: int
    parts: dict
    m_current_sum: float
    bulk_abs_bound: float
    bulk_shell_bound: float

    @property
    def total(self) -> float:
        return float(sum(self.parts[k] for k in REGION_LABELS))


def five_region_report(field_: cur.CurrentField, L: int, d: int, R: int = 1, D: int = 1,
                       profile: cur.DecayProfile | None = None) -> FiveRegionReport:
    """Row-weighted current sums over bulk, left, right, bottom and top.

    Also returns two measured bounds on the bulk part:
    ``(2L+1)^{-1} sum_bulk |j|`` and the same with each ``|j|`` replaced by
    the shell maximum of its distance.
    """
    masks = five_region_masks(L, d, R, D)
    V = (2 * L + 1) ** 2
    parts = {}
    for name, mask in masks.items():
        parts[name] = float(sum(e.z.x2 * field_[e] for e in mask.edges)) / V
    total = _row_weighted_sum(field_) / V
    bulk = masks["bulk"].edges
    abs_bound = float(sum(abs(field_[e]) for e in bulk)) / (2 * L + 1)
    profile = profile or cur.bloch_profile(field_)
    shells = field_.shell_distances()
    shell_bound = float(sum(profile.value(shells[e]) for e in bulk)) / (2 * L + 1)
    return FiveRegionReport(L, d, parts, total, abs_bound, shell_bound)


@dataclass
class IndistinguishabilityGap:
    X: SiteSet
    sub: SiteSet
    observable: str
    gap: float
    full_value: float
    restricted_value: float
    dist_to_outside: float
    dist_to_rest: float


def indistinguishability_gap(spec: ModelSpec, params: ThermoParams, sub: SiteSet, X: SiteSet,
                             A, observable: str = "custom", engine: str = "auto",
                             state=None, digits: int | None = None) -> IndistinguishabilityGap:
    """``|tr(rho_L A) - tr(rho[H|_sub] A)|`` for ``A`` supported in ``X``.

    ``A`` is a callable ``ModelSpec -> OperatorTerms`` so it can be built on
    both mode sets.  With ``digits`` (free engine only) both traces are
    evaluated in extended precision, which resolves gaps below double
    round-off.
    """
    if not X.issubset(sub):
        raise ValueError("X must lie inside the restricted region")
    if not sub.issubset(spec.region):
        raise ValueError("the restricted region must lie inside the model region")
    engine = resolve_engine(spec, engine)
    small = restrict(spec, sub)
    if digits is not None:
        if engine != "free":
            raise EngineMismatch("extended precision is only available for the free engine")
        state = state if isinstance(state, PreciseFreeGibbs) else PreciseFreeGibbs(one_body(spec), params, digits)
        full = state.expectation(A(spec)).real
        sub_state = state if sub == spec.region else PreciseFreeGibbs(one_body(small), params, digits)
        part = sub_state.expectation(A(small)).real
        gap, full_val, sub_val = float(abs(full - part)), float(full), float(part)
    else:
        state = state or gibbs_state(spec, params, engine)
        full_val = float(observable_expectation(state, A(spec)).real)
        sub_state = state if sub == spec.region else gibbs_state(small, params, engine)
        sub_val = float(observable_expectation(sub_state, A(small)).real)
        gap = abs(full_val - sub_val)
    rest = spec.region.difference(sub)
    return IndistinguishabilityGap(
        X, sub, observable, gap, full_val, sub_val,
        set_distance(X, Complement(sub)), set_distance(X, rest),
    )


@dataclass
class BulkPressureComparison:
    L: int
    p_edge: float
    p_bulk: float
    C_edge: float
    D: int

    @property
    def gap(self) -> float:
        return abs(self.p_edge - self.p_bulk)

    @property
    def bound(self) -> float:
        return self.C_edge * self.D / (2 * self.L + 1)


def bulk_pressure_comparison(spec_family: Callable[[int], ModelSpec] | ModelSpec, L: int,
                             params: ThermoParams, engine: str = "auto") -> BulkPressureComparison:
    """Pressure of the edge system on the box against the bulk system on ``[-L, L]^2``."""
    spec = spec_family(L) if callable(spec_family) else spec_family
    p_edge = pressure(spec, params, engine)
    bulk = bulk_hamiltonian(spec, L)
    p_bulk = pressure(bulk, params, engine)
    C = local_norm_constant(spec, params.mu, "edge")
    return BulkPressureComparison(L, p_edge, p_bulk, C, spec.D)


@dataclass
class EdgeIndependence:
    d: int
    I_a: float
    I_b: float
    upper_gap: float
    line_tail_a: float
    line_tail_b: float

    @property
    def gap(self) -> float:
        return abs(self.I_a - self.I_b)

    @property
    def bound(self) -> float:
        return self.upper_gap + self.line_tail_a + self.line_tail_b


def _same_bulk(a: ModelSpec, b: ModelSpec) -> bool:
    if a.region != b.region or a.b != b.b or a.s != b.s:
        return False
    da, db = a.bulk_hopping.displacements, b.bulk_hopping.displacements
    if set(da) != set(db) or any(not np.array_equal(da[k], db[k]) for k in da):
        return False
    return a.bulk_interaction == b.bulk_interaction


def edge_independence_gap(spec_a: ModelSpec, spec_b: ModelSpec, params: ThermoParams, d: int,
                          L: int | None = None, engine: str = "auto",
                          fields=None) -> EdgeIndependence:
    """``|I^d_A - I^d_B|`` next to a bound assembled from measured currents.

    The bound is ``sum_{n<d} |j_up,A - j_up,B|`` over the top ``d`` rows of the
    centre line plus, for each model, ``sum_{n=d}^{2L-d} |j_1^{(0,n)}|``.
    """
    if not _same_bulk(spec_a, spec_b):
        raise ValueError("the two models must share region, field and bulk terms")
    L = L if L is not None else spec_a.box_size()
    if fields is None:
        fields = [cur.current_field(s, gibbs_state(s, params, engine)) for s in (spec_a, spec_b)]
    fa, fb = fields
    up_gap = sum(abs(fa[(1, (0, 2 * L - n))] - fb[(1, (0, 2 * L - n))]) for n in range(d))
    tail_a = sum(abs(fa[(1, (0, n))]) for n in range(d, 2 * L - d + 1))
    tail_b = sum(abs(fb[(1, (0, n))]) for n in range(d, 2 * L - d + 1))
    return EdgeIndependence(d, cur.edge_current(fa, d), cur.edge_current(fb, d),
                            float(up_gap), float(tail_a), float(tail_b))


def engine_comparison(spec: ModelSpec, params: ThermoParams) -> dict:
    """Largest disagreement between the two engines, per observable family.

    Covers pressure, ``<N>``, every bond current, ``d<N>/dmu`` and every
    current ``mu``-derivative.  Only quadratic models qualify.
    """
    resolve_engine(spec, "free")
    free = gibbs_state(spec, params, "free")
    ed = gibbs_state(spec, params, "ed")
    N = number_terms(spec.region, mode_index(spec))
    out = {
        "pressure": abs(pressure(spec, params, state=free) - pressure(spec, params, state=ed)),
        "number": abs(free.number_expectation() - ed.number_expectation()),
        "number_mu_derivative": abs(observable_mu_derivative(free, N) - observable_mu_derivative(ed, N)),
    }
    for name, make in (("currents", cur.current_field), ("current_mu_derivatives", cur.current_mu_derivative_field)):
        a, b = make(spec, free), make(spec, ed)
        out[name] = max((abs(a.values[e] - b.values[e]) for e in a.values), default=0.0)
    return out


def translation_covariance(spec: ModelSpec, y, params: ThermoParams, engine: str = "auto") -> dict:
    """Compare the model on ``X`` with the model on ``X - y``.

    Returns the largest deviation between the magnetically conjugated hops of
    the first model and the hops of the second, and the largest deviation
    between the currents ``j_X(e)`` and ``j_{X-y}(e - y)``.
    """
    from .geometry import Site
    from .model import magnetic_translation

    if spec.edge_hopping or spec.edge_interaction:
        raise ValueError("translation covariance needs a model without edge terms")
    y = Site(*y)
    moved = spec.replace(region=spec.region.translated(-y))
    U = magnetic_translation(spec, y)
    target = {(a, b): t for a, b, t in moved.hopping_pairs()}
    mapped = U.conjugate_hops(spec.hopping_pairs())
    hop_gap = 0.0
    if len(mapped) != len(target):
        hop_gap = float("inf")
    for a, b, t in mapped:
        hop_gap = max(hop_gap, float(np.abs(t - target.get((a, b), np.inf)).max()))
    fa = cur.current_field(spec, gibbs_state(spec, params, engine))
    fb = cur.current_field(moved, gibbs_state(moved, params, engine))
    cur_gap = max(abs(j - fb[(e.k, e.z - y)]) for e, j in fa.values.items())
    return {"hopping": hop_gap, "currents": float(cur_gap)}


def indistinguishability_curve(spec: ModelSpec, params: ThermoParams, center, radii: Sequence[int],
                               observable: str = "density", digits: int | None = None) -> list:
    """Gaps for a local observable at ``center`` as the restriction grows.

    The restricted region for radius ``l`` is the 1-metric ball of radius
    ``l`` around ``center`` inside the model region.  ``observable`` is
    ``"density"`` (``N`` at the centre) or ``"current"`` (the horizontal
    current through the dual edge at ``center``).
    """
    from .geometry import Site, ball

    c = Site(*center)
    if observable == "density":
        X = SiteSet.custom([c])

        def A(s):
            return number_terms(X, mode_index(s))
    elif observable == "current":
        X = SiteSet.custom([c, c.shifted(1)])
        edge = cur.DualEdge(1, c)

        def A(s):
            return cur.current_terms(s, edge)
    else:
        raise ValueError(f"unknown observable {observable!r}")
    engine = resolve_engine(spec, "auto")
    if digits is not None:
        state = PreciseFreeGibbs(one_body(spec), params, digits)
    else:
        state = gibbs_state(spec, params, engine)
    rows = []
    for l in radii:
        sub = ball(c, l, within=spec.region)
        if not X.issubset(sub):
            continue
        rows.append(indistinguishability_gap(spec, params, sub, X, A, observable, engine,
                                             state=state, digits=digits))
    return rows


def to_jsonable(obj):
    """Dataclass reports as plain JSON data; floats keep 17 significant digits."""
    if hasattr(obj, "__dataclass_fields__"):
        out = {}
        for k in obj.__dataclass_fields__:
            out[k] = to_jsonable(getattr(obj, k))
        for k in ("gap", "bound", "identity_gap", "fd_gap", "total"):
            if hasattr(type(obj), k) and isinstance(getattr(type(obj), k), property):
                try:
                    out[k] = to_jsonable(getattr(obj, k))
                except (KeyError, ValueError):
                    pass
        return out
    if isinstance(obj, SiteSet):
        return [list(x) for x in obj]
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj
