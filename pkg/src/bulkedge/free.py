"""Non-interacting fast path: one-body matrices and Fermi-Dirac calculus.

For a quadratic Hamiltonian ``H = sum h[i, j] a*_i a_j`` the Gibbs state is
fixed by the correlation matrix ``Gamma = f(h)`` with
``f(e) = 1 / (1 + exp(beta (e - mu)))`` and ``Gamma[j, i] = <a*_i a_j>``.
Every expectation, covariance and ``mu``-derivative of a quadratic
observable follows from the eigendecomposition of ``h``, which is computed
once and reused across chemical potentials.
"""
from __future__ import annotations

import numpy as np
import scipy.linalg
from scipy.special import expit

from .fock import ThermoParams
from .model import ModelError, ModelSpec
from .operators import OperatorTerms, hamiltonian_terms

__all__ = [
    "InteractionError",
    "one_body",
    "one_body_eigenvalues",
    "fermi",
    "fermi_correlations",
    "fermi_derivative_correlations",
    "quadratic_expectation",
    "free_pressure",
    "FreeGibbs",
    "PreciseFreeGibbs",
]

HERMITIAN_TOL = 1e-12
_CHUNK_ELEMENTS = 1 << 24


class InteractionError(ModelError):
    """The free engine was handed a model with genuine interactions."""


def one_body(spec: ModelSpec) -> np.ndarray:
    """``h[(x, j), (y, j')] = T_b(x, y)[j, j']`` plus single-mode density terms."""
    terms = hamiltonian_terms(spec)
    if not terms.is_quadratic():
        raise InteractionError(
            "the free-fermion engine refuses models with multi-mode density interactions"
        )
    h = terms.one_body_matrix()
    if h.size and np.abs(h - h.conj().T).max() > HERMITIAN_TOL:
        raise ModelError("one-body matrix is not Hermitian")
    return h


def _bandwidth(h: np.ndarray) -> int:
    rows, cols = np.nonzero(h)
    return int(np.abs(rows - cols).max()) if len(rows) else 0


def one_body_eigenvalues(h: np.ndarray) -> np.ndarray:
    """Ascending eigenvalues; uses the banded solver when ``h`` is narrow."""
    M = h.shape[0]
    if M == 0:
        return np.zeros(0)
    w = _bandwidth(h)
    if M > 400 and w < M // 8:
        ab = np.zeros((w + 1, M), dtype=complex)
        for k in range(w + 1):
            ab[w - k, k:] = np.diagonal(h, k)
        return scipy.linalg.eig_banded(ab, lower=False, eigvals_only=True)
    return scipy.linalg.eigvalsh(h)


def fermi(e, params: ThermoParams) -> np.ndarray:
    return expit(-params.beta * (np.asarray(e) - params.mu))


def fermi_correlations(h: np.ndarray, params: ThermoParams) -> np.ndarray:
    """``Gamma = f(h)``, with ``Gamma[j, i] = <a*_i a_j>``."""
    return FreeGibbs(h, params).correlations()


def fermi_derivative_correlations(h: np.ndarray, params: ThermoParams) -> np.ndarray:
    """``d Gamma / d mu = V diag(beta f (1 - f)) V^*``."""
    return FreeGibbs(h, params).derivative_correlations()


def _coefficient_arrays(coeffs):
    if isinstance(coeffs, OperatorTerms):
        lst = coeffs.coefficient_list()
    else:
        lst = list(coeffs)
    if not lst:
        return np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0, complex)
    i, j, c = zip(*lst)
    return np.asarray(i, np.int64), np.asarray(j, np.int64), np.asarray(c, complex)


def quadratic_expectation(gamma: np.ndarray, coeffs) -> complex:
    """``<sum c a*_i a_j> = sum c Gamma[j, i]`` for ``(i, j, c)`` triples."""
    i, j, c = _coefficient_arrays(coeffs)
    M = gamma.shape[0]
    if len(i) and (min(i.min(), j.min()) < 0 or max(i.max(), j.max()) >= M):
        raise IndexError("mode index out of range")
    return complex(np.sum(c * gamma[j, i]))


def free_pressure(h: np.ndarray, params: ThermoParams, volume_norm: int) -> float:
    """``-(volume_norm beta)^{-1} sum_k log(1 + exp(-beta (e_k - mu)))``."""
    e = one_body_eigenvalues(h)
    return _pressure_from_values(e, params, volume_norm)


def _pressure_from_values(e, params: ThermoParams, volume_norm: int) -> float:
    if len(e) == 0:
        return 0.0
    log_z = float(np.sum(np.logaddexp(0.0, -params.beta * (e - params.mu))))
    return -log_z / (params.beta * volume_norm)


class FreeGibbs:
    """Gibbs state of a quadratic Hamiltonian.

    The eigendecomposition of ``h`` is done once; :meth:`with_mu` returns a
    state at another chemical potential without repeating it.
    """

    def __init__(self, h: np.ndarray, params: ThermoParams, _eig=None):
        self.h = h
        self.params = params
        if _eig is None:
            if h.shape[0]:
                _eig = scipy.linalg.eigh(h, driver="evr")
            else:
                _eig = (np.zeros(0), np.zeros((0, 0), complex))
        self.energies, self.vectors = _eig
        self.occupations = fermi(self.energies, params)
        self._gamma = None

    @classmethod
    def from_spec(cls, spec: ModelSpec, params: ThermoParams) -> "FreeGibbs":
        return cls(one_body(spec), params)

    @property
    def M(self) -> int:
        return self.h.shape[0]

    def with_mu(self, mu: float) -> "FreeGibbs":
        return FreeGibbs(self.h, self.params.with_mu(mu), (self.energies, self.vectors))

    @property
    def log_partition(self) -> float:
        p = self.params
        return float(np.sum(np.logaddexp(0.0, -p.beta * (self.energies - p.mu))))

    def pressure(self, volume_norm: int) -> float:
        return _pressure_from_values(self.energies, self.params, volume_norm)

    def number_expectation(self) -> float:
        return float(np.sum(self.occupations))

    def _spectral(self, weights: np.ndarray) -> np.ndarray:
        v = self.vectors
        return (v * weights) @ v.conj().T

    def correlations(self) -> np.ndarray:
        if self._gamma is None:
            self._gamma = self._spectral(self.occupations)
        return self._gamma

    def derivative_weights(self) -> np.ndarray:
        f = self.occupations
        return self.params.beta * f * (1.0 - f)

    def derivative_correlations(self) -> np.ndarray:
        return self._spectral(self.derivative_weights())

    def entries(self, i, j, weights: np.ndarray | None = None) -> np.ndarray:
        """``sum_k V[j, k] w_k conj(V[i, k])`` for paired index arrays.

        With the default weights these are ``Gamma[j, i] = <a*_i a_j>``; the
        full matrix is never formed, so large boxes stay cheap.
        """
        w = self.occupations if weights is None else weights
        i = np.asarray(i, np.int64)
        j = np.asarray(j, np.int64)
        out = np.empty(len(i), dtype=complex)
        step = max(1, _CHUNK_ELEMENTS // max(self.M, 1))
        v = self.vectors
        for a in range(0, len(i), step):
            sl = slice(a, a + step)
            out[sl] = np.einsum("pk,pk->p", v[j[sl]] * w, v[i[sl]].conj())
        return out

    def expectation(self, coeffs, weights: np.ndarray | None = None) -> complex:
        """``<A>`` for quadratic ``A``; with ``weights`` a spectral variant."""
        i, j, c = _coefficient_arrays(coeffs)
        if not len(i):
            return 0.0j
        return complex(np.sum(c * self.entries(i, j, weights)))

    def mu_derivative(self, coeffs) -> complex:
        """``d<A>/d mu = beta Cov(N, A)``."""
        return self.expectation(coeffs, self.derivative_weights())

    def covariance(self, A: OperatorTerms, B: OperatorTerms) -> complex:
        """Wick covariance ``tr(A (1 - Gamma) B Gamma)`` of two quadratic operators."""
        a = A.one_body_matrix()
        b = B.one_body_matrix()
        g = self.correlations()
        return complex(np.trace(a @ (np.eye(self.M) - g) @ b @ g))


class PreciseFreeGibbs:
    """Extended-precision expectations of quadratic observables.

    Columns of ``Gamma = f(h)`` are obtained by a Chebyshev expansion of the
    Fermi function applied to unit vectors in ``mpmath`` arithmetic, so
    expectations far below double-precision round-off stay meaningful.
    Cost grows with the number of requested columns, not with ``M^3``;
    intended for small systems and high temperatures.
    """

    def __init__(self, h: np.ndarray, params: ThermoParams, dps: int = 40):
        import mpmath

        self.dps = dps
        self.params = params
        self.M = h.shape[0]
        rows, cols = np.nonzero(h)
        radius = float(np.abs(h).sum(axis=1).max()) if self.M else 0.0
        with mpmath.workdps(dps + 10):
            self._rows = [[] for _ in range(self.M)]
            for r, c in zip(rows, cols):
                v = h[r, c]
                self._rows[r].append((int(c), mpmath.mpc(float(v.real), float(v.imag))))
            self._center = mpmath.mpf(0)
            self._half = mpmath.mpf(radius) * (1 + mpmath.mpf(10) ** -6) + mpmath.mpf(10) ** -6
            self._coeffs = self._chebyshev_coefficients(mpmath)
        self._columns: dict = {}

    def _fermi(self, mpmath, x):
        b, mu = mpmath.mpf(self.params.beta), mpmath.mpf(self.params.mu)
        return 1 / (1 + mpmath.exp(b * (x - mu)))

    def _chebyshev_coefficients(self, mpmath):
        tol = mpmath.mpf(10) ** (-(self.dps + 2))
        n = 32
        while True:
            nodes = [mpmath.cos(mpmath.pi * (k + mpmath.mpf(1) / 2) / n) for k in range(n)]
            vals = [self._fermi(mpmath, self._center + self._half * x) for x in nodes]
            coeffs = []
            for j in range(n):
                s = mpmath.fsum(v * mpmath.cos(mpmath.pi * j * (k + mpmath.mpf(1) / 2) / n)
                                for k, v in enumerate(vals))
                coeffs.append(2 * s / n)
            coeffs[0] /= 2
            if max(abs(c) for c in coeffs[-4:]) < tol:
                while len(coeffs) > 1 and abs(coeffs[-1]) < tol:
                    coeffs.pop()
                return coeffs
            if n > 4096:
                raise RuntimeError("Chebyshev expansion did not converge")
            n *= 2

    def _apply(self, mpmath, v):
        # (h - center) / half applied to a vector of mpc
        out = []
        for r in range(self.M):
            acc = mpmath.mpc(0)
            for c, a in self._rows[r]:
                acc += a * v[c]
            out.append((acc - self._center * v[r]) / self._half)
        return out

    def column(self, i: int):
        """``Gamma[:, i]`` as a list of ``mpmath.mpc``."""
        import mpmath

        if i not in self._columns:
            with mpmath.workdps(self.dps + 10):
                t0 = [mpmath.mpc(0)] * self.M
                t0[i] = mpmath.mpc(1)
                acc = [self._coeffs[0] * x for x in t0]
                if len(self._coeffs) > 1:
                    t1 = self._apply(mpmath, t0)
                    acc = [a + self._coeffs[1] * x for a, x in zip(acc, t1)]
                    for ck in self._coeffs[2:]:
                        t2 = [2 * y - x for y, x in zip(self._apply(mpmath, t1), t0)]
                        acc = [a + ck * x for a, x in zip(acc, t2)]
                        t0, t1 = t1, t2
                self._columns[i] = acc
        return self._columns[i]

    def expectation(self, coeffs):
        """``sum c Gamma[j, i]`` as an ``mpmath.mpc``."""
        import mpmath

        i, j, c = _coefficient_arrays(coeffs)
        with mpmath.workdps(self.dps + 10):
            total = mpmath.mpc(0)
            for a, b, v in zip(i, j, c):
                total += mpmath.mpc(float(v.real), float(v.imag)) * self.column(int(a))[int(b)]
            return total
