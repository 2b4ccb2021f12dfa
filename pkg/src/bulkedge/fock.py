"""Exact diagonalization in particle-number sectors.

Basis states are occupation words: bit ``p`` of a word is the occupation of
mode position ``p`` and the state is ``a*_{p1} a*_{p2} ... |0>`` with
``p1 < p2 < ...``.  With this convention ``a*_i a_j`` acting on a word picks
up the parity of the occupied modes strictly between ``i`` and ``j``.

Gibbs expectations are evaluated in the eigenbasis: ``A`` is rotated with
the sector eigenvectors and only its diagonal (or the product diagonal, for
covariances) is weighted.  The density matrix is never formed.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from math import comb
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.special import logsumexp

from .operators import ModeIndex, OperatorTerms, hamiltonian_terms, mode_index, number_terms

__all__ = [
    "DEFAULT_SECTOR_CAP",
    "SectorCapError",
    "ThermoParams",
    "SectorBasis",
    "SectorOperator",
    "SectorSpectrum",
    "EDGibbs",
    "SpectrumCache",
    "sector_basis",
    "assemble",
    "number_operator",
    "diagonalize",
    "solve",
]

DEFAULT_SECTOR_CAP = 20000
HERMITIAN_TOL = 1e-12


class SectorCapError(RuntimeError):
    """A particle-number sector is larger than the configured cap."""

    def __init__(self, N: int, size: int, cap: int):
        super().__init__(f"sector N={N} has dimension {size}, above the cap {cap}")
        self.N, self.size, self.cap = N, size, cap


@dataclass(frozen=True)
class ThermoParams:
    """Inverse temperature ``beta > 0`` and chemical potential ``mu``."""

    beta: float
    mu: float = 0.0

    def __post_init__(self):
        if not (self.beta > 0 and math.isfinite(self.beta)):
            raise ValueError(f"beta must be positive and finite, got {self.beta}")
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "mu", float(self.mu))

    def with_mu(self, mu: float) -> "ThermoParams":
        return ThermoParams(self.beta, mu)


def _words(M: int, N: int) -> np.ndarray:
    if not 0 <= N <= M:
        return np.zeros(0, dtype=np.int64)
    # Gosper's hack: next larger integer with the same popcount
    out = np.empty(comb(M, N), dtype=np.int64)
    if N == 0:
        out[0] = 0
        return out
    w = (1 << N) - 1
    for k in range(len(out)):
        out[k] = w
        c = w & -w
        r = w + c
        w = (((r ^ w) >> 2) // c) | r
    return out


def _words_fast(M: int, N: int) -> np.ndarray:
    """Sorted words with popcount ``N`` among ``M`` bits."""
    if M <= 24:
        allw = np.arange(1 << M, dtype=np.int64)
        return allw[np.bitwise_count(allw) == N]
    return _words(M, N)


@dataclass(frozen=True, eq=False)
class SectorBasis:
    """Occupation words of the ``N``-particle sector, in ascending order."""

    M: int
    N: int
    words: np.ndarray

    def __len__(self) -> int:
        return len(self.words)

    def lookup(self, w) -> np.ndarray:
        """Indices of the given words; ``-1`` where a word is absent."""
        w = np.asarray(w, dtype=np.int64)
        idx = np.searchsorted(self.words, w)
        idx = np.minimum(idx, max(len(self.words) - 1, 0))
        ok = len(self.words) > 0
        found = ok & (self.words[idx] == w) if ok else np.zeros(w.shape, bool)
        return np.where(found, idx, -1)


def sector_basis(M: int, N: int) -> SectorBasis:
    return SectorBasis(M, N, _words_fast(M, N))


@dataclass(frozen=True, eq=False)
class SectorOperator:
    """Block-diagonal operator: one sparse matrix per particle number."""

    M: int
    blocks: Mapping[int, sp.csr_matrix]
    hermitian: bool = False

    def sectors(self) -> list[int]:
        return sorted(self.blocks)

    def _zip(self, other: "SectorOperator", op) -> "SectorOperator":
        if self.M != other.M or set(self.blocks) != set(other.blocks):
            raise ValueError("operators are defined on different sectors")
        return SectorOperator(self.M, {n: sp.csr_matrix(op(self.blocks[n], other.blocks[n]))
                                       for n in self.sectors()})

    def __add__(self, other):
        return self._zip(other, lambda a, b: a + b)

    def __sub__(self, other):
        return self._zip(other, lambda a, b: a - b)

    def __matmul__(self, other):
        return self._zip(other, lambda a, b: a @ b)

    def scaled(self, a: complex) -> "SectorOperator":
        return SectorOperator(self.M, {n: sp.csr_matrix(a * m) for n, m in self.blocks.items()})

    def dagger(self) -> "SectorOperator":
        return SectorOperator(self.M, {n: sp.csr_matrix(m.conj().T) for n, m in self.blocks.items()},
                              self.hermitian)

    def commutator(self, other: "SectorOperator") -> "SectorOperator":
        return (self @ other) - (other @ self)

    def max_abs(self) -> float:
        """Largest entry modulus over all blocks (0 for the zero operator)."""
        best = 0.0
        for m in self.blocks.values():
            m = sp.csr_matrix(m)
            m.eliminate_zeros()
            if m.nnz:
                best = max(best, float(np.abs(m.data).max()))
        return best

    def hermiticity_residual(self) -> float:
        return (self - self.dagger()).max_abs()

    def dense(self, N: int) -> np.ndarray:
        return self.blocks[N].toarray()


def _sector_matrix(terms: OperatorTerms, basis: SectorBasis) -> sp.csr_matrix:
    words = basis.words
    n = len(words)
    rows, cols, vals = [], [], []
    one = np.int64(1)
    for i, j, c in zip(terms.i, terms.j, terms.c):
        bi, bj = one << np.int64(i), one << np.int64(j)
        if i == j:
            sel = np.nonzero(words & bj)[0]
            rows.append(sel)
            cols.append(sel)
            vals.append(np.full(len(sel), c))
            continue
        sel = np.nonzero((words & bj != 0) & (words & bi == 0))[0]
        if not len(sel):
            continue
        src = words[sel]
        lo, hi = (i, j) if i < j else (j, i)
        between = ((one << np.int64(hi)) - 1) ^ ((one << np.int64(lo + 1)) - 1)
        parity = np.bitwise_count(src & between) & 1
        target = basis.lookup(src ^ bj ^ bi)
        rows.append(target)
        cols.append(sel)
        vals.append(np.where(parity == 1, -c, c))
    if terms.monomials:
        diag = np.zeros(n)
        for mono, coeff in terms.monomials:
            mask = np.int64(sum(1 << m for m in mono))
            diag += coeff * ((words & mask) == mask)
        nz = np.nonzero(diag)[0]
        rows.append(nz)
        cols.append(nz)
        vals.append(diag[nz].astype(complex))
    if not rows:
        return sp.csr_matrix((n, n), dtype=complex)
    r = np.concatenate(rows)
    c_ = np.concatenate(cols)
    v = np.concatenate(vals)
    return sp.csr_matrix(sp.coo_matrix((v, (r, c_)), shape=(n, n)))


def assemble(op, modes: ModeIndex | None = None, sectors: Iterable[int] | None = None,
             cap: int | None = None) -> SectorOperator:
    """Sector matrices of a :class:`~bulkedge.model.ModelSpec` or :class:`OperatorTerms`.

    ``cap`` bounds the sector dimension; a larger sector raises
    :class:`SectorCapError` naming it.
    """
    if isinstance(op, OperatorTerms):
        terms = op
        if modes is not None and modes.M != terms.M:
            raise ValueError("mode index does not match the operator")
    else:
        modes = modes or mode_index(op)
        terms = hamiltonian_terms(op, modes)
    M = terms.M
    if M > 62:
        raise SectorCapError(-1, 2 ** M, cap or DEFAULT_SECTOR_CAP)
    Ns = range(M + 1) if sectors is None else sorted(set(sectors))
    if cap is not None:
        for N in Ns:
            if comb(M, N) > cap:
                raise SectorCapError(N, comb(M, N), cap)
    blocks = {N: _sector_matrix(terms, sector_basis(M, N)) for N in Ns}
    out = SectorOperator(M, blocks)
    herm = out.hermiticity_residual() <= HERMITIAN_TOL
    return SectorOperator(M, blocks, herm)


def number_operator(Z, modes: ModeIndex, sectors: Iterable[int] | None = None) -> SectorOperator:
    """``N_Z`` as a diagonal sector operator."""
    return assemble(number_terms(Z, modes), sectors=sectors)


@dataclass(frozen=True, eq=False)
class SectorSpectrum:
    """Ascending eigenvalues and orthonormal eigenvectors per sector."""

    M: int
    values: Mapping[int, np.ndarray]
    vectors: Mapping[int, np.ndarray]

    def sectors(self) -> list[int]:
        return sorted(self.values)

    def all_values(self) -> np.ndarray:
        return np.concatenate([self.values[n] for n in self.sectors()])

    def reconstruction_residual(self, H: SectorOperator) -> float:
        worst = 0.0
        for n in self.sectors():
            v, e = self.vectors[n], self.values[n]
            if len(e):
                worst = max(worst, float(np.abs(H.dense(n) - (v * e) @ v.conj().T).max()))
        return worst


def diagonalize(H: SectorOperator, cap: int = DEFAULT_SECTOR_CAP) -> SectorSpectrum:
    """Dense Hermitian eigendecomposition of every block."""
    if not H.hermitian:
        raise ValueError("diagonalize needs a Hermitian operator")
    values, vectors = {}, {}
    for n in H.sectors():
        size = H.blocks[n].shape[0]
        if size > cap:
            raise SectorCapError(n, size, cap)
        if size == 0:
            values[n] = np.zeros(0)
            vectors[n] = np.zeros((0, 0), dtype=complex)
            continue
        e, v = scipy.linalg.eigh(H.dense(n))
        values[n], vectors[n] = e, v
    return SectorSpectrum(H.M, values, vectors)


class EDGibbs:
    """Grand-canonical Gibbs state built from a sector spectrum.

    ``rho = exp(-beta (H - mu N)) / Z``.  All weights are formed in log space.
    """

    def __init__(self, spectrum: SectorSpectrum, params: ThermoParams, modes: ModeIndex | None = None):
        self.spectrum = spectrum
        self.params = params
        self.modes = modes
        b, mu = params.beta, params.mu
        logw = {n: -b * (e - mu * n) for n, e in spectrum.values.items()}
        self.log_partition = float(logsumexp(np.concatenate(list(logw.values()))))
        self.weights = {n: np.exp(lw - self.log_partition) for n, lw in logw.items()}

    @property
    def partition_function(self) -> float | None:
        """``Z`` itself, or ``None`` when it overflows a double."""
        return math.exp(self.log_partition) if self.log_partition < 709.0 else None

    def with_mu(self, mu: float) -> "EDGibbs":
        return EDGibbs(self.spectrum, self.params.with_mu(mu), self.modes)

    def _check(self, A: SectorOperator) -> None:
        if A.M != self.spectrum.M or not set(self.spectrum.sectors()) <= set(A.blocks):
            raise ValueError("operator and spectrum use different mode sets")

    def _rotated(self, A: SectorOperator, n: int) -> np.ndarray:
        v = self.spectrum.vectors[n]
        return v.conj().T @ (A.blocks[n] @ v)

    def _rotated_diag(self, A: SectorOperator, n: int) -> np.ndarray:
        v = self.spectrum.vectors[n]
        return np.einsum("ij,ij->j", v.conj(), A.blocks[n] @ v)

    def expectation(self, A: SectorOperator) -> complex:
        """``tr(rho A)``."""
        self._check(A)
        return complex(sum(np.dot(self.weights[n], self._rotated_diag(A, n))
                           for n in self.spectrum.sectors()))

    def number_expectation(self) -> float:
        return float(sum(n * self.weights[n].sum() for n in self.spectrum.sectors()))

    def covariance(self, A: SectorOperator, B: SectorOperator) -> complex:
        """``<AB> - <A><B>``."""
        self._check(A)
        self._check(B)
        ab = 0.0 + 0.0j
        for n in self.spectrum.sectors():
            if not len(self.weights[n]):
                continue
            a, b = self._rotated(A, n), self._rotated(B, n)
            ab += np.dot(self.weights[n], np.einsum("ik,ki->i", a, b))
        return complex(ab - self.expectation(A) * self.expectation(B))

    def number_covariance(self, A: SectorOperator) -> complex:
        """``Cov(N, A)`` using that ``N`` is a scalar on each sector."""
        self._check(A)
        nbar = self.number_expectation()
        return complex(sum((n - nbar) * np.dot(self.weights[n], self._rotated_diag(A, n))
                           for n in self.spectrum.sectors()))

    def mu_derivative_expectation(self, A: SectorOperator) -> float:
        """``tr(F A) = beta Cov(N, A)``, the ``mu``-derivative of ``<A>``."""
        return float(np.real(self.params.beta * self.number_covariance(A)))

    def truncated_fluctuation_expectation(self, NZ: SectorOperator, A: SectorOperator) -> float:
        """``beta Cov(N_Z, A)`` with ``N_Z`` supplied as an assembled operator."""
        return float(np.real(self.params.beta * self.covariance(NZ, A)))


def solve(spec, params: ThermoParams, cap: int = DEFAULT_SECTOR_CAP, cache: "SpectrumCache | None" = None):
    """Assemble, diagonalize and wrap ``spec`` in an :class:`EDGibbs`."""
    modes = mode_index(spec)
    M = modes.M
    for N in range(M + 1):
        if comb(M, N) > cap:
            raise SectorCapError(N, comb(M, N), cap)
    spectrum = cache.load(spec) if cache is not None else None
    if spectrum is None:
        spectrum = diagonalize(assemble(spec, modes), cap)
        if cache is not None:
            cache.store(spec, spectrum)
    return EDGibbs(spectrum, params, modes)


CACHE_FORMAT = 1


@dataclass
class SpectrumCache:
    """On-disk spectra keyed by a content hash of the model and mode order."""

    root: Path
    hasher: object = field(default=None, repr=False)

    def __post_init__(self):
        self.root = Path(self.root)
        self.root.mkdir(parents=True, exist_ok=True)
        if self.hasher is None:
            from .modelio import model_hash

            self.hasher = model_hash

    def path(self, spec) -> Path:
        key = hashlib.sha256(f"v{CACHE_FORMAT}:{self.hasher(spec)}".encode()).hexdigest()
        return self.root / f"spectrum-{key[:32]}.npz"

    def store(self, spec, spectrum: SectorSpectrum) -> Path:
        arrays = {"format": np.array(CACHE_FORMAT), "M": np.array(spectrum.M)}
        for n in spectrum.sectors():
            arrays[f"e{n}"] = spectrum.values[n]
            arrays[f"v{n}"] = spectrum.vectors[n]
        p = self.path(spec)
        tmp = p.with_suffix(".tmp.npz")
        np.savez(tmp, **arrays)
        tmp.replace(p)
        return p

    def load(self, spec) -> SectorSpectrum | None:
        p = self.path(spec)
        if not p.exists():
            return None
        with np.load(p) as data:
            if int(data["format"]) != CACHE_FORMAT:
                return None
            M = int(data["M"])
            values = {n: data[f"e{n}"] for n in range(M + 1) if f"e{n}" in data}
            vectors = {n: data[f"v{n}"] for n in values}
        return SectorSpectrum(M, values, vectors)
