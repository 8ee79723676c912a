"""Exact treatment of the perturbed X-cube ground state at small L.

The ground state is a superposition of *cubic structures*: the elements of the
group generated by the cube operators, each an edge pattern of |1> qubits.
A structure with Q ones carries amplitude exp(beta (N - 2Q) / 2), which is the
square root of the Boltzmann weight of the dual plaquette-Ising configuration
with energy E = 2Q - N. Every observable used here only needs structure
statistics, so the 2^(3L^3) amplitude vector is never formed.

Structures are enumerated in Gray-code order over a GF(2) basis of rank r,
in vectorised chunks. With uniform couplings the sweep reduces to exact
integer histograms (density of states in Q, and per-edge occupation by Q), so
any beta afterwards is a cheap log-sum-exp and the result cannot depend on
how the sweep was chunked.

:func:`classical_oracle` is the independent check: brute-force enumeration of
all 2^(L^3) spin configurations.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterator, Sequence

import numpy as np
from scipy.special import logsumexp

from xcube.lattice import LatticeGeometry
from xcube.plaquette_mc import PERIODIC, SpinLattice
from xcube.stabilizer import gf2_basis

DEFAULT_MAX_RANK = 26
DEFAULT_CHUNK_BITS = 16


class SizeLimitError(ValueError):
    pass


def _int_to_words(v: int, n_words: int) -> np.ndarray:
    return np.array([(v >> (64 * w)) & 0xFFFFFFFFFFFFFFFF for w in range(n_words)],
                    dtype=np.uint64)


def _span_table(vectors: np.ndarray) -> np.ndarray:
    """All 2^k XOR combinations of k word-vectors; row index = subset bitmask."""
    table = np.zeros((1, vectors.shape[1]), dtype=np.uint64)
    for v in vectors:
        table = np.concatenate([table, table ^ v])
    return table


def _gray(i):
    return i ^ (i >> 1)


class CubicStructureEnsemble:
    """The cube-operator group as a GF(2) basis of edge bit-vectors."""

    def __init__(self, geometry: LatticeGeometry, basis: Sequence[int],
                 chunk_bits: int = DEFAULT_CHUNK_BITS):
        self.geometry = geometry
        self.N = geometry.n_edges
        self.basis = list(basis)
        self.r = len(self.basis)
        self.n_words = (self.N + 63) // 64
        self.chunk_bits = chunk_bits
        self.words = np.array([_int_to_words(b, self.n_words) for b in self.basis],
                              dtype=np.uint64).reshape(self.r, self.n_words)

    def __repr__(self):
        return f"CubicStructureEnsemble(L={self.geometry.L}, r={self.r})"

    @property
    def size(self) -> int:
        return 1 << self.r

    @property
    def kernel_exponent(self) -> int:
        """log2 of the number of spin configurations per structure."""
        return self.geometry.n_cubes - self.r

    # -- enumeration ------------------------------------------------------------

    def chunks(self, chunk_bits: int | None = None) -> Iterator[np.ndarray]:
        """Structures as (n, n_words) uint64 arrays, in Gray-code order.

        Structure ``i`` is the XOR of the basis vectors selected by
        ``gray(i) = i ^ (i >> 1)``, so consecutive structures differ by exactly
        one basis vector. Chunk ``c`` covers ``i`` in [c 2^k, (c+1) 2^k); its
        low Gray bits index a precomputed span table and its high Gray bits
        equal ``gray(c)``.
        """
        k = min(self.r, self.chunk_bits if chunk_bits is None else chunk_bits)
        low = _span_table(self.words[:k])
        j = np.arange(1 << k, dtype=np.int64)
        for c in range(1 << (self.r - k)):
            glow = _gray(j)
            if k and c & 1:
                glow = glow ^ (1 << (k - 1))
            high = np.zeros(self.n_words, dtype=np.uint64)
            g = _gray(c)
            for b in range(self.r - k):
                if g >> b & 1:
                    high ^= self.words[k + b]
            yield low[glow] ^ high

    def bits(self, structures: np.ndarray) -> np.ndarray:
        """Unpack (n, n_words) structures into an (n, N) 0/1 array."""
        as_bytes = structures.astype("<u8").view(np.uint8)
        return np.unpackbits(as_bytes, axis=1, bitorder="little")[:, : self.N]

    @staticmethod
    def popcount(structures: np.ndarray) -> np.ndarray:
        return np.bitwise_count(structures).sum(axis=1, dtype=np.int64)

    def mask_words(self, edges) -> np.ndarray:
        m = 0
        for e in edges:
            m |= 1 << int(e)
        return _int_to_words(m, self.n_words)

    # -- uniform-coupling histograms ------------------------------------------------

    @cached_property
    def histograms(self) -> tuple[np.ndarray, np.ndarray]:
        """(count[Q], edge_count[p, Q]): number of structures with Q ones, and
        number of those having edge p set. Exact integers."""
        return self.sweep_histograms()

    def sweep_histograms(self, chunk_bits: int | None = None):
        N = self.N
        counts = np.zeros(N + 1, dtype=np.int64)
        edge_counts = np.zeros((N, N + 1), dtype=np.int64)
        for s in self.chunks(chunk_bits):
            q = self.popcount(s)
            counts += np.bincount(q, minlength=N + 1)
            bits = self.bits(s)
            for p in range(N):
                edge_counts[p] += np.bincount(q[bits[:, p].astype(bool)], minlength=N + 1)
        return counts, edge_counts

    def parity_histogram(self, edges) -> np.ndarray:
        """count[parity, Q] where parity = |structure ∩ edges| mod 2."""
        mask = self.mask_words(edges)
        out = np.zeros((2, self.N + 1), dtype=np.int64)
        for s in self.chunks():
            q = self.popcount(s)
            par = self.popcount(s & mask) & 1
            out[0] += np.bincount(q[par == 0], minlength=self.N + 1)
            out[1] += np.bincount(q[par == 1], minlength=self.N + 1)
        return out

    def log_weights(self, beta: float) -> np.ndarray:
        """ln(count[Q]) + beta (N - 2Q), -inf where no structure has Q ones."""
        counts, _ = self.histograms
        q = np.arange(self.N + 1)
        with np.errstate(divide="ignore"):
            return np.log(counts) + beta * (self.N - 2 * q)


def build_ensemble(geometry: LatticeGeometry, max_rank: int = DEFAULT_MAX_RANK,
                   chunk_bits: int = DEFAULT_CHUNK_BITS) -> CubicStructureEnsemble:
    supports = []
    for row in geometry.cube_edges:
        v = 0
        for e in row:
            v |= 1 << int(e)
        supports.append(v)
    basis = gf2_basis(supports)
    if len(basis) > max_rank:
        raise SizeLimitError(
            f"structure group has rank {len(basis)} at L={geometry.L}, above the cap "
            f"max_rank={max_rank}")
    return CubicStructureEnsemble(geometry, basis, chunk_bits)


@dataclass(frozen=True)
class WeightedEnsembleStats:
    beta: float
    logZ: float
    mean_E: float
    var_E: float
    N: int

    @property
    def u(self) -> float:
        """Energy per plaquette."""
        return self.mean_E / self.N


@dataclass(frozen=True)
class OneQubitDiagonal:
    w_plus: float
    w_minus: float

    @property
    def mean_interaction(self) -> float:
        """Expectation of the dual plaquette term, w_plus - w_minus."""
        return self.w_plus - self.w_minus


def _check_couplings(ens, couplings):
    if couplings is None:
        return None
    couplings = np.asarray(couplings, dtype=np.float64)
    if couplings.shape != (ens.N,):
        raise ValueError(f"expected {ens.N} couplings, got shape {couplings.shape}")
    return couplings


def _coupled_sweep(ens: CubicStructureEnsemble, beta: float, couplings: np.ndarray,
                   masks: Sequence[np.ndarray] = ()):
    """Streaming weighted sweep for non-uniform couplings.

    Structure weight is exp(-beta E) with E = -sum_p J_p (1 - 2 b_p). Returns
    logZ, mean_E, var_E, P(b_p = 1) per edge and <(-1)^|A ∩ S|> per mask.
    """
    jsum = couplings.sum()
    ref = -np.abs(couplings).sum()
    log_scale = -np.inf
    s0 = s1 = s2 = 0.0
    occ = np.zeros(ens.N)
    par = np.zeros(len(masks))
    for s in ens.chunks():
        bits = ens.bits(s).astype(np.float64)
        E = -jsum + 2.0 * bits @ couplings
        a = -beta * E
        top = a.max()
        if top > log_scale:
            f = np.exp(log_scale - top) if np.isfinite(log_scale) else 0.0
            s0, s1, s2 = s0 * f, s1 * f, s2 * f
            occ *= f
            par *= f
            log_scale = top
        w = np.exp(a - log_scale)
        d = E - ref
        s0 += w.sum()
        s1 += w @ d
        s2 += w @ (d * d)
        occ += w @ bits
        for i, m in enumerate(masks):
            sign = 1.0 - 2.0 * (ens.popcount(s & m) & 1)
            par[i] += w @ sign
    mean_d = s1 / s0
    return (log_scale + np.log(s0), ref + mean_d, s2 / s0 - mean_d**2, occ / s0, par / s0)


def ensemble_stats(ens: CubicStructureEnsemble, beta: float, couplings=None) -> WeightedEnsembleStats:
    if beta < 0:
        raise ValueError("beta must be >= 0")
    couplings = _check_couplings(ens, couplings)
    if couplings is not None:
        logz, mean_e, var_e, _, _ = _coupled_sweep(ens, beta, couplings)
        return WeightedEnsembleStats(beta, float(logz), float(mean_e), float(var_e), ens.N)
    lw = ens.log_weights(beta)
    logz = logsumexp(lw)
    p = np.exp(lw - logz)
    E = 2.0 * np.arange(ens.N + 1) - ens.N
    mean_e = p @ E
    var_e = p @ (E - mean_e) ** 2
    return WeightedEnsembleStats(beta, float(logz), float(mean_e), float(var_e), ens.N)


def log_partition(ens: CubicStructureEnsemble, beta: float) -> float:
    return float(logsumexp(ens.log_weights(beta)))


def heat_capacity(stats: WeightedEnsembleStats) -> float:
    return stats.beta**2 * stats.var_E


def fidelity_exact(ens: CubicStructureEnsemble, beta: float, dbeta: float) -> float:
    """Overlap <G(beta)|G(beta + dbeta)> of the normalised ground states.

    Amplitudes are sqrt(w(beta)/Z(beta)), so the overlap is
    Z(beta + dbeta/2) / sqrt(Z(beta) Z(beta + dbeta)).
    """
    if beta < 0 or beta + dbeta < 0:
        raise ValueError("beta and beta + dbeta must be >= 0")
    if dbeta == 0:
        return 1.0
    return float(np.exp(log_partition(ens, beta + dbeta / 2)
                        - 0.5 * log_partition(ens, beta)
                        - 0.5 * log_partition(ens, beta + dbeta)))


def one_qubit_diagonals(ens: CubicStructureEnsemble, beta: float, couplings=None) -> np.ndarray:
    """w_minus for every edge: probability that the qubit is |1>."""
    couplings = _check_couplings(ens, couplings)
    if couplings is not None:
        return _coupled_sweep(ens, beta, couplings)[3]
    lw = ens.log_weights(beta)
    logz = logsumexp(lw)
    _, edge_counts = ens.histograms
    p_q = np.exp(lw - logz)
    with np.errstate(invalid="ignore"):
        per_structure = np.where(ens.histograms[0] > 0, p_q / ens.histograms[0], 0.0)
    return edge_counts @ per_structure


def one_qubit_diagonal(ens: CubicStructureEnsemble, beta: float, edge: int,
                       couplings=None) -> OneQubitDiagonal:
    """Diagonal of the single-qubit reduced density matrix (off-diagonals vanish)."""
    w_minus = float(one_qubit_diagonals(ens, beta, couplings)[edge])
    return OneQubitDiagonal(1.0 - w_minus, w_minus)


def global_entanglement(ens: CubicStructureEnsemble, beta: float) -> tuple[float, float]:
    """Average single-qubit linear entropy, two ways.

    Returns ``(from_density_matrices, from_energy)``; the second is 1 - u^2,
    which relies on every edge having the same plaquette expectation.
    """
    w_minus = one_qubit_diagonals(ens, beta)
    w_plus = 1.0 - w_minus
    purity = (w_plus**2 + w_minus**2).mean()
    ge = 2.0 * (1.0 - purity)
    u = ensemble_stats(ens, beta).u
    return float(ge), float(1.0 - u * u)


def membrane_expectation_exact(ens: CubicStructureEnsemble, beta: float, edges,
                               couplings=None) -> float:
    """<prod_{i in A} sigma^z_i> = weighted mean of (-1)^|A ∩ structure|."""
    edges = list(edges)
    if not edges:
        return 1.0
    couplings = _check_couplings(ens, couplings)
    if couplings is not None:
        return float(_coupled_sweep(ens, beta, couplings, [ens.mask_words(edges)])[4][0])
    hist = ens.parity_histogram(edges)
    q = np.arange(ens.N + 1)
    with np.errstate(divide="ignore"):
        even = np.log(hist[0]) + beta * (ens.N - 2 * q)
        odd = np.log(hist[1]) + beta * (ens.N - 2 * q)
    logz = logsumexp(np.concatenate([even, odd]))
    return float(np.exp(logsumexp(even) - logz) - np.exp(logsumexp(odd) - logz))


# -- brute-force classical oracle -----------------------------------------------------


@dataclass
class OracleResult:
    beta: float
    logZ: float
    mean_E: float
    var_E: float
    plaquette_expectations: np.ndarray
    magnetization: float
    spin_expectations: np.ndarray
    product_expectations: np.ndarray
    n_configurations: int

    @property
    def heat_capacity(self) -> float:
        return self.beta**2 * self.var_E


def classical_oracle(L: int, beta: float, couplings=None, bc: str = PERIODIC,
                     products: Sequence[Sequence[int]] = (), allow_large: bool = False,
                     block_bits: int = 9) -> OracleResult:
    """Exhaustive sum over all 2^(L^3) configurations of the mutable spins.

    The configuration index is split into high and low bits, so that each
    plaquette sign factorises as sign_hi * sign_lo and a block of energies is
    one matrix product. ``products`` lists extra spin groups (cube indices)
    whose product expectations are returned.

    L = 2 only, unless ``allow_large`` opts into L = 3 (2^27 configurations).
    """
    if not (L == 2 or (L == 3 and allow_large)):
        raise SizeLimitError("classical oracle enumerates L=2, or L=3 with allow_large=True")
    lat = SpinLattice(L, bc, couplings)
    n = lat.n_spins
    J = lat.couplings
    owner = -np.ones(len(lat.spins), dtype=np.int64)
    owner[lat.sites] = np.arange(n)

    groups = [[owner[s] for s in quad if owner[s] >= 0] for quad in lat.plaquettes]
    n_plaq = len(groups)
    groups += [[k] for k in range(n)]
    groups += [[int(c) for c in g] for g in products]

    n_lo = n // 2
    n_hi = n - n_lo
    lo = np.arange(1 << n_lo, dtype=np.int64)

    def signs(configs, offset, width):
        # (len(configs), len(groups)) matrix of +-1 products
        bits = (configs[:, None] >> np.arange(width)) & 1
        out = np.empty((len(configs), len(groups)))
        for g, members in enumerate(groups):
            local = [m - offset for m in members if offset <= m < offset + width]
            par = bits[:, local].sum(axis=1) & 1 if local else 0
            out[:, g] = 1 - 2 * par
        return out

    tau = signs(lo, 0, n_lo)
    jsum_abs = np.abs(J).sum()
    ref = -jsum_abs
    log_scale = -np.inf
    s0 = s1 = s2 = 0.0
    acc = np.zeros(len(groups))
    hi_all = np.arange(1 << n_hi, dtype=np.int64)
    step = 1 << min(block_bits, n_hi)
    for start in range(0, len(hi_all), step):
        sigma = signs(hi_all[start:start + step], n_lo, n_hi)
        E = -(sigma[:, :n_plaq] * J) @ tau[:, :n_plaq].T
        a = -beta * E
        top = a.max()
        if top > log_scale:
            f = np.exp(log_scale - top) if np.isfinite(log_scale) else 0.0
            s0, s1, s2 = s0 * f, s1 * f, s2 * f
            acc *= f
            log_scale = top
        w = np.exp(a - log_scale)
        d = E - ref
        s0 += w.sum()
        s1 += (w * d).sum()
        s2 += (w * d * d).sum()
        acc += ((w @ tau) * sigma).sum(axis=0)
    mean_d = s1 / s0
    expect = acc / s0
    spins = expect[n_plaq:n_plaq + n]
    return OracleResult(
        beta=beta,
        logZ=float(log_scale + np.log(s0)),
        mean_E=float(ref + mean_d),
        var_E=float(s2 / s0 - mean_d**2),
        plaquette_expectations=expect[:n_plaq],
        magnetization=float(spins.mean()),
        spin_expectations=spins,
        product_expectations=expect[n_plaq + n:],
        n_configurations=1 << n,
    )


def configuration_probabilities(L: int, beta: float, couplings=None, bc: str = PERIODIC) -> np.ndarray:
    """Boltzmann probability of every configuration of the L^3 mutable spins.

    Index bit k set means spin k is -1 (see
    :func:`xcube.plaquette_mc.configuration_index`). L = 2 only.
    """
    if L != 2:
        raise SizeLimitError("configuration probabilities are tabulated for L=2 only")
    lat = SpinLattice(L, bc, couplings)
    n = lat.n_spins
    idx = np.arange(1 << n)
    full = np.ones((len(idx), len(lat.spins)))
    full[:, lat.sites] = 1 - 2 * ((idx[:, None] >> np.arange(n)) & 1)
    E = -(full[:, lat.plaquettes].prod(axis=2) @ lat.couplings)
    a = -beta * E
    return np.exp(a - logsumexp(a))
