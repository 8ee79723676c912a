import itertools

import numpy as np
import pytest

from xcube.duality import Membrane, corner_set
from xcube.exact import (CubicStructureEnsemble, SizeLimitError, build_ensemble,
                         classical_oracle, configuration_probabilities, ensemble_stats,
                         fidelity_exact, global_entanglement, heat_capacity,
                         membrane_expectation_exact, one_qubit_diagonal, one_qubit_diagonals)
from xcube.lattice import build_geometry
from xcube.stabilizer import gf2_rank

BETAS = [0.1, 0.3, 0.551, 1.0]


@pytest.fixture(scope="module")
def g2():
    return build_geometry(2)


@pytest.fixture(scope="module")
def g3():
    return build_geometry(3)


@pytest.fixture(scope="module")
def ens2(g2):
    return build_ensemble(g2)


@pytest.fixture(scope="module")
def ens3(g3):
    return build_ensemble(g3)


def _supports(g):
    return [sum(1 << int(e) for e in row) for row in g.cube_edges]


def _structure_ints(ens, chunk_bits=None):
    out = []
    for chunk in ens.chunks(chunk_bits):
        for row in chunk:
            out.append(sum(int(w) << (64 * i) for i, w in enumerate(row)))
    return out


def test_rank_matches_cube_supports(ens2, ens3, g2, g3):
    assert ens2.r == gf2_rank(_supports(g2)) == 4
    assert ens3.r == gf2_rank(_supports(g3)) == 20


def test_kernel_size_is_reported(ens2, ens3):
    # 3L planes with two relations among the plane flips
    assert ens2.kernel_exponent == 3 * 2 - 2
    assert ens3.kernel_exponent == 3 * 3 - 2


def test_rank_cap(g3):
    with pytest.raises(SizeLimitError, match="max_rank=10"):
        build_ensemble(g3, max_rank=10)


def test_enumeration_is_the_cube_group(ens2, g2):
    group = set()
    sup = _supports(g2)
    for subset in itertools.product((0, 1), repeat=len(sup)):
        v = 0
        for bit, s in zip(subset, sup):
            if bit:
                v ^= s
        group.add(v)
    assert sorted(_structure_ints(ens2)) == sorted(group)


@pytest.mark.parametrize("chunk_bits", [0, 1, 3, 16])
def test_gray_order(ens2, chunk_bits):
    seq = _structure_ints(ens2, chunk_bits)
    assert seq == _structure_ints(ens2)
    basis = set(ens2.basis)
    assert seq[0] == 0
    assert all(a ^ b in basis for a, b in zip(seq, seq[1:]))


def test_histograms_independent_of_chunking(ens3):
    ref = ens3.histograms
    for bits in (12, 20):
        counts, edge_counts = ens3.sweep_histograms(bits)
        assert np.array_equal(counts, ref[0])
        assert np.array_equal(edge_counts, ref[1])


def test_empty_structure_weight(ens2):
    counts, _ = ens2.histograms
    assert counts[0] == 1
    assert ens2.log_weights(0.7)[0] == pytest.approx(0.7 * ens2.N)


def test_beta_zero(ens3):
    st = ensemble_stats(ens3, 0.0)
    assert st.logZ == pytest.approx(ens3.r * np.log(2), abs=1e-12)
    assert st.mean_E == pytest.approx(0.0, abs=1e-9)
    assert heat_capacity(st) == 0.0


def test_large_beta(ens3):
    st = ensemble_stats(ens3, 5.0)
    assert st.logZ == pytest.approx(5.0 * ens3.N, abs=1e-6)
    assert st.mean_E == pytest.approx(-ens3.N, abs=1e-6)
    w = one_qubit_diagonal(ens3, 5.0, 7)
    assert w.w_plus == pytest.approx(1.0, abs=1e-8)


def test_normalisation(ens3):
    for beta in BETAS:
        lw = ens3.log_weights(beta)
        total = np.exp(lw - ensemble_stats(ens3, beta).logZ).sum()
        assert total == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("beta", [0.1, 0.5, 1.0])
def test_against_brute_force(ens2, beta):
    st = ensemble_stats(ens2, beta)
    oracle = classical_oracle(2, beta)
    offset = ens2.kernel_exponent * np.log(2)
    assert st.logZ == pytest.approx(oracle.logZ - offset, abs=1e-10)
    assert st.mean_E == pytest.approx(oracle.mean_E, abs=1e-10)
    assert heat_capacity(st) == pytest.approx(oracle.heat_capacity, abs=1e-10)
    w_minus = one_qubit_diagonals(ens2, beta)
    np.testing.assert_allclose(1 - 2 * w_minus, oracle.plaquette_expectations, atol=1e-10)


def test_fidelity_basics(ens3):
    assert fidelity_exact(ens3, 0.4, 0.0) == 1.0
    assert fidelity_exact(ens3, 0.4, 0.03) == pytest.approx(fidelity_exact(ens3, 0.43, -0.03),
                                                            abs=1e-14)
    assert 0 < fidelity_exact(ens3, 0.2, 0.1) < 1
    with pytest.raises(ValueError):
        fidelity_exact(ens3, 0.01, -0.02)


def test_fidelity_expansion(ens3):
    beta = 0.4
    cv = heat_capacity(ensemble_stats(ens3, beta))
    res = [abs((1 - fidelity_exact(ens3, beta, d)) / d**2 - cv / (8 * beta**2))
           for d in (0.02, 0.01, 0.005)]
    assert res[0] / res[1] == pytest.approx(2, abs=0.3)
    assert res[1] / res[2] == pytest.approx(2, abs=0.3)


def test_one_qubit_sum_and_monotonic(ens3):
    grid = np.linspace(0, 1.5, 16)
    w_plus = np.array([1 - one_qubit_diagonals(ens3, b) for b in grid])
    assert np.all(np.diff(w_plus, axis=0) >= -1e-15)
    w = one_qubit_diagonal(ens3, 0.3, 11)
    assert w.w_plus + w.w_minus == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("which", ["ens2", "ens3"])
def test_per_edge_uniformity(which, request):
    ens = request.getfixturevalue(which)
    for beta in BETAS:
        mean_term = 1 - 2 * one_qubit_diagonals(ens, beta)
        u = ensemble_stats(ens, beta).u
        assert np.abs(mean_term + u).max() <= 1e-12


@pytest.mark.parametrize("which", ["ens2", "ens3"])
def test_global_entanglement_routes(which, request):
    ens = request.getfixturevalue(which)
    for beta in BETAS:
        ge, ge_u = global_entanglement(ens, beta)
        assert ge == pytest.approx(ge_u, abs=1e-10)
        assert 0 <= ge <= 1
    assert global_entanglement(ens, 0.0)[0] == pytest.approx(1.0, abs=1e-12)
    assert global_entanglement(ens, 5.0)[0] < 1e-12


def test_product_state_has_no_entanglement(g2):
    single = CubicStructureEnsemble(g2, [])
    assert single.size == 1
    assert global_entanglement(single, 0.3)[0] == pytest.approx(0.0, abs=1e-15)


def test_membrane_expectation_basics(ens3, g3):
    assert membrane_expectation_exact(ens3, 0.3, []) == 1.0
    e = 5
    assert membrane_expectation_exact(ens3, 0.3, [e]) == pytest.approx(
        1 - 2 * one_qubit_diagonal(ens3, 0.3, e).w_minus, abs=1e-13)
    assert membrane_expectation_exact(ens3, 4.0, range(0, 81, 7)) == pytest.approx(1, abs=1e-9)


def test_membrane_expectation_matches_oracle_l3(ens3, g3):
    mem = (Membrane.rectangle("Z", 1, (0, 0), (2, 1))
           | Membrane.rectangle("Z", 1, (0, 1), (1, 1)))
    corners = sorted(corner_set(mem, g3))
    oracle = classical_oracle(3, 0.3, products=[corners], allow_large=True)
    exact = membrane_expectation_exact(ens3, 0.3, mem.edges(g3))
    assert exact == pytest.approx(oracle.product_expectations[0], abs=1e-8)
    assert oracle.logZ - ensemble_stats(ens3, 0.3).logZ == pytest.approx(
        ens3.kernel_exponent * np.log(2), abs=1e-9)


def test_oracle_beta_zero_and_guard():
    assert classical_oracle(2, 0.0).logZ == pytest.approx(8 * np.log(2), abs=1e-12)
    with pytest.raises(SizeLimitError):
        classical_oracle(3, 0.2)
    with pytest.raises(SizeLimitError):
        classical_oracle(4, 0.2, allow_large=True)


def test_oracle_ratio_constant(ens2):
    ratios = [classical_oracle(2, b).logZ - ensemble_stats(ens2, b).logZ for b in (0.1, 0.5, 1.0)]
    assert np.ptp(ratios) < 1e-10


def test_oracle_uniform_plaquettes():
    o = classical_oracle(2, 0.5)
    assert np.ptp(o.plaquette_expectations) < 1e-12
    assert abs(o.magnetization) < 1e-12


def test_oracle_fixed_plus_boundary():
    o = classical_oracle(2, 0.5, bc="fixed-plus")
    assert o.magnetization > 0.9
    assert o.plaquette_expectations.shape == (54,)


def test_couplings_route_agrees_with_histograms(ens2):
    ones = np.ones(ens2.N)
    a = ensemble_stats(ens2, 0.4)
    b = ensemble_stats(ens2, 0.4, couplings=ones)
    assert b.logZ == pytest.approx(a.logZ, abs=1e-12)
    assert b.var_E == pytest.approx(a.var_E, abs=1e-10)
    np.testing.assert_allclose(one_qubit_diagonals(ens2, 0.4, ones),
                               one_qubit_diagonals(ens2, 0.4), atol=1e-14)


def test_duality_with_random_couplings(ens2, g2):
    rng = np.random.default_rng(4)
    J = rng.uniform(0.5, 1.5, ens2.N)
    for beta in (0.2, 0.7):
        st = ensemble_stats(ens2, beta, couplings=J)
        o = classical_oracle(2, beta, couplings=J)
        assert o.logZ - st.logZ == pytest.approx(ens2.kernel_exponent * np.log(2), abs=1e-10)
        assert st.var_E == pytest.approx(o.var_E, abs=1e-10)
        np.testing.assert_allclose(1 - 2 * one_qubit_diagonals(ens2, beta, J),
                                   o.plaquette_expectations, atol=1e-10)
    edges = [0, 3, 17]
    corners = [c for c, k in _odd_counts(g2, edges).items() if k]
    o = classical_oracle(2, 0.6, couplings=J, products=[corners])
    assert membrane_expectation_exact(ens2, 0.6, edges, couplings=J) == pytest.approx(
        o.product_expectations[0], abs=1e-10)


def _odd_counts(g, edges):
    from collections import Counter

    c = Counter(s for e in edges for s in g.spins_of_edge(e))
    return {s: k % 2 for s, k in c.items()}


def test_configuration_probabilities():
    p = configuration_probabilities(2, 0.5)
    assert p.shape == (256,)
    assert p.sum() == pytest.approx(1.0)
    # the 16 plane-flip images of the all-plus state are the ground states
    assert np.sort(p)[-16:] == pytest.approx(np.full(16, p.max()))
    with pytest.raises(SizeLimitError):
        configuration_probabilities(3, 0.5)
