import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xcube.lattice import Axis, build_geometry
from xcube.stabilizer import (PauliOperator, build_stabilizers, degeneracy_exponent,
                              gf2_rank, mobility_experiments, stabilizer_ranks,
                              symplectic_product, syndrome)


@pytest.fixture(scope="module")
def stabs2():
    return build_stabilizers(build_geometry(2))


@pytest.fixture(scope="module")
def stabs4():
    return build_stabilizers(build_geometry(4))


def test_generator_counts_and_weights(stabs2):
    assert len(stabs2.cube_ops) == 8
    assert len(stabs2.vertex_ops) == 24
    assert {op.weight for op in stabs2.cube_ops} == {12}
    assert {op.weight for op in stabs2.vertex_ops} == {4}
    assert all(op.z == 0 for op in stabs2.cube_ops)
    assert all(op.x == 0 for op in stabs2.vertex_ops)


@pytest.mark.parametrize("L", [2, 3])
def test_all_generators_commute(L):
    gens = build_stabilizers(build_geometry(L)).generators()
    assert all(symplectic_product(p, q) == 0 for p, q in itertools.combinations(gens, 2))


def test_cube_vertex_overlaps_even(stabs2):
    for c, v in itertools.product(stabs2.cube_ops, stabs2.vertex_ops):
        assert (c.x & v.z).bit_count() % 2 == 0


def test_symplectic_product_basics(stabs2):
    n = stabs2.n
    ident = PauliOperator.identity(n)
    assert symplectic_product(ident, ident) == 0
    g = stabs2.geometry
    e = g.edge_index(0, 0, 0, Axis.X)
    x = PauliOperator.from_edges(n, x_edges=[e])
    assert symplectic_product(x, stabs2.vertex_op(0, Axis.Z)) == 1
    assert symplectic_product(x, stabs2.cube_ops[0]) == 0
    with pytest.raises(ValueError):
        symplectic_product(x, PauliOperator.identity(n + 1))


@pytest.mark.parametrize("vectors, rank", [
    (["0000"], 0),
    (["1100", "0110", "1010"], 2),
    ([0b1, 0b10, 0b100], 3),
    ([[1, 1, 0], [1, 1, 0]], 1),
    ([], 0),
])
def test_gf2_rank(vectors, rank):
    assert gf2_rank(vectors) == rank


def test_symplectic_rank_small_lattice(stabs2):
    assert stabilizer_ranks(stabs2)["rank"] == 15


@pytest.mark.parametrize("L", [2, 3, 4, 5])
def test_degeneracy_exponent(L):
    assert degeneracy_exponent(build_stabilizers(build_geometry(L))) == 6 * L - 3


def test_single_qubit_syndromes(stabs4):
    g = stabs4.geometry
    e = g.edge_index(1, 2, 3, Axis.Y)
    sx = syndrome(PauliOperator.from_edges(g.n_edges, x_edges=[e]), stabs4)
    assert len(sx.violated_vertex_ops) == 4 and not sx.violated_cubes
    ends = {g.vertex_index(1, 2, 3), g.vertex_index(1, 3, 3)}
    assert {v for v, _ in sx.violated_vertex_ops} == ends
    # the Y-normal plane does not contain a Y edge
    assert all(normal != Axis.Y for _, normal in sx.violated_vertex_ops)
    sz = syndrome(PauliOperator.from_edges(g.n_edges, z_edges=[e]), stabs4)
    assert len(sz.violated_cubes) == 4 and not sz.violated_vertex_ops
    assert sz.violated_cubes == set(g.spins_of_edge(e))


@pytest.mark.parametrize("k", [2, 3])
def test_straight_chain_violations_at_ends(stabs4, k):
    g = stabs4.geometry
    edges = [g.edge_index(i, 1, 1, Axis.X) for i in range(k)]
    s = syndrome(PauliOperator.from_edges(g.n_edges, x_edges=edges), stabs4)
    assert len(s) == 4
    assert {v for v, _ in s.violated_vertex_ops} == {g.vertex_index(0, 1, 1),
                                                     g.vertex_index(k, 1, 1)}


def test_mobility_report():
    rep = mobility_experiments(build_geometry(4))
    assert rep["straight_x_string"]["size"] == 4
    assert rep["bent_x_string"]["size"] == 6
    assert rep["bent_x_string"]["at_corner"] == 2
    assert rep["single_z"]["size"] == 4
    assert rep["z_chain"]["size"] == 4
    assert len(rep["z_chain"]["violated_cubes"]) == 4
    with pytest.raises(ValueError):
        mobility_experiments(build_geometry(2))


def test_mobility_length_two_chain():
    rep = mobility_experiments(build_geometry(4), length=2)
    assert rep["straight_x_string"]["size"] == 4


@settings(max_examples=30, deadline=None)
@given(st.data())
def test_syndrome_is_linear(stabs4, data):
    n = stabs4.n
    edges = st.lists(st.integers(0, n - 1), max_size=6)
    p = PauliOperator.from_edges(n, data.draw(edges), data.draw(edges))
    q = PauliOperator.from_edges(n, data.draw(edges), data.draw(edges))
    assert syndrome(p * q, stabs4) == syndrome(p, stabs4) ^ syndrome(q, stabs4)


@settings(max_examples=20, deadline=None)
@given(cubes=st.lists(st.integers(0, 63), max_size=10))
def test_cube_products_have_trivial_syndrome(stabs4, cubes):
    op = PauliOperator.identity(stabs4.n)
    for c in cubes:
        op = op * stabs4.cube_ops[c]
    assert len(syndrome(op, stabs4)) == 0
