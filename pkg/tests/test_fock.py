import numpy as np
import pytest

from lindey.errors import InvalidArgument, UnsupportedOperator
from lindey.fock import (
    BasisKind,
    InputState,
    annihilation_operators,
    build_basis,
    build_input_state,
    build_operators,
    hopping_b_from_a,
    input_vector,
    mode_combination,
)


def test_fixed_basis_order_and_dim():
    b = build_basis("fixed", 3)
    assert b.states == ((3, 0), (2, 1), (1, 2), (0, 3))
    assert b.dim == 4
    assert b.index((3, 0)) == 0


def test_truncated_basis_stacks_sectors():
    b = build_basis(BasisKind.TRUNCATED, 20)
    assert b.dim == 231
    assert list(b.totals[:21]) == [20] * 21
    assert b.states[-1] == (0, 0)
    assert list(b.sector(1)) == [b.index((1, 0)), b.index((0, 1))]


@pytest.mark.parametrize("n", [0, -1, 2.5, True])
def test_bad_particle_count(n):
    with pytest.raises(InvalidArgument):
        build_basis("fixed", n)


def test_hopping_matrix_elements():
    b = build_basis("fixed", 2)
    m = hopping_b_from_a(b)
    # b^dag a |2,0> = sqrt(2) |1,1>
    assert m[b.index((1, 1)), b.index((2, 0))] == pytest.approx(np.sqrt(2))
    assert m[b.index((0, 2)), b.index((1, 1))] == pytest.approx(np.sqrt(2))
    assert np.count_nonzero(m) == 2


def test_annihilators_need_truncated_basis():
    with pytest.raises(UnsupportedOperator):
        annihilation_operators(build_basis("fixed", 2))
    ops = build_operators(build_basis("fixed", 2))
    with pytest.raises(UnsupportedOperator):
        ops.loss_operator()


def test_annihilator_commutator_on_untruncated_states():
    b = build_basis("truncated", 4)
    a, bb = annihilation_operators(b)
    comm = a @ a.T - a.T @ a
    keep = b.totals < 4  # the top sector feels the truncation
    assert np.allclose(np.diag(comm)[keep], 1)
    assert np.allclose(a @ bb, bb @ a)


def test_mode_combination_is_alpha():
    b = build_basis("truncated", 3)
    ops = build_operators(b)
    assert np.allclose(ops.loss_operator(), mode_combination(b, 2 ** -0.5, 2 ** -0.5))


def test_operator_relations():
    b = build_basis("fixed", 4)
    ops = build_operators(b, J=1.3, delta=0.7)
    sx2 = (ops.s_plus + ops.s_minus) / 2
    assert np.allclose(ops.h_j, -2.6 * sx2)
    assert np.allclose(ops.h_delta, 0.7 * ops.s_z)
    assert np.allclose(ops.n_imbalance, -2 * ops.s_z)
    # [S+, S-] = 2 S_z with S- = b^dag a
    assert np.allclose(ops.s_plus @ ops.s_minus - ops.s_minus @ ops.s_plus, 2 * ops.s_z)
    assert np.allclose(np.diag(ops.parity_b), [1, -1, 1, -1, 1])
    assert np.allclose(ops.n_total, 4 * np.eye(5))


def test_input_vectors():
    b = build_basis("fixed", 4)
    assert input_vector(b, "n0")[0] == 1
    assert input_vector(b, "tf")[b.index((2, 2))] == 1
    noon = input_vector(b, InputState.NOON)
    assert noon[0] == noon[-1] == pytest.approx(2 ** -0.5)
    rho = build_input_state(b, "noon")
    assert np.trace(rho) == pytest.approx(1)
    assert np.allclose(rho @ rho, rho)


def test_input_errors():
    with pytest.raises(InvalidArgument):
        input_vector(build_basis("fixed", 3), "tf")
    with pytest.raises(InvalidArgument):
        input_vector(build_basis("fixed", 3), "n0", n=2)
    with pytest.raises(InvalidArgument):
        input_vector(build_basis("truncated", 3), "n0", n=4)
    psi = input_vector(build_basis("truncated", 3), "n0", n=2)
    assert psi[build_basis("truncated", 3).index((2, 0))] == 1


def test_operators_are_read_only():
    ops = build_operators(build_basis("fixed", 2))
    with pytest.raises(ValueError):
        ops.s_z[0, 0] = 3
