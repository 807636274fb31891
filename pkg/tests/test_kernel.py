import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chainkit.chain import ChainSpec, Coupling, Potential, eval_coupling
from chainkit.ensemble import Ensemble
from chainkit.kernel import duality_matrix
from chainkit.measure import discrete_space

from chains import FAMILIES, gaussian_chain, random_discrete_ensemble


def weighted(spec, j, block):
    """Right-multiply a block by the level-j node weights (Nystrom)."""
    return block * spec.spaces[j].weights[None, :]


def test_single_level_propagation_is_identity():
    ens = gaussian_chain(m=1, N=3)
    np.testing.assert_array_equal(ens.prop.psi[0], ens.bio.psi1)
    np.testing.assert_array_equal(ens.prop.phi[0], ens.bio.phim)
    np.testing.assert_array_equal(ens.kernel.Kcheck_blocks[0][0], ens.kernel.K_blocks[0][0])


def test_two_point_hand_propagation():
    space = discrete_space([-0.5, 1.0], [0.3, 0.7])
    V = Potential.quadratic()
    ens = Ensemble.build(ChainSpec(2, 1, [space] * 2, [V] * 2, [Coupling.exponential()]))
    psi1 = ens.bio.psi1[0]
    for r, y in enumerate(space.nodes):
        hand = sum(
            math.exp(x * y - 0.5 * V(x) - 0.5 * V(y)) * psi1[c] * space.weights[c]
            for c, x in enumerate(space.nodes)
        )
        assert ens.prop.psi[1][0, r] == pytest.approx(hand, rel=1e-15)


def _chains():
    rng = np.random.default_rng(2024)
    out = [gaussian_chain(m=3, N=3, order=32)]
    for family in FAMILIES:
        for m in (1, 2, 3):
            out.append(random_discrete_ensemble(rng, m, 2, family))
    return out


CHAINS = _chains()


@pytest.mark.parametrize("ens", CHAINS)
def test_duality_at_every_level(ens):
    spec, prop = ens.spec, ens.prop
    for j in range(spec.m):
        # independent sum over nodes, not the stored residual
        D = np.einsum("an,bn,n->ab", prop.psi[j], prop.phi[j], spec.spaces[j].weights)
        np.testing.assert_allclose(D, np.eye(spec.N), atol=1e-9)
        np.testing.assert_allclose(duality_matrix(spec, prop.psi[j], prop.phi[j], j), D, atol=1e-12)
    assert prop.dualization_residual <= 1e-9


@pytest.mark.parametrize("ens", CHAINS)
def test_weighted_trace_is_N(ens):
    for j in range(ens.spec.m):
        K = ens.kernel.K_blocks[j][j]
        assert np.sum(np.diag(K) * ens.spec.spaces[j].weights) == pytest.approx(ens.spec.N, abs=1e-10)


@pytest.mark.parametrize("ens", CHAINS)
def test_reproducing_property(ens):
    spec, K = ens.spec, ens.kernel.K_blocks
    for i, k, j in itertools.product(range(spec.m), repeat=3):
        prod = weighted(spec, k, K[i][k]) @ K[k][j]
        scale = max(1.0, float(np.max(np.abs(K[i][j]))))
        assert np.max(np.abs(prod - K[i][j])) <= 1e-10 * scale


@pytest.mark.parametrize("ens", CHAINS)
def test_w_blocks_strictly_lower(ens):
    W = ens.kernel.W_blocks
    for i, j in itertools.product(range(ens.spec.m), repeat=2):
        if i <= j:
            assert not np.any(W[i][j])
        else:
            assert np.any(W[i][j])


@pytest.mark.parametrize("ens", CHAINS)
def test_composite_consistency(ens):
    spec, W = ens.spec, ens.kernel.W_blocks
    for k, l, j in itertools.combinations(reversed(range(spec.m)), 3):
        prod = weighted(spec, l, W[k][l]) @ W[l][j]
        scale = max(1.0, float(np.max(np.abs(W[k][j]))))
        assert np.max(np.abs(prod - W[k][j])) <= 1e-10 * scale


@pytest.mark.parametrize("ens", CHAINS)
def test_K_blocks_have_rank_at_most_N(ens):
    for row in ens.kernel.K_blocks:
        for block in row:
            assert np.linalg.matrix_rank(block, tol=1e-10 * max(1.0, np.abs(block).max())) <= ens.spec.N


def test_nearest_neighbour_w_is_the_coupling():
    ens = CHAINS[2]  # general family, m = 2
    spec = ens.spec
    W = ens.kernel.W_blocks[1][0]
    for r, y in enumerate(spec.spaces[1].nodes):
        for c, x in enumerate(spec.spaces[0].nodes):
            direct = eval_coupling(spec.couplings[0], x, y) * math.exp(
                -0.5 * (spec.potentials[0](x) + spec.potentials[1](y)))
            assert W[r, c] == pytest.approx(direct, rel=1e-13)


@pytest.mark.parametrize("ens", [CHAINS[0], CHAINS[3], CHAINS[9]])
def test_evaluator_matches_grid_blocks(ens):
    ev = ens.evaluator
    nodes = [s.nodes for s in ens.spec.spaces]
    for i, j in itertools.product(range(ens.spec.m), repeat=2):
        np.testing.assert_allclose(ev.K(i, j, nodes[i], nodes[j]), ens.kernel.K_blocks[i][j], rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(ev.w(i, j, nodes[i], nodes[j]), ens.kernel.W_blocks[i][j], rtol=1e-12, atol=1e-14)


@settings(max_examples=25, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3))
def test_off_grid_kernel_reproduces(x, y):
    ens = CHAINS[0]
    ev, spec = ens.evaluator, ens.spec
    z = spec.spaces[1].nodes
    lhs = (ev.K(0, 1, [x], z) * spec.spaces[1].weights) @ ev.K(1, 2, z, [y])
    assert lhs[0, 0] == pytest.approx(ev.K(0, 2, [x], [y])[0, 0], abs=1e-12)


def test_assemble_layout():
    ens = CHAINS[6]
    full = ens.kernel.assemble()
    off = ens.kernel.offsets
    assert full.shape == (off[-1], off[-1])
    np.testing.assert_array_equal(full[off[1]:off[2], off[0]:off[1]], ens.kernel.Kcheck_blocks[1][0])
    np.testing.assert_array_equal(ens.kernel.assemble("K") - ens.kernel.assemble("W"), full)


def test_block_dump_round_trips(tmp_path):
    ens = CHAINS[5]
    paths = ens.kernel.dump(tmp_path)
    assert len(paths) == ens.spec.m**2
    back = np.loadtxt(tmp_path / "kcheck_2_1.csv", delimiter=",", ndmin=2)
    np.testing.assert_array_equal(back, ens.kernel.Kcheck_blocks[1][0])
