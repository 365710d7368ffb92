"""One-excitation maps, transfer tensors, scale factors, size bounds."""

import numpy as np
import pytest

from zcoh import oracle
from zcoh.chain import ChainSpec
from zcoh.dynamics import SpectralCache, propagator_block
from zcoh.optimize import ResidualForm, constrained_entries, residual_S_T
from zcoh.solvers import _s_t_max_from_map, _s_t_sum_from_map
from zcoh.states import ZeroCoherenceState, random_state
from zcoh.transfer import (
    FixedTimeRestriction,
    OneExcitationMap,
    TransferProtocol,
    TransferTensor,
    check_size_bounds,
    extract_one_excitation_map,
    fixed_time_restriction,
    one_excitation_map,
    one_excitation_tensor_formula,
    scale_factors,
    transfer_tensor,
)
from zcoh.unitary import ReceiverUnitaryParams, angle_count


def _random_params(n_er, rng):
    return ReceiverUnitaryParams(
        n_er, {1: rng.uniform(-np.pi, np.pi, angle_count(n_er, 1))}
    )


def test_map_shape_properties():
    m = OneExcitationMap(np.zeros((3, 2)), 1.0)
    assert m.n_receiver == 3
    assert m.n_sender == 2


def test_map_validate_contraction(rng):
    g = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    w = g / (2 * np.linalg.norm(g, 2))
    OneExcitationMap(w, 0.0).validate()
    with pytest.raises(ValueError):
        OneExcitationMap(1.5 * np.eye(2), 0.0).validate()


def test_map_norms():
    w = np.array([[0.6, 0.0], [0.8j, 0.0]])
    m = OneExcitationMap(w, 0.0)
    assert m.frobenius_norm() == pytest.approx(1.0)
    assert m.offdiagonal_norm() == pytest.approx(0.8)


def test_extract_convention():
    # with identity angles the map is the bare propagator submatrix
    cache = SpectralCache(ChainSpec(6), 1)
    t = 3.3
    params = ReceiverUnitaryParams.zeros(3, [1])
    m = one_excitation_map(cache, params, t, 2, 2)
    v = propagator_block(cache, 1, t)
    assert np.max(np.abs(m.matrix - v[4:, :2])) < 1e-13
    with pytest.raises(ValueError):
        extract_one_excitation_map(np.zeros((5, 5)), 6, 2, 2)


def test_map_apply_matches_oracle(rng):
    # single-excitation sender: the receiver block is exactly w s w^dagger
    n, ns, nr, n_er = 6, 2, 2, 3
    cache = SpectralCache(ChainSpec(n), 1)
    params = _random_params(n_er, rng)
    t = 4.1
    sender = random_state(ns, 1, rng)
    m = one_excitation_map(cache, params, t, ns, nr)
    got = m.apply(sender.blocks[1])
    dense = oracle.oracle_pipeline(ChainSpec(n), sender, t, params=params, n_receiver=nr)
    want = oracle.dense_to_blocks(dense, nr, 1).blocks[1]
    assert np.max(np.abs(got - want)) < 1e-12


def test_fixed_time_restriction_agrees(rng):
    n, ns, nr, n_er = 7, 2, 2, 4
    cache = SpectralCache(ChainSpec(n), 1)
    t = 5.5
    restriction = fixed_time_restriction(cache, t, ns, nr, n_er)
    for _ in range(3):
        params = _random_params(n_er, rng)
        fast = restriction.map_for(params)
        slow = one_excitation_map(cache, params, t, ns, nr)
        assert np.max(np.abs(fast.matrix - slow.matrix)) < 1e-12


def test_restriction_validates_sizes():
    cache = SpectralCache(ChainSpec(5), 1)
    with pytest.raises(ValueError):
        fixed_time_restriction(cache, 1.0, 2, 3, 2)  # er smaller than receiver
    with pytest.raises(ValueError):
        fixed_time_restriction(cache, 1.0, 2, 2, 6)  # er larger than chain
    restriction = fixed_time_restriction(cache, 1.0, 2, 2, 3)
    with pytest.raises(ValueError):
        restriction.map_for(ReceiverUnitaryParams.zeros(4, [1]))


def test_tensor_shape_validation():
    with pytest.raises(ValueError):
        TransferTensor(1, 2, 2, np.zeros((2, 2, 2, 3)))


def test_probe_tensor_matches_formula(rng):
    # dual route: pipeline probes vs the closed form from the map
    n, ns, nr, n_er = 6, 2, 2, 3
    cache = SpectralCache(ChainSpec(n), 1)
    params = _random_params(n_er, rng)
    t = 2.7
    probe = transfer_tensor(cache, params, 1, t, ns, nr)
    formula = one_excitation_tensor_formula(one_excitation_map(cache, params, t, ns, nr))
    assert np.max(np.abs(probe.entries - formula.entries)) < 1e-12
    assert probe.hermitian_symmetry_defect() < 1e-12


def test_top_order_tensor_matches_oracle(rng):
    # receiver block K receives only the chain sector K, so the top-order
    # probe tensor applied to s^(K) must match the dense pipeline exactly
    n, ns, nr = 6, 2, 2
    cache = SpectralCache(ChainSpec(n), 2)
    params = ReceiverUnitaryParams.zeros(3, [1])
    t = 3.9
    sender = random_state(ns, 2, rng)
    tensor = transfer_tensor(cache, params, 2, t, ns, nr)
    got = tensor.apply(sender.blocks[2])
    dense = oracle.oracle_pipeline(ChainSpec(n), sender, t, n_receiver=nr)
    want = oracle.dense_to_blocks(dense, nr, 2).blocks[2]
    assert np.max(np.abs(got - want)) < 1e-12
    assert tensor.hermitian_symmetry_defect() < 1e-12


def test_tensor_apply_linearity(rng):
    cache = SpectralCache(ChainSpec(5), 1)
    tensor = transfer_tensor(cache, ReceiverUnitaryParams.zeros(3, [1]), 1, 1.5, 2, 2)
    a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    b = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    lhs = tensor.apply(2.0 * a - 0.5j * b)
    rhs = 2.0 * tensor.apply(a) - 0.5j * tensor.apply(b)
    assert np.max(np.abs(lhs - rhs)) < 1e-12


def test_scale_factors_values():
    w = np.diag([0.9, 0.6 * np.exp(0.3j), 0.5])
    sf = scale_factors(OneExcitationMap(w, 0.0))
    assert sf.matrix[0, 1] == pytest.approx(0.9 * 0.6 * np.exp(-0.3j))
    assert sf.lam_opt == pytest.approx(0.25)  # |w_22|^2
    assert sf.lam_opt_offdiag == pytest.approx(0.3)  # |w_11 w_22|
    with pytest.raises(ValueError):
        scale_factors(OneExcitationMap(np.zeros((3, 2)), 0.0))


def test_scale_factors_single_site():
    sf = scale_factors(OneExcitationMap(np.array([[0.7]]), 0.0))
    assert sf.lam_opt == pytest.approx(0.49)
    assert sf.lam_opt_offdiag == pytest.approx(0.49)


def test_identity_map_residual():
    tensor = one_excitation_tensor_formula(OneExcitationMap(np.eye(2), 0.0))
    assert residual_S_T(tensor, ResidualForm.MAX) == pytest.approx(1.0)
    assert residual_S_T(tensor, ResidualForm.SUM) == pytest.approx(3.0)
    # 2x2x2x2 tensor: the full receiver row 0 plus column 0 below it
    assert constrained_entries(tensor).size == 12


def test_map_shortcuts_match_tensor_route(rng):
    # the map-level residual shortcuts must agree with the literal tensor sum
    for _ in range(10):
        w = 0.4 * (rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3)))
        tensor = one_excitation_tensor_formula(OneExcitationMap(w, 0.0))
        assert _s_t_max_from_map(w) == pytest.approx(
            residual_S_T(tensor, ResidualForm.MAX), abs=1e-13
        )
        assert _s_t_sum_from_map(w) == pytest.approx(
            residual_S_T(tensor, ResidualForm.SUM), abs=1e-12
        )


def test_size_bounds():
    r = check_size_bounds(2, 3, TransferProtocol.PTZ_RESTRICTED)
    assert r.satisfied and r.minimum_er_sites == 3
    r = check_size_bounds(2, 2, TransferProtocol.PTZ_RESTRICTED)
    assert not r.satisfied and "violated" in r.explanation
    r = check_size_bounds(2, 3, TransferProtocol.ARBITRARY_PARAMETER)
    assert r.satisfied and r.minimum_er_sites == 3
    r = check_size_bounds(3, 4, TransferProtocol.ARBITRARY_PARAMETER)
    assert not r.satisfied and r.minimum_er_sites == 5
