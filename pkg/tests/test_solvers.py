"""Registration times, fixed-point solvers, angle searches: fast small-N checks.

The large-N pinned values live in the acceptance suite; this file exercises
every code path and invariant at sizes where a run takes seconds.
"""

import numpy as np
import pytest

from zcoh import oracle
from zcoh.chain import ChainSpec, CouplingMode
from zcoh.dynamics import SpectralCache
from zcoh.optimize import DEConfig
from zcoh.solvers import (
    DegenerateTimeError,
    FlatCriterionError,
    InfeasibleConfigurationError,
    RegistrationCriterion,
    RegistrationTime,
    _hermitian_basis,
    _restricted_delta_from_map,
    _solve_real_system,
    calibrate_coupling_mode,
    default_window,
    find_registration_time,
    offdiagonal_floor,
    optimize_restricted_angles,
    pack_hermitian,
    solve_arbitrary_parameter,
    solve_ptz_complete,
    solve_ptz_restricted,
    transfer_receiver_state,
    unpack_hermitian,
)
from zcoh.states import block_distance, deviation, random_state
from zcoh.transfer import scale_factors, fixed_time_restriction
from zcoh.unitary import ReceiverUnitaryParams, angle_count


def test_pack_unpack_roundtrip(rng):
    for d in (1, 2, 4):
        g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        h = 0.5 * (g + g.conj().T)
        vec = pack_hermitian(h)
        assert vec.shape == (d * d,)
        assert np.max(np.abs(unpack_hermitian(vec, d) - h)) < 1e-14


def test_hermitian_basis_aligns_with_chart():
    for j, mat in _hermitian_basis(3):
        vec = pack_hermitian(mat)
        want = np.zeros(9)
        want[j] = 1.0
        assert np.array_equal(vec, want)


def test_default_window():
    assert default_window(10) == (7.0, 13.0)


def test_registration_rejects_unsupported_requests():
    cache = SpectralCache(ChainSpec(6), 2)
    with pytest.raises(ValueError, match="arbitrary-parameter"):
        find_registration_time(cache, RegistrationCriterion.LAMBDA_OPT, 2)
    with pytest.raises(ValueError, match="2-site"):
        find_registration_time(
            cache, RegistrationCriterion.TWO_EXCITATION_PROBABILITY, 3
        )
    with pytest.raises(ValueError, match="window"):
        find_registration_time(
            cache, RegistrationCriterion.FROBENIUS_W, 2, window=(5.0, 4.0)
        )


def test_flat_criterion_detected():
    # sender and receiver cover the whole 2-site chain: the Frobenius norm of
    # the full unitary is constant in t
    cache = SpectralCache(ChainSpec(2), 1)
    with pytest.raises(FlatCriterionError):
        find_registration_time(
            cache, RegistrationCriterion.FROBENIUS_W, 2, window=(0.5, 3.0)
        )


def test_registration_is_refined_local_max():
    from zcoh.dynamics import two_excitation_transfer_amplitude

    cache = SpectralCache(ChainSpec(10), 2)
    reg = find_registration_time(
        cache, RegistrationCriterion.TWO_EXCITATION_PROBABILITY, 2
    )
    lo, hi = default_window(10)
    assert lo < reg.t_star < hi
    assert reg.criterion is RegistrationCriterion.TWO_EXCITATION_PROBABILITY

    def crit(t):
        return abs(two_excitation_transfer_amplitude(cache, t)) ** 2

    # beats every grid point and is stationary to first order
    ts = np.arange(lo, hi + 0.005, 0.01)
    grid_best = max(crit(t) for t in ts)
    assert reg.value >= grid_best - 1e-12
    h = 1e-5
    grad = (crit(reg.t_star + h) - crit(reg.t_star - h)) / (2 * h)
    assert abs(grad) < 1e-6


def test_registration_boundary_maximum_keeps_grid_best():
    # at this length the criterion still rises at the window edge; the
    # refinement must not return less than the best scanned sample
    cache = SpectralCache(ChainSpec(8), 2)
    reg = find_registration_time(
        cache, RegistrationCriterion.TWO_EXCITATION_PROBABILITY, 2
    )
    from zcoh.dynamics import two_excitation_transfer_amplitude

    ts = np.arange(5.6, 10.4 + 0.005, 0.01)
    grid_best = max(
        abs(two_excitation_transfer_amplitude(cache, t)) ** 2 for t in ts
    )
    assert reg.value >= grid_best - 1e-15


def test_frobenius_registration_matches_direct_norm():
    cache = SpectralCache(ChainSpec(7), 1)
    reg = find_registration_time(cache, RegistrationCriterion.FROBENIUS_W, 3)
    from zcoh.dynamics import propagator_block

    v = propagator_block(cache, 1, reg.t_star)
    assert reg.value == pytest.approx(np.linalg.norm(v[4:, :3]), abs=1e-12)


def test_calibration_picks_matching_mode():
    # references generated by one mode must select that mode with ~0 deviation
    cache = SpectralCache(ChainSpec(10), 2)
    refs = {
        10: find_registration_time(
            cache, RegistrationCriterion.TWO_EXCITATION_PROBABILITY, 2
        ).t_star
    }
    cal = calibrate_coupling_mode(refs)
    assert cal.mode is CouplingMode.DIPOLAR
    assert cal.max_deviation < 1e-9
    assert set(cal.deviations) == {m.value for m in CouplingMode}
    assert cal.times[CouplingMode.DIPOLAR.value][10] == pytest.approx(refs[10])
    # the alternative law misses by a measurable margin
    other = max(cal.deviations[CouplingMode.NEAREST_NEIGHBOR.value].values())
    assert other > 0.1


def test_solve_real_system_flags_inconsistency():
    a = np.array([[1.0], [1.0]])
    assert _solve_real_system(a, np.array([2.0, 2.0]), "ok")[0] == pytest.approx(2.0)
    with pytest.raises(DegenerateTimeError):
        _solve_real_system(a, np.array([0.0, 1.0]), "bad")


def test_complete_protocol_fixed_point():
    cache = SpectralCache(ChainSpec(8), 2)
    reg = find_registration_time(
        cache, RegistrationCriterion.TWO_EXCITATION_PROBABILITY, 2
    )
    sol = solve_ptz_complete(cache, 2, reg)
    assert sol.protocol == "complete"
    assert sol.swap_target == (2, 0)
    assert sol.round_trip_error < 1e-10
    state = sol.sender_state
    state.validate()
    assert abs(state.trace - 1.0) < 1e-12

    # the defining identifications, checked through the transfer pipeline
    received = transfer_receiver_state(cache, state, reg.t_star)
    assert np.max(np.abs(received.blocks[1] - state.blocks[1])) < 1e-10
    assert abs(received.blocks[2][0, 0] - state.blocks[0][0, 0]) < 1e-10

    from zcoh.states import AsymptoticPTZ, AsymptoticVariant

    ref = AsymptoticPTZ(AsymptoticVariant.SWAPPED, 2, 2, (2, 0))
    assert sol.delta == pytest.approx(deviation(state, ref))


def test_complete_requires_cached_sectors():
    cache = SpectralCache(ChainSpec(8), 1)
    reg = RegistrationTime(
        8.0, RegistrationCriterion.TWO_EXCITATION_PROBABILITY, (5.6, 10.4), 0.01, 0.3
    )
    with pytest.raises(ValueError, match="sectors"):
        solve_ptz_complete(cache, 2, reg)


def test_complete_mirror_degenerate_time():
    # two-site chain at t = 0: the map is the identity and every state is a
    # fixed point; the minimum-norm solution is the maximally mixed one
    cache = SpectralCache(ChainSpec(2), 2)
    reg = RegistrationTime(
        0.0, RegistrationCriterion.TWO_EXCITATION_PROBABILITY, (0.0, 1.0), 0.01, 1.0
    )
    sol = solve_ptz_complete(cache, 2, reg)
    assert sol.round_trip_error < 1e-12
    assert sol.sender_state.blocks[0][0, 0] == pytest.approx(0.25)
    assert np.allclose(sol.sender_state.blocks[1], 0.25 * np.eye(2))


def test_transfer_receiver_state_matches_oracle(rng):
    # production pipeline vs the literal dense route, with receiver rotation
    spec = ChainSpec(6)
    cache = SpectralCache(spec, 2)
    sender = random_state(2, 2, rng)
    flat = rng.uniform(-np.pi, np.pi, angle_count(3, 1) + angle_count(3, 2))
    params = ReceiverUnitaryParams.from_flat(3, [1, 2], flat)
    for t, p in ((3.7, params), (2.1, None)):
        got = transfer_receiver_state(cache, sender, t, p)
        dense = oracle.oracle_pipeline(spec, sender, t, params=p)
        want = oracle.dense_to_blocks(dense, 2, 2)
        assert block_distance(got, want) < 1e-13


def test_restricted_delta_reflection_guard():
    # a map that drives the fixed point unphysical folds back under sqrt(2)
    w = np.array([[0.0, 0.0], [0.5, 1.2]])
    a = np.array([[0.25, 0.44], [1.25, 1.44]])
    s11, s22 = np.linalg.solve(a, np.array([0.0, 1.0]))
    raw = np.hypot(s11 - 1.0, abs(s22))
    assert raw > np.sqrt(2)
    assert _restricted_delta_from_map(w) == pytest.approx(2 * np.sqrt(2) - raw)


def test_restricted_protocol_end_to_end():
    cache = SpectralCache(ChainSpec(8), 1)
    reg = find_registration_time(cache, RegistrationCriterion.FROBENIUS_W, 2)
    result = optimize_restricted_angles(
        cache, 2, 3, reg.t_star, de_config=DEConfig.standard(2, 120, seed=1)
    )
    assert result.s_t < 1e-10
    assert 0.0 < result.delta <= np.sqrt(2) + 1e-12
    # refinement must not have degraded the polished residual
    assert result.s_t <= result.s_t_before_refine + 1e-15
    # reported angles are wrapped
    assert np.all(np.abs(result.params.to_flat()) <= np.pi)

    sol = solve_ptz_restricted(cache, 2, 3, reg, result.params)
    assert sol.protocol == "restricted"
    assert sol.swap_target == (1, 0)
    # the vacuum block is exactly zero by construction
    assert np.count_nonzero(sol.sender_state.blocks[0]) == 0
    assert sol.round_trip_error < 1e-6
    sol.sender_state.validate()


def test_restricted_solver_refuses_unoptimized_angles():
    cache = SpectralCache(ChainSpec(8), 1)
    reg = find_registration_time(cache, RegistrationCriterion.FROBENIUS_W, 2)
    with pytest.raises(ValueError, match="S_T"):
        solve_ptz_restricted(cache, 2, 3, reg, ReceiverUnitaryParams.zeros(3, [1]))


def test_restricted_angles_warn_below_size_bound():
    cache = SpectralCache(ChainSpec(6), 1)
    with pytest.warns(UserWarning, match="at least 3 sites"):
        optimize_restricted_angles(
            cache, 2, 2, 7.8, de_config=DEConfig.standard(2, 10, seed=0)
        )


def test_offdiagonal_floor_two_regimes():
    cache = SpectralCache(ChainSpec(6), 1)
    reg = find_registration_time(cache, RegistrationCriterion.FROBENIUS_W, 2)
    cfg = DEConfig.standard(2, 60, seed=3)
    floor3, arr3 = offdiagonal_floor(
        cache, 2, 3, reg.t_star, n_restarts=2, de_config=cfg, seed=4
    )
    assert arr3.shape == (2,)
    assert floor3 < 1e-8
    assert floor3 == arr3.min()
    # one site short of the diagonalization bound: the floor is structural
    floor2, arr2 = offdiagonal_floor(
        cache, 2, 2, reg.t_star, n_restarts=2, de_config=cfg, seed=4
    )
    assert floor2 > 1e-3
    assert np.all(arr2 > 1e-3)


def test_arbitrary_parameter_feasible_case():
    cache = SpectralCache(ChainSpec(6), 1)
    res = solve_arbitrary_parameter(
        cache, 2, 3, window=(7.0, 8.4), grid_step=0.2,
        de_config=DEConfig.standard(2, 60, seed=0), seed=1,
    )
    assert res.offdiagonal_norm < 1e-8
    assert res.scan.shape == (8, 4)
    assert 7.0 <= res.t_opt <= 8.4
    assert res.registration.criterion is RegistrationCriterion.LAMBDA_OPT
    assert res.registration.t_star == res.t_opt
    assert res.restoring_defect < 1e-8
    assert res.size_bound.satisfied
    # scale factors are products of map diagonals, all inside the unit disk
    assert np.all(np.abs(res.lam) <= 1.0 + 1e-12)
    assert res.lam_opt == pytest.approx(np.abs(np.diag(res.lam)).min())
    assert res.lam_opt <= res.lam_opt_offdiag + 1e-12
    # t_opt maximizes lam_opt over the feasible scan rows
    feasible = res.scan[res.scan[:, 3] > 0.5]
    assert res.lam_opt == pytest.approx(feasible[:, 1].max(), abs=1e-9)
    # the reported map is consistent: rebuild at (t_opt, params_opt)
    restriction = fixed_time_restriction(cache, res.t_opt, 2, 2, 3)
    sf = scale_factors(restriction.map_for(res.params_opt))
    assert np.max(np.abs(sf.matrix - res.lam)) < 1e-10


def test_arbitrary_parameter_infeasible_case():
    cache = SpectralCache(ChainSpec(6), 1)
    with pytest.warns(UserWarning, match="violated"):
        with pytest.raises(InfeasibleConfigurationError) as info:
            solve_arbitrary_parameter(
                cache, 2, 2, window=(7.0, 7.4), grid_step=0.2,
                de_config=DEConfig.standard(2, 60, seed=0), seed=1,
            )
    exc = info.value
    assert exc.floor > 1e-3
    assert not exc.size_bound.satisfied
    assert exc.scan.shape == (3, 4)
    assert np.all(exc.scan[:, 3] == 0.0)
