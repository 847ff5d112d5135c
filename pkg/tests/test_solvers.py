"""Voxel-space TF solvers against dense linear-algebra oracles.

Reference solutions come from np.linalg.lstsq on the explicitly built
system matrix, np.linalg.solve on the explicitly regularized dense
tridiagonal, np.linalg.eigvalsh for condition numbers, and the
brute-force active-set oracle for box-constrained quadratics.
"""

import math

import numpy as np
import pytest

from tfopt.assembly import GramSystem, assemble_gram
from tfopt.solvers import (
    AdamStep,
    ConstantStep,
    NonFinite,
    SingularSystem,
    SolverConfig,
    _regularized_bands,
    clamp_tf,
    condition_estimate,
    solve_admm_qp,
    solve_auto,
    solve_cgls,
    solve_grad_desc,
    solve_normal_direct,
    optimize_voxel,
)
from tfopt.fields import SyntheticSpec, make_synthetic
from tfopt.volume import TransferFunction

from helpers import (
    box_qp_bruteforce,
    dense_lstsq_clamped,
    random_volume,
    volume_from_flat,
)


def _random_tf(rng, n_t, lo=0.05, hi=0.95):
    return TransferFunction(entries=rng.uniform(lo, hi, size=(n_t, 4)))


def _ramp_reversal_fixture(rng, dims=(48, 2, 2), n_t=8):
    ramp = make_synthetic(SyntheticSpec(kind="ramp_x", dims=dims))
    inverted = make_synthetic(SyntheticSpec(kind="ramp_x_inverted", dims=dims))
    tf_r = _random_tf(rng, n_t)
    return inverted, ramp, tf_r


def _empty_middle_bin_fixture(rng):
    """Values {0,1,3,4} with n_T=5: bin 2 receives no density."""
    vals = np.repeat([0.0, 1.0, 3.0, 4.0], 16)
    rng.shuffle(vals)
    vol = volume_from_flat(vals, dims=(4, 4, 4))
    tf_r = _random_tf(rng, 5, lo=0.1, hi=0.9)
    return vol, tf_r


# solve_normal_direct


def test_normal_identity_like_case(rng):
    # every voxel at a bin center: G is diagonal, solution must reproduce
    # tf_r at every referenced entry
    vals = np.repeat([0.0, 0.25, 0.5, 0.75, 1.0], 8)
    rng.shuffle(vals)
    vol = volume_from_flat(vals, dims=(5, 4, 2))
    tf_r = _random_tf(rng, 5)
    rep = solve_normal_direct(assemble_gram(vol, vol, tf_r, 5))
    np.testing.assert_allclose(rep.solution.entries, tf_r.entries, atol=1e-10)
    assert rep.iterations == 1
    assert rep.converged


def test_normal_ramp_reversal(rng):
    vol_o, vol_r, tf_r = _ramp_reversal_fixture(rng)
    rep = solve_normal_direct(assemble_gram(vol_o, vol_r, tf_r, 8))
    oracle = dense_lstsq_clamped(vol_o, vol_r, tf_r, 8)
    np.testing.assert_allclose(rep.solution.linearized(), oracle, atol=1e-8)
    reversed_entries = tf_r.entries[::-1]
    np.testing.assert_allclose(
        rep.solution.entries[1:-1], reversed_entries[1:-1], atol=0.02
    )


def test_normal_empty_middle_bin(rng):
    vol, tf_r = _empty_middle_bin_fixture(rng)
    gs = assemble_gram(vol, vol, tf_r, 5)
    assert gs.diag[2] == 0.0
    rep = solve_normal_direct(gs)
    sol = rep.solution.entries
    # the unreferenced entry interpolates its neighbors
    np.testing.assert_allclose(sol[2], 0.5 * (sol[1] + sol[3]), atol=1e-8)
    # oracle: the small regularized tridiagonal system solved densely
    d, e = _regularized_bands(gs)
    g_dense = np.diag(d)
    idx = np.arange(4)
    g_dense[idx, idx + 1] = e
    g_dense[idx + 1, idx] = e
    oracle = np.clip(np.linalg.solve(g_dense, gs.rhs.T), 0.0, 1.0)
    np.testing.assert_allclose(sol, oracle, atol=1e-8)
    # referenced bins stay near the unregularized least-squares solution
    # (the smoothing term perturbs them by O(fill/diag))
    unreg = dense_lstsq_clamped(vol, vol, tf_r, 5).reshape(5, 4)
    np.testing.assert_allclose(sol[[0, 1, 3, 4]], unreg[[0, 1, 3, 4]], atol=1e-5)


def test_normal_all_empty_raises_singular():
    gs = GramSystem(
        diag=np.zeros(3), offdiag=np.zeros(2), rhs=np.zeros((4, 3)), voxel_count_used=0
    )
    with pytest.raises(SingularSystem):
        solve_normal_direct(gs)


def test_normal_nonfinite_rhs_raises():
    gs = GramSystem(
        diag=np.ones(3),
        offdiag=np.zeros(2),
        rhs=np.full((4, 3), np.nan),
        voxel_count_used=3,
    )
    with pytest.raises(NonFinite):
        solve_normal_direct(gs)


# solve_cgls


def test_cgls_agrees_with_direct(rng):
    vol_o = random_volume(rng)
    vol_r = random_volume(rng)
    tf_r = TransferFunction.blue_red(8)
    direct = solve_normal_direct(assemble_gram(vol_o, vol_r, tf_r, 8))
    iterative = solve_cgls(vol_o, vol_r, tf_r, 8)
    dev = np.abs(iterative.solution.linearized() - direct.solution.linearized())
    assert dev.max() <= 1e-4


def test_cgls_recovers_known_solution(rng):
    # vol_r == vol_o with tf_r = from_linear(x*) makes b = A x* exactly
    vol = random_volume(rng)
    x_star = rng.uniform(0.05, 0.95, size=32)
    tf_star = TransferFunction.from_linear(x_star, 8)
    rep = solve_cgls(vol, vol, tf_star, 8)
    np.testing.assert_allclose(rep.solution.linearized(), x_star, atol=1e-6)
    assert rep.converged


def test_cgls_start_at_solution(rng):
    vol = random_volume(rng)
    x_star = rng.uniform(0.05, 0.95, size=32)
    tf_star = TransferFunction.from_linear(x_star, 8)
    rep = solve_cgls(vol, vol, tf_star, 8, x0=x_star)
    assert rep.iterations <= 1
    assert rep.converged


def test_cgls_history_non_increasing(rng):
    rep = solve_cgls(
        random_volume(rng), random_volume(rng), TransferFunction.blue_red(8), 8
    )
    hist = rep.residual_history
    assert len(hist) >= 2
    assert all(b <= a + 1e-12 for a, b in zip(hist, hist[1:]))


def test_cgls_rejects_bad_x0(rng):
    vol = random_volume(rng)
    with pytest.raises(ValueError):
        solve_cgls(vol, vol, TransferFunction.blue_red(8), 8, x0=np.zeros(7))


# solve_grad_desc


def test_grad_desc_l2_ramp_reversal(rng):
    vol_o, vol_r, tf_r = _ramp_reversal_fixture(rng)
    direct = solve_normal_direct(assemble_gram(vol_o, vol_r, tf_r, 8))
    cfg = SolverConfig(kind="grad_desc", max_iters=5000, step=AdamStep(lr=0.05))
    rep = solve_grad_desc(vol_o, vol_r, tf_r, 8, cfg)
    assert rep.iterations <= 5000
    dev = np.abs(rep.solution.entries - direct.solution.entries)
    assert dev.max() <= 0.02


def test_grad_desc_stationarity_at_direct_solution(rng):
    vol_o = random_volume(rng)
    vol_r = random_volume(rng)
    tf_r = _random_tf(rng, 8, lo=0.25, hi=0.75)
    gs = assemble_gram(vol_o, vol_r, tf_r, 8)
    rep = solve_normal_direct(gs)
    assert not rep.clamped  # fixture keeps the minimizer interior
    grad = 2.0 * (gs.matvec(rep.solution.entries) - gs.rhs.T)
    assert np.abs(grad).max() <= 1e-6 * np.abs(gs.rhs).max()


def test_grad_desc_l1_resists_single_outlier(rng):
    vals = np.repeat([0.0, 1.0, 2.0, 3.0], 16)
    rng.shuffle(vals)
    vol_o = volume_from_flat(vals, dims=(4, 4, 4))
    ref = vals.copy()
    ref[np.flatnonzero(vals == 3.0)[0]] = 0.0  # one top-bin voxel lies
    vol_r = volume_from_flat(ref, dims=(4, 4, 4))
    tf_r = TransferFunction.gray_ramp(4)
    clean_oracle = dense_lstsq_clamped(vol_o, vol_o, tf_r, 4)
    sols = {}
    for norm in ("l1", "l2"):
        cfg = SolverConfig(
            kind="grad_desc", norm=norm, max_iters=2000, step=AdamStep(lr=0.02)
        )
        sols[norm] = solve_grad_desc(vol_o, vol_r, tf_r, 4, cfg).solution.linearized()
    d_l1 = np.linalg.norm(sols["l1"] - clean_oracle)
    d_l2 = np.linalg.norm(sols["l2"] - clean_oracle)
    assert d_l1 < d_l2


def test_grad_desc_constant_step_auto_rate(rng):
    vol_o = random_volume(rng, dims=(6, 6, 6))
    vol_r = random_volume(rng, dims=(6, 6, 6))
    tf_r = TransferFunction.blue_red(6)
    direct = solve_normal_direct(assemble_gram(vol_o, vol_r, tf_r, 6))
    cfg = SolverConfig(kind="grad_desc", max_iters=4000, step=ConstantStep())
    rep = solve_grad_desc(vol_o, vol_r, tf_r, 6, cfg)
    dev = np.abs(rep.solution.linearized() - direct.solution.linearized())
    assert dev.max() <= 1e-3


# solve_admm_qp


def test_admm_interior_matches_direct(rng):
    vol_o = random_volume(rng)
    vol_r = random_volume(rng)
    tf_r = _random_tf(rng, 8, lo=0.25, hi=0.75)
    gs = assemble_gram(vol_o, vol_r, tf_r, 8)
    direct = solve_normal_direct(gs)
    assert not direct.clamped
    admm = solve_admm_qp(gs)
    dev = np.abs(admm.solution.linearized() - direct.solution.linearized())
    assert dev.max() <= 1e-6
    assert not admm.clamped


def test_admm_saturates_exactly_with_kkt():
    # unconstrained minimizer (2.27, -1.03); the box optimum is (1, 0)
    gs = GramSystem(
        diag=np.array([2.0, 2.0]),
        offdiag=np.array([1.0]),
        rhs=np.vstack([[3.5, 0.2], np.zeros((3, 2))]),
        voxel_count_used=4,
    )
    rep = solve_admm_qp(gs, SolverConfig(kind="admm_qp", max_iters=500))
    sol = rep.solution.entries  # (2, 4)
    assert sol[0, 0] == 1.0
    assert sol[1, 0] == 0.0
    assert rep.clamped
    g_dense = gs.dense()
    oracle = box_qp_bruteforce(g_dense, np.array([3.5, 0.2]))
    np.testing.assert_allclose(sol[:, 0], oracle, atol=1e-8)
    # KKT: gradient pushes outward at the active upper bound
    grad = 2.0 * (g_dense @ sol[:, 0] - np.array([3.5, 0.2]))
    assert grad[0] <= 1e-9


def test_admm_random_saturated_matches_bruteforce(rng):
    vol_o = random_volume(rng, dims=(5, 5, 5))
    vol_r = random_volume(rng, dims=(5, 5, 5))
    base = assemble_gram(vol_o, vol_r, TransferFunction.blue_red(4), 4)
    gs = GramSystem(
        diag=base.diag,
        offdiag=base.offdiag,
        rhs=3.0 * base.rhs,  # push parts of the minimizer out of the box
        voxel_count_used=base.voxel_count_used,
    )
    rep = solve_admm_qp(gs, SolverConfig(kind="admm_qp", max_iters=2000))
    g_dense = gs.dense()
    assert rep.clamped
    for ch in range(4):
        oracle = box_qp_bruteforce(g_dense, gs.rhs[ch])
        np.testing.assert_allclose(rep.solution.entries[:, ch], oracle, atol=1e-6)


def test_admm_separable_quadratic():
    gs = GramSystem(
        diag=np.ones(6),
        offdiag=np.zeros(5),
        rhs=np.full((4, 6), 0.5),
        voxel_count_used=6,
    )
    rep = solve_admm_qp(gs)
    np.testing.assert_allclose(rep.solution.entries, 0.5, atol=1e-8)
    assert rep.converged


def test_admm_reports_unconverged_at_budget():
    gs = GramSystem(
        diag=np.array([2.0, 2.0]),
        offdiag=np.array([1.0]),
        rhs=np.vstack([[3.5, 0.2], np.zeros((3, 2))]),
        voxel_count_used=4,
    )
    rep = solve_admm_qp(gs, SolverConfig(kind="admm_qp", max_iters=2))
    assert rep.iterations == 2
    assert not rep.converged


# clamp_tf


def test_clamp_values():
    x = np.array([1.3, -0.2, 0.7])
    clipped, changed = clamp_tf(x)
    np.testing.assert_array_equal(clipped, [1.0, 0.0, 0.7])
    assert changed


def test_clamp_identity_inside_box():
    x = np.array([0.0, 0.25, 1.0])
    clipped, changed = clamp_tf(x)
    np.testing.assert_array_equal(clipped, x)
    assert not changed


# condition_estimate


def test_condition_identity():
    gs = GramSystem(
        diag=np.ones(5), offdiag=np.zeros(4), rhs=np.zeros((4, 5)), voxel_count_used=5
    )
    assert condition_estimate(gs) == pytest.approx(1.0, abs=1e-12)


def test_condition_diagonal_counts():
    gs = GramSystem(
        diag=np.array([1.0, 100.0]),
        offdiag=np.zeros(1),
        rhs=np.zeros((4, 2)),
        voxel_count_used=101,
    )
    assert condition_estimate(gs) == pytest.approx(100.0, abs=1e-9)


def test_condition_matches_dense_eigensolver(rng):
    gs = assemble_gram(
        random_volume(rng), random_volume(rng), TransferFunction.blue_red(8), 8
    )
    assert np.all(gs.diag > 0)  # dense oracle must see the same matrix
    lam = np.linalg.eigvalsh(gs.dense())
    expect = lam[-1] / lam[0]
    assert condition_estimate(gs) == pytest.approx(expect, rel=1e-6)


def test_condition_singular_is_inf():
    gs = GramSystem(
        diag=np.zeros(4), offdiag=np.zeros(3), rhs=np.zeros((4, 4)), voxel_count_used=0
    )
    assert math.isinf(condition_estimate(gs))


# auto dispatch


def test_auto_prefers_direct_on_well_conditioned(rng):
    rep = solve_auto(
        random_volume(rng), random_volume(rng), TransferFunction.blue_red(8), 8
    )
    assert rep.solver == "normal_direct"


def test_auto_falls_back_to_cgls_when_ill_conditioned():
    # a single voxel with nearly all weight on the top edge of bin 1
    # leaves diag[1] ~ 1e-10: condition blows past the 1e8 switch point
    vals = [0.0] * 10 + [1.0] * 10 + [0.999995]
    vol = volume_from_flat(vals, dims=(21, 1, 1))
    tf_r = TransferFunction.gray_ramp(3)
    cond = condition_estimate(assemble_gram(vol, vol, tf_r, 3))
    assert cond > 1e8
    rep = solve_auto(vol, vol, tf_r, 3)
    assert rep.solver == "cgls"
    assert rep.condition == pytest.approx(cond)


def test_optimize_voxel_dispatches_all_kinds(rng):
    vol_o = random_volume(rng, dims=(5, 5, 5))
    vol_r = random_volume(rng, dims=(5, 5, 5))
    tf_r = TransferFunction.blue_red(6)
    for kind, name in [
        ("normal_direct", "normal_direct"),
        ("cgls", "cgls"),
        ("grad_desc", "grad_desc"),
        ("admm_qp", "admm_qp"),
        ("auto", "normal_direct"),
    ]:
        cfg = SolverConfig(kind=kind, max_iters=500)
        rep = optimize_voxel(vol_o, vol_r, tf_r, 6, cfg)
        assert rep.solver == name


# cross-solver invariants


def test_all_solvers_agree_when_well_conditioned(rng):
    vol_o = random_volume(rng)
    vol_r = random_volume(rng)
    tf_r = TransferFunction.blue_red(8)
    gs = assemble_gram(vol_o, vol_r, tf_r, 8)
    assert condition_estimate(gs) <= 1e6
    reports = [
        solve_normal_direct(gs),
        solve_cgls(vol_o, vol_r, tf_r, 8),
        solve_grad_desc(
            vol_o,
            vol_r,
            tf_r,
            8,
            SolverConfig(kind="grad_desc", max_iters=4000, step=ConstantStep()),
        ),
        solve_admm_qp(gs),
    ]
    base = reports[0].solution.linearized()
    for rep in reports:
        x = rep.solution.linearized()
        assert x.min() >= 0.0 and x.max() <= 1.0
        assert np.abs(x - base).max() <= 1e-3


def test_objective_decreases_from_initialization(rng):
    vol_o = random_volume(rng)
    vol_r = random_volume(rng)
    tf_r = TransferFunction.blue_red(8)
    gs = assemble_gram(vol_o, vol_r, tf_r, 8)
    inits = {
        "normal_direct": np.zeros(32),
        "cgls": np.zeros(32),
        "grad_desc": np.full(32, 0.5),
        "admm_qp": np.zeros(32),
    }
    for kind, x0 in inits.items():
        rep = optimize_voxel(
            vol_o, vol_r, tf_r, 8, SolverConfig(kind=kind, max_iters=2000)
        )
        assert rep.objective <= gs.objective(x0) + 1e-9
        assert rep.objective >= -1e-12


def test_regularization_locality(rng):
    # bin 5 empty; fractional hits only between bins 0..4 keep couplings
    # weak, so bins at distance >= 2 from the empty bin must agree with
    # the unregularized dense solution to 1e-8
    vals = []
    for k in (0, 1, 2, 3, 4, 6, 7):
        vals += [k / 7] * 40
    for k in (0, 1, 2, 3):
        vals.append((k + 0.5) / 7)
    vals = np.array(vals)
    rng.shuffle(vals)
    vol = volume_from_flat(vals, dims=(len(vals), 1, 1))
    tf_r = _random_tf(rng, 8, lo=0.1, hi=0.9)
    gs = assemble_gram(vol, vol, tf_r, 8)
    assert gs.diag[5] == 0.0
    rep = solve_normal_direct(gs)
    unreg = dense_lstsq_clamped(vol, vol, tf_r, 8).reshape(8, 4)
    far = [0, 1, 2, 3, 7]
    np.testing.assert_allclose(
        rep.solution.entries[far], unreg[far], atol=1e-8
    )


# report plumbing


def test_report_serialization(rng):
    rep = solve_normal_direct(
        assemble_gram(
            random_volume(rng), random_volume(rng), TransferFunction.blue_red(8), 8
        )
    )
    doc = rep.to_dict()
    assert doc["solver"] == "normal_direct"
    assert doc["n_t"] == 8
    assert len(doc["entries"]) == 8
    assert doc["objective"] >= 0.0
    assert isinstance(doc["residual_history"], list)
    rep.condition = math.inf
    assert rep.to_dict()["condition"] is None


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(kind="magic")
    with pytest.raises(ValueError):
        SolverConfig(max_iters=0)
    with pytest.raises(ValueError):
        SolverConfig(rel_tolerance=0.0)
    with pytest.raises(ValueError):
        SolverConfig(norm="linf")
    with pytest.raises(ValueError):
        SolverConfig(admm_rho=-1.0)
    with pytest.raises(ValueError):
        AdamStep(lr=0.0)
    with pytest.raises(ValueError):
        ConstantStep(rate=-0.5)
