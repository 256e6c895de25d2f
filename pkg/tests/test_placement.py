import numpy as np
import pytest
from hypothesis import given

from rndop import placement as pl
from rndop.errors import NotCentered, SingularUpdate, ZeroFeasible
from rndop.geometry import AnchorMatrix, AnchorSet, anchor_matrix

from conftest import DEPLOY_LOWER, DEPLOY_UPPER, TETRA, centered_sets, random_centered, random_spd, vec3

DEPLOY_BOX = pl.BoxConstraint(DEPLOY_LOWER, DEPLOY_UPPER)


def recentered_c(pos, r):
    """Oracle: append r, re-center, sum outer products."""
    full = np.vstack([pos, r])
    full = full - full.mean(axis=0)
    return full.T @ full


def test_box_and_separation_validation():
    with pytest.raises(ValueError):
        pl.BoxConstraint([0, 0, 0], [1, 0, 1])
    with pytest.raises(ValueError):
        pl.SeparationConstraint(-1.0)
    assert DEPLOY_BOX.contains(np.array([30.0, 20, 10]))
    assert not DEPLOY_BOX.contains(np.array([30.1, 0, 0]))
    sep = pl.SeparationConstraint(1.0)
    assert sep.min_distance(np.zeros(3), np.array([[3.0, 4, 0], [0, 0, 2]])) == pytest.approx(2.0)


def test_problem_validation_and_cap():
    p = pl.PlacementProblem(n_add=7)
    assert p.cap == 14
    assert pl.PlacementProblem(redundancy_cap=3).cap == 3
    for bad in (dict(mode="4d"), dict(method="x"), dict(eta=1.0), dict(n_add=-1)):
        with pytest.raises(ValueError):
            pl.PlacementProblem(**bad)


def test_update_c_examples():
    c1 = np.diag([1.0, 2, 3])
    e1 = np.array([1.0, 0, 0])
    np.testing.assert_allclose(pl.update_c(c1, e1, 1), c1 + 0.5 * np.outer(e1, e1))
    np.testing.assert_allclose(pl.update_c(c1, np.zeros(3), 5), c1)


def test_update_c_recentering_oracle(rng):
    for _ in range(200):
        n = rng.integers(4, 12)
        pos = random_centered(rng, n)
        r = rng.uniform(-30, 30, 3)
        np.testing.assert_allclose(pl.update_c(pos.T @ pos, r, n), recentered_c(pos, r), atol=1e-10 * max(1, np.abs(pos).max() ** 2))


def test_update_c_preserves_centroid(rng):
    pos = random_centered(rng, 6)
    r = rng.uniform(-30, 30, 3)
    full = np.vstack([pos, r])
    assert np.linalg.norm((full - full.mean(axis=0)).sum(axis=0)) <= 1e-9


def test_update_d_examples():
    d = np.linalg.inv(np.diag([1.0, 2, 3]))
    np.testing.assert_allclose(pl.update_d(d, np.zeros(3), 4), d)
    # D = I, r = e3, k -> infinity: coefficient -> 1
    np.testing.assert_allclose(pl.update_d(np.eye(3), np.array([0, 0, 1.0]), 10**12), np.diag([1, 1, 0.5]), atol=1e-11)


def test_update_consistency_random(rng):
    """update_d = inv(update_c) and update_e = its top-left block, 1e3 draws."""
    for _ in range(1000):
        c = random_spd(rng, scale=rng.uniform(1, 300))
        d = np.linalg.inv(c)
        k = int(rng.integers(3, 40))
        r = rng.uniform(-30, 30, 3)
        d_new = pl.update_d(d, r, k)
        direct = np.linalg.inv(pl.update_c(c, r, k))
        assert np.max(np.abs(d_new - direct)) <= 1e-10
        e_new = pl.update_e(d[:2, :2], d, r, k)
        assert np.max(np.abs(e_new - direct[:2, :2])) <= 1e-10


def test_update_e_literal_equals_projected_when_decoupled(rng):
    d = np.linalg.inv(np.diag([2.0, 3.0, 5.0]))
    d[0, 1] = d[1, 0] = 0.05
    r = rng.uniform(-10, 10, 3)
    a = pl.update_e(d[:2, :2], d, r, 6)
    b = pl.update_e(d[:2, :2], d, r, 6, literal=True)
    np.testing.assert_allclose(a, b, atol=1e-12)
    np.testing.assert_allclose(pl.update_e(d[:2, :2], d, np.zeros(3), 6), d[:2, :2])


def test_update_singular():
    with pytest.raises(SingularUpdate):
        pl.update_d(-np.eye(3) / 0.5, np.array([1.0, 0, 0]), 1)


def test_cost_rnd_3d_tetra():
    assert pl.cost_rnd_3d(4 * np.eye(3), np.zeros(3), 4) == pytest.approx(0.5, abs=1e-14)


def test_cost_rnd_3d_matches_eig_oracle(rng):
    c = random_spd(rng, scale=50)
    r = rng.uniform(-30, 30, (200, 3))
    got = pl.cost_rnd_3d(c, r, 5)
    for ri, gi in zip(r, got):
        lam = np.linalg.eigvalsh(np.linalg.inv(pl.update_c(c, ri, 5)))
        assert gi == pytest.approx(lam[1] + lam[2], rel=1e-10)


@given(centered_sets(), vec3)
def test_cost_rnd_3d_respects_trace_bound(pos, r):
    c = pos.T @ pos
    if np.linalg.eigvalsh(c)[0] < 1e-6:
        return
    k = pos.shape[0]
    m = pl.update_c(c, r, k)
    assert pl.cost_rnd_3d(c, r, k) >= 6.0 / np.trace(m) - 1e-12


def test_cost_tr_3d_examples():
    assert pl.cost_tr_3d(np.eye(3), np.zeros(3), 4) == 0.0
    rho, k = 3.0, 4
    for axis in np.eye(3):
        assert pl.cost_tr_3d(np.eye(3), rho * axis, k) == pytest.approx(rho**2 / (1 + k / (k + 1) * rho**2))


def test_cost_tr_ordering_matches_direct_trace(rng):
    c = random_spd(rng, scale=40)
    d = np.linalg.inv(c)
    k = 6
    r = rng.uniform(-30, 30, (300, 3))
    score = pl.cost_tr_3d(d, r, k)
    direct = np.array([np.trace(pl.update_d(d, ri, k)) for ri in r])
    # score omits the positive factor k/(k+1), which does not move the argmax
    np.testing.assert_allclose(np.trace(d) - k / (k + 1) * score, direct, rtol=1e-12)
    assert np.array_equal(np.argsort(-score, kind="stable"), np.argsort(direct, kind="stable"))


def test_cost_2d_examples_and_oracles(rng):
    c = random_spd(rng, scale=40)
    d = np.linalg.inv(c)
    e = d[:2, :2]
    assert pl.cost_rnd_2d(e, d, np.zeros(3), 5) == pytest.approx(np.linalg.eigvalsh(e)[1])
    assert pl.cost_tr_2d(e, d, np.zeros(3), 5) == 0.0
    r = rng.uniform(-30, 30, (100, 3))
    rnd = pl.cost_rnd_2d(e, d, r, 5)
    tr = pl.cost_tr_2d(e, d, r, 5)
    for ri, a, b in zip(r, rnd, tr):
        e_new = pl.update_e(e, d, ri, 5)
        lam = np.linalg.eigvalsh(e_new)
        assert a == pytest.approx(lam[1], rel=1e-10)
        # 2x2: tr - lam_min = lam_max
        assert np.trace(e_new) - lam[0] == pytest.approx(a, rel=1e-10)
        assert np.trace(e) - 5 / 6 * b == pytest.approx(np.trace(e_new), rel=1e-10)


def test_cost_tr_2d_decoupled_closed_form():
    d = np.diag([0.5, 0.25, 0.2])
    e = d[:2, :2]
    r = np.array([2.0, 1.0, 3.0])
    k = 4
    num = np.sum((e @ r[:2]) ** 2)
    expected = num / (1 + k / (k + 1) * (r @ d @ r))
    assert pl.cost_tr_2d(e, d, r, k) == pytest.approx(expected)


def test_eig_candidate_3d_examples():
    r = pl.eig_candidate_3d(np.diag([1.0, 4, 9]), DEPLOY_BOX)
    np.testing.assert_allclose(np.abs(r), [30, 0, 0], atol=1e-12)
    v = np.ones(3) / np.sqrt(3)
    assert pl.max_step_along(v, DEPLOY_LOWER, DEPLOY_UPPER) == pytest.approx(10 * np.sqrt(3))


def test_eig_candidate_3d_feasible_and_collinear(rng):
    for _ in range(50):
        c = random_spd(rng)
        r = pl.eig_candidate_3d(c, DEPLOY_BOX)
        v = np.linalg.eigh(c)[1][:, 0]
        assert DEPLOY_BOX.contains(r, tol=1e-12)
        assert np.linalg.norm(np.cross(r / np.linalg.norm(r), v)) < 1e-10


def test_eig_candidate_zero_feasible():
    box = pl.BoxConstraint([0.0, -1, -1], [1.0, 1, 1])
    # weakest axis (1, 1, 0)/sqrt(2) leaves the box at the origin in both directions
    q = np.array([[1.0, 1, 0], [1, -1, 0], [0, 0, np.sqrt(2)]]).T / np.sqrt(2)
    c = q @ np.diag([1.0, 4, 9]) @ q.T
    with pytest.raises(ZeroFeasible):
        pl.eig_candidate_3d(c, pl.BoxConstraint([0.0, -1, -1], [1.0, 0, 1]))
    assert pl.eig_candidate_3d(np.diag([1.0, 4, 9]), box)[0] == pytest.approx(1.0)


def test_eig_candidate_2d_examples(rng):
    d = np.diag([0.5, 0.2, 0.3])
    r = pl.eig_candidate_2d(d[:2, :2], d, DEPLOY_BOX)
    assert r[2] == 0.0
    np.testing.assert_allclose(np.abs(r[:2]), [30, 0])
    # p = 1, q = (1, 0), xy = (2, 0): vertex at z = -2
    dd = np.array([[1.0, 0, 1], [0, 1, 0], [1, 0, 1]])
    q, p = dd[:2, 2], dd[2, 2]
    assert float(np.clip(-(q @ np.array([2.0, 0])) / p, -10, 10)) == -2.0


def test_eig_candidate_2d_z_grid_oracle(rng):
    for _ in range(20):
        c = random_spd(rng, scale=30)
        d = np.linalg.inv(c)
        r = pl.eig_candidate_2d(d[:2, :2], d, DEPLOY_BOX)
        xy = r[:2]
        z = np.arange(-10, 10 + 5e-4, 1e-3)
        obj = d[2, 2] * z**2 + 2 * z * (d[:2, 2] @ xy)
        assert abs(z[np.argmin(obj)] - r[2]) <= 1e-3 + 1e-12


def test_iteration_bounds_examples():
    b = pl.iteration_bounds(AnchorMatrix.from_c(4 * np.eye(3), 4))
    assert (b.lower, b.upper) == pytest.approx((0.5, 0.5))
    b = pl.iteration_bounds(AnchorMatrix.from_c(np.diag([1.0, 2, 4]), 4))
    assert (b.lower, b.upper) == pytest.approx((0.75, 1.5))


def test_bounds_contain_any_addition(rng):
    for _ in range(200):
        pos = random_centered(rng, int(rng.integers(4, 15)))
        am = anchor_matrix(AnchorSet(pos))
        r = rng.uniform(-40, 40, 3)
        c_new = pl.update_c(am.C, r, am.k)
        am_new = AnchorMatrix.from_c(c_new, am.k + 1)
        for mode in ("3d", "2d"):
            b = pl.iteration_bounds(am, mode)
            got = pl.achieved_sq_rndop(am_new, mode)
            assert b.lower - 1e-9 <= got <= b.upper + 1e-9


def test_minimax_lower_bounds():
    cfg, uni = pl.minimax_lower_bounds(AnchorSet(TETRA))
    assert cfg == pytest.approx(np.sqrt(0.5), abs=1e-12)
    assert uni == pytest.approx(np.sqrt(0.5), abs=1e-12)
    cfg2, uni2 = pl.minimax_lower_bounds(AnchorSet(2 * TETRA))
    assert (cfg2, uni2) == pytest.approx((cfg / 2, uni / 2))
    with pytest.raises(NotCentered):
        pl.minimax_lower_bounds(AnchorSet(TETRA + 1))


@given(centered_sets())
def test_universal_bound_below_config_bound(pos):
    if np.abs(pos).max() < 1e-3:
        return
    cfg, uni = pl.minimax_lower_bounds(AnchorSet(pos))
    assert uni <= cfg * (1 + 1e-12)


def test_subproblem_cost_signs(rng):
    am = anchor_matrix(AnchorSet(random_centered(rng, 6)))
    r = rng.uniform(-30, 30, (5, 3))
    np.testing.assert_allclose(pl.subproblem_cost("tr", "3d", am)(r), -pl.cost_tr_3d(am.D, r, am.k))
    np.testing.assert_allclose(pl.subproblem_cost("rnd", "2d", am)(r), pl.cost_rnd_2d(am.E, am.D, r, am.k))
    with pytest.raises(ValueError):
        pl.subproblem_cost("eig", "3d", am)
