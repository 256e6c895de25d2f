import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rndop.geometry import AnchorSet, exact_dop_many
from rndop.localize import (
    GRAD_TOL,
    RangeModel,
    _lm,
    _residuals,
    linear_multilateration,
    nls_fix,
    nls_fix_many,
    position_error_bound,
    simulate_ranges,
    simulate_ranges_many,
)

from conftest import TETRA

ANCHORS = AnchorSet(10 * TETRA)


def random_scene(rng, n=6):
    anchors = rng.uniform([-30, -20, -10], [30, 20, 10], (n, 3))
    t = rng.normal(size=3)
    target = rng.uniform(20, 200) * t / np.linalg.norm(t)
    return anchors, target


def test_model_validation():
    with pytest.raises(ValueError):
        RangeModel(b=-1.0)
    with pytest.raises(ValueError):
        RangeModel(sigma_w=-0.1)


def test_exact_and_biased_ranges(rng):
    target = np.array([120.0, -40.0, 15.0])
    true = np.linalg.norm(ANCHORS.positions - target, axis=1)
    np.testing.assert_allclose(simulate_ranges(ANCHORS, target, RangeModel(0.0, 0.0), rng), true)
    np.testing.assert_allclose(simulate_ranges(ANCHORS, target, RangeModel(1.0, 0.0), rng), true + 1.0)


def test_ranges_clip_at_zero(rng):
    r = simulate_ranges(ANCHORS, ANCHORS.positions[0], RangeModel(0.0, 50.0), rng)
    assert (r >= 0).all()


def test_range_error_mean():
    rng = np.random.default_rng(99)
    n_targets = 250_000
    targets = np.tile([200.0, 0.0, 0.0], (n_targets, 1))
    r = simulate_ranges_many(ANCHORS, targets, RangeModel(1.0, 6.0), rng)
    err = (r - np.linalg.norm(ANCHORS.positions - targets[0], axis=1)).ravel()
    assert err.size == 10**6
    assert abs(err.mean() - 1.0) <= 3 * 6.0 / np.sqrt(err.size)


def test_ranges_deterministic_given_rng():
    a = simulate_ranges(ANCHORS, [100.0, 0, 0], RangeModel(), np.random.default_rng(5))
    b = simulate_ranges(ANCHORS, [100.0, 0, 0], RangeModel(), np.random.default_rng(5))
    assert np.array_equal(a, b)


def test_fix_from_near_truth():
    target = np.array([150.0, 60.0, -20.0])
    r = np.linalg.norm(ANCHORS.positions - target, axis=1)
    fix = nls_fix(ANCHORS, r, initial=target + 1.0, fallback=False)
    assert fix.converged
    assert np.linalg.norm(fix.position - target) <= 1e-6


def test_linear_multilateration_exact_when_noiseless(rng):
    anchors, target = random_scene(rng)
    r = np.linalg.norm(anchors - target, axis=1)
    np.testing.assert_allclose(linear_multilateration(anchors, r)[0], target, atol=1e-6)


def test_noiseless_recovery_rate():
    rng = np.random.default_rng(2024)
    ok = 0
    for _ in range(200):
        anchors, target = random_scene(rng)
        r = np.linalg.norm(anchors - target, axis=1)
        fix = nls_fix(anchors, r)
        ok += np.linalg.norm(fix.position - target) < 1e-4
    assert ok >= 198


def test_2d_fix_keeps_plane():
    rng = np.random.default_rng(3)
    anchors = rng.uniform([-30, -20, -10], [30, 20, 10], (6, 3))
    target = np.array([80.0, -120.0, 0.0])
    r = np.linalg.norm(anchors - target, axis=1)
    fix = nls_fix(anchors, r, mode="2d")
    assert fix.position[2] == 0.0
    np.testing.assert_allclose(fix.position, target, atol=1e-6)


def test_anchor_count_and_guess_checks():
    with pytest.raises(ValueError):
        nls_fix(ANCHORS.positions[:3], np.ones(3), mode="3d")
    with pytest.raises(ValueError):
        nls_fix(ANCHORS, np.ones(4), initial=[np.nan, 0, 0])
    with pytest.raises(ValueError):
        nls_fix(ANCHORS, np.ones(4), mode="1d")


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1))
def test_converged_means_small_gradient(seed):
    rng = np.random.default_rng(seed)
    anchors, target = random_scene(rng)
    r = simulate_ranges(anchors, target, RangeModel(), rng)
    fix = nls_fix(anchors, r)
    if fix.converged:
        res, jac = _residuals(anchors, r[None], fix.position[None], "3d")
        g = np.linalg.norm(jac[0].T @ res[0])
        assert g <= GRAD_TOL * np.sqrt(len(anchors)) * max(1.0, np.linalg.norm(res[0])) * (1 + 1e-9)


@settings(max_examples=20)
@given(st.integers(0, 2**32 - 1))
def test_residual_never_increases(seed):
    rng = np.random.default_rng(seed)
    anchors, target = random_scene(rng)
    r = simulate_ranges(anchors, target, RangeModel(), rng)[None]
    x0 = np.zeros((1, 3))
    prev = np.inf
    for it in range(0, 25):
        _, res, _, _ = _lm(anchors, r, x0, "3d", it, GRAD_TOL)
        assert res[0] <= prev * (1 + 1e-12)
        prev = res[0]


def test_batch_matches_single(rng):
    anchors, target = random_scene(rng)
    r = simulate_ranges_many(anchors, np.tile(target, (5, 1)), RangeModel(), rng)
    batch = nls_fix_many(anchors, r)
    for i in range(5):
        one = nls_fix(anchors, r[i])
        np.testing.assert_allclose(batch[i].position, one.position, atol=1e-9)


def test_rms_error_respects_bound():
    rng = np.random.default_rng(11)
    model = RangeModel(1.0, 6.0)
    target = np.array([200.0, 0.0, 0.0])
    r = simulate_ranges_many(ANCHORS, np.tile(target, (500, 1)), model, rng)
    fix = nls_fix_many(ANCHORS, r, initial=target)
    rms = np.sqrt(np.mean(np.sum((fix.positions - target) ** 2, axis=1)))
    peb = position_error_bound(ANCHORS, target[None], model)[0]
    assert peb == pytest.approx(np.sqrt(37) * exact_dop_many(ANCHORS, target[None])[0])
    assert rms >= 0.8 * peb


@pytest.mark.xfail(strict=True, reason="median of a 3D error norm sits near 0.77 of the RMS-type bound")
def test_median_error_in_bound_band():
    rng = np.random.default_rng(12)
    model = RangeModel(1.0, 6.0)
    target = np.array([200.0, 0.0, 0.0])
    r = simulate_ranges_many(ANCHORS, np.tile(target, (2000, 1)), model, rng)
    fix = nls_fix_many(ANCHORS, r, initial=target)
    med = np.median(np.linalg.norm(fix.positions - target, axis=1))
    lb = position_error_bound(ANCHORS, target[None], model)[0]
    assert lb <= med <= 3 * lb
