import numpy as np
import pytest

from mevg.errors import ConfigError, ScheduleBoundaryError, ShapeError
from mevg.schedule import DiffusionSchedule, build_schedule, forward_diffuse


def test_single_step_cumulative_product():
    sched = build_schedule(1, beta_start=0.1, beta_end=0.1)
    assert sched.alpha_bars.shape == (1,)
    assert sched.alpha_bars[0] == pytest.approx(0.9, abs=1e-15)


def test_three_step_hand_product():
    # betas [0.1, 0.2, 0.3] -> running products 0.9, 0.9*0.8, 0.9*0.8*0.7
    sched = build_schedule(3, beta_start=0.1, beta_end=0.3)
    np.testing.assert_allclose(sched.betas, [0.1, 0.2, 0.3], atol=1e-15)
    np.testing.assert_allclose(sched.alpha_bars, [0.9, 0.72, 0.504], atol=1e-15)


def test_default_schedule_matches_reference_loop():
    sched = build_schedule(1000)
    # independent oracle: plain python running product, no numpy cumprod
    prod = 1.0
    reference = []
    for beta in np.linspace(1e-4, 0.02, 1000):
        prod *= 1.0 - float(beta)
        reference.append(prod)
    assert abs(sched.alpha_bars[999] - reference[999]) / reference[999] < 1e-10
    np.testing.assert_allclose(sched.alpha_bars, reference, rtol=1e-10)


def test_alpha_bar_recurrence_and_monotonicity():
    sched = build_schedule(1000)
    np.testing.assert_allclose(
        sched.alpha_bars[1:], sched.alpha_bars[:-1] * sched.alphas[1:], rtol=1e-15
    )
    assert np.all(np.diff(sched.alpha_bars) < 0.0)
    assert np.all((sched.alpha_bars > 0.0) & (sched.alpha_bars < 1.0))


def test_scaled_linear_spaces_sqrt_beta():
    sched = build_schedule(10, beta_start=1e-4, beta_end=0.02, kind="scaled_linear")
    roots = np.sqrt(sched.betas)
    np.testing.assert_allclose(np.diff(roots), np.diff(roots)[0], rtol=1e-12)
    assert sched.betas[0] == pytest.approx(1e-4, rel=1e-12)
    assert sched.betas[-1] == pytest.approx(0.02, rel=1e-12)


def test_build_rejects_bad_arguments():
    with pytest.raises(ConfigError):
        build_schedule(0)
    with pytest.raises(ConfigError):
        build_schedule(10, beta_start=0.02, beta_end=1e-4)
    with pytest.raises(ConfigError):
        build_schedule(10, beta_start=0.0, beta_end=0.02)
    with pytest.raises(ConfigError):
        build_schedule(10, beta_start=0.5, beta_end=1.0)
    with pytest.raises(ConfigError):
        build_schedule(10, kind="cosine")
    with pytest.raises(ConfigError):
        build_schedule(10, eta=1.5)
    with pytest.raises(ConfigError):
        build_schedule(10, num_inference_steps=0)
    with pytest.raises(ConfigError):
        build_schedule(10, num_inference_steps=11)


def test_constructor_validates_arrays():
    betas = np.array([0.1, 0.2])
    with pytest.raises(ConfigError):
        DiffusionSchedule(2, betas, 1.0 - betas, np.array([0.9, 0.95]))  # not decreasing
    with pytest.raises(ConfigError):
        DiffusionSchedule(2, betas, 1.0 - betas, np.array([0.9]))  # wrong length


def test_subsampled_timesteps_uniform_stride():
    sched = build_schedule(1000, num_inference_steps=50)
    assert sched.num_inference_steps == 50
    np.testing.assert_array_equal(sched.timesteps, np.arange(50) * 20)
    # full schedule defaults to every step
    assert build_schedule(50).num_inference_steps == 50


def test_timestep_navigation_and_boundaries():
    sched = build_schedule(1000, num_inference_steps=50)
    assert sched.prev_timestep(0) is None
    assert sched.alpha_bar_prev(0) == 1.0
    assert sched.prev_timestep(40) == 20
    assert sched.next_timestep(40) == 60
    assert sched.next_timestep(980) is None
    assert sched.alpha_bar_prev(40) == pytest.approx(sched.alpha_bar(20), abs=0)
    with pytest.raises(ScheduleBoundaryError):
        sched.alpha_bar(1000)
    with pytest.raises(ScheduleBoundaryError):
        sched.prev_timestep(37)  # not an inference timestep


def test_sigma_zero_when_deterministic():
    sched = build_schedule(1000, num_inference_steps=50)
    assert all(sched.sigma(int(t)) == 0.0 for t in sched.timesteps)


def test_sigma_matches_hand_formula_and_scales_with_eta():
    sched = build_schedule(1000, num_inference_steps=50, eta=1.0)
    t = 500
    abar_t = sched.alpha_bar(t)
    abar_prev = sched.alpha_bar(480)
    expected = np.sqrt((1 - abar_prev) / (1 - abar_t)) * np.sqrt(1 - abar_t / abar_prev)
    assert sched.sigma(t) == pytest.approx(expected, rel=1e-12)
    half = build_schedule(1000, num_inference_steps=50, eta=0.5)
    assert half.sigma(t) == pytest.approx(0.5 * expected, rel=1e-12)


def test_forward_diffuse_zero_noise_scales_x0():
    sched = build_schedule(3, beta_start=0.1, beta_end=0.3)
    x0 = np.full((2, 1, 2, 2), 3.0, dtype=np.float32)
    out = forward_diffuse(x0, 1, np.zeros_like(x0), sched)
    np.testing.assert_allclose(out, np.sqrt(0.72) * 3.0, rtol=1e-6)


def test_forward_diffuse_pure_noise_value():
    # x0 = 0, eps = 1, abar = 0.72 -> sqrt(0.28) everywhere
    sched = build_schedule(3, beta_start=0.1, beta_end=0.3)
    out = forward_diffuse(np.zeros((1, 1, 2, 2), np.float32), 1, np.ones((1, 1, 2, 2), np.float32), sched)
    np.testing.assert_allclose(out, np.sqrt(0.28), rtol=1e-6)


def test_forward_diffuse_near_clean_limit():
    sched = build_schedule(1, beta_start=1e-8, beta_end=1e-8)
    x0 = np.random.default_rng(0).standard_normal((2, 1, 2, 2)).astype(np.float32)
    out = forward_diffuse(x0, 0, np.ones_like(x0), sched)
    np.testing.assert_allclose(out, x0, atol=2e-4)


def test_forward_diffuse_linearity():
    sched = build_schedule(3, beta_start=0.1, beta_end=0.3)
    rng = np.random.default_rng(7)
    x0 = rng.standard_normal((2, 1, 2, 2)).astype(np.float32)
    eps = rng.standard_normal((2, 1, 2, 2)).astype(np.float32)
    a = 2.5
    lhs = forward_diffuse(a * x0, 2, a * eps, sched)
    rhs = a * forward_diffuse(x0, 2, eps, sched)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-5)


def test_forward_diffuse_preserves_unit_variance():
    sched = build_schedule(1000)
    rng = np.random.default_rng(11)
    n = 200_000
    x0 = rng.standard_normal((1, 1, 1, n)).astype(np.float32)
    eps = rng.standard_normal((1, 1, 1, n)).astype(np.float32)
    for t in (0, 250, 999):
        out = forward_diffuse(x0, t, eps, sched)
        assert abs(out.var() - 1.0) < 0.05


def test_forward_diffuse_rejects_bad_inputs():
    sched = build_schedule(3, beta_start=0.1, beta_end=0.3)
    x0 = np.zeros((2, 1, 2, 2), np.float32)
    with pytest.raises(ShapeError):
        forward_diffuse(x0, 1, np.zeros((1, 1, 2, 2), np.float32), sched)
    with pytest.raises(ScheduleBoundaryError):
        forward_diffuse(x0, 3, np.zeros_like(x0), sched)
