import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochshape.dyadic import DyadicFunction, haar_analysis
from stochshape.noise import (DyadicMultiplier, NoiseDriver, PermutedNoise, Scalar, apply_sigma,
                              c_ns, finite_tail, is_zero, sigma_cells, truncation_error,
                              truncation_error_path)


def test_validation():
    with pytest.raises(ValueError):
        NoiseDriver(0, max_level=-1)
    with pytest.raises(ValueError):
        NoiseDriver(0, steps=0)
    with pytest.raises(ValueError):
        NoiseDriver(0, dt=0.0)
    with pytest.raises(ValueError):
        Scalar(-1.0)
    with pytest.raises(ValueError):
        Scalar(np.inf)
    with pytest.raises(ValueError):
        DyadicMultiplier(DyadicFunction(np.ones((4, 2))))


def test_determinism():
    a = NoiseDriver(42, max_level=5, dim=2, steps=7, dt=0.1)
    b = NoiseDriver(42, max_level=5, dim=2, steps=7, dt=0.1)
    for step in range(7):
        assert np.array_equal(a.sample_increments(step), b.sample_increments(step))
        assert np.array_equal(a.sample_increments(step), a.sample_increments(step))
    assert not np.array_equal(a.sample_increments(0), NoiseDriver(43, 5, 2, 7, 0.1).sample_increments(0))


def test_keying_independent_of_max_level_and_steps():
    a = NoiseDriver(3, max_level=4, dim=1, steps=10, dt=0.01)
    b = NoiseDriver(3, max_level=8, dim=1, steps=25, dt=0.01)
    for step in range(10):
        assert np.array_equal(a.sample_increments(step), b.sample_increments(step)[:16])


def test_trial_zero_matches_single_path():
    single = NoiseDriver(9, max_level=3, dim=2, steps=4, dt=0.5)
    batch = NoiseDriver(9, max_level=3, dim=2, steps=4, dt=0.5, trials=3)
    assert np.array_equal(batch.cell_increment_path(3)[0], single.cell_increment_path(3))
    assert not np.array_equal(batch.cell_increment_path(3)[1], single.cell_increment_path(3))


def test_step_bounds():
    d = NoiseDriver(0, max_level=2, steps=3)
    with pytest.raises(IndexError):
        d.sample_increments(3)
    with pytest.raises(ValueError):
        d.cell_increments(0, 3)


def test_increment_statistics():
    dt = 0.01
    d = NoiseDriver(11, max_level=7, dim=1, steps=800, dt=dt)
    x = d.haar_increment_path(7)[..., 0].ravel()  # 800 * 128 > 1e5 samples
    assert abs(np.mean(x)) <= 4 * np.sqrt(dt / x.size)
    assert abs(np.var(x) / dt - 1) <= 0.05


def test_increment_independence():
    d = NoiseDriver(12, max_level=4, dim=1, steps=10_000, dt=1.0)
    inc = d.haar_level_increments(3)[..., 0]
    for k in range(1, 8):
        assert abs(np.corrcoef(inc[:, 0], inc[:, k])[0, 1]) <= 0.03
    coords = NoiseDriver(12, max_level=2, dim=2, steps=10_000).haar_level_increments(1)
    assert abs(np.corrcoef(coords[:, 0, 0], coords[:, 0, 1])[0, 1]) <= 0.03


def test_level_zero_cell_is_mean_increment():
    d = NoiseDriver(5, max_level=3, dim=2, steps=3, dt=0.2)
    for step in range(3):
        assert np.array_equal(d.cell_increments(step, 0)[0], d.sample_increments(step)[0])


def test_refinement_identity():
    d = NoiseDriver(6, max_level=6, dim=2, steps=20, dt=0.05)
    for n in range(6):
        g_n = d.cell_increment_path(n) * 2.0 ** (-n / 2)
        g_f = d.cell_increment_path(n + 1) * 2.0 ** (-(n + 1) / 2)
        assert np.max(np.abs(g_n - (g_f[:, 0::2] + g_f[:, 1::2]) / np.sqrt(2))) <= 1e-12


def test_cell_increments_match_path():
    d = NoiseDriver(7, max_level=4, dim=2, steps=5, dt=0.3)
    path = d.cell_increment_path(4)
    for step in range(5):
        assert np.allclose(d.cell_increments(step, 4), path[step], rtol=0, atol=1e-14)


def test_cell_scaling_law():
    dt = 0.02
    d = NoiseDriver(8, max_level=6, dim=1, steps=4000, dt=dt)
    for n in (0, 3, 6):
        std = np.std(d.cell_increment_path(n))
        assert std / (2 ** (n / 2) * np.sqrt(dt)) == pytest.approx(1.0, abs=0.05)


def test_pairing_variance():
    # <f, W^n_t> for a unit L2 function f in H^n is a standard Brownian motion
    rng = np.random.default_rng(0)
    f = rng.standard_normal(16)
    f /= np.sqrt(np.mean(f**2))
    t_steps, dt = 10, 0.1
    d = NoiseDriver(13, max_level=4, dim=1, steps=t_steps, dt=dt, trials=2000)
    W = np.cumsum(d.cell_increment_path(4)[..., 0], axis=1)  # (trials, steps, cells)
    pairing = W[:, -1] @ f / 16
    assert np.var(pairing) == pytest.approx(t_steps * dt, rel=0.10)


def test_standard_increments():
    d = NoiseDriver(14, max_level=5, dim=2, steps=3, dt=0.1)
    dyadic = d.standard_increments(16)
    assert np.allclose(dyadic, d.cell_increment_path(4) / 4)
    other = d.standard_increments(40)
    assert other.shape == (3, 40, 2)
    assert np.array_equal(other, d.standard_increments(40))
    too_fine = d.standard_increments(64)
    assert too_fine.shape == (3, 64, 2)


def test_permuted_noise():
    d = NoiseDriver(15, max_level=3, dim=1, steps=2, dt=1.0)
    perm = np.array([2, 0, 1, 3, 7, 6, 5, 4])
    pn = PermutedNoise(d, perm)
    assert np.array_equal(pn.standard_increments(8), d.standard_increments(8)[:, perm])
    with pytest.raises(ValueError):
        pn.standard_increments(4)


class TestSigma:
    def test_scalar(self):
        dW = np.random.default_rng(0).standard_normal((8, 2))
        assert np.all(apply_sigma(Scalar(0.0), dW, 3) == 0)
        assert np.array_equal(apply_sigma(Scalar(1.0), dW, 3), dW)
        assert np.allclose(apply_sigma(Scalar(2.5), dW, 3), 2.5 * dW)
        assert is_zero(Scalar(0.0)) and not is_zero(Scalar(0.1))

    def test_local_multiplier_zeroes_left_half(self):
        right = DyadicMultiplier(DyadicFunction([0.0, 1.0]))
        dW = np.random.default_rng(1).standard_normal((16, 2))
        out = apply_sigma(right, dW, 4)
        assert np.all(out[:8] == 0)
        assert np.array_equal(out[8:], dW[8:])

    def test_multiplier_resampling(self):
        fine = DyadicMultiplier(DyadicFunction([1.0, 3.0, 5.0, 7.0]))
        assert np.array_equal(sigma_cells(fine, 2), [2.0, 6.0])
        assert np.array_equal(sigma_cells(fine, 8), [1, 1, 3, 3, 5, 5, 7, 7])

    def test_shape_check(self):
        with pytest.raises(ValueError):
            apply_sigma(Scalar(1.0), np.zeros((4, 1)), 3)


class TestTruncation:
    def test_constants(self):
        assert c_ns(4, 1.5) == pytest.approx(2 ** (5 * -0.5) / (1 - 2**-0.5), rel=1e-15)
        assert c_ns(4, 1.5) == pytest.approx(0.6036, abs=1e-4)
        assert finite_tail(4, 10, 1.5) == pytest.approx(sum(2 ** (-0.5 * l) for l in range(5, 10)))
        assert finite_tail(4, 10**3, 1.5) == pytest.approx(c_ns(4, 1.5), rel=1e-12)
        with pytest.raises(ValueError):
            c_ns(1, 1.0)

    def test_no_truncation_is_zero(self):
        d = NoiseDriver(0, max_level=6, dim=1, steps=5, dt=0.2)
        assert truncation_error(d, 5, 5, 1.5) == 0.0
        assert truncation_error(d, 8, 3, 1.5) == 0.0
        assert truncation_error(d, 2, 0, 1.5) == 0.0

    def test_matches_direct_norm(self):
        # l <= n convention: W^n keeps Haar levels -1..n
        N, n, s = 6, 2, 1.5
        d = NoiseDriver(1, max_level=N, dim=2, steps=4, dt=0.25)
        W = np.cumsum(d.cell_increment_path(N), axis=0)[2]
        Wn = np.repeat(np.cumsum(d.cell_increment_path(n + 1), axis=0)[2], 2 ** (N - n - 1), axis=0)
        c = haar_analysis(W - Wn)
        lev = np.concatenate([[-1], np.repeat(np.arange(N), 2 ** np.arange(N))])
        direct = np.sqrt(np.sum(2.0 ** (-lev * s)[:, None] * c**2))
        assert truncation_error(d, n, 3, s) == pytest.approx(direct, rel=1e-12)

    def test_path_shape_and_batch(self):
        d = NoiseDriver(2, max_level=5, dim=1, steps=6, dt=0.1, trials=4)
        p = truncation_error_path(d, 2, 1.5)
        assert p.shape == (4, 7)
        assert np.all(p[:, 0] == 0)
        assert np.allclose(truncation_error(d, 2, 6, 1.5), p[:, -1])


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**63), n=st.integers(0, 5), step=st.integers(0, 3))
def test_refinement_coupling_hypothesis(seed, n, step):
    d = NoiseDriver(seed, max_level=6, dim=1, steps=4, dt=0.5)
    coarse = d.cell_increments(step, n)
    fine = d.cell_increments(step, n + 1)
    assert np.allclose(coarse, 0.5 * (fine[0::2] + fine[1::2]), rtol=0, atol=1e-12)
