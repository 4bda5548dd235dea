import logging

import numpy as np
import pytest

from wpdpp import mask as masklib
from wpdpp.mask import ComplexMask, MaskRole, apply_mask, oracle_cirm, oracle_sigma, sigma_from_mask
from wpdpp.stft import analyze

from conftest import crandn


def test_single_bin_division():
    m = oracle_cirm(np.array([[1 + 2j]]), np.array([[3 + 4j]]), eps=0.0)
    assert m.values[0, 0] == pytest.approx(0.44 + 0.08j, abs=1e-15)


def test_identity_and_rotation(rng):
    y = crandn(rng, 5, 7)
    p = np.abs(y) ** 2
    eps = masklib.CIRM_FLOOR * p.mean()
    np.testing.assert_allclose(oracle_cirm(y, y).values, p / (p + eps), rtol=1e-14)
    np.testing.assert_allclose(oracle_cirm(y, y, eps=0.0).values, 1.0, atol=1e-14)
    np.testing.assert_allclose(oracle_cirm(y, 1j * y, eps=0.0).values, -1j, atol=1e-14)


def test_default_floor_is_relative_to_mixture_power(rng):
    y = crandn(rng, 4, 6)
    s = crandn(rng, 4, 6)
    eps = masklib.CIRM_FLOOR * np.mean(np.abs(y) ** 2)
    expected = s * np.conj(y) / (np.abs(y) ** 2 + eps)
    np.testing.assert_allclose(oracle_cirm(s, y).values, expected, rtol=1e-14)


def test_silent_bins_give_zero_mask():
    m = oracle_cirm(np.zeros((2, 3)), np.zeros((2, 3)))
    assert not np.any(m.values)


def test_shape_mismatch():
    with pytest.raises(ValueError):
        oracle_cirm(np.ones((2, 3)), np.ones((3, 2)))
    with pytest.raises(ValueError):
        apply_mask(ComplexMask(np.ones((2, 3))), np.ones((2, 2)))
    with pytest.raises(ValueError):
        ComplexMask(np.array([[np.inf]]))


def test_apply_mask_examples(rng):
    y = crandn(rng, 3, 4, 5)
    np.testing.assert_array_equal(apply_mask(ComplexMask(np.ones((4, 5))), y), y)
    out = apply_mask(ComplexMask(np.full((1, 1), 1j)), np.array([[2 + 0j]]))
    assert out[0, 0] == 2j


def test_inverse_on_reverberant_mixture(small_bundle):
    y = analyze(small_bundle.mixture).bins[0]
    s = analyze(small_bundle.reverberant_clean).bins[0]
    m = oracle_cirm(s, y)
    rec = apply_mask(m, y)
    eps = masklib.CIRM_FLOOR * np.mean(np.abs(y) ** 2)
    p = np.abs(y) ** 2
    live = (p > 0) & (np.abs(s) > 0)
    rel = np.abs(rec[live] - s[live]) / np.abs(s[live])
    # the floor shrinks each bin by exactly |Y|^2 / (|Y|^2 + eps)
    np.testing.assert_allclose(rel, eps / (p[live] + eps), rtol=1e-6, atol=1e-15)
    assert np.all(rel[p[live] >= 1e6 * eps] < 1e-6)
    assert np.mean(p[live] >= 1e6 * eps) > 0.1
    # uncompressed: interference cancellation needs |mask| > 1 somewhere
    assert np.max(np.abs(m.values)) > 1.0


def test_speech_and_noise_masks_sum_to_one(rng):
    s = crandn(rng, 6, 9)
    n = crandn(rng, 6, 9)
    total = oracle_cirm(s, s + n, eps=0.0).values + oracle_cirm(n, s + n, MaskRole.NOISE, eps=0.0).values
    np.testing.assert_allclose(total, 1.0, atol=1e-8)


def test_oracle_sigma_examples(rng, caplog):
    assert oracle_sigma(np.array([[3 + 4j]])).values[0, 0] == pytest.approx(25.0)
    d = crandn(rng, 10, 20)
    d[0, 0] = 0.0
    sig = oracle_sigma(d)
    power = np.abs(d) ** 2
    assert sig.floor == pytest.approx(1e-6 * power.mean())
    above = power > sig.floor
    np.testing.assert_allclose(sig.values[above], power[above], rtol=1e-15)
    assert sig.values[0, 0] == sig.floor
    with caplog.at_level(logging.WARNING):
        zero = oracle_sigma(np.zeros((3, 4)))
    assert zero.degenerate and "no energy" in caplog.text
    assert np.all(zero.values == zero.values[0, 0]) and zero.values[0, 0] > 0


def test_sigma_from_mask(rng):
    y = crandn(rng, 8, 12)
    d = 0.3 * crandn(rng, 8, 12)
    one = sigma_from_mask(ComplexMask(np.ones((8, 12)), MaskRole.SIGMA), y)
    np.testing.assert_allclose(one.values, np.abs(y) ** 2, rtol=1e-14)
    via_mask = sigma_from_mask(oracle_cirm(d, y, MaskRole.SIGMA), y)
    direct = oracle_sigma(d)
    p = np.abs(y) ** 2
    eps = masklib.CIRM_FLOOR * p.mean()
    above = (direct.values > direct.floor) & (p >= 2e6 * eps)
    assert above.mean() > 0.5
    np.testing.assert_allclose(via_mask.values[above], direct.values[above], rtol=1e-6)
    zero = sigma_from_mask(ComplexMask(np.zeros((8, 12)), MaskRole.SIGMA), y)
    assert zero.degenerate
    with pytest.raises(ValueError):
        sigma_from_mask(ComplexMask(np.ones((8, 12)), MaskRole.SPEECH), y)
