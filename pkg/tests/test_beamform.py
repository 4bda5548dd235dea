import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wpdpp import beamform, pipeline, simroom, tapstack
from wpdpp.metrics import si_snr_metric
from wpdpp.beamform import SingularCovarianceError, SolverConfig, hermitian_solve
from wpdpp.tapstack import CovarianceKind, FreqCovariance, TapSet, stack

from conftest import crandn


def cov(mats, taps="0", kind=CovarianceKind.MASKED_SPEECH):
    mats = np.asarray(mats, dtype=complex)
    if mats.ndim == 2:
        mats = mats[None]
    return FreqCovariance(mats, kind, TapSet.parse(taps))


def random_pd(rng, d, n=1):
    a = crandn(rng, n, d, 2 * d)
    return a @ np.conj(np.swapaxes(a, -1, -2)) / (2 * d)


def rank_one(rng, d, n=1):
    v = crandn(rng, n, d)
    return v, np.einsum("fa,fb->fab", v, v.conj()) * rng.uniform(0.5, 4.0, (n, 1, 1))


def rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(diagonal_loading=0.0)
    with pytest.raises(ValueError):
        SolverConfig(max_loading_retries=-1)


def test_mvdr_worked_examples():
    cfg = SolverConfig(diagonal_loading=1e-14)
    v = np.array([1.0, 1.0])
    w = beamform.solve_mvdr(cov(np.eye(2)), cov(np.outer(v, v)), cfg).weights[0]
    np.testing.assert_allclose(w, [0.5, 0.5], atol=1e-12)
    w = beamform.solve_mvdr(cov(np.eye(2)), cov(np.eye(2)), cfg).weights[0]
    np.testing.assert_allclose(w, [0.5, 0.0], atol=1e-12)


def test_hermitian_solve_examples(rng):
    b = crandn(rng, 3, 2)
    np.testing.assert_allclose(hermitian_solve(np.eye(3), b, 1e-14), b, rtol=1e-12)
    np.testing.assert_allclose(hermitian_solve(np.diag([2.0, 4.0]), np.eye(2)), np.diag([0.5, 0.25]))
    a = random_pd(rng, 6)[0]
    b = crandn(rng, 6, 6)
    x = hermitian_solve(a, b, 0.0)
    assert np.linalg.norm(a @ x - b) / np.linalg.norm(b) < 1e-10


def test_hermitian_solve_loading_retry_and_failure():
    singular = np.array([[1.0, 1.0], [1.0, 1.0]])
    x = hermitian_solve(singular, np.eye(2), 0.0, max_retries=3)
    assert np.all(np.isfinite(x))
    with pytest.raises(SingularCovarianceError) as err:
        hermitian_solve(np.array([[1.0, 0.0], [0.0, np.nan]]), np.eye(2), 1e-5, 2, freq_index=7)
    assert err.value.freq_index == 7


def test_singular_frequency_falls_back_to_passthrough(rng):
    a = random_pd(rng, 4, 3)
    a[1, 0, 0] = np.nan
    _, b = rank_one(rng, 4, 3)
    out = beamform.solve_mvdr(cov(a, "-1,0"), cov(b, "-1,0"), SolverConfig(reference_channel=1), 2)
    np.testing.assert_array_equal(out.flagged, [False, True, False])
    np.testing.assert_array_equal(out.weights[1], [0, 0, 0, 1])


@pytest.mark.parametrize("solver", [beamform.solve_mvdr, beamform.solve_wpd, beamform.solve_wpdpp])
def test_distortionless_general_phase(rng, solver):
    """w^H v = v_q for any complex v, rank-1 speech covariance and PD A."""
    for n_ch, taps in [(2, "0"), (3, "-1,0"), (4, "-1,0,1"), (8, "-3,0")]:
        t = TapSet.parse(taps)
        d = t.dim(n_ch)
        q = int(rng.integers(n_ch))
        v, b = rank_one(rng, d, 4)
        w = solver(cov(random_pd(rng, d, 4), taps), cov(b, taps),
                   SolverConfig(diagonal_loading=1e-12, reference_channel=q), n_ch).weights
        ref = t.reference_index(n_ch, q)
        np.testing.assert_allclose(np.einsum("fd,fd->f", w.conj(), v), v[:, ref], atol=1e-8)


def test_rank_one_weight_matches_steering_formula(rng):
    d = 6
    r = random_pd(rng, d)[0]
    v, b = rank_one(rng, d)
    w = beamform.solve_wpd(cov(r, "-1,0"), cov(b, "-1,0"), SolverConfig(diagonal_loading=1e-14), 3).weights[0]
    # w = R^-1 v conj(v_q) / (v^H R^-1 v)
    np.testing.assert_allclose(w, beamform.steering_wpd(r, v[0]) * np.conj(v[0, 3]), rtol=1e-9)


def test_degeneracy_chain(rng):
    y = crandn(rng, 3, 5, 40)
    m = crandn(rng, 5, 40)
    mn = crandn(rng, 5, 40)
    single = stack(y, TapSet((0,)))
    phi_ss = tapstack.masked_covariance(single, m)
    phi_nn = tapstack.masked_covariance(single, mn)
    plain = beamform.solve_mvdr(phi_nn, phi_ss).weights
    multi = beamform.solve_mvdr(tapstack.masked_covariance(stack(y, TapSet.parse("0")), mn),
                                tapstack.masked_covariance(stack(y, TapSet.parse("0")), m)).weights
    assert rel(multi, plain) < 1e-10
    ones = np.ones((5, 40))
    w_wpd = beamform.solve_wpd(tapstack.sigma_weighted_covariance(single, ones), phi_ss).weights
    w_pp = beamform.solve_wpdpp(tapstack.sigma_normalized_covariance(single, ones), phi_ss).weights
    assert rel(w_pp, w_wpd) < 1e-10


def test_scale_invariance(rng):
    y = crandn(rng, 2, 4, 30)
    st_ = stack(y, TapSet((-1, 0)))
    s2 = rng.uniform(0.1, 2.0, (4, 30))
    phi_ss = tapstack.masked_covariance(st_, crandn(rng, 4, 30))
    base = beamform.solve_wpd(tapstack.sigma_weighted_covariance(st_, s2), phi_ss).weights
    scaled = beamform.solve_wpd(tapstack.sigma_weighted_covariance(st_, 7.3 * s2), phi_ss).weights
    assert rel(scaled, base) < 1e-10
    base = beamform.solve_wpdpp(tapstack.sigma_normalized_covariance(st_, s2), phi_ss).weights
    scaled = beamform.solve_wpdpp(tapstack.sigma_normalized_covariance(st_, 7.3 * s2), phi_ss).weights
    assert rel(scaled, base) < 1e-12
    phi_nn = tapstack.masked_covariance(st_, crandn(rng, 4, 30))
    bigger = FreqCovariance(12.5 * phi_ss.matrices, phi_ss.kind, phi_ss.taps)
    assert rel(beamform.solve_mvdr(phi_nn, bigger).weights, beamform.solve_mvdr(phi_nn, phi_ss).weights) < 1e-10


def test_solver_errors(rng):
    a = cov(random_pd(rng, 4), "-1,0")
    with pytest.raises(ValueError):
        beamform.solve_mvdr(a, cov(random_pd(rng, 4), "0,1"))
    with pytest.raises(ValueError):
        beamform.solve_mvdr(a, cov(random_pd(rng, 2)))
    with pytest.raises(ValueError):
        beamform.solve_mvdr(cov(random_pd(rng, 5), "-1,0"), cov(random_pd(rng, 5), "-1,0"))


def test_apply(rng):
    y = crandn(rng, 3, 4, 6)
    taps = TapSet((-1, 0))
    st_ = stack(y, taps)
    w = np.zeros((4, 6), complex)
    w[:, taps.reference_index(3, 2)] = 1.0
    bw = beamform.BeamformerWeights(w, taps, 2, 3)
    np.testing.assert_array_equal(beamform.apply(bw, st_), y[2])
    w = crandn(rng, 4, 6)
    out = beamform.apply(beamform.BeamformerWeights(w, taps), st_)
    alpha = 0.3 - 1.7j
    np.testing.assert_allclose(beamform.apply(beamform.BeamformerWeights(alpha * w, taps), st_),
                               np.conj(alpha) * out, rtol=1e-13)
    for f in range(4):
        for t in range(6):
            assert out[f, t] == pytest.approx(np.vdot(w[f], st_.bins[:, f, t]), rel=1e-12)
    with pytest.raises(ValueError):
        beamform.apply(beamform.BeamformerWeights(w, TapSet((0, 1))), st_)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), c=st.floats(1e-3, 1e3))
def test_speech_covariance_scale_invariance_property(seed, c):
    rng = np.random.default_rng(seed)
    a = cov(random_pd(rng, 4, 2), "-1,0")
    b = cov(random_pd(rng, 4, 2), "-1,0")
    scaled = FreqCovariance(c * b.matrices, b.kind, b.taps)
    assert rel(beamform.solve_wpdpp(a, scaled).weights, beamform.solve_wpdpp(a, b).weights) < 1e-10


@pytest.mark.slow
def test_mvdr_improves_anechoic_two_source_mixtures():
    cfg = simroom.CorpusConfig(n_mics=4, duration_s=1.5, absorption=(1.0, 1.0), max_order=0,
                               rir_length=2000)
    wins = 0
    n = 20
    for i in range(n):
        b = simroom.simulate_utterance(cfg, seed=11, index=i, n_speakers=2)
        out = pipeline.enhance(b.mixture, None, "mvdr", dry_clean_ref=b.dry_clean_ref)
        wins += si_snr_metric(out.waveform, b.dry_clean_ref) >= si_snr_metric(b.mixture[0], b.dry_clean_ref)
    assert wins >= 0.95 * n
