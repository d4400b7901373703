import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tdkrr import estimator, kernels, weighting
from tdkrr.weighting import EnvelopeParams

FS = 1600.0


def test_uniform():
    np.testing.assert_array_equal(weighting.envelope_uniform(4), [1, 1, 1, 1])
    per_mic = [EnvelopeParams("uniform", l0=3), EnvelopeParams("uniform", l0=5, individual=True)]
    np.testing.assert_array_equal(weighting.envelopes_for_mics(per_mic, 6), np.ones((2, 6)))


def test_uniform_envelope_follows_fit():
    rng = np.random.default_rng(0)
    data = estimator.RirData(rng.uniform(-0.3, 0.3, (3, 3)), rng.standard_normal((3, 10)), FS)
    spec = kernels.KernelSpec.diffuse(10, FS)
    env = weighting.envelopes_for_mics([EnvelopeParams("uniform")] * 3, 10)
    a = estimator.fit_weighted(data, 0.1, spec, estimator.DataWeighting(env)).coefficients
    np.testing.assert_allclose(a, estimator.fit(data, 0.1, spec).coefficients, atol=1e-12)


def test_exponential_reference_points():
    p = EnvelopeParams("exponential", l0=20, tau_init=0.005, tau_decay=0.05, fs=FS, q_min=1e-6)
    q = weighting.envelope_exponential(p, 200)
    assert q[20] == 1.0
    assert q[20 + 80] == pytest.approx(1e-3, rel=1e-12)
    assert q[20 - 8] == pytest.approx(1e-3, rel=1e-12)
    # 10^(-3 * 100 / 8) is far below q_min
    p = EnvelopeParams("exponential", l0=100, tau_init=0.005, fs=FS, q_min=1e-6)
    assert weighting.envelope_exponential(p, 200)[0] == 1e-6


def test_exponential_without_onset():
    q = weighting.envelope_exponential(EnvelopeParams("exponential", l0=0, tau_decay=0.1, fs=FS), 50)
    assert q[0] == 1.0 and np.all(np.diff(q) < 0)


@settings(max_examples=40, deadline=None)
@given(l0=st.integers(0, 99), tau_init=st.floats(0.001, 0.2), tau_decay=st.floats(0.01, 1.0))
def test_exponential_is_log_linear_on_each_side(l0, tau_init, tau_decay):
    p = EnvelopeParams("exponential", l0=l0, tau_init=tau_init, tau_decay=tau_decay, fs=FS, q_min=1e-6)
    q = weighting.envelope_exponential(p, 100)
    assert np.all(q >= 1e-6)
    logq = np.log10(q)
    for part in (logq[:l0 + 1], logq[l0:]):
        unclamped = part[part > -6 + 1e-9]
        if unclamped.size >= 3:
            np.testing.assert_allclose(np.diff(unclamped, 2), 0, atol=1e-12)


def test_linear_reference_points():
    p = EnvelopeParams("linear", l0=10, tau_decay=0.025, fs=FS, q_min=1e-6)
    q = weighting.envelope_linear(p, 100)
    assert q[0] == 1e-6
    assert q[5] == 0.5
    assert q[10] == 1.0
    assert q[30] == pytest.approx(0.5)
    assert q[50] == 1e-6
    assert np.all(q[50:] == 1e-6)


def test_linear_without_onset():
    q = weighting.envelope_linear(EnvelopeParams("linear", l0=0, tau_decay=0.01, fs=FS), 30)
    np.testing.assert_allclose(q[:16], 1 - np.arange(16) / 16)
    assert np.all(q[16:] == 1e-6)


def test_l0_must_fit_in_the_signal():
    for fn, kind in ((weighting.envelope_exponential, "exponential"), (weighting.envelope_linear, "linear")):
        with pytest.raises(ValueError):
            fn(EnvelopeParams(kind, l0=10), 10)


def test_params_validation():
    with pytest.raises(ValueError):
        EnvelopeParams("cosine")
    with pytest.raises(ValueError):
        EnvelopeParams(q_min=0)
    with pytest.raises(ValueError):
        EnvelopeParams(tau_init=0)
    with pytest.raises(ValueError):
        EnvelopeParams(l0=-1)
    with pytest.raises(ValueError):
        EnvelopeParams(l0=2.5)


def test_oracle_examples():
    truth = np.array([[1.0, 0.0], [0.0, -1.0]])
    np.testing.assert_array_equal(weighting.envelope_oracle(truth, False), [[0.5, 0.5], [0.5, 0.5]])
    np.testing.assert_array_equal(weighting.envelope_oracle(truth, True), [[1.0, 1e-6], [1e-6, 1.0]])
    one = np.array([[0.3, -0.2, 0.0]])
    np.testing.assert_array_equal(weighting.envelope_oracle(one, True), weighting.envelope_oracle(one, False))
    np.testing.assert_array_equal(weighting.envelope_oracle(np.zeros((2, 4)), False, q_min=1e-5), 1e-5)
    with pytest.raises(ValueError):
        weighting.envelope_oracle(np.zeros((0, 4)), True)


def test_oracle_normalization():
    truth = np.array([[0.5, -0.1, 0.0], [0.0, 0.05, 0.2]])
    env = weighting.envelope_oracle(truth, True, normalize=True)
    np.testing.assert_allclose(env.max(axis=-1), 1.0)
    np.testing.assert_allclose(env[0], [1.0, 0.2, 1e-6])


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), M=st.integers(1, 6))
def test_oracle_mean_is_permutation_invariant(seed, M):
    rng = np.random.default_rng(seed)
    truth = rng.standard_normal((M, 16))
    perm = rng.permutation(M)
    a = weighting.envelope_oracle(truth, False)
    b = weighting.envelope_oracle(truth[perm], False)
    np.testing.assert_allclose(a, b, rtol=1e-14)
    assert np.all(a >= 1e-6)


def test_make_envelope_dispatch():
    p = EnvelopeParams("exponential", l0=3)
    np.testing.assert_array_equal(weighting.make_envelope(p, 10), weighting.envelope_exponential(p, 10))
    np.testing.assert_array_equal(weighting.make_envelope(EnvelopeParams("uniform"), 4), np.ones(4))
    with pytest.raises(ValueError):
        weighting.make_envelope(EnvelopeParams("oracle"), 4)


def test_aggregate_params():
    p = EnvelopeParams("exponential", l0=7, tau_decay=0.4, individual=True)
    assert weighting.aggregate_params([p]) == EnvelopeParams("exponential", l0=7, tau_decay=0.4)
    per_mic = [EnvelopeParams(l0=l0, tau_decay=t) for l0, t in ((20, 0.9), (10, 0.2), (30, 0.3))]
    agg = weighting.aggregate_params(per_mic)
    assert agg.l0 == 10 and agg.tau_decay == 0.3
    # even counts take the lower middle value
    per_mic = [EnvelopeParams(tau_decay=t) for t in (0.4, 0.1, 0.3, 0.2)]
    assert weighting.aggregate_params(per_mic).tau_decay == 0.2
    with pytest.raises(ValueError):
        weighting.aggregate_params([])


def test_envelopes_for_mics():
    per_mic = [EnvelopeParams("linear", l0=l0, tau_decay=0.01, fs=FS, individual=True) for l0 in (2, 5)]
    env = weighting.envelopes_for_mics(per_mic, 40)
    np.testing.assert_array_equal(env[1], weighting.envelope_linear(per_mic[1], 40))
    shared = [EnvelopeParams("linear", l0=l0, tau_decay=0.01, fs=FS) for l0 in (2, 5)]
    env = weighting.envelopes_for_mics(shared, 40)
    np.testing.assert_array_equal(env[0], env[1])
    np.testing.assert_array_equal(env[0], weighting.envelope_linear(shared[0], 40))
    truth = np.random.default_rng(0).standard_normal((2, 40))
    oracle = [EnvelopeParams("oracle", individual=True)] * 2
    np.testing.assert_array_equal(weighting.envelopes_for_mics(oracle, 40, truth), np.maximum(1e-6, np.abs(truth)))
    with pytest.raises(ValueError):
        weighting.envelopes_for_mics(oracle, 40)
