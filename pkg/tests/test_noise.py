import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from tnqml import linalg
from tnqml.noise import (
    KrausChannel,
    NoiseSpec,
    amplitude_damping,
    apply_channel,
    dephasing,
    noise_from_config,
    rates_from_times,
)

probabilities = st.floats(0, 1, allow_nan=False)


def random_density(n, rng):
    a = rng.normal(size=(2**n, 2**n)) + 1j * rng.normal(size=(2**n, 2**n))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


@settings(max_examples=100, deadline=None)
@given(probabilities)
def test_kraus_completeness(p):
    for ch in (amplitude_damping(p), dephasing(p)):
        assert np.max(np.abs(ch.completeness() - np.eye(2))) < 1e-12


def test_zero_strength_is_identity():
    rho = random_density(2, np.random.default_rng(0))
    for ch in (amplitude_damping(0.0), dephasing(0.0)):
        np.testing.assert_array_equal(apply_channel(rho, ch, 1), rho)
    np.testing.assert_array_equal(NoiseSpec(0, 0).apply(rho, [0, 1]), rho)


def test_damping_of_maximally_mixed_state():
    p = 0.3
    out = apply_channel(np.eye(2) / 2, amplitude_damping(p), 0)
    np.testing.assert_allclose(out, np.diag([0.5 + 0.5 * p, 0.5 - 0.5 * p]), atol=1e-15)


def test_full_damping_sends_to_ground():
    out = apply_channel(np.diag([0.0, 1.0]).astype(complex), amplitude_damping(1.0), 0)
    np.testing.assert_allclose(out, np.diag([1.0, 0.0]))


def test_dephasing_shrinks_coherence():
    rho = np.full((2, 2), 0.5, dtype=complex)
    out = apply_channel(rho, dephasing(0.028), 0)
    assert abs(out[0, 1] - 0.486) < 1e-12
    np.testing.assert_allclose(np.diag(out), [0.5, 0.5])
    diag = np.diag([0.3, 0.7]).astype(complex)
    np.testing.assert_allclose(apply_channel(diag, dephasing(0.4), 0), diag, atol=1e-15)


def test_composition_order_matches_oracle():
    rng = np.random.default_rng(4)
    rho = random_density(3, rng)
    spec = NoiseSpec(0.2, 0.35)
    expected = oracles.noisy(rho, [2, 0], 3, 0.2, 0.35)
    assert np.max(np.abs(spec.apply(rho, [2, 0]) - expected)) < 1e-13


def test_spec_dephases_before_damping():
    rho = random_density(1, np.random.default_rng(9))
    spec = NoiseSpec(0.1, 0.2)
    manual = apply_channel(apply_channel(rho, dephasing(0.2), 0), amplitude_damping(0.1), 0)
    np.testing.assert_allclose(spec.apply(rho, [0]), manual, atol=1e-15)


@pytest.mark.parametrize("p", [-0.1, 1.1, float("nan")])
def test_out_of_range_probability(p):
    with pytest.raises(ValueError):
        amplitude_damping(p)
    with pytest.raises(ValueError):
        dephasing(p)
    with pytest.raises(ValueError):
        NoiseSpec(p, 0.0)


def test_non_trace_preserving_channel_rejected():
    with pytest.raises(ValueError):
        KrausChannel((np.eye(2) * 0.5,))


def test_randomized_cptp_checks():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        n = int(rng.integers(1, 4))
        rho = random_density(n, rng)
        spec = NoiseSpec(float(rng.random()), float(rng.random()))
        qubit = int(rng.integers(n))
        out = spec.apply(rho, [qubit])
        linalg.check_density_matrix(out)


def test_rates_from_times():
    spec = rates_from_times(0.2, 50.0, 70.0)
    assert spec.p_a == pytest.approx(1 - math.exp(-0.2 / 50), rel=1e-15)
    assert spec.p_d == pytest.approx(1 - math.exp(-0.2 / 70), rel=1e-15)
    # unit independence
    ns = rates_from_times(200e-9, 50e-6, 70e-6)
    assert ns.p_a == pytest.approx(spec.p_a, rel=1e-12)
    with pytest.raises(ValueError):
        rates_from_times(0.2, 0.0, 1.0)
    with pytest.raises(ValueError):
        rates_from_times(-1, 1.0, 1.0)


def test_noise_from_config():
    assert noise_from_config(None) is None
    assert noise_from_config({}) is None
    assert noise_from_config({"p_a": 0.1}) == NoiseSpec(0.1, 0.0)
    assert noise_from_config({"T_g": 0.2, "T_1": 5, "T_2": 7}) == rates_from_times(0.2, 5, 7)
    for bad in ({"p_a": 0.1, "T_1": 3}, {"T_g": 1, "T_1": 2}, {"p_x": 0.1}):
        with pytest.raises(ValueError):
            noise_from_config(bad)
