import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize

from strainqubits.elasticity import (
    DeviceConfig,
    ModeShape,
    clamped_alphas,
    mode_frequencies,
    mode_profile,
)

# Textbook clamped roots from a high-precision bracketed solve (mpmath, 30 digits).
ALPHA_REF = [4.7300407448627, 7.85320462409584, 10.9956078380017, 14.1371654912575]
# omega_n / 2 pi (MHz) for the reference ribbon; oracle: mpmath textbook shapes with
# psi'''' = alpha^4 psi, so int psi psi'''' = alpha^4 int psi^2 on the unit-peak profile.
OMEGA_REF_MHZ = [12.6555674568, 36.7098184447, 71.8080369153]


def test_roots_match_reference():
    np.testing.assert_allclose(clamped_alphas(4), ALPHA_REF, rtol=1e-12)


def test_roots_against_brentq_many():
    alphas = clamped_alphas(60)
    for n, a in enumerate(alphas, start=1):
        ref = optimize.brentq(lambda x: math.cos(x) - 1 / math.cosh(x), n * math.pi, (n + 1) * math.pi, xtol=1e-14)
        assert a == pytest.approx(ref, abs=1e-9)


def test_high_roots_approach_asymptote():
    alphas = clamped_alphas(200)
    n = np.arange(1, 201)
    assert np.abs(alphas[20:] - (n[20:] + 0.5) * np.pi).max() < 1e-12


def test_frequencies_match_oracle(spectrum):
    np.testing.assert_allclose(spectrum.omega[:3] / (2e6 * np.pi), OMEGA_REF_MHZ, rtol=1e-6)


def test_eigen_model_uses_textbook_wavenumber(device):
    spec = mode_frequencies(device, 5, frequency_model="eigen")
    np.testing.assert_allclose(spec.wavenumbers, clamped_alphas(5))


def test_profile_integral_equals_alpha_times_norm(spectrum):
    # psi'''' = alpha^4 psi  =>  k^4 = alpha^4 int psi^2 exactly
    from scipy import integrate

    s = spectrum.s
    for i in range(10):
        norm = integrate.simpson(spectrum.psi[i] ** 2, x=s)
        assert spectrum.wavenumbers[i] ** 4 == pytest.approx(spectrum.eigen[i] ** 4 * norm, rel=1e-6)


def test_monolayer_frequencies():
    spec = mode_frequencies(DeviceConfig(thickness=0.324e-9), 6)
    mhz = spec.omega / (2e6 * np.pi)
    np.testing.assert_allclose(mhz[[2, 4, 5]], [24.49, 60.48, 84.47], atol=0.02)


@given(st.integers(min_value=1, max_value=40))
@settings(max_examples=25, deadline=None)
def test_clamped_shape_boundary_conditions(n):
    shape = ModeShape.build("clamped", n)
    ends = np.array([0.0, 1.0])
    assert np.abs(shape(ends, 0)).max() < 1e-9
    assert np.abs(shape(ends, 1)).max() < 1e-9 * shape.eigen
    grid = np.linspace(0, 1, 20001)
    peak = np.abs(shape(grid, 0)).max()
    assert 1 - (shape.eigen / 20000) ** 2 < peak <= 1 + 1e-12


@given(st.integers(min_value=1, max_value=30))
@settings(max_examples=20, deadline=None)
def test_clamped_shape_parity(n):
    shape = ModeShape.build("clamped", n)
    s = np.linspace(0, 1, 501)
    sign = (-1) ** (n + 1)
    np.testing.assert_allclose(shape(s[::-1], 0), sign * shape(s, 0), atol=1e-9)


def test_orthogonality(spectrum):
    from scipy import integrate

    s = spectrum.s
    psi = spectrum.psi[:8]
    gram = integrate.simpson(psi[:, None, :] * psi[None, :, :], x=s, axis=-1)
    off = gram - np.diag(np.diag(gram))
    assert np.abs(off).max() < 1e-6


def test_mode_profile_samples(device):
    psi, dpsi = mode_profile(1, device, z=[0.5e-6])
    assert psi[0] == pytest.approx(1.0, abs=1e-12)
    assert dpsi[0] == pytest.approx(0.0, abs=1e-9)


@given(st.floats(min_value=0.3e-9, max_value=3e-9), st.floats(min_value=0.5e-6, max_value=3e-6))
@settings(max_examples=20, deadline=None)
def test_frequency_scaling(h, L):
    base = mode_frequencies(DeviceConfig(), 3)
    other = mode_frequencies(DeviceConfig(thickness=h, length=L), 3)
    factor = (h / 9.5e-10) * (1e-6 / L) ** 2
    np.testing.assert_allclose(other.omega / base.omega, factor, rtol=1e-10)


def test_pinned_frequencies():
    dev = DeviceConfig(boundary_model="pinned", built_in_tension=0.1)
    spec = mode_frequencies(dev, 5)
    ref = np.sqrt(0.1 / dev.areal_density) * np.arange(1, 6) * np.pi / dev.length
    np.testing.assert_allclose(spec.omega, ref, rtol=1e-12)


@pytest.mark.parametrize(
    "changes",
    [dict(length=-1.0), dict(poisson_ratio=0.6), dict(temperature=-1), dict(boundary_model="free"),
     dict(boundary_model="pinned")],
)
def test_device_validation(changes):
    with pytest.raises(ValueError):
        DeviceConfig(**changes)


def test_grid_too_coarse(device):
    with pytest.raises(ValueError):
        mode_frequencies(device, 3, grid_points=100)


def test_spectrum_csv(tmp_path, spectrum):
    path = tmp_path / "modes.csv"
    spectrum.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("n,")
    assert len(lines) == 76
    assert float(lines[1].split(",")[2]) == spectrum.omega[0]
