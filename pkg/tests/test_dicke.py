import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from strainqubits.coupling import QubitEnsemble
from strainqubits.dicke import (
    DickeConfig,
    analytic_critical,
    dicke_fixed_point,
    order_parameter_from_spins,
    phase_scan,
)

OMEGA = 1.0
KAPPA = 0.82  # kappa / omega of the three-mode monolayer case
RABI = 5.0


def config(n=2, G=0.0, Gamma=0.0, **kw):
    ens = QubitEnsemble(np.linspace(0.2, 0.8, n) * 1e-6, 0.0, RABI, KAPPA)
    off = G * (np.ones((n, n)) - np.eye(n))
    return DickeConfig(ens, 0.0, OMEGA, OMEGA / 5e5, G=off, Gamma=Gamma * np.eye(n), **kw)


def lc0(n):
    return analytic_critical(OMEGA, 0.0, n, RABI, KAPPA).lambda_c0


@given(st.floats(1e3, 1e10), st.integers(1, 50), st.floats(0.01, 100), st.floats(0.01, 100))
def test_analytic_identity_exact(omega, n, rabi_ratio, kappa_ratio):
    c = analytic_critical(omega, 0.0, n, rabi_ratio * omega, kappa_ratio * omega)
    assert c.lambda_c == c.lambda_c0
    assert not c.always_superradiant


def test_analytic_closed_form():
    c = analytic_critical(2.0, 0.3, 3, 4.0, 0.5, G=1.0, Gamma=0.2)
    ref = math.sqrt((0.3**2 / 4 + 4) * ((0.1 + 1.0) ** 2 + 16 - 2.0) / (3 * 2.0 * 4.0))
    assert c.lambda_c == pytest.approx(ref, rel=1e-14)
    assert c.lambda_c0 == pytest.approx(math.sqrt(2 * (1 + 16) / 12), rel=1e-14)


def test_analytic_always_superradiant():
    c = analytic_critical(1.0, 0.0, 2, 1.0, 0.1, G=100.0)
    assert math.isnan(c.lambda_c) and c.always_superradiant


@pytest.mark.parametrize("n", [1, 4, 9, 16])
def test_analytic_scales_as_inverse_sqrt_n(n):
    assert lc0(n) * math.sqrt(n) == pytest.approx(lc0(1), rel=1e-14)


def test_zero_coupling_is_exact_after_one_step():
    trace = dicke_fixed_point(config().with_coupling(0.0))
    assert trace.converged and trace.iterations == 1
    assert trace.value == 0


@pytest.mark.parametrize("ratio", [0.5, 2.5])
def test_fixed_point_is_self_consistent(ratio):
    cfg = config().with_coupling(ratio * lc0(2))
    trace = dicke_fixed_point(cfg)
    assert trace.converged
    a = order_parameter_from_spins(cfg.lambdas, trace.spins, cfg.omega, cfg.gamma)
    assert abs(a - trace.value) <= 1e-5 * max(abs(a), 1e-12)


@pytest.mark.parametrize("ratio", [0.5, 2.5])
def test_fixed_point_insensitive_to_initial_guess(ratio):
    # outside the bistable window the iteration forgets where it started
    cfg = config().with_coupling(ratio * lc0(2))
    values = []
    for guess in (0.01, 0.1, 1.0, 10.0):
        trace = dicke_fixed_point(cfg, guess * math.sqrt(2))
        assert trace.converged and trace.iterations <= 200
        assert trace.errors[-1] < 1e-6
        values.append(trace.value)
    np.testing.assert_allclose(np.abs(values), abs(values[0]), rtol=1e-4)


def test_identical_qubits_have_identical_spins():
    trace = dicke_fixed_point(config(3).with_coupling(2.5 * lc0(3)))
    assert np.ptp(trace.spins) < 1e-8


def test_normal_phase_below_threshold():
    for n in (2, 3):
        scan = phase_scan(config(n), np.linspace(0.05, 0.5, 6) * lc0(n), refine=False)
        assert max(r[2] for r in scan.rows) < 0.5 * scan.threshold


def test_phase_scan_finds_transition_and_scaling():
    ratios = []
    for n in (2, 3):
        scan = phase_scan(config(n), np.linspace(0.5, 3.0, 26) * lc0(n), refine_tol=1e-3)
        ratios.append(scan.critical[RABI] / lc0(n))
    # equal ratios mean lambda_c ~ N^(-1/2) exactly
    assert ratios[0] == pytest.approx(ratios[1], rel=2e-3)


def test_coherent_coupling_lowers_threshold():
    grid = np.linspace(0.5, 3.0, 26) * lc0(2)
    free = phase_scan(config(2), grid, refine_tol=1e-3).critical[RABI]
    coupled = phase_scan(config(2, G=2.0, Gamma=6e-5), grid, refine_tol=1e-3).critical[RABI]
    assert coupled < free


def test_phase_scan_rejects_unsorted_grid():
    with pytest.raises(ValueError):
        phase_scan(config(), [1.0, 0.5])


def test_selected_mode_must_be_excluded():
    with pytest.raises(ValueError):
        config(selected_mode=3, excluded_mode=4)
    with pytest.raises(ValueError):
        config(damping=0.0)


def test_from_spectrum_uses_equal_strain_mode():
    from strainqubits.elasticity import DeviceConfig, mode_frequencies

    spec = mode_frequencies(DeviceConfig(thickness=0.324e-9, temperature=0.01), 75)
    cfg = DickeConfig.from_spectrum(spec, 2)
    assert cfg.selected_mode == cfg.excluded_mode == 3
    assert cfg.omega == spec.omega[2]
    assert np.ptp(cfg.lambdas) <= 1e-3 * cfg.lambdas.max()
    assert cfg.ensemble.rabi[0] == pytest.approx(5 * cfg.omega)


def test_phase_scan_csv(tmp_path):
    scan = phase_scan(config(), np.linspace(0.5, 1.0, 3) * lc0(2), refine=False)
    path = tmp_path / "d.csv"
    scan.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# critical")
    assert lines[1] == "lambda_over_omega,rabi_over_omega,order_parameter,iterations,converged"
    assert len(lines) == 5
