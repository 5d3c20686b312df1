import numpy as np
import pytest

from strainqubits.elasticity import DeviceConfig, mode_frequencies


@pytest.fixture(scope="session")
def device():
    return DeviceConfig()


@pytest.fixture(scope="session")
def spectrum(device):
    return mode_frequencies(device, n_max=75)


def random_density(n_qubits, rng, rank=None):
    d = 2**n_qubits
    rank = d if rank is None else rank
    a = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


def random_pure(n_qubits, rng):
    psi = rng.normal(size=2**n_qubits) + 1j * rng.normal(size=2**n_qubits)
    psi /= np.linalg.norm(psi)
    return psi


ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    groups: dict = {}
    for key, (ok, detail) in sorted(ACCEPTANCE.items()):
        groups.setdefault(key.rstrip("abcde"), []).append((key, ok, detail))
    for crit, items in sorted(groups.items(), key=lambda kv: int(kv[0])):
        ok = all(i[1] for i in items)
        detail = "; ".join(f"{k}: {'ok' if good else 'FAILED'} {d}".strip() for k, good, d in items)
        tr.write_line(f"CRITERION {crit}: {'PASS' if ok else 'FAIL'} -- {detail}")
