"""Flexural spectrum of the default ribbon and the couplings it mediates.

Prints the lowest mode frequencies, the strain coupling of a qubit at the
strain maximum of each mode, and the exchange/dephasing matrices for two
qubits at L/3 and 2L/3.
"""
import numpy as np

from strainqubits.coupling import QubitEnsemble, coupling_rate, effective_matrices
from strainqubits.elasticity import DeviceConfig, mode_frequencies

MHZ = 2e6 * np.pi

device = DeviceConfig()
spectrum = mode_frequencies(device, n_max=75)

print("mode  omega/2pi [MHz]  max lambda/2pi [MHz]")
z = spectrum.z[1:-1]
lam = np.abs(coupling_rate(spectrum, z, [1, 2, 3, 4, 5]))
for n in range(5):
    print(f"{n + 1:4d}  {spectrum.omega[n] / MHZ:15.4f}  {lam[:, n].max() / MHZ:20.4f}")

L = device.length
pair = QubitEnsemble([L / 3, 2 * L / 3], 0.0, 0.0, 1.0)
cm = effective_matrices(pair, spectrum)
print("\nqubits at L/3 and 2L/3")
print(f"  G12/2pi     = {cm.G[0, 1] / MHZ:.4f} MHz")
print(f"  Gamma12/2pi = {cm.Gamma[0, 1] / MHZ:.3e} MHz")
print(f"  tail share of the last 10 modes: {cm.truncation_tail['G']:.2%}")
