"""Mean-field superradiant transition for a few equal-strain registers.

For each register size the qubits sit on the strain maxima of mode N+1 and
the coupling to that mode is swept upward.  The numerically detected onset is
printed next to the analytic stability boundary with and without the
residual qubit-qubit couplings mediated by all other modes.
"""
import numpy as np

from strainqubits.dicke import DickeConfig, analytic_critical, phase_scan
from strainqubits.elasticity import DeviceConfig, mode_frequencies

device = DeviceConfig(thickness=0.324e-9, temperature=0.01)
spectrum = mode_frequencies(device)

print(" N   omega/2pi [MHz]  numeric/omega  analytic/omega  uncoupled/omega")
for n in (2, 3):
    cfg = DickeConfig.from_spectrum(spectrum, n, kappa=2 * np.pi * 20e6)
    scan = phase_scan(cfg, np.linspace(0.02, 6.0, 60) * cfg.omega)
    rabi = float(cfg.ensemble.rabi[0])
    numeric = scan.critical[rabi]
    exact = analytic_critical(cfg.omega, cfg.gamma, n, rabi, float(cfg.ensemble.kappa[0]),
                              cfg.G[0, 1], cfg.Gamma[0, 0])
    shown = "none" if numeric is None else f"{numeric / cfg.omega:.3f}"
    print(f"{n:2d}   {cfg.omega / 2e6 / np.pi:15.3f}  {shown:>13}  {exact.lambda_c / cfg.omega:14.3f}  {exact.lambda_c0 / cfg.omega:15.3f}")
