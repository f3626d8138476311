"""A qubit stored in a double well.

We calibrate the quartic double well so that its two lowest levels are
split by exactly 2, look at the left/right localized combinations, and
watch the tunneling gap close exponentially as the kinetic scale h drops.

Run:  python3 demos/01_double_well_qubit.py
"""
import numpy as np

from schrolab.double_well import calibrate, gap_law_fit, logical_pauli_residuals, right_well_mass

print("calibrated encodings (E1 - E0 forced to 2 by rescaling)")
print(f"{'h':>6} {'G = E2-E1':>12} {'E1-E0':>10} {'mass of psi_right in x>0':>26}")
for h in (0.12, 0.08, 0.05, 0.04):
    enc = calibrate(h, 2001)
    print(f"{h:>6} {enc.G:>12.4g} {enc.E1 - enc.E0:>10.6f} {right_well_mass(enc):>26.8f}")

print("\nsmoothed sign (w = 0.05) as a logical Z: it improves as h shrinks")
print(f"{'h':>6} {'<psi0|Z|psi1>':>14} {'diagonals':>10} {'leakage':>9}")
for h in (0.08, 0.04, 0.03, 0.02):
    res = logical_pauli_residuals(calibrate(h, 4001), w=0.05)
    diag = max(abs(res.diag0), abs(res.diag1))
    print(f"{h:>6} {res.offdiag:>14.6f} {diag:>10.1e} {max(res.leakage0, res.leakage1):>9.2e}")

fit = gap_law_fit([0.04, 0.05, 0.06, 0.08, 0.1])
print("\nuncalibrated tunneling gap: ln(gap) vs 1/h")
for h, g in zip(fit["h"], fit["gap"]):
    print(f"  h = {h:<5} gap = {g:.4e}")
print(f"  fitted slope {fit['slope']:.4f}, semiclassical target {fit['target']:.4f}")
