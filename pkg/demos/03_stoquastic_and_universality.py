"""Two sign-structure constructions.

1. A grid Hamiltonian becomes a stoquastic qubit Hamiltonian via a unary
   (thermometer) code plus a penalty whose kernel is exactly the code.
2. A real XX+ZZ Hamiltonian, which is not stoquastic, is embedded with one
   ancilla so that the |-> ancilla sector reproduces its dynamics exactly.

Run:  python3 demos/03_stoquastic_and_universality.py
"""
import numpy as np

from schrolab.double_well import V_DW
from schrolab.grid import Grid1D, PotentialTerm, TensorGrid
from schrolab.stoquastic import assemble_hstar, grid_ground_energy, penalty_gap
from schrolab.universality import XXZZHamiltonian, embed_xxzz, random_state, verify_sector_dynamics

grid, g, pot = TensorGrid((Grid1D(8),)), [0.05], [PotentialTerm((0,), V_DW)]
hs = assemble_hstar(grid, g, pot)
lam = np.linalg.eigvalsh(hs.dense())[0]
print(f"8-point double well on {hs.nq} qubits, {len(hs.all_terms)} terms")
print(f"  lambda_min(qubit) - lambda_min(grid) = {lam - grid_ground_energy(grid, g, pot):.1e}")
print(f"  stoquastic: {hs.verdict.ok}, largest term acts on {hs.verdict.max_locality} qubits")
print(f"  penalty: {penalty_gap(hs.n, hs.m)}")

rng = np.random.default_rng(1)
emb = embed_xxzz(XXZZHamiltonian.random(3, rng))
psi = random_state(8, rng)
print("\nrandom 3-qubit XX+ZZ Hamiltonian with one ancilla")
print(f"  embedded terms certified stoquastic: {emb.verdict.ok}")
for t in (0.5, 2.0, 10.0):
    r = verify_sector_dynamics(emb, psi, t)
    print(f"  t = {t:>4}: sector error {r.error:.1e}, leakage into |+> {r.leakage:.1e}")
