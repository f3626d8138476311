"""schrolab: Hamiltonian reductions between qubit models and Schrödinger operators.

Subpackages follow the chain of constructions:

``pauli``         TIM Hamiltonians, Pauli strings, exact diagonalization
``grid``          finite-difference grids, sparse operators, low spectra
``double_well``   gap-calibrated double wells and their logical states
``reduction``     TIM -> Schrödinger operator reduction and its verification
``stoquastic``    unary embedding of grid Hamiltonians into stoquastic qubit terms
``universality``  entrywise block embedding of real Hamiltonians
``perturbation``  executable block-perturbation inequalities
``dynamics``      propagators and measurement on grids
``experiments``   named experiments, reports and the batch runner (see ``cli``)
"""

__version__ = "0.1.0"

from .pauli import PauliOperator, PauliString, TimHamiltonian, exact_propagator, exact_spectrum, to_dense
from .grid import Grid1D, PotentialTerm, SparseSymOp, TensorGrid, assemble_schrodinger, lowest_eigenpairs
from .double_well import LogicalEncoding, calibrate, encoding_for_G, tunneling_gap
from .reduction import ReductionConfig, build_reduction, verify_dynamics, verify_spectrum
from .stoquastic import assemble_hstar, certify_stoquastic, sigma_embed
from .universality import XXZZHamiltonian, embed_xxzz, verify_sector_dynamics
from .dynamics import MeasurementM, measure_acceptance, propagate

__all__ = [
    "__version__", "PauliOperator", "PauliString", "TimHamiltonian", "exact_propagator",
    "exact_spectrum", "to_dense", "Grid1D", "PotentialTerm", "SparseSymOp", "TensorGrid",
    "assemble_schrodinger", "lowest_eigenpairs", "LogicalEncoding", "calibrate",
    "encoding_for_G", "tunneling_gap", "ReductionConfig", "build_reduction", "verify_dynamics",
    "verify_spectrum", "assemble_hstar", "certify_stoquastic", "sigma_embed", "XXZZHamiltonian",
    "embed_xxzz", "verify_sector_dynamics", "MeasurementM", "measure_acceptance", "propagate",
]
