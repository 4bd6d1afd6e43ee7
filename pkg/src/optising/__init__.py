"""Ising annealer with optical vector-matrix-multiply evaluation tiers.

The solver routes Hamiltonian evaluation through progressively more
physical models of an optical matrix multiplier: exact arithmetic, ideal
intensity summation, camera-noise-corrupted detection, and a full
diffraction simulation of the three-SLM chain with calibration.
"""

from .annealer import (AnnealConfig, AnnealResult, anneal,
                       ground_state_probability, metropolis_accept,
                       run_replicas, sample_flip_count)
from .calibration import (CalibrationTables, MatrixRig, RigError,
                          amplitude_calibrate_slm0, amplitude_calibrate_slm1,
                          calibrate_rig, dft_benchmark, dft_matrix,
                          phase_calibrate, phase_refine)
from .errors import CapacityError, ConfigError, NumericalError, SamplingError
from .holography import (FieldGrid, Hologram, OpticalGeometry, beam_geometry,
                         fit_gaussian_radius, gaussian_field, gaussian_radius,
                         hologram_loss_grad, ideal_modulation, layout_spins,
                         optimize_hologram, phase_only_project, propagate,
                         propagate_adjoint)
from .ising import (IsingModel, SpectralTransform, brute_force_ground,
                    hamiltonian_exact, load_problem, mobius_ladder,
                    random_glass, spectral_transform, symmetrize)
from .optical import (DetectorModel, ExactEvaluator, IdealOpticalEvaluator,
                      NoisyOpticalEvaluator, PerfModel, detect,
                      fidelity_matrix, fidelity_vector,
                      hamiltonian_from_intensities, noise_budget,
                      noisy_hamiltonian, normalization_coefficient,
                      ovmm_ideal, perf_report)
from .rig import DiffractionRig, PhysicalOpticalEvaluator, design_toy_rig

__version__ = "0.1.0"
