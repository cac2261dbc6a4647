"""Multilevel amplitude-damping channels: exact dynamics, multitime
measurement statistics, Markovianity/classicality diagnostics, and a
brute-force discretized-bath cross-check."""

from .model import (EffectiveGenerator, EmittedWavefunction, FlatSpectral,
                    LorentzianSpectral, MemoryKernel, ModelSpec,
                    SurvivalAmplitude, TabulatedSpectral, build_model,
                    emitted_norm_exact, emitted_norm_quadrature,
                    emitted_wavefunction_flat, memory_kernel,
                    position_wavefunction_flat, propagator, solve_volterra,
                    survival_amplitude_flat)
from .channel import (BlockDensity, DivisibilityReport, GeneratorDecomposition,
                      apply_channel, apply_generator, divisibility_report,
                      is_completely_positive, time_local_generator)
from .statistics import (InitialState, JointDistribution, MeasurementBasis,
                         TransitionKernel, conditional_from_joint,
                         full_distribution, joint_prob_compatible,
                         joint_prob_regression, one_time_prob,
                         transition_kernel, verify_markov)
from .classicality import (ClassicalityReport, chapman_kolmogorov_residuals,
                           classical_realization, classicality_predicate,
                           classicality_report, consistency_residuals,
                           ncgd_residual)
from .oracle import (DiscretizedBath, FockSpace, OracleHamiltonian, OracleState,
                     build_hamiltonian, evolve, factorization_check,
                     full_distribution_oracle, history_independence_check,
                     joint_prob_oracle, measure, measure_probability,
                     reduced_system_state, support_check, time_shift_check)

__version__ = "0.1.0"
