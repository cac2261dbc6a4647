import numpy as np
import pytest

from conftest import random_basis, random_model
from madc.errors import BudgetExceededError
from madc.model import ModelSpec, build_model, survival_amplitude_flat
from madc.statistics import (InitialState, JointDistribution, MeasurementBasis,
                             conditional_from_joint, full_distribution,
                             joint_prob_compatible, joint_prob_regression,
                             one_time_prob, transition_kernel, verify_markov)


# ---------------------------------------------------------------------------
# MeasurementBasis / InitialState
# ---------------------------------------------------------------------------

class TestBasisTypes:
    def test_standard_basis_compatible(self):
        b = MeasurementBasis.standard(3)
        assert b.compatible
        assert np.allclose(b.mu, [1, 0, 0, 0])

    def test_hadamard_qubit_not_compatible(self, hadamard_qubit_basis):
        assert not hadamard_qubit_basis.compatible

    def test_decomposition_normalization(self, rng):
        b = random_basis(rng, 3)
        total = np.abs(b.mu) ** 2 + np.linalg.norm(b.x_tilde, axis=1) ** 2
        assert np.abs(total - 1.0).max() < 1e-12

    def test_rejects_non_orthonormal(self):
        with pytest.raises(ValueError, match="orthonormal"):
            MeasurementBasis(np.array([[1.0, 0.0], [1.0, 0.0]]))

    def test_initial_state_normalization(self):
        with pytest.raises(ValueError, match="normalized"):
            InitialState(0.5, [1.0])


# ---------------------------------------------------------------------------
# one_time_prob
# ---------------------------------------------------------------------------

class TestOneTime:
    def test_t_zero_projects_init(self, diag2_gen):
        basis = MeasurementBasis.standard(2)
        init = InitialState.excited([1.0, 0.0])
        p = one_time_prob(diag2_gen, init, basis, 0.0)
        assert np.allclose(p, [0.0, 1.0, 0.0], atol=1e-14)

    def test_qubit_decay(self, qubit_gen, excited_init_qubit):
        basis = MeasurementBasis.standard(1)
        p = one_time_prob(qubit_gen, excited_init_qubit, basis, 1.0)
        assert abs(p[1] - np.exp(-1.0)) < 1e-12
        assert abs(p[0] - (1 - np.exp(-1.0))) < 1e-12

    def test_qubit_hadamard_half(self, qubit_gen, excited_init_qubit,
                                 hadamard_qubit_basis):
        # |e^{-1/2}/sqrt2|^2 + (1 - e^{-1})/2 = 0.18394 + 0.31606 = 1/2 exactly
        p = one_time_prob(qubit_gen, excited_init_qubit, hadamard_qubit_basis, 1.0)
        assert np.abs(p - 0.5).max() < 1e-12
        direct = abs(np.exp(-0.5) / np.sqrt(2)) ** 2 + 0.5 * (1 - np.exp(-1.0))
        assert abs(direct - 0.5) < 1e-12

    def test_sums_to_one_arbitrary_basis(self, rng):
        for _ in range(10):
            spec = random_model(rng, d=2)
            gen = build_model(spec)
            basis = random_basis(rng, 2)
            psi = rng.normal(size=2) + 1j * rng.normal(size=2)
            alpha = rng.normal() + 1j * rng.normal()
            norm = np.sqrt(abs(alpha) ** 2 + np.linalg.norm(psi) ** 2)
            init = InitialState(alpha / norm, psi / norm)
            p = one_time_prob(gen, init, basis, 0.7)
            assert abs(p.sum() - 1.0) < 1e-12
            assert p.min() > -1e-14


# ---------------------------------------------------------------------------
# transition_kernel
# ---------------------------------------------------------------------------

class TestTransitionKernel:
    def test_diagonal_eigenbasis(self, diag2_gen):
        basis = MeasurementBasis.standard(2)
        K = transition_kernel(diag2_gen, basis, 0.5, 1.5).matrix
        assert abs(K[1, 1] - np.exp(-1.0)) < 1e-12
        assert abs(K[2, 2] - np.exp(-2.0)) < 1e-12
        assert abs(K[1, 2]) < 1e-14 and abs(K[2, 1]) < 1e-14

    def test_no_reabsorption(self, rng):
        spec = random_model(rng, d=3)
        gen = build_model(spec)
        basis = MeasurementBasis.standard(3)
        K = transition_kernel(gen, basis, 0.2, 1.1).matrix
        assert np.abs(K[1:, 0]).max() == 0.0
        assert abs(K[0, 0] - 1.0) < 1e-14

    def test_hadamard_rotated_example(self, diag2_gen, hadamard_excited_basis):
        K = transition_kernel(diag2_gen, hadamard_excited_basis, 0.0, 1.0).matrix
        expected = abs((np.exp(-0.5) + np.exp(-1.0)) / 2) ** 2
        assert abs(K[1, 1] - expected) < 1e-12
        assert abs(expected - 0.23736876117622868) < 1e-14

    def test_columns_stochastic(self, rng):
        for _ in range(10):
            spec = random_model(rng, d=2)
            gen = build_model(spec)
            basis = random_basis(rng, 2)
            K = transition_kernel(gen, basis, 0.3, 1.4).matrix
            assert np.abs(K.sum(axis=0) - 1.0).max() < 1e-10
            assert K.min() > -1e-12

    def test_compatible_fast_path_matches_block_path(self, rng):
        spec = random_model(rng, d=3)
        gen = build_model(spec)
        z = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        q, r = np.linalg.qr(z)
        basis = MeasurementBasis.compatible_from_excited(q.T)
        K_fast = transition_kernel(gen, basis, 0.0, 0.9).matrix
        K_slow = np.zeros_like(K_fast)
        from madc.channel import BlockDensity, apply_channel
        A = survival_amplitude_flat(gen, 0.9)
        for y in range(4):
            rho = apply_channel(A, BlockDensity.from_state_vector(basis.vectors[y]))
            for x in range(4):
                K_slow[x, y] = rho.expectation(basis.vectors[x])
        assert np.abs(K_fast - K_slow).max() < 1e-12


# ---------------------------------------------------------------------------
# joint probabilities
# ---------------------------------------------------------------------------

class TestJointProbabilities:
    def test_single_time_reduces_to_one_time(self, rng):
        spec = random_model(rng, d=2)
        gen = build_model(spec)
        basis = random_basis(rng, 2)
        init = InitialState.excited([0.6, 0.8])
        for x in range(3):
            a = joint_prob_regression(gen, init, basis, [0.7], [x])
            b = one_time_prob(gen, init, basis, 0.7)[x]
            assert abs(a - b) < 1e-14

    def test_all_ground_collapses_to_first(self, diag2_gen):
        basis = MeasurementBasis.standard(2)
        init = InitialState.excited([0.6, 0.8])
        p_n = joint_prob_compatible(diag2_gen, init, basis,
                                    [0.4, 0.9, 1.7], [0, 0, 0])
        p_1 = one_time_prob(diag2_gen, init, basis, 0.4)[0]
        assert abs(p_n - p_1) < 1e-14

    def test_excited_after_ground_vanishes(self, diag2_gen):
        basis = MeasurementBasis.standard(2)
        init = InitialState.excited([1.0, 0.0])
        assert joint_prob_compatible(diag2_gen, init, basis,
                                     [0.5, 1.0, 1.5], [1, 0, 2]) == 0.0
        assert joint_prob_regression(diag2_gen, init, basis,
                                     [0.5, 1.0, 1.5], [1, 0, 2]) == 0.0

    def test_survival_then_decay(self, qubit_gen, excited_init_qubit):
        basis = MeasurementBasis.standard(1)
        p = joint_prob_compatible(qubit_gen, excited_init_qubit, basis,
                                  [1.0, 2.0], [1, 0])
        assert abs(p - np.exp(-1.0) * (1 - np.exp(-1.0))) < 1e-13

    def test_diagonal_product(self, diag2_gen):
        basis = MeasurementBasis.standard(2)
        init = InitialState.excited([1.0, 0.0])
        p = joint_prob_compatible(diag2_gen, init, basis, [0.5, 1.0], [1, 1])
        assert abs(p - np.exp(-1.0)) < 1e-13

    def test_regression_equals_compatible(self, rng):
        # higher-level agreement across random models, compatible bases
        for _ in range(100):
            spec = random_model(rng)
            gen = build_model(spec)
            d = spec.d
            z = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
            q, _ = np.linalg.qr(z)
            basis = MeasurementBasis.compatible_from_excited(q.T)
            psi = rng.normal(size=d) + 1j * rng.normal(size=d)
            psi /= np.linalg.norm(psi)
            init = InitialState.excited(psi)
            n = int(rng.integers(1, 5))
            times = np.sort(rng.uniform(0, 3, size=n))
            outcomes = rng.integers(0, d + 1, size=n)
            a = joint_prob_regression(gen, init, basis, times, outcomes)
            b = joint_prob_compatible(gen, init, basis, times, outcomes)
            assert abs(a - b) <= 1e-12

    def test_per_time_bases(self, rng, qubit_gen, excited_init_qubit,
                            hadamard_qubit_basis):
        b2 = MeasurementBasis.standard(1)
        p = joint_prob_regression(qubit_gen, excited_init_qubit,
                                  [hadamard_qubit_basis, b2], [0.5, 1.0], [0, 1])
        # manual: P1 then block-channel matrix element
        p1 = one_time_prob(qubit_gen, excited_init_qubit, hadamard_qubit_basis, 0.5)[0]
        from madc.channel import BlockDensity, apply_channel
        rho = apply_channel(survival_amplitude_flat(qubit_gen, 0.5),
                            BlockDensity.from_state_vector(hadamard_qubit_basis.vectors[0]))
        assert abs(p - p1 * rho.expectation(b2.vectors[1])) < 1e-14

    def test_rejects_decreasing_times(self, qubit_gen, excited_init_qubit):
        basis = MeasurementBasis.standard(1)
        with pytest.raises(ValueError, match="nondecreasing"):
            joint_prob_regression(qubit_gen, excited_init_qubit, basis,
                                  [1.0, 0.5], [1, 1])

    def test_basis_unitary_covariance(self, rng):
        # conjugating the model and rotating the basis leaves statistics fixed
        for _ in range(5):
            spec = random_model(rng, d=2)
            z = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
            V, _ = np.linalg.qr(z)
            spec_rot = ModelSpec(2, V @ spec.h_e @ V.conj().T,
                                 [V @ v for v in spec.decay_vectors],
                                 spec.rates, spec.spectral)
            q, _ = np.linalg.qr(rng.normal(size=(2, 2))
                                + 1j * rng.normal(size=(2, 2)))
            basis = MeasurementBasis.compatible_from_excited(q.T)
            # rows of the rotated excited basis are V @ (old rows)
            basis_rot = MeasurementBasis.compatible_from_excited(
                np.array([V @ row for row in q.T]))
            psi = rng.normal(size=2) + 1j * rng.normal(size=2)
            psi /= np.linalg.norm(psi)
            gen = build_model(spec)
            gen_rot = build_model(spec_rot)
            times = [0.4, 1.1, 1.9]
            for outcomes in ([1, 2, 0], [2, 2, 2], [0, 0, 0], [1, 1, 2]):
                a = joint_prob_regression(gen, InitialState.excited(psi),
                                          basis, times, outcomes)
                b = joint_prob_regression(gen_rot, InitialState.excited(V @ psi),
                                          basis_rot, times, outcomes)
                assert abs(a - b) < 1e-12


# ---------------------------------------------------------------------------
# full_distribution / conditional / markov
# ---------------------------------------------------------------------------

class TestDistribution:
    def test_matches_one_time(self, qubit_gen, excited_init_qubit,
                              hadamard_qubit_basis):
        dist = full_distribution(qubit_gen, excited_init_qubit,
                                 hadamard_qubit_basis, [0.8])
        expected = one_time_prob(qubit_gen, excited_init_qubit,
                                 hadamard_qubit_basis, 0.8)
        assert np.abs(dist.table - expected).max() < 1e-14

    def test_hand_assembled_two_time_table(self, diag2_gen):
        basis = MeasurementBasis.standard(2)
        init = InitialState.excited([1.0, 0.0])
        t1, t2 = 0.5, 1.25
        dist = full_distribution(diag2_gen, init, basis, [t1, t2])
        # closed product assembled by hand for the diagonal model
        a1 = np.exp(-t1 / 2)
        a21 = np.exp(-(t2 - t1) / 2)
        expected = np.zeros((3, 3))
        expected[1, 1] = a1**2 * a21**2
        expected[1, 0] = a1**2 * (1 - a21**2)
        expected[0, 0] = 1 - a1**2
        assert np.abs(dist.table - expected).max() < 1e-13

    def test_normalization_random_models(self, rng):
        for _ in range(10):
            spec = random_model(rng, d=2)
            gen = build_model(spec)
            basis = random_basis(rng, 2)
            init = InitialState.excited([1.0, 0.0])
            dist = full_distribution(gen, init, basis, [0.3, 0.9, 1.4])
            assert abs(dist.total() - 1.0) < 1e-10

    def test_budget_enforced(self, qubit_gen, excited_init_qubit):
        basis = MeasurementBasis.standard(1)
        with pytest.raises(BudgetExceededError):
            full_distribution(qubit_gen, excited_init_qubit, basis,
                              np.linspace(0.1, 2, 30), budget=1e4)

    def test_conditional_ratio(self, diag2_gen):
        basis = MeasurementBasis.standard(2)
        init = InitialState.excited([0.6, 0.8])
        dist = full_distribution(diag2_gen, init, basis, [0.5, 1.0])
        cond = conditional_from_joint(dist, (1,))
        marg = dist.table[1].sum()
        assert np.abs(cond - dist.table[1] / marg).max() < 1e-14

    def test_conditional_after_ground_is_ground(self, diag2_gen):
        basis = MeasurementBasis.standard(2)
        init = InitialState.excited([0.6, 0.8])
        dist = full_distribution(diag2_gen, init, basis, [0.5, 1.0])
        cond = conditional_from_joint(dist, (0,))
        assert abs(cond[0] - 1.0) < 1e-12
        assert cond[1:].max() < 1e-12

    def test_conditional_zero_prefix_rejected(self, diag2_gen):
        basis = MeasurementBasis.standard(2)
        init = InitialState.excited([1.0, 0.0])  # channel 2 never fires
        dist = full_distribution(diag2_gen, init, basis, [0.5, 1.0])
        with pytest.raises(ValueError, match="probability"):
            conditional_from_joint(dist, (2,))

    def test_markov_product_form(self, rng):
        spec = random_model(rng, d=2)
        gen = build_model(spec)
        basis = random_basis(rng, 2)
        init = InitialState.excited([1.0, 0.0])
        dist = full_distribution(gen, init, basis, [0.4, 0.9, 1.3])
        assert verify_markov(dist) <= 1e-12

    def test_markov_counterexample(self):
        # X(t3) = X(t1) deterministic, X(t2) fair and independent
        table = np.zeros((2, 2, 2))
        for x1 in (0, 1):
            for x2 in (0, 1):
                table[x1, x2, x1] = 0.25
        dist = JointDistribution((0.0, 1.0, 2.0), table)
        assert abs(verify_markov(dist) - 0.5) < 1e-14

    def test_markov_requires_three_times(self, diag2_gen):
        basis = MeasurementBasis.standard(2)
        init = InitialState.excited([1.0, 0.0])
        dist = full_distribution(diag2_gen, init, basis, [0.5, 1.0])
        with pytest.raises(ValueError):
            verify_markov(dist)

    def test_irreversibility_in_tables(self, rng):
        spec = random_model(rng, d=2)
        gen = build_model(spec)
        basis = MeasurementBasis.standard(2)
        init = InitialState.excited([0.6, 0.8j])
        dist = full_distribution(gen, init, basis, [0.3, 0.8, 1.2])
        for idx, p in dist.items():
            seen_ground = False
            for x in idx:
                if x == 0:
                    seen_ground = True
                elif seen_ground:
                    assert p == 0.0
