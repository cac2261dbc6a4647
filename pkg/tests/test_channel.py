import numpy as np
import pytest

from conftest import lorentzian_amplitude, lorentzian_qubit, random_model
from madc.channel import (BlockDensity, apply_channel, apply_generator,
                          divisibility_report, is_completely_positive,
                          time_local_generator)
from madc.model import (SurvivalAmplitude, build_model, memory_kernel,
                        solve_volterra, survival_amplitude_flat)


def random_block_density(rng, d):
    z = rng.normal(size=(d + 1, d + 1)) + 1j * rng.normal(size=(d + 1, d + 1))
    rho = z @ z.conj().T
    rho /= np.trace(rho).real
    return BlockDensity(rho[:d, :d], rho[:d, d], rho[d, d].real)


# ---------------------------------------------------------------------------
# apply_channel
# ---------------------------------------------------------------------------

class TestApplyChannel:
    def test_identity_map(self, rng):
        rho = random_block_density(rng, 3)
        out = apply_channel(np.eye(3), rho)
        assert np.allclose(out.rho_e, rho.rho_e)
        assert np.allclose(out.w, rho.w)
        assert abs(out.rho_g - rho.rho_g) < 1e-14

    def test_qubit_amplitude_damping_form(self):
        a = 0.6 + 0.3j
        rho = BlockDensity([[0.7]], [0.2 - 0.1j], 0.3)
        out = apply_channel(np.array([[a]]), rho)
        assert abs(out.rho_e[0, 0] - abs(a) ** 2 * 0.7) < 1e-14
        assert abs(out.w[0] - a * (0.2 - 0.1j)) < 1e-14
        assert abs(out.rho_g - (0.3 + (1 - abs(a) ** 2) * 0.7)) < 1e-14

    def test_ground_state_fixed_point(self, rng):
        rho = BlockDensity.ground(2)
        A = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        out = apply_channel(0.3 * A, rho)
        assert np.abs(out.assemble() - rho.assemble()).max() < 1e-14

    def test_trace_preserved_exactly(self, rng):
        for _ in range(10):
            rho = random_block_density(rng, 2)
            A = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
            out = apply_channel(A, rho)
            assert abs(out.trace() - rho.trace()) <= 1e-14


# ---------------------------------------------------------------------------
# is_completely_positive
# ---------------------------------------------------------------------------

class TestCompletePositivity:
    def test_identity(self):
        ok, norm = is_completely_positive(np.eye(3))
        assert ok and abs(norm - 1.0) < 1e-14

    def test_scaled_identity(self):
        ok, norm = is_completely_positive(1.2 * np.eye(2))
        assert not ok and abs(norm - 1.2) < 1e-14

    def test_flat_amplitudes_always_cp(self, rng):
        for _ in range(10):
            gen = build_model(random_model(rng))
            for t in (0.2, 1.0, 3.7):
                ok, _ = is_completely_positive(survival_amplitude_flat(gen, t))
                assert ok

    def test_choi_criterion_agreement(self, rng):
        # CP of the block channel <=> PSD of its Choi matrix
        from madc.classicality import channel_superoperator
        for _ in range(100):
            d = int(rng.integers(1, 4))
            A = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
            A *= rng.uniform(0.2, 1.4) / max(np.linalg.norm(A, 2), 1e-12)
            cp, _ = is_completely_positive(A, tol=1e-9)
            k = d + 1
            S = channel_superoperator(A)
            # column-stacking Choi: C[(i,a),(j,b)] = S[(i,j),(a,b)]
            C = S.reshape(k, k, k, k, order="F").transpose(0, 2, 1, 3).reshape(k * k, k * k)
            choi_psd = np.linalg.eigvalsh((C + C.conj().T) / 2).min() >= -1e-9
            assert cp == choi_psd


# ---------------------------------------------------------------------------
# time_local_generator / apply_generator
# ---------------------------------------------------------------------------

class TestGenerator:
    def test_flat_qubit_constant_generator(self, qubit_gen):
        traj = SurvivalAmplitude.from_flat(qubit_gen, np.linspace(0, 2, 8001))
        dec = time_local_generator(traj, 1.0)
        assert np.abs(dec.l_op - (-qubit_gen.k_op)).max() < 1e-8
        assert np.abs(dec.h_eff).max() < 1e-8
        assert np.abs(dec.gamma_t - [[1.0]]).max() < 1e-8

    def test_flat_diag_gamma_recovered(self, diag2_gen):
        traj = SurvivalAmplitude.from_flat(diag2_gen, np.linspace(0, 2, 4001))
        for t in (0.5, 1.0, 1.5):
            dec = time_local_generator(traj, t)
            assert np.abs(dec.gamma_t - diag2_gen.gamma_op).max() < 1e-7

    def test_lorentzian_rate_sign_change(self):
        # strong coupling: decay rate -2 d/dt ln|a| turns negative after the zero
        gamma0, lam = 2.0, 1.0
        spec = lorentzian_qubit(gamma0, lam)
        grid = np.linspace(0, 5, 5001)
        traj = solve_volterra(spec, memory_kernel(spec), grid)
        exact = lambda t: lorentzian_amplitude(gamma0, lam, [t])[0]

        def analytic_rate(t, h=1e-6):
            return -2 * (np.log(abs(exact(t + h))) - np.log(abs(exact(t - h)))) / (2 * h)

        for t in (1.0, 3.0):
            dec = time_local_generator(traj, t)
            assert abs(dec.gamma_t[0, 0].real - analytic_rate(t)) < 1e-3
        assert time_local_generator(traj, 1.0).min_eig_gamma > 0
        assert time_local_generator(traj, 3.0).min_eig_gamma < 0

    def test_boundary_warns(self, qubit_gen):
        traj = SurvivalAmplitude.from_flat(qubit_gen, np.linspace(0, 1, 101))
        with pytest.warns(UserWarning, match="one-sided"):
            time_local_generator(traj, 0.0)

    def test_apply_generator_ground_zero(self, diag2_gen):
        traj = SurvivalAmplitude.from_flat(diag2_gen, np.linspace(0, 1, 1001))
        dec = time_local_generator(traj, 0.5)
        out = apply_generator(dec, BlockDensity.ground(2))
        assert np.abs(out.assemble()).max() < 1e-12

    def test_population_rate_equation(self, qubit_gen):
        traj = SurvivalAmplitude.from_flat(qubit_gen, np.linspace(0, 1, 2001))
        dec = time_local_generator(traj, 0.5)
        rho = BlockDensity([[1.0]], [0.0], 0.0)
        out = apply_generator(dec, rho)
        assert abs(out.rho_e[0, 0] - (-1.0)) < 1e-7
        assert abs(out.rho_g - 1.0) < 1e-7

    def test_tangent_traceless(self, rng, diag2_gen):
        traj = SurvivalAmplitude.from_flat(diag2_gen, np.linspace(0, 1, 1001))
        dec = time_local_generator(traj, 0.5)
        for _ in range(5):
            rho = random_block_density(rng, 2)
            out = apply_generator(dec, rho)
            assert abs(np.trace(out.rho_e).real + out.rho_g) < 1e-12

    def test_gkls_form_cross_check(self, rng):
        # flat generator equals the explicit damping form
        # -i[h,rho] + sum_j gamma_j (<e_j|rho|e_j> |g><g| - {P_j, rho}/2)
        spec = random_model(rng, d=3)
        gen = build_model(spec)
        traj = SurvivalAmplitude.from_flat(gen, np.linspace(0, 1, 10001))
        dec = time_local_generator(traj, 0.5)
        d = spec.d
        h_emb = np.zeros((d + 1, d + 1), dtype=complex)
        h_emb[:d, :d] = spec.h_e
        for _ in range(50):
            rho = random_block_density(rng, d)
            M = rho.assemble()
            expected = -1j * (h_emb @ M - M @ h_emb)
            for g, v in zip(spec.rates, spec.decay_vectors):
                P = np.zeros((d + 1, d + 1), dtype=complex)
                P[:d, :d] = np.outer(v, v.conj())
                gain = np.zeros_like(M)
                gain[d, d] = v.conj() @ M[:d, :d] @ v
                expected += g * (gain - 0.5 * (P @ M + M @ P))
            got = apply_generator(dec, rho).assemble()
            assert np.abs(got - expected).max() < 1e-7


# ---------------------------------------------------------------------------
# divisibility_report
# ---------------------------------------------------------------------------

class TestDivisibility:
    def test_flat_always_divisible(self, rng):
        for _ in range(5):
            gen = build_model(random_model(rng, d=2))
            traj = SurvivalAmplitude.from_flat(gen, np.linspace(0, 3, 601))
            rep = divisibility_report(traj, grid=np.linspace(0, 3, 13))
            assert rep.cp_divisible and rep.p_divisible
            assert rep.max_opnorm <= 1 + 1e-9

    def test_weak_coupling_divisible(self):
        spec = lorentzian_qubit(0.25, 1.0)
        grid = np.linspace(0, 5, 5001)
        traj = solve_volterra(spec, memory_kernel(spec), grid)
        rep = divisibility_report(traj, grid=np.linspace(0, 5, 26))
        assert rep.cp_divisible

    def test_strong_coupling_not_divisible(self):
        spec = lorentzian_qubit(2.0, 1.0)
        grid = np.linspace(0, 5, 5001)
        traj = solve_volterra(spec, memory_kernel(spec), grid)
        rep = divisibility_report(traj, grid=np.linspace(0, 5, 26))
        assert not rep.cp_divisible and not rep.p_divisible
        assert rep.min_eig_gamma < -1e-3
        assert rep.max_opnorm > 1 + 1e-3

    def test_verdicts_agree_everywhere(self):
        for gamma0 in (0.25, 0.8, 2.0, 3.0):
            spec = lorentzian_qubit(gamma0, 1.0)
            grid = np.linspace(0, 5, 2501)
            traj = solve_volterra(spec, memory_kernel(spec), grid)
            rep = divisibility_report(traj, grid=np.linspace(0, 5, 26))
            assert rep.cp_divisible == rep.p_divisible

    def test_decisive_disagreement_raises(self):
        # a jump hidden between the sampled grid points: the local decay
        # rate looks fine everywhere while a coarse propagator expands
        from madc.errors import ConsistencyError
        times = np.linspace(0, 1, 101)
        mats = np.exp(-times)[:, None, None].astype(complex)
        mats[55:] *= 1.2
        traj = SurvivalAmplitude(times, mats)
        with pytest.raises(ConsistencyError, match="disagree"):
            divisibility_report(traj, grid=times[::10], tol_gamma=1e-6)

    def test_adjacent_only_mode(self, diag2_gen):
        traj = SurvivalAmplitude.from_flat(diag2_gen, np.linspace(0, 2, 201))
        grid = np.linspace(0, 2, 9)
        full = divisibility_report(traj, grid=grid)
        adj = divisibility_report(traj, grid=grid, adjacent_only=True)
        assert len(adj.pairs) == len(grid) - 1
        assert len(full.pairs) == len(grid) * (len(grid) + 1) // 2
        assert adj.cp_divisible == full.cp_divisible

    def test_generator_product_integration(self):
        # midpoint time-ordered product of exp(h L) rebuilds the propagator
        spec = lorentzian_qubit(0.5, 1.0)
        h = 1e-3
        grid = np.linspace(0, 2, 2001)
        traj = solve_volterra(spec, memory_kernel(spec), grid)
        s_idx, t_idx = 500, 1500
        prod = np.eye(1, dtype=complex)
        for k in range(s_idx, t_idx, 2):
            L = time_local_generator(traj, grid[k + 1], _silent=True).l_op
            prod = (np.eye(1) + 2 * h * L + (2 * h * L) @ (2 * h * L) / 2
                    + (2 * h * L) @ (2 * h * L) @ (2 * h * L) / 6) @ prod
        expected = traj.at(grid[t_idx]) @ np.linalg.inv(traj.at(grid[s_idx]))
        assert np.abs(prod - expected).max() < 5e-5
