"""Brute-force cross-check: a discretized bath on a truncated Fock space.

Each decay channel is replaced by M boson modes on a midpoint frequency
grid over [-Omega, Omega] with couplings g = f(omega) sqrt(d_omega); the
closed system+bath Hamiltonian is built on the excitation-number-graded
Fock space capped at N_max total excitations and evolved unitarily.
Projective measurements on the system are applied exactly, so multitime
statistics can be reproduced with no reference to any closed form: the
comparison against the model's analytic path is a convergence statement
in (M, Omega).

Basis layout inside the grade-N block: first the ground-state sector
tensored with all N-photon configurations (sorted tuples of mode indices,
lexicographic), then the excited levels a = 0..d-1 each tensored with the
(N-1)-photon configurations.  Ground components of grade p and excited
components of grade p+1 therefore pair positionally over the shared
p-photon configurations, which is what the measurement routines exploit.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations_with_replacement
from math import comb
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

from .channel import BlockDensity, apply_channel
from .errors import BudgetExceededError, LeakageError, NumericalError, SupportError
from .model import (EffectiveGenerator, FlatSpectral, ModelSpec, build_model,
                    emitted_wavefunction_flat, survival_amplitude_flat)
from .statistics import InitialState, JointDistribution, MeasurementBasis

DENSE_CUTOFF = 1500
LEAK_TOL = 1e-6
NORM_DRIFT_TOL = 1e-10


@dataclass
class DiscretizedBath:
    """Midpoint-discretized boson channels: omega_k = -Omega + (k+1/2) d_omega."""
    m: int
    M: int
    Omega: float
    omegas: np.ndarray
    d_omega: float
    g: np.ndarray          # (m, M) couplings f_j(omega_k) sqrt(d_omega)

    @classmethod
    def from_spec(cls, spec: ModelSpec, M: int, Omega: float) -> "DiscretizedBath":
        d_omega = 2.0 * Omega / M
        omegas = -Omega + (np.arange(M) + 0.5) * d_omega
        m = spec.n_channels
        g = np.empty((m, M))
        for j in range(m):
            if isinstance(spec.spectral, FlatSpectral):
                J = np.full(M, spec.rates[j] / (2 * np.pi))
            else:
                J = spec.spectral.density(j, omegas)
            g[j] = np.sqrt(np.clip(J, 0.0, None) * d_omega)
        return cls(m, M, Omega, omegas, d_omega, g)

    @property
    def n_modes(self) -> int:
        return self.m * self.M

    def mode_frequencies(self) -> np.ndarray:
        return np.tile(self.omegas, self.m)

    def flat_couplings(self) -> np.ndarray:
        return self.g.reshape(-1)


class FockSpace:
    """Excitation-graded truncated Fock space; blocks enumerated lazily."""

    def __init__(self, bath: DiscretizedBath, d: int, n_max: int):
        if n_max < 1:
            raise ValueError("need n_max >= 1")
        self.bath = bath
        self.d = d
        self.n_max = n_max
        self._configs: dict[int, list] = {}
        self._index: dict[int, dict] = {}

    def config_count(self, p: int) -> int:
        if p < 0:
            return 0
        return comb(self.bath.n_modes + p - 1, p)

    def block_size(self, N: int) -> int:
        return self.config_count(N) + self.d * self.config_count(N - 1)

    @property
    def dim(self) -> int:
        return sum(self.block_size(N) for N in range(self.n_max + 1))

    def configs(self, p: int) -> list:
        if p not in self._configs:
            self._configs[p] = list(combinations_with_replacement(
                range(self.bath.n_modes), p))
        return self._configs[p]

    def config_index(self, p: int) -> dict:
        if p not in self._index:
            self._index[p] = {c: i for i, c in enumerate(self.configs(p))}
        return self._index[p]

    def excited_slice(self, N: int, a: int) -> slice:
        """Slice of the excited-level-a sector inside the grade-N block."""
        lo = self.config_count(N) + a * self.config_count(N - 1)
        return slice(lo, lo + self.config_count(N - 1))


class OracleState:
    """Amplitude vector over the graded Fock basis, stored per block."""

    def __init__(self, fock: FockSpace):
        self.fock = fock
        self.blocks = {N: np.zeros(fock.block_size(N), dtype=complex)
                       for N in range(fock.n_max + 1)}

    @classmethod
    def from_system_state(cls, fock: FockSpace, init: InitialState) -> "OracleState":
        s = cls(fock)
        s.blocks[0][0] = init.alpha
        for a in range(fock.d):
            s.blocks[1][fock.excited_slice(1, a)] = init.psi_e[a]
        return s

    def copy(self) -> "OracleState":
        out = OracleState(self.fock)
        for N, v in self.blocks.items():
            out.blocks[N] = v.copy()
        return out

    def norm2(self) -> float:
        return float(sum(np.vdot(v, v).real for v in self.blocks.values()))

    def scale(self, factor: float) -> "OracleState":
        for v in self.blocks.values():
            v *= factor
        return self

    def top_block_norm2(self) -> float:
        v = self.blocks[self.fock.n_max]
        return float(np.vdot(v, v).real)

    def as_global_vector(self) -> np.ndarray:
        return np.concatenate([self.blocks[N] for N in range(self.fock.n_max + 1)])


class OracleHamiltonian:
    """Graded Hamiltonian; one sparse matrix per excitation block."""

    def __init__(self, spec: ModelSpec, bath: DiscretizedBath, fock: FockSpace):
        self.spec = spec
        self.bath = bath
        self.fock = fock
        self._blocks: dict[int, sp.csr_matrix] = {}
        self._eigs: dict[int, tuple] = {}

    def block(self, N: int) -> sp.csr_matrix:
        if N not in self._blocks:
            self._blocks[N] = self._build_block(N)
        return self._blocks[N]

    def _build_block(self, N: int) -> sp.csr_matrix:
        f = self.fock
        if N == 0:
            return sp.csr_matrix((1, 1), dtype=complex)
        freqs = self.bath.mode_frequencies()
        couplings = self.bath.flat_couplings()
        cfgN = f.configs(N)
        cfgN1 = f.configs(N - 1)
        nN, nN1 = len(cfgN), len(cfgN1)
        d = f.d
        bath_en_N = np.array([sum(freqs[q] for q in c) for c in cfgN])
        bath_en_N1 = np.array([sum(freqs[q] for q in c) for c in cfgN1])
        diag = np.concatenate([bath_en_N] + [bath_en_N1] * d).astype(complex)
        # excited-sector energies h_e (a-major layout -> kron(h_e, I))
        exc = sp.kron(sp.csr_matrix(self.spec.h_e), sp.eye(nN1, format="csr"))
        rows, cols, vals = [], [], []
        index_N = f.config_index(N)
        M = self.bath.M
        for i, c in enumerate(cfgN1):
            for q in range(self.bath.n_modes):
                c2 = tuple(sorted(c + (q,)))
                i2 = index_N[c2]
                mult = c2.count(q)
                base = couplings[q] * np.sqrt(mult)
                if base == 0.0:
                    continue
                ej = self.spec.decay_vectors[q // M]
                for a in range(d):
                    amp = base * np.conj(ej[a])
                    if amp == 0.0:
                        continue
                    rows.append(i2)
                    cols.append(nN + a * nN1 + i)
                    vals.append(amp)
        coup = sp.coo_matrix((vals, (rows, cols)),
                             shape=(f.block_size(N), f.block_size(N)), dtype=complex)
        H = sp.diags(diag, format="csr")
        H = H + sp.block_diag(
            [sp.csr_matrix((nN, nN), dtype=complex), exc], format="csr")
        H = H + coup.tocsr() + coup.conj().T.tocsr()
        return H.tocsr()

    def eig(self, N: int):
        if N not in self._eigs:
            ev, U = np.linalg.eigh(self.block(N).toarray())
            self._eigs[N] = (ev, U)
        return self._eigs[N]

    @property
    def matrix(self) -> sp.csr_matrix:
        """Full Hamiltonian in the graded global ordering (small spaces)."""
        return sp.block_diag(
            [self.block(N) for N in range(self.fock.n_max + 1)], format="csr")


def build_hamiltonian(spec: ModelSpec, bath: DiscretizedBath, n_max: int,
                      max_dim: int = 20000) -> OracleHamiltonian:
    """Assemble the graded Hamiltonian, rejecting oversized spaces."""
    fock = FockSpace(bath, spec.d, n_max)
    if fock.dim > max_dim:
        raise BudgetExceededError(
            f"Fock dimension {fock.dim} exceeds budget {max_dim}")
    return OracleHamiltonian(spec, bath, fock)


def evolve(H: OracleHamiltonian, state: OracleState, tau: float,
           dense_cutoff: int = DENSE_CUTOFF) -> OracleState:
    """exp(-i tau H) applied blockwise; small blocks use a cached dense
    eigendecomposition, large ones Krylov-style sparse action."""
    if tau < 0:
        raise ValueError("time must be nonnegative")
    out = state.copy()
    if tau == 0.0:
        return out
    before = state.norm2()
    for N, v in state.blocks.items():
        if np.vdot(v, v).real <= 1e-32 * max(before, 1e-300):
            continue
        if H.fock.block_size(N) <= dense_cutoff:
            ev, U = H.eig(N)
            out.blocks[N] = U @ (np.exp(-1j * tau * ev) * (U.conj().T @ v))
        else:
            out.blocks[N] = expm_multiply(-1j * tau * H.block(N), v)
    after = out.norm2()
    if abs(after - before) > NORM_DRIFT_TOL * max(1.0, before):
        raise NumericalError(f"evolution norm drift {after - before:.3e}")
    return out


def _project(state: OracleState, x_vec: np.ndarray, collapse: bool = True,
             leak_tol: float = LEAK_TOL):
    """Apply |x><x| (x) 1_bath without renormalizing.

    Returns (weight, projected state or None).  Placing an excited
    component on top of N_max-photon configurations would leave the space;
    such weight is dropped if negligible and raises LeakageError otherwise.
    """
    f = state.fock
    xt, mu = x_vec[:-1], x_vec[-1]
    xt_norm2 = float(np.vdot(xt, xt).real)
    new = OracleState(f) if collapse else None
    weight = 0.0
    total = state.norm2()
    for p in range(f.n_max + 1):
        cnt = f.config_count(p)
        c = np.conj(mu) * state.blocks[p][:cnt]
        if p + 1 <= f.n_max:
            for a in range(f.d):
                c = c + np.conj(xt[a]) * state.blocks[p + 1][f.excited_slice(p + 1, a)]
        w_p = float(np.vdot(c, c).real)
        weight += w_p
        if not collapse:
            continue
        if p == f.n_max and xt_norm2 > 0 and w_p * xt_norm2 > 0:
            if w_p * xt_norm2 > leak_tol * max(total, 1e-300):
                raise LeakageError(
                    f"projection needs excitation grade {f.n_max + 1} "
                    f"(weight {w_p * xt_norm2:.3e}); increase N_max")
            new.blocks[p][:cnt] += mu * c
            continue
        new.blocks[p][:cnt] += mu * c
        if p + 1 <= f.n_max:
            for a in range(f.d):
                new.blocks[p + 1][f.excited_slice(p + 1, a)] += xt[a] * c
    return weight, new


def measure(state: OracleState, basis: MeasurementBasis, outcome: int):
    """Projective measurement on a normalized state.

    Returns (probability, renormalized collapsed state); a zero-probability
    outcome returns (0.0, None).
    """
    weight, new = _project(state, basis.vectors[outcome], collapse=True)
    if weight < 1e-14:
        return 0.0, None
    return weight, new.scale(1.0 / np.sqrt(weight))


def measure_probability(state: OracleState, basis: MeasurementBasis,
                        outcome: int) -> float:
    """Projection weight only; exact even when the collapsed state would
    exceed the excitation cap (no state is materialized)."""
    weight, _ = _project(state, basis.vectors[outcome], collapse=False)
    return weight


def _as_basis_list(bases, n: int):
    if isinstance(bases, MeasurementBasis):
        return [bases] * n
    bases = list(bases)
    if len(bases) != n:
        raise ValueError("need one basis per measurement time")
    return bases


def joint_prob_oracle(spec: ModelSpec, bath: DiscretizedBath, bases,
                      init: InitialState, times: Sequence[float],
                      outcomes: Sequence[int], n_max: int,
                      max_dim: int = 20000,
                      dense_cutoff: int = DENSE_CUTOFF) -> float:
    """Joint probability of one outcome sequence by unitary brute force.

    Alternates exact evolution and projection; the final squared norm is
    the probability.  The last projection is evaluated weight-only, so
    sequences in arbitrary bases need n_max >= n (and n_max >= n+1 only
    when collapsed final states are required).  Insufficient n_max is
    detected by leakage and raised.
    """
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0) or (len(times) and times[0] < 0):
        raise ValueError("times must be nondecreasing and nonnegative")
    if len(times) != len(outcomes):
        raise ValueError("one outcome per time required")
    blist = _as_basis_list(bases, len(times))
    H = build_hamiltonian(spec, bath, n_max, max_dim=max_dim)
    state = OracleState.from_system_state(H.fock, init)
    t_prev = 0.0
    n = len(times)
    for k in range(n):
        state = evolve(H, state, times[k] - t_prev, dense_cutoff=dense_cutoff)
        if k == n - 1:
            return measure_probability(state, blist[k], outcomes[k])
        weight, state = _project(state, blist[k].vectors[outcomes[k]])
        if weight < 1e-14:
            return 0.0
        t_prev = times[k]
    return state.norm2()


def full_distribution_oracle(spec: ModelSpec, bath: DiscretizedBath, bases,
                             init: InitialState, times: Sequence[float],
                             n_max: int, max_dim: int = 20000,
                             dense_cutoff: int = DENSE_CUTOFF) -> JointDistribution:
    """All outcome sequences at once, sharing evolutions along the tree."""
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0) or times[0] < 0:
        raise ValueError("times must be nondecreasing and nonnegative")
    n = len(times)
    blist = _as_basis_list(bases, n)
    k = blist[0].d + 1
    H = build_hamiltonian(spec, bath, n_max, max_dim=max_dim)
    table = np.zeros((k,) * n)

    def descend(state, level, t_prev, prefix):
        state = evolve(H, state, times[level] - t_prev, dense_cutoff=dense_cutoff)
        for x in range(k):
            if level == n - 1:
                table[prefix + (x,)] = measure_probability(state, blist[level], x)
            else:
                w, branch = _project(state, blist[level].vectors[x])
                if w < 1e-14:
                    continue
                descend(branch, level + 1, times[level], prefix + (x,))

    descend(OracleState.from_system_state(H.fock, init), 0, 0.0, ())
    return JointDistribution(tuple(times), table)


def reduced_system_state(state: OracleState) -> np.ndarray:
    """Partial trace over the bath; (d+1)x(d+1) with (excited..., ground)."""
    f = state.fock
    d = f.d
    rho = np.zeros((d + 1, d + 1), dtype=complex)
    for p in range(f.n_max + 1):
        cnt = f.config_count(p)
        ground = state.blocks[p][:cnt]
        rho[d, d] += np.vdot(ground, ground)
        if p + 1 <= f.n_max:
            exc = [state.blocks[p + 1][f.excited_slice(p + 1, a)] for a in range(d)]
            for a in range(d):
                rho[a, d] += np.vdot(ground, exc[a])
                for b in range(d):
                    rho[a, b] += np.vdot(exc[b], exc[a])
            for a in range(d):
                rho[d, a] = np.conj(rho[a, d])
    return rho


def _position_density(bath: DiscretizedBath, values: np.ndarray):
    """DFT of per-channel frequency samples onto the dual position grid."""
    M = bath.M
    L = 2 * np.pi / bath.d_omega
    x = (np.arange(M) - M // 2) * (L / M)
    phase = np.exp(1j * np.outer(x, bath.omegas))
    dens = np.zeros(M)
    for j in range(values.shape[0]):
        dens += np.abs(phase @ values[j] * bath.d_omega) ** 2
    return x, dens


def support_check(spec: ModelSpec, init, t: float,
                  bath: DiscretizedBath) -> float:
    """Fraction of emitted-wavepacket norm outside the window [0, t].

    The frequency samples of the emitted amplitudes are transformed onto
    the dual position grid of length 2 pi / d_omega.
    """
    if not isinstance(spec.spectral, FlatSpectral):
        raise ValueError("support check applies to the flat spectral kind")
    psi_e = init.psi_e if isinstance(init, InitialState) else np.asarray(init, dtype=complex)
    gen = build_model(spec)
    wf = emitted_wavefunction_flat(gen, psi_e, t, bath.omegas)
    x, dens = _position_density(bath, wf.values)
    total = dens.sum()
    if total <= 0:
        return 0.0
    outside = dens[(x < -1e-12) | (x > t + 1e-12)].sum()
    return float(outside / total)


def time_shift_check(spec: ModelSpec, bath: DiscretizedBath, xi: np.ndarray,
                     tau: float, max_negative_frac: float = 0.05,
                     dense_cutoff: int = DENSE_CUTOFF) -> float:
    """Deviation between evolving a one-photon packet and phase-shifting it.

    Valid for packets supported at nonnegative positions; a packet with
    more than ``max_negative_frac`` of its norm at negative positions is
    rejected (the free-propagation identity does not apply there).
    """
    if tau < 0:
        raise ValueError("time must be nonnegative")
    xi = np.atleast_2d(np.asarray(xi, dtype=complex))
    if xi.shape != (bath.m, bath.M):
        raise ValueError(f"need packet samples of shape {(bath.m, bath.M)}")
    x, dens = _position_density(bath, xi)
    total = dens.sum()
    if total <= 0:
        raise ValueError("empty wavepacket")
    neg = dens[x < -1e-12].sum() / total
    if neg > max_negative_frac:
        raise SupportError(
            f"{neg:.1%} of the packet norm sits at negative positions")
    amp = (xi * np.sqrt(bath.d_omega)).reshape(-1)
    amp = amp / np.linalg.norm(amp)
    H = build_hamiltonian(spec, bath, 1, max_dim=10**7)
    state = OracleState(H.fock)
    state.blocks[1][:bath.n_modes] = amp
    evolved = evolve(H, state, tau, dense_cutoff=dense_cutoff)
    target = np.exp(-1j * bath.mode_frequencies() * tau) * amp
    dev2 = np.linalg.norm(evolved.blocks[1][:bath.n_modes] - target) ** 2
    dev2 += np.sum(np.abs(evolved.blocks[1][bath.n_modes:]) ** 2)
    dev2 += np.sum(np.abs(evolved.blocks[0]) ** 2)
    return float(np.sqrt(dev2))


@dataclass
class FactorizationResult:
    a15_relative: float
    factorization_relative: float

    @property
    def max_relative(self) -> float:
        return max(self.a15_relative, self.factorization_relative)


def _emission_packet(gen: EffectiveGenerator, vec: np.ndarray, t: float,
                     bath: DiscretizedBath) -> np.ndarray:
    """Emitted amplitudes (m, M) for a decay starting from ``vec``."""
    return emitted_wavefunction_flat(gen, vec, t, bath.omegas).values


def factorization_check(spec: ModelSpec, bath: DiscretizedBath,
                        basis: MeasurementBasis, times: Sequence[float],
                        psi_e: np.ndarray | None = None) -> FactorizationResult:
    """Two-measurement norm bookkeeping on the discretized bath.

    Checks (a) the cross inner product between the time-shifted first
    emission packet and the packet emitted from each excited basis
    component (zero in the continuum), and (b) the factorization of the
    two-photon norm against the product of single-packet norms, with the
    two-photon state constructed explicitly in the mode basis.
    """
    if not isinstance(spec.spectral, FlatSpectral):
        raise ValueError("factorization check applies to the flat spectral kind")
    t1, t2 = float(times[0]), float(times[1])
    if not 0 <= t1 <= t2:
        raise ValueError("need 0 <= t1 <= t2")
    gen = build_model(spec)
    if psi_e is None:
        psi_e = gen.decay_vectors[0]
    dt2 = t2 - t1
    shift = np.exp(-1j * bath.mode_frequencies() * dt2)
    xi = _emission_packet(gen, psi_e, t1, bath)              # (m, M)
    f_all = (xi * np.sqrt(bath.d_omega)).reshape(-1) * shift
    a15 = 0.0
    fact = 0.0
    for alpha in range(basis.d + 1):
        xt = basis.x_tilde[alpha]
        if np.linalg.norm(xt) <= 1e-12:
            continue
        eta = _emission_packet(gen, xt, dt2, bath)
        g_all = (eta * np.sqrt(bath.d_omega)).reshape(-1)
        g_norm2 = float(np.vdot(g_all, g_all).real)
        for j in range(bath.m):
            f = np.zeros_like(f_all)
            block = slice(j * bath.M, (j + 1) * bath.M)
            f[block] = f_all[block]
            f_norm2 = float(np.vdot(f, f).real)
            if f_norm2 * g_norm2 <= 1e-300:
                continue
            for kch in range(bath.m):
                blk = slice(kch * bath.M, (kch + 1) * bath.M)
                ip = abs(np.vdot(f[blk], g_all[blk]))
                gn = np.linalg.norm(g_all[blk])
                if gn > 1e-150:
                    a15 = max(a15, ip / (np.sqrt(f_norm2) * gn))
            S = np.outer(f, g_all)
            sym = S + S.T
            lhs = 0.5 * float(np.sum(np.abs(sym) ** 2))
            rhs = f_norm2 * g_norm2
            fact = max(fact, abs(lhs - rhs) / rhs)
    return FactorizationResult(a15, fact)


def history_independence_check(spec: ModelSpec, bath: DiscretizedBath,
                               basis: MeasurementBasis, init: InitialState,
                               times: Sequence[float], outcomes: Sequence[int],
                               tau: float, n_max: int | None = None,
                               max_dim: int = 200000,
                               dense_cutoff: int = DENSE_CUTOFF) -> float:
    """Trace-norm gap between the post-record reduced dynamics and the
    record-free channel.

    The measurement record is realized on the discretized bath; the
    collapsed state is evolved for tau and its reduced system state is
    compared against the block channel applied to |x_n><x_n|.  In the
    continuum both agree exactly (the photon record can be replaced by
    the vacuum), so the result measures discretization only.
    """
    times = np.asarray(times, dtype=float)
    n = len(times)
    if n < 1:
        raise ValueError("need at least one measurement in the record")
    if n_max is None:
        n_max = n + 1
    H = build_hamiltonian(spec, bath, n_max, max_dim=max_dim)
    state = OracleState.from_system_state(H.fock, init)
    t_prev = 0.0
    for k in range(n):
        state = evolve(H, state, times[k] - t_prev, dense_cutoff=dense_cutoff)
        prob, state = measure(state, basis, outcomes[k])
        if state is None:
            raise ValueError("measurement record has zero probability")
        t_prev = times[k]
    state = evolve(H, state, tau, dense_cutoff=dense_cutoff)
    rho = reduced_system_state(state)
    gen = build_model(spec)
    x_vec = basis.vectors[outcomes[-1]]
    target = apply_channel(survival_amplitude_flat(gen, tau),
                           BlockDensity.from_state_vector(x_vec)).assemble()
    diff = rho - target
    diff = (diff + diff.conj().T) / 2
    return float(np.abs(np.linalg.eigvalsh(diff)).sum())


def single_excitation_matrix(spec: ModelSpec, bath: DiscretizedBath) -> np.ndarray:
    """Dense single-excitation Hamiltonian block for independent checks.

    Ordering matches the grade-1 block: M*m one-photon ground states, then
    the d excited levels with no photons.
    """
    H = build_hamiltonian(spec, bath, 1, max_dim=10**7)
    return H.block(1).toarray()
