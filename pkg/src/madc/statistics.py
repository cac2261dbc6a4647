"""Multitime measurement statistics for the flat-limit model.

System vectors live in C^{d+1} with layout (excited components..., ground
amplitude).  A measurement basis is any orthonormal set of d+1 such
vectors; it is *compatible* when outcome 0 is the ground state and all
other vectors lie in the excited sector.  Joint probabilities of
projective measurement sequences factorize into the regression product

    P_n = <x1| L_t1(rho0) |x1> prod_j <x_{j+1}| L_dt (|x_j><x_j|) |x_{j+1}>,

which is what ``joint_prob_regression`` evaluates; ``joint_prob_compatible``
uses the equivalent closed product for compatible bases.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .channel import BlockDensity, apply_channel
from .errors import BudgetExceededError
from .model import EffectiveGenerator, survival_amplitude_flat

ORTHO_TOL = 1e-12


class MeasurementBasis:
    """d+1 orthonormal system vectors with ground/excited decomposition."""

    def __init__(self, vectors: np.ndarray):
        vectors = np.asarray(vectors, dtype=complex)
        if vectors.ndim != 2 or vectors.shape[0] != vectors.shape[1]:
            raise ValueError("need a square array of d+1 basis vectors")
        gram = vectors @ vectors.conj().T
        if np.abs(gram - np.eye(vectors.shape[0])).max() > ORTHO_TOL:
            raise ValueError("basis vectors are not orthonormal within 1e-12")
        self.vectors = vectors
        self.d = vectors.shape[0] - 1

    @property
    def mu(self) -> np.ndarray:
        """Ground amplitudes mu_alpha."""
        return self.vectors[:, -1]

    @property
    def x_tilde(self) -> np.ndarray:
        """Excited parts, shape (d+1, d)."""
        return self.vectors[:, :-1]

    @property
    def compatible(self) -> bool:
        mu = np.abs(self.mu)
        return bool(abs(mu[0] - 1.0) <= 1e-10 and (mu[1:] <= 1e-10).all())

    @classmethod
    def standard(cls, d: int) -> "MeasurementBasis":
        """Ground state followed by the computational excited basis."""
        vecs = np.zeros((d + 1, d + 1), dtype=complex)
        vecs[0, d] = 1.0
        for a in range(d):
            vecs[a + 1, a] = 1.0
        return cls(vecs)

    @classmethod
    def compatible_from_excited(cls, excited: np.ndarray) -> "MeasurementBasis":
        """Ground state plus the given orthonormal rows of the excited sector."""
        excited = np.asarray(excited, dtype=complex)
        d = excited.shape[1]
        vecs = np.zeros((d + 1, d + 1), dtype=complex)
        vecs[0, d] = 1.0
        vecs[1:, :d] = excited
        return cls(vecs)

    @classmethod
    def rotated_excited(cls, d: int, theta: float, i: int = 0, j: int = 1) -> "MeasurementBasis":
        """Compatible basis with a real rotation by theta in the (i, j) plane."""
        U = np.eye(d, dtype=complex)
        U[i, i] = U[j, j] = np.cos(theta)
        U[i, j] = np.sin(theta)
        U[j, i] = -np.sin(theta)
        return cls.compatible_from_excited(U)


@dataclass
class InitialState:
    """Pure initial system state alpha |ground> + |psi_e>."""
    alpha: complex
    psi_e: np.ndarray

    def __post_init__(self):
        self.alpha = complex(self.alpha)
        self.psi_e = np.asarray(self.psi_e, dtype=complex)
        norm = abs(self.alpha) ** 2 + float(np.linalg.norm(self.psi_e) ** 2)
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"initial state not normalized ({norm})")

    @classmethod
    def excited(cls, psi_e: np.ndarray) -> "InitialState":
        return cls(0.0, psi_e)

    def system_vector(self) -> np.ndarray:
        return np.concatenate([self.psi_e, [self.alpha]])

    def block_density(self) -> BlockDensity:
        return BlockDensity.from_state_vector(self.system_vector())


@dataclass
class TransitionKernel:
    """Column-stochastic matrix P(x, t | y, s) over outcomes x, y."""
    s: float
    t: float
    matrix: np.ndarray


@dataclass
class JointDistribution:
    """n-time joint probabilities as an (d+1)^n table, lexicographic order."""
    times: tuple
    table: np.ndarray

    @property
    def n(self) -> int:
        return len(self.times)

    @property
    def n_outcomes(self) -> int:
        return self.table.shape[0]

    def prob(self, outcomes: Sequence[int]) -> float:
        return float(self.table[tuple(outcomes)])

    def total(self) -> float:
        return float(self.table.sum())

    def marginal(self, j: int) -> "JointDistribution":
        """Sum out the outcome at time index j (0-based)."""
        times = tuple(t for i, t in enumerate(self.times) if i != j)
        return JointDistribution(times, self.table.sum(axis=j))

    def items(self):
        for idx in np.ndindex(self.table.shape):
            yield idx, float(self.table[idx])


def one_time_prob(gen: EffectiveGenerator, init: InitialState,
                  basis: MeasurementBasis, t: float) -> np.ndarray:
    """Single-time outcome probabilities at time t.

    P(x_a) = |alpha mu_a^* + <x~_a| A(t) psi_e>|^2
             + |mu_a|^2 (||psi_e||^2 - ||A(t) psi_e||^2);
    the emitted-photon weight enters through the norm loss of A(t) psi_e,
    no quadrature involved.
    """
    if t < 0:
        raise ValueError("time must be nonnegative")
    v = survival_amplitude_flat(gen, t) @ init.psi_e
    emitted = float(np.linalg.norm(init.psi_e) ** 2 - np.linalg.norm(v) ** 2)
    amp = init.alpha * basis.mu.conj() + basis.x_tilde.conj() @ v
    return np.abs(amp) ** 2 + np.abs(basis.mu) ** 2 * emitted


def _step_kernel(gen: EffectiveGenerator, basis_from: MeasurementBasis,
                 basis_to: MeasurementBasis, dt: float) -> np.ndarray:
    """Matrix of <x_to| L_dt(|y_from><y_from|) |x_to>, columns indexed by y."""
    A = survival_amplitude_flat(gen, dt)
    same = basis_from is basis_to
    if same and basis_from.compatible:
        k = basis_from.d + 1
        out = np.zeros((k, k))
        xt = basis_from.x_tilde[1:]                 # (d, d) excited rows
        amp = xt.conj() @ A @ xt.T                  # <x|A|y>
        out[1:, 1:] = np.abs(amp) ** 2
        out[0, 1:] = 1.0 - out[1:, 1:].sum(axis=0)
        out[0, 0] = 1.0
        return out
    k = basis_to.d + 1
    out = np.zeros((k, k))
    for y in range(k):
        rho = apply_channel(A, BlockDensity.from_state_vector(basis_from.vectors[y]))
        for x in range(k):
            out[x, y] = rho.expectation(basis_to.vectors[x])
    return out


def transition_kernel(gen: EffectiveGenerator, basis: MeasurementBasis,
                      s: float, t: float) -> TransitionKernel:
    """P(x, t | y, s) for all outcome pairs; stochastic in each column."""
    if t < s:
        raise ValueError("need t >= s")
    return TransitionKernel(s, t, _step_kernel(gen, basis, basis, t - s))


def _as_basis_list(bases, n: int):
    if isinstance(bases, MeasurementBasis):
        return [bases] * n
    bases = list(bases)
    if len(bases) != n:
        raise ValueError("need one basis per measurement time")
    return bases


def joint_prob_regression(gen: EffectiveGenerator, init: InitialState, bases,
                          times: Sequence[float], outcomes: Sequence[int]) -> float:
    """Regression product for a single outcome sequence (arbitrary bases,
    optionally one basis per time)."""
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0):
        raise ValueError("times must be nondecreasing")
    if len(times) != len(outcomes):
        raise ValueError("one outcome per time required")
    blist = _as_basis_list(bases, len(times))
    p = float(one_time_prob(gen, init, blist[0], times[0])[outcomes[0]])
    for j in range(len(times) - 1):
        K = _step_kernel(gen, blist[j], blist[j + 1], times[j + 1] - times[j])
        p *= K[outcomes[j + 1], outcomes[j]]
    return p


def joint_prob_compatible(gen: EffectiveGenerator, init: InitialState,
                          basis: MeasurementBasis, times: Sequence[float],
                          outcomes: Sequence[int]) -> float:
    """Closed product for compatible bases.

    Runs of excited outcomes contribute |<x_{k+1}|A(dt)|x_k>|^2, the first
    drop to the ground outcome contributes the norm loss 1 - ||A(dt) x_k||^2,
    later ground outcomes contribute 1, and any excited outcome after a
    ground one makes the probability vanish (no reabsorption).
    """
    if not basis.compatible:
        raise ValueError("basis is not compatible with the excited/ground splitting")
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0):
        raise ValueError("times must be nondecreasing")
    outcomes = list(outcomes)
    n = len(outcomes)
    seen_ground = False
    last_excited = 0
    for i, x in enumerate(outcomes):
        if x == 0:
            seen_ground = True
        elif seen_ground:
            return 0.0
        else:
            last_excited = i + 1
    xt = basis.x_tilde
    if last_excited == 0:
        v = survival_amplitude_flat(gen, times[0]) @ init.psi_e
        return 1.0 - float(np.linalg.norm(v) ** 2)
    p = float(one_time_prob(gen, init, basis, times[0])[outcomes[0]])
    for j in range(1, last_excited):
        A = survival_amplitude_flat(gen, times[j] - times[j - 1])
        amp = xt[outcomes[j]].conj() @ A @ xt[outcomes[j - 1]]
        p *= float(abs(amp) ** 2)
    if last_excited < n:
        A = survival_amplitude_flat(gen, times[last_excited] - times[last_excited - 1])
        p *= 1.0 - float(np.linalg.norm(A @ xt[outcomes[last_excited - 1]]) ** 2)
    return p


def full_distribution(gen: EffectiveGenerator, init: InitialState, bases,
                      times: Sequence[float], budget: float = 1e7) -> JointDistribution:
    """All outcome sequences via the regression product.

    The table is assembled from the single-time vector and the per-step
    transition kernels, which is the regression product evaluated for
    every sequence at once.
    """
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0):
        raise ValueError("times must be nondecreasing")
    n = len(times)
    blist = _as_basis_list(bases, n)
    k = blist[0].d + 1
    if n * k**n > budget:
        raise BudgetExceededError(
            f"n*(d+1)^n = {n * k**n:.3g} exceeds budget {budget:.3g}")
    table = one_time_prob(gen, init, blist[0], times[0])
    for j in range(n - 1):
        K = _step_kernel(gen, blist[j], blist[j + 1], times[j + 1] - times[j])
        table = table[..., None] * K.T
    if table.min() < -1e-12:
        raise ValueError(f"negative probability {table.min():.3e} in distribution")
    if abs(table.sum() - 1.0) > 1e-10:
        raise ValueError(f"distribution sums to {table.sum():.15f}, not 1")
    return JointDistribution(tuple(times), table)


def conditional_from_joint(dist: JointDistribution, prefix: Sequence[int],
                           floor: float = 1e-14) -> np.ndarray:
    """Distribution of the remaining outcomes given a measured prefix."""
    prefix = tuple(prefix)
    if not 0 < len(prefix) < dist.n:
        raise ValueError("prefix must leave at least one outcome open")
    sub = dist.table[prefix]
    psum = float(sub.sum())
    if psum <= floor:
        raise ValueError(f"conditioning on a prefix of probability {psum:.3e}")
    return sub / psum


def verify_markov(dist: JointDistribution, floor: float = 1e-14) -> float:
    """Largest violation of the memoryless property in the distribution.

    Compares P(x_n | x_{n-1}, ..., x_1) with P(x_n | x_{n-1}) computed from
    the table's own marginals, skipping histories below the probability
    floor.
    """
    if dist.n < 3:
        raise ValueError("need at least three times")
    T = dist.table
    hist = T.sum(axis=-1)                      # P(x_1..x_{n-1})
    pair = T.sum(axis=tuple(range(dist.n - 2)))   # P(x_{n-1}, x_n)
    pair_h = pair.sum(axis=-1)                 # P(x_{n-1})
    resid = 0.0
    for idx in np.ndindex(hist.shape):
        if hist[idx] <= floor or pair_h[idx[-1]] <= floor:
            continue
        cond_full = T[idx] / hist[idx]
        cond_two = pair[idx[-1]] / pair_h[idx[-1]]
        resid = max(resid, float(np.abs(cond_full - cond_two).max()))
    return resid
