"""The multilevel amplitude-damping block channel and its diagnostics.

States are split into an excited block, an excited-ground coherence
vector and a ground population,

    rho = [[rho_e, w], [w^dag, rho_g]],

and the channel acts as rho_e -> A rho_e A^dag, w -> A w, with the ground
population completing the trace.  Divisibility of the induced family is
equivalent to the two-time propagators being contractions, and to
positivity of the decay operator of the time-local generator; both
criteria are computed and must agree.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConsistencyError, IllConditionedError
from .model import SurvivalAmplitude, propagator

PSD_TOL = 1e-10


@dataclass
class BlockDensity:
    """System state in the excited/ground block splitting."""
    rho_e: np.ndarray
    w: np.ndarray
    rho_g: float

    def __post_init__(self):
        self.rho_e = np.asarray(self.rho_e, dtype=complex)
        self.w = np.asarray(self.w, dtype=complex)
        self.rho_g = float(np.real(self.rho_g))

    @property
    def d(self) -> int:
        return self.rho_e.shape[0]

    @classmethod
    def from_state_vector(cls, vec: np.ndarray) -> "BlockDensity":
        """Pure state |v><v| with layout (excited components..., ground)."""
        v = np.asarray(vec, dtype=complex)
        tilde, mu = v[:-1], v[-1]
        return cls(np.outer(tilde, tilde.conj()), tilde * np.conj(mu), abs(mu) ** 2)

    @classmethod
    def ground(cls, d: int) -> "BlockDensity":
        return cls(np.zeros((d, d), dtype=complex), np.zeros(d, dtype=complex), 1.0)

    def trace(self) -> float:
        return float(np.trace(self.rho_e).real + self.rho_g)

    def assemble(self) -> np.ndarray:
        d = self.d
        out = np.zeros((d + 1, d + 1), dtype=complex)
        out[:d, :d] = self.rho_e
        out[:d, d] = self.w
        out[d, :d] = self.w.conj()
        out[d, d] = self.rho_g
        return out

    def expectation(self, vec: np.ndarray) -> float:
        """<v| rho |v> for a system vector with (excited..., ground) layout."""
        v = np.asarray(vec, dtype=complex)
        tilde, mu = v[:-1], v[-1]
        val = (tilde.conj() @ self.rho_e @ tilde
               + 2 * np.real(tilde.conj() @ self.w * mu)
               + abs(mu) ** 2 * self.rho_g)
        return float(np.real(val))

    def validate(self, tol: float = 1e-12) -> None:
        if np.abs(self.rho_e - self.rho_e.conj().T).max() > tol:
            raise ValueError("excited block is not Hermitian")
        if np.linalg.eigvalsh((self.rho_e + self.rho_e.conj().T) / 2).min() < -tol:
            raise ValueError("excited block is not PSD")
        if abs(self.trace() - 1.0) > tol:
            raise ValueError("state is not normalized")
        if np.linalg.eigvalsh(self.assemble()).min() < -PSD_TOL:
            raise ValueError("assembled state is not PSD")


def apply_channel(A_t: np.ndarray, rho: BlockDensity) -> BlockDensity:
    """Block action of the amplitude-damping channel with amplitude A_t.

    The trace is preserved exactly by construction.
    """
    A_t = np.asarray(A_t, dtype=complex)
    rho_e = A_t @ rho.rho_e @ A_t.conj().T
    w = A_t @ rho.w
    rho_g = rho.trace() - float(np.trace(rho_e).real)
    return BlockDensity(rho_e, w, rho_g)


def is_completely_positive(A: np.ndarray, tol: float = 1e-10):
    """Contraction test: CP holds iff the largest singular value is <= 1."""
    norm = float(np.linalg.norm(np.asarray(A, dtype=complex), 2))
    return norm <= 1.0 + tol, norm


@dataclass
class GeneratorDecomposition:
    """Time-local generator data: L(t), its Hermitian split and decay part."""
    l_op: np.ndarray
    h_eff: np.ndarray
    gamma_t: np.ndarray
    min_eig_gamma: float


def _derivative(A: SurvivalAmplitude, i: int, silent: bool = False) -> np.ndarray:
    """Second-order finite-difference dA/dt at grid index i."""
    t = A.times
    M = A.matrices
    n = len(t) - 1
    if 0 < i < n:
        h = (t[i + 1] - t[i - 1]) / 2
        return (M[i + 1] - M[i - 1]) / (2 * h)
    if n < 2:
        raise ValueError("need at least three grid points for differentiation")
    if not silent:
        warnings.warn("one-sided finite difference at a trajectory boundary")
    if i == 0:
        h = t[1] - t[0]
        return (-3 * M[0] + 4 * M[1] - M[2]) / (2 * h)
    h = t[n] - t[n - 1]
    return (3 * M[n] - 4 * M[n - 1] + M[n - 2]) / (2 * h)


def time_local_generator(A: SurvivalAmplitude, t: float,
                         _silent: bool = False) -> GeneratorDecomposition:
    """L(t) = dA/dt A(t)^{-1} from grid finite differences, with the split
    h_eff = (i/2)(L - L^dag), gamma_t = -(L + L^dag)."""
    i = A.index_of(t)
    At = A.matrices[i]
    cond = np.linalg.cond(At)
    if not np.isfinite(cond) or cond >= 1e12:
        raise IllConditionedError(f"A(t={t}) is ill conditioned (cond={cond:.3e})")
    dA = _derivative(A, i, silent=_silent)
    L = np.linalg.solve(At.T, dA.T).T
    h_eff = 0.5j * (L - L.conj().T)
    gamma_t = -(L + L.conj().T)
    min_eig = float(np.linalg.eigvalsh(gamma_t).min())
    return GeneratorDecomposition(L, h_eff, gamma_t, min_eig)


def apply_generator(dec: GeneratorDecomposition, rho: BlockDensity) -> BlockDensity:
    """Tangent of the evolution at rho; traceless by construction."""
    L = dec.l_op
    rho_e = L @ rho.rho_e + rho.rho_e @ L.conj().T
    w = L @ rho.w
    rho_g = -float(np.trace(rho.rho_e @ (L + L.conj().T)).real)
    return BlockDensity(rho_e, w, rho_g)


@dataclass
class DivisibilityReport:
    pairs: list               # (s, t, opnorm) over sampled s <= t
    gamma_samples: list       # (t, min_eig_gamma)
    max_opnorm: float
    min_eig_gamma: float
    cp_divisible: bool
    p_divisible: bool

    def rows(self):
        """CSV rows (s, t, opnorm, min_eig_gamma of the pair's t)."""
        gmap = dict(self.gamma_samples)
        return [(s, t, v, gmap[t]) for (s, t, v) in self.pairs]


def divisibility_report(A: SurvivalAmplitude, grid: np.ndarray | None = None,
                        adjacent_only: bool = False, tol_norm: float = 1e-9,
                        tol_gamma: float | None = None) -> DivisibilityReport:
    """Sample propagator norms and generator decay eigenvalues on a grid.

    Both divisibility criteria (all two-time propagators contractive;
    decay operator PSD at all times) are evaluated and must agree; a
    decisive disagreement raises ConsistencyError.  The default gamma
    tolerance absorbs the finite-difference error of the generator.
    """
    if grid is None:
        grid = A.times
    grid = np.asarray(grid, dtype=float)
    idx = [A.index_of(t) for t in grid]
    mats = A.matrices[idx]

    gamma_samples = []
    l_norms = []
    for t in grid:
        dec = time_local_generator(A, t, _silent=True)
        gamma_samples.append((float(t), dec.min_eig_gamma))
        l_norms.append(np.linalg.norm(dec.l_op, 2))
    min_eig = min(v for (_, v) in gamma_samples)

    pairs = []
    n = len(grid)
    for i in range(n):
        cond = np.linalg.cond(mats[i])
        if not np.isfinite(cond) or cond >= 1e12:
            raise IllConditionedError(
                f"A(s={grid[i]}) ill conditioned (cond={cond:.3e}) in pair sweep")
        inv = np.linalg.inv(mats[i])
        js = [i + 1] if adjacent_only else range(i, n)
        for j in js:
            if j >= n:
                continue
            opn = float(np.linalg.norm(mats[j] @ inv, 2))
            pairs.append((float(grid[i]), float(grid[j]), opn))
    max_opnorm = max(v for (_, _, v) in pairs)

    if tol_gamma is None:
        # second-order differences err like h^2 |L|^3; keep a safe factor
        h = float(np.min(np.diff(A.times))) if len(A.times) > 1 else 0.0
        tol_gamma = max(1e-8, 2.0 * h**2 * max(l_norms) ** 3)
    cp_from_norm = max_opnorm <= 1.0 + tol_norm
    cp_from_gamma = min_eig >= -tol_gamma
    if cp_from_norm != cp_from_gamma:
        raise ConsistencyError(
            "divisibility criteria disagree: "
            f"max opnorm {max_opnorm:.6e} (tol {tol_norm:.1e}) vs "
            f"min eig gamma {min_eig:.6e} (tol {tol_gamma:.1e})")
    return DivisibilityReport(pairs, gamma_samples, max_opnorm, min_eig,
                              cp_from_norm, cp_from_norm)
