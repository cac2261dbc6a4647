import numpy as np
import pytest

from madc.model import (FlatSpectral, LorentzianSpectral, ModelSpec,
                        TabulatedSpectral, build_model)
from madc.statistics import InitialState, MeasurementBasis


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def qubit_flat():
    """Resonant qubit, gamma = 1."""
    return ModelSpec(1, [[0.0]], [[1.0]], [1.0])


@pytest.fixture
def qubit_gen(qubit_flat):
    return build_model(qubit_flat)


@pytest.fixture
def diag2_flat():
    """d = 2, omega = (0, 0), gamma = (1, 2), computational decay vectors."""
    return ModelSpec(2, np.zeros((2, 2)), [[1.0, 0.0], [0.0, 1.0]], [1.0, 2.0])


@pytest.fixture
def diag2_gen(diag2_flat):
    return build_model(diag2_flat)


@pytest.fixture
def noncommuting_flat():
    """d = 2 with h_e = sigma_x and a single decay channel on e_1."""
    return ModelSpec(2, [[0.0, 1.0], [1.0, 0.0]], [[1.0, 0.0]], [2.0])


@pytest.fixture
def hadamard_qubit_basis():
    """Non-compatible qubit basis (|0> +- |e>)/sqrt(2); layout (excited, ground)."""
    h = 1 / np.sqrt(2)
    return MeasurementBasis(np.array([[h, h], [-h, h]], dtype=complex))


@pytest.fixture
def hadamard_excited_basis():
    """d = 2 compatible basis with Hadamard-rotated excited sector."""
    h = 1 / np.sqrt(2)
    return MeasurementBasis.compatible_from_excited(
        np.array([[h, h], [h, -h]], dtype=complex))


@pytest.fixture
def excited_init_qubit():
    return InitialState.excited([1.0])


def lorentzian_qubit(gamma0: float, lam: float, omega0: float = 0.0) -> ModelSpec:
    return ModelSpec(1, [[0.0]], [[1.0]], [gamma0],
                     LorentzianSpectral((omega0,), (lam,), (gamma0,)))


def lorentzian_amplitude(gamma0, lam, ts):
    """Damped two-level amplitude for the resonant Lorentzian kernel."""
    D = np.sqrt(complex(lam**2 - 2 * gamma0 * lam))
    ts = np.asarray(ts, dtype=float)
    return np.exp(-lam * ts / 2) * (np.cosh(D * ts / 2) + (lam / D) * np.sinh(D * ts / 2))


def box_band_spec(gamma: float, omega_band: float, n_grid: int = 801) -> ModelSpec:
    """Qubit with a tabulated flat band J = gamma/2pi on [-omega_band, omega_band]."""
    om = np.linspace(-omega_band, omega_band, n_grid)
    J = np.full((1, n_grid), gamma / (2 * np.pi))
    return ModelSpec(1, [[0.0]], [[1.0]], [gamma], TabulatedSpectral(om, J))


def random_model(rng, d=None, scale=1.0):
    """Random flat model with unit, linearly independent decay vectors."""
    if d is None:
        d = int(rng.integers(1, 5))
    h = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    h = (h + h.conj().T) / 2 * scale
    m = int(rng.integers(1, d + 1))
    while True:
        vecs = rng.normal(size=(m, d)) + 1j * rng.normal(size=(m, d))
        vecs /= np.linalg.norm(vecs, axis=1)[:, None]
        if np.linalg.svd(vecs, compute_uv=False)[-1] > 1e-3:
            break
    rates = rng.uniform(0.1, 2.0, size=m) * scale
    return ModelSpec(d, h, list(vecs), rates, FlatSpectral())


def random_basis(rng, d):
    """Haar-ish random orthonormal basis of the full (d+1)-dim system space."""
    z = rng.normal(size=(d + 1, d + 1)) + 1j * rng.normal(size=(d + 1, d + 1))
    q, r = np.linalg.qr(z)
    q = q * (np.diag(r) / np.abs(np.diag(r)))[None, :]
    return MeasurementBasis(q.T)
