import numpy as np


def random_hermitian_density(n: int, rng: np.random.Generator) -> np.ndarray:
    """Random full-rank density matrix (Hermitian, unit trace, positive)."""

    x = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    rho = x @ x.conj().T
    return rho / np.trace(rho)
