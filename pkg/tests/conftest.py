import numpy as np
import pytest

from ouspread.model import ModelParams


def random_stable_matrix(rng: np.random.Generator, d: int, nonsymmetric: bool = True) -> np.ndarray:
    """Random matrix with eigenvalues of strictly negative real part.

    Base construction: -(M M' + 0.1 I), symmetric negative definite by
    construction; optionally conjugated by a random well-conditioned
    similarity to produce non-symmetric stable cases.
    """
    m = rng.normal(size=(d, d)) / np.sqrt(d)
    a = -(m @ m.T + 0.1 * np.eye(d))
    if nonsymmetric and d > 1:
        p = rng.normal(size=(d, d)) * 0.3 + np.eye(d)
        a = p @ a @ np.linalg.inv(p)
    return a


def random_params(rng: np.random.Generator, d: int, m: int | None = None,
                  nonsymmetric: bool = True) -> ModelParams:
    """Random valid model: stable A, full-rank sigma sigma' (needs m >= d)."""
    if m is None:
        m = d + int(rng.integers(0, 2))
    sigma = rng.normal(size=(d, m)) * 0.5 + np.hstack([np.eye(d), np.zeros((d, m - d))])
    return ModelParams(
        d=d,
        m=m,
        A=random_stable_matrix(rng, d, nonsymmetric=nonsymmetric),
        sigma=sigma,
        r=float(rng.uniform(0.0, 0.1)),
        T=float(rng.uniform(0.5, 2.0)),
        varpi=float(rng.uniform(0.5, 2.0)),
        x0=float(rng.uniform(50.0, 150.0)),
        s0=rng.uniform(-5.0, 5.0, d),
    )


@pytest.fixture(scope="session")
def base_params() -> ModelParams:
    """Scalar reference setup used throughout: kappa=0.1, sigma=0.5,
    r=0.01, T=1, varpi=1, x0=100, s0=5."""
    return ModelParams(d=1, m=1, A=[[-0.1]], sigma=[[0.5]], r=0.01,
                       T=1.0, varpi=1.0, x0=100.0, s0=[5.0])
