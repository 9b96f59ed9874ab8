"""Market model: a riskless bond at rate r and d mean-reverting spread
assets dS = A S dt + sigma dW driven by an m-dimensional Brownian motion,
with wealth dX = (r X - alpha' A1 S - c) dt + alpha' sigma dW where
A1 = r I - A.

``ModelParams`` is the single source of truth for a run; ``validate`` is
the gate that checks the standing assumptions (stable A, invertible
sigma sigma') and returns the derived matrices everything downstream uses.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BadScalar, BadTimeOrder, EigenvalueViolation, NonFinite, SingularVolatility
from .linalg import block_exp_integral, mat_exp

__all__ = ["ModelParams", "DerivedMatrices", "validate", "ou_transition"]

# sigma sigma' counts as singular when its smallest singular value falls
# below this fraction of the largest.
SINGULARITY_RTOL = 1e-12


def _frozen_array(x, shape: tuple[int, ...], name: str) -> np.ndarray:
    try:
        arr = np.array(x, dtype=float).reshape(shape)
    except ValueError as exc:
        raise ValueError(f"{name}: expected shape {shape}, got {np.shape(x)}") from exc
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class ModelParams:
    """Full market specification.

    d, m        -- number of spread assets / driving Brownian dimensions
    A           -- d x d mean-reversion matrix, Re lambda(A) < 0
    sigma       -- d x m volatility matrix with sigma sigma' invertible
    r           -- riskless rate, r >= 0
    T           -- horizon
    varpi       -- weight on terminal log-wealth in the objective
    x0          -- initial wealth, > 0
    s0          -- initial spread vector (any real values)
    """

    d: int
    m: int
    A: np.ndarray
    sigma: np.ndarray
    r: float
    T: float
    varpi: float
    x0: float
    s0: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.d < 1 or self.m < 1:
            raise BadScalar(f"dimensions must be positive, got d={self.d}, m={self.m}")
        object.__setattr__(self, "A", _frozen_array(self.A, (self.d, self.d), "A"))
        object.__setattr__(self, "sigma", _frozen_array(self.sigma, (self.d, self.m), "sigma"))
        s0 = np.zeros(self.d) if self.s0 is None else self.s0
        object.__setattr__(self, "s0", _frozen_array(s0, (self.d,), "s0"))

    def rho(self, t):
        """Remaining-time weight rho(t) = T - t + varpi."""
        return self.T - t + self.varpi


@dataclass(frozen=True)
class DerivedMatrices:
    """Matrices derived from a validated ModelParams.

    a1       -- A1 = r I - A (invertible under the model assumptions)
    sig2     -- Sigma = sigma sigma'
    sig2_inv -- Sigma^{-1}
    b_mat    -- B = A1' Sigma^{-1} A1, the source term of the backward
                matrix ODE; symmetric positive definite
    """

    a1: np.ndarray
    sig2: np.ndarray
    sig2_inv: np.ndarray
    b_mat: np.ndarray


def validate(params: ModelParams) -> DerivedMatrices:
    """Check the model assumptions and build the derived matrices.

    Raises EigenvalueViolation if A has an eigenvalue with nonnegative
    real part, SingularVolatility if sigma sigma' is (numerically)
    singular, and BadScalar for out-of-range scalars.  Pure function:
    identical inputs give bit-identical outputs.
    """
    if not (np.all(np.isfinite(params.A)) and np.all(np.isfinite(params.sigma)) and np.all(np.isfinite(params.s0))):
        raise NonFinite("model matrices contain NaN or Inf")
    if params.x0 <= 0:
        raise BadScalar(f"initial wealth must be positive, got x0={params.x0}")
    if params.T <= 0:
        raise BadScalar(f"horizon must be positive, got T={params.T}")
    if params.varpi <= 0:
        raise BadScalar(f"terminal weight must be positive, got varpi={params.varpi}")
    if params.r < 0:
        raise BadScalar(f"riskless rate must be nonnegative, got r={params.r}")

    eigs = np.linalg.eigvals(params.A)
    if np.any(eigs.real >= 0):
        worst = eigs[np.argmax(eigs.real)]
        raise EigenvalueViolation(
            f"mean-reversion matrix must have eigenvalues with negative real part; found {worst}"
        )

    sig2 = params.sigma @ params.sigma.T
    sig2 = 0.5 * (sig2 + sig2.T)
    svals = np.linalg.svd(sig2, compute_uv=False)
    if svals[-1] <= SINGULARITY_RTOL * svals[0] or svals[0] == 0.0:
        raise SingularVolatility(
            f"sigma sigma' is singular: singular values range [{svals[-1]:.3e}, {svals[0]:.3e}]"
        )
    sig2_inv = np.linalg.inv(sig2)
    sig2_inv = 0.5 * (sig2_inv + sig2_inv.T)

    a1 = params.r * np.eye(params.d) - params.A
    # Invertibility of A1 is implied by Re lambda(A) < 0 and r >= 0; assert anyway.
    a1_svals = np.linalg.svd(a1, compute_uv=False)
    if a1_svals[-1] <= SINGULARITY_RTOL * max(a1_svals[0], 1.0):
        raise EigenvalueViolation("A1 = r I - A is numerically singular")

    b_mat = a1.T @ sig2_inv @ a1
    b_mat = 0.5 * (b_mat + b_mat.T)

    for arr in (a1, sig2, sig2_inv, b_mat):
        arr.flags.writeable = False
    return DerivedMatrices(a1=a1, sig2=sig2, sig2_inv=sig2_inv, b_mat=b_mat)


def ou_transition(params: ModelParams, t0: float, t1: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact one-interval transition of the spread process.

    Over an interval of length dt = t1 - t0 the spread is Gaussian:
    S(t1) = mean_map @ S(t0) + eps with mean_map = e^{A dt} and
    cov = integral of e^{Au} sigma sigma' e^{A'u} du over [0, dt],
    evaluated by the block-exponential method.  The covariance is
    returned symmetrized (PSD up to roundoff).
    """
    if t1 < t0:
        raise BadTimeOrder(f"t1={t1} precedes t0={t0}")
    dt = float(t1 - t0)
    mean_map = mat_exp(params.A * dt)
    cov = block_exp_integral(params.A, params.sigma @ params.sigma.T, dt)
    return mean_map, cov
