"""Dense matrix kernels: column-major vectorization, the symmetrizing
drift operator, matrix exponential, and exponential integrals.

Everything here operates on small matrices (d up to ~16); no attempt is
made at large-n performance.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import BadTimeOrder, NonFinite

__all__ = [
    "vect",
    "unvect",
    "build_gamma",
    "mat_exp",
    "block_exp_integral",
    "exp_time_integrals",
]


def vect(h: np.ndarray) -> np.ndarray:
    """Stack a d x d matrix into a d^2 vector, column by column.

    Entry (j-1)d + i of the result holds element (i, j) (1-based); this is
    the Fortran/column-major convention.  ``build_gamma`` depends on this
    exact ordering, so it is fixed here once and tested against a
    brute-force construction: under the row-major convention the defining
    identity of the Gamma matrix would silently fail for non-symmetric
    arguments.
    """
    h = np.asarray(h, dtype=float)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError(f"vect expects a square matrix, got shape {h.shape}")
    return h.reshape(-1, order="F").copy()


def unvect(z: np.ndarray, d: int | None = None) -> np.ndarray:
    """Inverse of ``vect``: rebuild the d x d matrix from its column stack."""
    z = np.asarray(z, dtype=float).reshape(-1)
    if d is None:
        d = math.isqrt(z.size)
    if d * d != z.size:
        raise ValueError(f"vector of length {z.size} is not a stacked square matrix")
    return z.reshape((d, d), order="F").copy()


def build_gamma(a_mat: np.ndarray) -> np.ndarray:
    """Matrix of the linear map G -> A'(G + G') acting on column stacks.

    Returns the d^2 x d^2 matrix Gamma with
    Gamma @ vect(G) == vect(A' @ (G + G')) for every d x d matrix G.

    Row index s = j*d + i addresses output element (i, j); column index
    t = k*d + l addresses input element (l, k) (0-based).  The entry is
    A[l, i] if k == j, plus A[k, i] if l == j.
    """
    a = np.asarray(a_mat, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"build_gamma expects a square matrix, got shape {a.shape}")
    d = a.shape[0]
    gamma = np.zeros((d * d, d * d))
    for j in range(d):
        for i in range(d):
            s = j * d + i
            for k in range(d):
                for l in range(d):
                    t = k * d + l
                    val = 0.0
                    if k == j:
                        val += a[l, i]
                    if l == j:
                        val += a[k, i]
                    gamma[s, t] = val
    return gamma


# Pade-13 numerator coefficients for the diagonal approximant of exp.
_PADE13 = (
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
)


def mat_exp(m: np.ndarray) -> np.ndarray:
    """Matrix exponential by scaling-and-squaring with a 13th-order Pade
    approximant.

    The argument is scaled until its 1-norm drops below 0.5 before the
    approximant is applied, which keeps the relative error near machine
    precision for the norm range this package uses (well past ||M|| = 50).
    """
    a = np.asarray(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"mat_exp expects a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFinite("mat_exp input contains NaN or Inf")

    norm1 = float(np.max(np.sum(np.abs(a), axis=0))) if a.size else 0.0
    if norm1 == 0.0:
        return np.eye(a.shape[0])
    n_squarings = 0
    if norm1 > 0.5:
        n_squarings = max(0, int(math.ceil(math.log2(norm1 / 0.5))))
        a = a / (2.0**n_squarings)

    n = a.shape[0]
    ident = np.eye(n)
    b = _PADE13
    a2 = a @ a
    a4 = a2 @ a2
    a6 = a2 @ a4
    u = a @ (
        a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2)
        + b[7] * a6
        + b[5] * a4
        + b[3] * a2
        + b[1] * ident
    )
    v = (
        a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2)
        + b[6] * a6
        + b[4] * a4
        + b[2] * a2
        + b[0] * ident
    )
    r = np.linalg.solve(v - u, v + u)
    for _ in range(n_squarings):
        r = r @ r
    return r


def block_exp_integral(a_mat: np.ndarray, q_mat: np.ndarray, dt: float) -> np.ndarray:
    """Exact value of the integral of e^{Au} Q e^{A'u} du over [0, dt].

    Computed from the exponential of the 2d x 2d block matrix
    [[A, Q], [0, -A']]: with blocks F11 = e^{A dt} and
    F12 = integral of e^{A(dt-u)} Q e^{-A'u} du, the result is F12 F11'.
    """
    a = np.asarray(a_mat, dtype=float)
    q = np.asarray(q_mat, dtype=float)
    if dt < 0:
        raise BadTimeOrder(f"negative integration length dt={dt}")
    d = a.shape[0]
    if a.shape != (d, d) or q.shape != (d, d):
        raise ValueError("block_exp_integral expects square matrices of equal size")
    if dt == 0.0:
        return np.zeros((d, d))
    block = np.zeros((2 * d, 2 * d))
    block[:d, :d] = a
    block[:d, d:] = q
    block[d:, d:] = -a.T
    full = mat_exp(block * dt)
    cov = full[:d, d:] @ full[:d, :d].T
    return 0.5 * (cov + cov.T)


def exp_time_integrals(f_mat: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact one-step exponential integrals for a constant matrix F.

    Returns (e^{Fh}, I0, I1) where I0 integrates e^{Fu} and I1 integrates
    u e^{Fu} over u in [0, h].  Computed from the exponential of the
    3n x 3n block matrix [[F, I, 0], [0, 0, I], [0, 0, 0]], whose (1,2)
    block equals I0 and whose (1,3) block equals h*I0 - I1.  Works for
    singular F, unlike inverse-based formulas.
    """
    f = np.asarray(f_mat, dtype=float)
    n = f.shape[0]
    if h < 0:
        raise BadTimeOrder(f"negative step h={h}")
    ident = np.eye(n)
    block = np.zeros((3 * n, 3 * n))
    block[:n, :n] = f
    block[:n, n : 2 * n] = ident
    block[n : 2 * n, 2 * n :] = ident
    full = mat_exp(block * h)
    exp_fh = full[:n, :n]
    i0 = full[:n, n : 2 * n]
    i1 = h * i0 - full[:n, 2 * n :]
    return exp_fh, i0, i1
