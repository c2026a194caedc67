"""Dense numerical kernels: stable softmax, simplex projection, a cyclic
Jacobi eigensolver, positive-spectrum condition numbers, Gaussian sampling
and KL divergence.

Matrices are plain float64 numpy arrays in row-major order; probability
vectors are 1-D float64 arrays that sum to one.
"""

from __future__ import annotations

import numpy as np

from .errors import (
    ConvergenceError,
    DegenerateSpectrumError,
    InvalidInputError,
    SupportMismatchError,
)
from .rng import RngStream

PROB_ATOL = 1e-12


def _as_finite_vector(v, name: str = "input") -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidInputError(f"{name} must be a nonempty 1-D vector")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return arr


def check_prob_vector(p, name: str = "probability vector") -> np.ndarray:
    """Validate nonnegativity and unit sum (within 1e-12)."""
    arr = _as_finite_vector(p, name)
    if np.any(arr < 0):
        raise InvalidInputError(f"{name} has negative entries")
    if abs(arr.sum() - 1.0) > PROB_ATOL:
        raise InvalidInputError(f"{name} does not sum to 1 (got {arr.sum()!r})")
    return arr


def softmax(v) -> np.ndarray:
    """Max-shifted softmax; safe for arbitrarily large finite inputs."""
    arr = _as_finite_vector(v)
    e = np.exp(arr - arr.max())
    return e / e.sum()


def softmax_rows(mat: np.ndarray) -> np.ndarray:
    """Row-wise max-shifted softmax for a 2-D array."""
    shifted = mat - mat.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def project_to_simplex(v) -> np.ndarray:
    """Euclidean projection onto the closed probability simplex.

    Sort-based algorithm: find the largest support whose shifted entries
    stay positive, then clip. Idempotent and non-expansive.
    """
    arr = _as_finite_vector(v)
    u = np.sort(arr)[::-1]
    css = (np.cumsum(u) - 1.0) / np.arange(1, arr.size + 1)
    k = np.nonzero(u > css)[0][-1]
    return np.clip(arr - css[k], 0.0, None)


def sym_eigenvalues(
    a,
    sym_rtol: float = 1e-10,
    off_rtol: float = 1e-12,
    max_sweeps: int = 100,
) -> np.ndarray:
    """Eigenvalues of a real symmetric matrix, sorted descending.

    Cyclic Jacobi with a fixed (p, q) sweep order, iterated until the
    off-diagonal Frobenius norm falls below off_rtol * ||A||_F. Raises
    ConvergenceError after max_sweeps.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.size == 0:
        raise InvalidInputError("matrix must be square and nonempty")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError("matrix contains non-finite entries")
    scale = np.abs(a).max()
    if scale > 0 and np.abs(a - a.T).max() > sym_rtol * scale:
        raise InvalidInputError("matrix is not symmetric within tolerance")

    n = a.shape[0]
    if n == 1:
        return a[0, :1].copy()
    work = 0.5 * (a + a.T)
    norm = np.linalg.norm(work)
    if norm == 0.0:
        return np.zeros(n)
    target = off_rtol * norm

    def off_norm(m):
        off = m.copy()
        np.fill_diagonal(off, 0.0)
        return np.linalg.norm(off)

    for _ in range(max_sweeps):
        if off_norm(work) < target:
            break
        # Rotating truly negligible entries just churns rounding noise.
        skip = target / (n * n)
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = work[p, q]
                if abs(apq) <= skip:
                    continue
                app, aqq = work[p, p], work[q, q]
                tau = (aqq - app) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + np.hypot(1.0, tau))
                else:
                    t = -1.0 / (-tau + np.hypot(1.0, tau))
                c = 1.0 / np.hypot(1.0, t)
                s = t * c
                col_p = work[:, p].copy()
                col_q = work[:, q].copy()
                new_p = c * col_p - s * col_q
                new_q = s * col_p + c * col_q
                work[:, p] = new_p
                work[p, :] = new_p
                work[:, q] = new_q
                work[q, :] = new_q
                work[p, p] = app - t * apq
                work[q, q] = aqq + t * apq
                work[p, q] = 0.0
                work[q, p] = 0.0
    if off_norm(work) >= target:
        raise ConvergenceError(
            f"Jacobi sweep budget ({max_sweeps}) exhausted; "
            f"off-diagonal norm {off_norm(work):.3e} >= {target:.3e}"
        )
    return np.sort(np.diag(work))[::-1]


def condition_number(eigs, cutoff: float = 1e-10) -> float:
    """lambda_max / lambda_min over eigenvalues above cutoff * lambda_max.

    Eigenvalues at or below the relative cutoff are treated as zero modes
    and excluded; a single surviving eigenvalue yields 1.
    """
    arr = np.asarray(eigs, dtype=np.float64)
    if arr.size == 0:
        raise InvalidInputError("empty spectrum")
    if cutoff <= 0:
        raise InvalidInputError("cutoff must be positive")
    if np.any(np.diff(arr) > 0):
        raise InvalidInputError("eigenvalues must be sorted descending")
    top = arr[0]
    kept = arr[arr > cutoff * top]
    if kept.size == 0:
        raise DegenerateSpectrumError("no eigenvalue above the cutoff")
    return float(kept[0] / kept[-1])


def gaussian_sample(n: int, sigma: float, rng: RngStream) -> np.ndarray:
    """n i.i.d. N(0, sigma^2) draws; deterministic in the stream value."""
    if sigma < 0:
        raise InvalidInputError("sigma must be nonnegative")
    return rng.normal(n, scale=sigma)


def kl_divergence(p, q) -> float:
    """sum p_j log(p_j / q_j) with the 0 log 0 = 0 convention."""
    p = check_prob_vector(p, "p")
    q = check_prob_vector(q, "q")
    if p.size != q.size:
        raise InvalidInputError("p and q must have equal length")
    bad = (q == 0.0) & (p > 0.0)
    if np.any(bad):
        raise SupportMismatchError("q vanishes on the support of p")
    support = p > 0.0
    return float(np.sum(p[support] * np.log(p[support] / q[support])))
