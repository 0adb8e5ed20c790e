"""Full-rank QR decompositions of very tall matrices: Cholesky QR,
sketch-preconditioned Cholesky QR, and pivoted Cholesky QRCP with rank
deficiency support."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import detkernels as dk
from . import sketching
from .rng import as_key

_EPS = np.finfo(float).eps

DEFAULT_SAMPLING_FACTOR = 4.0
DEFAULT_SASO_K = 8


@dataclass
class PivotedQR:
    """A[:, J] = Q R with Q m-by-k column-orthonormal, R k-by-n upper
    trapezoidal, and J a permutation of the column indices.

    ``rank`` is the detected numerical rank k; ``sketch_r`` keeps the
    triangular factor of the sketch for diagnostics (e.g. reconstructing
    the preconditioned panel).
    """

    Q: np.ndarray
    R: np.ndarray
    J: np.ndarray
    rank: int
    sketch_r: np.ndarray | None = field(default=None, repr=False)


def chol_qr(A):
    """Cholesky QR: R = chol(A^T A), Q = A R^{-1}.

    Only safe when cond(A) is comfortably below 1/sqrt(eps); a Gram matrix
    that is not numerically positive definite raises CholeskyError with the
    failing pivot.
    """
    A = np.asarray(A, dtype=float)
    R = dk.chol(A.T @ A)
    Q = dk.solve_triangular(R, A.T, lower=False, trans="T").T
    return Q, R


def rand_chol_qr(A, d: int | None = None, seed=0,
                 op_family: str = "saso"):
    """Sketch-preconditioned Cholesky QR for full-column-rank matrices.

    An unpivoted QR of the sketch supplies a triangular preconditioner that
    flattens the spectrum before the Cholesky step, so the method is stable
    far beyond plain Cholesky QR.  Rank loss in the sketch raises with a
    pointer to sap_chol_qrcp.
    """
    A = np.asarray(A, dtype=float)
    m, n = A.shape
    if d is None:
        d = int(min(np.ceil(DEFAULT_SAMPLING_FACTOR * n), m))
    if not n <= d <= m:
        raise ValueError("need n <= d <= m")
    S = sketching.sample_operator(op_family, d, m, as_key(seed),
                                  saso_k=DEFAULT_SASO_K)
    _, R_sk = dk.qr_econ(S.apply(A))
    diag = np.abs(np.diag(R_sk))
    if diag.size == 0 or diag.min() <= n * _EPS * max(diag.max(), 1e-300):
        raise np.linalg.LinAlgError(
            "sketch lost rank; the matrix looks rank-deficient "
            "(use sap_chol_qrcp)"
        )
    A_pre = dk.solve_triangular(R_sk, A.T, lower=False, trans="T").T
    Q, R_pre = chol_qr(A_pre)
    return Q, R_pre @ R_sk


def sap_chol_qrcp(A, d: int | None = None, seed=0,
                  op_family: str = "saso") -> PivotedQR:
    """QRCP via sketch-and-precondition and Cholesky QR.

    QRCP of the sketch chooses the pivots and the numerical rank k
    (diagonal entries above max(d, n) * eps times the leading one); the
    leading k pivoted columns of A are preconditioned by the sketch
    triangle and re-factored with Cholesky QR.  The preconditioned panel is
    well-conditioned whenever the sketch preserves rank, regardless of
    cond(A), so the Cholesky step is safe; if the rank was over-estimated
    the Cholesky failure reduces k to the failing pivot and retries.
    """
    A = np.asarray(A, dtype=float)
    m, n = A.shape
    if d is None:
        d = int(min(np.ceil(DEFAULT_SAMPLING_FACTOR * n), m))
    if not n <= d <= m:
        raise ValueError("need n <= d <= m")
    S = sketching.sample_operator(op_family, d, m, as_key(seed),
                                  saso_k=DEFAULT_SASO_K)
    _, R_sk, J = dk.qrcp(S.apply(A))
    diag = np.abs(np.diag(R_sk))
    if diag.size == 0 or diag[0] == 0.0:
        return PivotedQR(np.zeros((m, 0)), np.zeros((0, n)), J, 0, R_sk)
    k = int(np.sum(diag > max(d, n) * _EPS * diag[0]))
    while k > 0:
        A_pre = dk.solve_triangular(
            R_sk[:k, :k], A[:, J[:k]].T, lower=False, trans="T"
        ).T
        try:
            Q, R_pre = chol_qr(A_pre)
            break
        except dk.CholeskyError as err:
            # sketch rank was over-estimated; retry below the failing pivot
            k = err.pivot - 1
    else:
        return PivotedQR(np.zeros((m, 0)), np.zeros((0, n)), J, 0, R_sk)
    R = R_pre @ R_sk[:k, :]
    return PivotedQR(Q, R, J, k, R_sk)
