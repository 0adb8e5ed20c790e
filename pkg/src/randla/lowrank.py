"""Low-rank approximation drivers and their computational routines.

Contents: power-iteration sketch generation, rangefinders, three QB
decompositions (plain, fully adaptive, pass-efficient), QB-backed SVD and
Hermitian eigendecompositions, a Nystrom eigendecomposition for psd inputs,
one-sided interpolative decompositions, row/column subset selection, CUR,
and randomized norm estimators.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.sparse as sp

from . import detkernels as dk
from . import rng as _rng
from . import sketching
from .rng import as_key

_EPS = np.finfo(float).eps


def orth(Y: np.ndarray) -> np.ndarray:
    """Orthonormal basis for range(Y), dropping numerically null directions."""
    Y = np.asarray(Y, dtype=float)
    if Y.size == 0:
        return np.zeros((Y.shape[0], 0))
    U, s, _ = dk.svd(Y)
    r = dk.numerical_rank(s, Y.shape)
    return U[:, :r]


# ---------------------------------------------------------------------------
# factor containers
# ---------------------------------------------------------------------------

@dataclass
class QBFactors:
    """A ~ Q B with Q column-orthonormal and B = Q^T A."""

    Q: np.ndarray
    B: np.ndarray

    def approximation(self) -> np.ndarray:
        return self.Q @ self.B

    def save(self, prefix: str):
        scipy.io.mmwrite(f"{prefix}_Q.mtx", self.Q)
        scipy.io.mmwrite(f"{prefix}_B.mtx", self.B)


@dataclass
class SVDFactors:
    """A ~ U diag(sigma) V^T with orthonormal factors, sigma nonincreasing."""

    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray

    def approximation(self) -> np.ndarray:
        return (self.U * self.sigma) @ self.V.T

    def save(self, prefix: str):
        scipy.io.mmwrite(f"{prefix}_U.mtx", self.U)
        scipy.io.mmwrite(f"{prefix}_sigma.mtx", self.sigma[:, None])
        scipy.io.mmwrite(f"{prefix}_V.mtx", self.V)


@dataclass
class EVDFactors:
    """A ~ V diag(lam) V^T, eigenvalues sorted by decreasing magnitude."""

    V: np.ndarray
    lam: np.ndarray
    clamped: int = 0

    def approximation(self) -> np.ndarray:
        return (self.V * self.lam) @ self.V.T

    def save(self, prefix: str):
        scipy.io.mmwrite(f"{prefix}_V.mtx", self.V)
        scipy.io.mmwrite(f"{prefix}_lam.mtx", self.lam[:, None])


@dataclass
class OneSidedID:
    """Interpolative decomposition along one axis.

    Column ID: A ~ A[:, skeleton] @ M with M[:, skeleton] = I exactly.
    Row ID:    A ~ M @ A[skeleton, :] with M[skeleton, :] = I exactly.
    """

    M: np.ndarray
    skeleton: np.ndarray
    axis: str

    def approximate(self, A: np.ndarray) -> np.ndarray:
        if self.axis == "column":
            return A[:, self.skeleton] @ self.M
        return self.M @ A[self.skeleton, :]

    def save(self, prefix: str):
        scipy.io.mmwrite(f"{prefix}_M.mtx", self.M)
        with open(f"{prefix}_skeleton.json", "w") as f:
            json.dump({"axis": self.axis, "skeleton": self.skeleton.tolist()}, f)


@dataclass
class CURFactors:
    """A ~ A[:, J] @ U @ A[I, :]."""

    J: np.ndarray
    U: np.ndarray
    I: np.ndarray

    def approximate(self, A: np.ndarray) -> np.ndarray:
        return A[:, self.J] @ self.U @ A[self.I, :]

    def save(self, prefix: str):
        scipy.io.mmwrite(f"{prefix}_U.mtx", self.U)
        with open(f"{prefix}_indices.json", "w") as f:
            json.dump({"J": self.J.tolist(), "I": self.I.tolist()}, f)


# ---------------------------------------------------------------------------
# data-aware sketching via power iteration
# ---------------------------------------------------------------------------

def _tall_oblivious(family: str, nrows: int, k: int, seed) -> np.ndarray:
    """Materialized tall nrows-by-k operator (transpose of a wide sample)."""
    op = sketching.sample_operator(family, k, nrows, seed)
    M = op.T.matrix()
    if sp.issparse(M):
        M = M.toarray()
    return np.asarray(M, dtype=float)


def tsog1(A, k: int, p: int = 2, q: int = 1, seed=0, family: str = "gaussian") -> np.ndarray:
    """Tall sketching operator for right-sketching A, sharpened by a p-step
    power method.

    Makes exactly p products with A or A^T; a stabilizing orthogonalization
    runs after every q products.  p = 0 returns an oblivious operator
    without touching A.  Odd p starts from an m-by-k operator hit by A^T.
    """
    A = np.asanyarray(A, dtype=float)
    m, n = A.shape
    if p < 0 or q < 1:
        raise ValueError("need p >= 0 and q >= 1")
    seed = as_key(seed)
    p_done = 0
    if p % 2 == 0:
        S = _tall_oblivious(family, n, k, seed)
    else:
        S = A.T @ _tall_oblivious(family, m, k, seed)
        p_done += 1
        if p_done % q == 0:
            S = _stabilize(S)
    while p - p_done >= 2:
        S = A @ S
        p_done += 1
        if p_done % q == 0:
            S = _stabilize(S)
        S = A.T @ S
        p_done += 1
        if p_done % q == 0:
            S = _stabilize(S)
    return S


def _stabilize(S: np.ndarray) -> np.ndarray:
    Q = np.linalg.qr(S)[0]
    return Q


def rf1(A, k: int, seed=0, power_passes: int = 2, family: str = "gaussian") -> np.ndarray:
    """Rangefinder: orthonormal basis for the range of a single row sketch
    A @ tsog1(A, k).  Returns at most min(k, rank A) columns."""
    A = np.asanyarray(A, dtype=float)
    S = tsog1(A, k, p=power_passes, seed=seed, family=family)
    return orth(A @ S)


# ---------------------------------------------------------------------------
# QB decompositions
# ---------------------------------------------------------------------------

def qb1(A, k: int, seed=0, power_passes: int = 2, family: str = "gaussian") -> QBFactors:
    """One-shot QB: Q from the rangefinder, B = Q^T A."""
    A = np.asarray(A, dtype=float)
    Q = rf1(A, k, seed=seed, power_passes=power_passes, family=family)
    return QBFactors(Q, Q.T @ A)


# Periodic exact recomputation of the tracked residual counters the
# cancellation risk in the downdating recurrence.
_QB2_RECOMPUTE_PERIOD = 8


def qb2(A, k: int, tol: float = 0.0, block_size: int | None = None, seed=0,
        power_passes: int = 2, family: str = "gaussian") -> QBFactors:
    """Fully adaptive blocked QB.

    Adds ``block_size`` columns per iteration (rangefinder on the deflated
    matrix, reorthogonalized against the current basis) until the tracked
    relative Frobenius error drops to ``tol`` or the rank budget ``k`` is
    reached.  ``tol <= 0`` with k = min(m, n) yields a full decomposition.
    """
    A = np.asarray(A, dtype=float)
    m, n = A.shape
    if block_size is None:
        block_size = max(1, min(k, 10))
    if block_size < 1:
        raise ValueError("block_size must be positive")
    seed = as_key(seed)

    anorm2 = np.linalg.norm(A, "fro") ** 2
    threshold2 = (max(tol, 0.0) ** 2) * anorm2
    Q = np.zeros((m, 0))
    B = np.zeros((0, n))
    A_work = A.copy()
    squared_error = anorm2
    d = 0
    block = 0
    while k > d:
        blk = min(block_size, k - d)
        Qi = rf1(A_work, blk, seed=seed.substream(block), power_passes=power_passes,
                 family=family)
        if Qi.shape[1] == 0:
            break
        Qi = orth(Qi - Q @ (Q.T @ Qi))
        if Qi.shape[1] == 0:
            break
        Bi = Qi.T @ A_work
        B = np.vstack([B, Bi])
        Q = np.hstack([Q, Qi])
        d += Qi.shape[1]
        A_work -= Qi @ Bi
        squared_error -= np.linalg.norm(Bi, "fro") ** 2
        block += 1
        if block % _QB2_RECOMPUTE_PERIOD == 0:
            squared_error = np.linalg.norm(A_work, "fro") ** 2
        if max(squared_error, 0.0) <= threshold2:
            break
    return QBFactors(Q, B)


def qb3(A, k: int, tol: float = 0.0, block_size: int | None = None, seed=0,
        power_passes: int = 2, family: str = "gaussian") -> QBFactors:
    """Pass-efficient, partially adaptive QB.

    Computes G = A S and H = A^T G up front (one multiply with A and one
    with A^T) and never touches A inside the block loop.  Must not be
    called with k = min(m, n).
    """
    A = np.asanyarray(A, dtype=float)
    m, n = A.shape
    if k >= min(m, n):
        raise ValueError("qb3 requires k < min(m, n)")
    if block_size is None:
        block_size = max(1, min(k, 10))
    seed = as_key(seed)

    S = tsog1(A, k, p=power_passes, seed=seed, family=family)
    G = A @ S
    H = A.T @ G
    anorm2 = np.linalg.norm(A, "fro") ** 2
    threshold2 = (max(tol, 0.0) ** 2) * anorm2

    Q = np.zeros((m, 0))
    B = np.zeros((0, n))
    squared_error = anorm2
    max_blocks = -(-k // block_size)
    for i in range(max_blocks):
        bs, be = i * block_size, min((i + 1) * block_size, k)
        Si = S[:, bs:be]
        Yi = G[:, bs:be] - Q @ (B @ Si)
        Qi, Ri = np.linalg.qr(Yi)
        Qi = Qi - Q @ (Q.T @ Qi)
        Qi, Rhat = np.linalg.qr(Qi)
        Ri = Rhat @ Ri
        # The recurrence uses Y_i^T Q' B, written with mismatched shapes in
        # some statements of the algorithm; this is the consistent form.
        Bi = H[:, bs:be].T - (Yi.T @ Q) @ B - (B @ Si).T @ B
        Bi = dk.solve_triangular(Ri, Bi, lower=False, trans="T")
        B = np.vstack([B, Bi])
        Q = np.hstack([Q, Qi])
        squared_error -= np.linalg.norm(Bi, "fro") ** 2
        if max(squared_error, 0.0) <= threshold2:
            break
    return QBFactors(Q, B)


# ---------------------------------------------------------------------------
# spectral drivers
# ---------------------------------------------------------------------------

def svd1(A, k: int, tol: float = 0.0, s: int = 5, seed=0, power_passes: int = 2,
         family: str = "gaussian") -> SVDFactors:
    """QB-backed low-rank SVD, truncated to rank at most k (the QB phase may
    use rank up to k + s)."""
    A = np.asarray(A, dtype=float)
    qb = qb2(A, k + s, tol=tol, seed=seed, power_passes=power_passes, family=family)
    r = min(k, qb.Q.shape[1])
    U, sig, V = dk.svd(qb.B)
    U = qb.Q @ U[:, :r]
    return SVDFactors(U, sig[:r], V[:, :r])


def evd1(A, k: int, tol: float = 0.0, s: int = 5, seed=0, power_passes: int = 2,
         family: str = "gaussian") -> EVDFactors:
    """QB-backed low-rank eigendecomposition of a Hermitian matrix; the QB
    phase runs at tolerance tol/2 so the symmetrized approximation meets
    tol."""
    A = np.asarray(A, dtype=float)
    scale = np.abs(A).max() if A.size else 0.0
    if A.shape[0] != A.shape[1] or np.abs(A - A.T).max() > 1e-10 * max(scale, 1e-300):
        raise ValueError("evd1 requires a Hermitian input (not symmetrized silently)")
    qb = qb2(A, k + s, tol=tol / 2.0, seed=seed, power_passes=power_passes,
             family=family)
    C = qb.B @ qb.Q
    C = 0.5 * (C + C.T)
    lam, U = dk.eigh(C)
    order = np.argsort(-np.abs(lam))
    r = min(k, lam.size)
    order = order[:r]
    return EVDFactors(qb.Q @ U[:, order], lam[order])


def evd2(A, k: int, s: int = 5, seed=0, power_passes: int = 2,
         family: str = "gaussian") -> EVDFactors:
    """Nystrom low-rank eigendecomposition for psd matrices.

    Shifts by nu = sqrt(n) eps ||Y||_2 for stability, Cholesky-factors the
    core, and removes the shift from the recovered eigenvalues, dropping
    any that do not clear nu.  A Cholesky failure escalates the shift by
    10x, at most three times.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if A.shape[0] != A.shape[1]:
        raise ValueError("evd2 requires a square psd input")
    if k + s > n:
        raise ValueError("need k + s <= n")
    S = tsog1(A, k + s, p=power_passes, seed=seed, family=family)
    Y = A @ S
    ynorm = np.linalg.norm(Y, 2) if Y.size else 0.0
    if ynorm == 0.0:
        return EVDFactors(np.zeros((n, 0)), np.zeros(0))
    nu = np.sqrt(n) * _EPS * ynorm
    R = None
    for attempt in range(4):
        try:
            Yshift = Y + nu * S
            R = dk.chol(S.T @ Yshift)
            break
        except dk.CholeskyError:
            if attempt == 3:
                raise
            nu *= 10.0
    B = dk.solve_triangular(R, Yshift.T, lower=False, trans="T").T
    V, sig, _ = dk.svd(B)
    lam = sig ** 2
    r = min(k, int(np.sum(lam > nu)))
    lam = lam[:r] - nu
    clamped = int(np.sum(lam < 0))
    lam = np.maximum(lam, 0.0)
    return EVDFactors(V[:, :r], lam, clamped)


# ---------------------------------------------------------------------------
# one-sided ID, subset selection, CUR
# ---------------------------------------------------------------------------

def osid_qrcp(Y, k: int, axis: str = "column") -> OneSidedID:
    """Deterministic one-sided ID of Y via QRCP truncated at rank k.

    An exactly singular leading triangle reduces k to the numerical rank
    with a warning.  Row ID is the column ID of Y^T, transposed back.
    """
    Y = np.asarray(Y, dtype=float)
    if axis not in ("row", "column"):
        raise ValueError("axis must be 'row' or 'column'")
    if axis == "row":
        cid = osid_qrcp(Y.T, k, axis="column")
        return OneSidedID(cid.M.T, cid.skeleton, "row")
    ell, w = Y.shape
    if k > min(ell, w):
        raise ValueError("k cannot exceed min(Y.shape)")
    _, R, J = dk.qrcp(Y)
    diag = np.abs(np.diag(R))
    if diag.size and diag[0] > 0:
        k_num = int(np.sum(diag[:k] > min(ell, w) * _EPS * diag[0]))
    else:
        k_num = 0
    if k_num < k:
        warnings.warn(
            f"rank of leading triangle is {k_num} < k = {k}; reducing",
            RuntimeWarning,
        )
        k = k_num
    T = dk.solve_triangular(R[:k, :k], R[:k, k:], lower=False)
    X = np.zeros((k, w))
    X[:, J] = np.hstack([np.eye(k), T])
    return OneSidedID(X, J[:k].copy(), "column")


def osid1(A, k: int, s: int = 5, axis: str = "column", seed=0,
          power_passes: int = 2, family: str = "gaussian") -> OneSidedID:
    """Randomized one-sided ID: a full-rank ID of a power-iteration sketch,
    re-used verbatim for the original matrix."""
    A = np.asarray(A, dtype=float)
    if k + s > min(A.shape):
        raise ValueError("need k + s <= min(A.shape)")
    if axis == "row":
        S = tsog1(A, k + s, p=power_passes, seed=seed, family=family)
        Y = A @ S
        return osid_qrcp(Y, k, axis="row")
    if axis == "column":
        S = tsog1(A.T, k + s, p=power_passes, seed=seed, family=family)
        Y = S.T @ A
        return osid_qrcp(Y, k, axis="column")
    raise ValueError("axis must be 'row' or 'column'")


def rocs1(A, k: int, s: int = 5, axis: str = "column", seed=0,
          power_passes: int = 2, family: str = "gaussian") -> np.ndarray:
    """Row or column subset selection: the first k QRCP pivots of a
    power-iteration sketch."""
    A = np.asarray(A, dtype=float)
    if axis == "row":
        S = tsog1(A, k + s, p=power_passes, seed=seed, family=family)
        Y = A @ S
        _, _, piv = dk.qrcp(Y.T)
    elif axis == "column":
        S = tsog1(A.T, k + s, p=power_passes, seed=seed, family=family)
        Y = S.T @ A
        _, _, piv = dk.qrcp(Y)
    else:
        raise ValueError("axis must be 'row' or 'column'")
    return piv[:k].copy()


def curd1(A, k: int, s: int = 5, seed=0, power_passes: int = 2,
          family: str = "gaussian") -> CURFactors:
    """CUR decomposition built from a randomized one-sided ID plus QRCP
    subset selection on the chosen panel; the linking matrix applies one
    pseudoinverse and tolerates rank deficiency."""
    A = np.asarray(A, dtype=float)
    m, n = A.shape
    if m >= n:
        cid = osid1(A, k, s=s, axis="column", seed=seed,
                    power_passes=power_passes, family=family)
        J = cid.skeleton
        _, _, I = dk.qrcp(A[:, J].T)
        I = I[: J.size].copy()
        U = cid.M @ np.linalg.pinv(A[I, :])
    else:
        rid = osid1(A, k, s=s, axis="row", seed=seed,
                    power_passes=power_passes, family=family)
        I = rid.skeleton
        _, _, J = dk.qrcp(A[I, :])
        J = J[: I.size].copy()
        U = np.linalg.pinv(A[:, J]) @ rid.M
    return CURFactors(J, U, I)


# ---------------------------------------------------------------------------
# norm estimation
# ---------------------------------------------------------------------------

def spectral_bound(apply_A, n: int, r: int = 10, beta: float = 2.0, seed=0) -> float:
    """Probabilistic spectral-norm bound beta sqrt(2/pi) max_j ||A z_j||
    over r Gaussian probes; valid with probability at least 1 - beta^-r."""
    if r < 1 or beta <= 1:
        raise ValueError("need r >= 1 and beta > 1")
    seed = as_key(seed)
    A = dk._as_apply(apply_A, n)
    best = 0.0
    stride = _rng.gaussian_counters_used(n)
    for j in range(r):
        z = _rng.gaussian_stream(seed.advance(j * stride), n)
        best = max(best, float(np.linalg.norm(A(z))))
    return beta * np.sqrt(2.0 / np.pi) * best


def frob_estimate(apply_A, n: int, r: int = 10, seed=0) -> float:
    """Unbiased estimate (1/r) ||A Z||_F^2 of the squared Frobenius norm,
    Z an n-by-r Gaussian probe matrix."""
    if r < 1:
        raise ValueError("need r >= 1")
    seed = as_key(seed)
    A = dk._as_apply(apply_A, n)
    total = 0.0
    stride = _rng.gaussian_counters_used(n)
    for j in range(r):
        z = _rng.gaussian_stream(seed.advance(j * stride), n)
        total += float(np.linalg.norm(A(z)) ** 2)
    return total / r
