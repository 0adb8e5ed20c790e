"""Sketch-and-solve and sketch-and-precondition drivers for saddle point
problems.

A saddle point problem is defined by a tall m-by-n matrix A, vectors b (m)
and c (n), and a regularization parameter mu >= 0.  The primal problem
minimizes ||Ax - b||^2 + mu ||x||^2 + 2 c^T x; the dual minimizes
||A^T y - c||^2 + mu ||y - b||^2 (for mu = 0: min ||y - b|| s.t. A^T y = c).
For rank-deficient A with mu = 0 the drivers return the canonical limiting
solutions x = (A^T A)^+ (A^T b - c), y = (A^T)^+ c + (I - A A^+) b.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.sparse

from . import detkernels as dk
from . import lowrank
from . import sketching
from .detkernels import IterativeReport, LinearOperator
from .rng import as_key

_EPS = np.finfo(float).eps

DEFAULT_SAMPLING_FACTOR = 4.0
DEFAULT_PRECOND_FAMILY = "saso"


@dataclass(frozen=True)
class SaddleProblem:
    """(A, b, c, mu) with A m-by-n, m >= n, mu >= 0."""

    A: np.ndarray
    b: np.ndarray
    c: np.ndarray = None
    mu: float = 0.0

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        m, n = A.shape
        if m < n:
            raise ValueError("saddle problems require a tall data matrix (m >= n)")
        if self.mu < 0:
            raise ValueError("mu must be nonnegative")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", np.zeros(m) if self.b is None
                           else np.asarray(self.b, dtype=float))
        object.__setattr__(self, "c", np.zeros(n) if self.c is None
                           else np.asarray(self.c, dtype=float))


@dataclass
class SaddleSolution:
    x: np.ndarray
    y: np.ndarray
    report: IterativeReport


@dataclass
class Preconditioner:
    """n-by-k matrix M orthogonalizing the (implicitly augmented) sketch.

    ``aug_left`` holds the left singular vectors of the augmented sketch
    (the column-orthonormal stack [U D1; V D2]) when built from an SVD.
    """

    M: np.ndarray
    mu_used: float
    svd: tuple | None = None  # (U, sigma, V) of the raw sketch
    aug_left: np.ndarray | None = None

    @property
    def rank(self) -> int:
        return self.M.shape[1]


def load_saddle_problem(a_path: str, b_path: str = None, c_path: str = None,
                        mu: float = 0.0) -> SaddleProblem:
    """Load A from a Matrix Market file and b, c from plain-text vectors."""
    A = scipy.io.mmread(a_path)
    A = np.asarray(A.todense() if scipy.sparse.issparse(A) else A, dtype=float)
    b = np.loadtxt(b_path).ravel() if b_path and os.path.exists(b_path) else None
    c = np.loadtxt(c_path).ravel() if c_path and os.path.exists(c_path) else None
    return SaddleProblem(A, b, c, mu)


def _sketch_dim(n: int, m: int, sampling_factor: float) -> int:
    return int(min(int(np.ceil(n * sampling_factor)), m))


def _lsqr_restarted(op: LinearOperator, rhs: np.ndarray, tol: float,
                    maxit: int, z0: np.ndarray | None):
    """LSQR plus one restart against the freshly recomputed residual.

    The recursively-updated quantities inside LSQR drift once the iterate is
    nearly converged; re-solving the correction system with an exact initial
    residual restores the attainable accuracy at a modest iteration cost.
    """
    z, rep = dk.lsqr(op, rhs, tol=tol, maxit=maxit, z0=z0)
    total = rep.iterations
    history = list(rep.residual_history)
    converged = rep.converged
    if 0 < total < maxit and tol > 0:
        r_true = rhs - op.apply(z)
        floor = 100 * np.finfo(float).eps * (
            np.linalg.norm(rhs) + rep.op_norm_est * np.linalg.norm(z))
        if np.linalg.norm(r_true) > floor:
            dz, rep2 = dk.lsqr(op, r_true, tol=tol, maxit=maxit - total)
            z = z + dz
            total += rep2.iterations
            history.extend(rep2.residual_history)
            converged = converged and rep2.converged
    return z, IterativeReport(total, converged, history)


def sketch_and_solve_ols(A, b, d: int, seed=0, op_family: str = "gaussian"):
    """Sketch-and-solve for overdetermined least squares: minimize the
    sketched residual ||S(Ax - b)|| directly.

    Returns (x_hat, A_sk, b_sk); the sketched data supports bootstrap error
    estimation downstream.  A rank-deficient sketch falls back to the
    pseudoinverse (SVD) path.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = A.shape
    if not n <= d <= m:
        raise ValueError("need n <= d <= m")
    S = sketching.sample_operator(op_family, d, m, as_key(seed))
    Ab_sk = S.apply(np.column_stack([A, b]))
    A_sk, b_sk = Ab_sk[:, :n], Ab_sk[:, n]
    Q, R = dk.qr_econ(A_sk)
    diag = np.abs(np.diag(R))
    if diag.min() > n * _EPS * max(diag.max(), 1e-300):
        x = dk.solve_triangular(R, Q.T @ b_sk)
    else:
        U, s, V = dk.svd(A_sk)
        r = dk.numerical_rank(s, A_sk.shape)
        x = V[:, :r] @ ((U[:, :r].T @ b_sk) / s[:r])
    return x, A_sk, b_sk


def spo1(A, b, tol: float = 1e-12, maxit: int = 100,
         sampling_factor: float = DEFAULT_SAMPLING_FACTOR, seed=0,
         op_family: str = DEFAULT_PRECOND_FAMILY):
    """Sketch-and-precondition for overdetermined least squares.

    Sketches [A, b], takes an economic QR of the sketch, presolves in the
    sketched space, and runs LSQR on A R^{-1} warm-started at the presolve.
    An exactly singular R falls back to the SVD-preconditioned saddle
    driver with mu = 0.

    Returns (x, IterativeReport).
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = A.shape
    if m < n:
        raise ValueError("spo1 requires m >= n")
    if not np.any(b):
        return np.zeros(n), IterativeReport(0, True, [])
    d = _sketch_dim(n, m, sampling_factor)
    S = sketching.sample_operator(op_family, d, m, as_key(seed))
    Ab_sk = S.apply(np.column_stack([A, b]))
    A_sk, b_sk = Ab_sk[:, :n], Ab_sk[:, n]
    Q, R = dk.qr_econ(A_sk)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag.min() <= n * _EPS * max(diag.max(), 1e-300):
        sol = sps2(SaddleProblem(A, b, None, 0.0), tol=tol, maxit=maxit,
                   sampling_factor=sampling_factor, seed=seed,
                   op_family=op_family)
        return sol.x, sol.report
    z0 = Q.T @ b_sk
    precond = LinearOperator(
        m, n,
        lambda v: A @ dk.solve_triangular(R, v),
        lambda v: dk.solve_triangular(R, A.T @ v, trans="T"),
    )
    z, report = _lsqr_restarted(precond, b, tol, maxit, z0)
    return dk.solve_triangular(R, z), report


def sps2(problem: SaddleProblem, tol: float = 1e-12, maxit: int = 100,
         sampling_factor: float = DEFAULT_SAMPLING_FACTOR, seed=0,
         op_family: str = DEFAULT_PRECOND_FAMILY) -> SaddleSolution:
    """Sketch, transform a saddle point problem to least squares, and
    precondition.

    Handles mu > 0 by implicit augmentation with sqrt(mu) I, builds an SVD
    preconditioner from the augmented sketch, shifts b so the linear term
    vanishes, presolves, and runs LSQR on A_aug M.  For mu = 0 with c
    outside the row space, c is implicitly projected onto it (the canonical
    limiting solution is unchanged by that projection).
    """
    A, b, c, mu = problem.A, problem.b, problem.c, problem.mu
    m, n = A.shape
    d = _sketch_dim(n, m, sampling_factor)
    S = sketching.sample_operator(op_family, d, m, as_key(seed))

    if mu > 0:
        A_aug = np.vstack([A, np.sqrt(mu) * np.eye(n)])
        b_aug = np.concatenate([b, np.zeros(n)])

        def S_apply(M):
            return np.vstack([S.apply(M[:m]), M[m:]])

        def St_apply(M):
            return np.vstack([S.T.apply(M[:d]), M[d:]])
    else:
        A_aug, b_aug = A, b

        def S_apply(M):
            return S.apply(M)

        def St_apply(M):
            return S.T.apply(M)

    A_sk = S_apply(A_aug)
    U, sig, V = dk.svd(A_sk)
    r = dk.numerical_rank(sig, A_sk.shape)
    U, sig, V = U[:, :r], sig[:r], V[:, :r]
    M = V / sig

    b_mod = b_aug.copy()
    if np.any(c):
        v_hat = U @ (V.T @ c / sig)
        b_shift = St_apply(v_hat[:, None])[:, 0]
        b_mod = b_mod - b_shift

    z0 = U.T @ S_apply(b_mod[:, None])[:, 0]
    precond = LinearOperator(
        A_aug.shape[0], r,
        lambda v: A_aug @ (M @ v),
        lambda v: M.T @ (A_aug.T @ v),
    )
    z, report = _lsqr_restarted(precond, b_mod, tol, maxit, z0)
    x = M @ z
    y = b[:m] - A[:m, :] @ x
    return SaddleSolution(x, y, report)


def make_precond_qr(A_sk, mu: float = 0.0) -> Preconditioner:
    """Triangular preconditioner from the sketch.

    mu = 0: M = R^{-1} from Householder QR of A_sk (full column rank
    required).  mu > 0: M = R^{-1} with R the Cholesky factor of
    A_sk^T A_sk + mu I; a Cholesky failure propagates so the caller can
    switch to the SVD path.
    """
    A_sk = np.asarray(A_sk, dtype=float)
    d, n = A_sk.shape
    if d < n:
        raise ValueError("need a tall sketch (d >= n)")
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    if mu == 0.0:
        _, R = dk.qr_econ(A_sk)
        diag = np.abs(np.diag(R))
        if diag.size == 0 or diag.min() <= n * _EPS * max(diag.max(), 1e-300):
            raise np.linalg.LinAlgError(
                "sketch is numerically rank-deficient; use make_precond_svd"
            )
    else:
        R = dk.chol(A_sk.T @ A_sk + mu * np.eye(n))
    M = dk.solve_triangular(R, np.eye(n))
    return Preconditioner(M, mu)


def make_precond_svd(A_sk, mu: float = 0.0) -> Preconditioner:
    """SVD preconditioner from the sketch, with pseudoinverse semantics.

    mu = 0: M keeps one column v_i / sigma_i per singular value above the
    numerical-rank cutoff.  mu > 0: M = V diag(1/sigma_hat) with
    sigma_hat = sqrt(sigma^2 + mu), and the left singular vectors of the
    augmented sketch are returned as the column-orthonormal [U D1; V D2].
    """
    A_sk = np.asarray(A_sk, dtype=float)
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    U, sig, V = dk.svd(A_sk)
    if mu == 0.0:
        r = dk.numerical_rank(sig, A_sk.shape)
        M = V[:, :r] / sig[:r]
        return Preconditioner(M, 0.0, svd=(U[:, :r], sig[:r], V[:, :r]))
    sig_hat = np.sqrt(sig ** 2 + mu)
    M = V / sig_hat
    aug_left = np.vstack([U * (sig / sig_hat), V * (np.sqrt(mu) / sig_hat)])
    return Preconditioner(M, mu, svd=(U, sig, V), aug_left=aug_left)


def limiting_solution(A, b, c):
    """Canonical (mu -> 0) saddle point solutions via a dense SVD:
    x0 = (A^T A)^+ (A^T b - c) and y0 = (A^T)^+ c + (I - A A^+) b."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    U, sig, V = dk.svd(A)
    r = dk.numerical_rank(sig, A.shape)
    U, sig, V = U[:, :r], sig[:r], V[:, :r]
    x0 = V @ ((V.T @ (A.T @ b - c)) / sig ** 2)
    y0 = U @ ((V.T @ c) / sig) + (b - U @ (U.T @ b))
    return x0, y0


def nystrom_precond(evd: lowrank.EVDFactors, mu: float, n: int):
    """P^{-1} = V diag(lam + mu)^{-1} V^T + (mu + lam_min)^{-1} (I - V V^T)
    as a callable, from a Nystrom eigendecomposition."""
    V, lam = evd.V, evd.lam
    lam_floor = lam[-1] if lam.size else 0.0
    tail = 1.0 / (mu + lam_floor)

    def apply_pinv(v):
        if V.shape[1] == 0:
            return tail * v
        w = V.T @ v
        return V @ (w / (lam + mu)) + tail * (v - V @ w)

    return apply_pinv


def nystrom_pcg(G, mu: float, h, rank: int = 10, oversample: int = 5,
                tol: float = 1e-10, maxit: int = 200, seed=0,
                power_passes: int = 0):
    """Nystrom-preconditioned conjugate gradient for (G + mu I) x = h.

    Builds a rank-``rank`` Nystrom eigendecomposition of the psd matrix G,
    preconditions with it, and runs PCG.  Returns (x, IterativeReport).
    """
    if mu <= 0:
        raise ValueError("nystrom_pcg requires mu > 0")
    G = np.asarray(G, dtype=float)
    h = np.asarray(h, dtype=float)
    n = h.size
    if rank + oversample > n:
        raise ValueError("need rank + oversample <= n")
    evd = lowrank.evd2(G, rank, s=oversample, seed=seed,
                       power_passes=power_passes)
    apply_pinv = nystrom_precond(evd, mu, n)
    return dk.pcg(G, mu, h, apply_Pinv=apply_pinv, tol=tol, maxit=maxit)
