"""Data-oblivious sketching operators.

Families covered: dense iid operators (gaussian, rademacher, uniform), Haar
row/column-orthonormal operators, short-axis-sparse operators (SASO),
row-sampling operators, and subsampled randomized fast trigonometric
transforms built on the Walsh-Hadamard transform.

All operators are sampled as pure functions of their arguments, including the
seed, and are immutable afterwards.  Entry (i, j) of a wide dense d-by-m
operator is drawn at counter ``i + d*j``; tall operators are transpose views
of wide ones, never separate kernels.  Operators serialize to small JSON
descriptors, never as dense data.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import rng
from .rng import RngKey, as_key

DENSE_FAMILIES = ("gaussian", "rademacher", "uniform", "haar")


def _as_2d(A):
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        return A[:, None], True
    return A, False


class _OperatorBase:
    """Common apply/transpose plumbing shared by all operator types."""

    def apply(self, A, side: str = "left") -> np.ndarray:
        """Compute S @ A (side='left') or A @ S (side='right')."""
        A2, was_vec = _as_2d(A)
        if side == "left":
            out = self._apply_left(A2)
        elif side == "right":
            out = self._apply_right(A2)
        else:
            raise ValueError("side must be 'left' or 'right'")
        return out[:, 0] if was_vec and out.ndim == 2 else out

    def _apply_left(self, A):
        return self.matrix() @ A

    def _apply_right(self, A):
        return A @ self.matrix()

    def __matmul__(self, A):
        return self.apply(A, side="left")

    def __rmatmul__(self, A):
        return self.apply(A, side="right")

    @property
    def shape(self):
        return (self.d, self.m)

    @property
    def T(self):
        return TransposedOp(self)


@dataclass(frozen=True)
class TransposedOp(_OperatorBase):
    """Lazy transpose view of another operator (the canonical wide/tall
    duality: no duplicated kernels)."""

    base: _OperatorBase

    @property
    def d(self):
        return self.base.m

    @property
    def m(self):
        return self.base.d

    @property
    def T(self):
        return self.base

    def matrix(self):
        return self.base.matrix().T

    def _apply_left(self, A):
        # (S^T) A = (A^T S)^T
        return self.base._apply_right(A.T).T

    def _apply_right(self, A):
        return self.base._apply_left(A.T).T


@dataclass(frozen=True)
class DenseSketchOp(_OperatorBase):
    """Dense d-by-m operator with iid entries, or a Haar orthonormal one.

    ``orientation`` records which axis is short: wide requires d <= m and
    tall requires d >= m.  Entries are unscaled (rademacher entries are
    exactly +-1); drivers apply any 1/sqrt(d) normalization themselves.
    """

    family: str
    d: int
    m: int
    seed: RngKey
    orientation: str = "wide"
    _mat: np.ndarray = field(default=None, repr=False, compare=False)

    def matrix(self) -> np.ndarray:
        return self._mat

    def to_json(self) -> str:
        return json.dumps(
            {
                "kind": "dense",
                "family": self.family,
                "d": self.d,
                "m": self.m,
                "orientation": self.orientation,
                "seed": {"key": self.seed.key, "offset": self.seed.counter_offset},
            }
        )


def _gaussian_grid(seed: RngKey, d: int, m: int) -> np.ndarray:
    # Column-major counter layout on the (d, m) grid, pairs along the grid.
    return rng.gaussian_stream(seed, d * m).reshape((d, m), order="F")


def _entry_grid(family: str, seed: RngKey, d: int, m: int) -> np.ndarray:
    if family == "gaussian":
        return _gaussian_grid(seed, d, m)
    u = rng.uniform_grid(seed, d, m)
    if family == "rademacher":
        return np.where(u < 0.5, -1.0, 1.0)
    if family == "uniform":
        return 2.0 * u - 1.0
    raise ValueError(f"unknown dense family {family!r}")


def sample_dense(family: str, d: int, m: int, seed, orientation: str = "wide") -> DenseSketchOp:
    """Sample a dense sketching operator of shape (d, m).

    Haar operators come from QR of a Gaussian sample with the triangular
    factor's diagonal signs fixed, so the result is Haar-distributed and
    deterministic given the seed.
    """
    seed = as_key(seed)
    if d < 1 or m < 1:
        raise ValueError("operator dimensions must be positive")
    if orientation not in ("wide", "tall"):
        raise ValueError("orientation must be 'wide' or 'tall'")
    if orientation == "wide" and d > m:
        raise ValueError("wide operators require d <= m")
    if orientation == "tall" and d < m:
        raise ValueError("tall operators require d >= m")
    if family == "haar":
        if orientation == "wide":
            G = _entry_grid("gaussian", seed, d, m)
            Q, R = np.linalg.qr(G.T)
            Q = Q * np.sign(np.diag(R))
            mat = Q.T
        else:
            G = _entry_grid("gaussian", seed, d, m)
            Q, R = np.linalg.qr(G)
            mat = Q * np.sign(np.diag(R))
    elif family in DENSE_FAMILIES:
        mat = _entry_grid(family, seed, d, m)
    else:
        raise ValueError(f"unknown dense family {family!r}")
    return DenseSketchOp(family, d, m, seed, orientation, mat)


def _fisher_yates_partial(u: np.ndarray, n: int, k: int) -> np.ndarray:
    """First k entries of a Fisher-Yates shuffle of range(n) driven by the
    uniforms ``u`` (one per step): at step t swap position t with
    ``t + floor(u[t] * (n - t))``."""
    pool = np.arange(n)
    for t in range(k):
        r = t + int(u[t] * (n - t))
        pool[t], pool[r] = pool[r], pool[t]
    return pool[:k].copy()


@dataclass(frozen=True)
class SASO(_OperatorBase):
    """Short-axis-sparse operator: every short-axis vector has exactly k
    nonzeros with values +-1/sqrt(k).

    Wide by construction (d <= m, columns are the short axis); use ``.T``
    for the tall dual.  Column j draws its 2k uniforms at counters
    ``[2kj, 2kj + 2k)``: the first k drive the index choice, the rest the
    signs.

    Caveat: applying a SASO reads only the entries its sparsity pattern
    touches, so a NaN or Inf in an untouched entry of the data does not
    propagate to the sketch.
    """

    d: int
    m: int
    k: int
    seed: RngKey
    method: str
    rows: np.ndarray = field(repr=False, compare=False)  # (k, m) row indices
    layout: str = "csc"

    def matrix(self, dense: bool = False):
        S = self._sparse()
        return S.toarray() if dense else S

    def _values(self) -> np.ndarray:
        u = rng.uniform_grid(self.seed, 2 * self.k, self.m)[self.k:, :]
        return np.where(u < 0.5, -1.0, 1.0) / np.sqrt(self.k)

    def _sparse(self):
        vals = self._values()
        indptr = np.arange(0, self.k * (self.m + 1), self.k)
        S = sp.csc_array(
            (vals.ravel(order="F"), self.rows.ravel(order="F"), indptr),
            shape=(self.d, self.m),
        )
        return S.tocsr() if self.layout == "csr" else S

    def _apply_left(self, A):
        # NaN/Inf in rows of A never touched by the pattern do not propagate.
        return self._sparse() @ A

    def _apply_right(self, A):
        return A @ self._sparse()

    def nnz_per_column(self) -> np.ndarray:
        return np.array([len(np.unique(self.rows[:, j])) for j in range(self.m)])

    def to_json(self) -> str:
        return json.dumps(
            {
                "kind": "saso",
                "d": self.d,
                "m": self.m,
                "k": self.k,
                "method": self.method,
                "seed": {"key": self.seed.key, "offset": self.seed.counter_offset},
            }
        )


def sample_saso(d: int, m: int, k: int, seed, method: str = "replacement_free",
                layout: str = "csc") -> SASO:
    """Sample a wide d-by-m SASO with k nonzeros per column.

    ``replacement_free`` draws each column's row indices uniformly without
    replacement via partial Fisher-Yates; ``blocked`` takes one index from
    each of k contiguous blocks of ceil(d/k) rows.
    """
    seed = as_key(seed)
    if not 1 <= k <= d:
        raise ValueError("need 1 <= k <= d for a wide SASO")
    if d > m:
        raise ValueError("SASOs are wide (d <= m); use .T for the tall dual")
    if method not in ("replacement_free", "blocked"):
        raise ValueError(f"unknown SASO method {method!r}")
    u = rng.uniform_grid(seed, 2 * k, m)[:k, :]
    rows = np.empty((k, m), dtype=np.int64)
    if method == "replacement_free":
        for j in range(m):
            rows[:, j] = _fisher_yates_partial(u[:, j], d, k)
    else:
        bsize = -(-d // k)  # ceil(d / k)
        starts = np.arange(k) * bsize
        lengths = np.minimum(starts + bsize, d) - starts
        if np.any(lengths <= 0):
            raise ValueError("blocked method needs k blocks of positive size")
        rows = (starts[:, None] + np.floor(u * lengths[:, None])).astype(np.int64)
    return SASO(d, m, k, seed, method, rows, layout)


def apply_saso(S: SASO, A, side: str = "left") -> np.ndarray:
    """Multiply by a SASO (or a transposed view of one)."""
    return S.apply(A, side=side)


@dataclass(frozen=True)
class RowSampleOp(_OperatorBase):
    """d-by-m row sampler: row i of the operator is e_{t_i}^T / sqrt(d q_{t_i})
    with t_i drawn iid from the distribution q."""

    d: int
    m: int
    probs: np.ndarray = field(repr=False)
    indices: np.ndarray = field(repr=False)
    scales: np.ndarray = field(repr=False)
    seed: RngKey = RngKey(0)

    def matrix(self, dense: bool = False):
        S = sp.csr_array(
            (self.scales, self.indices, np.arange(self.d + 1)),
            shape=(self.d, self.m),
        )
        return S.toarray() if dense else S

    def _apply_left(self, A):
        return self.scales[:, None] * A[self.indices, :]

    def _apply_right(self, A):
        out = np.zeros((A.shape[0], self.m))
        np.add.at(out, (slice(None), self.indices), A * self.scales[None, :])
        return out

    def to_json(self) -> str:
        return json.dumps(
            {
                "kind": "row_sampler",
                "d": self.d,
                "m": self.m,
                "seed": {"key": self.seed.key, "offset": self.seed.counter_offset},
            }
        )


def sample_row_sampler(d: int, q, seed) -> RowSampleOp:
    """Sample a d-row sampling operator for the distribution q over [m]."""
    seed = as_key(seed)
    q = np.asarray(q, dtype=float)
    if np.any(q < 0):
        raise ValueError("sampling probabilities must be nonnegative")
    if abs(q.sum() - 1.0) > 1e-12:
        raise ValueError("sampling probabilities must sum to 1 within 1e-12")
    m = q.size
    cdf = np.cumsum(q)
    u = rng.uniform_stream(seed, d)
    idx = np.minimum(np.searchsorted(cdf, u, side="right"), m - 1)
    # guard against landing on a zero-probability tail index via rounding
    if np.any(q[idx] == 0):
        bad = q[idx] == 0
        idx[bad] = np.argmax(q)
    scales = 1.0 / np.sqrt(d * q[idx])
    return RowSampleOp(d, m, q, idx, scales, seed)


def next_pow_two(m: int) -> int:
    p = 1
    while p < m:
        p *= 2
    return p


def fwht(X: np.ndarray) -> np.ndarray:
    """Unnormalized Walsh-Hadamard transform along axis 0 (length a power of
    two), vectorized over remaining axes."""
    X = np.array(X, dtype=float)
    n = X.shape[0]
    if n & (n - 1):
        raise ValueError("fwht length must be a power of two")
    h = 1
    shape_rest = X.shape[1:]
    while h < n:
        X = X.reshape(n // (2 * h), 2, h, *shape_rest)
        a = X[:, 0].copy()
        b = X[:, 1].copy()
        X[:, 0] = a + b
        X[:, 1] = a - b
        X = X.reshape(n, *shape_rest)
        h *= 2
    return X


@dataclass(frozen=True)
class SRFTOp(_OperatorBase):
    """Subsampled randomized Walsh-Hadamard transform.

    Acting on an m-vector x: flip signs, zero-pad to the next power of two
    m_pad, apply the orthonormal Walsh-Hadamard transform, keep d distinct
    coordinates, and scale by sqrt(m_pad/d) so the pre-sampling product is
    orthogonal.  The whole apply is O(m_pad log m_pad) per column.
    """

    d: int
    m: int
    m_pad: int
    signs: np.ndarray = field(repr=False, compare=False)
    coords: np.ndarray = field(repr=False, compare=False)
    seed: RngKey = RngKey(0)

    def matrix(self) -> np.ndarray:
        return self._apply_left(np.eye(self.m))

    def _apply_left(self, A):
        B = np.zeros((self.m_pad, A.shape[1]))
        B[: self.m] = self.signs[:, None] * A
        B = fwht(B)
        # sqrt(m_pad/d) * (H/sqrt(m_pad)) == 1/sqrt(d) on the raw transform
        return B[self.coords] / np.sqrt(self.d)

    def _apply_right(self, A):
        B = np.zeros((self.m_pad, A.shape[0]))
        B[self.coords] = A.T
        B = fwht(B)
        return (self.signs[None, :] * B[: self.m].T) / np.sqrt(self.d)

    def to_json(self) -> str:
        return json.dumps(
            {
                "kind": "srft",
                "d": self.d,
                "m": self.m,
                "seed": {"key": self.seed.key, "offset": self.seed.counter_offset},
            }
        )


def sample_srft(d: int, m: int, seed) -> SRFTOp:
    """Sample a d-by-m SRFT (d <= m).  Counters [0, m) drive the sign flips
    and [m, m + d) the coordinate sample."""
    seed = as_key(seed)
    if d > m:
        raise ValueError("SRFTs are wide (d <= m)")
    m_pad = next_pow_two(m)
    signs = rng.rademacher_stream(seed, m)
    u = rng.uniform_stream(seed.advance(m), d)
    coords = _fisher_yates_partial(u, m_pad, d)
    return SRFTOp(d, m, m_pad, signs, coords, seed)


def apply_srft(S: SRFTOp, A, side: str = "left") -> np.ndarray:
    """Multiply by an SRFT (or a transposed view of one)."""
    return S.apply(A, side=side)


@dataclass(frozen=True)
class DistortionReport:
    """Restricted singular values of an operator on a subspace, the induced
    condition number, and the scale-invariant effective distortion
    (kappa - 1) / (kappa + 1)."""

    sigma_max: float
    sigma_min: float
    cond: float
    eff_distortion: float


def distortion_diagnostics(S, U) -> DistortionReport:
    """Measure how an operator distorts the subspace spanned by the
    column-orthonormal matrix U.

    sigma_max/sigma_min are the extreme singular values of S @ U; a
    rank-deficient product gives effective distortion exactly 1.
    """
    U = np.asarray(U, dtype=float)
    gram_err = np.abs(U.T @ U - np.eye(U.shape[1])).max()
    if gram_err > 1e-8:
        raise ValueError("U must have orthonormal columns (to 1e-8)")
    SU = S.apply(U) if hasattr(S, "apply") else np.asarray(S) @ U
    svals = np.linalg.svd(SU, compute_uv=False)
    smax = float(svals[0]) if svals.size else 0.0
    smin = float(svals[-1]) if svals.size else 0.0
    if smin <= smax * np.finfo(float).eps or svals.size < U.shape[1]:
        return DistortionReport(smax, smin, np.inf, 1.0)
    cond = smax / smin
    return DistortionReport(smax, smin, cond, (cond - 1.0) / (cond + 1.0))


def sample_operator(family: str, d: int, m: int, seed, saso_k: int = 8):
    """Dispatch on family name; the one-stop constructor used by drivers.

    family is one of the dense families, 'saso', or 'srft'.
    """
    if family in DENSE_FAMILIES:
        return sample_dense(family, d, m, seed)
    if family == "saso":
        return sample_saso(d, m, min(saso_k, d), seed)
    if family == "srft":
        return sample_srft(d, m, seed)
    raise ValueError(f"unknown sketching family {family!r}")


def operator_from_json(s: str):
    """Rebuild an operator from its JSON descriptor."""
    desc = json.loads(s)
    seed = RngKey(desc["seed"]["key"], desc["seed"]["offset"])
    kind = desc["kind"]
    if kind == "dense":
        return sample_dense(desc["family"], desc["d"], desc["m"], seed,
                            desc.get("orientation", "wide"))
    if kind == "saso":
        return sample_saso(desc["d"], desc["m"], desc["k"], seed,
                           desc.get("method", "replacement_free"))
    if kind == "srft":
        return sample_srft(desc["d"], desc["m"], seed)
    raise ValueError(f"unknown operator kind {kind!r}")
