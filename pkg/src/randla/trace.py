"""Stochastic trace estimation for implicit operators: Girard-Hutchinson,
Hutch++ (deflation + Girard-Hutchinson on the remainder), and stochastic
Lanczos quadrature for trace(f(B)).

Probes draw per-probe derived seeds, so results do not depend on evaluation
order or scheduling.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from . import detkernels as dk
from . import lowrank
from . import rng as _rng
from .rng import as_key

PROBE_DISTRIBUTIONS = ("rademacher", "gaussian", "sphere")


@dataclass
class TraceEstimate:
    """value = mean(samples); sample_variance is the unbiased variance."""

    value: float
    samples: np.ndarray
    sample_variance: float
    probes_used: int


@dataclass
class QuadratureRule:
    """Gaussian quadrature rule for one probe's spectral measure: nodes are
    Ritz values, weights sum to the squared probe norm."""

    nodes: np.ndarray
    weights: np.ndarray


def _make_estimate(samples) -> TraceEstimate:
    samples = np.asarray(samples, dtype=float)
    m = samples.size
    var = float(np.var(samples, ddof=1)) if m > 1 else 0.0
    return TraceEstimate(float(samples.mean()), samples, var, m)


def _probe(dist: str, key, n: int) -> np.ndarray:
    if dist == "rademacher":
        return _rng.rademacher_stream(key, n)
    if dist == "gaussian":
        return _rng.gaussian_stream(key, n)
    if dist == "sphere":
        g = _rng.gaussian_stream(key, n)
        return g * (np.sqrt(n) / np.linalg.norm(g))
    raise ValueError(f"unknown probe distribution {dist!r}")


def girard_hutchinson(apply_A, n: int, m: int, dist: str = "rademacher",
                      seed=0) -> TraceEstimate:
    """Average of m quadratic forms w^T A w over isotropic probes
    (E[w w^T] = I for every supported distribution)."""
    if m < 1:
        raise ValueError("need at least one probe")
    seed = as_key(seed)
    A = dk._as_apply(apply_A, n)
    samples = np.empty(m)
    for i in range(m):
        w = _probe(dist, seed.substream(i), n)
        samples[i] = w @ A(w)
    return _make_estimate(samples)


def hutch_pp(apply_A, n: int, m: int, seed=0, dist: str = "rademacher",
             sketch_fraction: float = 1.0 / 3.0) -> TraceEstimate:
    """Hutch++: deflate with Q = orth(A S), take trace(Q^T A Q) exactly, and
    run Girard-Hutchinson on the deflated remainder.

    The matrix-vector budget m splits as: floor(m * sketch_fraction)
    columns for S, as many again for A Q, and the rest (plus any slack when
    orth drops columns) as probes.  Requires m >= 6.

    Per-probe samples include the exact deflated part, so value ==
    mean(samples) and the variance reflects only the residual estimator.
    """
    if m < 6:
        raise ValueError("hutch_pp needs a matrix-vector budget of at least 6")
    if not 0 < sketch_fraction < 1:
        raise ValueError("sketch_fraction must be in (0, 1)")
    seed = as_key(seed)
    A = dk._as_apply(apply_A, n)
    n_sketch = max(1, int(m * sketch_fraction))

    S = np.empty((n, n_sketch))
    for j in range(n_sketch):
        S[:, j] = _probe(dist, seed.substream(j), n)
    AS = np.column_stack([A(S[:, j]) for j in range(n_sketch)])
    Q = lowrank.orth(AS)
    AQ = np.column_stack([A(Q[:, j]) for j in range(Q.shape[1])])
    head = float(np.sum(Q * AQ))  # trace(Q^T A Q)

    n_probes = m - n_sketch - Q.shape[1]
    samples = np.empty(n_probes)
    for i in range(n_probes):
        w = _probe(dist, seed.substream(n_sketch + i), n)
        wd = w - Q @ (Q.T @ w)
        v = A(wd)
        samples[i] = wd @ (v - Q @ (Q.T @ v))
    return _make_estimate(head + samples)


def lanczos_quadrature(apply_B, probe, steps: int,
                       reorth: str = "full") -> QuadratureRule:
    """Gaussian quadrature rule for the spectral measure of one probe:
    nodes are the eigenvalues of the Lanczos Jacobi matrix, weights are the
    squared first components of its eigenvectors times ||probe||^2."""
    probe = np.asarray(probe, dtype=float)
    pnorm = np.linalg.norm(probe)
    if pnorm == 0:
        raise ValueError("probe must be nonzero")
    alpha, beta = dk.lanczos_tridiag(apply_B, probe / pnorm, steps, reorth=reorth)
    if alpha.size == 1:
        nodes, vecs = alpha.copy(), np.ones((1, 1))
    else:
        nodes, vecs = la.eigh_tridiagonal(alpha, beta)
    weights = (pnorm ** 2) * vecs[0, :] ** 2
    return QuadratureRule(nodes, weights)


def slq(apply_B, n: int, f, m: int, s: int, seed=0, reorth: str = "full",
        dist: str = "rademacher") -> TraceEstimate:
    """Stochastic Lanczos quadrature estimate of trace(f(B)) for Hermitian B.

    Each probe's quadratic form w^T f(B) w is approximated by an s-node
    Gaussian quadrature of its spectral measure (exact for polynomials of
    degree <= 2s - 1).  A non-finite f value surfaces the offending node.
    """
    if m < 1 or s < 1:
        raise ValueError("need m >= 1 probes and s >= 1 Lanczos steps")
    seed = as_key(seed)
    samples = np.empty(m)
    for i in range(m):
        w = _probe(dist, seed.substream(i), n)
        rule = lanczos_quadrature(apply_B, w, s, reorth=reorth)
        with np.errstate(all="ignore"):
            fvals = np.asarray(f(rule.nodes), dtype=float)
        if not np.all(np.isfinite(fvals)):
            bad = rule.nodes[~np.isfinite(fvals)][0]
            raise ValueError(f"f is not finite at quadrature node {bad}")
        samples[i] = rule.weights @ fvals
    return _make_estimate(samples)


_INV_SHIFT_RE = re.compile(r"^inv_shift\(\s*([-+0-9.eE]+)\s*\)$")


def parse_scalar_function(name: str):
    """Scalar functions accepted by the command line: identity, exp, log1p,
    inv_shift(mu)."""
    name = name.strip()
    if name == "identity":
        return lambda t: t
    if name == "exp":
        return np.exp
    if name == "log1p":
        return np.log1p
    match = _INV_SHIFT_RE.match(name)
    if match:
        mu = float(match.group(1))
        return lambda t: 1.0 / (t + mu)
    raise ValueError(f"unknown scalar function {name!r}")
