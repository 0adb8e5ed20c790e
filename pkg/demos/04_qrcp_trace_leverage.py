"""Grab bag: preconditioned Cholesky QRCP on an ill-conditioned tall
matrix, stochastic trace estimation, leverage-score sampling, and bootstrap
error bars for sketched solutions."""

import numpy as np

from randla import (bench, errorest, fullrank as fr, leastsq as ls,
                    leverage as lev, sketching as sk, trace as tr)
from randla.rng import RngKey

rng = np.random.default_rng(0)

# --- pivoted QR via sketch-precondition + Cholesky QR -----------------------

m, n = 3000, 40
U = np.linalg.qr(rng.standard_normal((m, n - 3)))[0]
V = np.linalg.qr(rng.standard_normal((n, n - 3)))[0]
A = (U * np.logspace(10, 0, n - 3)) @ V.T  # cond 1e10, rank n-3

res = fr.sap_chol_qrcp(A, seed=1)
recon = np.linalg.norm(A[:, res.J] - res.Q @ res.R) / np.linalg.norm(A)
orth = np.abs(res.Q.T @ res.Q - np.eye(res.rank)).max()
print(f"Cholesky QRCP on a cond-1e10, rank-deficient 3000x40 matrix:")
print(f"  detected rank {res.rank} (true {n - 3}), reconstruction {recon:.1e}, "
      f"orthogonality {orth:.1e}")

# --- trace estimation -------------------------------------------------------

nn = 300
Q = np.linalg.qr(rng.standard_normal((nn, nn)))[0]
lam = np.arange(1, nn + 1, dtype=float) ** -1.5
B = (Q * lam) @ Q.T
truth = lam.sum()
budget = 60
gh = tr.girard_hutchinson(B, nn, budget, "rademacher", seed=2)
hpp = tr.hutch_pp(B, nn, budget, seed=2)
print(f"\ntrace of a {nn}x{nn} psd matrix (truth {truth:.4f}), "
      f"{budget} matrix-vector products:")
print(f"  Girard-Hutchinson: {gh.value:.4f} "
      f"(sample std {np.sqrt(gh.sample_variance):.2e})")
print(f"  Hutch++:           {hpp.value:.4f} "
      f"(sample std {np.sqrt(hpp.sample_variance):.2e})")

truth_exp = float(np.exp(np.linalg.eigvalsh(B)).sum())
slq = tr.slq(B, nn, np.exp, m=30, s=15, seed=3)
print(f"  SLQ for trace(exp(B)): {slq.value:.2f} vs dense {truth_exp:.2f}")

# --- leverage scores and row sampling ---------------------------------------

spec = bench.MatrixSpec(4000, 20, {"kind": "step", "r": 1, "gap": 100.0},
                        {"kind": "spiked", "rows": 1, "weight": 100.0},
                        seed=4)
C = bench.gen_matrix(spec)
scores = lev.exact_leverage(C)
print(f"\ncoherent 4000x20 matrix: top leverage score "
      f"{scores.scores.max():.3f}, coherence {lev.coherence(C):.0f}")

approx = lev.approx_leverage(C, d1=240, d2=80, seed=5)
heavy = int(np.argmax(approx.scores))
print(f"  fast approximation finds the heavy row: row {heavy}")

p = lev.leverage_distribution(scores).probs
y = C @ rng.standard_normal(20)
d = 960
S_lev = sk.sample_row_sampler(d, p, RngKey(6))
S_uni = sk.sample_row_sampler(d, np.full(4000, 1 / 4000.0), RngKey(6))
for name, S in (("leverage", S_lev), ("uniform", S_uni)):
    ratio = np.linalg.norm(S.apply(y)) ** 2 / np.linalg.norm(y) ** 2
    print(f"  {name:9s} row sampling preserves ||y||^2 up to factor "
          f"{ratio:.3f}")

# --- bootstrap error bars for a sketched solve ------------------------------

m2, n2, d2 = 2000, 10, 120
A2 = rng.standard_normal((m2, n2)) * np.logspace(0, 1, n2)
b2 = A2 @ rng.standard_normal(n2) + rng.standard_normal(m2)
x_star = np.linalg.lstsq(A2, b2, rcond=None)[0]
x_hat, A_hat, b_hat = ls.sketch_and_solve_ols(A2, b2, d2, seed=7)
boot = errorest.bootstrap_ls(A_hat, b_hat, x_hat, B=200, alpha=0.1, seed=8)
actual = np.linalg.norm(x_hat - x_star)
print(f"\nbootstrap 0.9-quantile error bar for sketch-and-solve:")
print(f"  estimated bound {boot.quantile_estimate:.4f}, actual error "
      f"{actual:.4f}, covered: {actual <= boot.quantile_estimate}")
