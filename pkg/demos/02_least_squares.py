"""Sketch-and-solve versus sketch-and-precondition for least squares.

A sketched problem can be solved directly for a rough answer whose quality
is governed by the sketch's effective distortion, or the sketch can build a
preconditioner so LSQR converges at a rate that ignores the conditioning of
the data entirely.
"""

import numpy as np

from randla import leastsq as ls, lowrank, sketching as sk
from randla.rng import RngKey


def problem(cond, m=2000, n=50, seed=0):
    rng = np.random.default_rng(seed)
    U = np.linalg.qr(rng.standard_normal((m, n)))[0]
    V = np.linalg.qr(rng.standard_normal((n, n)))[0]
    s = np.logspace(0, np.log10(cond), n)[::-1]
    A = (U * s) @ V.T
    b = A @ rng.standard_normal(n) / s[0] + rng.standard_normal(m)
    return A, b


# --- sketch-and-solve: cheap, distortion-limited ---------------------------

A, b = problem(1e4)
x_star = np.linalg.lstsq(A, b, rcond=None)[0]
opt = np.linalg.norm(A @ x_star - b)

print("sketch-and-solve residual ratios (bound is (1+d)/(1-d)):")
basis = lowrank.orth(np.column_stack([A, b]))
for d in (100, 200, 800):
    x_hat, _, _ = ls.sketch_and_solve_ols(A, b, d, seed=7)
    S = sk.sample_operator("gaussian", d, 2000, RngKey(7))
    delta = sk.distortion_diagnostics(S, basis).eff_distortion
    ratio = np.linalg.norm(A @ x_hat - b) / opt
    print(f"  d = {d:4d}: ratio {ratio:.4f}  <=  bound "
          f"{(1 + delta) / (1 - delta):.4f}")

# --- sketch-and-precondition: iteration counts ignore conditioning ---------

print("\nsketch-and-precondition (spo1), iterations to tol 1e-11:")
for cond in (1e2, 1e5, 1e8):
    A, b = problem(cond, seed=3)
    x, rep = ls.spo1(A, b, tol=1e-11, maxit=60, seed=11)
    r = b - A @ x
    nres = np.linalg.norm(A.T @ r) / (np.linalg.norm(A, 2) * np.linalg.norm(r))
    print(f"  cond(A) = {cond:.0e}: {rep.iterations:2d} iterations, "
          f"normalized normal-equation residual {nres:.1e}")

# --- regularized saddle point problems --------------------------------------

print("\nsaddle point driver (sps2) on a ridge problem with a linear term:")
A, b = problem(1e4, seed=5)
c = np.random.default_rng(6).standard_normal(50)
prob = ls.SaddleProblem(A, b, c, mu=0.1)
sol = ls.sps2(prob, tol=1e-13, maxit=100, seed=12)
lhs = (A.T @ A + 0.1 * np.eye(50)) @ sol.x
print("  normal-equation residual:",
      np.linalg.norm(lhs - (A.T @ b - c)) / np.linalg.norm(A.T @ b - c))
print("  dual recovered from primal: ||y - (b - Ax)|| =",
      np.linalg.norm(sol.y - (b - A @ sol.x)))

# --- Nystrom PCG for regularized quadratics ---------------------------------

print("\nNystrom-preconditioned CG on a 500x500 system with fast decay:")
rng = np.random.default_rng(8)
Q = np.linalg.qr(rng.standard_normal((500, 500)))[0]
lam = np.concatenate([np.logspace(8, 2, 10), np.logspace(-0.05, -6, 490)])
G = (Q * lam) @ Q.T
h = rng.standard_normal(500)
from randla import detkernels as dk
x_p, rep_p = ls.nystrom_pcg(G, 1.0, h, rank=15, oversample=5, tol=1e-10,
                            maxit=500, seed=13, power_passes=1)
x_c, rep_c = dk.pcg(G, 1.0, h, tol=1e-10, maxit=500)
print(f"  preconditioned: {rep_p.iterations} iterations; "
      f"plain CG: {rep_c.iterations} iterations")
