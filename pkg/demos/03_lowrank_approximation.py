"""Low-rank approximation: rangefinders, adaptive QB, spectral drivers, and
submatrix-oriented decompositions, all measured against the optimum."""

import numpy as np

from randla import lowrank as lr

rng = np.random.default_rng(0)
sig = np.exp(-0.4 * np.arange(40))
U0 = np.linalg.qr(rng.standard_normal((500, 40)))[0]
V0 = np.linalg.qr(rng.standard_normal((120, 40)))[0]
A = (U0 * sig) @ V0.T

k = 8
optimal = np.sqrt(np.sum(sig[k:] ** 2))
print(f"rank-{k} approximation of a 500x120 matrix "
      f"(optimal Frobenius error {optimal:.3e})\n")

# power iteration sharpens the sketch before the rangefinder orthogonalizes
for p in (0, 2):
    Q = lr.rf1(A, k, seed=1, power_passes=p)
    err = np.linalg.norm(A - Q @ (Q.T @ A), "fro")
    print(f"  rangefinder, {p} power passes: error / optimal = "
          f"{err / optimal:.4f}")

# fully adaptive QB stops at a requested accuracy
qb = lr.qb2(A, 40, tol=1e-3, block_size=4, seed=2)
err = np.linalg.norm(A - qb.approximation(), "fro") / np.linalg.norm(A, "fro")
print(f"\n  qb2 asked for 1e-3 relative error: delivered {err:.2e} "
      f"with rank {qb.Q.shape[1]}")

# pass-efficient QB touches A exactly twice, then works from its sketches
qb3 = lr.qb3(A, 16, tol=0.0, block_size=4, seed=3, power_passes=0)
err3 = np.linalg.norm(A - qb3.approximation(), "fro")
print(f"  qb3 (single pass over A): error / optimal at rank 16 = "
      f"{err3 / np.sqrt(np.sum(sig[16:] ** 2)):.3f}")

# spectral drivers
out = lr.svd1(A, k, s=5, seed=4, power_passes=2)
print(f"\n  svd1 top-{k} singular values, relative error vs truth: "
      f"{np.abs(out.sigma - sig[:k]).max() / sig[0]:.2e}")

H = (V0 * np.concatenate([[4.0, -3.0], sig[2:] * 0.05])) @ V0.T
ev = lr.evd1(H, 2, s=4, seed=5)
print(f"  evd1 on an indefinite matrix: leading eigenvalues {ev.lam}")

psd = (V0 * sig) @ V0.T
ny = lr.evd2(psd, 6, s=4, seed=6)
gap = np.linalg.eigvalsh(psd - ny.approximation()).min()
print(f"  evd2 (Nystrom) never overshoots: min eig of (A - Ahat) = {gap:.1e}")

# submatrix-oriented decompositions keep actual rows and columns of A
oid = lr.osid1(A, k, s=5, axis="column", seed=7)
print(f"\n  column ID: skeleton columns {sorted(int(j) for j in oid.skeleton)}")
print(f"    interpolation block is exactly the identity: "
      f"{np.array_equal(oid.M[:, oid.skeleton], np.eye(k))}")
print(f"    error / optimal = "
      f"{np.linalg.norm(A - oid.approximate(A), 'fro') / optimal:.3f}")

cur = lr.curd1(A, k, s=5, seed=8)
print(f"  CUR: rows {sorted(int(i) for i in cur.I)[:4]}..., "
      f"columns {sorted(int(j) for j in cur.J)[:4]}...")
print(f"    error / optimal = "
      f"{np.linalg.norm(A - cur.approximate(A), 'fro') / optimal:.3f}")

# randomized norm estimation for implicit operators
bound = lr.spectral_bound(A, 120, r=10, beta=2.0, seed=9)
frob2 = lr.frob_estimate(A, 120, r=50, seed=10)
print(f"\n  ||A||_2 = {np.linalg.norm(A, 2):.4f} <= probabilistic bound "
      f"{bound:.4f}")
print(f"  ||A||_F^2 = {np.linalg.norm(A, 'fro') ** 2:.4f} ~ estimate "
      f"{frob2:.4f}")
