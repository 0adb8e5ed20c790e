"""Reproducible sketching operators.

Every operator in the library is a pure function of its arguments and a
(key, counter) seed, so sketches can be regenerated anywhere, element by
element or in bulk, and always agree bitwise.  This script walks through
the operator families and measures how well each one embeds a subspace.
"""

import numpy as np

from randla import sketching as sk
from randla.rng import RngKey, uniform_stream

# --- counter-based streams ------------------------------------------------

key = RngKey(key=42, counter_offset=0)
bulk = uniform_stream(key, 10)
tail = uniform_stream(key.advance(6), 4)
print("stream slices agree bitwise:", np.array_equal(bulk[6:], tail))

# --- the operator families -------------------------------------------------

m, d = 4000, 200
ops = {
    "gaussian": sk.sample_dense("gaussian", d, m, key),
    "haar": sk.sample_dense("haar", d, m, key),
    "saso (k=8)": sk.sample_saso(d, m, 8, key),
    "srft": sk.sample_srft(d, m, key),
}

# how each family distorts a fixed 40-dimensional subspace
rng = np.random.default_rng(0)
U = np.linalg.qr(rng.standard_normal((m, 40)))[0]
print(f"\nembedding a 40-dim subspace of R^{m} into R^{d}:")
for name, S in ops.items():
    rep = sk.distortion_diagnostics(S, U)
    print(f"  {name:12s} restricted cond {rep.cond:5.2f}   "
          f"effective distortion {rep.eff_distortion:.3f}")

# operators serialize as small descriptors, never as dense data
desc = ops["saso (k=8)"].to_json()
clone = sk.operator_from_json(desc)
same = (ops["saso (k=8)"].matrix(dense=True) == clone.matrix(dense=True)).all()
print("\nJSON descriptor:", desc)
print("rebuilt operator is identical:", same)

# a sampled operator and its transpose view share one set of entries
S = ops["gaussian"]
A = rng.standard_normal((m, 5))
left = S.apply(A, side="left")
right = S.T.apply(A.T, side="right")
print("wide/tall duality (transpose view):",
      np.abs(left - right.T).max(), "max deviation")
