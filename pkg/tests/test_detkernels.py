import numpy as np
import pytest

from randla import detkernels as dk


def make_conditioned(m, n, cond, seed=0):
    r = np.random.default_rng(seed)
    U = np.linalg.qr(r.standard_normal((m, n)))[0]
    V = np.linalg.qr(r.standard_normal((n, n)))[0]
    s = np.logspace(0, np.log10(cond), n)[::-1]
    return (U * s) @ V.T


# ---------------------------------------------------------------------------
# factorization seam
# ---------------------------------------------------------------------------

def test_qrcp_hand_oracle():
    # hand QR: only column 1 is nonzero with norm sqrt(5), so it pivots first
    A = np.array([[0.0, 2.0], [0.0, 1.0], [0.0, 0.0]])
    Q, R, J = dk.qrcp(A)
    assert list(J) == [1, 0]
    assert np.isclose(abs(R[0, 0]), np.sqrt(5))
    assert np.linalg.norm(A[:, J] - Q @ R) < 1e-14


def test_qrcp_diagonal_nonincreasing():
    A = make_conditioned(40, 10, 1e4, seed=1)
    _, R, _ = dk.qrcp(A)
    d = np.abs(np.diag(R))
    assert np.all(d[:-1] >= d[1:] - 1e-12)


def test_chol_identity():
    assert np.array_equal(dk.chol(np.eye(3)), np.eye(3))


def test_chol_failure_pivot():
    with pytest.raises(dk.CholeskyError) as err:
        dk.chol(np.diag([1.0, 4.0, -1.0]))
    assert err.value.pivot == 3


def test_svd_diagonal():
    U, s, V = dk.svd(np.diag([3.0, 2.0, 1.0]))
    assert np.allclose(s, [3, 2, 1])
    assert np.allclose((U * s) @ V.T, np.diag([3.0, 2.0, 1.0]))


def test_reconstruction_residuals():
    A = make_conditioned(30, 8, 1e3, seed=2)
    Q, R = dk.qr_econ(A)
    assert np.linalg.norm(A - Q @ R) <= 1e-12 * np.linalg.norm(A)
    U, s, V = dk.svd(A)
    assert np.linalg.norm(A - (U * s) @ V.T) <= 1e-12 * np.linalg.norm(A)
    G = A.T @ A
    Rc = dk.chol(G)
    assert np.linalg.norm(G - Rc.T @ Rc) <= 1e-12 * np.linalg.norm(G)


def test_linear_operator_adjoint_consistency():
    A = np.random.default_rng(3).standard_normal((9, 5))
    op = dk.aslinop(A)
    r = np.random.default_rng(4)
    for _ in range(5):
        v = r.standard_normal(5)
        w = r.standard_normal(9)
        assert abs(op.apply(v) @ w - v @ op.apply_adjoint(w)) < 1e-12


# ---------------------------------------------------------------------------
# LSQR
# ---------------------------------------------------------------------------

def test_lsqr_orthonormal_one_iteration():
    r = np.random.default_rng(0)
    F = np.linalg.qr(r.standard_normal((30, 5)))[0]
    g = r.standard_normal(30)
    z, rep = dk.lsqr(F, g, tol=1e-12, maxit=20)
    assert rep.iterations == 1
    assert np.linalg.norm(z - F.T @ g) < 1e-12


def test_lsqr_consistent_diagonal():
    z, rep = dk.lsqr(np.diag([1.0, 10.0]), np.array([1.0, 10.0]),
                     tol=1e-12, maxit=50)
    assert rep.converged
    assert np.linalg.norm(z - 1.0) < 1e-12


def test_lsqr_zero_rhs():
    z, rep = dk.lsqr(np.eye(4), np.zeros(4), tol=1e-12, maxit=5)
    assert rep.iterations == 0 and rep.converged
    assert np.array_equal(z, np.zeros(4))


def test_lsqr_warm_start():
    r = np.random.default_rng(5)
    F = r.standard_normal((40, 6))
    g = r.standard_normal(40)
    z_star = np.linalg.lstsq(F, g, rcond=None)[0]
    z, rep = dk.lsqr(F, g, tol=1e-13, maxit=100, z0=z_star)
    assert rep.iterations <= 2
    assert np.linalg.norm(z - z_star) < 1e-10


def test_lsqr_contraction_rate():
    # geometric-mean contraction of ||F(z - z*)|| stays within
    # (kappa-1)/(kappa+1) + 0.05
    kappa = 1e3
    F = make_conditioned(500, 40, kappa, seed=6)
    g = np.random.default_rng(7).standard_normal(500)
    z_star = np.linalg.lstsq(F, g, rcond=None)[0]
    e0 = np.linalg.norm(F @ z_star)  # error of the zero iterate
    iters = 40
    z, _ = dk.lsqr(F, g, tol=0.0, maxit=iters)
    e_end = np.linalg.norm(F @ (z - z_star))
    measured_rate = (e_end / e0) ** (1.0 / iters)
    assert measured_rate <= (kappa - 1) / (kappa + 1) + 0.05


def test_lsqr_backward_error_diagnostic():
    F = make_conditioned(50, 6, 10, seed=8)
    g = np.random.default_rng(9).standard_normal(50)
    _, rep = dk.lsqr(F, g, tol=1e-10, maxit=50, track_backward_error=True)
    assert len(rep.backward_error_history) == rep.iterations
    data_pert, rhs_pert = rep.backward_error_history[-1]
    assert data_pert >= 0 and rhs_pert >= 0


def test_lsqr_validation():
    with pytest.raises(ValueError):
        dk.lsqr(np.eye(2), np.ones(2), tol=-1.0)
    with pytest.raises(ValueError):
        dk.lsqr(np.eye(2), np.ones(2), maxit=0)


# ---------------------------------------------------------------------------
# PCG
# ---------------------------------------------------------------------------

def test_pcg_zero_operator():
    x, rep = dk.pcg(np.zeros((3, 3)), 1.0, np.array([1.0, 2.0, 3.0]))
    assert rep.iterations == 1
    assert np.allclose(x, [1, 2, 3])


def test_pcg_perfect_preconditioner():
    G = np.diag([9.0, 0.0])
    x, rep = dk.pcg(G, 1.0, np.array([10.0, 1.0]),
                    apply_Pinv=np.diag([0.1, 1.0]))
    assert rep.iterations == 1
    assert np.allclose(x, [1.0, 1.0])


def test_pcg_matches_direct_solve():
    r = np.random.default_rng(10)
    Q = np.linalg.qr(r.standard_normal((60, 60)))[0]
    lam = np.logspace(-2, 2, 60)
    G = (Q * lam) @ Q.T
    h = r.standard_normal(60)
    x, rep = dk.pcg(G, 0.5, h, tol=1e-12, maxit=300)
    x_dense = np.linalg.solve(G + 0.5 * np.eye(60), h)
    assert rep.converged
    assert np.linalg.norm(x - x_dense) <= 1e-11 * np.linalg.norm(x_dense) * 10


def test_pcg_negative_curvature_raises():
    with pytest.raises(np.linalg.LinAlgError):
        dk.pcg(np.diag([-5.0, 1.0]), 0.0, np.array([1.0, 1.0]))


def test_pcg_zero_rhs():
    x, rep = dk.pcg(np.eye(3), 1.0, np.zeros(3))
    assert rep.iterations == 0 and np.array_equal(x, np.zeros(3))


# ---------------------------------------------------------------------------
# Lanczos
# ---------------------------------------------------------------------------

def test_lanczos_hand_recurrence():
    # B = diag(1, 2), v0 = (1, 1)/sqrt(2): alpha1 = 1.5, beta1 = 0.5,
    # alpha2 = 1.5 by the three-term recurrence
    alpha, beta = dk.lanczos_tridiag(np.diag([1.0, 2.0]),
                                     np.array([1.0, 1.0]) / np.sqrt(2), 2)
    assert np.allclose(alpha, [1.5, 1.5])
    assert np.allclose(beta, [0.5])


def test_lanczos_invariant_subspace_terminates():
    alpha, beta = dk.lanczos_tridiag(3.0 * np.eye(5), np.eye(5)[0], 5)
    assert np.allclose(alpha, [3.0])
    assert beta.size == 0


def test_lanczos_interlacing():
    import scipy.linalg as la
    r = np.random.default_rng(11)
    Q = np.linalg.qr(r.standard_normal((20, 20)))[0]
    lam = np.sort(r.uniform(-3, 3, 20))
    B = (Q * lam) @ Q.T
    v0 = r.standard_normal(20)
    v0 /= np.linalg.norm(v0)
    for s in (3, 7, 12):
        alpha, beta = dk.lanczos_tridiag(B, v0, s)
        ritz = np.sort(la.eigh_tridiagonal(alpha, beta)[0])
        # Ritz values interlace: all inside [lam_min, lam_max], ordered
        assert ritz[0] >= lam[0] - 1e-10
        assert ritz[-1] <= lam[-1] + 1e-10


def test_lanczos_full_reorth_orthogonality():
    r = np.random.default_rng(12)
    Q = np.linalg.qr(r.standard_normal((120, 120)))[0]
    lam = np.logspace(-6, 0, 120)
    B = (Q * lam) @ Q.T
    v0 = r.standard_normal(120)
    v0 /= np.linalg.norm(v0)
    _, _, V = dk.lanczos_basis(B, v0, 50, reorth="full")
    gram = V.T @ V
    assert np.abs(gram - np.eye(V.shape[1])).max() <= 1e-10


def test_lanczos_validation():
    with pytest.raises(ValueError):
        dk.lanczos_tridiag(np.eye(3), np.ones(3), 2)  # not unit norm
