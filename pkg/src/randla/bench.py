"""Synthetic test-matrix generation and the experiment harness behind the
command line: run any driver over repeated trials, record one CSV row per
trial, and summarize to JSON.

Randomness policy: the test matrix and its right-hand-side data are fixed
by the matrix seed; each trial re-randomizes only the driver with a derived
per-trial key, so reruns of one config are bitwise identical apart from
timings, under any --parallel setting.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.io

from . import detkernels as dk
from . import errorest, fullrank, leastsq, leverage, lowrank, sketching, trace
from . import rng as _rng
from .rng import RngKey, parse_seed_token

SPECTRA = ("flat", "step", "power", "exp")
COHERENCE = ("incoherent", "spiked")


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 2)."""


@dataclass(frozen=True)
class MatrixSpec:
    """Synthetic m-by-n matrix with a prescribed spectrum and coherence
    profile, realized as U diag(sigma) V^T with orthonormalized-Gaussian
    factors."""

    m: int
    n: int
    spectrum: dict = field(default_factory=lambda: {"kind": "flat"})
    coherence: dict = field(default_factory=lambda: {"kind": "incoherent"})
    seed: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> "MatrixSpec":
        if not isinstance(d, dict):
            raise ConfigError("matrix spec must be an object")
        for key in ("m", "n"):
            if key not in d or int(d[key]) < 1:
                raise ConfigError(f"matrix spec needs a positive '{key}'")
        spectrum = d.get("spectrum", {"kind": "flat"})
        if isinstance(spectrum, str):
            spectrum = {"kind": spectrum}
        coherence = d.get("coherence", {"kind": "incoherent"})
        if isinstance(coherence, str):
            coherence = {"kind": coherence}
        spec = cls(int(d["m"]), int(d["n"]), spectrum, coherence,
                   parse_seed_token(d.get("seed", 0)))
        spec.singular_values()  # validate eagerly
        if coherence.get("kind") not in COHERENCE:
            raise ConfigError(f"unknown coherence kind {coherence.get('kind')!r}")
        return spec

    def singular_values(self) -> np.ndarray:
        kind = self.spectrum.get("kind")
        n = min(self.m, self.n)
        if kind == "flat":
            return np.ones(n)
        if kind == "step":
            r = int(self.spectrum.get("r", 1))
            gap = float(self.spectrum.get("gap", 10.0))
            if not 1 <= r <= n:
                raise ConfigError("step spectrum needs 1 <= r <= min(m, n)")
            return np.concatenate([np.full(r, gap), np.ones(n - r)])
        if kind == "power":
            decay = float(self.spectrum.get("decay", 1.0))
            return np.arange(1, n + 1, dtype=float) ** (-decay)
        if kind == "exp":
            decay = float(self.spectrum.get("decay", 0.1))
            return np.exp(-decay * np.arange(n))
        raise ConfigError(f"unknown spectrum kind {kind!r}")


def _orth_gaussian(key: RngKey, rows: int, cols: int) -> np.ndarray:
    G = _rng.gaussian_stream(key, rows * cols).reshape((rows, cols), order="F")
    return np.linalg.qr(G)[0]


def gen_matrix(spec: MatrixSpec) -> np.ndarray:
    """Realize a MatrixSpec.  The singular values match the spec exactly;
    the spiked coherence profile rotates leading left singular vectors
    toward coordinate axes to implant heavy-leverage rows."""
    sig = spec.singular_values()
    r = sig.size
    key = RngKey(spec.seed)
    U = _orth_gaussian(key.substream(0), spec.m, r)
    V = _orth_gaussian(key.substream(1), spec.n, r)
    if spec.coherence.get("kind") == "spiked":
        rows = int(spec.coherence.get("rows", 1))
        weight = float(spec.coherence.get("weight", 100.0))
        if not 1 <= rows <= min(spec.m, r):
            raise ConfigError("spiked coherence needs 1 <= rows <= min(m, rank)")
        E = np.zeros((spec.m, r))
        for i in range(rows):
            E[i, i % r] = 1.0
        U = np.linalg.qr(U + weight * E)[0]
    return (U * sig) @ V.T


def _lstsq_data(A: np.ndarray, key: RngKey):
    """Benchmark right-hand side: unit-norm planted solution plus a
    unit-norm residual orthogonal to range(A)."""
    m, n = A.shape
    x = _rng.gaussian_stream(key.substream(0), n)
    x /= np.linalg.norm(x)
    w = _rng.gaussian_stream(key.substream(1), m)
    U = lowrank.orth(A)
    w -= U @ (U.T @ w)
    nw = np.linalg.norm(w)
    if nw > 0:
        w /= nw
    scale = np.linalg.norm(A, 2)
    return A @ (x / scale) + w


# ---------------------------------------------------------------------------
# driver registry
# ---------------------------------------------------------------------------

def _psd_from(A: np.ndarray, spec: MatrixSpec) -> np.ndarray:
    if spec.m != spec.n:
        raise ConfigError("psd drivers need a square matrix spec (m == n)")
    lam = spec.singular_values()
    key = RngKey(spec.seed)
    V = _orth_gaussian(key.substream(0), spec.n, lam.size)
    return (V * lam) @ V.T


def _run_spo1(A, spec, params, key):
    b = _lstsq_data(A, RngKey(spec.seed).substream(7))
    x, rep = leastsq.spo1(
        A, b, tol=params.get("tol", 1e-11), maxit=params.get("maxit", 100),
        sampling_factor=params.get("sampling_factor", 4.0), seed=key,
        op_family=params.get("family", "saso"))
    r = b - A @ x
    anorm = np.linalg.norm(A, 2)
    return {"iters": rep.iterations,
            "rel_nres": float(np.linalg.norm(A.T @ r)
                              / (anorm * np.linalg.norm(r))),
            "converged": int(rep.converged)}


def _run_sps2(A, spec, params, key):
    data_key = RngKey(spec.seed)
    b = _lstsq_data(A, data_key.substream(7))
    c = _rng.gaussian_stream(data_key.substream(8), A.shape[1])
    mu = float(params.get("mu", 0.0))
    prob = leastsq.SaddleProblem(A, b, c, mu)
    sol = leastsq.sps2(prob, tol=params.get("tol", 1e-12),
                       maxit=params.get("maxit", 200),
                       sampling_factor=params.get("sampling_factor", 4.0),
                       seed=key, op_family=params.get("family", "saso"))
    lhs = (A.T @ A + mu * np.eye(A.shape[1])) @ sol.x
    rhs = A.T @ b - c
    return {"iters": sol.report.iterations,
            "normal_eq_err": float(np.linalg.norm(lhs - rhs)
                                   / np.linalg.norm(rhs))}


def _run_sketch_and_solve(A, spec, params, key):
    b = _lstsq_data(A, RngKey(spec.seed).substream(7))
    d = int(params.get("d", min(4 * A.shape[1], A.shape[0])))
    family = params.get("family", "gaussian")
    x, _, _ = leastsq.sketch_and_solve_ols(A, b, d, seed=key,
                                           op_family=family)
    x_star = np.linalg.lstsq(A, b, rcond=None)[0]
    num = np.linalg.norm(A @ x - b)
    den = np.linalg.norm(A @ x_star - b)
    out = {"residual_ratio": float(num / den) if den > 0 else np.inf}
    if params.get("check_bound", False):
        S = sketching.sample_operator(family, d, A.shape[0], key)
        basis = lowrank.orth(np.column_stack([A, b]))
        delta = sketching.distortion_diagnostics(S, basis).eff_distortion
        out["delta"] = float(delta)
        out["bound_ratio"] = float((1 + delta) / (1 - delta))
        out["bound_holds"] = int(out["residual_ratio"]
                                 <= out["bound_ratio"] * (1 + 1e-12))
    return out


def _run_nystrom_pcg(A, spec, params, key):
    G = _psd_from(A, spec)
    h = _rng.gaussian_stream(RngKey(spec.seed).substream(9), spec.n)
    mu = float(params.get("mu", 1.0))
    if params.get("preconditioned", True):
        x, rep = leastsq.nystrom_pcg(
            G, mu, h, rank=int(params.get("rank", 10)),
            oversample=int(params.get("oversample", 5)),
            tol=params.get("tol", 1e-10), maxit=params.get("maxit", 200),
            seed=key)
    else:  # plain CG baseline on the same instance
        x, rep = dk.pcg(G, mu, h, tol=params.get("tol", 1e-10),
                        maxit=params.get("maxit", 200))
    res = np.linalg.norm((G + mu * np.eye(spec.n)) @ x - h) / np.linalg.norm(h)
    return {"iters": rep.iterations, "rel_res": float(res),
            "converged": int(rep.converged)}


def _run_distortion(A, spec, params, key):
    """Effective distortion of an oblivious sketch on range(A), plus the
    condition number of the induced preconditioned matrix."""
    d = int(params.get("d", min(4 * A.shape[1], A.shape[0])))
    S = sketching.sample_operator(params.get("family", "gaussian"),
                                  d, A.shape[0], key)
    U = lowrank.orth(A)
    rep = sketching.distortion_diagnostics(S, U)
    P = leastsq.make_precond_svd(S.apply(A), 0.0)
    return {"eff_distortion": rep.eff_distortion, "cond": rep.cond,
            "cond_am": float(np.linalg.cond(A @ P.M))}


def _run_precond_spectrum(A, spec, params, key):
    """Worst relative deviation between sv(A M) and 1/sv(S U)."""
    d = int(params.get("d", min(4 * A.shape[1], A.shape[0])))
    S = sketching.sample_operator(params.get("family", "gaussian"),
                                  d, A.shape[0], key)
    P = leastsq.make_precond_svd(S.apply(A), 0.0)
    U = lowrank.orth(A)
    sv_am = np.sort(np.linalg.svd(A @ P.M, compute_uv=False))
    sv_su = np.sort(1.0 / np.linalg.svd(S.apply(U), compute_uv=False))
    return {"identity_dev": float(np.abs(sv_am - sv_su).max() / sv_su.max())}


def _run_row_sample_embedding(A, spec, params, key):
    """Two-sided norm-preservation check for row sampling driven by either
    the exact leverage distribution or the uniform one."""
    m, n = A.shape
    eps = float(params.get("eps", 0.5))
    d = int(params.get("d", int(np.ceil(n / eps ** 2 * np.log(n) * 4))))
    count = int(params.get("vectors", 50))
    if params.get("dist", "leverage") == "leverage":
        probs = leverage.leverage_distribution(leverage.exact_leverage(A)).probs
    else:
        probs = np.full(m, 1.0 / m)
    G = _rng.gaussian_stream(RngKey(spec.seed).substream(10), n * count)
    ys = A @ G.reshape((n, count), order="F")
    norms2 = np.linalg.norm(ys, axis=0) ** 2
    S = sketching.sample_row_sampler(d, probs, key)
    vals = np.linalg.norm(S.apply(ys), axis=0) ** 2
    ok = np.all((vals >= (1 - eps) * norms2) & (vals <= (1 + eps) * norms2))
    return {"embedded": int(ok),
            "worst_ratio": float(np.max(np.abs(vals / norms2 - 1.0)))}


def _lowrank_error(A, Ahat, sig, k):
    err = np.linalg.norm(A - Ahat, "fro")
    opt = float(np.sqrt(np.sum(sig[k:] ** 2)))
    return {"fro_err": float(err),
            "err_over_opt": float(err / opt) if opt > 0 else 1.0}


def _run_svd1(A, spec, params, key):
    k = int(params.get("k", 5))
    out = lowrank.svd1(A, k, tol=params.get("tol", 0.0),
                       s=int(params.get("oversample", 5)), seed=key,
                       power_passes=int(params.get("power_passes", 2)))
    return _lowrank_error(A, out.approximation(), spec.singular_values(), k)


def _run_qb2(A, spec, params, key):
    k = int(params.get("k", 5))
    qb = lowrank.qb2(A, k, tol=params.get("tol", 0.0),
                     block_size=params.get("block_size"), seed=key,
                     power_passes=int(params.get("power_passes", 2)))
    out = _lowrank_error(A, qb.approximation(), spec.singular_values(), k)
    out["rank"] = qb.Q.shape[1]
    return out


def _run_evd2(A, spec, params, key):
    G = _psd_from(A, spec)
    k = int(params.get("k", 5))
    out = lowrank.evd2(G, k, s=int(params.get("oversample", 5)), seed=key,
                       power_passes=int(params.get("power_passes", 2)))
    lam = np.sort(spec.singular_values())[::-1]
    return {"fro_err": float(np.linalg.norm(G - out.approximation(), "fro")),
            "top_eig_rel_err": float(abs(out.lam[0] - lam[0]) / lam[0])}


def _run_osid1(A, spec, params, key):
    k = int(params.get("k", 5))
    s = int(params.get("oversample", 5))
    pp = int(params.get("power_passes", 2))
    axis = params.get("axis", "column")
    oid = lowrank.osid1(A, k, s=s, axis=axis, seed=key, power_passes=pp)
    out = _lowrank_error(A, oid.approximate(A), spec.singular_values(), k)
    if params.get("check_chain", False) and axis == "column" and s == 0:
        S = lowrank.tsog1(A.T, k, p=pp, seed=key)
        Y = S.T @ A
        lhs = np.linalg.norm(A - A[:, oid.skeleton] @ oid.M, 2)
        rhs = (1 + np.linalg.norm(oid.M, 2)) * np.linalg.norm(
            A - A @ np.linalg.pinv(Y) @ Y, 2)
        out["chain_lhs"] = float(lhs)
        out["chain_rhs"] = float(rhs)
        out["chain_holds"] = int(lhs <= rhs * (1 + 1e-10))
        out["regular"] = int(np.array_equal(oid.M[:, oid.skeleton], np.eye(k)))
    return out


def _run_curd1(A, spec, params, key):
    k = int(params.get("k", 5))
    cur = lowrank.curd1(A, k, s=int(params.get("oversample", 5)), seed=key,
                        power_passes=int(params.get("power_passes", 2)))
    return _lowrank_error(A, cur.approximate(A), spec.singular_values(), k)


def _run_sap_chol_qrcp(A, spec, params, key):
    res = fullrank.sap_chol_qrcp(A, d=params.get("d"), seed=key,
                                 op_family=params.get("family", "saso"))
    recon = np.linalg.norm(A[:, res.J] - res.Q @ res.R) / np.linalg.norm(A)
    orth_err = np.abs(res.Q.T @ res.Q - np.eye(res.rank)).max() if res.rank else 0.0
    return {"rank": res.rank, "recon": float(recon), "orth_err": float(orth_err)}


def _run_rand_chol_qr(A, spec, params, key):
    Q, R = fullrank.rand_chol_qr(A, d=params.get("d"), seed=key,
                                 op_family=params.get("family", "saso"))
    recon = np.linalg.norm(A - Q @ R) / np.linalg.norm(A)
    return {"recon": float(recon),
            "orth_err": float(np.abs(Q.T @ Q - np.eye(Q.shape[1])).max())}


def _run_gh(A, spec, params, key):
    G = _psd_from(A, spec)
    est = trace.girard_hutchinson(G, spec.n, int(params.get("probes", 50)),
                                  params.get("dist", "rademacher"), seed=key)
    truth = float(np.trace(G))
    return {"estimate": est.value, "rel_err": abs(est.value - truth) / abs(truth),
            "sample_variance": est.sample_variance}


def _run_hutch_pp(A, spec, params, key):
    G = _psd_from(A, spec)
    est = trace.hutch_pp(G, spec.n, int(params.get("budget", 60)), seed=key)
    truth = float(np.trace(G))
    return {"estimate": est.value, "rel_err": abs(est.value - truth) / abs(truth)}


def _run_slq(A, spec, params, key):
    G = _psd_from(A, spec)
    f = trace.parse_scalar_function(params.get("f", "identity"))
    est = trace.slq(G, spec.n, f, int(params.get("probes", 30)),
                    int(params.get("steps", 15)), seed=key)
    lam = np.linalg.eigvalsh(G)
    truth = float(np.sum(f(lam)))
    return {"estimate": est.value, "rel_err": abs(est.value - truth) / abs(truth)}


def _run_exact_leverage(A, spec, params, key):
    scores = leverage.exact_leverage(A).scores
    return {"sum": float(scores.sum()), "max": float(scores.max()),
            "coherence": float(spec.m * scores.max())}


def _run_approx_leverage(A, spec, params, key):
    m, n = A.shape
    d1 = int(params.get("d1", min(4 * n, m)))
    d2 = int(params.get("d2", int(np.ceil(8 * np.log(m)))))
    approx = leverage.approx_leverage(A, d1, d2, seed=key).scores
    exact = leverage.exact_leverage(A).scores
    mask = exact > 1e-12
    dev = np.abs(approx[mask] / exact[mask] - 1.0).max()
    return {"max_mult_dev": float(dev)}


def _run_subspace_leverage(A, spec, params, key):
    k = int(params.get("k", 5))
    scores = leverage.subspace_leverage(
        A, k, s=int(params.get("oversample", 5)), seed=key,
        power_passes=int(params.get("power_passes", 2))).scores
    return {"sum": float(scores.sum()), "k": k}


def _run_bootstrap_ls(A, spec, params, key):
    b = _lstsq_data(A, RngKey(spec.seed).substream(7))
    d = int(params.get("d", min(4 * A.shape[1], A.shape[0])))
    x_hat, A_hat, b_hat = leastsq.sketch_and_solve_ols(
        A, b, d, seed=key, op_family=params.get("family", "gaussian"))
    res = errorest.bootstrap_ls(A_hat, b_hat, x_hat,
                                B=int(params.get("B", 100)),
                                alpha=float(params.get("alpha", 0.1)),
                                norm=params.get("norm", "l2"),
                                seed=key.substream(500))
    x_star = np.linalg.lstsq(A, b, rcond=None)[0]
    actual = float(np.linalg.norm(x_hat - x_star))
    return {"quantile": res.quantile_estimate, "actual_err": actual,
            "covered": int(actual <= res.quantile_estimate)}


def _run_bootstrap_svd(A, spec, params, key):
    d = int(params.get("d", min(4 * A.shape[1], A.shape[0])))
    k = int(params.get("k", 3))
    S = sketching.sample_operator(params.get("family", "gaussian"),
                                  d, A.shape[0], key)
    A_hat = S.apply(A) / np.sqrt(d)
    q_sig, q_v = errorest.bootstrap_svd(A_hat, k,
                                        B=int(params.get("B", 100)),
                                        alpha=float(params.get("alpha", 0.1)),
                                        seed=key.substream(500))
    sig_true = np.linalg.svd(A, compute_uv=False)[:k]
    sig_hat = np.linalg.svd(A_hat, compute_uv=False)[:k]
    actual = float(np.abs(sig_hat - sig_true).max())
    return {"q_sigma": q_sig.quantile_estimate, "q_v": q_v.quantile_estimate,
            "actual_sigma_err": actual,
            "covered": int(actual <= q_sig.quantile_estimate)}


DRIVERS = {
    "spo1": _run_spo1,
    "sps2": _run_sps2,
    "sketch_and_solve": _run_sketch_and_solve,
    "nystrom_pcg": _run_nystrom_pcg,
    "svd1": _run_svd1,
    "qb2": _run_qb2,
    "evd2": _run_evd2,
    "osid1": _run_osid1,
    "curd1": _run_curd1,
    "sap_chol_qrcp": _run_sap_chol_qrcp,
    "rand_chol_qr": _run_rand_chol_qr,
    "distortion": _run_distortion,
    "precond_spectrum": _run_precond_spectrum,
    "row_sample_embedding": _run_row_sample_embedding,
    "girard_hutchinson": _run_gh,
    "hutch_pp": _run_hutch_pp,
    "slq": _run_slq,
    "exact_leverage": _run_exact_leverage,
    "approx_leverage": _run_approx_leverage,
    "subspace_leverage": _run_subspace_leverage,
    "bootstrap_ls": _run_bootstrap_ls,
    "bootstrap_svd": _run_bootstrap_svd,
}


@dataclass(frozen=True)
class ExperimentConfig:
    """One driver, its parameters, a matrix spec, and a trial count."""

    driver: str
    matrix: MatrixSpec
    params: dict = field(default_factory=dict)
    trials: int = 1
    seed: int = 0
    out: str | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("experiment config must be an object")
        driver = d.get("driver")
        if driver not in DRIVERS:
            raise ConfigError(
                f"unknown driver {driver!r}; choose from {sorted(DRIVERS)}")
        if "matrix" not in d:
            raise ConfigError("experiment config needs a 'matrix' spec")
        trials = int(d.get("trials", 1))
        if trials < 0:
            raise ConfigError("trials must be nonnegative")
        params = d.get("params", {})
        if not isinstance(params, dict):
            raise ConfigError("'params' must be an object")
        return cls(driver, MatrixSpec.from_dict(d["matrix"]), params, trials,
                   parse_seed_token(d.get("seed", 0)), d.get("out"))


_BASE_COLUMNS = ["trial", "seed_key", "seed_offset", "status", "wall_ms"]


def _run_trial(config: ExperimentConfig, A, trial: int):
    key = RngKey(config.seed).substream(trial)
    row = {"trial": trial, "seed_key": key.key,
           "seed_offset": key.counter_offset}
    start = time.perf_counter()
    try:
        metrics = DRIVERS[config.driver](A, config.matrix, config.params, key)
        row["status"] = "ok"
        row.update(metrics)
    except Exception as err:  # recorded per trial; exit code decided later
        row["status"] = f"error: {err}"
    row["wall_ms"] = 1000.0 * (time.perf_counter() - start)
    return row


def run_experiment(config: ExperimentConfig, parallel: int = 1):
    """Run all trials; write CSV rows and a JSON summary when ``config.out``
    is set.  Returns (rows, summary)."""
    A = gen_matrix(config.matrix)
    trials = range(config.trials)
    if parallel > 1 and config.trials > 1:
        with ThreadPoolExecutor(max_workers=parallel) as pool:
            rows = list(pool.map(lambda t: _run_trial(config, A, t), trials))
    else:
        rows = [_run_trial(config, A, t) for t in trials]
    rows.sort(key=lambda r: r["trial"])

    columns = list(_BASE_COLUMNS)
    for row in rows:
        for key in row:
            if key not in columns:
                columns.append(key)

    summary = {
        "config": {
            "driver": config.driver,
            "params": config.params,
            "matrix": {"m": config.matrix.m, "n": config.matrix.n,
                       "spectrum": config.matrix.spectrum,
                       "coherence": config.matrix.coherence,
                       "seed": config.matrix.seed},
            "trials": config.trials,
            "seed": config.seed,
        },
        "completed": sum(r["status"] == "ok" for r in rows),
        "failed": sum(r["status"] != "ok" for r in rows),
        "metrics": {},
    }
    for col in columns:
        if col in ("trial", "seed_key", "seed_offset", "status", "wall_ms"):
            continue
        vals = [r[col] for r in rows
                if r.get("status") == "ok" and isinstance(r.get(col), (int, float))]
        if vals:
            q10, med, q90 = np.quantile(vals, [0.1, 0.5, 0.9])
            summary["metrics"][col] = {"median": float(med), "q10": float(q10),
                                       "q90": float(q90)}

    if config.out:
        write_report(config.out, rows, columns, summary)
    return rows, summary


def write_report(out_base: str, rows, columns, summary):
    """Write ``<out_base>.csv`` (one row per trial) and ``<out_base>.json``."""
    if out_base.endswith(".csv") or out_base.endswith(".json"):
        out_base = out_base.rsplit(".", 1)[0]
    with open(out_base + ".csv", "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=columns, restval="")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v)
                             for k, v in row.items()})
    with open(out_base + ".json", "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
