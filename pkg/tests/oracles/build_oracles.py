"""Regenerate ``values.json``: reference numbers computed without the package.

Run from the repository root::

    python tests/oracles/build_oracles.py

Everything here uses scipy/mpmath directly so the frozen values are
independent of the code under test.
"""

import json
from pathlib import Path

import mpmath
import numpy as np
from scipy import integrate, stats

OUT = Path(__file__).with_name("values.json")


def probit_instances(count=10, seed=20240611):
    """Small probit problems (p <= 2, n <= 5) with Gaussian priors."""
    rng = np.random.default_rng(seed)
    out = []
    for k in range(count):
        p = 1 + k % 2
        n = 1 + k % 5
        X = np.round(rng.normal(size=(n, p)), 3)
        y = rng.integers(0, 2, size=n)
        xi = np.round(rng.normal(scale=0.5, size=p), 3)
        A = rng.normal(size=(p, p))
        Omega = np.round(A @ A.T + 0.5 * np.eye(p), 3)
        x_new = np.round(rng.normal(size=p), 3)
        out.append({"X": X.tolist(), "y": y.tolist(), "xi": xi.tolist(), "Omega": Omega.tolist(), "x_new": x_new.tolist()})
    return out


def _unnormalized(beta, inst):
    # beta: (m, p)
    X = np.asarray(inst["X"])
    D = (2 * np.asarray(inst["y"]) - 1)[:, None] * X
    prior = stats.multivariate_normal(inst["xi"], inst["Omega"]).logpdf(beta)
    return np.exp(np.atleast_1d(prior) + stats.norm.logcdf(beta @ D.T).sum(axis=1))


def quadrature_moments(inst, order):
    xi = np.asarray(inst["xi"])
    Omega = np.asarray(inst["Omega"])
    p = xi.size
    L = np.linalg.cholesky(Omega)
    t, w = np.polynomial.legendre.leggauss(order)
    half = 12.0
    t = t * half
    w = w * half
    grids = np.meshgrid(*([t] * p), indexing="ij")
    U = np.column_stack([g.ravel() for g in grids])
    W = np.prod(np.meshgrid(*([w] * p), indexing="ij"), axis=0).ravel() * abs(np.linalg.det(L))
    beta = xi + U @ L.T
    f = _unnormalized(beta, inst) * W
    Z = f.sum()
    mean = f @ beta / Z
    pred = f @ stats.norm.cdf(beta @ np.asarray(inst["x_new"])) / Z
    return {"log_evidence": float(np.log(Z)), "mean": mean.tolist(), "predict": float(pred)}


def equicorrelated_log_cdf(a, rho, n):
    """log P(X_i <= a for all i), X equicorrelated with correlation rho."""
    mpmath.mp.dps = 40
    a, rho = mpmath.mpf(a), mpmath.mpf(rho)
    s = mpmath.sqrt(rho)
    c = mpmath.sqrt(1 - rho)
    f = lambda z: mpmath.npdf(z) * mpmath.ncdf((a + s * z) / c) ** n
    val = mpmath.quad(f, [-mpmath.inf, -10, -5, 0, 5, mpmath.inf])
    return float(mpmath.log(val))


def single_obs_posterior_cdf(z):
    """CDF of the posterior for one observation y=1, x=1, prior N(0,1)."""
    f = lambda b: 2.0 * stats.norm.pdf(b) * stats.norm.cdf(b)
    return float(integrate.quad(f, -np.inf, z, epsabs=1e-13, epsrel=1e-13)[0])


def main():
    insts = probit_instances()
    for inst in insts:
        hi = quadrature_moments(inst, 500)
        lo = quadrature_moments(inst, 350)
        inst["quadrature"] = hi
        inst["quadrature_check"] = float(
            max(abs(hi["log_evidence"] - lo["log_evidence"]), np.max(np.abs(np.subtract(hi["mean"], lo["mean"]))))
        )
    values = {
        "probit_instances": insts,
        "equicorrelated_tail": {
            "upper": -5.0,
            "rho": 0.3,
            "n": 10,
            "log_value": equicorrelated_log_cdf(-5.0, 0.3, 10),
        },
        "equicorrelated_moderate": {
            "upper": 0.5,
            "rho": 0.5,
            "n": 6,
            "log_value": equicorrelated_log_cdf(0.5, 0.5, 6),
        },
        "single_obs_posterior_cdf": {str(z): single_obs_posterior_cdf(z) for z in (-1.0, 0.0, 0.5, 1.5)},
    }
    OUT.write_text(json.dumps(values, indent=1) + "\n")
    print(f"wrote {OUT}")
    for inst in insts:
        print(inst["quadrature_check"])


if __name__ == "__main__":
    main()
