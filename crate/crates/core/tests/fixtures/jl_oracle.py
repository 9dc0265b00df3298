"""Brute-force pairwise distortion oracle for Gaussian random projection.

Independent of the Rust implementation: numpy RNG for both the point cloud
and the projection matrix, explicit O(n^2) pairwise squared distances.
Output is frozen into jl_oracle.json and read by the acceptance suite.
"""
import json

import numpy as np
from scipy import stats

N_POINTS = 500
DIM = 256
TRIALS = 200
EPS = [0.1, 0.25, 0.5]


def pairwise_sq(x):
    n = x.shape[0]
    out = []
    for i in range(n):
        diff = x[i + 1 :] - x[i]
        out.append(np.einsum("ij,ij->i", diff, diff))
    return np.concatenate(out)


def trial(rng, k):
    pts = rng.standard_normal((N_POINTS, DIM))
    r = rng.standard_normal((k, DIM)) / np.sqrt(k)
    proj = pts @ r.T
    ratio = pairwise_sq(proj) / pairwise_sq(pts)
    eps = np.abs(ratio - 1.0)
    return {
        "eps_max": float(eps.max()),
        "eps_p99": float(np.quantile(eps, 0.99)),
        "frac_above": {str(e): float(np.mean(eps > e)) for e in EPS},
    }


def main():
    rng = np.random.default_rng(20190101)
    result = {}
    for k in (16, 32):
        runs = [trial(rng, k) for _ in range(TRIALS)]
        frac05 = np.array([r["frac_above"]["0.5"] for r in runs])
        p99 = np.array([r["eps_p99"] for r in runs])
        emax = np.array([r["eps_max"] for r in runs])
        # marginal probability for one pair: chi2_k / k outside [0.5, 1.5]
        chi2 = stats.chi2(k)
        exact = float(chi2.sf(1.5 * k) + chi2.cdf(0.5 * k))
        result[str(k)] = {
            "trials": TRIALS,
            "frac_above_0.5_mean": float(frac05.mean()),
            "frac_above_0.5_max": float(frac05.max()),
            "frac_above_0.5_chi2_exact": exact,
            "eps_p99_min": float(p99.min()),
            "eps_p99_max": float(p99.max()),
            "eps_max_mean": float(emax.mean()),
            "eps_max_max": float(emax.max()),
        }
    print(json.dumps(result, indent=2))


if __name__ == "__main__":
    main()
