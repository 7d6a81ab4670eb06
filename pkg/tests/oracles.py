"""Independent reference implementations used only by the tests.

None of these share code with the package: the eigen-solver is a plain
cyclic Jacobi iteration and the densities are evaluated with explicit full
covariance matrices in the original (unrotated) coordinates.
"""

import numpy as np


def jacobi_eigen(S, sweeps=100, tol=1e-14):
    """Eigenvalues and eigenvectors (columns) of a symmetric matrix by cyclic Jacobi rotations."""
    A = np.array(S, dtype=float)
    n = A.shape[0]
    Q = np.eye(n)
    for _ in range(sweeps):
        off = np.sqrt(np.sum(A**2) - np.sum(np.diag(A) ** 2))
        if off < tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(A[p, q]) < 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2 * A[p, q])
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta**2 + 1)) if theta != 0 else 1.0
                c = 1 / np.sqrt(t**2 + 1)
                s = t * c
                R = np.eye(n)
                R[p, p] = R[q, q] = c
                R[p, q], R[q, p] = s, -s
                A = R.T @ A @ R
                Q = Q @ R
    return np.diag(A), Q


def gauss_logpdf_full(x, mean, cov):
    d = x - mean
    sign, logdet = np.linalg.slogdet(cov)
    assert sign > 0
    return -0.5 * (len(x) * np.log(2 * np.pi) + logdet + d @ np.linalg.solve(cov, d))


def log_posterior(x, z, mu, covs, alpha, noise_cov):
    """Unnormalised log of sum_k alpha_k N(x; mu, C_k) * N(z; x, C_noise)."""
    terms = [np.log(a) + gauss_logpdf_full(x, mu, C) for a, C in zip(alpha, covs)]
    m = max(terms)
    return m + np.log(sum(np.exp(t - m) for t in terms)) + gauss_logpdf_full(z, x, noise_cov)


def direct_prior(history, gamma, V):
    """Weighted mean and rotated weighted variance of ``history`` (oldest first) by direct sums.

    The frame ``tau`` steps in the past carries weight ``gamma ** tau``.
    """
    history = np.asarray(history, dtype=float)
    n = len(history)
    w = np.array([gamma ** (n - i) for i in range(n)])
    W = w.sum()
    mu = (w[:, None] * history).sum(axis=0) / W
    u = (history - mu) @ V.T
    var = (w[:, None] * u**2).sum(axis=0) / W
    return mu, var, W


def random_rotation(rng, D):
    Q, R = np.linalg.qr(rng.standard_normal((D, D)))
    return (Q * np.sign(np.diag(R))).T
