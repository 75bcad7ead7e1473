"""Independent reference implementations used only by the tests.

Nothing here calls into the package or into numpy.linalg / scipy.linalg,
so the checks do not share code paths with what they verify.
"""

import math

import numpy as np


def gauss_jordan_inverse(a):
    """Inverse by Gauss-Jordan elimination with partial pivoting."""
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    aug = np.hstack([a, np.eye(n)])
    for col in range(n):
        pivot = col + int(np.argmax(np.abs(aug[col:, col])))
        if aug[pivot, col] == 0.0:
            raise ZeroDivisionError("singular matrix")
        aug[[col, pivot]] = aug[[pivot, col]]
        aug[col] /= aug[col, col]
        for row in range(n):
            if row != col:
                aug[row] -= aug[row, col] * aug[col]
    return aug[:, n:]


def determinant(a):
    """Determinant by Gaussian elimination with partial pivoting."""
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    det = 1.0
    for col in range(n):
        pivot = col + int(np.argmax(np.abs(a[col:, col])))
        if a[pivot, col] == 0.0:
            return 0.0
        if pivot != col:
            a[[col, pivot]] = a[[pivot, col]]
            det = -det
        det *= a[col, col]
        for row in range(col + 1, n):
            a[row, col:] -= a[row, col] / a[col, col] * a[col, col:]
    return det


def jacobi_eigenvalues(a, tol=1e-14, max_sweeps=100):
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations."""
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    for _ in range(max_sweeps):
        off = math.sqrt(sum(a[i, j] ** 2 for i in range(n) for j in range(n) if i != j))
        if off <= tol * max(1.0, float(np.abs(a).max())):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if a[p, q] == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * a[p, q])
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
    return np.sort(np.diag(a))


def gaussian_nlml(k, y):
    """-log N(y | 0, K) from an explicit inverse and determinant."""
    k = np.asarray(k, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = y.size
    inv = gauss_jordan_inverse(k)
    return 0.5 * float(y @ inv @ y) + 0.5 * math.log(determinant(k)) + 0.5 * n * math.log(2.0 * math.pi)


def gp_posterior(k_noisy, y, k_cross, k_test_diag):
    """Predictive mean and latent variance by explicit inversion."""
    inv = gauss_jordan_inverse(k_noisy)
    k_cross = np.asarray(k_cross, dtype=np.float64)
    mean = k_cross.T @ inv @ np.asarray(y, dtype=np.float64)
    var = np.asarray(k_test_diag, dtype=np.float64) - np.einsum("ij,ik,kj->j", k_cross, inv, k_cross)
    return mean, var


def rbf_loop(a, b, signal_var, length_sq):
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    out = np.empty((a.shape[0], b.shape[0]))
    for i, ai in enumerate(a):
        for j, bj in enumerate(b):
            d2 = sum((x - z) ** 2 for x, z in zip(ai, bj))
            out[i, j] = signal_var * math.exp(-d2 / (2.0 * length_sq))
    return out


def poly_loop(a, b, signal_var, length_sq, degree):
    sf, sl = math.sqrt(signal_var), math.sqrt(length_sq)
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    return np.array([[(sf * sum(x * z for x, z in zip(ai, bj)) + sl) ** degree for bj in b] for ai in a])


def mlp_loop(weights, biases, x):
    """Forward pass row by row with explicit ReLU, linear last layer."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    out = []
    for row in x:
        h = list(row)
        for layer, (w, b) in enumerate(zip(weights, biases)):
            z = [sum(h[i] * w[i][j] for i in range(len(h))) + b[j] for j in range(len(b))]
            h = z if layer == len(weights) - 1 else [max(v, 0.0) for v in z]
        out.append(h)
    return np.array(out)


def central_difference(f, x, h=1e-5):
    """Numeric gradient of a scalar function of a flat vector."""
    x = np.array(x, dtype=np.float64)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2.0 * h)
    return g


def rel_err(a, b, floor=1e-8):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))
