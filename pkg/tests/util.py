"""Independent oracles shared by the tests.

Everything here is deliberately written the slow, obvious way (python
loops, recursion, closed forms) so it cannot share a bug with the library
paths it checks.
"""

import math

import numpy as np

from dlformer.autodiff import Tape


def finite_difference_grads(loss_fn, params, step=1e-5):
    """Central-difference gradient of a scalar loss for each parameter tensor.

    ``loss_fn`` re-evaluates the loss from the current parameter values.
    """
    grads = []
    for p in params:
        flat = p.data.reshape(-1)
        grad = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = loss_fn()
            flat[i] = orig - step
            lo = loss_fn()
            flat[i] = orig
            grad[i] = (hi - lo) / (2.0 * step)
        grads.append(grad.reshape(p.shape))
    return grads


def analytic_grads(forward_fn, params):
    """Tape-recorded gradients of forward_fn() -> scalar Tensor."""
    for p in params:
        p.grad = None
    with Tape() as tape:
        loss = forward_fn()
    tape.backward(loss)
    return [p.grad.copy() for p in params]


def max_rel_err(a, b):
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    return float(np.max(np.abs(a - b) / denom))


def matmul_oracle(a, b):
    """Triple-loop matrix product."""
    a = np.asarray(a)
    b = np.asarray(b)
    m, p = a.shape
    p2, n = b.shape
    assert p == p2
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            total = 0.0
            for t in range(p):
                total += a[i, t] * b[t, j]
            out[i, j] = total
    return out


def softmax_oracle(row):
    """Closed-form softmax of one row via math.exp."""
    exps = [math.exp(v) for v in row]
    total = sum(exps)
    return [e / total for e in exps]


def rmse_oracle(y, y_hat):
    total = 0.0
    for a, b in zip(y, y_hat):
        total += (a - b) ** 2
    return math.sqrt(total / len(y))


def r2_oracle(y, y_hat):
    mean = sum(y) / len(y)
    ss_tot = sum((a - mean) ** 2 for a in y)
    ss_res = sum((a - b) ** 2 for a, b in zip(y, y_hat))
    return 1.0 - ss_res / ss_tot


def dtw_paths(n, m):
    """Every monotone warping path from (0, 0) to (n-1, m-1)."""
    paths = []

    def walk(i, j, path):
        path = path + [(i, j)]
        if i == n - 1 and j == m - 1:
            paths.append(path)
            return
        if i + 1 < n:
            walk(i + 1, j, path)
        if j + 1 < m:
            walk(i, j + 1, path)
        if i + 1 < n and j + 1 < m:
            walk(i + 1, j + 1, path)

    walk(0, 0, [])
    return paths


def dtw_oracle(a, b):
    """Exhaustive minimum over all monotone warping paths."""
    best = math.inf
    for path in dtw_paths(len(a), len(b)):
        cost = sum(abs(a[i] - b[j]) for i, j in path)
        best = min(best, cost)
    return best
