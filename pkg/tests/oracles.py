"""Brute-force reference implementations used by the test suite.

Nothing here imports the code under test beyond plain data containers.
"""
import itertools

import numpy as np


def conv2d_loop(x, w, b, activation="linear"):
    """Triple-loop periodic cross-correlation over ``[B, Cin, H, W]``."""
    bsz, cin, h, wd = x.shape
    cout, _, k, _ = w.shape
    p = k // 2
    out = np.zeros((bsz, cout, h, wd))
    for n, o, i, j in itertools.product(range(bsz), range(cout), range(h), range(wd)):
        acc = b[o]
        for c, u, v in itertools.product(range(cin), range(k), range(k)):
            acc += w[o, c, u, v] * x[n, c, (i + u - p) % h, (j + v - p) % wd]
        out[n, o, i, j] = max(acc, 0.0) if activation == "relu" else acc
    return out


def masked_mse_loop(pred, target, mask):
    total, count = 0.0, 0
    bsz, f, h, w = pred.shape
    for n, c, i, j in itertools.product(range(bsz), range(f), range(h), range(w)):
        if mask[i, j]:
            total += (pred[n, c, i, j] - target[n, c, i, j]) ** 2
            count += 1
    return total / count


def scalar_adam(grad_fn, w0, lr, steps, beta1=0.9, beta2=0.99, eps=1e-20):
    w, m, v, out = w0, 0.0, 0.0, []
    for t in range(1, steps + 1):
        g = grad_fn(w)
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        mhat = m / (1 - beta1**t)
        vhat = v / (1 - beta2**t)
        w = w - lr * mhat / (vhat**0.5 + eps)
        out.append(w)
    return out


def central_differences(f, arrays, h=1e-5):
    """Gradient of scalar ``f()`` w.r.t. every entry of every array (mutated in place and restored)."""
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        for idx in np.ndindex(a.shape):
            old = a[idx]
            a[idx] = old + h
            fp = f()
            a[idx] = old - h
            fm = f()
            a[idx] = old
            g[idx] = (fp - fm) / (2 * h)
        grads.append(g)
    return grads


def pinv_solve(a, b, lam):
    """Ridge solution through an explicit pseudo-inverse of the stacked system."""
    n = a.shape[1]
    stacked = np.vstack([a, np.sqrt(lam) * np.eye(n)])
    rhs = np.vstack([b, np.zeros((n, b.shape[1]))])
    return np.linalg.pinv(stacked) @ rhs


def grappa_point(src, weights, target, offset, accel, lattice, taps):
    """Prediction at one target from enumerated wrapped source indices.

    ``src`` is ``[C, H, W]`` pattern-masked data; ``weights`` is
    ``[C*k1*k2, C]`` with rows ordered (coil, tap1, tap2).
    """
    c, n1, n2 = src.shape
    o1, o2 = offset
    r1, r2 = accel
    vec = []
    for coil in range(c):
        for d1 in taps[0]:
            for d2 in taps[1]:
                vec.append(src[coil, (target[0] - o1 + r1 * d1) % n1, (target[1] - o2 + r2 * d2) % n2])
    return np.array(vec) @ weights


def two_pass_std(samples):
    """Two-pass per-pixel sample std (ddof=1)."""
    samples = np.asarray(samples)
    mu = samples.mean(axis=0)
    return np.sqrt(((samples - mu) ** 2).sum(axis=0) / (len(samples) - 1))


def kernel_generated(shape, n_coils, accel, geometry, seed):
    """Grid whose every off-lattice value is a fixed combination of wrapped lattice neighbours.

    Returns (data, {offset: weights}); the lattice is ``[::r1, ::r2]``. Built with explicit loops.
    """
    rng = np.random.default_rng(seed)
    nf = 1 if len(shape) == 2 else shape[0]
    n1, n2 = shape[-2:]
    r1, r2 = accel
    kf, k1, k2 = geometry
    tf, t1, t2 = (np.arange(k) - (k - 1) // 2 for k in geometry)
    data = np.zeros((n_coils, nf, n1, n2), complex)
    lattice = np.zeros((n1, n2), bool)
    lattice[::r1, ::r2] = True
    data[:, :, lattice] = rng.standard_normal((n_coils, nf, lattice.sum())) + 1j * rng.standard_normal(
        (n_coils, nf, lattice.sum())
    )
    truth = {}
    for o in [(a, b) for a in range(r1) for b in range(r2) if (a, b) != (0, 0)]:
        w = rng.standard_normal((n_coils * kf * k1 * k2, n_coils)) + 1j * rng.standard_normal(
            (n_coils * kf * k1 * k2, n_coils)
        )
        w /= np.sqrt(w.shape[0])
        truth[o] = w
        for f, i, j in itertools.product(range(nf), range(o[0], n1, r1), range(o[1], n2, r2)):
            vec = [
                data[c, (f + e) % nf, (i - o[0] + r1 * d1) % n1, (j - o[1] + r2 * d2) % n2]
                for c in range(n_coils) for e in tf for d1 in t1 for d2 in t2
            ]
            data[:, f, i, j] = np.array(vec) @ w
    return (data[:, 0] if len(shape) == 2 else data), truth


def naive_centered_dft(x, sign=-1):
    """O(N^2) unitary 2D DFT with the DC bin at index n//2; ``sign=+1`` gives the inverse."""
    n1, n2 = x.shape
    out = np.zeros_like(x, dtype=complex)
    for a1, a2 in itertools.product(range(n1), range(n2)):
        acc = 0j
        for b1, b2 in itertools.product(range(n1), range(n2)):
            phase = (a1 - n1 // 2) * (b1 - n1 // 2) / n1 + (a2 - n2 // 2) * (b2 - n2 // 2) / n2
            acc += x[b1, b2] * np.exp(sign * 2j * np.pi * phase)
        out[a1, a2] = acc / np.sqrt(n1 * n2)
    return out


def naive_centered_idft(k):
    return naive_centered_dft(k, sign=+1)
