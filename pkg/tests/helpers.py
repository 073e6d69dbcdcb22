"""Independent oracles for cross-checking the library implementations.

Everything here is written the slow, obvious way (explicit loops, naive
summation) and must stay independent of the code under test: these functions
are the second route in every dual-route check.
"""

import numpy as np


def relative_error(a, b, floor=1e-12):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float((np.abs(a - b) / denom).max())


def numeric_gradient(fn, array, step=1e-5):
    """Central finite differences of a scalar function w.r.t. one array."""
    grad = np.zeros_like(array, dtype=np.float64)
    flat = array.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        up = fn()
        flat[i] = orig - step
        down = fn()
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * step)
    return grad


def same_pad_sizes(size, kernel, stride):
    out = -(-size // stride)
    total = max((out - 1) * stride + kernel - size, 0)
    return total // 2, total - total // 2, out


def naive_conv2d(x, weight, bias, stride):
    """Direct cross-correlation sum over [N,H,W,Cin] with same-style padding."""
    n, h, w, cin = x.shape
    cout, cin_w, kh, kw = weight.shape
    assert cin == cin_w
    sh, sw = stride if isinstance(stride, tuple) else (stride, stride)
    pt, _, out_h = same_pad_sizes(h, kh, sh)
    pl, _, out_w = same_pad_sizes(w, kw, sw)
    out = np.zeros((n, out_h, out_w, cout), dtype=np.float64)
    for b in range(n):
        for oy in range(out_h):
            for ox in range(out_w):
                for oc in range(cout):
                    acc = 0.0
                    for ky in range(kh):
                        for kx in range(kw):
                            iy = oy * sh + ky - pt
                            ix = ox * sw + kx - pl
                            if 0 <= iy < h and 0 <= ix < w:
                                for ic in range(cin):
                                    acc += x[b, iy, ix, ic] * weight[oc, ic, ky, kx]
                    out[b, oy, ox, oc] = acc + bias[oc]
    return out


def naive_dft_magnitudes(frame, n):
    """Quadratic-time real-input DFT magnitudes, bins 0..n//2."""
    frame = np.asarray(frame, dtype=np.float64)
    padded = np.zeros(n)
    padded[:frame.size] = frame
    mags = []
    for k in range(n // 2 + 1):
        re = sum(padded[t] * np.cos(-2.0 * np.pi * k * t / n) for t in range(n))
        im = sum(padded[t] * np.sin(-2.0 * np.pi * k * t / n) for t in range(n))
        mags.append(np.hypot(re, im))
    return np.array(mags)


def naive_filterbank_apply(filters, power):
    """Explicit double-loop filterbank application."""
    out = np.zeros(filters.shape[0])
    for i in range(filters.shape[0]):
        acc = 0.0
        for j in range(filters.shape[1]):
            acc += filters[i, j] * power[j]
        out[i] = acc
    return out


def pca_variance_oracle(data, k):
    """Top-k variance from a dense eigendecomposition of the covariance."""
    centered = data - data.mean(axis=0)
    cov = centered.T @ centered / centered.shape[0]
    eigvals = np.linalg.eigvalsh(cov)
    return float(np.sort(eigvals)[::-1][:k].sum())
