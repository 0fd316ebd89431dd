"""Hot numeric kernels with a numba path and a pure-numpy path.

Both paths evaluate the same arithmetic in the same order, so for a given
input they agree bit-for-bit (interpolation and pooling accumulate in float64
and cast back to the input dtype on store). Use :func:`ctxfer._accel.set_backend`
or the ``CTXFER_DISABLE_NUMBA`` environment variable to pick one.
"""

import math

import numpy as np

from ._accel import get_backend, njit

NEAREST_EDGE = 0
CONSTANT = 1


# --------------------------------------------------------------------------
# bilinear resize (half-pixel centres)
# --------------------------------------------------------------------------

def _source_coords(n_out, n_in):
    scale = n_in / n_out
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * scale - 0.5
    src = np.clip(src, 0.0, n_in - 1.0)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, src - lo


@njit
def _resize_numba(img, ys0, ys1, fys, xs0, xs1, fxs, out):
    n_out_h, n_out_w, n_c = out.shape
    for i in range(n_out_h):
        y0 = ys0[i]
        y1 = ys1[i]
        fy = fys[i]
        for j in range(n_out_w):
            x0 = xs0[j]
            x1 = xs1[j]
            fx = fxs[j]
            for c in range(n_c):
                top = (1.0 - fx) * np.float64(img[y0, x0, c]) + fx * np.float64(img[y0, x1, c])
                bot = (1.0 - fx) * np.float64(img[y1, x0, c]) + fx * np.float64(img[y1, x1, c])
                out[i, j, c] = (1.0 - fy) * top + fy * bot
    return out


def _resize_numpy(img, ys0, ys1, fys, xs0, xs1, fxs, out):
    src = img.astype(np.float64)
    fx = fxs[None, :, None]
    fy = fys[:, None, None]
    top = (1.0 - fx) * src[ys0][:, xs0] + fx * src[ys0][:, xs1]
    bot = (1.0 - fx) * src[ys1][:, xs0] + fx * src[ys1][:, xs1]
    out[...] = (1.0 - fy) * top + fy * bot
    return out


def resize_bilinear(img, height, width):
    """Resize an ``H x W x C`` array with bilinear interpolation.

    Sample positions use half-pixel centres: output pixel ``i`` reads input
    coordinate ``(i + 0.5) * in / out - 0.5``, clamped to the image.
    """
    img = np.ascontiguousarray(img)
    if img.ndim != 3:
        raise ValueError("expected an H x W x C array")
    ys0, ys1, fys = _source_coords(height, img.shape[0])
    xs0, xs1, fxs = _source_coords(width, img.shape[1])
    out = np.empty((height, width, img.shape[2]), dtype=img.dtype)
    fn = _resize_numba if get_backend() == "numba" else _resize_numpy
    return fn(img, ys0, ys1, fys, xs0, xs1, fxs, out)


# --------------------------------------------------------------------------
# inverse-warp affine sampling
# --------------------------------------------------------------------------

@njit
def _warp_numba(img, m, mode, cval, lo, hi, out):
    h, w, n_c = img.shape
    for y in range(h):
        for x in range(w):
            sx = m[0, 0] * x + m[0, 1] * y + m[0, 2]
            sy = m[1, 0] * x + m[1, 1] * y + m[1, 2]
            if mode == 0:
                sx = min(max(sx, 0.0), w - 1.0)
                sy = min(max(sy, 0.0), h - 1.0)
            x0 = int(math.floor(sx))
            y0 = int(math.floor(sy))
            fx = sx - x0
            fy = sy - y0
            x1 = x0 + 1
            y1 = y0 + 1
            for c in range(n_c):
                if mode == 0:
                    v00 = np.float64(img[y0, x0, c])
                    v01 = np.float64(img[y0, min(x1, w - 1), c])
                    v10 = np.float64(img[min(y1, h - 1), x0, c])
                    v11 = np.float64(img[min(y1, h - 1), min(x1, w - 1), c])
                else:
                    in_x0 = 0 <= x0 < w
                    in_x1 = 0 <= x1 < w
                    in_y0 = 0 <= y0 < h
                    in_y1 = 0 <= y1 < h
                    v00 = np.float64(img[y0, x0, c]) if in_y0 and in_x0 else cval
                    v01 = np.float64(img[y0, x1, c]) if in_y0 and in_x1 else cval
                    v10 = np.float64(img[y1, x0, c]) if in_y1 and in_x0 else cval
                    v11 = np.float64(img[y1, x1, c]) if in_y1 and in_x1 else cval
                top = (1.0 - fx) * v00 + fx * v01
                bot = (1.0 - fx) * v10 + fx * v11
                v = (1.0 - fy) * top + fy * bot
                out[y, x, c] = min(max(v, lo), hi)
    return out


def _warp_numpy(img, m, mode, cval, lo, hi, out):
    h, w, _ = img.shape
    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    sx = m[0, 0] * xs + m[0, 1] * ys + m[0, 2]
    sy = m[1, 0] * xs + m[1, 1] * ys + m[1, 2]
    if mode == NEAREST_EDGE:
        sx = np.minimum(np.maximum(sx, 0.0), w - 1.0)
        sy = np.minimum(np.maximum(sy, 0.0), h - 1.0)
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    fx = (sx - x0)[..., None]
    fy = (sy - y0)[..., None]
    x1 = x0 + 1
    y1 = y0 + 1
    src = img.astype(np.float64)

    def gather(yy, xx):
        if mode == NEAREST_EDGE:
            return src[np.minimum(yy, h - 1), np.minimum(xx, w - 1)]
        inside = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
        vals = src[np.clip(yy, 0, h - 1), np.clip(xx, 0, w - 1)]
        vals[~inside] = cval
        return vals

    top = (1.0 - fx) * gather(y0, x0) + fx * gather(y0, x1)
    bot = (1.0 - fx) * gather(y1, x0) + fx * gather(y1, x1)
    v = (1.0 - fy) * top + fy * bot
    out[...] = np.minimum(np.maximum(v, lo), hi)
    return out


def warp_affine(img, matrix, mode=NEAREST_EDGE, cval=0.0, lo=0.0, hi=1.0):
    """Bilinearly sample ``img`` at ``matrix @ (x, y, 1)`` for every output pixel.

    ``x`` is the column and ``y`` the row index. Results are clipped to
    ``[lo, hi]``.
    """
    img = np.ascontiguousarray(img)
    m = np.ascontiguousarray(matrix, dtype=np.float64)
    out = np.empty_like(img)
    fn = _warp_numba if get_backend() == "numba" else _warp_numpy
    return fn(img, m, int(mode), float(cval), float(lo), float(hi), out)


# --------------------------------------------------------------------------
# 2-D pooling over N x H x W x C batches
# --------------------------------------------------------------------------

@njit
def _pool_numba(x, kh, kw, stride, pad_top, pad_left, out_h, out_w, is_max, out):
    n, h, w, n_c = x.shape
    acc = np.empty(n_c, dtype=np.float64)
    for b in range(n):
        for i in range(out_h):
            r0 = i * stride - pad_top
            for j in range(out_w):
                c0 = j * stride - pad_left
                acc[:] = -np.inf if is_max else 0.0
                count = 0
                # window outer, channels inner: contiguous reads, same summation order as numpy
                for dy in range(kh):
                    r = r0 + dy
                    if r < 0 or r >= h:
                        continue
                    for dx in range(kw):
                        cc = c0 + dx
                        if cc < 0 or cc >= w:
                            continue
                        count += 1
                        if is_max:
                            for c in range(n_c):
                                v = np.float64(x[b, r, cc, c])
                                if v > acc[c]:
                                    acc[c] = v
                        else:
                            for c in range(n_c):
                                acc[c] += np.float64(x[b, r, cc, c])
                for c in range(n_c):
                    out[b, i, j, c] = acc[c] if is_max else acc[c] / count
    return out


def _pool_numpy(x, kh, kw, stride, pad_top, pad_left, out_h, out_w, is_max, out):
    n, h, w, n_c = x.shape
    pad_bottom = max((out_h - 1) * stride + kh - h - pad_top, 0)
    pad_right = max((out_w - 1) * stride + kw - w - pad_left, 0)
    fill = -np.inf if is_max else 0.0
    padded = np.pad(
        x.astype(np.float64),
        ((0, 0), (pad_top, pad_bottom), (pad_left, pad_right), (0, 0)),
        constant_values=fill,
    )
    span_h = (out_h - 1) * stride + 1
    span_w = (out_w - 1) * stride + 1
    acc = np.full((n, out_h, out_w, n_c), fill, dtype=np.float64)
    if not is_max:
        ones = np.pad(np.ones((h, w)), ((pad_top, pad_bottom), (pad_left, pad_right)))
        count = np.zeros((out_h, out_w))
    for dy in range(kh):
        for dx in range(kw):
            window = padded[:, dy:dy + span_h:stride, dx:dx + span_w:stride, :]
            if is_max:
                np.maximum(acc, window, out=acc)
            else:
                acc += window
                count += ones[dy:dy + span_h:stride, dx:dx + span_w:stride]
    if not is_max:
        acc /= count[None, :, :, None]
    out[...] = acc
    return out


def pool_output_size(n, k, stride, padding):
    if padding == "valid":
        return (n - k) // stride + 1
    return -(-n // stride)


def pool_padding(n, k, stride, padding):
    """Leading pad for one axis (TensorFlow ``same`` convention)."""
    if padding == "valid":
        return 0
    out = pool_output_size(n, k, stride, padding)
    total = max((out - 1) * stride + k - n, 0)
    return total // 2


def pool2d(x, size, stride, padding="valid", op="max"):
    """Max or average pooling; average pooling ignores padded cells."""
    x = np.ascontiguousarray(x)
    kh, kw = size
    _, h, w, n_c = x.shape
    out_h = pool_output_size(h, kh, stride, padding)
    out_w = pool_output_size(w, kw, stride, padding)
    pad_top = pool_padding(h, kh, stride, padding)
    pad_left = pool_padding(w, kw, stride, padding)
    out = np.empty((x.shape[0], out_h, out_w, n_c), dtype=x.dtype)
    fn = _pool_numba if get_backend() == "numba" else _pool_numpy
    return fn(x, kh, kw, stride, pad_top, pad_left, out_h, out_w, op == "max", out)


# --------------------------------------------------------------------------
# fused RMSprop update
# --------------------------------------------------------------------------

@njit
def _rmsprop_numba(p, g, s, lr, rho, one_minus_rho, eps, p_out, s_out):
    for i in range(p.size):
        gi = g[i]
        si = rho * s[i] + one_minus_rho * (gi * gi)
        s_out[i] = si
        p_out[i] = p[i] - lr * gi / (np.sqrt(si) + eps)


def _rmsprop_numpy(p, g, s, lr, rho, one_minus_rho, eps, p_out, s_out):
    s_out[...] = rho * s + one_minus_rho * (g * g)
    p_out[...] = p - lr * g / (np.sqrt(s_out) + eps)


def rmsprop_update(param, grad, state, lr, rho, eps):
    """Return ``(new_param, new_state)``; inputs are left untouched.

    Arithmetic runs in the parameter dtype.
    """
    dtype = param.dtype.type
    p = np.ascontiguousarray(param).reshape(-1)
    g = np.ascontiguousarray(grad, dtype=param.dtype).reshape(-1)
    s = np.ascontiguousarray(state, dtype=param.dtype).reshape(-1)
    p_out = np.empty_like(p)
    s_out = np.empty_like(s)
    fn = _rmsprop_numba if get_backend() == "numba" else _rmsprop_numpy
    fn(p, g, s, dtype(lr), dtype(rho), dtype(1.0 - rho), dtype(eps), p_out, s_out)
    return p_out.reshape(param.shape), s_out.reshape(param.shape)
