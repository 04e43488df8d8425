"""Pure numpy bracket kernels.

Brackets are passed around as *packed* vectors: for every pair ``a < b`` in
lexicographic order the ``n`` structure constants ``c[a, b, :]`` follow each
other, so ``v[q * n + k] = c[a_q, b_q, k]``.  The Cython module ``_ckernels``
exposes exactly the same functions.
"""
from functools import lru_cache

import numpy as np

BACKEND = "python"


@lru_cache(maxsize=None)
def pair_index(n):
    """Row/column indices of the strictly upper triangle, lexicographic."""
    rows, cols = np.triu_indices(n, k=1)
    rows.setflags(write=False)
    cols.setflags(write=False)
    return rows, cols


def unpack(v, n):
    rows, cols = pair_index(n)
    v = np.asarray(v)
    c = np.zeros((n, n, n), dtype=v.dtype)
    upper = v.reshape(len(rows), n)
    c[rows, cols, :] = upper
    c[cols, rows, :] = -upper
    return c


def pack(c):
    n = c.shape[0]
    rows, cols = pair_index(n)
    return np.ascontiguousarray(c[rows, cols, :]).ravel()


def act_packed(X, v, n):
    """Infinitesimal GL_n action (X.mu)(a, b) = X mu(a, b) - mu(Xa, b) - mu(a, Xb)."""
    X = np.asarray(X, dtype=float)
    c = unpack(np.asarray(v, dtype=float), n)
    out = np.einsum("kl,abl->abk", X, c)
    inner = np.einsum("pa,pbk->abk", X, c)
    # skew symmetry: mu(a, Xb) = -mu(Xb, a)
    out -= inner
    out += inner.transpose(1, 0, 2)
    return pack(out)


def moment_packed(v, n):
    """Closed-form GL_n moment matrix  sum_ab c_abk c_abl - 2 sum_bk c_pbk c_abk."""
    c = unpack(np.asarray(v, dtype=float), n)
    flat = c.reshape(n * n, n)
    c_out = flat.T @ flat
    rows = c.reshape(n, n * n)
    c_in = rows @ rows.T
    return c_out - 2.0 * c_in


def sphere_field(v, n, scale):
    """``-scale`` times the gradient of F = |m(v)|^2 / |v|^4.

    The gradient is taken with respect to the bracket inner product, which is
    twice the packed dot product.  Returns ``(field, F, |grad F|)``.
    """
    v = np.asarray(v, dtype=float)
    M = moment_packed(v, n)
    w = act_packed(M, v, n)
    nsq = 2.0 * float(v @ v)
    msq = float(np.sum(M * M))
    grad = (4.0 / nsq**2) * (w - (msq / nsq) * v)
    gnorm = float(np.sqrt(2.0 * (grad @ grad)))
    return -scale * grad, msq / nsq**2, gnorm


def transport_packed(g, ginv, v, n):
    """Group action (g.mu)(x, y) = g mu(g^-1 x, g^-1 y) on a packed vector.

    Works for complex g and v as well (the compiled version is real only).
    """
    c = unpack(np.asarray(v), n)
    t = np.tensordot(c, ginv, axes=([1], [0]))          # [i, l, b]
    t = np.tensordot(ginv, t, axes=([0], [0]))          # [a, l, b]
    t = np.tensordot(t, g, axes=([1], [1]))             # [a, b, k]
    return pack(t)
