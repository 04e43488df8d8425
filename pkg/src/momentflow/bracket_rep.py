"""Skew-symmetric brackets on R^n (or C^n) as points of L^2(R^n)* (x) R^n."""
from dataclasses import dataclass
from typing import Optional
import warnings

import numpy as np

from . import _pykernels, kernels
from .moment_core import (
    RANK_RTOL,
    ActionModel,
    GroupTag,
    derealify,
    gl_basis,
    gl_complex_basis,
    half_trace_form,
    hermitian_basis,
    realify,
    sl_basis,
    symmetric_basis,
    trace_form,
    traceless_symmetric_basis,
)

LIE_TOL = 1e-9


class Bracket:
    """Structure constants mu(e_i, e_j) = sum_k c[i, j, k] e_k.

    Only the pairs i < j are stored (``upper``, one row per pair), so the
    full tensor returned by :meth:`tensor` is skew by construction.
    """

    __slots__ = ("n", "upper")

    def __init__(self, n, upper):
        upper = np.array(upper, dtype=complex if np.iscomplexobj(upper) else float)
        npairs = n * (n - 1) // 2
        if upper.shape != (npairs, n):
            raise ValueError(f"expected upper block of shape {(npairs, n)}, got {upper.shape}")
        self.n = int(n)
        self.upper = upper
        self.upper.setflags(write=False)

    @classmethod
    def zero(cls, n, complex_=False):
        return cls(n, np.zeros((n * (n - 1) // 2, n), dtype=complex if complex_ else float))

    @classmethod
    def from_tensor(cls, c, tol=0.0):
        c = np.asarray(c)
        n = c.shape[0]
        if c.shape != (n, n, n):
            raise ValueError("tensor must have shape (n, n, n)")
        if np.abs(c + c.transpose(1, 0, 2)).max(initial=0.0) > tol:
            raise ValueError("tensor is not skew in its first two indices")
        rows, cols = kernels.pair_index(n)
        return cls(n, c[rows, cols, :])

    @classmethod
    def from_entries(cls, n, entries, complex_=False):
        """Build from 1-based ``(i, j, k, value)`` with i < j."""
        rows, cols = kernels.pair_index(n)
        lookup = {(int(i), int(j)): q for q, (i, j) in enumerate(zip(rows, cols))}
        upper = np.zeros((len(rows), n), dtype=complex if complex_ else float)
        for i, j, k, value in entries:
            if not (1 <= i < j <= n and 1 <= k <= n):
                raise ValueError(f"bad entry index ({i}, {j}, {k}) for n = {n}")
            upper[lookup[(i - 1, j - 1)], k - 1] = value
        return cls(n, upper)

    @classmethod
    def from_vector(cls, n, v, complex_=False):
        """Inverse of :meth:`vector`."""
        v = np.asarray(v, dtype=float)
        npairs = n * (n - 1) // 2
        if complex_:
            h = v.size // 2
            return cls(n, (v[:h] + 1j * v[h:]).reshape(npairs, n))
        return cls(n, v.reshape(npairs, n))

    @property
    def is_complex(self):
        return np.iscomplexobj(self.upper)

    def tensor(self):
        rows, cols = kernels.pair_index(self.n)
        c = np.zeros((self.n,) * 3, dtype=self.upper.dtype)
        c[rows, cols, :] = self.upper
        c[cols, rows, :] = -self.upper
        return c

    def vector(self):
        """Packed real coordinates; (re, im) halves for complex brackets."""
        flat = self.upper.ravel()
        if self.is_complex:
            return np.concatenate([flat.real, flat.imag])
        return flat.copy()

    def norm_sq(self):
        """<mu, mu> = sum over ordered pairs (i, j) of |mu(e_i, e_j)|^2."""
        return 2.0 * float(np.sum(np.abs(self.upper) ** 2))

    def norm(self):
        return float(np.sqrt(self.norm_sq()))

    def entries(self, tol=0.0):
        """Nonzero entries as 1-based ``(i, j, k, c)`` tuples."""
        rows, cols = kernels.pair_index(self.n)
        out = []
        for q, (i, j) in enumerate(zip(rows, cols)):
            for k in range(self.n):
                c = self.upper[q, k]
                if abs(c) > tol:
                    out.append((int(i) + 1, int(j) + 1, k + 1, c))
        return out

    def is_zero(self):
        return not np.any(self.upper)

    def scaled(self, c):
        return Bracket(self.n, c * self.upper)

    def normalized(self):
        return self.scaled(1.0 / self.norm())

    def __eq__(self, other):
        return (isinstance(other, Bracket) and self.n == other.n
                and self.upper.shape == other.upper.shape
                and np.array_equal(self.upper, other.upper))

    def __hash__(self):
        return hash((self.n, self.upper.tobytes()))

    def __repr__(self):
        kind = "complex" if self.is_complex else "real"
        return f"Bracket(n={self.n}, {kind}, {len(self.entries())} nonzero)"

    def __call__(self, x, y):
        """mu(x, y) for coordinate vectors x, y."""
        return np.einsum("i,j,ijk->k", x, y, self.tensor())


# -- actions -------------------------------------------------------------------

def group_act(g, mu):
    """(g.mu)(x, y) = g mu(g^-1 x, g^-1 y)."""
    g = np.asarray(g)
    if g.shape != (mu.n, mu.n):
        raise ValueError(f"matrix shape {g.shape} does not match n = {mu.n}")
    cond = np.linalg.cond(g)
    if not np.isfinite(cond) or cond > 1e15:
        raise ValueError("group element is singular")
    if cond > 1e8:
        warnings.warn(f"ill-conditioned group element (cond = {cond:.3g})", RuntimeWarning)
    h = np.linalg.inv(g)
    c = np.einsum("kl,ia,jb,ijl->abk", g, h, h, mu.tensor())
    if not mu.is_complex and not np.iscomplexobj(g):
        c = c.real
    return Bracket.from_tensor(c, tol=np.inf)


def _act_vector(X, v, n):
    return kernels.act_packed(X, v, n)


def infinitesimal_act(X, mu):
    """(X.mu)(a, b) = X mu(a, b) - mu(Xa, b) - mu(a, Xb)."""
    X = np.asarray(X)
    if X.shape != (mu.n, mu.n):
        raise ValueError(f"matrix shape {X.shape} does not match n = {mu.n}")
    n = mu.n
    if not (mu.is_complex or np.iscomplexobj(X)):
        return Bracket(n, _act_vector(X, mu.upper.ravel(), n).reshape(-1, n))
    A, B = np.real(X), np.imag(X)
    x, y = np.real(mu.upper).ravel(), np.imag(mu.upper).ravel()
    re = _act_vector(A, x, n) - _act_vector(B, y, n)
    im = _act_vector(A, y, n) + _act_vector(B, x, n)
    return Bracket(n, (re + 1j * im).reshape(-1, n))


def derivation_defect(D, mu):
    """|D.mu|; zero exactly when D is a derivation of mu."""
    return infinitesimal_act(D, mu).norm()


# -- Lie theoretic predicates --------------------------------------------------

def jacobi_defect(mu):
    """Sup-norm of the cyclic sum mu(mu(a, b), c) + ... over basis triples."""
    c = mu.tensor()
    # J[a, b, d, k] = sum_l c[a, b, l] c[l, d, k]
    J = np.einsum("abl,ldk->abdk", c, c)
    cyc = J + J.transpose(1, 2, 0, 3) + J.transpose(2, 0, 1, 3)
    return float(np.abs(cyc).max(initial=0.0))


def _rank(A, scale, rtol=RANK_RTOL):
    if A.size == 0:
        return 0
    s = np.linalg.svd(A, compute_uv=False)
    return int(np.sum(s > rtol * scale))


def _span(A, scale, rtol=RANK_RTOL):
    """Orthonormal basis (columns) of the column space of A."""
    if A.size == 0:
        return np.zeros((A.shape[0], 0), dtype=A.dtype)
    U, s, _ = np.linalg.svd(A, full_matrices=False)
    return U[:, s > rtol * scale]


def _image(c, left, right):
    """Columns mu(x, y) for x in columns of ``left`` and y in columns of ``right``."""
    n = c.shape[0]
    if left.shape[1] == 0 or right.shape[1] == 0:
        return np.zeros((n, 0), dtype=c.dtype)
    img = np.einsum("ia,jb,ijk->kab", left, right, c)
    return img.reshape(n, -1)


def _series(mu, derived):
    c = mu.tensor()
    n = mu.n
    scale = max(mu.norm(), np.finfo(float).tiny)
    full = np.eye(n, dtype=c.dtype)
    current = full
    dims = [n]
    while True:
        left = current if derived else full
        nxt = _span(_image(c, left, current), scale)
        d = nxt.shape[1]
        if d == dims[-1]:
            return tuple(dims)
        dims.append(d)
        if d == 0:
            return tuple(dims)
        current = nxt


def lower_central_dims(mu):
    return _series(mu, derived=False)


def derived_dims(mu):
    return _series(mu, derived=True)


def is_nilpotent(mu):
    return lower_central_dims(mu)[-1] == 0


def is_solvable(mu):
    return derived_dims(mu)[-1] == 0


def center_dim(mu):
    c = mu.tensor()
    n = mu.n
    A = c.transpose(1, 2, 0).reshape(n * n, n)
    return n - _rank(A, max(mu.norm(), np.finfo(float).tiny))


def derivation_dim(mu):
    """Dimension of Der(mu) over the scalar field of mu."""
    n = mu.n
    if mu.is_zero():
        return n * n
    cols = [infinitesimal_act(E, mu).upper.ravel() for E in gl_basis(n)]
    A = np.column_stack(cols)
    s = np.linalg.svd(A, compute_uv=False)
    return n * n - int(np.sum(s > RANK_RTOL * s[0]))


def killing_form(mu):
    c = mu.tensor()
    # (ad e_i)_{kb} = c[i, b, k]
    return np.einsum("ibk,jkb->ij", c, c)


def killing_signature(mu):
    """(positive, negative, zero) eigenvalue counts of the Killing form."""
    n = mu.n
    B = killing_form(mu)
    if mu.is_complex:
        raise ValueError("signature is only defined for real brackets")
    w = np.linalg.eigvalsh(0.5 * (B + B.T))
    radius = float(np.abs(w).max(initial=0.0))
    if radius <= RANK_RTOL * mu.norm_sq():
        return (0, 0, n)
    thr = RANK_RTOL * radius
    return (int(np.sum(w > thr)), int(np.sum(w < -thr)), int(np.sum(np.abs(w) <= thr)))


def killing_rank(mu):
    B = killing_form(mu)
    return _rank(B, max(mu.norm_sq(), np.finfo(float).tiny))


@dataclass(frozen=True)
class AlgebraInvariants:
    lower_central_dims: tuple
    derived_dims: tuple
    center_dim: int
    derivation_dim: int
    killing_signature: Optional[tuple]  # None over C
    killing_rank: int
    jacobi_defect: float
    nilpotent: bool
    solvable: bool

    def discrete(self):
        """Integer-valued part, for exact comparisons."""
        return (self.lower_central_dims, self.derived_dims, self.center_dim,
                self.derivation_dim, self.killing_signature, self.killing_rank,
                self.nilpotent, self.solvable)

    def complex_part(self):
        """Fields that survive complexification (no Killing signature)."""
        return (self.lower_central_dims, self.derived_dims, self.center_dim,
                self.derivation_dim, self.killing_rank, self.nilpotent, self.solvable)


class NotALieAlgebra(ValueError):
    pass


def invariants(mu, lie_tol=LIE_TOL):
    defect = jacobi_defect(mu)
    if defect >= lie_tol * max(1.0, mu.norm_sq()):
        raise NotALieAlgebra(f"Jacobi identity fails (defect {defect:.3g})")
    lcs = lower_central_dims(mu)
    der = derived_dims(mu)
    return AlgebraInvariants(
        lower_central_dims=lcs,
        derived_dims=der,
        center_dim=center_dim(mu),
        derivation_dim=derivation_dim(mu),
        killing_signature=None if mu.is_complex else killing_signature(mu),
        killing_rank=killing_rank(mu),
        jacobi_defect=defect,
        nilpotent=lcs[-1] == 0,
        solvable=der[-1] == 0,
    )


def is_lie(mu, lie_tol=LIE_TOL):
    return jacobi_defect(mu) < lie_tol * max(1.0, mu.norm_sq())


# -- action models ---------------------------------------------------------------

def _inner_packed(u, w):
    return 2.0 * float(np.dot(u, w))


def bracket_model(n, group="gl"):
    """GL_n(R) or SL_n(R) acting on real brackets, as an :class:`ActionModel`."""
    if n < 2:
        raise ValueError("brackets need n >= 2")
    dim = n * n * (n - 1) // 2

    def act(X, v):
        return kernels.act_packed(X, v, n)

    def gact(g, v):
        return kernels.transport_packed(g, np.linalg.inv(g), v, n)

    if group == "gl":
        return ActionModel(
            dim_v=dim, group_tag=GroupTag.GL_REAL, p_basis=tuple(symmetric_basis(n)),
            act=act, inner_v=_inner_packed, inner_g=trace_form,
            algebra_basis=tuple(gl_basis(n)),
            moment_fn=lambda v: kernels.moment_packed(v, n),
            group_act=gact,
            field_fn=lambda v, scale: kernels.sphere_field(v, n, scale),
            identity_weight=-1.0, bracket_n=n, name=f"GL{n}(R) on brackets",
        )
    if group == "sl":
        eye = np.eye(n)

        def moment_sl(v):
            # traceless projection; tr m~ = -|v|^2 under GL
            return kernels.moment_packed(v, n) + (_inner_packed(v, v) / n) * eye

        return ActionModel(
            dim_v=dim, group_tag=GroupTag.SL_REAL, p_basis=tuple(traceless_symmetric_basis(n)),
            act=act, inner_v=_inner_packed, inner_g=trace_form,
            algebra_basis=tuple(sl_basis(n)),
            moment_fn=moment_sl, group_act=gact,
            identity_weight=-1.0, bracket_n=n, name=f"SL{n}(R) on brackets",
        )
    raise ValueError(f"unknown group {group!r}; expected 'gl' or 'sl'")


def complex_moment(mu):
    """Moment of a complex bracket under GL_n(C), as a complex Hermitian matrix."""
    c = mu.tensor().astype(complex)
    n = mu.n
    flat = c.reshape(n * n, n)
    P = flat.conj().T @ flat          # P_kl = sum_ab conj(c_abk) c_abl
    rows = c.reshape(n, n * n)
    Q = rows @ rows.conj().T          # Q_pa = sum_bk c_pbk conj(c_abk)
    return (P - 2.0 * Q).T


def complex_bracket_model(n):
    """Realified GL_n(C) acting on complex brackets (re, im packed halves)."""
    if n < 2:
        raise ValueError("brackets need n >= 2")
    dim = n * n * (n - 1)
    h = dim // 2

    def act(X, v):
        Z = derealify(np.asarray(X))
        A, B = Z.real, Z.imag
        x, y = v[:h], v[h:]
        re = kernels.act_packed(A, x, n) - kernels.act_packed(B, y, n)
        im = kernels.act_packed(A, y, n) + kernels.act_packed(B, x, n)
        return np.concatenate([re, im])

    def moment_fn(v):
        return realify(complex_moment(Bracket.from_vector(n, v, complex_=True)))

    def gact(g, v):
        g = np.asarray(g)
        if g.shape == (2 * n, 2 * n):
            g = derealify(g)
        w = _pykernels.transport_packed(g, np.linalg.inv(g), v[:h] + 1j * v[h:], n)
        return np.concatenate([w.real, w.imag])

    return ActionModel(
        dim_v=dim, group_tag=GroupTag.GL_COMPLEX,
        p_basis=tuple(realify(H) for H in hermitian_basis(n)),
        act=act, inner_v=_inner_packed, inner_g=half_trace_form,
        algebra_basis=tuple(gl_complex_basis(n)),
        moment_fn=moment_fn, group_act=gact,
        identity_weight=-1.0, bracket_n=n, name=f"GL{n}(C) on complex brackets (realified)",
    )


def model_for(mu, group="gl"):
    if mu.is_complex:
        if group != "gl":
            raise ValueError("complex brackets only support the GL model")
        return complex_bracket_model(mu.n)
    return bracket_model(mu.n, group)


def complexify(mu):
    """Embed a real bracket into V^C; returns (complex bracket, GL_n(C) model)."""
    if mu.is_complex:
        raise ValueError("bracket is already complex")
    return Bracket(mu.n, mu.upper.astype(complex)), complex_bracket_model(mu.n)
