"""Moment maps for linear actions of GL_n(R), SL_n(R) and realified GL_n(C).

An :class:`ActionModel` bundles the representation space V (as flat real
vectors), the infinitesimal action and an orthonormal basis of the symmetric
part ``p`` of the Lie algebra.  Everything else here is a pure function of a
model and a vector.
"""
from dataclasses import dataclass, field
from enum import Enum
import logging
from typing import Callable, Optional

import numpy as np

logger = logging.getLogger(__name__)

RANK_RTOL = 1e-8


class GroupTag(str, Enum):
    GL_REAL = "GL_real"
    SL_REAL = "SL_real"
    GL_COMPLEX = "GL_complex_realified"


# -- matrix bases -------------------------------------------------------------

def trace_form(X, Y):
    """<<X, Y>> = tr(X Y^t)."""
    return float(np.sum(np.asarray(X) * np.asarray(Y)))


def half_trace_form(X, Y):
    """Re tr(H K^*) for the complex matrices H, K whose realifications are X, Y."""
    return 0.5 * trace_form(X, Y)


def realify(H):
    """Real 2n x 2n matrix of the complex n x n matrix H acting on (re, im)."""
    H = np.asarray(H, dtype=complex)
    A, B = H.real, H.imag
    return np.block([[A, -B], [B, A]])


def derealify(X):
    """Inverse of ``realify``; other real matrices are first projected onto
    the complex-linear ones (the part commuting with the complex structure)."""
    n = X.shape[0] // 2
    return 0.5 * ((X[:n, :n] + X[n:, n:]) + 1j * (X[n:, :n] - X[:n, n:]))


def symmetric_basis(n):
    """Orthonormal basis of symmetric n x n matrices under the trace form."""
    basis = []
    for i in range(n):
        E = np.zeros((n, n))
        E[i, i] = 1.0
        basis.append(E)
    s = 1.0 / np.sqrt(2.0)
    for i in range(n):
        for j in range(i + 1, n):
            E = np.zeros((n, n))
            E[i, j] = E[j, i] = s
            basis.append(E)
    return basis


def traceless_symmetric_basis(n):
    """Orthonormal basis of traceless symmetric matrices.

    Diagonal part uses the normalized Helmert contrasts.
    """
    basis = []
    for k in range(1, n):
        d = np.zeros(n)
        d[:k] = 1.0
        d[k] = -float(k)
        basis.append(np.diag(d / np.linalg.norm(d)))
    basis.extend(symmetric_basis(n)[n:])
    return basis


def hermitian_basis(n):
    """Complex Hermitian basis orthonormal under Re tr(X Y^*).

    Ordered: real diagonal, real symmetric off-diagonal, imaginary skew
    off-diagonal.  The first n(n+1)/2 elements span the real symmetric
    matrices, so the real locus sits in a leading block.
    """
    basis = [E.astype(complex) for E in symmetric_basis(n)]
    s = 1.0 / np.sqrt(2.0)
    for i in range(n):
        for j in range(i + 1, n):
            E = np.zeros((n, n), dtype=complex)
            E[i, j] = -1j * s
            E[j, i] = 1j * s
            basis.append(E)
    return basis


def gl_basis(n):
    basis = []
    for i in range(n):
        for j in range(n):
            E = np.zeros((n, n))
            E[i, j] = 1.0
            basis.append(E)
    return basis


def sl_basis(n):
    basis = [E for E in gl_basis(n) if not np.any(np.diag(E))]
    for k in range(n - 1):
        d = np.zeros(n)
        d[k], d[k + 1] = 1.0, -1.0
        basis.append(np.diag(d))
    return basis


def gl_complex_basis(n):
    """Real basis of gl_n(C) as realified 2n x 2n matrices."""
    return [realify(E) for E in gl_basis(n)] + [realify(1j * E) for E in gl_basis(n)]


# -- model ------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ActionModel:
    """A linear reductive action, packaged for numerics.

    ``act(X, v)`` is the infinitesimal action of a (realified) matrix X,
    ``inner_v`` the invariant inner product on V and ``inner_g`` the one on
    matrices under which ``p_basis`` is orthonormal.  ``algebra_basis`` spans
    the whole Lie algebra and is only used for stabilizers.

    ``moment_fn`` may supply a closed form of the moment map; when absent the
    basis summation is used.  ``group_act`` is the group action, when known;
    together with ``identity_weight`` it lets flows be integrated on the group.
    """

    dim_v: int
    group_tag: GroupTag
    p_basis: tuple
    act: Callable[[np.ndarray, np.ndarray], np.ndarray]
    inner_v: Callable[[np.ndarray, np.ndarray], float]
    inner_g: Callable[[np.ndarray, np.ndarray], float] = trace_form
    algebra_basis: tuple = ()
    moment_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    group_act: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    field_fn: Optional[Callable] = None
    # act(I, v) = identity_weight * v, so scalars act through the group
    identity_weight: Optional[float] = None
    bracket_n: Optional[int] = None
    name: str = ""
    _p_stack: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.dim_v <= 0:
            raise ValueError("dim_v must be positive")
        object.__setattr__(self, "p_basis", tuple(np.asarray(X) for X in self.p_basis))
        object.__setattr__(self, "algebra_basis", tuple(np.asarray(X) for X in self.algebra_basis))
        object.__setattr__(self, "_p_stack", np.stack(self.p_basis))

    @property
    def is_complex(self):
        return self.group_tag is GroupTag.GL_COMPLEX

    @property
    def matrix_size(self):
        return self.p_basis[0].shape[0]

    def norm(self, v):
        return float(np.sqrt(self.inner_v(v, v)))

    def check_vector(self, v):
        v = np.asarray(v, dtype=float)
        if v.shape != (self.dim_v,):
            raise ValueError(f"vector has shape {v.shape}, model expects ({self.dim_v},)")
        return v


def validate_model(model, rng=None, trials=5, tol=1e-12):
    """Numerically check the structural invariants of a model.

    Raises ``AssertionError`` naming the first failed property.
    """
    rng = np.random.default_rng(rng)
    k = len(model.p_basis)
    gram = np.array([[model.inner_g(X, Y) for Y in model.p_basis] for X in model.p_basis])
    err = np.abs(gram - np.eye(k)).max()
    assert err < tol, f"p_basis not orthonormal (error {err:.3g})"
    size = model.matrix_size
    for _ in range(trials):
        X, Y = rng.normal(size=(2, size, size))
        if model.is_complex:
            X = realify(derealify(X))
            Y = realify(derealify(Y))
        u, w = rng.normal(size=(2, model.dim_v))
        a, b = rng.normal(size=2)
        lhs = model.act(a * X + b * Y, u)
        rhs = a * model.act(X, u) + b * model.act(Y, u)
        assert np.allclose(lhs, rhs, atol=1e-10), "act not linear in the matrix"
        lhs = model.act(X, a * u + b * w)
        rhs = a * model.act(X, u) + b * model.act(X, w)
        assert np.allclose(lhs, rhs, atol=1e-10), "act not linear in the vector"
        if model.is_complex:
            J = complex_structure(model.dim_v)
            err = np.abs(J @ model.act(X, u) - model.act(X, J @ u)).max()
            assert err < tol * max(1.0, np.abs(model.act(X, u)).max()), \
                "multiplication by i does not commute with act"


def complex_structure(dim):
    """Matrix of multiplication by i on realified vectors (re, im)."""
    h = dim // 2
    J = np.zeros((dim, dim))
    J[h:, :h] = np.eye(h)
    J[:h, h:] = -np.eye(h)
    return J


# -- moment maps --------------------------------------------------------------

@dataclass(frozen=True)
class MomentValue:
    matrix: np.ndarray
    vector_norm_sq: float
    f_value: Optional[float]  # None at v = 0

    @property
    def projective(self):
        """m[v] = m~(v) / |v|^2."""
        if self.vector_norm_sq == 0.0:
            raise ValueError("m[v] is undefined at v = 0")
        return self.matrix / self.vector_norm_sq


def moment_by_basis(model, v):
    """m~(v) = sum_i <act(X_i, v), v> X_i over the orthonormal p-basis."""
    v = model.check_vector(v)
    coeffs = np.array([model.inner_v(model.act(X, v), v) for X in model.p_basis])
    return np.tensordot(coeffs, model._p_stack, axes=1)


def moment_matrix(model, v):
    if model.moment_fn is not None:
        return model.moment_fn(model.check_vector(v))
    return moment_by_basis(model, v)


def moment(model, v, method="auto"):
    """Moment value of v.  ``method='basis'`` forces the basis summation."""
    v = model.check_vector(v)
    M = moment_by_basis(model, v) if method == "basis" else moment_matrix(model, v)
    nsq = model.inner_v(v, v)
    if nsq == 0.0:
        return MomentValue(np.zeros_like(M), 0.0, None)
    return MomentValue(M, nsq, model.inner_g(M, M) / nsq**2)


def f_value(model, v):
    """F(v) = |m~(v)|^2 / |v|^4, invariant under scaling."""
    value = moment(model, v).f_value
    if value is None:
        raise ValueError("F is undefined at v = 0")
    return value


def moment_spectrum(model, M):
    """Sorted eigenvalues of a moment matrix (complex Hermitian for GL_n(C))."""
    if model.is_complex:
        return np.linalg.eigvalsh(derealify(M))
    return np.linalg.eigvalsh(M)


def _unit_check(model, v, tol=1e-10):
    v = model.check_vector(v)
    r = model.norm(v)
    if abs(r - 1.0) > tol:
        raise ValueError(f"expected a unit vector, |v| = {r!r}")
    return v


def grad_f_sphere(model, v):
    """Gradient of F on the unit sphere at v: 4 (X_m v - |m|^2 v), X_m = act(m~(v), .)."""
    v = _unit_check(model, v)
    M = moment_matrix(model, v)
    w = model.act(M, v)
    return 4.0 * (w - model.inner_v(w, v) * v)


def projective_field(model, v, scale=1.0):
    """``-scale * grad F`` at any nonzero v, with F extended by homogeneity.

    Returns ``(field, F, |grad F|)``.  Tangent to the sphere through v.
    """
    if model.field_fn is not None:
        return model.field_fn(v, scale)
    M = moment_matrix(model, v)
    w = model.act(M, v)
    nsq = model.inner_v(v, v)
    msq = model.inner_g(M, M)
    grad = (4.0 / nsq**2) * (w - (msq / nsq) * v)
    return -scale * grad, msq / nsq**2, model.norm(grad)


@dataclass(frozen=True)
class CriticalCertificate:
    """Evidence that [v] is (or is not) a critical point of |m|^2."""

    residual: float
    eigenvalue: float
    spectrum: tuple
    f_value: float
    bucket: float

    def is_critical(self, tol):
        return self.residual < tol


def critical_residual(model, v, bucket_tol=1e-6):
    """Residual of act(m~(v), v) = lambda v with lambda = |m~(v)|^2 / |v|^2."""
    v = model.check_vector(v)
    nsq = model.inner_v(v, v)
    if nsq == 0.0:
        raise ValueError("critical residual undefined at v = 0")
    M = moment_matrix(model, v)
    msq = model.inner_g(M, M)
    lam = msq / nsq
    if msq == 0.0:
        residual = 0.0
    else:
        r = model.act(M, v) - lam * v
        residual = model.norm(r) / (np.sqrt(msq) * np.sqrt(nsq))
    f = msq / nsq**2
    bucket = round(f / bucket_tol) * bucket_tol
    spectrum = tuple(float(x) for x in moment_spectrum(model, M / nsq))
    return CriticalCertificate(float(residual), float(lam), spectrum, float(f), float(bucket))


def _stabilizer_svd(model, v, basis):
    A = np.column_stack([model.act(X, v) for X in basis])
    _, s, vt = np.linalg.svd(A, full_matrices=True)
    return s, vt


def stabilizer_basis(model, v, basis=None, rtol=RANK_RTOL):
    """Matrices spanning {X in span(basis) : act(X, v) = 0}.

    ``basis`` defaults to the model's Lie algebra basis.
    """
    v = model.check_vector(v)
    basis = list(model.algebra_basis if basis is None else basis)
    if not basis:
        raise ValueError("model carries no Lie algebra basis")
    if not np.any(v):
        return basis
    s, vt = _stabilizer_svd(model, v, basis)
    rank = int(np.sum(s > rtol * s[0])) if s[0] > 0 else 0
    stack = np.stack(basis)
    return [np.tensordot(row, stack, axes=1) for row in vt[rank:]]


def stabilizer_dimension(model, v, rtol=RANK_RTOL):
    """Dimension of {X : act(X, v) = 0} in the full Lie algebra."""
    v = model.check_vector(v)
    basis = model.algebra_basis
    if not basis:
        raise ValueError("model carries no Lie algebra basis")
    if not np.any(v):
        logger.warning("stabilizer of the zero vector is the whole algebra")
        return len(basis)
    s, _ = _stabilizer_svd(model, v, basis)
    rank = int(np.sum(s > rtol * s[0])) if s[0] > 0 else 0
    return len(basis) - rank


def orbit_dimension(model, v):
    return len(model.algebra_basis) - stabilizer_dimension(model, v)
