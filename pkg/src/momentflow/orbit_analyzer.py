"""Verdicts built on top of the flows.

Distinguished orbits are detected by running the projective flow and
certifying the limit; closed SL orbits by the Kempf-Ness flow.  Orbit
membership of a flow limit is never proved here: matching invariants and
signatures only make the outcome *consistent with* the limit lying in the
starting orbit.
"""
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
import logging
import math
from typing import Optional
import warnings

import numpy as np

from .bracket_rep import (
    Bracket, NotALieAlgebra, bracket_model, complex_moment, derivation_defect,
    group_act, invariants, is_lie, is_nilpotent, model_for,
)
from .flow_engine import FlowConfig, FlowStatus, flow_kempf_ness, flow_projective
from .moment_core import critical_residual, moment_matrix, moment_spectrum

logger = logging.getLogger(__name__)

TYPE_WINDOW = 1e-6
# small denominators only: with q near 1000 almost any real passes a 1e-6 window
MAX_DENOMINATOR = 64


class Verdict(str, Enum):
    DISTINGUISHED = "Distinguished"
    CLOSED = "Closed"
    NULL_CONE_SUSPECTED = "NullConeSuspected"
    NOT_DETERMINED = "NotDetermined"


class InternalCheckFailed(AssertionError):
    """A post-condition that should hold by construction did not."""


class ZeroBracketError(ValueError):
    pass


def _require_nonzero(mu):
    if mu.is_zero():
        raise ZeroBracketError("zero bracket: every orbit question is trivial there")


def _limit_bracket(mu, point):
    return Bracket.from_vector(mu.n, point, complex_=mu.is_complex)


def _safe_invariants(mu):
    try:
        return invariants(mu)
    except NotALieAlgebra:
        return None


# -- distinguished orbits --------------------------------------------------------

@dataclass(frozen=True)
class DistinguishedVerdict:
    verdict: Verdict
    certificate: object
    limit_bracket: Bracket
    # None when Lie semantics were switched off
    invariants_match_start: Optional[bool]
    flow: object = None
    message: str = ""

    @property
    def distinguished(self):
        return self.verdict is Verdict.DISTINGUISHED


def is_distinguished(mu, cfg=FlowConfig(), *, lie=True, group="gl", t_eval=None):
    """Search the projective orbit of ``mu`` for a critical point of F.

    With ``lie=False`` raw skew tensors are accepted and only moment data is
    used.  Complex brackets are handled through the realified GL_n(C) model.
    ``t_eval`` is passed on to the flow for trajectory samples.
    """
    _require_nonzero(mu)
    start_inv = None
    if lie:
        if not is_lie(mu):
            raise NotALieAlgebra("input violates the Jacobi identity; pass lie=False for raw tensors")
        start_inv = invariants(mu)
    model = model_for(mu, group)
    result = flow_projective(model, mu.vector(), cfg, t_eval=t_eval)
    limit = _limit_bracket(mu, result.limit_point)
    cert = result.certificate

    match = None
    message = result.message
    if lie:
        limit_inv = _safe_invariants(limit)
        match = limit_inv is not None and limit_inv.discrete() == start_inv.discrete()
        if not match:
            message = "limit invariants differ from the start: numerical escape from the orbit"
    certified = result.converged and cert.residual < cfg.tol_residual
    if certified and match is not False:
        verdict = Verdict.DISTINGUISHED
    else:
        verdict = Verdict.NOT_DETERMINED
        if not message:
            message = f"flow ended {result.status.value} with residual {cert.residual:.3g}"
    return DistinguishedVerdict(verdict, cert, limit, match, result, message)


# -- nilsolitons --------------------------------------------------------------

@dataclass(frozen=True)
class NilsolitonData:
    soliton_constant: float
    derivation: np.ndarray
    # smallest integer ratio of the sorted eigenvalues, None if not rational
    eigenvalue_type: Optional[tuple]
    spectrum: tuple
    derivation_defect: float

    @property
    def type_string(self):
        if self.eigenvalue_type is None:
            return ":".join(f"{x:.6g}" for x in self.spectrum)
        return ":".join(str(k) for k in self.eigenvalue_type)


def eigenvalue_type(values, window=TYPE_WINDOW):
    """Smallest integer tuple proportional to ``values`` or None.

    Values are scaled by the smallest nonzero magnitude and every ratio must
    lie within ``window`` of a fraction with small denominator.
    """
    values = np.asarray(values, dtype=float)
    nonzero = np.abs(values[np.abs(values) > window * np.abs(values).max(initial=0.0)])
    if nonzero.size == 0:
        return None
    ratios = values / nonzero.min()
    fracs = [Fraction(float(r)).limit_denominator(MAX_DENOMINATOR) for r in ratios]
    if any(abs(float(f) - r) > window for f, r in zip(fracs, ratios)):
        return None
    den = 1
    for f in fracs:
        den = den * f.denominator // math.gcd(den, f.denominator)
    ints = [int(f * den) for f in fracs]
    g = 0
    for k in ints:
        g = math.gcd(g, abs(k))
    return tuple(k // g for k in ints)


def nilsoliton_data(mu_crit, tol_residual=1e-8):
    """Soliton constant and derivation D = m~ + lambda I of a critical bracket."""
    _require_nonzero(mu_crit)
    if mu_crit.is_complex:
        raise ValueError("nilsoliton data is defined for real brackets")
    if not is_nilpotent(mu_crit):
        raise ValueError("bracket is not nilpotent")
    model = bracket_model(mu_crit.n)
    cert = critical_residual(model, mu_crit.vector())
    if cert.residual >= tol_residual:
        raise ValueError(f"bracket is not critical (residual {cert.residual:.3g})")
    M = moment_matrix(model, mu_crit.vector())
    D = M + cert.eigenvalue * np.eye(mu_crit.n)
    D = 0.5 * (D + D.T)
    defect = derivation_defect(D, mu_crit)
    scale = max(1.0, np.linalg.norm(D) * mu_crit.norm())
    if defect >= 1e-8 * scale:
        raise InternalCheckFailed(f"soliton derivation fails the derivation test (defect {defect:.3g})")
    spectrum = tuple(float(x) for x in np.linalg.eigvalsh(D))
    return NilsolitonData(cert.eigenvalue, D, eigenvalue_type(spectrum), spectrum, defect)


# -- K-orbit signatures ---------------------------------------------------------

@dataclass(frozen=True)
class KOrbitSignature:
    spectrum: tuple
    f_value: float
    invariants: object = None


def korbit_signature(v, model):
    """K-invariant data of v: spectrum of m[v], F(v) and algebra invariants."""
    v = model.check_vector(v)
    nsq = model.inner_v(v, v)
    if nsq == 0.0:
        raise ValueError("signature of the zero vector is undefined")
    M = moment_matrix(model, v) / nsq
    spectrum = tuple(float(x) for x in moment_spectrum(model, M))
    inv = None
    if model.bracket_n is not None:
        inv = _safe_invariants(Bracket.from_vector(model.bracket_n, v, complex_=model.is_complex))
    return KOrbitSignature(spectrum, float(model.inner_g(M, M)), inv)


def signatures_equal(a, b, tol=1e-5):
    if len(a.spectrum) != len(b.spectrum):
        return False
    if np.max(np.abs(np.subtract(a.spectrum, b.spectrum))) > tol:
        return False
    if abs(a.f_value - b.f_value) > tol:
        return False
    if (a.invariants is None) != (b.invariants is None):
        return False
    return a.invariants is None or a.invariants.discrete() == b.invariants.discrete()


def random_well_conditioned(n, rng, complex_=False, max_cond=100.0):
    """Entries uniform in [-1, 1] (both parts when complex), resampled until cond < max_cond."""
    while True:
        g = rng.uniform(-1.0, 1.0, (n, n))
        if complex_:
            g = g + 1j * rng.uniform(-1.0, 1.0, (n, n))
        if np.linalg.cond(g) < max_cond:
            return g


# -- real versus complex -------------------------------------------------------

def real_locus_error(mu):
    """max |n(mu) - m~(mu)| for a real bracket viewed inside V^C."""
    if mu.is_complex:
        raise ValueError("expected a real bracket")
    N = complex_moment(Bracket(mu.n, mu.upper.astype(complex)))
    M = moment_matrix(bracket_model(mu.n), mu.vector())
    return float(np.abs(N - M).max())


@dataclass(frozen=True)
class RealComplexReport:
    real: DistinguishedVerdict
    complex_embedded: DistinguishedVerdict
    complex_perturbed: DistinguishedVerdict
    real_locus_error: float
    real_f: float
    # critical value in the mu* convention, 4 F
    mu_star_value: float
    complex_mu_star_value: float

    @property
    def verdicts_agree(self):
        v = self.real.verdict
        return v == self.complex_embedded.verdict == self.complex_perturbed.verdict


def compare_real_complex(mu, cfg=FlowConfig(), rng=None):
    """Run the real flow and two complex flows and compare their verdicts."""
    _require_nonzero(mu)
    if mu.is_complex:
        raise ValueError("compare_real_complex expects a real bracket")
    rng = np.random.default_rng(0) if rng is None else rng
    err = real_locus_error(mu)
    real = is_distinguished(mu, cfg)
    embedded = Bracket(mu.n, mu.upper.astype(complex))
    cplx = is_distinguished(embedded, cfg)
    g = random_well_conditioned(mu.n, rng, complex_=True)
    perturbed = is_distinguished(group_act(g, embedded), cfg)
    return RealComplexReport(
        real=real, complex_embedded=cplx, complex_perturbed=perturbed,
        real_locus_error=err, real_f=real.certificate.f_value,
        mu_star_value=4.0 * real.certificate.f_value,
        complex_mu_star_value=4.0 * perturbed.certificate.f_value,
    )


# -- closed orbits ---------------------------------------------------------------

@dataclass(frozen=True)
class ClosedOrbitVerdict:
    verdict: Verdict
    moment_ratio: float        # |m~_sl(v)| / |v|^2 at the end
    norm_ratio: float          # |v_end| / |v_0|
    limit_bracket: Bracket
    flow: object = None
    message: str = ""

    @property
    def closed(self):
        return self.verdict is Verdict.CLOSED


def is_closed_orbit_sl(mu, cfg=FlowConfig()):
    """Decide closedness of SL_n . mu with the Kempf-Ness flow."""
    _require_nonzero(mu)
    if mu.is_complex:
        raise ValueError("closed-orbit test is implemented for real brackets")
    model = bracket_model(mu.n, "sl")
    result = flow_kempf_ness(model, mu.vector(), cfg)
    if result.status is FlowStatus.CONVERGED:
        verdict = Verdict.CLOSED
    elif result.status is FlowStatus.DIVERGED and result.norm_history[-1] < result.norm_history[0]:
        verdict = Verdict.NULL_CONE_SUSPECTED
    else:
        verdict = Verdict.NOT_DETERMINED
    return ClosedOrbitVerdict(
        verdict=verdict,
        moment_ratio=result.gradnorm_history[-1],
        norm_ratio=result.norm_history[-1] / result.norm_history[0],
        limit_bracket=_limit_bracket(mu, result.limit_point),
        flow=result,
        message=result.message,
    )


# -- real forms --------------------------------------------------------------

@dataclass(frozen=True)
class RealFormsReport:
    mode: str                      # "distinguished" or "closed_sl"
    complex_invariants_match: bool
    first: object
    second: object
    warning: str = ""

    @property
    def verdicts_agree(self):
        return self.first.verdict == self.second.verdict


def compare_real_forms(mu1, mu2, cfg=FlowConfig()):
    """Compare orbit verdicts of two candidate real forms of one complex algebra.

    Agreement of the complexified invariants is only a necessary condition;
    whether the two really are real forms of one algebra is the caller's
    claim.  A mismatch is reported and the comparison still runs.
    """
    for mu in (mu1, mu2):
        _require_nonzero(mu)
        if mu.is_complex:
            raise ValueError("real forms must be real brackets")
        if not is_lie(mu):
            raise NotALieAlgebra("both inputs must be Lie brackets")
    inv1, inv2 = invariants(mu1), invariants(mu2)
    match = mu1.n == mu2.n and inv1.complex_part() == inv2.complex_part()
    note = ""
    if not match:
        note = "complexifications are not isomorphic: not certified real forms"
        warnings.warn(note, RuntimeWarning, stacklevel=2)
    if inv1.nilpotent and inv2.nilpotent:
        mode = "distinguished"
        first, second = is_distinguished(mu1, cfg), is_distinguished(mu2, cfg)
    else:
        mode = "closed_sl"
        first, second = is_closed_orbit_sl(mu1, cfg), is_closed_orbit_sl(mu2, cfg)
    return RealFormsReport(mode, match, first, second, note)
