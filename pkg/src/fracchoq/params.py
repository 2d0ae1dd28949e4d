"""Problem parameters, derived exponents, regime classification, and coupling
thresholds for the mass-constrained fractional Choquard problem.

The energy functional acting on fields ``u`` with prescribed L2 mass ``c`` is

    J(u) = 1/2 ||u||^2 - alpha/(2q) D_q(u) - 1/(2p) D_p(u),

where ``||u||^2`` is the H^s seminorm squared and ``D_t(u)`` is the Choquard
integral of exponent ``t`` built from the Riesz potential ``I_mu``.  Everything
in this module is scalar arithmetic on the exponents: admissibility windows,
the dilation-scaling exponents ``gamma_t``, the L2-critical exponent, the
coupling thresholds ``alpha1``/``alpha2`` controlling the two-branch energy
landscape, the mass-critical coercivity condition, and the coercivity mass
threshold ``cbar``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from scipy.special import gammaln

__all__ = [
    "EXPONENT_EQ_TOL",
    "ProblemParams",
    "DerivedExponents",
    "RegimeTag",
    "CbarResult",
    "gamma",
    "riesz_normalization",
    "derived_exponents",
    "classify_regime",
    "alpha1",
    "alpha2",
    "l2_critical_mass_value",
    "l2_critical_mass_condition",
    "cbar",
]

# Absolute tolerance used when exponents are compared for equality (regime
# boundaries).  User-entered exponents are exact rationals in practice, so a
# tight tolerance only absorbs float round-off from expressions like
# 2 + (2s - mu)/N.
EXPONENT_EQ_TOL = 1e-12


class RegimeTag(Enum):
    """Position of the Choquard exponent pair relative to the L2-critical one.

    With ``qbar = 2 + (2s - mu)/N`` (the exponent whose Choquard term scales
    exactly like the kinetic term under mass-preserving dilation):

    - ``CaseI``:   q < qbar < p   (subcritical q, supercritical p)
    - ``CaseII``:  q = qbar < p   (critical q, supercritical p)
    - ``CaseIII``: qbar < q < p   (both supercritical)
    - ``CaseIV``:  q < p <= qbar  (subcritical q, subcritical or critical p)
    """

    CaseI = "CaseI"
    CaseII = "CaseII"
    CaseIII = "CaseIII"
    CaseIV = "CaseIV"


def _check_params(N: int, s: float, mu: float, q: float, p: float,
                  alpha: float, c: float) -> None:
    if N not in (1, 2, 3):
        raise ValueError(f"N must be 1, 2, or 3 (full tensor grids above "
                         f"N=3 are not desk-scale); got N={N}")
    if not 0.0 < s < 1.0:
        raise ValueError(f"s must satisfy 0 < s < 1; got s={s}")
    if not N > 2 * s:
        raise ValueError(f"the admissible range requires N > 2s; "
                         f"got N={N}, 2s={2 * s}")
    if not 0.0 < mu < N:
        raise ValueError(f"mu must satisfy 0 < mu < N; got mu={mu}, N={N}")
    if alpha < 0.0:
        raise ValueError(f"alpha must satisfy alpha >= 0; got alpha={alpha}")
    if c <= 0.0:
        raise ValueError(f"c must satisfy c > 0; got c={c}")
    lo = (2 * N - mu) / N
    hi = (2 * N - mu) / (N - 2 * s)
    if q <= lo + EXPONENT_EQ_TOL:
        raise ValueError(f"q must satisfy (2N-mu)/N < q strictly; "
                         f"got q={q}, (2N-mu)/N={lo}")
    if p - q <= EXPONENT_EQ_TOL:
        raise ValueError(f"exponents must satisfy q < p strictly; "
                         f"got q={q}, p={p}")
    if p >= hi - EXPONENT_EQ_TOL:
        raise ValueError(f"p must satisfy p < (2N-mu)/(N-2s) strictly; "
                         f"got p={p}, (2N-mu)/(N-2s)={hi}")


@dataclass(frozen=True)
class ProblemParams:
    """Scalar parameters of the problem.

    Parameters
    ----------
    N : int
        Spatial dimension, 1 to 3.
    s : float
        Fractional order of the Laplacian, 0 < s < 1 with N > 2s.
    mu : float
        Riesz-potential exponent, 0 < mu < N.
    q, p : float
        Choquard exponents with (2N-mu)/N < q < p < (2N-mu)/(N-2s),
        all inequalities strict.
    alpha : float
        Coupling of the q-term, alpha >= 0.
    c : float
        Prescribed L2 mass, c > 0.
    """

    N: int
    s: float
    mu: float
    q: float
    p: float
    alpha: float
    c: float

    def __post_init__(self) -> None:
        _check_params(self.N, self.s, self.mu, self.q, self.p,
                      self.alpha, self.c)

    @property
    def gamma_q(self) -> float:
        return gamma(self.q, self)

    @property
    def gamma_p(self) -> float:
        return gamma(self.p, self)


@dataclass(frozen=True)
class DerivedExponents:
    """Exponent bookkeeping derived from a parameter set.

    Attributes
    ----------
    gamma_q, gamma_p : float
        Dilation-scaling exponents of the two Choquard terms.
    two_mu_lower : float
        Lower admissibility bound (2N-mu)/N for Choquard exponents.
    two_mu_upper : float
        Upper admissibility bound (2N-mu)/(N-2s).
    l2_critical : float
        The exponent 2 + (2s-mu)/N at which r*gamma_r = 1.
    A_N_mu : float
        Normalization constant of the Riesz kernel A|x|^(-mu).
    """

    gamma_q: float
    gamma_p: float
    two_mu_lower: float
    two_mu_upper: float
    l2_critical: float
    A_N_mu: float


def gamma(r: float, params: ProblemParams) -> float:
    """Dilation-scaling exponent ``gamma_r = (N(r-2) + mu) / (2 r s)``.

    Under the mass-preserving dilation the Choquard integral of exponent
    ``r`` scales as the ``2 r gamma_r``-th power of the dilation factor of
    the seminorm, so ``r * gamma_r`` below/at/above 1 decides whether the
    term is L2-subcritical/critical/supercritical.

    Parameters
    ----------
    r : float
        Choquard exponent, r > 0.
    params : ProblemParams
        Supplies N, s, mu.
    """
    if r <= 0:
        raise ValueError(f"r must be positive; got r={r}")
    return (params.N * (r - 2) + params.mu) / (2 * r * params.s)


def riesz_normalization(N: int, mu: float) -> float:
    """Normalization constant of the Riesz kernel ``A |x|^(-mu)``.

    Computed as ``Gamma(mu/2) / (2^(N-mu) pi^(N/2) Gamma((N-mu)/2))`` via
    log-Gamma to avoid overflow for large arguments.
    """
    return math.exp(gammaln(mu / 2)
                    - (N - mu) * math.log(2.0)
                    - (N / 2) * math.log(math.pi)
                    - gammaln((N - mu) / 2))


def derived_exponents(params: ProblemParams) -> DerivedExponents:
    """Bundle of derived exponents and the Riesz constant for ``params``."""
    N, s, mu = params.N, params.s, params.mu
    return DerivedExponents(
        gamma_q=gamma(params.q, params),
        gamma_p=gamma(params.p, params),
        two_mu_lower=(2 * N - mu) / N,
        two_mu_upper=(2 * N - mu) / (N - 2 * s),
        l2_critical=2 + (2 * s - mu) / N,
        A_N_mu=riesz_normalization(N, mu),
    )


def classify_regime(params: ProblemParams) -> RegimeTag:
    """Classify the exponent pair against the L2-critical exponent.

    Equality with the critical exponent is decided with absolute tolerance
    ``EXPONENT_EQ_TOL``.  Exponent pairs outside the admissible window are
    rejected at ``ProblemParams`` construction with an error naming the
    violated strict inequality, so every valid parameter set receives
    exactly one tag.
    """
    _check_params(params.N, params.s, params.mu, params.q, params.p,
                  params.alpha, params.c)
    qbar = 2 + (2 * params.s - params.mu) / params.N
    q_crit = abs(params.q - qbar) <= EXPONENT_EQ_TOL
    p_crit = abs(params.p - qbar) <= EXPONENT_EQ_TOL
    if q_crit:
        return RegimeTag.CaseII
    if params.q > qbar:
        return RegimeTag.CaseIII
    # q strictly subcritical from here on
    if p_crit or params.p < qbar:
        return RegimeTag.CaseIV
    return RegimeTag.CaseI


def _check_mixed_regime(params: ProblemParams) -> tuple[float, float]:
    """Return (q*gamma_q, p*gamma_p), requiring q gamma_q < 1 < p gamma_p."""
    qgq = params.q * gamma(params.q, params)
    pgp = params.p * gamma(params.p, params)
    if qgq >= 1.0:
        raise ValueError(f"threshold formula requires q*gamma_q < 1 "
                         f"(L2-subcritical q-term); got q*gamma_q={qgq}")
    if pgp <= 1.0:
        raise ValueError(f"threshold formula requires p*gamma_p > 1 "
                         f"(L2-supercritical p-term); got p*gamma_p={pgp}")
    return qgq, pgp


def alpha1(params: ProblemParams, C_q: float, C_p: float) -> float:
    """First coupling threshold of the mixed (sub/supercritical) regime.

    Below ``min(alpha1, alpha2)`` the constrained energy landscape splits
    into a local-minimum branch and a separate maximum branch; this value
    is the coupling at which degenerate (second-derivative-zero) dilation
    stationary points first become possible.

    Parameters
    ----------
    params : ProblemParams
        Must classify as CaseI.
    C_q, C_p : float
        Interpolation-inequality constants for exponents q and p.
    """
    if C_q <= 0 or C_p <= 0:
        raise ValueError(f"C_q and C_p must be positive; got {C_q}, {C_p}")
    qgq, pgp = _check_mixed_regime(params)
    gq = gamma(params.q, params)
    gp = gamma(params.p, params)
    q, p, c = params.q, params.p, params.c
    base = (1 - qgq) / (gp * (pgp - qgq) * C_p * c ** (2 * p * (1 - gp)))
    return (base ** ((1 - qgq) / (pgp - 1))
            * (pgp - 1) / (gq * (pgp - qgq) * C_q * c ** (2 * q * (1 - gq))))


def alpha2(params: ProblemParams, C_q: float, C_p: float) -> float:
    """Second coupling threshold of the mixed regime.

    Equals the maximum over ``t > 0`` of the auxiliary comparison function
    ``phi(t) = (q/C_q) t^(2(1-q gamma_q))
    - (q C_p c^(2p(1-gamma_p)) / (p C_q)) t^(2 p gamma_p - 2 q gamma_q)``
    divided by ``c^(2q(1-gamma_q))``; below it the comparison parabola-type
    lower bound of the energy retains a window of positivity.
    """
    if C_q <= 0 or C_p <= 0:
        raise ValueError(f"C_q and C_p must be positive; got {C_q}, {C_p}")
    qgq, pgp = _check_mixed_regime(params)
    gq = gamma(params.q, params)
    gp = gamma(params.p, params)
    q, p, c = params.q, params.p, params.c
    base = C_p * c ** (2 * p * (1 - gp)) * (pgp - qgq) / (p * (1 - qgq))
    return ((q / C_q) * (pgp - 1) / (pgp - qgq)
            * base ** ((1 - qgq) / (1 - pgp))
            / c ** (2 * q * (1 - gq)))


def l2_critical_mass_value(params: ProblemParams, C_q: float) -> float:
    """Value ``(alpha/2q) C_q c^(2q(1-gamma_q))`` of the coercivity check.

    In the mass-critical-q regime the kinetic term dominates the q-term
    exactly when this value is below 1/2.
    """
    gq = gamma(params.q, params)
    return (params.alpha / (2 * params.q)) * C_q \
        * params.c ** (2 * params.q * (1 - gq))


def l2_critical_mass_condition(params: ProblemParams, C_q: float) -> bool:
    """True iff ``1/2 > (alpha/2q) C_q c^(2q(1-gamma_q))`` holds strictly.

    This is the mass-critical coercivity condition guaranteeing a single
    maximum-type dilation stationary point when the q-term is L2-critical.
    """
    return 0.5 > l2_critical_mass_value(params, C_q)


@dataclass(frozen=True)
class CbarResult:
    """Coercivity mass threshold with an overflow guard flag."""

    value: float
    overflow: bool


# Cap on log(cbar); exp of anything larger is reported as this guarded value.
_CBAR_LOG_CAP = 300.0


def cbar(params: ProblemParams, C_p: float) -> CbarResult:
    """Coercivity mass threshold ``(p / C_p)^(1 / (2p(1-gamma_p)))``.

    For masses strictly below this value the energy is coercive on the
    mass sphere in the subcritical-pair regime.  Requires ``gamma_p < 1``.
    When ``C_p`` is tiny the power overflows; the result is then capped at
    ``exp(300)`` and flagged.
    """
    if C_p <= 0:
        raise ValueError(f"C_p must be positive; got {C_p}")
    gp = gamma(params.p, params)
    if gp >= 1.0:
        raise ValueError(f"cbar requires gamma_p < 1; got gamma_p={gp}")
    log_cbar = (math.log(params.p) - math.log(C_p)) / (2 * params.p * (1 - gp))
    if log_cbar > _CBAR_LOG_CAP:
        return CbarResult(value=math.exp(_CBAR_LOG_CAP), overflow=True)
    return CbarResult(value=math.exp(log_cbar), overflow=False)
