"""Energy and Pohozaev functionals, constrained gradient, the closed-form
dilation fiber map with its critical-point structure, and the auxiliary
lower-bound function ``g``.

Every dilation question reduces to three scalars: with ``a`` the H^s
seminorm squared, ``b``/``d`` the q-/p-Choquard integrals, the energy of the
mass-preserving dilation ``t * u`` is the explicit exponential sum

    E(t) = (e^(2st)/2) a - (alpha/2q) e^(2 q gamma_q s t) b
           - (1/2p) e^(2 p gamma_p s t) d,

so fiber analysis never rescales fields.  Grid dilation (which does require
interpolation) is provided only as a test utility.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import map_coordinates
from scipy.optimize import brentq

from .params import ProblemParams, RegimeTag, alpha2, classify_regime
from .spectral import (
    Grid,
    SpectralMultipliers,
    choquard_integral,
    fractional_laplacian,
    hs_seminorm_sq,
    l2_norm,
    riesz_convolve,
    signed_power,
)

__all__ = [
    "FIBER_WINDOW_FACTOR",
    "FIBER_ROOT_TOL",
    "FIBER_CLASS_DEADBAND",
    "MomentTriple",
    "FiberReport",
    "GFunctionReport",
    "RadialDiagnostic",
    "moments",
    "energy",
    "pohozaev",
    "gradient",
    "multiplier_estimate",
    "fiber_value",
    "fiber_d1",
    "fiber_d2",
    "fiber_analyze",
    "fiber_max_root",
    "g_analyze",
    "radial_monotonicity_check",
    "dilate_field",
]

# Half-width of the fiber root-search window is this factor divided by s;
# the exponentials decade-separate well before that.
FIBER_WINDOW_FACTOR = 60.0

# Roots of the fiber derivative are polished until |E'(t)| falls below this
# factor times max(a, b, d).
FIBER_ROOT_TOL = 1e-12

# |E''(root)| below this factor times max(a, b, d) is reported as the
# degenerate class "Pzero" rather than silently reclassified.
FIBER_CLASS_DEADBAND = 1e-10

_EXP_CAP = 700.0  # argument cap so exp never overflows to inf


@dataclass(frozen=True)
class MomentTriple:
    """The three scalars that fully determine a fiber map.

    Attributes
    ----------
    a : float
        H^s seminorm squared of the field.
    b : float
        Choquard integral with the smaller exponent q.
    d : float
        Choquard integral with the larger exponent p.
    """

    a: float
    b: float
    d: float

    def __post_init__(self) -> None:
        for name in ("a", "b", "d"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0.0:
                raise ValueError(f"moment {name} must be finite and "
                                 f"nonnegative; got {v}")

    @property
    def scale(self) -> float:
        return max(self.a, self.b, self.d)


@dataclass(frozen=True)
class FiberReport:
    """Critical points and zeros of one fiber map.

    Attributes
    ----------
    roots : tuple of float
        Critical t values of E, sorted ascending.
    classes : tuple of str
        Per-root curvature class: "Pplus" (E'' > 0), "Pminus" (E'' < 0), or
        "Pzero" within the degeneracy dead-band.
    zeros : tuple of float
        t values with E(t) = 0, sorted ascending.
    values : tuple of float
        E at each root.
    flags : tuple of str
        "structure violation" when the root pattern contradicts what the
        regime guarantees; "window exhausted" when a sign change may lie
        beyond the search window.
    """

    roots: tuple[float, ...]
    classes: tuple[str, ...]
    zeros: tuple[float, ...]
    values: tuple[float, ...]
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "roots": list(self.roots),
            "classes": list(self.classes),
            "zeros": list(self.zeros),
            "values": list(self.values),
            "flags": list(self.flags),
        }


@dataclass(frozen=True)
class GFunctionReport:
    """Zeros and extrema of the auxiliary lower-bound function ``g``.

    When unflagged the positive axis splits as 0 < tmin < t0 < tmax < t1
    with g(tmin) < 0 < g(tmax); missing points are NaN and flagged.
    """

    t0: float
    t1: float
    tmax: float
    tmin: float
    gmax: float
    gmin: float
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "t0": self.t0,
            "t1": self.t1,
            "tmax": self.tmax,
            "tmin": self.tmin,
            "gmax": self.gmax,
            "gmin": self.gmin,
            "flags": list(self.flags),
        }


@dataclass(frozen=True)
class RadialDiagnostic:
    """Radial-monotonicity and positivity diagnostic of a field.

    Attributes
    ----------
    max_violation : float
        Largest positive increment between consecutive radius bins of the
        bin-averaged |u| profile (0 for a radially nonincreasing field).
    min_value : float
        Minimum of u itself (negative values flag a sign defect).
    """

    max_violation: float
    min_value: float


def moments(grid: Grid, u: np.ndarray, params: ProblemParams,
            mult: SpectralMultipliers | None = None) -> MomentTriple:
    """Evaluate the moment triple (a, b, d) of a field."""
    a = hs_seminorm_sq(grid, u, params.s, mult)
    b = choquard_integral(grid, u, params.q, params.mu, mult)
    d = choquard_integral(grid, u, params.p, params.mu, mult)
    return MomentTriple(a=a, b=max(b, 0.0), d=max(d, 0.0))


def energy(grid: Grid, u: np.ndarray, params: ProblemParams,
           mult: SpectralMultipliers | None = None) -> float:
    """Constrained energy ``a/2 - (alpha/2q) b - (1/2p) d``."""
    m = moments(grid, u, params, mult)
    return fiber_value(m, 0.0, params)


def pohozaev(grid: Grid, u: np.ndarray, params: ProblemParams,
             mult: SpectralMultipliers | None = None) -> float:
    """Dilation-stationarity (Pohozaev) functional.

    Equals ``s (a - alpha gamma_q b - gamma_p d)``, the derivative of the
    fiber map at t = 0; it vanishes at every constrained critical point.
    """
    m = moments(grid, u, params, mult)
    return fiber_d1(m, 0.0, params)


def gradient(grid: Grid, u: np.ndarray, params: ProblemParams,
             mult: SpectralMultipliers | None = None) -> np.ndarray:
    """Unconstrained L2 gradient of the energy.

    Returns ``(-Lap)^s u - alpha (I * |u|^q) |u|^(q-2) u
    - (I * |u|^p) |u|^(p-2) u`` with the signed-power convention
    ``|u|^(t-2) u = sign(u) |u|^(t-1)`` (value 0 at u = 0), which removes
    NaNs for exponents between 1 and 2.
    """
    out = fractional_laplacian(grid, u, params.s, mult)
    if params.alpha != 0.0:
        wq = np.abs(u) ** params.q
        out = out - params.alpha * riesz_convolve(grid, wq, params.mu, mult) \
            * signed_power(u, params.q - 1)
    wp = np.abs(u) ** params.p
    out = out - riesz_convolve(grid, wp, params.mu, mult) \
        * signed_power(u, params.p - 1)
    return out


def multiplier_estimate(grid: Grid, u: np.ndarray, params: ProblemParams,
                        mult: SpectralMultipliers | None = None) -> float:
    """Lagrange multiplier estimate ``(a - alpha b - d) / ||u||_2^2``.

    Coincides with ``<gradient(u), u> / c^2`` and, at dilation-stationary
    points, with ``(alpha (gamma_q - 1) b + (gamma_p - 1) d) / c^2``.
    """
    n = l2_norm(grid, u)
    if n == 0.0:
        raise ValueError("multiplier estimate undefined for the zero field")
    m = moments(grid, u, params, mult)
    return (m.a - params.alpha * m.b - m.d) / n ** 2


def _exp(x: float) -> float:
    return math.exp(min(x, _EXP_CAP))


def fiber_value(m: MomentTriple, t: float, params: ProblemParams) -> float:
    """Energy of the mass-preserving dilation, evaluated from scalars."""
    s = params.s
    return (0.5 * _exp(2 * s * t) * m.a
            - params.alpha / (2 * params.q)
            * _exp(2 * params.q * params.gamma_q * s * t) * m.b
            - 1.0 / (2 * params.p)
            * _exp(2 * params.p * params.gamma_p * s * t) * m.d)


def fiber_d1(m: MomentTriple, t: float, params: ProblemParams) -> float:
    """First derivative of the fiber map; equals the Pohozaev value at t=0."""
    s = params.s
    return s * (_exp(2 * s * t) * m.a
                - params.alpha * params.gamma_q
                * _exp(2 * params.q * params.gamma_q * s * t) * m.b
                - params.gamma_p
                * _exp(2 * params.p * params.gamma_p * s * t) * m.d)


def fiber_d2(m: MomentTriple, t: float, params: ProblemParams) -> float:
    """Second derivative of the fiber map."""
    s = params.s
    return 2 * s * s * (_exp(2 * s * t) * m.a
                        - params.alpha * params.q * params.gamma_q ** 2
                        * _exp(2 * params.q * params.gamma_q * s * t) * m.b
                        - params.p * params.gamma_p ** 2
                        * _exp(2 * params.p * params.gamma_p * s * t) * m.d)


def _two_exp_roots(a0: float, P: float, b1: float, Q: float, b2: float,
                   T: float) -> tuple[list[float], bool]:
    """All roots of ``f(t) = a0 - P e^(b1 t) - Q e^(b2 t)`` with P, Q >= 0.

    Returns the sorted roots inside [-T, T] and a flag that is True when a
    sign change may exist beyond the window (the search was exhausted
    before bracketing it).
    """
    if P < 0 or Q < 0:
        raise ValueError("exponential coefficients must be nonnegative")
    # Fold vanishing exponents into the constant part.
    if P > 0 and abs(b1) < 1e-14:
        a0, P = a0 - P, 0.0
    if Q > 0 and abs(b2) < 1e-14:
        a0, Q = a0 - Q, 0.0
    if P == 0.0 and Q == 0.0:
        return [], False
    if P == 0.0 or Q == 0.0:
        C, beta = (Q, b2) if P == 0.0 else (P, b1)
        if a0 <= 0.0 or C <= 0.0:
            return [], False
        t = math.log(a0 / C) / beta
        return ([t], False) if abs(t) <= T else ([], True)
    if b1 > b2:
        P, b1, Q, b2 = Q, b2, P, b1

    def f(t: float) -> float:
        return a0 - P * _exp(b1 * t) - Q * _exp(b2 * t)

    if b1 < 0.0 < b2:
        # Interior maximum of f at t_hat; at most two roots, one per side.
        t_hat = math.log((-b1) * P / (b2 * Q)) / (b2 - b1)
        if f(t_hat) <= 0.0:
            return [], False
        roots: list[float] = []
        exhausted = False
        for sgn in (-1.0, 1.0):
            lo, hi = t_hat, t_hat + sgn
            while f(hi) > 0.0 and abs(hi) < T:
                lo, hi = hi, t_hat + (hi - t_hat) * 2.0
            if f(hi) > 0.0:
                exhausted = True
                continue
            lo, hi = (hi, lo) if hi < lo else (lo, hi)
            roots.append(brentq(f, lo, hi, xtol=1e-15, rtol=8.9e-16))
        return sorted(roots), exhausted
    # Exponents of one sign: f is monotone between its limits a0 and -inf,
    # so there is a single root exactly when a0 > 0.
    if a0 <= 0.0:
        return [], False
    v0 = f(0.0)
    if v0 == 0.0:
        return [0.0], False
    increasing = b2 < 0.0
    sgn = 1.0 if (increasing == (v0 < 0.0)) else -1.0
    lo, hi = 0.0, sgn
    while f(hi) * v0 > 0.0 and abs(hi) < T:
        lo, hi = hi, hi * 2.0
    if f(hi) * v0 > 0.0:
        return [], True
    lo, hi = min(lo, hi), max(lo, hi)
    return [brentq(f, lo, hi, xtol=1e-15, rtol=8.9e-16)], False


def _fiber_exponents(params: ProblemParams) -> tuple[float, float]:
    """Reduced exponents of the two nonlinear fiber terms relative to the
    kinetic one."""
    s = params.s
    bq = 2 * (params.q * params.gamma_q - 1.0) * s
    bp = 2 * (params.p * params.gamma_p - 1.0) * s
    return bq, bp


def _d1_roots(m: MomentTriple, params: ProblemParams,
              T: float) -> tuple[list[float], bool]:
    bq, bp = _fiber_exponents(params)
    roots, exhausted = _two_exp_roots(
        m.a, params.alpha * params.gamma_q * m.b, bq,
        params.gamma_p * m.d, bp, T)
    tol = FIBER_ROOT_TOL * max(m.scale, 1e-300)
    polished = []
    for t in roots:
        for _ in range(8):
            v = fiber_d1(m, t, params)
            if abs(v) <= tol:
                break
            dv = fiber_d2(m, t, params)
            if dv == 0.0:
                break
            step = v / dv
            if abs(step) <= 1e-17 * (1.0 + abs(t)):
                break
            t -= step
        polished.append(t)
    return sorted(polished), exhausted


def _value_zeros(m: MomentTriple, params: ProblemParams,
                 T: float) -> tuple[list[float], bool]:
    bq, bp = _fiber_exponents(params)
    return _two_exp_roots(m.a, (params.alpha / params.q) * m.b, bq,
                          (1.0 / params.p) * m.d, bp, T)


_EXPECTED_CLASSES = {
    RegimeTag.CaseI: ("Pplus", "Pminus"),
    RegimeTag.CaseII: ("Pminus",),
    RegimeTag.CaseIII: ("Pminus",),
}


def fiber_analyze(m: MomentTriple, params: ProblemParams,
                  window: float | None = None) -> FiberReport:
    """Locate and classify all critical points and zeros of the fiber map.

    Critical points are bracketed by the sign structure of the reduced
    two-exponential form of E' on ``[-T, T]`` (T defaults to 60/s), refined
    by bisection and Newton polish to ``|E'| <= 1e-12 max(a, b, d)``, and
    classified by the sign of E'' with a dead-band reported as "Pzero".
    When the root pattern contradicts what the regime guarantees (two
    critical points of classes (Pplus, Pminus) in the mixed regime, one
    Pminus otherwise) the report carries a "structure violation" flag but
    is still returned.
    """
    T = window if window is not None else FIBER_WINDOW_FACTOR / params.s
    roots, exh1 = _d1_roots(m, params, T)
    deadband = FIBER_CLASS_DEADBAND * max(m.scale, 1e-300)
    classes = []
    for t in roots:
        d2 = fiber_d2(m, t, params)
        if abs(d2) <= deadband:
            classes.append("Pzero")
        elif d2 > 0.0:
            classes.append("Pplus")
        else:
            classes.append("Pminus")
    values = [fiber_value(m, t, params) for t in roots]
    zeros, exh2 = _value_zeros(m, params, T)
    flags: list[str] = []
    if exh1 or exh2:
        flags.append("window exhausted")
    expected = _EXPECTED_CLASSES.get(classify_regime(params))
    if expected is not None and tuple(classes) != expected:
        flags.append("structure violation")
    return FiberReport(roots=tuple(roots), classes=tuple(classes),
                       zeros=tuple(zeros), values=tuple(values),
                       flags=tuple(flags))


def fiber_max_root(m: MomentTriple, params: ProblemParams,
                   window: float | None = None) -> float | None:
    """Largest critical point of the fiber map with E'' < 0, or None.

    Lean variant of :func:`fiber_analyze` for solver inner loops: no zero
    scan, no report object.
    """
    T = window if window is not None else FIBER_WINDOW_FACTOR / params.s
    roots, _ = _d1_roots(m, params, T)
    maxima = [t for t in roots if fiber_d2(m, t, params) < 0.0]
    return maxima[-1] if maxima else None


def g_analyze(params: ProblemParams, C_q: float, C_p: float) -> GFunctionReport:
    """Zeros and extrema of the auxiliary lower-bound function

    ``g(t) = t^2/2 - (alpha/2q) C_q c^(2q(1-gamma_q)) t^(2 q gamma_q)
    - (1/2p) C_p c^(2p(1-gamma_p)) t^(2 p gamma_p)``

    on ``t > 0``.  The substitution ``t = e^(s tau)`` turns g into the fiber
    map of the synthetic moment triple ``(1, C_q c^..., C_p c^...)``, so the
    same two-exponential root machinery applies; reported points are mapped
    back through ``t = e^(s tau)``.

    Requires the mixed regime with ``alpha > 0``.  When ``alpha`` is at or
    above the second coupling threshold, g has no positivity window; the
    report is flagged "no positive region" (not fatal) with NaN for the
    missing points.
    """
    if classify_regime(params) is not RegimeTag.CaseI:
        raise ValueError("the auxiliary bound function is defined for the "
                         "mixed regime (subcritical q, supercritical p)")
    if params.alpha <= 0.0:
        raise ValueError("alpha must be > 0 for the local branch")
    gq, gp = params.gamma_q, params.gamma_p
    mg = MomentTriple(
        a=1.0,
        b=C_q * params.c ** (2 * params.q * (1 - gq)),
        d=C_p * params.c ** (2 * params.p * (1 - gp)),
    )
    T = 200.0 / params.s
    crit, exh1 = _d1_roots(mg, params, T)
    zeros, exh2 = _value_zeros(mg, params, T)
    flags: list[str] = []
    if exh1 or exh2:
        flags.append("window exhausted")
    if params.alpha >= alpha2(params, C_q, C_p) or len(zeros) < 2 \
            or len(crit) < 2:
        flags.append("no positive region")
    nan = float("nan")
    s = params.s
    tmin = math.exp(s * crit[0]) if len(crit) >= 1 else nan
    tmax = math.exp(s * crit[-1]) if len(crit) >= 2 else nan
    t0 = math.exp(s * zeros[0]) if len(zeros) >= 1 else nan
    t1 = math.exp(s * zeros[-1]) if len(zeros) >= 2 else nan
    gmin = fiber_value(mg, crit[0], params) if len(crit) >= 1 else nan
    gmax = fiber_value(mg, crit[-1], params) if len(crit) >= 2 else nan
    return GFunctionReport(t0=t0, t1=t1, tmax=tmax, tmin=tmin,
                           gmax=gmax, gmin=gmin, flags=tuple(flags))


def radial_monotonicity_check(grid: Grid, u: np.ndarray) -> RadialDiagnostic:
    """Bin-averaged radial profile diagnostic.

    |u| is averaged over radius bins of width h; the diagnostic reports the
    largest positive increment between consecutive nonempty bins (zero for
    a radially nonincreasing field, up to binning noise) together with the
    minimum of u.
    """
    r = np.sqrt(grid.r2).ravel()
    au = np.abs(u).ravel()
    nbins = int(np.ceil(r.max() / grid.h)) + 1
    bins = np.minimum((r / grid.h).astype(int), nbins - 1)
    sums = np.bincount(bins, weights=au, minlength=nbins)
    counts = np.bincount(bins, minlength=nbins)
    profile = sums[counts > 0] / counts[counts > 0]
    diffs = np.diff(profile)
    max_violation = float(max(0.0, diffs.max(initial=0.0)))
    return RadialDiagnostic(max_violation=max_violation,
                            min_value=float(u.min()))


def dilate_field(grid: Grid, u: np.ndarray, t: float) -> np.ndarray:
    """Mass-preserving dilation ``e^(N t / 2) u(e^t x)`` on the grid.

    Test utility only: uses periodic piecewise-cubic interpolation, so it
    carries interpolation error; solvers move along the dilation generator
    instead.  The L2 norm is preserved analytically but only approximately
    on the grid.
    """
    scale = math.exp(t)
    mesh = np.meshgrid(*grid.axes, indexing="ij")
    coords = [np.mod(scale * mx / grid.h, grid.M) for mx in mesh]
    out = map_coordinates(u, coords, order=3, mode="grid-wrap")
    return math.exp(grid.N * t / 2) * out
