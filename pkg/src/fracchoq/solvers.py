"""Constrained solvers for the three variational characterizations on the
mass sphere: the local minimizer inside the seminorm ball, the fibered
min-max (mountain pass) solution, and the global minimizer, plus the
alpha-sweep and subadditivity drivers built on them.

All solvers are projected-gradient methods on the mass sphere S_c: each
accepted step renormalizes the mass exactly, the tangential gradient is
``gradient(u) - lambda u`` with ``lambda = <gradient(u), u>/c^2``, steps are
Barzilai-Borwein sized with Armijo backtracking, and descent directions are
preconditioned by ``(shift + (-Lap)^s)^(-1)`` (re-projected tangentially),
which removes the spectral stiffness of the kinetic term without moving the
fixed points.  The mountain-pass solver descends the fiber envelope
``F(u) = max_t E_u(t)``: the maximizing offset t3 is found in closed form
from the moment triple, the envelope gradient is the t3-weighted constrained
gradient, and every accepted iterate is slid back to the t3 = 0 manifold
along the low-pass-filtered dilation generator, so the flow is monotone in F
and cannot leak past the ridge.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable

import numpy as np

from .functionals import (
    MomentTriple,
    fiber_d1,
    fiber_max_root,
    fiber_value,
    g_analyze,
    gradient,
    moments,
)
from .gn_constants import balanced_gaussian_width
from .params import (
    ProblemParams,
    RegimeTag,
    alpha1,
    alpha2,
    cbar,
    classify_regime,
    l2_critical_mass_condition,
    l2_critical_mass_value,
)
from .spectral import (
    Grid,
    SpectralMultipliers,
    box_too_small,
    dilation_generator,
    fractional_laplacian,
    hs_seminorm_sq,
    inner,
    l2_norm,
    normalize_mass,
    read_field,
    riesz_convolve,
    signed_power,
    spectral_multipliers,
)

__all__ = [
    "LOCAL_MAX_RESTARTS",
    "MP_STALL_PATIENCE",
    "SolveKind",
    "SolveConfig",
    "SolveResult",
    "SweepRow",
    "SubadditivityReport",
    "default_solve_grid",
    "local_minimize",
    "mountain_pass",
    "global_minimize",
    "alpha_sweep",
    "subadditivity_check",
    "write_sweep_csv",
]

# The local solver restarts from a smaller initial width this many times
# after leaving the seminorm ball before giving up.
LOCAL_MAX_RESTARTS = 3

# The mountain-pass solver stops once the best residual has not improved by
# at least 1% for this many iterations (the residual then sits at the
# discretization's KKT floor).
MP_STALL_PATIENCE = 60

# Backtracking factor of the mountain-pass composite line search (step ->
# renormalize -> slide); more aggressive than the plain-descent factor
# because each trial is expensive and the slide absorbs small overshoots.
_MP_BACKTRACK = 0.25

_LOCAL_LS_MAX = 60  # Armijo halvings per plain-descent step
_MP_LS_MAX = 30     # Armijo backtracks per composite mountain-pass step


class SolveKind(Enum):
    """Which variational characterization a result realizes."""

    LocalMin = "LocalMin"
    MountainPass = "MountainPass"
    GlobalMin = "GlobalMin"


@dataclass(frozen=True)
class SolveConfig:
    """Solver tuning knobs shared by all three solvers.

    Attributes
    ----------
    max_iter : int
        Iteration budget of one descent run.
    dt : float
        Initial step size; Barzilai-Borwein spacing takes over after the
        first accepted step.
    backtrack : float
        Armijo backtracking factor of the plain-descent line search.
    grad_tol : float
        Relative projected-gradient tolerance: converged when the tangential
        gradient norm is at most ``grad_tol * max(1, |level|)``.
    pohozaev_tol : float
        Relative dilation-stationarity tolerance: ``|P| <= pohozaev_tol * a``
        with ``a`` the seminorm squared.
    t3_tol : float
        Mountain pass only: maximal |t3| accepted at convergence.
    ball_radius : float or None
        Local solver only: seminorm radius t0 of the constraint ball.  When
        None it is computed from g_analyze, which requires the interpolation
        constants.
    seed : int
        Seed for the degenerate-input escape perturbation.
    init_width : float or None
        Gaussian width of the initial field (None picks a solver-specific
        default).
    init_file : str or None
        Path of a stored binary field to start from instead; mutually
        exclusive with init_width.
    """

    max_iter: int = 50000
    dt: float = 0.1
    backtrack: float = 0.5
    grad_tol: float = 1e-8
    pohozaev_tol: float = 1e-7
    t3_tol: float = 1e-6
    ball_radius: float | None = None
    seed: int = 0
    init_width: float | None = None
    init_file: str | None = None

    def __post_init__(self) -> None:
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1; got {self.max_iter}")
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0; got {self.dt}")
        if not 0 < self.backtrack < 1:
            raise ValueError(f"backtrack must be in (0, 1); "
                             f"got {self.backtrack}")
        for name in ("grad_tol", "pohozaev_tol", "t3_tol"):
            v = getattr(self, name)
            if not v > 0:
                raise ValueError(f"{name} must be > 0; got {v}")
        if self.ball_radius is not None and not self.ball_radius > 0:
            raise ValueError(f"ball_radius must be > 0; "
                             f"got {self.ball_radius}")
        if self.init_width is not None and not self.init_width > 0:
            raise ValueError(f"init_width must be > 0; "
                             f"got {self.init_width}")
        if self.init_width is not None and self.init_file is not None:
            raise ValueError("init_width and init_file are mutually "
                             "exclusive")


def _none_if_nonfinite(x: float) -> float | None:
    return x if math.isfinite(x) else None


@dataclass(frozen=True)
class SolveResult:
    """Outcome of one constrained solve.

    Attributes
    ----------
    u : numpy.ndarray
        Final field, mass-normalized to c.
    kind : SolveKind
    regime : RegimeTag
    level : float
        Energy of u (for the mountain pass: the envelope value, which equals
        the energy once t3 = 0).
    lam : float
        Lagrange multiplier estimate (serialized under the key "lambda").
    a : float
        H^s seminorm squared of u.
    t3 : float
        Fiber-maximum offset at exit (mountain pass; NaN otherwise).
    pohozaev_residual : float
        Dilation-stationarity value P(u).
    grad_residual : float
        L2 norm of the tangential gradient at exit.
    iterations : int
    converged : bool
    flags : tuple of str
        Any of: "left the ball", "box-too-small", "not-converged",
        "structure-violation", "no maximum root",
        "coercivity check failed", "stalled".
    history : tuple of float
        Level per iteration (monotone non-increasing for the descent
        methods up to rounding noise).
    """

    u: np.ndarray
    kind: SolveKind
    regime: RegimeTag
    level: float
    lam: float
    a: float
    t3: float
    pohozaev_residual: float
    grad_residual: float
    iterations: int
    converged: bool
    flags: tuple[str, ...] = ()
    history: tuple[float, ...] = ()

    @property
    def seminorm(self) -> float:
        return math.sqrt(self.a)

    def to_dict(self) -> dict:
        """JSON-ready summary (the field itself is not included)."""
        return {
            "kind": self.kind.value,
            "regime": self.regime.name,
            "level": _none_if_nonfinite(self.level),
            "lambda": _none_if_nonfinite(self.lam),
            "a": _none_if_nonfinite(self.a),
            "seminorm": _none_if_nonfinite(self.seminorm),
            "t3": _none_if_nonfinite(self.t3),
            "pohozaev_residual": _none_if_nonfinite(self.pohozaev_residual),
            "grad_residual": _none_if_nonfinite(self.grad_residual),
            "iterations": self.iterations,
            "converged": self.converged,
            "flags": list(self.flags),
        }


@dataclass(frozen=True)
class SweepRow:
    """One row of an alpha-sweep table."""

    alpha: float
    level: float
    seminorm: float
    lam: float
    pohozaev_residual: float
    grad_residual: float
    iterations: int
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class SubadditivityReport:
    """Result of the strict-subadditivity check at a mass split.

    ``c1 <= c2`` canonically (the check is symmetric in the split), ``gap``
    is ``m(c) - m(c1) - m(c2)``, and ``strict`` states whether the gap is
    below minus the combined solver tolerance.
    """

    c: float
    c1: float
    c2: float
    m_c: float
    m_c1: float
    m_c2: float
    gap: float
    combined_tolerance: float
    strict: bool
    results: tuple[SolveResult, SolveResult, SolveResult]

    def to_dict(self) -> dict:
        return {
            "c": self.c,
            "c1": self.c1,
            "c2": self.c2,
            "m_c": self.m_c,
            "m_c1": self.m_c1,
            "m_c2": self.m_c2,
            "gap": self.gap,
            "combined_tolerance": self.combined_tolerance,
            "strict": self.strict,
            "converged": all(r.converged for r in self.results),
        }


def default_solve_grid(N: int) -> Grid:
    """Default grid for solves in dimension N: desk-scale memory while
    still resolving Gaussian-width ground states.

    Boxes this size leave a measurable dilation-stationarity defect in the
    converged field (the algebraic soliton tails are truncated at |x| = L,
    and the defect shrinks like L^-2), so certifying |P| much below
    1e-4 * a requires passing a larger grid explicitly.
    """
    if N == 1:
        return Grid(N=1, M=1024, L=40.0)
    if N == 2:
        return Grid(N=2, M=256, L=20.0)
    return Grid(N=3, M=64, L=12.0)


def _gaussian(grid: Grid, width: float) -> np.ndarray:
    return np.exp(-grid.r2 / (2 * width * width))


def _width_for_seminorm(grid: Grid, params: ProblemParams, target: float,
                        mult: SpectralMultipliers) -> float:
    """Gaussian width whose mass-c normalized profile has seminorm target.

    Uses the exact dilation scaling a(width) = a(1) * width^(-2s) of the
    continuum Gaussian, which is accurate for widths well inside the box.
    """
    u = normalize_mass(grid, _gaussian(grid, 1.0), params.c)
    a1 = hs_seminorm_sq(grid, u, params.s, mult)
    return (a1 / target ** 2) ** (1.0 / (2 * params.s))


def _initial_field(grid: Grid, params: ProblemParams, config: SolveConfig,
                   default_width: float) -> np.ndarray:
    if config.init_file is not None:
        fgrid, u = read_field(config.init_file)
        if fgrid.N != grid.N or fgrid.M != grid.M \
                or not math.isclose(fgrid.L, grid.L, rel_tol=1e-12):
            raise ValueError(
                f"stored field grid (N={fgrid.N}, M={fgrid.M}, L={fgrid.L}) "
                f"does not match the solve grid (N={grid.N}, M={grid.M}, "
                f"L={grid.L})")
        return u
    width = config.init_width if config.init_width is not None \
        else default_width
    return _gaussian(grid, width)


def _project_tangent(grid: Grid, gr: np.ndarray, u: np.ndarray,
                     c: float) -> tuple[np.ndarray, float]:
    lam = inner(grid, gr, u) / c ** 2
    return gr - lam * u, lam


def _precondition(grid: Grid, mult: SpectralMultipliers, v: np.ndarray,
                  shift: float) -> np.ndarray:
    vh = np.fft.rfftn(v, axes=tuple(range(grid.N))) / (shift + mult.lap_s)
    return np.fft.irfftn(vh, s=v.shape, axes=tuple(range(grid.N)))


def _escape_perturbation(grid: Grid, u: np.ndarray, seed: int) -> np.ndarray:
    """Seeded radial bump of relative amplitude 1e-6, used to escape the
    degenerate constant stationary point."""
    rng = np.random.default_rng(seed)
    pert = np.zeros(grid.shape)
    for _ in range(3):
        sig = grid.L / 8 * rng.uniform(0.5, 2.0)
        pert += rng.standard_normal() * np.exp(-grid.r2 / (2 * sig * sig))
    amp = np.max(np.abs(pert))
    return u + 1e-6 * np.max(np.abs(u)) * pert / amp


def _descend(grid: Grid, params: ProblemParams, config: SolveConfig,
             u0: np.ndarray, kind: SolveKind, mult: SpectralMultipliers,
             ball: float | None = None,
             monitor: Callable[[float, MomentTriple], str | None] | None
             = None) -> SolveResult:
    """Preconditioned projected-gradient descent on the mass sphere.

    Shared by the local (with ball check) and global (with coercivity
    monitor) solvers.
    """
    c = params.c
    u = normalize_mass(grid, u0, c)
    m = moments(grid, u, params, mult)
    J = fiber_value(m, 0.0, params)
    dt = config.dt
    uprev = gprev = None
    lam = res = poh = float("nan")
    flags: list[str] = []
    history: list[float] = []
    escaped = False
    converged = False
    it = 0
    for it in range(config.max_iter):
        gr = gradient(grid, u, params, mult)
        gt, lam = _project_tangent(grid, gr, u, c)
        res = l2_norm(grid, gt)
        poh = fiber_d1(m, 0.0, params)
        history.append(J)
        if res <= config.grad_tol * max(1.0, abs(J)):
            if abs(poh) <= config.pohozaev_tol * m.a:
                converged = True
                break
            if res <= 1e-13 * max(1.0, abs(J)):
                # Stationary but not dilation-stationary: the degenerate
                # constant state.  Perturb once, then give up.
                if escaped:
                    flags.append("stalled")
                    break
                u = normalize_mass(
                    grid, _escape_perturbation(grid, u, config.seed), c)
                m = moments(grid, u, params, mult)
                J = fiber_value(m, 0.0, params)
                uprev = gprev = None
                escaped = True
                continue
        shift = max(1.0, -lam) if math.isfinite(lam) else 1.0
        pg = _precondition(grid, mult, gt, shift)
        pgt = pg - (inner(grid, pg, u) / c ** 2) * u
        decr = inner(grid, gt, pgt)
        if decr <= 0.0:
            pgt, decr = gt, res ** 2
        if uprev is not None:
            du = u - uprev
            dg = pgt - gprev
            den = inner(grid, du, dg)
            if den > 0:
                dt = min(max(inner(grid, du, du) / den, 1e-7), 1e3)
            else:
                dt = dt * 1.5
        uprev, gprev = u, pgt
        ok = False
        noise = 1e-15 * (abs(J) + m.a)
        for _ in range(_LOCAL_LS_MAX):
            un = normalize_mass(grid, u - dt * pgt, c)
            mn = moments(grid, un, params, mult)
            Jn = fiber_value(mn, 0.0, params)
            if Jn <= J - 1e-4 * dt * decr + noise:
                u, m, J = un, mn, Jn
                ok = True
                break
            dt *= config.backtrack
        if not ok:
            flags.append("stalled")
            break
        if monitor is not None:
            flag = monitor(J, m)
            if flag is not None and flag not in flags:
                flags.append(flag)
        if ball is not None and math.sqrt(m.a) >= ball:
            flags.append("left the ball")
            break
    if not converged:
        flags.append("not-converged")
    if box_too_small(grid, u, c):
        flags.append("box-too-small")
    return SolveResult(u=u, kind=kind, regime=classify_regime(params),
                       level=J, lam=lam, a=m.a, t3=float("nan"),
                       pohozaev_residual=poh, grad_residual=res,
                       iterations=it + 1, converged=converged,
                       flags=tuple(flags), history=tuple(history))


def _require_below_thresholds(params: ProblemParams, C_q: float,
                              C_p: float) -> None:
    a1 = alpha1(params, C_q, C_p)
    a2 = alpha2(params, C_q, C_p)
    if not params.alpha < min(a1, a2):
        raise ValueError(
            f"alpha={params.alpha} is not below the coupling thresholds "
            f"min(alpha1, alpha2) = min({a1:.6g}, {a2:.6g}) computed from "
            f"the supplied interpolation constants")


def local_minimize(grid: Grid, params: ProblemParams, config: SolveConfig,
                   C_q: float | None = None, C_p: float | None = None,
                   mult: SpectralMultipliers | None = None,
                   u0: np.ndarray | None = None) -> SolveResult:
    """Minimize the energy inside the seminorm ball ``a^(1/2) < t0``.

    Requires the mixed regime with ``0 < alpha``.  The ball radius comes
    from ``config.ball_radius`` or, when both interpolation constants are
    supplied, from the first zero t0 of the auxiliary bound function; when
    constants are supplied the coupling precondition
    ``alpha < min(alpha1, alpha2)`` is enforced.  An iterate reaching the
    ball boundary triggers a restart from a smaller initial width (up to
    three restarts), after which the run is returned flagged "left the
    ball" and "not-converged".
    """
    if classify_regime(params) is not RegimeTag.CaseI:
        raise ValueError("local_minimize requires the mixed regime "
                         "(subcritical q, supercritical p)")
    if params.alpha <= 0:
        raise ValueError("alpha must be > 0 for the local branch")
    have_constants = C_q is not None and C_p is not None
    if have_constants:
        _require_below_thresholds(params, C_q, C_p)
    ball = config.ball_radius
    if ball is None:
        if not have_constants:
            raise ValueError("ball_radius not set and no interpolation "
                             "constants supplied to compute it")
        rep = g_analyze(params, C_q, C_p)
        if not math.isfinite(rep.t0):
            raise ValueError(f"no positivity window at alpha={params.alpha}; "
                             f"flags: {rep.flags}")
        ball = rep.t0
    if mult is None:
        mult = spectral_multipliers(grid, params.s, params.mu)
    frac = 0.8
    trial = u0
    if trial is None and (config.init_file is not None
                          or config.init_width is not None):
        trial = _initial_field(grid, params, config, 1.0)
    restarts = 0
    while True:
        if trial is None:
            width = _width_for_seminorm(grid, params, frac * ball, mult)
            start = _gaussian(grid, width)
        else:
            start = trial
        result = _descend(grid, params, config, start, SolveKind.LocalMin,
                          mult, ball=ball)
        if "left the ball" not in result.flags \
                or restarts >= LOCAL_MAX_RESTARTS:
            return result
        restarts += 1
        frac *= 0.8
        trial = None


# ---------------------------------------------------------------------------
# Mountain pass


def _lowpass(grid: Grid, v: np.ndarray) -> np.ndarray:
    """Zero the top half of the spectrum (|k| > kmax/2) of a field."""
    vh = np.fft.rfftn(v, axes=tuple(range(grid.N)))
    kc2 = (0.5 * math.pi / grid.h) ** 2
    vh[grid.k2 > kc2] = 0.0
    return np.fft.irfftn(vh, s=v.shape, axes=tuple(range(grid.N)))


def _slide(grid: Grid, params: ProblemParams, u: np.ndarray,
           mult: SpectralMultipliers, tclip: float = 0.15,
           itmax: int = 40) -> tuple[np.ndarray, float, MomentTriple]:
    """Move u along the filtered dilation generator until its fiber maximum
    sits at t3 = 0 (grid-exact, no resampling).

    Aborts when the seminorm runs away (fields with a jump feed their own
    spectral derivative noise back through the generator); callers treat
    the returned large |t3| as a failed trial.
    """
    t3 = float("nan")
    m = moments(grid, u, params, mult)
    a_entry = m.a
    for _ in range(itmax):
        root = fiber_max_root(m, params)
        if root is None:
            return u, float("nan"), m
        t3 = root
        if abs(t3) <= 1e-13 or m.a > 100.0 * max(1.0, a_entry):
            return u, t3, m
        tau = max(-tclip, min(tclip, t3))
        u = u + tau * _lowpass(grid, dilation_generator(grid, u))
        u = normalize_mass(grid, u, params.c)
        m = moments(grid, u, params, mult)
    return u, t3, m


def _mp_gaussian_scan(grid: Grid, params: ProblemParams,
                      mult: SpectralMultipliers, sig_lo: float = 0.02,
                      sig_hi: float = 5.0, nsig: int = 48
                      ) -> np.ndarray | None:
    """Gaussian from a width family whose fiber maximum is nearest t3 = 0."""
    best = None
    for sig in np.geomspace(sig_lo, sig_hi, nsig):
        u = normalize_mass(grid, _gaussian(grid, sig), params.c)
        m = moments(grid, u, params, mult)
        t3 = fiber_max_root(m, params)
        if t3 is None or not math.isfinite(t3):
            continue
        if best is None or abs(t3) < abs(best[0]):
            best = (t3, u)
    return None if best is None else best[1]


def _mp_descend(grid: Grid, params: ProblemParams, config: SolveConfig,
                u0: np.ndarray, mult: SpectralMultipliers) -> SolveResult:
    """Envelope descent: minimize F(u) = max_t E_u(t) over the mass sphere."""
    c, s = params.c, params.s
    regime = classify_regime(params)
    u = normalize_mass(grid, u0, c)
    u, t3, m = _slide(grid, params, u, mult)
    if not math.isfinite(t3):
        return SolveResult(u=u, kind=SolveKind.MountainPass, regime=regime,
                           level=float("nan"), lam=float("nan"), a=m.a,
                           t3=t3, pohozaev_residual=fiber_d1(m, 0.0, params),
                           grad_residual=float("inf"), iterations=0,
                           converged=False,
                           flags=("no maximum root", "not-converged"))
    F = fiber_value(m, t3, params)
    dt = config.dt
    uprev = gprev = None
    res, lam = float("inf"), float("nan")
    best = None
    stale = 0
    history: list[float] = []
    it = 0
    for it in range(config.max_iter):
        w1 = math.exp(2 * s * t3)
        wq = math.exp(2 * params.q * params.gamma_q * s * t3)
        wp = math.exp(2 * params.p * params.gamma_p * s * t3)
        Lu = fractional_laplacian(grid, u, s, mult)
        Nq = riesz_convolve(grid, np.abs(u) ** params.q, params.mu, mult) \
            * signed_power(u, params.q - 1)
        Np = riesz_convolve(grid, np.abs(u) ** params.p, params.mu, mult) \
            * signed_power(u, params.p - 1)
        gr = w1 * Lu - params.alpha * wq * Nq - wp * Np
        gt, lam = _project_tangent(grid, gr, u, c)
        res = l2_norm(grid, gt)
        poh = fiber_d1(m, 0.0, params)
        history.append(F)
        if best is None or res < 0.99 * best[0]:
            best = (res, u, m, F, lam, t3)
            stale = 0
        else:
            if res < best[0]:
                best = (res, u, m, F, lam, t3)
            stale += 1
        if res <= config.grad_tol * max(1.0, abs(F)) \
                and abs(t3) <= config.t3_tol \
                and abs(poh) <= config.pohozaev_tol * m.a:
            return SolveResult(u=u, kind=SolveKind.MountainPass,
                               regime=regime, level=F, lam=lam, a=m.a, t3=t3,
                               pohozaev_residual=poh, grad_residual=res,
                               iterations=it + 1, converged=True,
                               history=tuple(history))
        if stale > MP_STALL_PATIENCE:
            break
        pg = _precondition(grid, mult, gt, shift=max(1.0, -lam)
                           if math.isfinite(lam) else 1.0)
        pgt = pg - (inner(grid, pg, u) / c ** 2) * u
        decr = inner(grid, gt, pgt)
        if decr <= 0.0:
            pgt, decr = gt, res ** 2
        if gprev is not None:
            du = u - uprev
            dg = pgt - gprev
            den = inner(grid, du, dg)
            if den > 0:
                dt = min(max(inner(grid, du, du) / den, 1e-8), 1.0)
        accepted = False
        noise = 1e-15 * (abs(F) + m.a)
        dtt = dt
        for _ in range(_MP_LS_MAX):
            un = normalize_mass(grid, u - dtt * pgt, c)
            un, t3n, mn = _slide(grid, params, un, mult)
            if math.isfinite(t3n) and abs(t3n) < 1e-8:
                Fn = fiber_value(mn, t3n, params)
                if Fn <= F - 1e-4 * dtt * decr + noise:
                    uprev, gprev = u, pgt
                    u, m, F, t3 = un, mn, Fn, t3n
                    accepted = True
                    break
            dtt *= _MP_BACKTRACK
        if not accepted:
            break
        dt = dtt
    res, u, m, F, lam, t3 = best
    poh = fiber_d1(m, 0.0, params)
    converged = (res <= config.grad_tol * max(1.0, abs(F))
                 and abs(t3) <= config.t3_tol
                 and abs(poh) <= config.pohozaev_tol * m.a)
    flags = [] if converged else ["not-converged"]
    if box_too_small(grid, u, params.c):
        flags.append("box-too-small")
    return SolveResult(u=u, kind=SolveKind.MountainPass, regime=regime,
                       level=F, lam=lam, a=m.a, t3=t3,
                       pohozaev_residual=poh, grad_residual=res,
                       iterations=it + 1, converged=converged,
                       flags=tuple(flags), history=tuple(history))


def _taper(sub: Grid, u: np.ndarray) -> np.ndarray:
    """Bring a field smoothly to zero at the box boundary (cosine-squared
    ramp over the outer fifth of the half-length per axis).

    Zero-padding a field with a nonzero boundary value creates a jump whose
    spectral derivatives destabilize the dilation generator; tapering costs
    only tail mass and the subsequent descent regrows the proper tail.
    """
    half = sub.L
    out = u
    for i, ax in enumerate(sub.axes):
        r = (np.abs(ax) - 0.78 * half) / (0.20 * half)
        ramp = np.cos(0.5 * math.pi * np.clip(r, 0.0, 1.0)) ** 2
        shape = [1] * sub.N
        shape[i] = ax.size
        out = out * ramp.reshape(shape)
    return out


def _embed(sub: Grid, grid: Grid, u: np.ndarray) -> np.ndarray:
    """Zero-pad a field from a quarter box (same spacing) into the full box
    in real space, keeping the origin-centered arrangement."""
    out = np.zeros(grid.shape)
    idx = []
    for _ in range(grid.N):
        j = np.arange(sub.M)
        idx.append(np.where(j < sub.M // 2, j, j + (grid.M - sub.M)))
    out[np.ix_(*idx)] = u
    return out


def mountain_pass(grid: Grid, params: ProblemParams, config: SolveConfig,
                  C_q: float | None = None, C_p: float | None = None,
                  mult: SpectralMultipliers | None = None,
                  u0: np.ndarray | None = None) -> SolveResult:
    """Fibered min-max solve: minimize ``F(u) = max_t E_u(t)`` over S_c.

    Admissible in the mixed regime below both coupling thresholds, in the
    L2-critical-q regime under the mass-critical coercivity condition, and
    in the doubly supercritical regime (threshold preconditions are
    enforced when the relevant interpolation constants are supplied).  At
    convergence the iterate sits on the dilation-stationarity manifold
    (t3 = 0) and the level is positive.

    Cold starts solve on a quarter box first (same spacing, M/4 points,
    L/4 length) and zero-pad the result into the full box: the small-box
    solution is an excellent warm start and avoids slow transits on large
    production grids.
    """
    regime = classify_regime(params)
    if regime is RegimeTag.CaseIV:
        raise ValueError("mountain_pass is undefined in the subcritical-pair "
                         "regime: the fiber map has no maximum there")
    if regime is RegimeTag.CaseI and params.alpha > 0 \
            and C_q is not None and C_p is not None:
        _require_below_thresholds(params, C_q, C_p)
    if regime is RegimeTag.CaseII and C_q is not None:
        if not l2_critical_mass_condition(params, C_q):
            raise ValueError(
                f"mass-critical coercivity condition fails: "
                f"(alpha/2q) C_q c^(2q(1-gamma_q)) = "
                f"{l2_critical_mass_value(params, C_q):.6g} >= 1/2")
    if mult is None:
        mult = spectral_multipliers(grid, params.s, params.mu)
    if u0 is None and (config.init_file is not None
                       or config.init_width is not None):
        u0 = _initial_field(grid, params, config, 1.0)
    if u0 is None and grid.M % 4 == 0 and grid.M // 4 >= 16:
        # Cold-start ladder: solve on the quarter box, taper, zero-pad.
        sub = Grid(N=grid.N, M=grid.M // 4, L=grid.L / 4)
        submult = spectral_multipliers(sub, params.s, params.mu)
        us = _mp_gaussian_scan(sub, params, submult)
        if us is not None:
            subcfg = replace(config, max_iter=min(3000, config.max_iter))
            subres = _mp_descend(sub, params, subcfg, us, submult)
            cand = normalize_mass(
                grid, _embed(sub, grid, _taper(sub, subres.u)), params.c)
            _, t3e, _ = _slide(grid, params, cand, mult)
            if math.isfinite(t3e) and abs(t3e) <= 1e-6:
                u0 = cand
            # else: fall through to a direct scan on the production grid
    if u0 is None:
        u0 = _mp_gaussian_scan(grid, params, mult)
    if u0 is None:
        return SolveResult(
            u=normalize_mass(grid, _gaussian(grid, 1.0), params.c),
            kind=SolveKind.MountainPass, regime=regime,
            level=float("nan"), lam=float("nan"), a=float("nan"),
            t3=float("nan"), pohozaev_residual=float("nan"),
            grad_residual=float("inf"), iterations=0, converged=False,
            flags=("no maximum root", "not-converged"))
    return _mp_descend(grid, params, config, u0, mult)


# ---------------------------------------------------------------------------
# Global minimization


def _coercivity_monitor(params: ProblemParams, C_q: float,
                        C_p: float) -> Callable[[float, MomentTriple],
                                                str | None]:
    """Lower-bound monitor for the subcritical-pair regime: any accepted
    iterate whose energy falls below the interpolation lower bound signals a
    constant or discretization bug."""
    gq, gp = params.gamma_q, params.gamma_p
    kq = (params.alpha * C_q / (2 * params.q)) \
        * params.c ** (2 * params.q * (1 - gq))
    kp = (C_p / (2 * params.p)) * params.c ** (2 * params.p * (1 - gp))

    def monitor(J: float, m: MomentTriple) -> str | None:
        bound = 0.5 * m.a - kq * m.a ** (params.q * gq) \
            - kp * m.a ** (params.p * gp)
        if J < bound - 1e-9 * max(1.0, m.a, abs(J)):
            return "coercivity check failed"
        return None

    return monitor


def global_minimize(grid: Grid, params: ProblemParams, config: SolveConfig,
                    C_q: float | None = None, C_p: float | None = None,
                    mult: SpectralMultipliers | None = None,
                    u0: np.ndarray | None = None,
                    threads: int = 1) -> SolveResult:
    """Minimize the energy over the whole mass sphere (subcritical pair).

    Runs projected descent from several Gaussian widths around the balanced
    width and returns the best result: lowest level, ties (within 1e-12
    relative) broken by smaller seminorm.  When both interpolation
    constants are supplied, the mass precondition ``c < cbar`` is enforced
    and every accepted iterate is checked against the coercivity lower
    bound.
    """
    if classify_regime(params) is not RegimeTag.CaseIV:
        raise ValueError("global_minimize requires the subcritical-pair "
                         "regime (q < p <= L2-critical exponent)")
    if C_p is not None:
        cb = cbar(params, C_p)
        if not (cb.overflow or params.c < cb.value):
            raise ValueError(f"mass precondition fails: c={params.c} is not "
                             f"below cbar={cb.value:.6g}")
    if mult is None:
        mult = spectral_multipliers(grid, params.s, params.mu)
    monitor = None
    if C_q is not None and C_p is not None:
        monitor = _coercivity_monitor(params, C_q, C_p)
    if u0 is not None or config.init_file is not None \
            or config.init_width is not None:
        start = u0 if u0 is not None \
            else _initial_field(grid, params, config, 1.0)
        result = _descend(grid, params, config, start, SolveKind.GlobalMin,
                          mult, monitor=monitor)
        return result
    sig0 = balanced_gaussian_width(grid, params.s, mult)
    widths = [sig0 * w for w in (0.25, 0.5, 1.0, 2.0, 4.0)]

    def run(width: float) -> SolveResult:
        return _descend(grid, params, config, _gaussian(grid, width),
                        SolveKind.GlobalMin, mult, monitor=monitor)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            outs = list(ex.map(run, widths))
    else:
        outs = [run(w) for w in widths]
    best = outs[0]
    for r in outs[1:]:
        tie = 1e-12 * max(1.0, abs(best.level))
        if r.level < best.level - tie \
                or (abs(r.level - best.level) <= tie and r.a < best.a):
            best = r
    return best


# ---------------------------------------------------------------------------
# Drivers


def alpha_sweep(grid: Grid, params_base: ProblemParams,
                alphas: list[float], kind: SolveKind, config: SolveConfig,
                C_q: float | None = None, C_p: float | None = None,
                mult: SpectralMultipliers | None = None) -> list[SweepRow]:
    """Run the chosen solver along a descending coupling sequence.

    Each solve warm-starts from the previous one: solutions vary
    continuously in the coupling, so the previous field (renormalized) is an
    excellent start.  For the local branch the warm start is only used while
    it stays well inside the current seminorm ball (the ball grows as the
    coupling shrinks); otherwise the chain restarts from a fresh Gaussian
    sized to the ball.  Rows are emitted in input order.
    """
    if len(alphas) < 1:
        raise ValueError("alphas must be non-empty")
    if any(a2 >= a1 for a1, a2 in zip(alphas, alphas[1:])):
        raise ValueError("alphas must be strictly descending")
    if mult is None:
        mult = spectral_multipliers(grid, params_base.s, params_base.mu)
    rows: list[SweepRow] = []
    warm: np.ndarray | None = None
    for al in alphas:
        pr = replace(params_base, alpha=al)
        if kind is SolveKind.LocalMin:
            if C_q is None or C_p is None:
                raise ValueError("the local sweep needs both interpolation "
                                 "constants to size the seminorm balls")
            rep = g_analyze(pr, C_q, C_p)
            if not math.isfinite(rep.t0):
                raise ValueError(f"no positivity window at alpha={al}")
            cfg = replace(config, ball_radius=rep.t0)
            start = None
            if warm is not None and math.sqrt(
                    hs_seminorm_sq(grid, warm, pr.s, mult)) < 0.95 * rep.t0:
                start = warm
            result = local_minimize(grid, pr, cfg, C_q=C_q, C_p=C_p,
                                    mult=mult, u0=start)
            warm = result.u if result.converged else None
        elif kind is SolveKind.MountainPass:
            result = mountain_pass(grid, pr, config, C_q=C_q, C_p=C_p,
                                   mult=mult, u0=warm)
            warm = result.u
        else:
            result = global_minimize(grid, pr, config, C_q=C_q, C_p=C_p,
                                     mult=mult, u0=warm)
            warm = result.u
        rows.append(SweepRow(alpha=al, level=result.level,
                             seminorm=result.seminorm, lam=result.lam,
                             pohozaev_residual=result.pohozaev_residual,
                             grad_residual=result.grad_residual,
                             iterations=result.iterations,
                             flags=result.flags))
    return rows


def write_sweep_csv(rows: list[SweepRow], fh) -> None:
    """Write a sweep table as RFC-4180 CSV (CRLF, 17 significant digits).

    ``fh`` is a text file object opened with ``newline=''``.
    """
    w = csv.writer(fh, lineterminator="\r\n")
    w.writerow(["alpha", "level", "seminorm", "lambda", "pohozaev_residual",
                "grad_residual", "iterations", "flags"])
    for r in rows:
        w.writerow([f"{r.alpha:.17g}", f"{r.level:.17g}",
                    f"{r.seminorm:.17g}", f"{r.lam:.17g}",
                    f"{r.pohozaev_residual:.17g}", f"{r.grad_residual:.17g}",
                    str(r.iterations), ";".join(r.flags)])


def subadditivity_check(grid: Grid, params: ProblemParams, c1: float,
                        c2: float, config: SolveConfig,
                        C_q: float | None = None, C_p: float | None = None,
                        mult: SpectralMultipliers | None = None,
                        threads: int = 1) -> SubadditivityReport:
    """Check strict subadditivity of the global minimum across a mass split.

    Requires the subcritical-pair regime, a genuine split (c1, c2 > 0 with
    c1^2 + c2^2 = c^2) and, when C_p is supplied, all three masses below
    cbar.  Solves the three global problems (equal split masses are solved
    once) and reports the gap ``m(c) - m(c1) - m(c2)`` against the combined
    solver tolerance ``sum grad_tol * max(1, |level|)``.  The report is
    symmetric in (c1, c2): the split is stored in sorted order.
    """
    if classify_regime(params) is not RegimeTag.CaseIV:
        raise ValueError("subadditivity_check requires the subcritical-pair "
                         "regime")
    if not (c1 > 0 and c2 > 0):
        raise ValueError(f"both split masses must be positive; "
                         f"got c1={c1}, c2={c2}")
    c = params.c
    if abs(c1 * c1 + c2 * c2 - c * c) > 1e-12 * c * c:
        raise ValueError(f"split must satisfy c1^2 + c2^2 = c^2; got "
                         f"c1^2 + c2^2 = {c1 * c1 + c2 * c2:.17g} vs "
                         f"c^2 = {c * c:.17g}")
    if C_p is not None:
        cb = cbar(params, C_p)
        if not cb.overflow and not max(c, c1, c2) < cb.value:
            raise ValueError(f"all masses must lie below cbar={cb.value:.6g}")
    if mult is None:
        mult = spectral_multipliers(grid, params.s, params.mu)
    lo, hi = sorted((c1, c2))
    cache: dict[float, SolveResult] = {}

    def solve(mass: float) -> SolveResult:
        if mass not in cache:
            cache[mass] = global_minimize(
                grid, replace(params, c=mass), config, C_q=C_q, C_p=C_p,
                mult=mult, threads=threads)
        return cache[mass]

    r_c = solve(c)
    r_lo = solve(lo)
    r_hi = solve(hi)
    gap = r_c.level - r_lo.level - r_hi.level
    tol = sum(config.grad_tol * max(1.0, abs(r.level))
              for r in (r_c, r_lo, r_hi))
    return SubadditivityReport(c=c, c1=lo, c2=hi, m_c=r_c.level,
                               m_c1=r_lo.level, m_c2=r_hi.level, gap=gap,
                               combined_tolerance=tol,
                               strict=gap < -tol,
                               results=(r_c, r_lo, r_hi))
