"""Command-line front end: reproducible runs described by flat config files.

A run is a plain-text config of ``key = value`` lines (dotted keys, ``#``
comments).  The front end validates the parameter set against the regime
preconditions, acquires interpolation constants (explicit value, per-setting
cache, or fresh estimation), dispatches one of the run modes, and writes
deterministic artifacts under an output directory:

* ``manifest.json`` -- inputs, derived exponents, regime thresholds with a
  doubled-constants sensitivity check, constants provenance, seeds, versions;
* mode artifacts -- ``result.json`` + ``field.bin`` for solves,
  ``sweep.csv``/``sweep.json`` for parameter sweeps, ``constants.json`` for
  estimation runs, ``subadditivity.json`` and ``fiber_report.json`` for the
  report modes.

JSON is UTF-8 with sorted keys; CSV is RFC 4180 (CRLF terminators, 17
significant digits).  Re-running an identical config with the same seed
reproduces every artifact byte for byte.

Exit status: 0 for converged runs, 2 for runs that completed but did not
meet their convergence criteria, 1 for config or validation errors.
"""

from __future__ import annotations

import argparse
import json
import sys
import tempfile
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Callable

import numpy as np
import scipy

from .functionals import (
    dilate_field,
    energy,
    fiber_analyze,
    fiber_d1,
    fiber_value,
    moments,
    multiplier_estimate,
    pohozaev,
)
from .gn_constants import (
    GN_DEFAULT_BUDGET,
    estimate_best_constant,
    weinstein_quotient,
)
from .params import (
    ProblemParams,
    RegimeTag,
    alpha1,
    alpha2,
    cbar,
    classify_regime,
    derived_exponents,
    gamma,
    l2_critical_mass_value,
)
from .solvers import (
    SolveConfig,
    SolveKind,
    SolveResult,
    alpha_sweep,
    default_solve_grid,
    global_minimize,
    local_minimize,
    mountain_pass,
    subadditivity_check,
    write_sweep_csv,
)
from .spectral import (
    Grid,
    fractional_laplacian,
    hs_seminorm_sq,
    inner,
    l2_norm,
    normalize_mass,
    read_field,
    riesz_convolve,
    spectral_multipliers,
    write_field,
)

__all__ = [
    "MODES",
    "FORMATS",
    "ConfigError",
    "RunConfig",
    "parse_config_text",
    "load_config",
    "validate",
    "run",
    "main",
]

MODES = (
    "estimate-constants",
    "fiber-report",
    "solve-local",
    "solve-mp",
    "solve-global",
    "alpha-sweep",
    "subadditivity",
    "selftest",
)

FORMATS = ("csv", "json", "field-bin")

_SWEEP_KINDS = {
    "local": SolveKind.LocalMin,
    "mp": SolveKind.MountainPass,
    "global": SolveKind.GlobalMin,
}

# Default grid for interpolation-constant estimation; coarse but inside the
# plateau where the estimates are grid-stable to a few times 1e-4.
_CONSTANTS_M = 2048
_CONSTANTS_L = 60.0


class ConfigError(ValueError):
    """Raised when a config file cannot be parsed or fails validation."""


def parse_config_text(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines into a flat string dictionary.

    Blank lines and ``#`` comments are ignored.  Keys are dotted paths
    (``params.s``, ``solver.grad_tol``).  Duplicate keys and lines without
    ``=`` are rejected.
    """
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', "
                              f"got {raw.strip()!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


class _Reader:
    """Typed accessors over the raw key-value dict, tracking touched keys."""

    def __init__(self, raw: dict[str, str]) -> None:
        self.raw = raw
        self.seen: set[str] = set()

    def _fetch(self, key: str) -> str | None:
        self.seen.add(key)
        return self.raw.get(key)

    def get_str(self, key: str, default: str | None = None) -> str | None:
        value = self._fetch(key)
        return default if value is None else value

    def get_float(self, key: str, default: float | None = None) -> float | None:
        value = self._fetch(key)
        if value is None:
            return default
        try:
            return float(value)
        except ValueError:
            raise ConfigError(f"{key}: expected a number, got {value!r}")

    def get_int(self, key: str, default: int | None = None) -> int | None:
        value = self._fetch(key)
        if value is None:
            return default
        try:
            return int(value)
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {value!r}")

    def get_float_list(self, key: str) -> tuple[float, ...] | None:
        value = self._fetch(key)
        if value is None:
            return None
        items = [piece.strip() for piece in value.split(",") if piece.strip()]
        if not items:
            raise ConfigError(f"{key}: expected a comma-separated list of "
                              f"numbers, got {value!r}")
        try:
            return tuple(float(piece) for piece in items)
        except ValueError:
            raise ConfigError(f"{key}: expected a comma-separated list of "
                              f"numbers, got {value!r}")

    def unknown_keys(self) -> list[str]:
        return sorted(set(self.raw) - self.seen)


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved run description.

    ``params`` is ``None`` only for the ``selftest`` mode, which needs no
    problem parameters.  ``grid`` defaults to the production solve grid for
    the configured dimension when ``grid.M``/``grid.L`` are not given.
    """

    mode: str
    params: ProblemParams | None
    grid: Grid | None
    solver: SolveConfig
    output_dir: Path
    formats: tuple[str, ...]
    threads: int
    C_q: float | None
    C_p: float | None
    constants_grid: tuple[int, float]
    constants_budget: int
    constants_nstarts: int
    constants_seed: int
    constants_exponents: tuple[float, ...] | None
    sweep_alphas: tuple[float, ...] | None
    sweep_kind: str | None
    subadd_c1: float | None
    subadd_c2: float | None
    field_path: str | None
    raw: dict[str, str]


def load_config(path: str | Path, *, mode: str | None = None,
                out: str | None = None, seed: int | None = None,
                threads: int | None = None) -> RunConfig:
    """Read and resolve a config file, applying command-line overrides."""
    raw = parse_config_text(Path(path).read_text(encoding="utf-8"))
    r = _Reader(raw)

    run_mode = r.get_str("mode")
    if mode is not None:
        run_mode = mode
    if run_mode is None:
        raise ConfigError("mode: required (config key 'mode' or --mode)")
    if run_mode not in MODES:
        raise ConfigError(f"mode: unknown mode {run_mode!r}; expected one of "
                          f"{', '.join(MODES)}")

    out_dir = r.get_str("output_dir")
    if out is not None:
        out_dir = out
    if out_dir is None:
        raise ConfigError("output_dir: required (config key 'output_dir' "
                          "or --out)")

    formats_str = r.get_str("formats", "csv,json")
    formats = tuple(piece.strip() for piece in formats_str.split(",")
                    if piece.strip())
    for fmt in formats:
        if fmt not in FORMATS:
            raise ConfigError(f"formats: unknown format {fmt!r}; expected a "
                              f"subset of {', '.join(FORMATS)}")

    n_threads = r.get_int("threads", 1)
    if threads is not None:
        n_threads = threads
    if n_threads < 1:
        raise ConfigError(f"threads: must be >= 1, got {n_threads}")

    N = r.get_int("params.N", 1)
    s = r.get_float("params.s", 0.45)
    mu = r.get_float("params.mu", 0.5)
    q = r.get_float("params.q")
    p = r.get_float("params.p")
    alpha = r.get_float("params.alpha", 0.0)
    c = r.get_float("params.c", 1.0)

    params: ProblemParams | None = None
    if run_mode != "selftest":
        if q is None or p is None:
            raise ConfigError("params.q, params.p: required for mode "
                              f"{run_mode!r}")
        try:
            params = ProblemParams(N=N, s=s, mu=mu, q=q, p=p,
                                   alpha=alpha, c=c)
        except ValueError as exc:
            raise ConfigError(f"params: {exc}")

    grid: Grid | None = None
    if params is not None:
        M = r.get_int("grid.M")
        L = r.get_float("grid.L")
        if (M is None) != (L is None):
            raise ConfigError("grid.M and grid.L must be given together")
        try:
            grid = (default_solve_grid(params.N) if M is None
                    else Grid(N=params.N, M=M, L=L))
        except ValueError as exc:
            raise ConfigError(f"grid: {exc}")

    solver_seed = r.get_int("solver.seed", 0)
    if seed is not None:
        solver_seed = seed
    base = SolveConfig()
    try:
        solver = SolveConfig(
            max_iter=r.get_int("solver.max_iter", base.max_iter),
            dt=r.get_float("solver.dt", base.dt),
            backtrack=r.get_float("solver.backtrack", base.backtrack),
            grad_tol=r.get_float("solver.grad_tol", base.grad_tol),
            pohozaev_tol=r.get_float("solver.pohozaev_tol",
                                     base.pohozaev_tol),
            t3_tol=r.get_float("solver.t3_tol", base.t3_tol),
            ball_radius=r.get_float("solver.ball_radius"),
            seed=solver_seed,
            init_width=r.get_float("solver.init_width"),
            init_file=r.get_str("solver.init_file"),
        )
    except ValueError as exc:
        raise ConfigError(f"solver: {exc}")

    constants_seed = r.get_int("constants.seed", solver_seed)
    if seed is not None:
        constants_seed = seed
    cfg = RunConfig(
        mode=run_mode,
        params=params,
        grid=grid,
        solver=solver,
        output_dir=Path(out_dir),
        formats=formats,
        threads=n_threads,
        C_q=r.get_float("constants.C_q"),
        C_p=r.get_float("constants.C_p"),
        constants_grid=(r.get_int("constants.M", _CONSTANTS_M),
                        r.get_float("constants.L", _CONSTANTS_L)),
        constants_budget=r.get_int("constants.budget", GN_DEFAULT_BUDGET),
        constants_nstarts=r.get_int("constants.nstarts", 8),
        constants_seed=constants_seed,
        constants_exponents=r.get_float_list("constants.exponents"),
        sweep_alphas=r.get_float_list("sweep.alphas"),
        sweep_kind=r.get_str("sweep.kind"),
        subadd_c1=r.get_float("subadd.c1"),
        subadd_c2=r.get_float("subadd.c2"),
        field_path=r.get_str("field"),
        raw=raw,
    )
    unknown = r.unknown_keys()
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return cfg


# ---------------------------------------------------------------------------
# Validation


def _validate_thresholds(cfg: RunConfig, violations: list[str]) -> None:
    """Regime precondition checks that need interpolation constants.

    Only explicit constants from the config are used here; estimated
    constants are checked again inside the solvers at run time.
    """
    params = cfg.params
    assert params is not None
    regime = classify_regime(params)

    if cfg.mode in ("solve-local", "solve-mp") and regime is RegimeTag.CaseI:
        if params.alpha <= 0 and cfg.mode == "solve-local":
            violations.append(
                "params.alpha: the local branch needs an attractive "
                f"coupling alpha > 0, got {params.alpha}")
        if cfg.C_q is not None and cfg.C_p is not None and params.alpha > 0:
            a1 = alpha1(params, cfg.C_q, cfg.C_p)
            a2 = alpha2(params, cfg.C_q, cfg.C_p)
            bound = min(a1, a2)
            if params.alpha >= bound:
                violations.append(
                    "params.alpha: coupling must lie below the two-branch "
                    f"threshold min(alpha1, alpha2) = min({a1:.6g}, "
                    f"{a2:.6g}) = {bound:.6g}, got {params.alpha:.6g}")

    if cfg.mode == "solve-mp" and regime is RegimeTag.CaseII \
            and cfg.C_q is not None:
        value = l2_critical_mass_value(params, cfg.C_q)
        if value >= 0.5:
            violations.append(
                "mass-critical coercivity condition fails: "
                f"(alpha/2q) C_q c^(2q(1-gamma_q)) = {value:.6g} >= 1/2")

    if cfg.mode in ("solve-global", "subadditivity") \
            and cfg.C_p is not None:
        cb = cbar(params, cfg.C_p)
        masses = [("params.c", params.c)]
        if cfg.mode == "subadditivity":
            masses += [("subadd.c1", cfg.subadd_c1),
                       ("subadd.c2", cfg.subadd_c2)]
        for key, mass in masses:
            if mass is not None and mass >= cb.value:
                violations.append(
                    f"{key}: mass must lie below the coercivity threshold "
                    f"cbar = {cb.value:.6g}, got {mass:.6g}")


def validate(cfg: RunConfig) -> list[str]:
    """Check mode preconditions; return human-readable violations.

    Each message names the offending field, the condition, and the computed
    numbers.  An empty list means the config is runnable.
    """
    violations: list[str] = []
    if cfg.mode == "selftest":
        return violations

    params = cfg.params
    assert params is not None
    regime = classify_regime(params)

    if cfg.mode == "solve-local" and regime is not RegimeTag.CaseI:
        violations.append(
            "params.q, params.p: the local branch exists only in the mixed "
            f"regime (q gamma_q < 1 < p gamma_p); got "
            f"q*gamma_q = {params.q * params.gamma_q:.6g}, "
            f"p*gamma_p = {params.p * params.gamma_p:.6g}")
    if cfg.mode == "solve-mp" and regime is RegimeTag.CaseIV:
        violations.append(
            "params.q, params.p: the mountain-pass branch is undefined "
            "in the subcritical-pair regime (p gamma_p <= 1); got "
            f"p*gamma_p = {params.p * params.gamma_p:.6g}")
    if cfg.mode in ("solve-global", "subadditivity") \
            and regime is not RegimeTag.CaseIV:
        violations.append(
            "params.q, params.p: global minimization needs the "
            "subcritical-pair regime (q gamma_q < 1 and p gamma_p <= 1); "
            f"got q*gamma_q = {params.q * params.gamma_q:.6g}, "
            f"p*gamma_p = {params.p * params.gamma_p:.6g}")

    if cfg.mode == "subadditivity":
        c1, c2 = cfg.subadd_c1, cfg.subadd_c2
        if c1 is None or c2 is None:
            violations.append("subadd.c1, subadd.c2: required for the "
                              "subadditivity mode")
        else:
            if c1 <= 0 or c2 <= 0:
                violations.append(f"subadd.c1, subadd.c2: must be positive, "
                                  f"got {c1:.6g}, {c2:.6g}")
            elif abs(c1 * c1 + c2 * c2 - params.c ** 2) \
                    > 1e-12 * params.c ** 2:
                violations.append(
                    "subadd.c1, subadd.c2: the split must satisfy "
                    f"c1^2 + c2^2 = c^2; got {c1 * c1 + c2 * c2:.17g} "
                    f"!= {params.c ** 2:.17g}")

    if cfg.mode == "alpha-sweep":
        if cfg.sweep_kind is None:
            violations.append("sweep.kind: required for the alpha-sweep "
                              f"mode; one of {', '.join(_SWEEP_KINDS)}")
        elif cfg.sweep_kind not in _SWEEP_KINDS:
            violations.append(f"sweep.kind: unknown kind "
                              f"{cfg.sweep_kind!r}; expected one of "
                              f"{', '.join(_SWEEP_KINDS)}")
        if cfg.sweep_alphas is None:
            violations.append("sweep.alphas: required for the alpha-sweep "
                              "mode (comma-separated, strictly descending)")
        else:
            arr = np.asarray(cfg.sweep_alphas)
            if arr.size < 1 or np.any(arr < 0) \
                    or np.any(np.diff(arr) >= 0):
                violations.append(
                    "sweep.alphas: must be non-negative and strictly "
                    f"descending, got {', '.join(f'{a:g}' for a in arr)}")

    if cfg.mode == "fiber-report":
        if cfg.field_path is None:
            violations.append("field: required for the fiber-report mode "
                              "(path to a binary field file)")
        elif not Path(cfg.field_path).is_file():
            violations.append(f"field: no such file: {cfg.field_path}")

    if cfg.mode == "estimate-constants":
        exponents = cfg.constants_exponents or (params.q, params.p)
        lo = (2 * params.N - params.mu) / params.N
        hi = (2 * params.N - params.mu) / (params.N - 2 * params.s)
        for t in exponents:
            if not lo < t < hi:
                violations.append(
                    "constants.exponents: every exponent must lie in the "
                    f"admissible window ({lo:.6g}, {hi:.6g}), got {t:.6g}")

    if cfg.solver.init_file is not None \
            and not Path(cfg.solver.init_file).is_file():
        violations.append(f"solver.init_file: no such file: "
                          f"{cfg.solver.init_file}")

    _validate_thresholds(cfg, violations)
    return violations


# ---------------------------------------------------------------------------
# Constants acquisition and the manifest


def _cache_key(cfg: RunConfig, t: float) -> str:
    params = cfg.params
    assert params is not None
    M, L = cfg.constants_grid
    return (f"N={params.N},s={params.s!r},mu={params.mu!r},t={t!r},"
            f"M={M},L={L!r},seed={cfg.constants_seed}")


def _acquire_constant(cfg: RunConfig, t: float,
                      log: Callable[[str], None]) -> tuple[float, dict]:
    """Return ``(C_t, provenance)`` for one exponent.

    Priority: explicit config value, then the on-disk cache under the
    output directory, then a fresh estimate (which is written back to the
    cache).
    """
    params = cfg.params
    assert params is not None
    if t == params.q and cfg.C_q is not None:
        return cfg.C_q, {"source": "explicit", "t": t, "value": cfg.C_q}
    if t == params.p and cfg.C_p is not None:
        return cfg.C_p, {"source": "explicit", "t": t, "value": cfg.C_p}

    cache_path = cfg.output_dir / "constants_cache.json"
    cache: dict[str, dict] = {}
    if cache_path.is_file():
        try:
            cache = json.loads(cache_path.read_text(encoding="utf-8"))
        except ValueError:
            log(f"discarding unreadable constants cache: {cache_path}")
            cache = {}
    key = _cache_key(cfg, t)
    if key in cache:
        log(f"constants cache hit: {key}")
        entry = cache[key]
        return entry["C_t"], {"source": "cache", "t": t,
                              "value": entry["C_t"],
                              "residual": entry["residual"]}

    M, L = cfg.constants_grid
    grid = Grid(N=params.N, M=M, L=L)
    log(f"estimating C_t for t={t:g} on M={M}, L={L:g} "
        f"(budget {cfg.constants_budget}, seed {cfg.constants_seed})")
    est = estimate_best_constant(
        grid, t, params.s, params.mu, budget=cfg.constants_budget,
        seed=cfg.constants_seed, nstarts=cfg.constants_nstarts,
        threads=cfg.threads)
    cache[key] = est.to_dict()
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    _write_json(cache_path, cache)
    log(f"estimated C_t(t={t:g}) = {est.C_t:.10g} "
        f"(residual {est.residual:.3g}, {est.iterations} iterations)")
    return est.C_t, {"source": "estimated", "t": t, "value": est.C_t,
                     "residual": est.residual,
                     "iterations": est.iterations,
                     "flags": list(est.flags)}


def _acquire_pair(cfg: RunConfig,
                  log: Callable[[str], None]) -> tuple[float, float, dict]:
    params = cfg.params
    assert params is not None
    C_q, prov_q = _acquire_constant(cfg, params.q, log)
    C_p, prov_p = _acquire_constant(cfg, params.p, log)
    return C_q, C_p, {"C_q": prov_q, "C_p": prov_p}


def _threshold_block(params: ProblemParams, C_q: float | None,
                     C_p: float | None) -> dict:
    """Regime thresholds, plus the same thresholds at doubled constants.

    The doubled-constants entries show how far the admissibility margins
    would move under a factor-two error in the interpolation constants.
    """
    out: dict[str, object] = {"regime": classify_regime(params).value}
    if C_q is None or C_p is None:
        return out
    regime = classify_regime(params)
    if regime is RegimeTag.CaseI:
        out["alpha1"] = alpha1(params, C_q, C_p)
        out["alpha2"] = alpha2(params, C_q, C_p)
        out["alpha1_doubled_constants"] = alpha1(params, 2 * C_q, 2 * C_p)
        out["alpha2_doubled_constants"] = alpha2(params, 2 * C_q, 2 * C_p)
    if regime is RegimeTag.CaseII:
        out["mass_critical_value"] = l2_critical_mass_value(params, C_q)
        out["mass_critical_value_doubled_constants"] = \
            l2_critical_mass_value(params, 2 * C_q)
    if regime is RegimeTag.CaseIV:
        cb = cbar(params, C_p)
        cb2 = cbar(params, 2 * C_p)
        out["cbar"] = cb.value
        out["cbar_overflow"] = cb.overflow
        out["cbar_doubled_constants"] = cb2.value
    return out


def _manifest(cfg: RunConfig, constants: dict | None,
              C_q: float | None, C_p: float | None) -> dict:
    man: dict[str, object] = {
        "mode": cfg.mode,
        "config": dict(sorted(cfg.raw.items())),
        "formats": list(cfg.formats),
        "threads": cfg.threads,
        "seeds": {"solver": cfg.solver.seed,
                  "constants": cfg.constants_seed},
        "versions": {
            "package": _package_version(),
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }
    if cfg.params is not None:
        params = cfg.params
        d = derived_exponents(params)
        man["params"] = {"N": params.N, "s": params.s, "mu": params.mu,
                         "q": params.q, "p": params.p,
                         "alpha": params.alpha, "c": params.c}
        man["derived_exponents"] = asdict(d)
        man["thresholds"] = _threshold_block(params, C_q, C_p)
    if cfg.grid is not None:
        man["grid"] = {"N": cfg.grid.N, "M": cfg.grid.M, "L": cfg.grid.L}
    if constants is not None:
        man["constants"] = constants
    return man


def _package_version() -> str:
    try:
        from importlib.metadata import version
        return version("fracchoq")
    except Exception:
        return "unknown"


def _write_json(path: Path, payload: object) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(payload, indent=2, sort_keys=True,
                      ensure_ascii=False) + "\n"
    path.write_text(text, encoding="utf-8", newline="\n")


def _result_artifacts(cfg: RunConfig, result: SolveResult,
                      log: Callable[[str], None]) -> None:
    if "json" in cfg.formats:
        path = cfg.output_dir / "result.json"
        _write_json(path, result.to_dict())
        log(f"wrote {path}")
    if "field-bin" in cfg.formats:
        assert cfg.grid is not None
        path = cfg.output_dir / "field.bin"
        write_field(path, cfg.grid, result.u)
        log(f"wrote {path}")


# ---------------------------------------------------------------------------
# Mode runners


def _run_estimate_constants(cfg: RunConfig,
                            log: Callable[[str], None]) -> int:
    params = cfg.params
    assert params is not None
    exponents = cfg.constants_exponents or (params.q, params.p)
    estimates: dict[str, dict] = {}
    ok = True
    for t in exponents:
        value, prov = _acquire_constant(cfg, t, log)
        estimates[f"{t:.17g}"] = prov
        if prov.get("flags"):
            ok = False
        log(f"C_t(t={t:g}) = {value:.10g} [{prov['source']}]")
    if "json" in cfg.formats:
        path = cfg.output_dir / "constants.json"
        _write_json(path, estimates)
        log(f"wrote {path}")
    _write_json(cfg.output_dir / "manifest.json",
                _manifest(cfg, estimates, cfg.C_q, cfg.C_p))
    return 0 if ok else 2


def _run_fiber_report(cfg: RunConfig, log: Callable[[str], None]) -> int:
    params = cfg.params
    assert params is not None
    assert cfg.field_path is not None
    field_grid, u = read_field(cfg.field_path)
    if field_grid.N != params.N:
        raise ConfigError(f"field: stored dimension {field_grid.N} does not "
                          f"match params.N = {params.N}")
    mult = spectral_multipliers(field_grid, params.s, params.mu)
    m = moments(field_grid, u, params, mult)
    report = fiber_analyze(m, params)
    payload = {
        "field": {"mass": l2_norm(field_grid, u),
                  "seminorm_sq": hs_seminorm_sq(field_grid, u, params.s,
                                                mult)},
        "moments": {"a": m.a, "b": m.b, "d": m.d},
        "energy": energy(field_grid, u, params, mult),
        "pohozaev": pohozaev(field_grid, u, params, mult),
        "multiplier": multiplier_estimate(field_grid, u, params, mult),
        "report": report.to_dict(),
    }
    if "json" in cfg.formats:
        path = cfg.output_dir / "fiber_report.json"
        _write_json(path, payload)
        log(f"wrote {path}")
    _write_json(cfg.output_dir / "manifest.json",
                _manifest(cfg, None, cfg.C_q, cfg.C_p))
    log(f"fiber critical points: {len(report.roots)} "
        f"({', '.join(report.classes) or 'none'})")
    return 0 if not report.flags else 2


def _run_solve(cfg: RunConfig, log: Callable[[str], None]) -> int:
    params = cfg.params
    assert params is not None and cfg.grid is not None
    C_q, C_p, provenance = _acquire_pair(cfg, log)
    check = validate(replace(cfg, C_q=C_q, C_p=C_p))
    if check:
        for msg in check:
            log(f"config error: {msg}")
        return 1

    log(f"solving on M={cfg.grid.M}, L={cfg.grid.L:g} "
        f"(regime {classify_regime(params).value})")
    if cfg.mode == "solve-local":
        result = local_minimize(cfg.grid, params, cfg.solver,
                                C_q=C_q, C_p=C_p)
    elif cfg.mode == "solve-mp":
        result = mountain_pass(cfg.grid, params, cfg.solver,
                               C_q=C_q, C_p=C_p)
    else:
        result = global_minimize(cfg.grid, params, cfg.solver,
                                 C_q=C_q, C_p=C_p, threads=cfg.threads)
    log(f"level = {result.level:.10g}, lambda = {result.lam:.10g}, "
        f"converged = {result.converged}"
        + (f", flags = {';'.join(result.flags)}" if result.flags else ""))
    _result_artifacts(cfg, result, log)
    _write_json(cfg.output_dir / "manifest.json",
                _manifest(cfg, provenance, C_q, C_p))
    return 0 if result.converged else 2


def _run_alpha_sweep(cfg: RunConfig, log: Callable[[str], None]) -> int:
    params = cfg.params
    assert params is not None and cfg.grid is not None
    assert cfg.sweep_alphas is not None and cfg.sweep_kind is not None
    C_q, C_p, provenance = _acquire_pair(cfg, log)
    kind = _SWEEP_KINDS[cfg.sweep_kind]
    log(f"alpha sweep ({cfg.sweep_kind}) over "
        f"{len(cfg.sweep_alphas)} couplings on M={cfg.grid.M}, "
        f"L={cfg.grid.L:g}")
    rows = alpha_sweep(cfg.grid, params, cfg.sweep_alphas, kind,
                       cfg.solver, C_q=C_q, C_p=C_p)
    for row in rows:
        log(f"  alpha = {row.alpha:.8g}: level = {row.level:.10g}, "
            f"seminorm = {row.seminorm:.6g}"
            + (f", flags = {';'.join(row.flags)}" if row.flags else ""))
    if "csv" in cfg.formats:
        path = cfg.output_dir / "sweep.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            write_sweep_csv(rows, fh)
        log(f"wrote {path}")
    if "json" in cfg.formats:
        payload = {"kind": cfg.sweep_kind,
                   "rows": [{**asdict(row), "flags": list(row.flags)}
                            for row in rows]}
        path = cfg.output_dir / "sweep.json"
        _write_json(path, payload)
        log(f"wrote {path}")
    _write_json(cfg.output_dir / "manifest.json",
                _manifest(cfg, provenance, C_q, C_p))
    converged = all("not-converged" not in row.flags for row in rows)
    return 0 if converged else 2


def _run_subadditivity(cfg: RunConfig, log: Callable[[str], None]) -> int:
    params = cfg.params
    assert params is not None and cfg.grid is not None
    assert cfg.subadd_c1 is not None and cfg.subadd_c2 is not None
    C_q, C_p, provenance = _acquire_pair(cfg, log)
    check = validate(replace(cfg, C_q=C_q, C_p=C_p))
    if check:
        for msg in check:
            log(f"config error: {msg}")
        return 1
    log(f"subadditivity split c = {params.c:g} -> "
        f"({cfg.subadd_c1:g}, {cfg.subadd_c2:g}) on M={cfg.grid.M}, "
        f"L={cfg.grid.L:g}")
    report = subadditivity_check(cfg.grid, params, cfg.subadd_c1,
                                 cfg.subadd_c2, cfg.solver,
                                 C_q=C_q, C_p=C_p, threads=cfg.threads)
    log(f"m(c) = {report.m_c:.10g}, m(c1) + m(c2) = "
        f"{report.m_c1 + report.m_c2:.10g}, gap = {report.gap:.10g}, "
        f"strict = {report.strict}")
    payload = report.to_dict()
    if "json" in cfg.formats:
        path = cfg.output_dir / "subadditivity.json"
        _write_json(path, payload)
        log(f"wrote {path}")
    _write_json(cfg.output_dir / "manifest.json",
                _manifest(cfg, provenance, C_q, C_p))
    return 0 if payload["converged"] else 2


# ---------------------------------------------------------------------------
# Self test


def _selftest_checks() -> list[tuple[str, Callable[[], None]]]:
    """Quick closed-form checks of every module, no estimation involved."""
    baseline = dict(N=1, s=0.45, mu=0.5)
    params = ProblemParams(q=2.0, p=3.0, alpha=0.5, c=1.0, **baseline)
    grid = Grid(N=1, M=256, L=30.0)
    mult = spectral_multipliers(grid, params.s, params.mu)
    rng = np.random.default_rng(7)
    x = grid.axes[0]
    u = normalize_mass(grid, np.exp(-x * x / 4.0) * (1 + 0.1 * np.cos(x)),
                       params.c)

    def check_l2_critical_exponent() -> None:
        qbar = 2 + (2 * params.s - params.mu) / params.N
        assert abs(qbar * gamma(qbar, params) - 1.0) < 1e-14

    def check_regime_classification() -> None:
        cases = {(2.0, 3.0): "CaseI", (2.4, 3.0): "CaseII",
                 (2.6, 3.2): "CaseIII", (1.9, 2.4): "CaseIV"}
        for (q, p), tag in cases.items():
            pp = ProblemParams(q=q, p=p, alpha=1.0, c=1.0, **baseline)
            assert classify_regime(pp).value == tag, (q, p)

    def check_window_rejection() -> None:
        try:
            ProblemParams(q=1.2, p=3.0, alpha=1.0, c=1.0, **baseline)
        except ValueError:
            return
        raise AssertionError("out-of-window exponent was accepted")

    def check_laplacian_annihilates_constants() -> None:
        flat = np.ones(grid.shape)
        out = fractional_laplacian(grid, flat, params.s, mult)
        assert np.max(np.abs(out)) < 1e-12

    def check_seminorm_matches_quadratic_form() -> None:
        lhs = hs_seminorm_sq(grid, u, params.s, mult)
        rhs = inner(grid, u, fractional_laplacian(grid, u, params.s, mult))
        assert abs(lhs - rhs) < 1e-12 * max(1.0, abs(lhs))

    def check_convolution_symmetry() -> None:
        v = rng.standard_normal(grid.shape)
        w = rng.standard_normal(grid.shape)
        lhs = inner(grid, riesz_convolve(grid, v, params.mu, mult), w)
        rhs = inner(grid, v, riesz_convolve(grid, w, params.mu, mult))
        assert abs(lhs - rhs) < 1e-10 * max(1.0, abs(lhs))

    def check_mass_normalization() -> None:
        v = rng.standard_normal(grid.shape)
        w = normalize_mass(grid, v, 0.7)
        assert abs(l2_norm(grid, w) - 0.7) < 1e-12

    def check_field_roundtrip() -> None:
        with tempfile.TemporaryDirectory() as td:
            path = Path(td) / "field.bin"
            write_field(path, grid, u)
            grid2, u2 = read_field(path)
        assert grid2 == grid and np.array_equal(u, u2)

    def check_energy_is_fiber_value_at_zero() -> None:
        m = moments(grid, u, params, mult)
        assert m.a >= 0 and m.b >= 0 and m.d >= 0
        lhs = energy(grid, u, params, mult)
        assert abs(lhs - fiber_value(m, 0.0, params)) \
            < 1e-12 * max(1.0, abs(lhs))
        assert abs(pohozaev(grid, u, params, mult)
                   - fiber_d1(m, 0.0, params)) < 1e-12

    def check_dilation_identity() -> None:
        assert np.allclose(dilate_field(grid, u, 0.0), u, atol=1e-12)

    def check_fiber_structure() -> None:
        m = moments(grid, u, params, mult)
        report = fiber_analyze(m, params)
        assert len(report.roots) == 2 and not report.flags
        assert report.classes == ("Pplus", "Pminus")

    def check_quotient_scale_invariance() -> None:
        lhs = weinstein_quotient(grid, u, 3.0, params.s, params.mu, mult)
        rhs = weinstein_quotient(grid, 2.5 * u, 3.0, params.s, params.mu,
                                 mult)
        assert abs(lhs - rhs) < 1e-10 * max(1.0, abs(lhs))

    def check_solver_config_rejection() -> None:
        try:
            SolveConfig(dt=-1.0)
        except ValueError:
            return
        raise AssertionError("negative step size was accepted")

    return [
        ("l2-critical exponent balances the scaling", check_l2_critical_exponent),
        ("regime classification on four known pairs", check_regime_classification),
        ("out-of-window exponents are rejected", check_window_rejection),
        ("fractional laplacian annihilates constants", check_laplacian_annihilates_constants),
        ("seminorm equals its quadratic form", check_seminorm_matches_quadratic_form),
        ("convolution operator is symmetric", check_convolution_symmetry),
        ("mass normalization hits the target", check_mass_normalization),
        ("field files round-trip bit-exactly", check_field_roundtrip),
        ("energy and its slope match the fiber at t=0", check_energy_is_fiber_value_at_zero),
        ("dilation at t=0 is the identity", check_dilation_identity),
        ("fiber has the two-branch structure", check_fiber_structure),
        ("quotient is invariant under rescaling", check_quotient_scale_invariance),
        ("invalid solver settings are rejected", check_solver_config_rejection),
    ]


def _run_selftest(cfg: RunConfig, log: Callable[[str], None]) -> int:
    checks = _selftest_checks()
    passed = 0
    failures: list[dict] = []
    results = []
    for name, fn in checks:
        try:
            fn()
        except Exception as exc:  # noqa: BLE001 - report, do not crash
            log(f"FAIL {name}: {exc!r}")
            failures.append({"name": name, "error": repr(exc)})
            results.append({"name": name, "ok": False})
        else:
            log(f"ok   {name}")
            passed += 1
            results.append({"name": name, "ok": True})
    log(f"selftest: {passed} passed, {len(failures)} failed")
    if "json" in cfg.formats:
        path = cfg.output_dir / "selftest.json"
        _write_json(path, {"passed": passed, "failed": len(failures),
                           "checks": results, "failures": failures})
        log(f"wrote {path}")
    _write_json(cfg.output_dir / "manifest.json",
                _manifest(cfg, None, None, None))
    return 0 if not failures else 2


_RUNNERS: dict[str, Callable[[RunConfig, Callable[[str], None]], int]] = {
    "estimate-constants": _run_estimate_constants,
    "fiber-report": _run_fiber_report,
    "solve-local": _run_solve,
    "solve-mp": _run_solve,
    "solve-global": _run_solve,
    "alpha-sweep": _run_alpha_sweep,
    "subadditivity": _run_subadditivity,
    "selftest": _run_selftest,
}


def run(cfg: RunConfig, log: Callable[[str], None] = print) -> int:
    """Validate and execute one run; return the process exit status."""
    violations = validate(cfg)
    if violations:
        for msg in violations:
            log(f"config error: {msg}")
        return 1
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    log(f"mode: {cfg.mode}")
    try:
        return _RUNNERS[cfg.mode](cfg, log)
    except (ConfigError, ValueError) as exc:
        log(f"config error: {exc}")
        return 1


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="fracchoq",
        description="Normalized solutions of a fractional Choquard "
                    "equation with mixed nonlinearities: constant "
                    "estimation, fiber reports, constrained solvers, "
                    "coupling sweeps.")
    parser.add_argument("--config", required=True,
                        help="path to a flat key = value config file")
    parser.add_argument("--mode", choices=MODES, default=None,
                        help="override the config's run mode")
    parser.add_argument("--out", default=None,
                        help="override the config's output directory")
    parser.add_argument("--seed", type=int, default=None,
                        help="override solver and estimation seeds")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker threads for multi-start searches")
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, mode=args.mode, out=args.out,
                          seed=args.seed, threads=args.threads)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}")
        return 1
    return run(cfg)


if __name__ == "__main__":
    raise SystemExit(main())
