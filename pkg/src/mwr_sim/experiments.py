"""
Experiment runners: sum-SE sweeps versus the number of users, CDFs over
random user drops, and the oracle validation suite.

Every emitted row carries enough information (experiment, M, K, mode,
method, case, drop, seed, trials) to be recomputed on its own with
:func:`evaluate_point`.
"""

from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .channel import (FadingProfile, InvalidConfig, SystemConfig, db_to_linear, drop_users,
                      estimation_stats)
from .linalg import RngStream
from .oracles import (OracleFailure, OracleResult, lemma1_check, lemma2_check, q_asymptotic_check,
                      variance_terms_check)
from .se import se_closed_form, se_monte_carlo

__all__ = [
    "ExperimentSpec",
    "ResultRow",
    "ConfigError",
    "CSV_COLUMNS",
    "VALIDATE_COLUMNS",
    "FIG2_CASES",
    "load_config",
    "evaluate_point",
    "fig2_profile",
    "run_fig1",
    "run_fig2",
    "run_validate",
    "run_single",
    "write_rows",
    "write_cdf",
    "format_rows",
]

log = logging.getLogger(__name__)

CSV_COLUMNS = ("experiment", "M", "K", "mode", "method", "case", "drop", "sum_se", "se_min",
               "se_max", "ci_halfwidth", "seed", "trials")
VALIDATE_COLUMNS = ("oracle", "kind", "empirical", "analytic", "rel_error", "mc_std_error",
                    "trials", "tolerance", "pass")

# (Pu, Pp, Pr) in watts
FIG2_CASES = {1: (0.2, 0.2, 1.0), 2: (0.1, 0.1, 0.5)}

EXPERIMENTS = ("fig1", "fig2", "validate", "single")
DEFAULT_TRIALS = {"fig1": 1000, "fig2": 200, "validate": 2000, "single": 1000}
METHODS = ("closed_form", "monte_carlo")


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


def _ints(text):
    return tuple(int(v) for v in str(text).replace(",", " ").split())


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


@dataclass
class ExperimentSpec:
    name: str = "fig1"
    seed: int = 1
    trials: int = 1000
    out: str = "-"
    mode: str = "both"
    threads: int = 1
    # fig1
    k_values: tuple = (10, 20, 40, 60, 80, 100, 120, 140, 160, 180)
    ratios: tuple = (5, 10)
    T: int = 200
    pu_db: float = 0.0
    pp_db: float = 0.0
    pr_db: float = 10.0
    # fig2
    M: int = 100
    K: int = 20
    drops: int = 500
    n0_db: float = -120.0
    diameter_m: float = 1000.0
    shadow_std_db: float = 8.0
    pathloss_exp: float = 4.0
    # validate
    lemma_trials: int = 100000
    corrupt_sigma2: bool = False
    # single
    experiment: str = "fig1"
    method: str = "monte_carlo"
    case: int = 1
    drop: int = 0

    _parsers = {
        "k_values": _ints, "ratios": _ints, "corrupt_sigma2": _bool,
    }

    def validate(self):
        """Raise :class:`ConfigError` if the spec cannot be run; return ``self``."""
        if self.name not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.name!r}")
        if self.mode not in ("zf", "mr", "both"):
            raise ConfigError(f"mode must be zf, mr or both, got {self.mode!r}")
        if self.trials < 100:
            raise ConfigError(f"trials must be >= 100, got {self.trials}")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if self.name == "fig1":
            if not self.k_values or not self.ratios:
                raise ConfigError("fig1 needs a nonempty K grid and ratio list")
            for K in self.k_values:
                if K < 2 or K >= self.T:
                    raise ConfigError(f"K={K} needs 2 <= K < T={self.T} with tau = K")
            if any(r <= 1 for r in self.ratios):
                raise ConfigError("M/K ratios must exceed 1")
        if self.name == "fig2" and self.drops < 1:
            raise ConfigError("drops must be >= 1")
        if self.diameter_m < 0 or self.shadow_std_db < 0 or self.pathloss_exp <= 0:
            raise ConfigError("need diameter_m >= 0, shadow_std_db >= 0 and pathloss_exp > 0")
        if self.name == "single":
            if self.experiment not in ("fig1", "fig2"):
                raise ConfigError("single replays fig1 or fig2 rows")
            if self.method not in METHODS:
                raise ConfigError(f"method must be one of {METHODS}")
            if self.mode == "both":
                raise ConfigError("single needs mode zf or mr")
            if self.method == "closed_form" and self.mode != "zf":
                raise ConfigError("closed form exists for ZF only")
            if self.experiment == "fig2" and self.case not in FIG2_CASES:
                raise ConfigError(f"case must be one of {sorted(FIG2_CASES)}")
        return self

    @property
    def modes(self):
        return ("zf", "mr") if self.mode == "both" else (self.mode,)

    @classmethod
    def for_command(cls, name, **overrides) -> "ExperimentSpec":
        """Defaults for experiment ``name`` with string or typed overrides applied."""
        base = cls(name=name, trials=DEFAULT_TRIALS.get(name, 1000),
                   mode="zf" if name == "single" else "both")
        return base.updated(**overrides).validate()

    @classmethod
    def keys(cls):
        return [f.name for f in fields(cls)]

    def updated(self, **overrides) -> "ExperimentSpec":
        """Copy with ``overrides`` applied; string values are parsed."""
        known = {f.name: f for f in fields(self)}
        parsed = {}
        for key, value in overrides.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            if value is None:
                continue
            if isinstance(value, str) and key in self._parsers:
                value = self._parsers[key](value)
            elif isinstance(value, str):
                kind = type(getattr(self, key))
                try:
                    value = kind(value) if kind is not bool else _bool(value)
                except ValueError:
                    raise ConfigError(f"bad value for {key}: {value!r}") from None
            parsed[key] = value
        return replace(self, **parsed)


def load_config(path) -> dict:
    """
    Read a flat ``key = value`` file (UTF-8). Blank lines and lines starting
    with ``#`` are ignored; unknown keys raise :class:`ConfigError`.
    """
    out = {}
    known = set(ExperimentSpec.keys()) - {"name"}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


@dataclass
class ResultRow:
    experiment: str
    M: int
    K: int
    mode: str
    method: str
    case: object
    drop: object
    sum_se: float
    se_min: float
    se_max: float
    ci_halfwidth: float
    seed: int
    trials: int
    per_user: np.ndarray = field(default=None, repr=False, compare=False)

    def as_tuple(self):
        return tuple(getattr(self, c) for c in CSV_COLUMNS)


def fig1_config(spec: ExperimentSpec, M, K) -> SystemConfig:
    return SystemConfig(M=M, K=K, T=spec.T, tau=K, Pu=float(db_to_linear(spec.pu_db)),
                        Pp=float(db_to_linear(spec.pp_db)), Pr=float(db_to_linear(spec.pr_db)))


def fig2_config(spec: ExperimentSpec, case) -> SystemConfig:
    n0 = float(db_to_linear(spec.n0_db))
    pu, pp, pr = FIG2_CASES[case]
    return SystemConfig(M=spec.M, K=spec.K, T=spec.T, tau=spec.K, Pu=pu / n0, Pp=pp / n0, Pr=pr / n0)


def fig2_betas(spec: ExperimentSpec, drop, seed=None):
    rng = RngStream(spec.seed if seed is None else seed, (1, drop))
    return drop_users(spec.K, spec.diameter_m, spec.shadow_std_db, spec.pathloss_exp, rng)


def fig2_profile(spec: ExperimentSpec, case, drop, seed=None) -> FadingProfile:
    cfg = fig2_config(spec, case)
    return estimation_stats(fig2_betas(spec, drop, seed), cfg.tau, cfg.Pp)


def _row(experiment, cfg, mode, method, case, drop, report, seed, trials):
    se = report.per_user_se
    ci = report.sum_ci_halfwidth if method == "monte_carlo" else 0.0
    return ResultRow(experiment, cfg.M, cfg.K, mode, method, case, drop, report.sum_se,
                     float(se.min()), float(se.max()), ci, seed, trials, se)


def evaluate_point(spec: ExperimentSpec, experiment, M, K, mode, method, case="", drop="",
                   seed=None, trials=None) -> ResultRow:
    """Compute one result row from its self-describing parameters."""
    seed = spec.seed if seed is None else seed
    trials = spec.trials if trials is None else trials
    if experiment == "fig1":
        cfg = fig1_config(spec, M, K)
        profile = estimation_stats(np.ones(K), cfg.tau, cfg.Pp)
        trial_rng = RngStream(seed, 0)
    elif experiment == "fig2":
        spec = replace(spec, M=M, K=K)
        cfg = fig2_config(spec, case)
        profile = fig2_profile(spec, case, drop, seed)
        trial_rng = RngStream(seed, (2, drop))
    else:
        raise ConfigError(f"cannot evaluate rows of {experiment!r}")
    if method == "closed_form":
        if mode != "zf":
            raise ConfigError("closed form exists for ZF only")
        return _row(experiment, cfg, mode, method, case, drop, se_closed_form(cfg, profile), seed, 0)
    report = se_monte_carlo(cfg, profile, trials, trial_rng, mode=mode)
    return _row(experiment, cfg, mode, method, case, drop, report, seed, trials)


def _point_methods(spec):
    out = []
    if "zf" in spec.modes:
        out += [("zf", "closed_form"), ("zf", "monte_carlo")]
    if "mr" in spec.modes:
        out.append(("mr", "monte_carlo"))
    return out


def _ordered_map(fn, items, threads):
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


def run_fig1(spec: ExperimentSpec):
    """Sum SE versus ``K`` at fixed ``M/K`` ratios, ``tau = K`` and unit gains."""
    if spec.name != "fig1":
        raise ConfigError("run_fig1 needs a fig1 spec")
    spec.validate()
    jobs = [(ratio * K, K, mode, method)
            for ratio in spec.ratios for K in spec.k_values
            for mode, method in _point_methods(spec)]

    def job(j):
        M, K, mode, method = j
        log.info("fig1 M=%d K=%d %s %s", M, K, mode, method)
        return evaluate_point(spec, "fig1", M, K, mode, method)

    return _ordered_map(job, jobs, spec.threads)


def run_fig2(spec: ExperimentSpec):
    """Sum SE over random user drops for both power cases."""
    if spec.name != "fig2":
        raise ConfigError("run_fig2 needs a fig2 spec")
    spec.validate()
    jobs = [(drop, case, mode, method)
            for drop in range(spec.drops) for case in sorted(FIG2_CASES)
            for mode, method in _point_methods(spec)]

    def job(j):
        drop, case, mode, method = j
        return evaluate_point(spec, "fig2", spec.M, spec.K, mode, method, case, drop)

    return _ordered_map(job, jobs, spec.threads)


def run_single(spec: ExperimentSpec) -> ResultRow:
    spec.validate()
    if spec.experiment == "fig1":
        return evaluate_point(spec, "fig1", spec.M, spec.K, spec.mode, spec.method)
    return evaluate_point(spec, "fig2", spec.M, spec.K, spec.mode, spec.method, spec.case, spec.drop)


def validation_profile(spec):
    cfg = SystemConfig(M=spec.M, K=spec.K, T=spec.T, tau=spec.K, Pu=float(db_to_linear(spec.pu_db)),
                       Pp=float(db_to_linear(spec.pp_db)), Pr=float(db_to_linear(spec.pr_db)))
    return cfg, estimation_stats(np.ones(spec.K), cfg.tau, cfg.Pp)


def run_validate(spec: ExperimentSpec, raise_on_failure=True):
    """
    Run every oracle and return the list of :class:`OracleResult`.

    With ``corrupt_sigma2`` the analytic side uses ``sigma2 = beta``
    (negative control). Raises :class:`OracleFailure` naming the failing
    exact identities if ``raise_on_failure`` is set.
    """
    spec.validate()
    seed, n, nl = spec.seed, spec.trials, spec.lemma_trials
    results = [
        lemma1_check(6, 2, [1.0, 2.0], [2.0, 2.0], nl, RngStream(seed, 10), threads=spec.threads),
        lemma1_check(3, 2, [1.0, 2.0], [2.0, 2.0], nl, RngStream(seed, 11), tolerance=0.10,
                     threads=spec.threads),
        lemma2_check(np.eye(4), nl, RngStream(seed, 12), threads=spec.threads),
        lemma2_check(np.diag([1.0, 2.0]), nl, RngStream(seed, 13), threads=spec.threads),
        lemma2_check(1j * np.eye(3), nl, RngStream(seed, 14), threads=spec.threads),
    ]
    cfg, profile = validation_profile(spec)
    analytic = FadingProfile.perfect(profile.betas) if spec.corrupt_sigma2 else None
    results += q_asymptotic_check(cfg, profile, n, RngStream(seed, 20), analytic_profile=analytic,
                                  threads=spec.threads)
    results += variance_terms_check(cfg, profile, n, RngStream(seed, 21), analytic_profile=analytic,
                                    threads=spec.threads)
    failed = [r.name for r in results if r.kind == "exact" and not r.passed]
    if failed and raise_on_failure:
        raise OracleFailure("exact identities failed: " + ", ".join(failed), results)
    return results


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{v:.9g}"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    return str(v)


def format_rows(rows, columns=CSV_COLUMNS) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) for v in (r.as_tuple() if hasattr(r, "as_tuple") else r)])
    return buf.getvalue()


def oracle_tuple(r: OracleResult):
    return (r.name, r.kind, r.empirical, r.analytic, r.rel_error, r.mc_std_error, r.trials,
            r.tolerance, r.passed)


def write_rows(rows, path, columns=CSV_COLUMNS):
    text = format_rows(rows, columns)
    if str(path) == "-":
        print(text, end="")
    else:
        Path(path).write_text(text, encoding="utf-8")
    return text


def cdf_rows(rows):
    """Empirical CDF rows ``(case, mode, method, rank, sum_se, cdf)`` per group."""
    groups = {}
    for r in rows:
        groups.setdefault((r.case, r.mode, r.method), []).append(r.sum_se)
    out = []
    for (case, mode, method), vals in sorted(groups.items(), key=lambda kv: tuple(map(str, kv[0]))):
        vals = np.sort(vals)
        n = len(vals)
        out += [(case, mode, method, i + 1, float(v), (i + 1) / n) for i, v in enumerate(vals)]
    return out


def write_cdf(rows, path):
    return write_rows(cdf_rows(rows), path, ("case", "mode", "method", "rank", "sum_se", "cdf"))
