"""Named scenarios and the Monte Carlo harness for convergence experiments.

Reproducibility contract: replication ``rep`` of any experiment draws all
of its randomness from ``stream(base_seed, rep)`` in a fixed order
(evaluation sample, then training sample, then parameter draws), so
results are identical for any thread count and any grid of scenario
parameters shares common random numbers across grid points.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .core import (
    DEFAULT_NORM,
    InvalidInputError,
    Norm,
    NumericalError,
    Sample,
    uniform_empirical,
)
from .estimators import Model, Observable, qi_hat
from .knn import neighbor_table
from .ot import exact_wq, knn_transport_cost
from .rng import indexed_map, standard_normal, stream, uniform_open
from .weights import knn_weights, weighted_measure

__all__ = [
    "Scenario",
    "RunRecord",
    "SummaryRow",
    "RateFit",
    "KRule",
    "const_k",
    "power_k",
    "builtin_scenario",
    "scenario_names",
    "fit_loglog",
    "wasserstein_rate_experiment",
    "qi_experiment",
    "atom_consistency_experiment",
    "noisy_rate_experiment",
    "RateExperimentResult",
    "QiExperimentResult",
    "AtomExperimentResult",
    "write_runs_csv",
    "write_summary_csv",
    "write_ratefit_csv",
]


# --- scenarios ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Scenario:
    """Fully specified experiment: distributions, model, observable, truths.

    ``psi``, ``qi`` and ``vartheta`` are the analytic regression function,
    quantity of interest and conditional observation variance when known
    (None otherwise); ``log_density_xp`` is the log density of the
    training distribution, used by the constants calculators.
    """

    name: str
    d: int
    e: int
    params: dict
    x_sampler: Callable[[np.random.Generator, int], np.ndarray]
    xp_sampler: Callable[[np.random.Generator, int], np.ndarray]
    model: Model
    phi: Observable
    psi: Optional[Callable[[np.ndarray], np.ndarray]]
    qi: Optional[float]
    vartheta: Optional[Callable[[np.ndarray], np.ndarray]]
    log_density_xp: Optional[Callable[[np.ndarray], np.ndarray]]

    def with_params(self, **overrides) -> "Scenario":
        merged = dict(self.params)
        merged.update(overrides)
        return builtin_scenario(self.name, merged)


def _sine_surface(x: np.ndarray) -> np.ndarray:
    return np.sin(2.0 * math.pi * x[:, 0]) * np.sin(2.0 * math.pi * x[:, 1])


def _gaussian_2d_sampler(mu: float, sigma: float, s_corr: float):
    # Cholesky factor of sigma^2 [[1, s], [s, 1]].
    root = math.sqrt(1.0 - s_corr * s_corr)

    def sampler(gen: np.random.Generator, size: int) -> np.ndarray:
        z = standard_normal(gen, (size, 2))
        x1 = mu + sigma * z[:, 0]
        x2 = mu + sigma * (s_corr * z[:, 0] + root * z[:, 1])
        return np.column_stack([x1, x2])

    return sampler


def _gaussian_2d_log_density(mu: float, sigma: float, s_corr: float):
    det = sigma**4 * (1.0 - s_corr * s_corr)
    lognorm = -math.log(2.0 * math.pi) - 0.5 * math.log(det)

    def log_density(x: np.ndarray) -> np.ndarray:
        a = x[:, 0] - mu
        b = x[:, 1] - mu
        quad = (a * a - 2.0 * s_corr * a * b + b * b) / (
            sigma * sigma * (1.0 - s_corr * s_corr)
        )
        return lognorm - 0.5 * quad

    return log_density


def _uniform_theta(gen: np.random.Generator, size: int) -> np.ndarray:
    return 2.0 * uniform_open(gen, size) - 1.0


def _zero_theta(gen: np.random.Generator, size: int) -> np.ndarray:
    return np.zeros(size)


def _identity_phi() -> Observable:
    return Observable(fn=lambda y: y[:, 0], sup_bound=None)


def _sine_model(noiseless: bool) -> Model:
    if noiseless:
        return Model(fn=lambda x, theta: _sine_surface(x), theta_sampler=_zero_theta)
    return Model(
        fn=lambda x, theta: _sine_surface(x) * (1.0 + theta),
        theta_sampler=_uniform_theta,
    )


def _check_gauss_params(p: dict) -> None:
    if not (p["sigma"] > 0.0):
        raise InvalidInputError("sigma must be positive")
    if not (-1.0 < p["s_corr"] < 1.0):
        raise InvalidInputError("s_corr must lie in (-1, 1)")


def _build_diag_uniform_gauss(p: dict) -> Scenario:
    _check_gauss_params(p)
    mu, sigma, s = float(p["mu"]), float(p["sigma"]), float(p["s_corr"])
    noiseless = bool(p["noiseless"])

    def x_sampler(gen, size):
        u = uniform_open(gen, size)
        return np.column_stack([u, u])

    theta_var = 0.0 if noiseless else 1.0 / 3.0
    return Scenario(
        name="diag_uniform_gauss",
        d=2,
        e=1,
        params=p,
        x_sampler=x_sampler,
        xp_sampler=_gaussian_2d_sampler(mu, sigma, s),
        model=_sine_model(noiseless),
        phi=Observable(fn=lambda y: y[:, 0], sup_bound=1.0 if noiseless else 2.0),
        psi=_sine_surface,
        qi=0.5,
        vartheta=lambda x: _sine_surface(x) ** 2 * theta_var,
        log_density_xp=_gaussian_2d_log_density(mu, sigma, s),
    )


def _build_atom_demo(p: dict) -> Scenario:
    _check_gauss_params(p)
    x0 = np.asarray(p["x0"], dtype=np.float64).reshape(2)
    mu, sigma, s = float(p["mu"]), float(p["sigma"]), float(p["s_corr"])
    noiseless = bool(p["noiseless"])

    def x_sampler(gen, size):
        return np.tile(x0, (size, 1))

    theta_var = 0.0 if noiseless else 1.0 / 3.0
    qi = float(_sine_surface(x0.reshape(1, 2))[0])
    return Scenario(
        name="atom_demo",
        d=2,
        e=1,
        params=p,
        x_sampler=x_sampler,
        xp_sampler=_gaussian_2d_sampler(mu, sigma, s),
        model=_sine_model(noiseless),
        phi=Observable(fn=lambda y: y[:, 0], sup_bound=1.0 if noiseless else 2.0),
        psi=_sine_surface,
        qi=qi,
        vartheta=lambda x: _sine_surface(x) ** 2 * theta_var,
        log_density_xp=_gaussian_2d_log_density(mu, sigma, s),
    )


def _build_identity_1d_uniform(p: dict) -> Scenario:
    def unit_sampler(gen, size):
        return uniform_open(gen, size).reshape(-1, 1)

    def log_density(x):
        inside = np.all((x >= 0.0) & (x <= 1.0), axis=1)
        return np.where(inside, 0.0, -np.inf)

    return Scenario(
        name="identity_1d_uniform",
        d=1,
        e=1,
        params=p,
        x_sampler=unit_sampler,
        xp_sampler=unit_sampler,
        model=Model(fn=lambda x, theta: x[:, 0], theta_sampler=_zero_theta),
        phi=Observable(fn=lambda y: y[:, 0], sup_bound=1.0),
        psi=lambda x: x[:, 0],
        qi=0.5,
        vartheta=lambda x: np.zeros(x.shape[0]),
        log_density_xp=log_density,
    )


def _build_gauss_gauss(p: dict) -> Scenario:
    d = int(p["d"])
    sigma = float(p["sigma"])
    sigma_prime = float(p["sigma_prime"])
    if d < 1 or sigma <= 0.0 or sigma_prime <= 0.0:
        raise InvalidInputError("gauss_gauss needs d >= 1 and positive scales")

    def x_sampler(gen, size):
        return sigma * standard_normal(gen, (size, d))

    def xp_sampler(gen, size):
        return sigma_prime * standard_normal(gen, (size, d))

    lognorm = -0.5 * d * math.log(2.0 * math.pi * sigma_prime**2)

    def log_density(x):
        return lognorm - 0.5 * (x * x).sum(axis=1) / sigma_prime**2

    return Scenario(
        name="gauss_gauss",
        d=d,
        e=1,
        params=p,
        x_sampler=x_sampler,
        xp_sampler=xp_sampler,
        model=Model(fn=lambda x, theta: x[:, 0], theta_sampler=_zero_theta),
        phi=Observable(fn=lambda y: y[:, 0], sup_bound=None),
        psi=lambda x: x[:, 0],
        qi=0.0,
        vartheta=lambda x: np.zeros(x.shape[0]),
        log_density_xp=log_density,
    )


_BUILDERS: dict[str, tuple[Callable[[dict], Scenario], dict]] = {
    "diag_uniform_gauss": (
        _build_diag_uniform_gauss,
        {"mu": 0.5, "sigma": 0.3, "s_corr": 0.0, "noiseless": False},
    ),
    "atom_demo": (
        _build_atom_demo,
        # The sine surface vanishes at (0.5, 0.5); the atom sits at the
        # surface maximum (0.25, 0.25) so its noise variance is 1/3 > 0.
        {"x0": (0.25, 0.25), "mu": 0.5, "sigma": 0.3, "s_corr": 0.0, "noiseless": False},
    ),
    "identity_1d_uniform": (_build_identity_1d_uniform, {}),
    "gauss_gauss": (_build_gauss_gauss, {"d": 1, "sigma": 1.0, "sigma_prime": 1.5}),
}


def scenario_names() -> tuple:
    return tuple(sorted(_BUILDERS))


def builtin_scenario(name: str, overrides: Optional[dict] = None) -> Scenario:
    """Build a named scenario, optionally overriding its parameters."""
    if name not in _BUILDERS:
        raise InvalidInputError(
            f"unknown scenario {name!r}; expected one of {', '.join(scenario_names())}"
        )
    builder, defaults = _BUILDERS[name]
    params = dict(defaults)
    if overrides:
        unknown = set(overrides) - set(defaults)
        if unknown:
            raise InvalidInputError(
                f"invalid override(s) for {name}: {', '.join(sorted(unknown))}"
            )
        params.update(overrides)
    return builder(params)


# --- records, summaries, fits -------------------------------------------------


@dataclass(frozen=True)
class RunRecord:
    """One replication's outcome, reproducible from (scenario, seed, rep)."""

    scenario: str
    m: int
    n: int
    k: int
    q: float
    s_corr: Optional[float]
    rep: int
    seed: int
    statistic: float
    seconds: float


@dataclass(frozen=True)
class SummaryRow:
    key: float
    mean: float
    stderr: float
    count: int


@dataclass(frozen=True)
class RateFit:
    """Least-squares line through (log m, log statistic) points."""

    points: tuple
    slope: float
    intercept: float
    residual_rms: float


def _mean_stderr(values: Sequence[float]) -> tuple[float, float]:
    n = len(values)
    mean = math.fsum(values) / n
    if n > 1:
        var = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
        stderr = math.sqrt(var / n)
    else:
        stderr = math.inf
    return mean, stderr


def fit_loglog(points) -> RateFit:
    """OLS fit of log(statistic) against log(abscissa)."""
    pts = [(float(x), float(y)) for x, y in points]
    if any(y <= 0.0 for _, y in pts):
        raise InvalidInputError("log-log fit needs positive ordinates")
    xs = np.array([math.log(x) for x, _ in pts])
    ys = np.array([math.log(y) for _, y in pts])
    if np.unique(xs).size < 2:
        raise InvalidInputError("log-log fit needs at least two distinct abscissae")
    slope, intercept = np.polyfit(xs, ys, 1)
    resid = ys - (slope * xs + intercept)
    rms = float(np.sqrt(np.mean(resid**2)))
    return RateFit(
        points=tuple(zip(xs.tolist(), ys.tolist())),
        slope=float(slope),
        intercept=float(intercept),
        residual_rms=rms,
    )


@dataclass(frozen=True)
class KRule:
    """Neighbor-count rule k(m); either a constant or ceil(m^alpha)."""

    name: str
    fn: Callable[[int], int]

    def __call__(self, m: int) -> int:
        k = int(self.fn(m))
        if not 1 <= k <= m:
            raise InvalidInputError(f"k rule {self.name} gave k={k} for m={m}")
        return k


def const_k(k: int) -> KRule:
    k = int(k)
    return KRule(name=f"const:{k}", fn=lambda m: k)


def power_k(alpha: float) -> KRule:
    alpha = float(alpha)
    return KRule(name=f"power:{alpha:g}", fn=lambda m: math.ceil(m**alpha))


# --- experiment harness --------------------------------------------------------


@dataclass(frozen=True)
class RateExperimentResult:
    records: tuple
    summary: tuple
    fit: Optional[RateFit]  # None when the grid has a single size
    statistic: str


@dataclass(frozen=True)
class QiExperimentResult:
    records: tuple
    summary: tuple


@dataclass(frozen=True)
class AtomExperimentResult:
    records: tuple
    summary_1nn: tuple
    summary_sqrt: tuple


def _certify_record(x: Sample, xp: Sample, table, k, q, norm, stat) -> None:
    wv = knn_weights(table, xp.size)
    cost, _ = exact_wq(uniform_empirical(x), weighted_measure(xp, wv), q, norm)
    tol = 1e-9 * max(1.0, abs(stat))
    if k == 1:
        if abs(cost - stat) > tol:
            raise NumericalError(
                f"closed form {stat!r} disagrees with exact transport cost {cost!r}"
            )
    elif stat < cost - tol:
        raise NumericalError(
            f"k-NN bound {stat!r} fell below the exact transport cost {cost!r}"
        )


def wasserstein_rate_experiment(
    scenario: Scenario,
    m_grid: Sequence[int],
    n: int,
    k_rule: KRule,
    q: float,
    replications: int,
    base_seed: int,
    *,
    norm: Norm = DEFAULT_NORM,
    threads: int = 1,
    certify: bool = False,
) -> RateExperimentResult:
    """Transport-cost decay versus training size m.

    Per replication the statistic is the closed-form 1-NN cost (k=1) or
    the k-NN average-cost bound (k>1), both mean distance^q over the
    neighbor table. With ``certify`` every 100th replication is checked
    against the exact LP value.
    """
    m_grid = [int(m) for m in m_grid]
    if not m_grid or any(b <= a for a, b in zip(m_grid, m_grid[1:])):
        raise InvalidInputError("m_grid must be strictly increasing and nonempty")
    if replications < 1 or n < 1:
        raise InvalidInputError("replications and n must be positive")
    s_corr = scenario.params.get("s_corr")

    records = []
    summary = []
    for m in m_grid:
        k = k_rule(m)

        def worker(rep, m=m, k=k):
            t0 = time.perf_counter()
            gen = stream(base_seed, rep)
            x = Sample(scenario.x_sampler(gen, n))
            xp = Sample(scenario.xp_sampler(gen, m))
            table = neighbor_table(x, xp, k, norm)
            stat = knn_transport_cost(table, q)
            if certify and rep % 100 == 0:
                _certify_record(x, xp, table, k, q, norm, stat)
            return stat, time.perf_counter() - t0

        outcomes = indexed_map(worker, replications, threads)
        for rep, (stat, secs) in enumerate(outcomes):
            records.append(
                RunRecord(scenario.name, m, n, k, float(q), s_corr, rep, base_seed, stat, secs)
            )
        mean, stderr = _mean_stderr([stat for stat, _ in outcomes])
        summary.append(SummaryRow(key=float(m), mean=mean, stderr=stderr, count=replications))

    fit = fit_loglog([(row.key, row.mean) for row in summary]) if len(m_grid) >= 2 else None
    statistic = "closed_form_1nn" if all(k_rule(m) == 1 for m in m_grid) else "knn_bound"
    if certify:
        statistic += "+lp_certified"
    return RateExperimentResult(tuple(records), tuple(summary), fit, statistic)


def qi_experiment(
    scenario: Scenario,
    m: int,
    n: int,
    k: int,
    s_corr_grid: Sequence[float],
    replications: int,
    base_seed: int,
    *,
    norm: Norm = DEFAULT_NORM,
    threads: int = 1,
) -> QiExperimentResult:
    """Squared estimation error of the reweighted estimator per s_corr value."""
    if scenario.qi is None:
        raise InvalidInputError("qi_experiment needs a scenario with an analytic QI")
    if replications < 1:
        raise InvalidInputError("replications must be positive")
    records = []
    summary = []
    for s in s_corr_grid:
        if scenario.params.get("s_corr") == float(s):
            scn = scenario
        else:
            scn = scenario.with_params(s_corr=float(s))

        def worker(rep, scn=scn):
            t0 = time.perf_counter()
            gen = stream(base_seed, rep)
            x = Sample(scn.x_sampler(gen, n))
            xp_arr = scn.xp_sampler(gen, m)
            outputs = scn.model.sample_outputs(gen, xp_arr)
            table = neighbor_table(x, Sample(xp_arr), k, norm)
            wv = knn_weights(table, m)
            err = qi_hat(wv, outputs, scn.phi) - scn.qi
            return err * err, time.perf_counter() - t0

        outcomes = indexed_map(worker, replications, threads)
        for rep, (stat, secs) in enumerate(outcomes):
            records.append(
                RunRecord(scn.name, m, n, k, 2.0, float(s), rep, base_seed, stat, secs)
            )
        mean, stderr = _mean_stderr([stat for stat, _ in outcomes])
        summary.append(SummaryRow(key=float(s), mean=mean, stderr=stderr, count=replications))
    return QiExperimentResult(tuple(records), tuple(summary))


def atom_consistency_experiment(
    m_grid: Sequence[int],
    replications: int,
    base_seed: int,
    *,
    scenario: Optional[Scenario] = None,
    n: int = 100,
    norm: Norm = DEFAULT_NORM,
    threads: int = 1,
) -> AtomExperimentResult:
    """Absolute estimation error at an atom: fixed k=1 versus k=ceil(sqrt(m)).

    The 1-NN estimator inherits a single parameter draw and stays biased
    by the observation noise; the growing-k estimator averages it out.
    """
    scn = scenario if scenario is not None else builtin_scenario("atom_demo")
    if scn.qi is None:
        raise InvalidInputError("atom experiment needs a scenario with an analytic QI")
    records = []
    summary_1nn = []
    summary_sqrt = []
    for m in m_grid:
        m = int(m)
        k_big = max(1, math.ceil(math.sqrt(m)))

        def worker(rep, m=m, k_big=k_big):
            t0 = time.perf_counter()
            gen = stream(base_seed, rep)
            x = Sample(scn.x_sampler(gen, n))
            xp_arr = scn.xp_sampler(gen, m)
            outputs = scn.model.sample_outputs(gen, xp_arr)
            # One table at the larger k serves both estimators: its first
            # column is exactly the 1-NN table under the same tie rule.
            table = neighbor_table(x, Sample(xp_arr), k_big, norm)
            vals = scn.phi(outputs)
            err_big = abs(float(np.mean(vals[table.indices])) - scn.qi)
            err_one = abs(float(np.mean(vals[table.indices[:, :1]])) - scn.qi)
            return err_one, err_big, time.perf_counter() - t0

        outcomes = indexed_map(worker, replications, threads)
        for rep, (err_one, err_big, secs) in enumerate(outcomes):
            half = secs / 2.0
            records.append(
                RunRecord(scn.name, m, n, 1, 1.0, scn.params.get("s_corr"), rep, base_seed, err_one, half)
            )
            records.append(
                RunRecord(scn.name, m, n, k_big, 1.0, scn.params.get("s_corr"), rep, base_seed, err_big, half)
            )
        mean1, se1 = _mean_stderr([o[0] for o in outcomes])
        meanb, seb = _mean_stderr([o[1] for o in outcomes])
        summary_1nn.append(SummaryRow(key=float(m), mean=mean1, stderr=se1, count=replications))
        summary_sqrt.append(SummaryRow(key=float(m), mean=meanb, stderr=seb, count=replications))
    return AtomExperimentResult(tuple(records), tuple(summary_1nn), tuple(summary_sqrt))


def noisy_rate_experiment(
    scenario: Scenario,
    m_grid: Sequence[int],
    n: int,
    replications: int,
    base_seed: int,
    *,
    k_rule: Optional[KRule] = None,
    q: float = 2.0,
    norm: Norm = DEFAULT_NORM,
    threads: int = 1,
) -> tuple[QiExperimentResult, RateFit]:
    """Decay of the RMS estimation error in m with the balanced k_m schedule.

    Defaults to k_m = ceil(m^{2/(d+2)}); the fit is of log RMS error
    against log m, so the reference exponent is -1/(d+2).
    """
    if scenario.qi is None:
        raise InvalidInputError("noisy_rate_experiment needs an analytic QI")
    rule = k_rule if k_rule is not None else power_k(2.0 / (scenario.d + 2.0))
    records = []
    summary = []
    for m in m_grid:
        m = int(m)
        k = rule(m)

        def worker(rep, m=m, k=k):
            t0 = time.perf_counter()
            gen = stream(base_seed, rep)
            x = Sample(scenario.x_sampler(gen, n))
            xp_arr = scenario.xp_sampler(gen, m)
            outputs = scenario.model.sample_outputs(gen, xp_arr)
            table = neighbor_table(x, Sample(xp_arr), k, norm)
            wv = knn_weights(table, m)
            err = qi_hat(wv, outputs, scenario.phi) - scenario.qi
            return err * err, time.perf_counter() - t0

        outcomes = indexed_map(worker, replications, threads)
        for rep, (stat, secs) in enumerate(outcomes):
            records.append(
                RunRecord(
                    scenario.name, m, n, k, float(q), scenario.params.get("s_corr"),
                    rep, base_seed, stat, secs,
                )
            )
        mean, stderr = _mean_stderr([stat for stat, _ in outcomes])
        summary.append(SummaryRow(key=float(m), mean=mean, stderr=stderr, count=replications))
    fit = fit_loglog([(row.key, math.sqrt(row.mean)) for row in summary])
    return QiExperimentResult(tuple(records), tuple(summary)), fit


# --- CSV emitters ----------------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def write_runs_csv(path, records: Sequence[RunRecord]) -> None:
    lines = ["scenario,m,n,k,q,s_corr,rep,seed,statistic,seconds"]
    for r in records:
        lines.append(
            ",".join(
                [
                    r.scenario,
                    str(r.m),
                    str(r.n),
                    str(r.k),
                    _fmt(r.q),
                    _fmt(r.s_corr),
                    str(r.rep),
                    str(r.seed),
                    _fmt(r.statistic),
                    f"{r.seconds:.6f}",
                ]
            )
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def write_summary_csv(path, rows: Sequence[SummaryRow], key_name: str) -> None:
    lines = [f"{key_name},mean,stderr,count"]
    for row in rows:
        lines.append(
            ",".join([_fmt(row.key), _fmt(row.mean), _fmt(row.stderr), str(row.count)])
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def write_ratefit_csv(path, fit: RateFit) -> None:
    lines = [
        "slope,intercept,rms",
        ",".join([_fmt(fit.slope), _fmt(fit.intercept), _fmt(fit.residual_rms)]),
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
