"""Empirical verification of analytic moment verdicts.

Two instruments: tail-index estimation of realized weights (Hill plus a
log-survival regression) checked against the analytic moment index, and a
variance-scaling audit that checks whether an estimator's replication
variance decays like 1/M (the CLT rate) or slower.
"""

import math
from dataclasses import dataclass

import numpy as np

from .core_model import DeletionSet, MomentIndexReport, write_table
from .errors import SamplerError
from .is_engine import log_weight
from .samplers import (
    SamplerConfig,
    sample_linear_conjugate,
    sample_linear_noninformative,
    sample_logit,
    sample_mm,
)

DEFAULT_TOP_FRACTION = 0.01
SENSITIVITY_FRACTIONS = (0.005, 0.01, 0.02)
MIN_EXCEEDANCES = 50
REGRESSION_POINTS = 25

# Tail-index estimators converge slowly; the audit accepts the analytic value
# within this relative band, and passes no judgment when the tail is too thin
# to estimate (moment index above AGREEMENT_MAX_INDEX).
AGREEMENT_REL_TOL = 0.25
AGREEMENT_MAX_INDEX = 6.0


@dataclass(frozen=True)
class TailReport:
    hill_estimate: float
    top_fraction: float
    hill_sensitivity: dict
    regression_index: float
    analytic_r_star: float
    agreement: bool | None
    degenerate: bool = False


@dataclass(frozen=True)
class ScalingReport:
    m_grid: tuple
    replications: int
    variance_at_m: tuple
    loglog_slope: float | None
    degenerate: bool = False


def hill_tail_index(weights_descending: np.ndarray, top_fraction: float) -> float:
    """Hill estimator from the top-fraction order statistics.

    Input must be sorted descending. The estimate is the inverse mean
    log-excess over the threshold order statistic; constant tails give
    +infinity (degenerate, flagged by the caller).
    """
    w = np.asarray(weights_descending, dtype=float).ravel()
    if not 0 < top_fraction <= 0.2:
        raise ValueError("top_fraction must be in (0, 0.2]")
    if w.size < 2 or w[0] < w[-1]:
        raise ValueError("weights must be sorted in descending order")
    k = int(math.floor(top_fraction * w.size))
    if k < MIN_EXCEEDANCES:
        raise ValueError(
            f"need at least {MIN_EXCEEDANCES} exceedances; top fraction {top_fraction} "
            f"of {w.size} gives {k}"
        )
    threshold = w[k]
    if threshold <= 0:
        raise ValueError("weights must be positive")
    mean_excess = float(np.mean(np.log(w[:k]) - math.log(threshold)))
    if mean_excess <= 0:
        return math.inf
    return 1.0 / mean_excess


def survival_regression_index(weights_descending: np.ndarray,
                              points: int = REGRESSION_POINTS) -> tuple:
    """Slope of log P(W > t) against log(1/t) over upper-tail thresholds.

    Returns (slope, rows) where rows hold (threshold, exceedances, running
    estimate) for export.
    """
    w = np.asarray(weights_descending, dtype=float).ravel()
    M = w.size
    ranks = np.unique(np.geomspace(max(int(0.0005 * M), 10), int(0.1 * M), points).astype(int))
    ranks = ranks[(ranks >= 5) & (ranks < M)]
    if ranks.size < 20:
        raise ValueError("not enough draws for the survival regression (need >= 20 thresholds)")
    thresholds = w[ranks]
    if np.any(thresholds <= 0) or thresholds[0] == thresholds[-1]:
        return math.inf, []
    log_p = np.log(ranks / M)
    log_inv_t = -np.log(thresholds)
    slope = float(np.polyfit(log_inv_t, log_p, 1)[0])
    rows = []
    for j, rank in enumerate(ranks):
        partial = np.log(w[:rank]) - math.log(w[rank])
        est = 1.0 / float(np.mean(partial)) if np.mean(partial) > 0 else math.inf
        rows.append((float(thresholds[j]), int(rank), est))
    return slope, rows


@dataclass(frozen=True)
class ModelBundle:
    """Everything needed to draw from a model's posterior and weight it."""

    model: str
    data: object
    prior: object = None
    kappa_prior: object = None

    def sample(self, config: SamplerConfig):
        if self.model == "linear":
            if self.prior is None or self.prior.is_noninformative:
                return sample_linear_noninformative(self.data, config)
            return sample_linear_conjugate(self.data, config, self.prior)
        if self.model == "mm":
            return sample_mm(self.data, config, self.kappa_prior)
        if self.model == "logit":
            return sample_logit(self.data, config, self.prior)
        raise SamplerError(f"unknown model tag {self.model!r}")


def verify_moment_index(
    bundle: ModelBundle,
    dels: DeletionSet,
    analytic: MomentIndexReport,
    config: SamplerConfig,
    top_fraction: float = DEFAULT_TOP_FRACTION,
    out_csv=None,
) -> TailReport:
    """Simulate draws, estimate the weight tail index both ways, and compare.

    Agreement is judged only when the analytic index is at most 6 (thinner
    tails are not estimable at these sample sizes): the Hill estimate must
    sit within 25% of the analytic value. Constant weights (for instance an
    empty deletion) short-circuit to a degenerate report.
    """
    result = bundle.sample(config)
    lw = log_weight(bundle.model, result.draws, bundle.data, dels)
    lw = np.asarray(lw, dtype=float)
    r_star = float(analytic.r_star)
    if float(np.max(lw) - np.min(lw)) < 1e-12:
        return TailReport(
            hill_estimate=math.inf,
            top_fraction=top_fraction,
            hill_sensitivity={f: math.inf for f in SENSITIVITY_FRACTIONS},
            regression_index=math.inf,
            analytic_r_star=r_star,
            agreement=None,
            degenerate=True,
        )
    w = np.sort(np.exp(lw - np.max(lw)))[::-1]
    hill = hill_tail_index(w, top_fraction)
    sensitivity = {}
    for frac in SENSITIVITY_FRACTIONS:
        try:
            sensitivity[frac] = hill_tail_index(w, frac)
        except ValueError:
            sensitivity[frac] = math.nan
    slope, rows = survival_regression_index(w)
    if math.isfinite(r_star) and r_star <= AGREEMENT_MAX_INDEX and math.isfinite(hill):
        agreement = abs(hill - r_star) / r_star < AGREEMENT_REL_TOL
    else:
        agreement = None
    if out_csv is not None and rows:
        write_table(out_csv, ["threshold", "exceedances", "estimate"], rows)
    return TailReport(
        hill_estimate=hill,
        top_fraction=top_fraction,
        hill_sensitivity=sensitivity,
        regression_index=slope,
        analytic_r_star=r_star,
        agreement=agreement,
    )


def clt_scaling_audit(estimator, m_grid, replications: int, seed: int) -> ScalingReport:
    """Replication variance of an estimator across sample sizes.

    `estimator(m, rng)` must return one estimate from m draws. Replications
    use derived, independent seeds. The log-log slope of variance against m
    is -1 under a CLT; heavy-tailed weights flatten it.
    """
    m_grid = tuple(int(m) for m in m_grid)
    if len(m_grid) < 1 or any(b <= a for a, b in zip(m_grid, m_grid[1:])):
        raise ValueError("m_grid must be strictly increasing")
    children = np.random.SeedSequence(seed).spawn(len(m_grid) * replications)
    variances = []
    for i, m in enumerate(m_grid):
        vals = np.empty(replications)
        for rep in range(replications):
            rng = np.random.default_rng(children[i * replications + rep])
            vals[rep] = estimator(m, rng)
        variances.append(float(np.var(vals, ddof=1)))
    if all(v == 0.0 for v in variances):
        return ScalingReport(
            m_grid=m_grid,
            replications=replications,
            variance_at_m=tuple(variances),
            loglog_slope=None,
            degenerate=True,
        )
    if len(m_grid) < 2:
        slope = None
    else:
        slope = float(np.polyfit(np.log(m_grid), np.log(variances), 1)[0])
    return ScalingReport(
        m_grid=m_grid,
        replications=replications,
        variance_at_m=tuple(variances),
        loglog_slope=slope,
    )
