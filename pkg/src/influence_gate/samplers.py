"""Posterior draw generation for the three model families.

The linear samplers are exact (i.i.d. composition or Gibbs with exact full
conditionals); the nonlinear models use a shared random-walk Metropolis core
with a short adaptive warm-up that freezes the proposal scales before any
retained draw. Determinism is per seed on a single platform.
"""

import math
from dataclasses import dataclass

import numpy as np

from .core_model import LogitData, MMData, RegressionData, write_table
from .errors import SamplerError
from .linear_gate import LinearPrior
from .mm_gate import KappaPriorSpec
from .prior_tails import ThetaPriorSpec

# Adaptive warm-up targets this acceptance rate, +/- 0.1.
TARGET_ACCEPTANCE = 0.3
_WARMUP_BLOCKS = 30
_WARMUP_BLOCK_SIZE = 100


@dataclass(frozen=True)
class SamplerConfig:
    seed: int
    draws: int
    burn_in: int = 0
    thin: int = 1
    proposal_scale: tuple | None = None

    def __post_init__(self):
        if self.draws < 1:
            raise ValueError("draws must be at least 1")
        if self.thin < 1:
            raise ValueError("thin must be at least 1")
        if self.burn_in < 0:
            raise ValueError("burn_in must be nonnegative")


@dataclass(frozen=True)
class SampleResult:
    draws: np.ndarray
    acceptance_rate: float
    proposal_scale: np.ndarray | None = None


def _rng(seed: int, stream: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(stream,)))


def sample_linear_noninformative(data: RegressionData, config: SamplerConfig) -> SampleResult:
    """i.i.d. draws from the flat-prior posterior.

    sigma2 is inverse gamma with shape (n-k)/2 and rate RSS/2; theta given
    sigma2 is normal around the least-squares solution with covariance
    sigma2 (X'X)^{-1}. Being i.i.d., burn_in and thin are ignored.
    """
    n, k = data.n, data.k
    if n <= k:
        raise SamplerError(f"flat prior needs n > k; got n={n}, k={k}")
    X, y = data.design, data.response
    G = np.linalg.inv(X.T @ X)
    theta_hat = G @ (X.T @ y)
    rss = float(y @ y - theta_hat @ (X.T @ y))
    rng = _rng(config.seed)
    M = config.draws
    shape, rate = (n - k) / 2.0, rss / 2.0
    sigma2 = rate / rng.gamma(shape, 1.0, size=M)
    L = np.linalg.cholesky(G)
    z = rng.standard_normal((M, k))
    theta = theta_hat[None, :] + np.sqrt(sigma2)[:, None] * (z @ L.T)
    return SampleResult(draws=np.column_stack([theta, sigma2]), acceptance_rate=1.0)


def sample_linear_conjugate(
    data: RegressionData, config: SamplerConfig, prior: LinearPrior
) -> SampleResult:
    """Gibbs chain with exact full conditionals under a normal-theta,
    inverse-gamma-sigma2 prior (beta is the inverse rate, matching the
    -2/beta residual threshold)."""
    if prior.is_noninformative:
        raise ValueError("use sample_linear_noninformative for the flat prior")
    spec = prior.theta_prior
    if spec.family != "normal":
        raise ValueError("the Gibbs sampler needs a normal coefficient prior")
    X, y = data.design, data.response
    n, k = data.n, data.k
    mu0 = np.zeros(k) if spec.mean is None else np.asarray(spec.mean, float).ravel()
    cov0 = np.eye(k) if spec.cov is None else np.atleast_2d(np.asarray(spec.cov, float))
    prec0 = np.linalg.inv(cov0)
    prec0_mu0 = prec0 @ mu0
    XtX, Xty = X.T @ X, X.T @ y
    rng = _rng(config.seed)
    theta_hat = np.linalg.solve(XtX, Xty)
    sigma2 = float(np.sum((y - X @ theta_hat) ** 2) / max(n - k, 1))
    if sigma2 <= 0:
        sigma2 = 1.0
    theta = theta_hat.copy()
    total = config.burn_in + config.draws * config.thin
    out = np.empty((config.draws, k + 1))
    kept = 0
    prior_rate = 1.0 / prior.beta
    for it in range(total):
        prec = XtX / sigma2 + prec0
        L = np.linalg.cholesky(prec)
        mean = np.linalg.solve(prec, Xty / sigma2 + prec0_mu0)
        z = rng.standard_normal(k)
        theta = mean + np.linalg.solve(L.T, z)
        resid = y - X @ theta
        shape = prior.alpha + n / 2.0
        rate = prior_rate + float(resid @ resid) / 2.0
        sigma2 = rate / rng.gamma(shape, 1.0)
        if it >= config.burn_in and (it - config.burn_in) % config.thin == 0:
            out[kept, :k] = theta
            out[kept, k] = sigma2
            kept += 1
    return SampleResult(draws=out[:kept], acceptance_rate=1.0)


def random_walk_metropolis(log_density, x0, scale, steps, rng) -> tuple:
    """Shared RW-Metropolis core; returns (chain, acceptance count)."""
    x = np.array(x0, dtype=float)
    d = x.shape[0]
    lp = log_density(x)
    if not np.isfinite(lp):
        raise SamplerError("initial point has zero density")
    chain = np.empty((steps, d))
    accepted = 0
    noise = rng.standard_normal((steps, d)) * scale
    logu = np.log(rng.random(steps))
    for i in range(steps):
        prop = x + noise[i]
        lp_prop = log_density(prop)
        if lp_prop - lp > logu[i]:
            x, lp = prop, lp_prop
            accepted += 1
        chain[i] = x
    return chain, accepted


def _adaptive_scale(log_density, x0, init_scale, rng):
    """Short warm-up tuning per-coordinate scales toward 0.3 acceptance."""
    scale = np.array(init_scale, dtype=float)
    x = np.array(x0, dtype=float)
    for _ in range(_WARMUP_BLOCKS):
        chain, acc = random_walk_metropolis(log_density, x, scale, _WARMUP_BLOCK_SIZE, rng)
        x = chain[-1]
        rate = acc / _WARMUP_BLOCK_SIZE
        scale *= math.exp(min(max(rate - TARGET_ACCEPTANCE, -0.5), 0.5))
        if abs(rate - TARGET_ACCEPTANCE) <= 0.1:
            break
    return scale, x


def _run_mh(log_density, x0, config: SamplerConfig, dim: int) -> SampleResult:
    rng = _rng(config.seed)
    if config.proposal_scale is not None:
        scale = np.asarray(config.proposal_scale, dtype=float)
        if scale.shape != (dim,):
            raise ValueError(f"proposal_scale must have length {dim}")
        if np.any(scale <= 0):
            raise ValueError("proposal scales must be positive")
        start = np.array(x0, dtype=float)
    else:
        scale, start = _adaptive_scale(log_density, x0, np.full(dim, 0.5), rng)
    total = config.burn_in + config.draws * config.thin
    chain, accepted = random_walk_metropolis(log_density, start, scale, total, rng)
    if total >= 10_000 and accepted == 0:
        raise SamplerError("zero acceptance over 10^4 proposals; retune proposal scales")
    kept = chain[config.burn_in::config.thin][: config.draws]
    return SampleResult(
        draws=kept, acceptance_rate=accepted / total, proposal_scale=scale
    )


def sample_mm(
    data: MMData, config: SamplerConfig, kappa_prior: KappaPriorSpec | None = None
) -> SampleResult:
    """Random-walk Metropolis on (m, log sigma2, log kappa).

    The target is the flat 1/sigma2 prior on (m, sigma2) restricted to
    positives, times a half-t prior on kappa, times the Gaussian likelihood;
    the log transforms carry their Jacobians so the chain moves on an
    unconstrained scale for the two positive nuisance axes.
    """
    if data.n < 3:
        raise SamplerError("need at least 3 observations")
    prior = kappa_prior or KappaPriorSpec()
    c, v = data.concentration, data.velocity
    half_dof, half_scale = prior.dof, prior.scale
    n = data.n

    def log_density(p):
        m, u, w = p
        if m <= 0:
            return -math.inf
        sigma2 = math.exp(u)
        kappa = math.exp(w)
        x = c / (kappa + c)
        res = v - m * x
        loglik = -0.5 * n * (math.log(2.0 * math.pi) + u) - float(res @ res) / (2.0 * sigma2)
        # 1/sigma2 prior plus the d(sigma2)/du Jacobian cancel; kappa keeps
        # the half-t density and its Jacobian.
        log_kappa_prior = (
            -0.5 * (half_dof + 1.0) * math.log1p((kappa / half_scale) ** 2 / half_dof) + w
        )
        return loglik + log_kappa_prior

    m0 = float(np.max(v)) * 1.1
    kappa0 = float(np.median(c))
    x0 = c / (kappa0 + c)
    res0 = v - m0 * x0
    s0 = max(float(res0 @ res0) / n, 1e-6)
    start = np.array([m0, math.log(s0), math.log(kappa0)])
    result = _run_mh(log_density, start, config, 3)
    draws = result.draws.copy()
    draws[:, 1] = np.exp(draws[:, 1])
    draws[:, 2] = np.exp(draws[:, 2])
    return SampleResult(
        draws=draws,
        acceptance_rate=result.acceptance_rate,
        proposal_scale=result.proposal_scale,
    )


def _log_prior_beta(spec: ThetaPriorSpec, beta: np.ndarray) -> float:
    if spec.family == "normal":
        mu = np.zeros_like(beta) if spec.mean is None else np.asarray(spec.mean, float)
        cov = np.eye(beta.size) if spec.cov is None else np.atleast_2d(np.asarray(spec.cov, float))
        d = beta - mu
        return -0.5 * float(d @ np.linalg.solve(cov, d))
    if spec.family == "laplace":
        loc = np.zeros_like(beta) if spec.location is None else np.asarray(spec.location, float)
        return -float(np.sum(np.abs(beta - loc))) / spec.scale
    if spec.family == "student_t":
        loc = np.zeros_like(beta) if spec.location is None else np.asarray(spec.location, float)
        cov = np.eye(beta.size) if spec.cov is None else np.atleast_2d(np.asarray(spec.cov, float))
        d = beta - loc
        quad = float(d @ np.linalg.solve(cov, d))
        return -0.5 * (spec.dof + beta.size) * math.log1p(quad / spec.dof)
    raise ValueError(f"unsupported coefficient prior family {spec.family!r}")


def sample_logit(data: LogitData, config: SamplerConfig, prior: ThetaPriorSpec) -> SampleResult:
    """Random-walk Metropolis on beta under a normal, double-exponential,
    or t prior."""
    X, y = data.design, data.outcome

    def log_density(beta):
        z = X @ beta
        loglik = float(np.sum(z * y - np.logaddexp(0.0, z)))
        return loglik + _log_prior_beta(prior, beta)

    start = np.zeros(data.k)
    return _run_mh(log_density, start, config, data.k)


def draws_to_csv(path, model: str, draws: np.ndarray) -> None:
    """Export retained draws, one row per draw, for external audit."""
    draws = np.atleast_2d(np.asarray(draws, dtype=float))
    d = draws.shape[1]
    if model == "linear":
        header = [f"theta_{j}" for j in range(d - 1)] + ["sigma2"]
    elif model == "mm":
        header = ["m", "sigma2", "kappa"]
    elif model == "logit":
        header = [f"beta_{j}" for j in range(d)]
    else:
        raise ValueError(f"unknown model tag {model!r}")
    write_table(path, header, [[float(x) for x in row] for row in draws])
