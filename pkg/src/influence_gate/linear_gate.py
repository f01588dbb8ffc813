"""Analytic moment conditions and moment index for the Bayesian linear model.

Everything here is a pure function of the data, the deletion set, and the
prior. The weight obtained by deleting a set of cases has its moments
controlled by three quantities: the largest eigenvalue of the leverage minor
H_del, the sample size relative to r times the number of deletions, and the
adjusted residual sum of squares

    rss_star(r) = RSS - r * e_del' (I - r H_del)^{-1} e_del,

which at r = 1 equals the refit RSS of the case-deleted least-squares fit.
"""

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .core_model import (
    DeletionSet,
    MomentIndexReport,
    MomentVerdict,
    RegressionData,
    deletion_set,
)
from .errors import SingularLeverageError
from .prior_tails import TailClass, ThetaPriorSpec

# Eigenvalue within this distance of 1/r is treated as exactly on the
# boundary: the finite/infinite conditions exclude equality and numerical
# noise must not flip the verdict.
EIGENVALUE_BOUNDARY_TOL = 1e-9

# Above this many rows the hat quantities come from a thin QR factorization
# instead of the explicit n x n projection.
QR_THRESHOLD = 64

_BISECT_MAX_ITER = 200
_BISECT_WIDTH = 1e-10


@dataclass(frozen=True)
class LinearPrior:
    """Either the conjugate inverse-gamma variance prior (with a proper,
    full-support coefficient prior) or the flat 1/sigma2 reference prior."""

    kind: str
    alpha: float | None = None
    beta: float | None = None
    theta_prior: ThetaPriorSpec | None = None

    def __post_init__(self):
        if self.kind not in ("conjugate", "noninformative"):
            raise ValueError(f"unknown prior kind {self.kind!r}")
        if self.kind == "conjugate":
            if not (self.alpha and self.alpha > 0 and self.beta and self.beta > 0):
                raise ValueError("conjugate prior needs alpha > 0 and beta > 0")
            if self.theta_prior is None:
                raise ValueError("conjugate prior needs a theta prior spec")

    @staticmethod
    def noninformative() -> "LinearPrior":
        return LinearPrior("noninformative")

    @staticmethod
    def conjugate(alpha: float, beta: float, theta_prior: ThetaPriorSpec) -> "LinearPrior":
        return LinearPrior("conjugate", alpha=float(alpha), beta=float(beta), theta_prior=theta_prior)

    @property
    def is_noninformative(self) -> bool:
        return self.kind == "noninformative"

    @property
    def rss_threshold(self) -> float:
        return 0.0 if self.is_noninformative else -2.0 / self.beta


@dataclass(frozen=True)
class LeverageReport:
    """Leverage minor of a deletion set with its spectrum and residuals."""

    minor: np.ndarray
    eigenvalues: np.ndarray
    deleted_residuals: np.ndarray
    rss: float
    theta_tilde: np.ndarray | None = None
    theta_tilde_r: float | None = None

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues[-1])


def _hat_pieces(data: RegressionData):
    """Residual vector, RSS, and a callable building leverage minors."""
    X, y = data.design, data.response
    n = data.n
    if n > QR_THRESHOLD:
        Q, _ = np.linalg.qr(X)
        fitted = Q @ (Q.T @ y)

        def minor(idx: np.ndarray) -> np.ndarray:
            Qi = Q[idx, :]
            return Qi @ Qi.T

    else:
        G = np.linalg.inv(X.T @ X)
        fitted = X @ (G @ (X.T @ y))

        def minor(idx: np.ndarray) -> np.ndarray:
            Xi = X[idx, :]
            return Xi @ G @ Xi.T

    e = y - fitted
    rss = float(e @ e)
    return e, rss, minor


def leverage_minor(data: RegressionData, dels: DeletionSet, r: float | None = None) -> LeverageReport:
    """Leverage minor H_del, its ascending spectrum, deleted residuals, RSS.

    When `r` is supplied and (X'X - r X_del X_del') is nonsingular, the
    stationary point theta_tilde of the r-tilted quadratic form is included.
    """
    if dels.cardinality < 1:
        raise ValueError("leverage is undefined for an empty deletion set")
    if dels.n != data.n:
        raise ValueError("deletion set was built for a different n")
    idx = dels.index_array()
    e, rss, minor = _hat_pieces(data)
    H = minor(idx)
    H = (H + H.T) / 2.0
    lam = np.linalg.eigvalsh(H)
    e_del = e[idx]
    theta_tilde = None
    theta_r = None
    if r is not None:
        X, y = data.design, data.response
        Xi = X[idx, :]
        G = X.T @ X - r * (Xi.T @ Xi)
        if np.abs(np.linalg.det(G)) > 1e-12 * max(1.0, np.abs(np.linalg.det(X.T @ X))):
            b = X.T @ y - r * (Xi.T @ y[idx])
            theta_tilde = np.linalg.solve(G, b)
            theta_r = float(r)
    return LeverageReport(
        minor=H,
        eigenvalues=lam,
        deleted_residuals=e_del,
        rss=rss,
        theta_tilde=theta_tilde,
        theta_tilde_r=theta_r,
    )


def _rss_star_from_spectrum(rss, lam, u2, r):
    """rss - r * sum(u_i^2 / (1 - r lam_i)) with a singularity guard."""
    bad = np.abs(lam - 1.0 / r) < EIGENVALUE_BOUNDARY_TOL if r != 0 else np.zeros_like(lam, bool)
    if np.any(bad):
        raise SingularLeverageError(float(lam[np.argmax(bad)]), float(r))
    return _rss_star_raw(rss, lam, u2, r)


def _rss_star_raw(rss, lam, u2, r):
    """Same quantity without the boundary band; only guards an exact
    denominator collapse. Used inside the r_c bisection, whose bracket ends
    just below the leverage cut-off where the banded form would refuse to
    evaluate."""
    denom = 1.0 - r * lam
    if np.any(np.abs(denom) < 1e-300):
        raise SingularLeverageError(float(lam[np.argmin(np.abs(denom))]), float(r))
    return float(rss - r * np.sum(u2 / denom))


def rss_star(data: RegressionData, dels: DeletionSet, r: float) -> float:
    """Adjusted residual sum of squares at moment order r.

    At r = 1 this equals the RSS of the least-squares refit on the
    case-deleted data; at r = 0 it is the full-data RSS.
    """
    rep = leverage_minor(data, dels)
    lam = rep.eigenvalues
    V = np.linalg.eigh(rep.minor)[1]
    u2 = (V.T @ rep.deleted_residuals) ** 2
    return _rss_star_from_spectrum(rep.rss, lam, u2, float(r))


def _require_part_i_prior(prior: LinearPrior) -> None:
    spec = prior.theta_prior
    if spec is not None and not (spec.proper and spec.full_support):
        raise ValueError(
            "the conjugate-variance result needs a proper coefficient prior with "
            "full support; use the bounded-support bound for box priors"
        )


def theorem31_verdict(
    data: RegressionData, dels: DeletionSet, r: float, prior: LinearPrior
) -> MomentVerdict:
    """Finite/infinite decision for the r-th weight moment, r > 1.

    Finite requires all of: largest leverage eigenvalue below 1/r, enough
    observations relative to r times the deletion count, and rss_star(r)
    above the prior threshold (0 for the flat prior, -2/beta conjugate).
    Each condition failing strictly gives infinite; equality on the sample
    size condition counts as infinite, while the leverage and residual
    conditions return boundary inside a tolerance band.
    """
    if not r > 1:
        raise ValueError("moment order r must exceed 1")
    if dels.cardinality < 1:
        raise ValueError("deletion set must be nonempty")
    if not prior.is_noninformative:
        _require_part_i_prior(prior)
    rep = leverage_minor(data, dels)
    n, k, I = data.n, data.k, dels.cardinality
    lam_max = rep.lambda_max
    if abs(lam_max - 1.0 / r) < EIGENVALUE_BOUNDARY_TOL:
        return MomentVerdict.boundary("leverage eigenvalue equals 1/r")
    if lam_max > 1.0 / r:
        return MomentVerdict.infinite("leverage above 1/r")
    if prior.is_noninformative:
        if not n > r * I + k:
            return MomentVerdict.infinite("sample size: n <= r*I + k")
    else:
        if not n / 2.0 + prior.alpha > r * I / 2.0:
            return MomentVerdict.infinite("sample size: n/2 + alpha <= r*I/2")
    lam = rep.eigenvalues
    V = np.linalg.eigh(rep.minor)[1]
    u2 = (V.T @ rep.deleted_residuals) ** 2
    rs = _rss_star_from_spectrum(rep.rss, lam, u2, r)
    thr = prior.rss_threshold
    tol = 1e-9 * max(1.0, abs(rep.rss), abs(thr))
    if abs(rs - thr) < tol:
        return MomentVerdict.boundary("rss_star at the prior threshold")
    if rs > thr:
        return MomentVerdict.finite()
    return MomentVerdict.infinite("rss_star below the prior threshold")


def _rc_bisection(rss, lam, u2, threshold, r_a):
    """Largest r in (0, r_a) with rss_star(r) > threshold.

    rss_star is non-increasing in r on that interval, so plain bisection
    applies. Residuals orthogonal to the minor's spectrum (or exactly zero)
    leave rss_star above the threshold everywhere, in which case the
    leverage cut-off binds and r_c = r_a.
    """
    if float(np.sum(u2)) <= 1e-24 * max(1.0, rss):
        return r_a
    if math.isinf(r_a):
        # All leverage eigenvalues are zero: rss_star is exactly linear in r.
        slope = float(np.sum(u2))
        return (rss - threshold) / slope

    def f(r):
        return _rss_star_raw(rss, lam, u2, r) - threshold

    hi = r_a - 1e-9
    if hi <= 0:
        return r_a
    if f(hi) > 0:
        return r_a
    lo = 0.0
    for _ in range(_BISECT_MAX_ITER):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < _BISECT_WIDTH:
            break
    return 0.5 * (lo + hi)


def moment_index_linear(
    data: RegressionData, dels: DeletionSet, prior: LinearPrior
) -> MomentIndexReport:
    """Moment cut-offs r_a (leverage), r_b (sample size), r_c (residual)."""
    if dels.cardinality < 1:
        raise ValueError("deletion set must be nonempty")
    rep = leverage_minor(data, dels)
    n, k, I = data.n, data.k, dels.cardinality
    lam = rep.eigenvalues
    lam_max = rep.lambda_max
    r_a = math.inf if lam_max <= 1e-14 else 1.0 / lam_max
    if prior.is_noninformative:
        r_b = (n - k) / I
    else:
        r_b = (n + 2.0 * prior.alpha) / I
    V = np.linalg.eigh(rep.minor)[1]
    u2 = (V.T @ rep.deleted_residuals) ** 2
    r_c = _rc_bisection(rep.rss, lam, u2, prior.rss_threshold, r_a)
    cuts = {"leverage": r_a, "sample-size": r_b, "residual": r_c}
    binding = min(cuts, key=lambda kk: (cuts[kk], ("leverage", "sample-size", "residual").index(kk)))
    return MomentIndexReport(r_a=r_a, r_b=r_b, r_c=r_c, binding=binding)


def corollary3_dispatch(
    data: RegressionData,
    dels: DeletionSet,
    r: float,
    theta_tail: TailClass,
    sigma2_tail: TailClass,
    moment_side_condition: bool,
) -> MomentVerdict:
    """Verdict under nonconjugate priors classified only by tail behavior.

    `moment_side_condition` asserts integrability of the variance prior
    against the (n - r I)/2 power; finite conclusions require it, infinite
    conclusions (driven by divergence at variance -> 0) do not.
    """
    if not r > 1:
        raise ValueError("moment order r must exceed 1")
    rep = leverage_minor(data, dels)
    lam_max = rep.lambda_max
    if abs(lam_max - 1.0 / r) < EIGENVALUE_BOUNDARY_TOL:
        return MomentVerdict.boundary("leverage eigenvalue equals 1/r")
    small_leverage = lam_max < 1.0 / r

    def finite_if_asserted(detail: str) -> MomentVerdict:
        if moment_side_condition:
            return MomentVerdict.finite(detail)
        return MomentVerdict.indeterminate(
            "variance-prior integrability side condition not asserted"
        )

    if sigma2_tail.is_thick:
        if not small_leverage:
            return MomentVerdict.infinite("leverage above 1/r")
        lam = rep.eigenvalues
        V = np.linalg.eigh(rep.minor)[1]
        u2 = (V.T @ rep.deleted_residuals) ** 2
        rs = _rss_star_from_spectrum(rep.rss, lam, u2, r)
        tol = 1e-9 * max(1.0, abs(rep.rss))
        if abs(rs) < tol:
            return MomentVerdict.boundary("rss_star at zero")
        if rs < 0:
            return MomentVerdict.infinite("rss_star below zero")
        return finite_if_asserted("thick variance tail with positive rss_star")
    if sigma2_tail.is_thin:
        if small_leverage:
            return finite_if_asserted("thin variance tail with small leverage")
        if theta_tail.is_thick:
            return MomentVerdict.infinite("thick coefficient tail with leverage above 1/r")
        return MomentVerdict.indeterminate(
            "both priors thin-tailed with leverage above 1/r; finiteness depends "
            "on the exact decay rates and can go either way"
        )
    if sigma2_tail.kind == "in_family":
        return MomentVerdict.indeterminate(
            "variance prior is in the inverse-gamma family; use the exact conjugate verdict"
        )
    if theta_tail.kind == "bounded_support":
        return MomentVerdict.indeterminate(
            "bounded-support coefficient prior; use the box-support bound"
        )
    return MomentVerdict.indeterminate(
        f"no dispatch rule for variance tail {sigma2_tail.kind!r}"
    )


# --- bounded-support coefficient priors --------------------------------------


def _tilted_quadratic(data: RegressionData, dels: DeletionSet, r: float):
    X, y = data.design, data.response
    idx = dels.index_array()
    Xi = X[idx, :]
    G = X.T @ X - r * (Xi.T @ Xi)
    b = X.T @ y - r * (Xi.T @ y[idx])
    return G, b


def bounded_support_M(
    data: RegressionData, dels: DeletionSet, r: float, support_box: np.ndarray,
    grid_points: int = 33,
) -> float:
    """Minimum of theta' G(r) theta - 2 b(r)' theta over a box, k <= 3.

    G(r) = X'X - r X_del X_del' need not be definite, so the minimum is
    located by a dense grid sweep followed by box-projected coordinate
    descent from every grid point; the box vertices and the unconstrained
    stationary point (when admissible) are always included.
    """
    box = np.asarray(support_box, dtype=float)
    if box.ndim != 2 or box.shape[1] != 2:
        raise ValueError("support_box must have shape (k, 2)")
    k = data.k
    if box.shape[0] != k:
        raise ValueError(f"support_box rows {box.shape[0]} != k={k}")
    if k > 3:
        raise ValueError("bounded-support minimization supports k <= 3 only")
    lo, hi = box[:, 0], box[:, 1]
    if np.any(hi < lo):
        raise ValueError("box upper bounds must be >= lower bounds")
    G, b = _tilted_quadratic(data, dels, float(r))

    def q_value(theta):
        return np.einsum("...i,ij,...j->...", theta, G, theta) - 2.0 * theta @ b

    axes = [np.linspace(lo[j], hi[j], grid_points) for j in range(k)]
    mesh = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=-1)

    # Box-projected coordinate descent, vectorized over all starts. For a
    # coordinate with nonpositive curvature the 1-d restriction is concave,
    # so its minimum sits at a box end.
    pts = mesh.copy()
    for _ in range(80):
        before = q_value(pts)
        for j in range(k):
            rest = pts @ G[j] - pts[:, j] * G[j, j]
            if G[j, j] > 0:
                cand = (b[j] - rest) / G[j, j]
                pts[:, j] = np.clip(cand, lo[j], hi[j])
            else:
                pts_lo = pts.copy()
                pts_lo[:, j] = lo[j]
                pts_hi = pts.copy()
                pts_hi[:, j] = hi[j]
                pts[:, j] = np.where(q_value(pts_lo) <= q_value(pts_hi), lo[j], hi[j])
        if np.max(before - q_value(pts)) < 1e-13 * max(1.0, np.max(np.abs(before))):
            break

    candidates = [mesh, pts]
    corners = np.stack(
        [np.array([box[j, s >> j & 1] for j in range(k)]) for s in range(2 ** k)]
    )
    candidates.append(corners)
    try:
        lam_G = np.linalg.eigvalsh((G + G.T) / 2.0)
        if lam_G[0] > 0:
            stat = np.linalg.solve(G, b)
            if np.all(stat >= lo - 1e-12) and np.all(stat <= hi + 1e-12):
                candidates.append(np.clip(stat, lo, hi)[None, :])
    except np.linalg.LinAlgError:
        pass
    values = np.concatenate([q_value(c) for c in candidates])
    return float(np.min(values))


def bounded_support_verdict(
    data: RegressionData,
    dels: DeletionSet,
    r: float,
    support_box: np.ndarray,
    prior: LinearPrior,
) -> MomentVerdict:
    """Verdict for a box-supported coefficient prior with conjugate variance."""
    if prior.is_noninformative:
        raise ValueError("bounded-support verdict needs the conjugate variance prior")
    n, I = data.n, dels.cardinality
    if not n / 2.0 + prior.alpha > r * I / 2.0:
        return MomentVerdict.infinite("sample size: n/2 + alpha <= r*I/2")
    M = bounded_support_M(data, dels, r, support_box)
    rs = rss_star(data, dels, r) if dels.cardinality else 0.0
    thr = -(2.0 / prior.beta + M)
    tol = 1e-9 * max(1.0, abs(rs), abs(thr))
    if abs(rs - thr) < tol:
        return MomentVerdict.boundary("rss_star at the box-adjusted threshold")
    if rs > thr:
        return MomentVerdict.finite("rss_star above the box-adjusted threshold")
    return MomentVerdict.infinite("rss_star below the box-adjusted threshold")


# --- batched machinery for subset scans and k-fold audits ---------------------


@dataclass(frozen=True)
class SubsetScanResult:
    subsets: np.ndarray  # (N, I) int, 0-based, lexicographic order
    r_a: np.ndarray
    r_b: np.ndarray
    r_c: np.ndarray
    r_star: np.ndarray

    @property
    def count(self) -> int:
        return self.subsets.shape[0]


def _batched_cutoffs(H_full, e, rss, idx_sets, n, k, prior: LinearPrior):
    """Vectorized (r_a, r_b, r_c, r_star) for many same-size deletion sets."""
    idx = np.asarray(idx_sets, dtype=int)
    N, I = idx.shape
    minors = H_full[idx[:, :, None], idx[:, None, :]]
    minors = (minors + np.swapaxes(minors, 1, 2)) / 2.0
    lam, V = np.linalg.eigh(minors)
    e_del = e[idx]
    u2 = np.einsum("nij,ni->nj", V, e_del) ** 2
    lam_max = lam[:, -1]
    with np.errstate(divide="ignore"):
        r_a = np.where(lam_max > 1e-14, 1.0 / np.maximum(lam_max, 1e-300), np.inf)
    if prior.is_noninformative:
        r_b = np.full(N, (n - k) / I)
        threshold = 0.0
    else:
        r_b = np.full(N, (n + 2.0 * prior.alpha) / I)
        threshold = -2.0 / prior.beta

    # Bisection for the residual cut-off, vectorized across subsets.
    sum_u2 = u2.sum(axis=1)
    degenerate = sum_u2 <= 1e-24 * max(1.0, rss)
    hi_cap = np.where(np.isinf(r_a), (rss - threshold) / np.maximum(sum_u2, 1e-300), r_a - 1e-9)
    hi_cap = np.maximum(hi_cap, 1e-12)

    def rss_star_vec(rv):
        denom = 1.0 - rv[:, None] * lam
        safe = np.where(np.abs(denom) < 1e-300, 1e-300, denom)
        return rss - rv * np.sum(u2 / safe, axis=1)

    above_at_cap = rss_star_vec(hi_cap) - threshold > 0
    lo = np.zeros(N)
    hi = hi_cap.copy()
    active = ~(degenerate | above_at_cap)
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        pos = rss_star_vec(mid) - threshold > 0
        lo = np.where(active & pos, mid, lo)
        hi = np.where(active & ~pos, mid, hi)
    r_c = np.where(degenerate | above_at_cap, r_a, 0.5 * (lo + hi))
    r_c = np.where(np.isinf(r_a) & (degenerate | above_at_cap), np.inf, r_c)
    r_star = np.minimum(np.minimum(r_a, r_b), r_c)
    return r_a, r_b, r_c, r_star


def scan_deletion_subsets(
    data: RegressionData, subset_size: int, prior: LinearPrior, chunk: int = 65536
) -> SubsetScanResult:
    """Cut-offs for every deletion subset of the given size.

    Enumerates all C(n, I) subsets in lexicographic order; the per-subset
    spectral work is batched so that scans over ~1e5 subsets stay cheap.
    """
    n, k = data.n, data.k
    if not 1 <= subset_size <= n:
        raise ValueError("subset size must be in [1, n]")
    X, y = data.design, data.response
    Q, _ = np.linalg.qr(X)
    H = Q @ Q.T
    e = y - Q @ (Q.T @ y)
    rss = float(e @ e)

    all_sets = []
    ra_l, rb_l, rc_l, rs_l = [], [], [], []
    buf = []
    for combo in combinations(range(n), subset_size):
        buf.append(combo)
        if len(buf) == chunk:
            arr = np.array(buf, dtype=int)
            out = _batched_cutoffs(H, e, rss, arr, n, k, prior)
            all_sets.append(arr)
            for lst, vec in zip((ra_l, rb_l, rc_l, rs_l), out):
                lst.append(vec)
            buf = []
    if buf:
        arr = np.array(buf, dtype=int)
        out = _batched_cutoffs(H, e, rss, arr, n, k, prior)
        all_sets.append(arr)
        for lst, vec in zip((ra_l, rb_l, rc_l, rs_l), out):
            lst.append(vec)
    return SubsetScanResult(
        subsets=np.concatenate(all_sets, axis=0),
        r_a=np.concatenate(ra_l),
        r_b=np.concatenate(rb_l),
        r_c=np.concatenate(rc_l),
        r_star=np.concatenate(rs_l),
    )


def fold_moment_indices(data: RegressionData, folds: list, prior: LinearPrior) -> np.ndarray:
    """r_star for each fold of a partition, treating each fold as the deletion set."""
    out = np.empty(len(folds))
    for i, fold in enumerate(folds):
        rep = moment_index_linear(data, deletion_set(fold, data.n), prior)
        out[i] = rep.r_star
    return out
