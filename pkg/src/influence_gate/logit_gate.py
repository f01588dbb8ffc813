"""Moment conditions for logistic regression via a piecewise-linear criterion.

The deletion weight for logistic regression is a product of factors
(1 + exp(beta'x_i)) / exp(beta'x_i y_i) over deleted cases, each at least 1.
Along a ray the log of (weight^r * likelihood * exponential prior) grows at
rate h(beta, r, eps); the r-th weight moment is finite when h < 0 on the
whole L1 unit sphere and infinite when h > 0 somewhere on it. h is
positively homogeneous and piecewise linear on the central hyperplane
arrangement {beta'x_i = 0} union {beta_j = 0}, so its maximum over the
sphere is attained at an arrangement vertex; the solver enumerates the null
directions of all (k-1)-subsets of arrangement normals.
"""

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .core_model import DeletionSet, LogitData, MomentIndexReport, MomentVerdict
from .errors import BudgetError
from .prior_tails import TailClass, ThetaPriorSpec

# Candidate budget for exact vertex enumeration.
CANDIDATE_BUDGET = 10_000_000
MAX_K = 6
MAX_N = 200

# |max h| below this band is a boundary verdict: the exact zero case needs
# conditions the sign test cannot supply.
BOUNDARY_BAND = 1e-9

R_STAR_CAP = 64.0


@dataclass(frozen=True)
class LogitCriterion:
    """Maximum of h over the L1 unit sphere with the certifying vertices."""

    epsilon: float
    r: float
    max_value: float
    argmax: np.ndarray
    certificate: tuple
    candidate_count: int
    column_scales: np.ndarray
    approximate: bool = False


def _split_sums(data: LogitData, dels: DeletionSet):
    X, y = data.design, data.outcome
    mask = dels.mask()
    s_in = X[mask].T @ y[mask] if mask.any() else np.zeros(data.k)
    s_out = X.T @ y - s_in
    return s_out, s_in, mask


def h_eval(
    data: LogitData, dels: DeletionSet, beta: np.ndarray, r: float, epsilon: float
) -> float:
    """Tail-rate criterion at one direction; ties beta'x_i = 0 contribute 0."""
    beta = np.asarray(beta, dtype=float).ravel()
    h0, slope = _h_affine_parts(data, dels, beta[None, :], epsilon)
    return float(h0[0] + (r - 1.0) * slope[0])


def _h_affine_parts(data: LogitData, dels: DeletionSet, betas: np.ndarray, epsilon: float):
    """h(beta, r, eps) = h0(beta) + (r-1) * slope(beta), batched over rows.

    slope = sum over deleted cases of max(0, beta'x_i) - beta'x_i y_i >= 0,
    so h is affine and nondecreasing in r for every direction.
    """
    X, y = data.design, data.outcome
    mask = dels.mask()
    Z = betas @ X.T  # (N, n)
    pos = np.maximum(Z, 0.0)
    contrib = Z * y[None, :] - pos  # per-case beta'x_i y_i - max(0, beta'x_i)
    h0 = contrib[:, ~mask].sum(axis=1) - epsilon * np.abs(betas).sum(axis=1)
    slope = (-contrib[:, mask]).sum(axis=1) if mask.any() else np.zeros(betas.shape[0])
    return h0, slope


def _candidate_directions(data: LogitData):
    """L1-normalized null directions of all (k-1)-subsets of arrangement normals.

    Normals are the covariate rows (scaled per column to unit max-abs for
    conditioning) plus the coordinate axes. Directions are mapped back to the
    original coordinates before normalization, so epsilon keeps its meaning.
    Returns (directions, column_scales, candidate_count_estimate).
    """
    X = data.design
    n, k = X.shape
    scales = np.maximum(np.max(np.abs(X), axis=0), 1e-300)
    if k == 1:
        return np.array([[1.0], [-1.0]]), scales, 2
    Xs = X / scales
    normals = np.vstack([Xs, np.eye(k)])
    m = normals.shape[0]
    count = math.comb(m, k - 1) * 2
    if count > CANDIDATE_BUDGET:
        raise BudgetError(
            f"vertex enumeration needs {count} candidates (> {CANDIDATE_BUDGET}); "
            "pass multistart=N to use the approximate random-direction fallback"
        )
    subsets = np.array(list(combinations(range(m), k - 1)), dtype=int)
    dirs = []
    chunk = 65536
    for start in range(0, subsets.shape[0], chunk):
        block = normals[subsets[start:start + chunk]]  # (B, k-1, k)
        _, sv, vh = np.linalg.svd(block)
        ok = sv[:, -1] > 1e-10 * np.maximum(sv[:, 0], 1e-300)
        dirs.append(vh[ok, -1, :])
    d_scaled = np.concatenate(dirs, axis=0)
    d = d_scaled / scales[None, :]
    d = np.concatenate([d, -d], axis=0)
    norms = np.abs(d).sum(axis=1)
    d = d[norms > 0] / norms[norms > 0, None]
    return d, scales, count


def _lex_best(values: np.ndarray, betas: np.ndarray):
    """Max value with lexicographically smallest argmax among ties."""
    top = float(np.max(values))
    tied = np.nonzero(values >= top - 1e-15 * max(1.0, abs(top)))[0]
    order = np.lexsort(betas[tied].T[::-1])
    pick = tied[order[0]]
    return float(values[pick]), betas[pick]


def max_h_l1_sphere(
    data: LogitData,
    dels: DeletionSet,
    r: float,
    epsilon: float,
    multistart: int | None = None,
) -> LogitCriterion:
    """Global maximum of h over {beta : sum |beta_j| = 1}.

    Exact for k <= 6 and n <= 200 via arrangement-vertex enumeration; the
    optional multistart fallback draws random sphere directions instead and
    is flagged approximate in the result.
    """
    if data.k > MAX_K or data.n > MAX_N:
        raise BudgetError(
            f"exact maximization supports k <= {MAX_K} and n <= {MAX_N}; "
            f"got k={data.k}, n={data.n}"
        )
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    approximate = False
    try:
        betas, scales, count = _candidate_directions(data)
    except BudgetError:
        if multistart is None:
            raise
        rng = np.random.default_rng(0)
        raw = rng.standard_normal((int(multistart), data.k))
        betas = raw / np.abs(raw).sum(axis=1, keepdims=True)
        scales = np.maximum(np.max(np.abs(data.design), axis=0), 1e-300)
        count = int(multistart)
        approximate = True
    h0, slope = _h_affine_parts(data, dels, betas, epsilon)
    values = h0 + (r - 1.0) * slope
    best, arg = _lex_best(values, betas)
    order = np.argsort(values)[::-1][: min(64, len(values))]
    certificate = tuple((float(values[i]), tuple(betas[i])) for i in order)
    return LogitCriterion(
        epsilon=float(epsilon),
        r=float(r),
        max_value=best,
        argmax=arg,
        certificate=certificate,
        candidate_count=int(count),
        column_scales=scales,
        approximate=approximate,
    )


def theorem51_verdict(
    data: LogitData, dels: DeletionSet, r: float, epsilon: float
) -> MomentVerdict:
    """Sign of the sphere maximum decides the r-th weight moment."""
    if dels.cardinality == 0:
        return MomentVerdict.finite("empty deletion: weight is constant")
    crit = max_h_l1_sphere(data, dels, r, epsilon)
    if abs(crit.max_value) <= BOUNDARY_BAND:
        return MomentVerdict.boundary("criterion maximum at zero")
    if crit.max_value > 0:
        return MomentVerdict.infinite(
            f"criterion positive at direction {np.round(crit.argmax, 6).tolist()}"
        )
    return MomentVerdict.finite()


def classify_logit_prior(spec: ThetaPriorSpec) -> TailClass:
    """Tail class relative to the isotropic double-exponential family.

    Normal and bounded-support priors are thinner than every member; any
    polynomial tail is thicker; an independent double-exponential prior with
    common scale s is in-family with rate 1/s.
    """
    if spec.family == "normal":
        return TailClass.thin()
    if spec.family == "quartic_exponential":
        return TailClass.thin()
    if spec.family == "bounded_uniform":
        return TailClass.thin()
    if spec.family == "student_t":
        return TailClass.thick()
    if spec.family == "laplace":
        return TailClass.in_family(epsilon=1.0 / spec.scale)
    if spec.declared_tail is not None:
        return spec.declared_tail
    return TailClass.unknown()


def corollary5_dispatch(
    data: LogitData, dels: DeletionSet, r: float, tail: TailClass
) -> MomentVerdict:
    """Verdict by tail class relative to the double-exponential family.

    Thick tails reduce to the criterion with epsilon = 0 (an improper flat
    prior also takes this route, with finiteness conditional on posterior
    propriety); thin tails give every moment finite; in-family priors use
    their own exponential rate.
    """
    if tail.is_thin or tail.kind == "bounded_support":
        return MomentVerdict.finite("prior thinner than every double exponential")
    if tail.is_thick:
        return theorem51_verdict(data, dels, r, 0.0)
    if tail.kind == "in_family":
        eps = tail.params.get("epsilon")
        if eps is None:
            raise ValueError("in-family tail class must carry its epsilon")
        return theorem51_verdict(data, dels, r, float(eps))
    return MomentVerdict.indeterminate(f"no dispatch rule for tail class {tail.kind!r}")


def moment_index_logit(
    data: LogitData, dels: DeletionSet, epsilon: float
) -> MomentIndexReport:
    """Moment index from the r-affine structure of the criterion.

    For each candidate vertex h(r) = h0 + (r-1)*slope with slope >= 0, so the
    sphere maximum is a nondecreasing piecewise-affine envelope in r and its
    zero crossing is exact: r* = min over vertices of the per-vertex root.
    Indices above the cap report as +infinity. The leverage and sample-size
    fields do not apply to this model and are +infinity.
    """
    if dels.cardinality == 0:
        return MomentIndexReport(
            r_a=math.inf, r_b=math.inf, r_c=math.inf, binding="empty deletion"
        )
    betas, _, _ = _candidate_directions(data)
    h0, slope = _h_affine_parts(data, dels, betas, epsilon)
    tol = 1e-12
    r_star = math.inf
    arg = None
    for i in range(len(h0)):
        if slope[i] > tol:
            root = 1.0 - h0[i] / slope[i]
            cand = max(root, 1.0)
        elif h0[i] > tol:
            cand = 1.0
        else:
            continue
        if cand < r_star:
            r_star = cand
            arg = betas[i]
    if r_star > R_STAR_CAP:
        return MomentIndexReport(
            r_a=math.inf, r_b=math.inf, r_c=math.inf,
            binding=f"criterion negative up to the r cap {R_STAR_CAP:g}",
        )
    binding = "criterion vertex " + str(np.round(arg, 9).tolist())
    return MomentIndexReport(r_a=math.inf, r_b=math.inf, r_c=r_star, binding=binding)


def propriety_certificate(data: LogitData, epsilon: float) -> bool:
    """True when some single deletion certifies a finite first weight moment.

    The deletion weight always exceeds one, so a finite first moment for any
    case-deleted weight bounds the posterior normalizer: the posterior is
    proper. A False return is no conclusion.
    """
    probe_r = 1.0 + 1e-6
    for i in range(data.n):
        dels = DeletionSet(indices=(i,), n=data.n)
        if theorem51_verdict(data, dels, probe_r, epsilon).is_finite:
            return True
    return False
