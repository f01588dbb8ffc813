"""Command-line surface: gate reports, subset scans, k-fold audits,
influence estimation, and empirical verification.

    influence-gate gate|scan|kfold|estimate|verify --config <path> [--seed N] [--out DIR]

Configuration is a flat key = value text file with dotted section prefixes;
the grammar is documented in the README. Case indices are 1-based in
configuration and reports. Exit codes: 0 ok, 2 config error, 3 data error,
4 budget error, 5 sampler error.
"""

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import is_engine, linear_gate, logit_gate, mm_gate, tail_verifier
from .core_model import (
    LinearSchema,
    LogitSchema,
    MMSchema,
    deletion_set,
    load_csv,
    write_table,
)
from .errors import (
    BudgetError,
    ConfigError,
    DataError,
    DegenerateSampleError,
    InfluenceGateError,
    SamplerError,
)
from .mm_gate import KappaPriorSpec, MMScanParams
from .prior_tails import ThetaPriorSpec
from .samplers import SamplerConfig, draws_to_csv
from .tail_verifier import ModelBundle

SCHEMA_VERSION = 1
SUBSET_ENUMERATION_BUDGET = 10_000_000

GATE_CSV_COLUMNS = ["deletion", "r", "verdict", "detail", "r_a", "r_b", "r_c", "r_star", "binding"]
SCAN_CSV_COLUMNS = ["subset", "r_a", "r_b", "r_c", "r_star"]
KFOLD_CSV_COLUMNS = ["partition", "fold", "size", "r_star", "below_2"]
ESTIMATE_CSV_COLUMNS = [
    "deletion", "measure", "value", "gate", "required_moments",
    "available_r_star", "standard_error", "flags",
]
VERIFY_TAIL_CSV_COLUMNS = ["threshold", "exceedances", "estimate"]
VERIFY_SCALING_CSV_COLUMNS = ["m", "replications", "variance"]


# --- configuration ------------------------------------------------------------


def parse_config_text(text: str) -> dict:
    """Flat `key = value` lines; `#` starts a comment; keys use dotted
    section prefixes. Later duplicates override earlier ones."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        out[key] = value.strip()
    return out


def _as_float_list(raw: str) -> list:
    return [float(tok) for tok in raw.split(",") if tok.strip()]


def _as_int_list(raw: str) -> list:
    return [int(tok) for tok in raw.split(",") if tok.strip()]


def _as_bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("true", "yes", "1"):
        return True
    if lowered in ("false", "no", "0"):
        return False
    raise ConfigError(f"expected a boolean, got {raw!r}")


@dataclass
class RunConfig:
    model: str
    data_path: Path
    raw: dict
    deletion_indices: list | None = None
    scan_size: int | None = None
    kfold_partitions: int | None = None
    kfold_folds: int | None = None
    r_values: list = field(default_factory=lambda: [2.0])
    out_dir: Path = Path(".")
    seed: int = 0

    @staticmethod
    def from_mapping(raw: dict, base_dir: Path) -> "RunConfig":
        try:
            model = raw["model"]
        except KeyError:
            raise ConfigError("missing required key 'model'") from None
        if model not in ("linear", "mm", "logit"):
            raise ConfigError(f"model must be linear|mm|logit, got {model!r}")
        if "data" not in raw:
            raise ConfigError("missing required key 'data'")
        data_path = Path(raw["data"])
        if not data_path.is_absolute():
            data_path = base_dir / data_path
        specs = [k for k in ("deletion.indices", "deletion.scan_size", "deletion.kfold.partitions") if k in raw]
        if len(specs) > 1:
            raise ConfigError(f"exactly one deletion spec allowed, got {specs}")
        cfg = RunConfig(model=model, data_path=data_path, raw=raw)
        if "deletion.indices" in raw:
            cfg.deletion_indices = _as_int_list(raw["deletion.indices"])
        if "deletion.scan_size" in raw:
            cfg.scan_size = int(raw["deletion.scan_size"])
        if "deletion.kfold.partitions" in raw:
            cfg.kfold_partitions = int(raw["deletion.kfold.partitions"])
            cfg.kfold_folds = int(raw.get("deletion.kfold.folds", "5"))
        if "r" in raw:
            cfg.r_values = _as_float_list(raw["r"])
            if any(r <= 1 for r in cfg.r_values):
                raise ConfigError("all r values must exceed 1")
        if "out" in raw:
            out = Path(raw["out"])
            cfg.out_dir = out if out.is_absolute() else base_dir / out
        if "seed" in raw:
            cfg.seed = int(raw["seed"])
        return cfg

    def get(self, key: str, default=None):
        return self.raw.get(key, default)


def load_run_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        mapping = parse_config_text(path.read_text())
    except OSError as exc:
        raise ConfigError(str(exc)) from exc
    return RunConfig.from_mapping(mapping, path.parent.resolve())


def _load_dataset(cfg: RunConfig):
    if cfg.model == "mm":
        schema = MMSchema(
            concentration=cfg.get("data.concentration", "concentration"),
            velocity=cfg.get("data.velocity", "velocity"),
        )
    elif cfg.model == "linear":
        covs = cfg.get("data.covariates")
        if covs is None:
            raise ConfigError("linear model needs data.covariates")
        schema = LinearSchema(
            response=cfg.get("data.response", "y"),
            covariates=tuple(tok.strip() for tok in covs.split(",") if tok.strip()),
            intercept=_as_bool(cfg.get("data.intercept", "true")),
        )
    else:
        covs = cfg.get("data.covariates")
        if covs is None:
            raise ConfigError("logit model needs data.covariates")
        schema = LogitSchema(
            outcome=cfg.get("data.outcome", "y"),
            covariates=tuple(tok.strip() for tok in covs.split(",") if tok.strip()),
            intercept=_as_bool(cfg.get("data.intercept", "true")),
        )
    return load_csv(cfg.data_path, schema)


def _linear_prior(cfg: RunConfig) -> linear_gate.LinearPrior:
    kind = cfg.get("prior.kind", "noninformative")
    if kind == "noninformative":
        return linear_gate.LinearPrior.noninformative()
    if kind != "conjugate":
        raise ConfigError(f"prior.kind must be noninformative|conjugate, got {kind!r}")
    try:
        alpha = float(cfg.get("prior.alpha"))
        beta = float(cfg.get("prior.beta"))
    except (TypeError, ValueError):
        raise ConfigError("conjugate prior needs numeric prior.alpha and prior.beta") from None
    mean_raw = cfg.get("prior.theta.mean")
    cov_raw = cfg.get("prior.theta.cov_diag")
    if mean_raw is None or cov_raw is None:
        raise ConfigError("conjugate prior needs prior.theta.mean and prior.theta.cov_diag")
    mean = np.array(_as_float_list(mean_raw))
    cov = np.diag(_as_float_list(cov_raw))
    return linear_gate.LinearPrior.conjugate(alpha, beta, ThetaPriorSpec.normal(mean, cov))


def _epsilon(cfg: RunConfig) -> float:
    try:
        return float(cfg.get("prior.epsilon", "1.0"))
    except ValueError:
        raise ConfigError("prior.epsilon must be numeric") from None


def _sampler_config(cfg: RunConfig, default_draws=10_000) -> SamplerConfig:
    scale_raw = cfg.get("sampler.scale")
    return SamplerConfig(
        seed=int(cfg.get("sampler.seed", str(cfg.seed))),
        draws=int(cfg.get("sampler.draws", str(default_draws))),
        burn_in=int(cfg.get("sampler.burn_in", "1000")),
        thin=int(cfg.get("sampler.thin", "1")),
        proposal_scale=tuple(_as_float_list(scale_raw)) if scale_raw else None,
    )


def _worker_threads() -> int:
    raw = os.environ.get("INFLUENCE_GATE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


# --- report plumbing -----------------------------------------------------------


def _fmt(v):
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return v


def write_csv_report(path, columns, rows) -> None:
    write_table(path, columns, [[_fmt(v) for v in row] for row in rows])


def validate_report(payload: dict) -> None:
    """Self-check of the JSON report shape before writing."""
    if payload.get("schema_version") != SCHEMA_VERSION:
        raise ValueError("report missing schema_version")
    if not isinstance(payload.get("command"), str):
        raise ValueError("report missing command")
    if not isinstance(payload.get("rows"), list):
        raise ValueError("report rows must be a list")


def _jsonable(v):
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if math.isnan(v):
            return "nan"
    if isinstance(v, (np.floating, np.integer)):
        return _jsonable(v.item())
    return v


def write_json_report(path, command: str, rows: list, extra: dict | None = None) -> None:
    payload = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "rows": [{k: _jsonable(v) for k, v in row.items()} for row in rows],
    }
    if extra:
        payload.update({k: _jsonable(v) if not isinstance(v, dict) else v for k, v in extra.items()})
    validate_report(payload)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def svg_line_plot(path, xs, ys, title: str, xlabel: str, ylabel: str,
                  loglog: bool = True) -> None:
    """Minimal hand-emitted SVG: axes, one polyline, labels."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    keep = np.isfinite(xs) & np.isfinite(ys)
    if loglog:
        keep &= (xs > 0) & (ys > 0)
    xs, ys = xs[keep], ys[keep]
    W, H, pad = 640, 480, 60
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W // 2}" y="24" text-anchor="middle" font-size="16">{title}</text>',
        f'<line x1="{pad}" y1="{H - pad}" x2="{W - pad}" y2="{H - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{H - pad}" stroke="black"/>',
        f'<text x="{W // 2}" y="{H - 16}" text-anchor="middle" font-size="12">{xlabel}</text>',
        f'<text x="18" y="{H // 2}" font-size="12" transform="rotate(-90 18 {H // 2})" '
        f'text-anchor="middle">{ylabel}</text>',
    ]
    if xs.size >= 2:
        tx = np.log10(xs) if loglog else xs
        ty = np.log10(ys) if loglog else ys
        x0, x1 = float(tx.min()), float(tx.max())
        y0, y1 = float(ty.min()), float(ty.max())
        xr = (x1 - x0) or 1.0
        yr = (y1 - y0) or 1.0
        px = pad + (tx - x0) / xr * (W - 2 * pad)
        py = (H - pad) - (ty - y0) / yr * (H - 2 * pad)
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="steelblue" stroke-width="1.5"/>')
        for a, b in zip(px, py):
            parts.append(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="2.5" fill="steelblue"/>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts))


def _subset_label(indices) -> str:
    return "+".join(str(int(i) + 1) for i in indices)


# --- commands -------------------------------------------------------------------


def _deletion_sets_for_gate(cfg: RunConfig, n: int) -> list:
    if cfg.deletion_indices is not None:
        zero_based = [i - 1 for i in cfg.deletion_indices]
        return [deletion_set(zero_based, n)]
    if cfg.scan_size is not None:
        if cfg.scan_size == 0:
            return [deletion_set([], n)]
        if math.comb(n, cfg.scan_size) > SUBSET_ENUMERATION_BUDGET:
            raise BudgetError(
                f"C({n},{cfg.scan_size}) exceeds the enumeration budget {SUBSET_ENUMERATION_BUDGET}"
            )
        from itertools import combinations

        return [deletion_set(c, n) for c in combinations(range(n), cfg.scan_size)]
    raise ConfigError("gate needs deletion.indices or deletion.scan_size")


def cmd_gate(cfg: RunConfig) -> list:
    """Per-deletion-set verdicts and moment cut-offs, written as CSV + JSON."""
    data = _load_dataset(cfg)
    sets = _deletion_sets_for_gate(cfg, data.n)
    rows = []
    if cfg.model == "linear":
        prior = _linear_prior(cfg)
        for dels in sets:
            if dels.cardinality == 0:
                rows.append(_empty_deletion_row(cfg.r_values))
                continue
            rep = linear_gate.moment_index_linear(data, dels, prior)
            for r in cfg.r_values:
                verdict = linear_gate.theorem31_verdict(data, dels, r, prior)
                rows.append(_gate_row(dels, r, verdict, rep))
    elif cfg.model == "mm":
        params = MMScanParams(grid_size=int(cfg.get("scan.grid_size", mm_gate.DEFAULT_GRID_SIZE)))
        for dels in sets:
            if dels.cardinality == 0:
                rows.append(_empty_deletion_row(cfg.r_values))
                continue
            rep = mm_gate.moment_index_mm(data, dels, params)
            for r in cfg.r_values:
                scan = mm_gate.scan_kappa(data, dels, r, params.kmin, params.kmax, params.grid_size)
                verdict = mm_gate.theorem41_verdict(data, dels, r, scan)
                rows.append(_gate_row(dels, r, verdict, rep))
    else:
        epsilon = _epsilon(cfg)
        for dels in sets:
            if dels.cardinality == 0:
                rows.append(_empty_deletion_row(cfg.r_values))
                continue
            rep = logit_gate.moment_index_logit(data, dels, epsilon)
            for r in cfg.r_values:
                verdict = logit_gate.theorem51_verdict(data, dels, r, epsilon)
                rows.append(_gate_row(dels, r, verdict, rep))
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    write_csv_report(out / "gate_report.csv", GATE_CSV_COLUMNS,
                     [[row[c] for c in GATE_CSV_COLUMNS] for row in rows])
    write_json_report(out / "gate_report.json", "gate", rows)
    return rows


def _gate_row(dels, r, verdict, rep) -> dict:
    return {
        "deletion": _subset_label(dels.indices),
        "r": float(r),
        "verdict": verdict.tag.value,
        "detail": verdict.detail,
        "r_a": float(rep.r_a),
        "r_b": float(rep.r_b),
        "r_c": float(rep.r_c),
        "r_star": float(rep.r_star),
        "binding": rep.binding,
    }


def _empty_deletion_row(r_values) -> dict:
    return {
        "deletion": "",
        "r": float(r_values[0]) if r_values else 2.0,
        "verdict": "finite",
        "detail": "empty deletion: weight is constant",
        "r_a": math.inf,
        "r_b": math.inf,
        "r_c": math.inf,
        "r_star": math.inf,
        "binding": "empty deletion",
    }


def _scan_chunk(args):
    design, response, subset_size, prior_kind, alpha, beta, combos = args
    from .core_model import RegressionData

    data = RegressionData(design=design, response=response)
    if prior_kind == "noninformative":
        prior = linear_gate.LinearPrior.noninformative()
    else:
        prior = linear_gate.LinearPrior.conjugate(
            alpha, beta, ThetaPriorSpec.normal(np.zeros(data.k), np.eye(data.k))
        )
    X, y = data.design, data.response
    Q, _ = np.linalg.qr(X)
    H = Q @ Q.T
    e = y - Q @ (Q.T @ y)
    rss = float(e @ e)
    return linear_gate._batched_cutoffs(H, e, rss, np.array(combos, int), data.n, data.k, prior)


def cmd_scan(cfg: RunConfig) -> dict:
    """Enumerate all subsets of the configured size, rank by cut-offs.

    Linear model only (the scanning machinery rides on the closed-form hat
    quantities). Emits the full table plus two rankings and membership
    summaries for flagged cases.
    """
    if cfg.model != "linear":
        raise ConfigError("scan supports the linear model")
    if cfg.scan_size is None:
        raise ConfigError("scan needs deletion.scan_size")
    data = _load_dataset(cfg)
    n, I = data.n, cfg.scan_size
    total = math.comb(n, I)
    if total > SUBSET_ENUMERATION_BUDGET:
        raise BudgetError(f"C({n},{I}) = {total} exceeds budget {SUBSET_ENUMERATION_BUDGET}")
    prior = _linear_prior(cfg)
    workers = _worker_threads()
    if workers > 1:
        from itertools import combinations, islice

        combos = combinations(range(n), I)
        chunks = []
        while True:
            block = list(islice(combos, 200_000))
            if not block:
                break
            chunks.append(block)
        args = [
            (np.asarray(data.design), np.asarray(data.response), I, prior.kind,
             prior.alpha, prior.beta, block)
            for block in chunks
        ]
        subsets, ra, rb, rc, rs = [], [], [], [], []
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for block, out in zip(chunks, pool.map(_scan_chunk, args)):
                subsets.append(np.array(block, int))
                for lst, vec in zip((ra, rb, rc, rs), out):
                    lst.append(vec)
        result = linear_gate.SubsetScanResult(
            subsets=np.concatenate(subsets),
            r_a=np.concatenate(ra), r_b=np.concatenate(rb),
            r_c=np.concatenate(rc), r_star=np.concatenate(rs),
        )
    else:
        result = linear_gate.scan_deletion_subsets(data, I, prior)
    top = int(cfg.get("scan.top", "100"))
    order_a = np.argsort(result.r_a, kind="stable")
    order_c = np.argsort(result.r_c, kind="stable")
    flagged = {}
    if cfg.get("scan.flag_cases"):
        for case in _as_int_list(cfg.get("scan.flag_cases")):
            idx0 = case - 1
            in_a = int(np.sum([idx0 in result.subsets[i] for i in order_a[:top]]))
            in_c = int(np.sum([idx0 in result.subsets[i] for i in order_c[:top]]))
            flagged[str(case)] = {
                f"top{top}_by_r_a": in_a,
                f"top{top}_by_r_c": in_c,
            }
    rows = [
        {
            "subset": _subset_label(result.subsets[i]),
            "r_a": float(result.r_a[i]),
            "r_b": float(result.r_b[i]),
            "r_c": float(result.r_c[i]),
            "r_star": float(result.r_star[i]),
        }
        for i in range(result.count)
    ]
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    write_csv_report(out / "scan_report.csv", SCAN_CSV_COLUMNS,
                     [[row[c] for c in SCAN_CSV_COLUMNS] for row in rows])
    summary = {
        "subset_count": result.count,
        "ranking_by_r_a": [_subset_label(result.subsets[i]) for i in order_a[:top]],
        "ranking_by_r_c": [_subset_label(result.subsets[i]) for i in order_c[:top]],
        "flagged_cases": flagged,
    }
    write_json_report(out / "scan_report.json", "scan", rows, extra=summary)
    return summary


def cmd_kfold_audit(cfg: RunConfig) -> dict:
    """Random-partition audit: per-fold moment indices and CLT-failure counts."""
    if cfg.model != "linear":
        raise ConfigError("kfold audit supports the linear model")
    if cfg.kfold_partitions is None:
        raise ConfigError("kfold needs deletion.kfold.partitions")
    data = _load_dataset(cfg)
    prior = _linear_prior(cfg)
    n = data.n
    folds = cfg.kfold_folds
    if not 2 <= folds <= n:
        raise ConfigError(f"fold count must be in [2, {n}]")
    rng = np.random.default_rng(cfg.seed)
    rows = []
    count_ge1 = 0
    count_ge2 = 0
    for p in range(cfg.kfold_partitions):
        perm = rng.permutation(n)
        parts = [sorted(perm[f::folds].tolist()) for f in range(folds)]
        rstars = linear_gate.fold_moment_indices(data, parts, prior)
        below = int(np.sum(rstars < 2.0))
        count_ge1 += below >= 1
        count_ge2 += below >= 2
        for f, (fold, rs) in enumerate(zip(parts, rstars)):
            rows.append(
                {
                    "partition": p + 1,
                    "fold": f + 1,
                    "size": len(fold),
                    "r_star": float(rs),
                    "below_2": bool(rs < 2.0),
                }
            )
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    write_csv_report(out / "kfold_report.csv", KFOLD_CSV_COLUMNS,
                     [[row[c] for c in KFOLD_CSV_COLUMNS] for row in rows])
    summary = {
        "partitions": cfg.kfold_partitions,
        "folds": folds,
        "partitions_with_ge1_fold_below_2": int(count_ge1),
        "partitions_with_ge2_folds_below_2": int(count_ge2),
    }
    write_json_report(out / "kfold_report.json", "kfold", rows, extra=summary)
    return summary


_MM_MEASURE_DEFAULTS = "kl,hellinger,chisq,cpo"


def cmd_estimate(cfg: RunConfig) -> list:
    """Draw from the posterior and estimate the requested measures with gates.

    Blocked measures carry the blocking requirement; the report repeats the
    standing advice that a mixture of the full and case-deleted posteriors
    restores a CLT when the gate blocks (mixture sampling itself is out of
    scope here).
    """
    data = _load_dataset(cfg)
    measures = [
        tok.strip() for tok in cfg.get("measures", _MM_MEASURE_DEFAULTS).split(",") if tok.strip()
    ]
    sampler_cfg = _sampler_config(cfg)
    if cfg.deletion_indices is None:
        raise ConfigError("estimate needs deletion.indices")
    dels = deletion_set([i - 1 for i in cfg.deletion_indices], data.n)
    if cfg.model == "linear":
        prior = _linear_prior(cfg)
        bundle = ModelBundle(model="linear", data=data, prior=prior)
        report = (
            linear_gate.moment_index_linear(data, dels, prior)
            if dels.cardinality
            else _empty_report()
        )
    elif cfg.model == "mm":
        bundle = ModelBundle(
            model="mm", data=data,
            kappa_prior=KappaPriorSpec(scale=float(cfg.get("prior.kappa.scale", "1.0"))),
        )
        report = (
            mm_gate.moment_index_mm(data, dels) if dels.cardinality else _empty_report()
        )
    else:
        epsilon = _epsilon(cfg)
        bundle = ModelBundle(
            model="logit", data=data,
            prior=ThetaPriorSpec.laplace(np.zeros(data.k), 1.0 / epsilon),
        )
        report = (
            logit_gate.moment_index_logit(data, dels, epsilon)
            if dels.cardinality
            else _empty_report()
        )
    result = bundle.sample(sampler_cfg)
    lw = is_engine.log_weight(cfg.model, result.draws, data, dels)
    sample = is_engine.WeightedSample(model=cfg.model, draws=result.draws, log_weights=np.atleast_1d(lw))
    gate = is_engine.GateInputs(report=report)
    coord = int(cfg.get("estimate.coord", "1")) - 1
    rows = []
    for measure in measures:
        aux = is_engine.MeasureAux(
            coord=coord if measure in ("delta1", "delta2") else None,
            deleted_log_lik=(
                is_engine.deleted_log_likelihood(cfg.model, result.draws, data, dels)
                if measure == "cpo"
                else None
            ),
        )
        est = is_engine.estimate_measure(sample, measure, gate, aux)
        rows.append(
            {
                "deletion": _subset_label(dels.indices),
                "measure": measure,
                "value": est.value,
                "gate": "passed" if est.gate_passed else "blocked",
                "required_moments": est.required_moments,
                "available_r_star": est.available_r_star,
                "standard_error": est.standard_error if est.standard_error is not None else "",
                "flags": ";".join(est.flags),
            }
        )
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    write_csv_report(out / "estimates.csv", ESTIMATE_CSV_COLUMNS,
                     [[row[c] for c in ESTIMATE_CSV_COLUMNS] for row in rows])
    advisory = (
        "blocked measures lack a CLT at this deletion; sampling from a mixture of "
        "the full and case-deleted posteriors restores one (not performed here)"
        if any(row["gate"] == "blocked" for row in rows)
        else ""
    )
    write_json_report(out / "estimates.json", "estimate", rows,
                      extra={"advisory": advisory, "acceptance_rate": result.acceptance_rate})
    if _as_bool(cfg.get("sampler.export_draws", "false")):
        draws_to_csv(out / "draws.csv", cfg.model, result.draws)
    return rows


def _empty_report():
    from .core_model import MomentIndexReport

    return MomentIndexReport(r_a=math.inf, r_b=math.inf, r_c=math.inf, binding="empty deletion")


def cmd_verify(cfg: RunConfig) -> dict:
    """Tail-index and variance-scaling audit against the analytic verdicts."""
    data = _load_dataset(cfg)
    if cfg.deletion_indices is None:
        raise ConfigError("verify needs deletion.indices")
    dels = deletion_set([i - 1 for i in cfg.deletion_indices], data.n)
    sampler_cfg = _sampler_config(cfg, default_draws=100_000)
    if cfg.model == "linear":
        prior = _linear_prior(cfg)
        bundle = ModelBundle(model="linear", data=data, prior=prior)
        report = linear_gate.moment_index_linear(data, dels, prior) if dels.cardinality else _empty_report()
    elif cfg.model == "mm":
        bundle = ModelBundle(model="mm", data=data, kappa_prior=KappaPriorSpec())
        report = mm_gate.moment_index_mm(data, dels) if dels.cardinality else _empty_report()
    else:
        epsilon = _epsilon(cfg)
        bundle = ModelBundle(model="logit", data=data,
                             prior=ThetaPriorSpec.laplace(np.zeros(data.k), 1.0 / epsilon))
        report = logit_gate.moment_index_logit(data, dels, epsilon) if dels.cardinality else _empty_report()
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    tail = tail_verifier.verify_moment_index(
        bundle, dels, report, sampler_cfg, out_csv=out / "verify_tail.csv"
    )
    m_grid = _as_int_list(cfg.get("verify.m_grid", "1000,4000,16000,64000"))
    reps = int(cfg.get("verify.replications", "50"))

    def estimator(m, rng):
        sub = SamplerConfig(
            seed=int(rng.integers(0, 2**63 - 1)), draws=m,
            burn_in=sampler_cfg.burn_in, thin=1, proposal_scale=sampler_cfg.proposal_scale,
        )
        res = bundle.sample(sub)
        lw = is_engine.log_weight(cfg.model, res.draws, data, dels)
        return is_engine.self_normalized_estimate(np.atleast_1d(lw), res.draws[:, 0])

    scaling = tail_verifier.clt_scaling_audit(estimator, m_grid, reps, seed=cfg.seed)
    write_csv_report(
        out / "verify_scaling.csv", VERIFY_SCALING_CSV_COLUMNS,
        [[m, reps, v] for m, v in zip(scaling.m_grid, scaling.variance_at_m)],
    )
    summary = {
        "hill_estimate": tail.hill_estimate,
        "regression_index": tail.regression_index,
        "analytic_r_star": tail.analytic_r_star,
        "agreement": tail.agreement,
        "degenerate": tail.degenerate,
        "loglog_slope": scaling.loglog_slope,
    }
    write_json_report(out / "verify_report.json", "verify", [summary])
    if not tail.degenerate:
        try:
            import csv as _csv

            with open(out / "verify_tail.csv") as fh:
                rows = list(_csv.DictReader(fh))
            thr = [float(r["threshold"]) for r in rows]
            # survival probability = exceedances / draws
            surv = [int(r["exceedances"]) / sampler_cfg.draws for r in rows]
            svg_line_plot(out / "verify_survival.svg", thr, surv,
                          "weight survival function", "threshold", "P(W > t)")
        except OSError:
            pass
        if scaling.loglog_slope is not None:
            svg_line_plot(out / "verify_scaling.svg", scaling.m_grid, scaling.variance_at_m,
                          "estimator variance scaling", "draws", "variance")
    return summary


# --- entry point ----------------------------------------------------------------


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="influence-gate",
        description="Moment gates and CLT diagnostics for case-deletion importance sampling",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("gate", "scan", "kfold", "estimate", "verify"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="flat key=value config file")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--out", default=None, help="override output directory")
    args = parser.parse_args(argv)
    try:
        cfg = load_run_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out is not None:
            cfg.out_dir = Path(args.out)
        dispatch = {
            "gate": cmd_gate,
            "scan": cmd_scan,
            "kfold": cmd_kfold_audit,
            "estimate": cmd_estimate,
            "verify": cmd_verify,
        }
        dispatch[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except BudgetError as exc:
        print(f"budget error: {exc}", file=sys.stderr)
        return 4
    except (SamplerError, DegenerateSampleError) as exc:
        print(f"sampler error: {exc}", file=sys.stderr)
        return 5
    except InfluenceGateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
