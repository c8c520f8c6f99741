"""Experiment orchestration: instance generation, pipelines, and reports.

Everything here is deterministic in (config, seed).  Randomness comes from
counter-based Philox streams keyed by the seed and a fixed per-purpose
stream id, so reports never depend on thread count or call order.  This is
the only module that touches files or the process environment.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Any

import numpy as np

from . import bidecoder, corrector, geometry, ldt
from .algebra import MultiPoly, PrimeField, enumerate_support, is_prime

SCHEMA_VERSION = 1
CODE_VERSION = "0.1.0"

# Philox stream ids.  One stream per purpose; the instance generator and the
# decoder grids must never share a counter sequence.
STREAM_IDS = {
    "ground-truth": 0x6F17,  # planted polynomial coefficients
    "noise": 0x11A2,  # corruption positions and replacement values
    "grid": 0x6B1D,  # structured grid sampling (bidecoder)
    "sampling": 0x1D7,  # Monte Carlo acceptance estimates (ldt)
}

PIPELINES = ("ldt", "decode2", "decodem", "correct", "spectra", "count")
NOISE_KINDS = (
    "exact",
    "random_corrupt",
    "planted_agreement",
    "mixture",
    "structured_rows",
)


class ConfigError(ValueError):
    """Invalid configuration; maps to exit code 2 at the CLI."""


def _rat(value: Any, what: str) -> Fraction:
    """Rational from int, 'a/b' string, or {num, den} mapping."""
    try:
        if isinstance(value, bool):
            raise TypeError
        if isinstance(value, dict):
            return Fraction(int(value["num"]), int(value["den"]))
        if isinstance(value, (int, str, Fraction)):
            return Fraction(value)
    except (TypeError, ValueError, KeyError, ZeroDivisionError):
        pass
    raise ConfigError(f"{what} must be an integer, 'a/b' string, or {{num, den}}")


def _rat_dict(f: Fraction) -> dict[str, int]:
    return {"num": f.numerator, "den": f.denominator}


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: field size, degree bound, noise model, and pipeline.

    thresholds holds rational knobs (eps, delta, delta_list, ...), budgets
    holds positive integer limits, and options holds pipeline-specific
    extras (count's D and p, spectra's graph kinds, best_effort flags).
    """

    q: int
    m: int
    d: int
    pipeline: str
    noise: dict[str, Any] = field(default_factory=lambda: {"kind": "exact"})
    seeds: tuple[int, ...] = (0,)
    thresholds: dict[str, Fraction] = field(default_factory=dict)
    budgets: dict[str, int] = field(default_factory=dict)
    options: dict[str, Any] = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self) -> None:
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version}")
        if not is_prime(self.q):
            raise ConfigError("q must be prime")
        if not 1 <= self.d < self.q:
            raise ConfigError("need 1 <= d < q")
        if self.m < 1:
            raise ConfigError("m must be positive")
        if self.pipeline not in PIPELINES:
            raise ConfigError(f"unknown pipeline {self.pipeline!r}")
        if self.pipeline in ("ldt", "decode2", "decodem", "correct") and self.m < 2:
            raise ConfigError(f"pipeline {self.pipeline} needs m >= 2")
        if self.pipeline == "decode2" and self.m != 2:
            raise ConfigError("decode2 needs m = 2")
        if not self.seeds:
            raise ConfigError("need at least one seed")
        if any(not isinstance(s, int) or s < 0 for s in self.seeds):
            raise ConfigError("seeds must be non-negative integers")
        kind = self.noise.get("kind")
        if kind not in NOISE_KINDS:
            raise ConfigError(f"unknown noise model {kind!r}")
        if kind == "random_corrupt":
            delta = self.noise.get("delta")
            if delta is None or not 0 <= delta <= 1:
                raise ConfigError("random_corrupt needs delta in [0, 1]")
        if kind == "planted_agreement":
            eps = self.noise.get("eps")
            if eps is None or not 0 <= eps <= 1:
                raise ConfigError("planted_agreement needs eps in [0, 1]")
        if kind == "mixture":
            weights = self.noise.get("weights") or []
            if not weights or any(w < 0 for w in weights) or sum(weights) > 1:
                raise ConfigError("mixture weights must be nonnegative and sum to <= 1")
        if kind == "structured_rows":
            rho = self.noise.get("rho", Fraction(1, 2))
            if not 0 < rho <= 1:
                raise ConfigError("structured_rows needs rho in (0, 1]")
        for k, v in self.budgets.items():
            if not isinstance(v, int) or v <= 0:
                raise ConfigError(f"budget {k} must be a positive integer")

    def to_dict(self) -> dict[str, Any]:
        noise = {"kind": self.noise["kind"]}
        for k, v in self.noise.items():
            if k == "kind":
                continue
            if k == "weights":
                noise[k] = [_rat_dict(Fraction(w)) for w in v]
            elif isinstance(v, Fraction):
                noise[k] = _rat_dict(v)
            else:
                noise[k] = v
        return {
            "schema_version": self.schema_version,
            "q": self.q,
            "m": self.m,
            "d": self.d,
            "pipeline": self.pipeline,
            "noise": noise,
            "seeds": list(self.seeds),
            "thresholds": {k: _rat_dict(v) for k, v in sorted(self.thresholds.items())},
            "budgets": dict(sorted(self.budgets.items())),
            "options": dict(sorted(self.options.items())),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        known = {
            "schema_version",
            "q",
            "m",
            "d",
            "pipeline",
            "noise",
            "seeds",
            "thresholds",
            "budgets",
            "options",
        }
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        try:
            q = int(data["q"])
            m = int(data["m"])
            d = int(data["d"])
            pipeline = str(data["pipeline"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError("config needs integer q, m, d and a pipeline") from exc
        raw_noise = data.get("noise", {"kind": "exact"})
        noise: dict[str, Any] = {"kind": raw_noise.get("kind")}
        for k, v in raw_noise.items():
            if k == "kind":
                continue
            if k == "weights":
                noise[k] = [_rat(w, "mixture weight") for w in v]
            elif k in ("delta", "eps", "rho"):
                noise[k] = _rat(v, f"noise {k}")
            else:
                noise[k] = v
        thresholds = {
            str(k): _rat(v, f"threshold {k}")
            for k, v in (data.get("thresholds") or {}).items()
        }
        budgets = {str(k): int(v) for k, v in (data.get("budgets") or {}).items()}
        seeds = tuple(int(s) for s in data.get("seeds", [0]))
        return cls(
            q=q,
            m=m,
            d=d,
            pipeline=pipeline,
            noise=noise,
            seeds=seeds,
            thresholds=thresholds,
            budgets=budgets,
            options=dict(data.get("options") or {}),
            schema_version=int(data.get("schema_version", SCHEMA_VERSION)),
        )


# ---------------------------------------------------------------------------
# instance generation


def _stream(seed: int, name: str) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[seed, STREAM_IDS[name]]))


def _random_poly(rng: np.random.Generator, q: int, m: int, d: int) -> MultiPoly:
    support = sorted(e for e in product(range(d + 1), repeat=m) if sum(e) <= d)
    coeffs = rng.integers(0, q, size=len(support))
    terms = {e: int(c) for e, c in zip(support, coeffs) if int(c)}
    return MultiPoly(PrimeField(q), m, terms)


def _redraw_collisions(
    rng: np.random.Generator, draws: np.ndarray, forbidden: np.ndarray, q: int
) -> np.ndarray:
    """Redraw entries of draws that equal the forbidden value at their slot."""
    bad = draws == forbidden
    while bad.any():
        draws[bad] = rng.integers(0, q, size=int(bad.sum()))
        bad = draws == forbidden
    return draws


def plant_instance(
    cfg: ExperimentConfig, seed: int
) -> tuple[ldt.PointsTable, list[MultiPoly]]:
    """Tables realizing the configured noise model, exactly and per seed.

    random_corrupt(delta) flips exactly ceil(delta * q^m) positions to
    uniformly random different values; planted_agreement(eps) keeps the
    planted value on exactly ceil(eps * q^m) positions and redraws any
    accidental match elsewhere, so the planted agreement is the count
    itself.  mixture hands each polynomial a floor-rounded share of a random
    permutation; structured_rows keeps ceil(rho * q) full hyperplane slices
    clean and fills the rest with redraw-on-match noise.
    """
    q, m, d = cfg.q, cfg.m, cfg.d
    n = q**m
    rng_poly = _stream(seed, "ground-truth")
    rng_noise = _stream(seed, "noise")
    kind = cfg.noise["kind"]

    if kind == "mixture":
        truths = [_random_poly(rng_poly, q, m, d) for _ in cfg.noise["weights"]]
    else:
        truths = [_random_poly(rng_poly, q, m, d)]
    tables = [ldt.PointsTable.from_polynomial(q, m, d, P).values for P in truths]

    if kind == "exact":
        vals = tables[0].copy()
    elif kind == "random_corrupt":
        delta = Fraction(cfg.noise["delta"])
        k = -(-delta.numerator * n // delta.denominator)
        vals = tables[0].copy()
        pos = rng_noise.choice(n, size=k, replace=False)
        draws = rng_noise.integers(0, q, size=k)
        vals[pos] = _redraw_collisions(rng_noise, draws, tables[0][pos], q)
    elif kind == "planted_agreement":
        eps = Fraction(cfg.noise["eps"])
        k = -(-eps.numerator * n // eps.denominator)
        perm = rng_noise.permutation(n)
        keep, rest = perm[:k], perm[k:]
        vals = np.empty(n, dtype=np.int64)
        vals[keep] = tables[0][keep]
        draws = rng_noise.integers(0, q, size=rest.size)
        vals[rest] = _redraw_collisions(rng_noise, draws, tables[0][rest], q)
    elif kind == "mixture":
        weights = [Fraction(w) for w in cfg.noise["weights"]]
        perm = rng_noise.permutation(n)
        vals = np.empty(n, dtype=np.int64)
        edges = [0]
        acc = Fraction(0)
        for w in weights:
            acc += w
            edges.append((acc.numerator * n) // acc.denominator)
        for i, tab in enumerate(tables):
            seg = perm[edges[i] : edges[i + 1]]
            vals[seg] = tab[seg]
        tail = perm[edges[-1] :]
        draws = rng_noise.integers(0, q, size=tail.size)
        hit = np.zeros(tail.size, dtype=bool)
        for tab in tables:
            hit |= draws == tab[tail]
        while hit.any():
            draws[hit] = rng_noise.integers(0, q, size=int(hit.sum()))
            hit = np.zeros(tail.size, dtype=bool)
            for tab in tables:
                hit |= draws == tab[tail]
        vals[tail] = draws
    elif kind == "structured_rows":
        rho = Fraction(cfg.noise.get("rho", Fraction(1, 2)))
        nrows = -(-rho.numerator * q // rho.denominator)
        rows = rng_noise.choice(q, size=nrows, replace=False)
        first = np.arange(n, dtype=np.int64) // (q ** (m - 1))
        clean = np.isin(first, rows)
        vals = np.empty(n, dtype=np.int64)
        vals[clean] = tables[0][clean]
        noisy = np.nonzero(~clean)[0]
        draws = rng_noise.integers(0, q, size=noisy.size)
        vals[noisy] = _redraw_collisions(rng_noise, draws, tables[0][noisy], q)
    else:  # pragma: no cover - rejected by config validation
        raise ConfigError(f"unknown noise model {kind!r}")
    return ldt.PointsTable(q, m, d, vals), truths


# ---------------------------------------------------------------------------
# reports


@dataclass
class TestReport:
    """Machine-readable outcome of one (config, seed) run.

    Wall-clock values are measurements, not part of the deterministic
    content; the default emission drops them so byte comparison across runs
    and thread counts works.
    """

    config: dict[str, Any]
    seed: int
    pipeline: str
    stages: list[dict[str, Any]]
    results: list[dict[str, Any]]
    errors: list[dict[str, str]]
    acceptance: Fraction | None = None
    delta_global: Fraction | None = None
    schema_version: int = SCHEMA_VERSION
    code_version: str = CODE_VERSION

    def to_dict(self, include_timings: bool = False) -> dict[str, Any]:
        stages = []
        for st in self.stages:
            entry = {
                "name": st["name"],
                "status": st["status"],
                "metrics": st.get("metrics", {}),
            }
            if include_timings:
                entry["wall_clock"] = st.get("wall_clock", 0.0)
            stages.append(entry)
        out: dict[str, Any] = {
            "schema_version": self.schema_version,
            "code_version": self.code_version,
            "config": self.config,
            "seed": self.seed,
            "pipeline": self.pipeline,
            "stages": stages,
            "results": self.results,
            "errors": self.errors,
            "acceptance": None if self.acceptance is None else _rat_dict(self.acceptance),
            "delta_global": None
            if self.delta_global is None
            else _rat_dict(self.delta_global),
        }
        return out


def emit_report(
    report: TestReport, format: str = "json", include_timings: bool = False
) -> bytes:
    """Serialize a report with stable field order; rationals as {num, den}."""
    if format == "json":
        text = json.dumps(
            report.to_dict(include_timings), sort_keys=True, separators=(",", ":")
        )
        return (text + "\n").encode("ascii")
    if format == "csv":
        cfg = report.config
        rows = ["seed,pipeline,q,m,d,index,agreement_num,agreement_den,coeffs"]
        for i, res in enumerate(report.results):
            coeffs = ";".join(
                " ".join(str(v) for v in term) for term in res["coeffs"]
            )
            rows.append(
                f"{report.seed},{report.pipeline},{cfg['q']},{cfg['m']},{cfg['d']},"
                f"{i},{res['agreement_num']},{res['agreement_den']},{coeffs}"
            )
        return ("\n".join(rows) + "\n").encode("ascii")
    raise ConfigError(f"unknown report format {format!r}")


def parse_report(data: bytes) -> TestReport:
    """Inverse of emit_report for the JSON format."""
    obj = json.loads(data.decode("ascii"))
    stages = []
    for st in obj["stages"]:
        entry = {"name": st["name"], "status": st["status"], "metrics": st["metrics"]}
        if "wall_clock" in st:
            entry["wall_clock"] = st["wall_clock"]
        stages.append(entry)
    def unrat(v):
        return None if v is None else Fraction(v["num"], v["den"])
    return TestReport(
        config=obj["config"],
        seed=obj["seed"],
        pipeline=obj["pipeline"],
        stages=stages,
        results=obj["results"],
        errors=obj["errors"],
        acceptance=unrat(obj["acceptance"]),
        delta_global=unrat(obj["delta_global"]),
        schema_version=obj["schema_version"],
        code_version=obj["code_version"],
    )


def _poly_terms(poly: MultiPoly) -> list[list[int]]:
    return [[*exps, int(c)] for exps, c in sorted(poly.terms.items())]


def _result_entry(poly: MultiPoly, agreement: Fraction) -> dict[str, Any]:
    return {
        "coeffs": _poly_terms(poly),
        "agreement_num": agreement.numerator,
        "agreement_den": agreement.denominator,
    }


# ---------------------------------------------------------------------------
# pipelines


def _decode2_params(cfg: ExperimentConfig, seed: int) -> dict[str, Any]:
    params: dict[str, Any] = {"seed": seed}
    if "agreement_floor" in cfg.thresholds:
        params["agreement_floor"] = cfg.thresholds["agreement_floor"]
    for key in ("max_centers", "grid_tries"):
        if key in cfg.budgets:
            params[key] = cfg.budgets[key]
    return params


def _decodem_params(cfg: ExperimentConfig) -> dict[str, Any]:
    params: dict[str, Any] = {}
    for key in ("delta_list", "profile_threshold", "mu", "gamma", "delta0"):
        if key in cfg.thresholds:
            params[key] = cfg.thresholds[key]
    if "nonunique_exponent" in cfg.budgets:
        params["nonunique_exponent"] = cfg.budgets["nonunique_exponent"]
    for key, name in (
        ("max_advice", "max_advice"),
        ("max_iters", "max_iters"),
        ("list_budget", "budget"),
    ):
        if key in cfg.budgets:
            params[name] = cfg.budgets[key]
    if cfg.options.get("best_effort"):
        params["best_effort"] = True
    return params


def run_experiment(cfg: ExperimentConfig, seed: int) -> TestReport:
    """Run the configured pipeline for one seed.

    Stage errors land in the report's errors list rather than raising; the
    CLI turns them into nonzero exit codes.
    """
    report = TestReport(
        config=cfg.to_dict(),
        seed=seed,
        pipeline=cfg.pipeline,
        stages=[],
        results=[],
        errors=[],
    )

    def run_stage(name, fn):
        t0 = time.perf_counter()
        try:
            out = fn()
            status = "ok"
            err = None
        except Exception as exc:  # recorded, not raised
            out = None
            status = "error"
            err = exc
        report.stages.append(
            {
                "name": name,
                "status": status,
                "metrics": {},
                "wall_clock": time.perf_counter() - t0,
            }
        )
        if err is not None:
            report.errors.append(
                {"stage": name, "type": type(err).__name__, "message": str(err)}
            )
        return out

    def append_trace(trace):
        for st in trace:
            report.stages.append(
                {
                    "name": st["name"],
                    "status": st["status"],
                    "metrics": st["metrics"],
                    "wall_clock": 0.0,
                }
            )

    eps = cfg.thresholds.get("eps")

    if cfg.pipeline == "count":
        def do_count():
            D = int(cfg.options.get("D", cfg.d))
            p = int(cfg.options.get("p", cfg.q))
            restricted = bool(cfg.options.get("restricted", True))
            sup = enumerate_support(cfg.d, D, p, restricted=restricted)
            return {
                "d": cfg.d,
                "D": D,
                "p": p,
                "restricted": restricted,
                "size": len(sup.members),
            }
        metrics = run_stage("count", do_count)
        if metrics is not None:
            report.stages[-1]["metrics"] = metrics
        return report

    if cfg.pipeline == "spectra":
        def do_spectra():
            kinds = cfg.options.get("graphs")
            if kinds is None:
                kinds = ["points-lines"]
                if cfg.m >= 3:
                    kinds += ["points-planes", "lines-planes", "lines-planes-through-x"]
            out = []
            for kind in kinds:
                g = geometry.incidence_graph(cfg.q, cfg.m, kind)
                lam = geometry.second_eigenvalue(g)
                out.append(
                    (
                        kind,
                        {
                            "lambda": lam,
                            "left_degree": g.left_degree,
                            "right_degree": g.right_degree,
                        },
                    )
                )
            return out
        out = run_stage("spectra", do_spectra)
        for kind, metrics in out or []:
            report.stages.append(
                {
                    "name": f"spectra:{kind}",
                    "status": "ok",
                    "metrics": metrics,
                    "wall_clock": 0.0,
                }
            )
        return report

    plant = run_stage("plant", lambda: plant_instance(cfg, seed))
    if plant is None:
        return report
    table, truths = plant
    report.stages[-1]["metrics"] = {
        "noise": cfg.noise["kind"],
        "n_points": table.n_points,
    }

    if cfg.pipeline == "ldt":
        def do_ldt():
            oracle = ldt.canonical_oracle(table)
            accept = ldt.accept_prob_exact(table, oracle)
            dglob = corrector.delta_f(table, oracle)
            mism = cfg.q - oracle.agreements
            report.acceptance = accept
            report.delta_global = dglob
            return {
                "accept_num": accept.numerator,
                "accept_den": accept.denominator,
                "delta_num": dglob.numerator,
                "delta_den": dglob.denominator,
                "line_delta_max_num": int(mism.max()),
                "line_delta_max_den": cfg.q,
            }
        metrics = run_stage("test", do_ldt)
        if metrics is not None:
            report.stages[-1]["metrics"] = metrics

    elif cfg.pipeline == "decode2":
        trace: list[dict] = []

        def do_decode2():
            if eps is None:
                raise ConfigError("decode2 needs thresholds.eps")
            return bidecoder.decode_bivariate(table, eps, _decode2_params(cfg, seed), trace)

        out = run_stage("decode2", do_decode2)
        append_trace(trace)
        if out is not None:
            report.results = [_result_entry(p, a) for p, a in out]

    elif cfg.pipeline == "decodem":
        trace = []

        def do_decodem():
            if eps is None:
                raise ConfigError("decodem needs thresholds.eps")
            return corrector.decode_multivariate(table, eps, _decodem_params(cfg), trace)

        out = run_stage("decodem", do_decodem)
        append_trace(trace)
        if out is not None:
            report.results = [_result_entry(p, a) for p, a in out]

    elif cfg.pipeline == "correct":
        def do_correct():
            max_iters = cfg.budgets.get("max_iters", 16)
            delta0 = cfg.thresholds.get("delta0", Fraction(1, 4))
            oracle = ldt.canonical_oracle(table)
            report.acceptance = ldt.accept_prob_exact(table, oracle)
            report.delta_global = corrector.delta_f(table, oracle)
            res = corrector.iterate_correct(table, max_iters, delta0, first_oracle=oracle)
            if res is None:
                return {"converged": False}
            poly, iters = res
            evals = ldt.PointsTable.from_polynomial(cfg.q, cfg.m, cfg.d, poly).values
            agree = Fraction(int((evals == table.values).sum()), table.n_points)
            report.results = [_result_entry(poly, agree)]
            return {"converged": True, "iterations": iters}
        metrics = run_stage("correct", do_correct)
        if metrics is not None:
            report.stages[-1]["metrics"] = metrics

    return report


def thread_count() -> int:
    """Worker cap from LDTLAB_THREADS; defaults to 1."""
    raw = os.environ.get("LDTLAB_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError("LDTLAB_THREADS must be an integer") from None
    return max(1, n)


def run_many(cfg: ExperimentConfig, threads: int | None = None) -> list[TestReport]:
    """All seeds of the config, in config order, regardless of worker count."""
    workers = threads if threads is not None else thread_count()
    if workers <= 1 or len(cfg.seeds) <= 1:
        return [run_experiment(cfg, s) for s in cfg.seeds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(run_experiment, cfg, s) for s in cfg.seeds]
        return [f.result() for f in futures]


# ---------------------------------------------------------------------------
# canned configurations


def preset(name: str) -> list[ExperimentConfig]:
    """Named desk-scale configurations (a preset may expand to several)."""
    if name == "tiny":
        return [
            ExperimentConfig(
                q=5,
                m=2,
                d=1,
                pipeline="ldt",
                noise={"kind": "random_corrupt", "delta": Fraction(1, 10)},
                seeds=(1, 2, 3),
            )
        ]
    if name == "bi":
        return [
            ExperimentConfig(
                q=101,
                m=2,
                d=2,
                pipeline="decode2",
                noise={"kind": "planted_agreement", "eps": Fraction(2, 5)},
                seeds=(1, 2, 3),
                thresholds={"eps": Fraction(1, 5)},
            )
        ]
    if name == "multi":
        return [
            ExperimentConfig(
                q=31,
                m=3,
                d=1,
                pipeline="decodem",
                noise={"kind": "planted_agreement", "eps": Fraction(2, 5)},
                seeds=(1,),
                thresholds={
                    "eps": Fraction(3, 40),
                    "delta_list": Fraction(3, 10),
                    "profile_threshold": Fraction(2, 5),
                },
            )
        ]
    if name == "spectra":
        return [
            ExperimentConfig(q=3, m=3, pipeline="spectra", d=1, seeds=(0,)),
            ExperimentConfig(q=5, m=3, pipeline="spectra", d=1, seeds=(0,)),
            ExperimentConfig(q=7, m=2, pipeline="spectra", d=1, seeds=(0,)),
        ]
    raise ConfigError(f"unknown preset {name!r}")


PRESET_NAMES = ("tiny", "bi", "multi", "spectra")
