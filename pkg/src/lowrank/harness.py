"""Problem generation, experiment runs and convergence summaries."""

import dataclasses
import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import io as lrio
from .completion import CompletionProblem, altmin_complete, incoherence_of
from .errors import ConfigInvalid, InsufficientTrace
from .linalg import SvdResult, qr_decompose
from .operators import apply_sensing, gaussian_ensemble, make_rng, partition_omega, sample_omega
from .sensing import ConvergenceTrace, SolverConfig, altmin_sense, stage_altmin

# Distances at or below this are roundoff and excluded from decay statistics.
DECAY_FLOOR = 1e-10
SENSING_SOLVERS = ("altmin", "stage", "altmin-orth")
PARTITION_SCHEMES = ("disjoint", "shared")
SEED_ENV = "LOWRANK_SEED"


def default_seed():
    return int(os.environ.get(SEED_ENV, 0))


def derive_seeds(seed, count):
    """Independent integer seeds for the stochastic stages of one experiment."""
    state = np.random.SeedSequence(int(seed)).generate_state(count, dtype=np.uint32)
    return [int(s) for s in state]


@dataclass
class ProblemInstance:
    M: np.ndarray
    truth: SvdResult
    kappa: float
    mu: float
    seed: int


def generate_problem(m, n, k, kappa, seed):
    """Rank-``k`` matrix with singular values spaced geometrically from ``kappa`` to 1.

    Singular vectors are orthonormalized Gaussian factors; ``mu`` is the
    larger of the two sides' incoherence.
    """
    if not 1 <= k <= min(m, n):
        raise ValueError(f"k={k} must lie in [1, {min(m, n)}]")
    if kappa < 1:
        raise ValueError("kappa must be >= 1")
    rng = make_rng(seed)
    U, _ = qr_decompose(rng.standard_normal((m, k)))
    V, _ = qr_decompose(rng.standard_normal((n, k)))
    sigma = np.geomspace(kappa, 1.0, k) if k > 1 else np.array([float(kappa)])
    sigma[0], sigma[-1] = kappa, 1.0
    truth = SvdResult(U, sigma, V)
    mu = max(incoherence_of(U).mu, incoherence_of(V).mu)
    return ProblemInstance(truth.matrix(), truth, float(sigma[0] / sigma[-1]), mu, int(seed))


def measurement_count(k, n, d_mult):
    """``d = c * k * n * ceil(ln n)``, rounded up."""
    return int(math.ceil(d_mult * k * n * math.ceil(math.log(n))))


def decay_summary(dist, floor=DECAY_FLOOR):
    """Geometric-decay statistics of a positive sequence.

    Returns per-step ratios, the first index at or below ``floor`` (None if
    never reached) and the least-squares slope of ``log10(dist)`` against the
    index over the pre-floor prefix.
    """
    d = np.asarray(dist, dtype=float)
    if d.size < 3 or np.any(np.isnan(d)):
        raise InsufficientTrace("need at least 3 distance values")
    hit = np.nonzero(d <= floor)[0]
    floor_iter = int(hit[0]) if hit.size else None
    pre = d if floor_iter is None else d[:floor_iter]
    ratios = pre[1:] / pre[:-1] if pre.size > 1 else np.array([])
    if pre.size >= 2:
        slope = float(np.polyfit(np.arange(pre.size), np.log10(pre), 1)[0])
    else:
        slope = float("nan")
    return {
        "ratios": ratios.tolist(),
        "median_ratio": float(np.median(ratios)) if ratios.size else float("nan"),
        "floor_iter": floor_iter,
        "slope_log10": slope,
    }


def convergence_report(trace, floor=DECAY_FLOOR):
    """Decay summary of a trace's ``dist_u`` column.

    When ``dist_v`` is present the interleaved ratios
    ``dist_v[t+1] / dist_u[t]`` over pre-floor ``t`` are reported as well.
    Stage boundaries are not special-cased; summarize single-stage traces.
    """
    du = trace.column("dist_u")
    dv = trace.column("dist_v")
    valid = ~np.isnan(du)
    if np.count_nonzero(valid) < 3:
        raise InsufficientTrace("trace needs at least 3 records with distances")
    summary = decay_summary(du[valid], floor)
    inter = [
        dv[t + 1] / du[t]
        for t in range(len(du) - 1)
        if du[t] > floor and not np.isnan(dv[t + 1]) and dv[t + 1] > floor
    ]
    summary["interleaved_ratios"] = [float(x) for x in inter]
    summary["interleaved_median_ratio"] = float(np.median(inter)) if inter else float("nan")
    return summary


def _median_for_report(summary):
    x = summary["interleaved_median_ratio"]
    if math.isnan(x):
        x = summary["median_ratio"]
    return None if math.isnan(x) else x


@dataclass
class SensingConfig:
    m: int = 40
    n: int = 40
    k: int = 2
    kappa: float = 2.0
    d_mult: float = 6.0
    noise_ratio: float = 0.0
    T: int = 50
    tol: float = 1e-12
    solver: str = "altmin"
    seed: int = field(default_factory=default_seed)
    threshold: float = 1e-4
    dist_threshold: float | None = None
    timing: bool = False

    def validate(self):
        errors = {}
        for name in ("m", "n", "k", "T"):
            if not isinstance(getattr(self, name), int) or getattr(self, name) < 1:
                errors[name] = "must be a positive integer"
        if not errors.get("k") and not errors.get("m") and not errors.get("n") and self.k > min(self.m, self.n):
            errors["k"] = "must not exceed min(m, n)"
        if self.kappa < 1:
            errors["kappa"] = "must be >= 1"
        if self.d_mult <= 0:
            errors["d_mult"] = "must be positive"
        if self.noise_ratio < 0:
            errors["noise_ratio"] = "must be >= 0"
        if self.tol < 0:
            errors["tol"] = "must be >= 0"
        if self.solver not in SENSING_SOLVERS:
            errors["solver"] = f"must be one of {', '.join(SENSING_SOLVERS)}"
        if errors:
            raise ConfigInvalid(errors)
        return self


@dataclass
class CompletionConfig:
    m: int = 150
    n: int = 150
    k: int = 2
    kappa: float = 2.0
    p: float = 0.35
    mu: float = 3.0
    T: int = 15
    tol: float = 1e-12
    seed: int = field(default_factory=default_seed)
    partition: str = "disjoint"
    threshold: float = 1e-3
    timing: bool = False

    def validate(self):
        errors = {}
        for name in ("m", "n", "k", "T"):
            if not isinstance(getattr(self, name), int) or getattr(self, name) < 1:
                errors[name] = "must be a positive integer"
        if not errors.get("k") and not errors.get("m") and not errors.get("n") and self.k > min(self.m, self.n):
            errors["k"] = "must not exceed min(m, n)"
        if self.kappa < 1:
            errors["kappa"] = "must be >= 1"
        if not 0 < self.p <= 1:
            errors["p"] = "must lie in (0, 1]"
        if self.mu <= 0:
            errors["mu"] = "must be positive"
        if self.tol < 0:
            errors["tol"] = "must be >= 0"
        if self.partition not in PARTITION_SCHEMES:
            errors["partition"] = f"must be one of {', '.join(PARTITION_SCHEMES)}"
        if errors:
            raise ConfigInvalid(errors)
        return self


def make_config(cls, values):
    """Build and validate a config from a mapping, rejecting unknown keys."""
    values = dict(values or {})
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigInvalid({key: "unknown field" for key in unknown})
    try:
        cfg = cls(**values)
    except TypeError as exc:
        raise ConfigInvalid({"config": str(exc)}) from exc
    return cfg.validate()


@dataclass
class ExperimentReport:
    config: dict
    trace: ConvergenceTrace
    final_rel_error: float | None
    final_dist_u: float | None
    final_dist_v: float | None
    iterations_run: int
    decay_median_ratio: float | None
    passed: bool
    wall_time_ms: float | None = None
    extra: dict = field(default_factory=dict)
    pair: object = None
    problem: object = None

    def to_dict(self):
        out = {
            "config": self.config,
            "final_rel_error": self.final_rel_error,
            "final_dist_u": self.final_dist_u,
            "final_dist_v": self.final_dist_v,
            "iterations_run": self.iterations_run,
            "decay_median_ratio": self.decay_median_ratio,
            "pass": self.passed,
        }
        out.update(self.extra)
        if self.wall_time_ms is not None:
            out["wall_time_ms"] = self.wall_time_ms
        return out

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"

    def write(self, out_dir):
        """Write ``trace.csv``, ``report.json`` and the factor/truth matrices."""
        os.makedirs(out_dir, exist_ok=True)
        lrio.write_trace(os.path.join(out_dir, "trace.csv"), self.trace)
        lrio.atomic_write(os.path.join(out_dir, "report.json"), self.to_json())
        if self.pair is not None:
            lrio.write_matrix(os.path.join(out_dir, "U_hat.txt"), self.pair.U_hat)
            lrio.write_matrix(os.path.join(out_dir, "V_hat.txt"), self.pair.V_hat)
        if self.problem is not None:
            lrio.write_matrix(os.path.join(out_dir, "truth.txt"), self.problem.M)


def _finish(cfg, problem, pair, trace, started, extra):
    summary = None
    try:
        summary = convergence_report(trace)
    except InsufficientTrace:
        pass
    last = trace.records[-1]
    rel = None
    if problem is not None:
        rel = float(np.linalg.norm(problem.M - pair.matrix()) / np.linalg.norm(problem.M))
    passed = rel is not None and rel <= cfg.threshold
    dist_threshold = getattr(cfg, "dist_threshold", None)
    if dist_threshold is not None:
        passed = passed and last.dist_u is not None and last.dist_u <= dist_threshold
    if summary is not None:
        extra["decay"] = {
            "floor_iter": summary["floor_iter"],
            "slope_log10": None if math.isnan(summary["slope_log10"]) else summary["slope_log10"],
        }
    if trace.flags:
        extra["flags"] = list(trace.flags)
    wall = (time.perf_counter() - started) * 1e3 if cfg.timing else None
    return ExperimentReport(
        config=dataclasses.asdict(cfg),
        trace=trace,
        final_rel_error=rel,
        final_dist_u=last.dist_u,
        final_dist_v=last.dist_v,
        iterations_run=trace.iterations_run,
        decay_median_ratio=None if summary is None else _median_for_report(summary),
        passed=bool(passed),
        wall_time_ms=wall,
        extra=extra,
        pair=pair,
        problem=problem,
    )


def run_sensing_experiment(config, out=None):
    """Generate a sensing instance, solve it and summarize the run.

    ``config`` is a :class:`SensingConfig` or a mapping of its fields.
    """
    cfg = config if isinstance(config, SensingConfig) else make_config(SensingConfig, config)
    cfg.validate()
    started = time.perf_counter()
    s_problem, s_op, s_noise = derive_seeds(cfg.seed, 3)
    problem = generate_problem(cfg.m, cfg.n, cfg.k, cfg.kappa, s_problem)
    d = measurement_count(cfg.k, cfg.n, cfg.d_mult)
    op = gaussian_ensemble(cfg.m, cfg.n, d, s_op)
    target = problem.M
    if cfg.noise_ratio > 0:
        N = make_rng(s_noise).standard_normal((cfg.m, cfg.n))
        target = target + N * (cfg.noise_ratio * problem.truth.sigma[-1] / np.linalg.norm(N))
    b = apply_sensing(op, target)
    mode = "orthonormalized" if cfg.solver == "altmin-orth" else "standard"
    scfg = SolverConfig(T=cfg.T, tol=cfg.tol, mode=mode, seed=cfg.seed, timing=cfg.timing)
    if cfg.solver == "stage":
        pair, trace = stage_altmin(op, b, cfg.k, scfg, problem.truth)
    else:
        pair, trace = altmin_sense(op, b, cfg.k, scfg, problem.truth)
    extra = {"d": d, "realized_kappa": problem.kappa, "realized_mu": problem.mu}
    report = _finish(cfg, problem, pair, trace, started, extra)
    if out is not None:
        report.write(out)
    return report


def partition_audit(omega, parts):
    keys = [p.keys for p in parts]
    total = sum(k.size for k in keys)
    merged = np.concatenate(keys)
    distinct = np.unique(merged).size
    return {
        "parts": len(parts),
        "sizes": [int(k.size) for k in keys],
        "disjoint": bool(distinct == total),
        "covers": bool(distinct == len(omega) and np.array_equal(np.unique(merged), np.sort(omega.keys))),
    }


def run_completion_experiment(config, out=None, observations=None):
    """Sample, partition and complete a matrix; summarize the run.

    With ``observations`` (an :class:`ObservationSet`) no ground truth is
    generated: the given entries are completed and error fields are None.
    """
    cfg = config if isinstance(config, CompletionConfig) else make_config(CompletionConfig, config)
    cfg.validate()
    started = time.perf_counter()
    s_problem, s_omega, s_part = derive_seeds(cfg.seed, 3)
    problem = None
    truth = None
    if observations is None:
        problem = generate_problem(cfg.m, cfg.n, cfg.k, cfg.kappa, s_problem)
        truth = problem.truth
        omega = sample_omega(problem.M, cfg.p, s_omega)
        p_known = cfg.p
    else:
        omega = observations
        p_known = None
    if len(omega) == 0:
        raise ConfigInvalid({"p": "sampled observation set is empty"})
    if cfg.partition == "disjoint":
        parts = partition_omega(omega, cfg.T, s_part)
    else:
        parts = [omega] * (2 * cfg.T + 1)
    # Singular vectors are scale-free, so p_hat only rescales the initializer.
    cproblem = CompletionProblem(parts, omega.m, omega.n, cfg.k, p_known)
    scfg = SolverConfig(T=cfg.T, tol=cfg.tol, seed=cfg.seed, timing=cfg.timing)
    pair, trace = altmin_complete(cproblem, scfg, cfg.mu, truth)
    extra = {
        "observed": len(omega),
        "partition_audit": partition_audit(omega, parts),
        "partitions_used": list(trace.partitions_used),
    }
    if problem is not None:
        extra["realized_mu"] = problem.mu
    report = _finish(cfg, problem, pair, trace, started, extra)
    if out is not None:
        report.write(out)
        lrio.write_observations(os.path.join(out, "observations.txt"), omega)
    return report
