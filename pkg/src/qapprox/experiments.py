"""Registry of reproducible experiment runs behind the command line.

Each experiment name maps to a driver that generates its data, runs the
relevant algorithms across trials, and writes artifacts into a dedicated
directory: per-trial trace or table CSVs, a plain-text status report,
a JSON manifest of the resolved parameters, and a summary CSV. Summaries
are always computed by re-reading the stored per-trial files, so
summarize_experiment on a finished directory reproduces summary.csv bit
for bit.

CSV schemas
-----------
scheme traces     iter,neg_fro,neg_max,rel_err,alpha,swaps
max-norm tables   n,r,seed,eps_certified,inner_iters_total,wall_time
completion table  gamma,trial,converged,final_rel_err,iters,regularized
geometry ratios   case,theta,sigma_a,sigma_b,kappa_product,cycle,ratio
summary           group,metric,count,mean,median,p10,p25,p75,p90

Floats are written with round-trip precision, percentiles use the
nearest-rank estimator over trials, and compound summary group keys
join their fields with ";" so every file splits cleanly on commas. Trials fan out over a thread pool
(``jobs``); every trial owns one child of a single RngStream split, so
the artifacts do not depend on scheduling. Wall-clock columns are
informational and the only fields that vary between repeated runs.

Scales: "desk" runs in minutes on one core, "paper" reproduces the
full-size protocols and can take much longer.
"""

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .completion import StagnationError, complete, sample_problem
from .cross import CrossError
from .datagen import (
    gen_gaussian_mixture,
    gen_quantized_matrix,
    gen_quantized_tt,
    gen_smoluchowski,
)
from .geometry import (
    LinePair,
    half_open_segment_demo,
    kappa_factors,
    run_two_line_qap,
    spiral_projection_demo,
    verify_pythagorean,
    verify_theorem_rates,
)
from .linalg import RngStream, SvdError, haar_columns
from .maxnorm import maxnorm_approximate, maxnorm_approximate_tt
from .schemes import IterationTrace, SchemeConfig, SchemeError, run_scheme, run_scheme_tt

__all__ = [
    "EXPERIMENT_NAMES",
    "SCALES",
    "SUMMARY_COLUMNS",
    "UsageError",
    "TrialStatus",
    "ExperimentResult",
    "ExperimentSpec",
    "nearest_rank_percentile",
    "resolve_params",
    "run_experiment",
    "summarize_experiment",
    "summary_stats",
]

EXPERIMENT_NAMES = (
    "smolukh-schemes",
    "mixture-qtt",
    "completion-phase",
    "maxnorm-orthogonal",
    "maxnorm-identity",
    "quantized-matrix",
    "quantized-tt",
    "geometry-verify",
)

SCALES = ("desk", "paper")

SUMMARY_COLUMNS = ("group", "metric", "count", "mean", "median", "p10", "p25", "p75", "p90")

MANIFEST_NAME = "experiment.json"

_SCHEME_VARIANTS = (("AP", None), ("RP", None), ("SP", 0.5), ("IP", 0.75))
_SMOLUKH_PROJECTORS = ("SVD", "RSVD", "VOL_warm", "VOL_cold", "PVOL_warm", "PVOL_cold")
_CANONICAL_MIXTURE_RANKS = (2, 2, 2, 3, 3, 4, 5, 4, 2)

_NUMERICAL_ERRORS = (
    SvdError,
    CrossError,
    SchemeError,
    StagnationError,
    np.linalg.LinAlgError,
    FloatingPointError,
    OverflowError,
)

_DEFAULTS = {
    "smolukh-schemes": {
        "desk": dict(n=256, step=0.4, t=6.0, rank=10, trials=3, max_iters=200),
        "paper": dict(n=1024, step=0.1, t=6.0, rank=10, trials=10, max_iters=1000),
    },
    "mixture-qtt": {
        "desk": dict(n=1024, rank=1e-2, trials=1, max_iters=100),
        "paper": dict(n=1024, rank=1e-2, trials=1, max_iters=100),
    },
    # Gammas bracket the measured n=300 phase transition: the regularized
    # arm recovers from gamma 2.5 on, the unregularized needs about 6.
    "completion-phase": {
        "desk": dict(
            n=300, rank=5, gammas=(2.0, 2.5, 3.0, 4.0, 6.0), trials=20, max_iters=1000
        ),
        "paper": dict(
            n=1000, rank=5, gammas=(2.0, 2.5, 3.0, 4.0, 6.0), trials=20, max_iters=1000
        ),
    },
    "maxnorm-orthogonal": {
        "desk": dict(n=256, ranks=(8, 16, 32), trials=3, max_iters=500, delta=1e-3),
        "paper": dict(n=1600, ranks=(40,), trials=3, max_iters=500, delta=1e-3),
    },
    "maxnorm-identity": {
        "desk": dict(n=256, ranks=(8, 16, 32), trials=3, max_iters=500, delta=1e-3),
        "paper": dict(n=1600, ranks=(40,), trials=3, max_iters=500, delta=1e-3),
    },
    # delta 1e-4: the stall threshold that reproduces the published
    # certified radii; at 1e-3 the inner loop quits a few thousandths high.
    "quantized-matrix": {
        "desk": dict(n=200, ranks=(5, 10, 20), trials=20, max_iters=500, delta=1e-4),
        "paper": dict(n=200, ranks=(5, 10, 20), trials=20, max_iters=500, delta=1e-4),
    },
    "quantized-tt": {
        "desk": dict(n=100, ranks=(5, 10, 20), trials=20, max_iters=500, delta=1e-4),
        "paper": dict(n=100, ranks=(5, 10, 20), trials=20, max_iters=500, delta=1e-4),
    },
    "geometry-verify": {
        "desk": dict(trials=200, pyth_trials=2000, pyth_dim=8, max_iters=6),
        "paper": dict(trials=1000, pyth_trials=10000, pyth_dim=8, max_iters=6),
    },
}


class UsageError(ValueError):
    """Invalid experiment name or parameters; maps to the usage exit code."""


@dataclass
class TrialStatus:
    """Outcome of one trial or one aggregate assertion.

    kind is "assert" for a failed internal check and "error" for a
    numerical failure raised by the underlying algorithm.
    """

    label: str
    ok: bool
    kind: str = "assert"
    detail: str = ""

    def line(self):
        head = "ok" if self.ok else ("ERROR" if self.kind == "error" else "FAIL")
        return f"{head} {self.label}" + (f": {self.detail}" if self.detail else "")


@dataclass
class ExperimentResult:
    """Artifacts and per-trial statuses of one run_experiment call."""

    name: str
    out_dir: Path
    params: dict
    statuses: list
    files: list = field(default_factory=list)

    @property
    def passed(self):
        return all(s.ok for s in self.statuses)

    @property
    def exit_code(self):
        """0 on success, 3 on any numerical failure, 2 on failed assertions."""
        if self.passed:
            return 0
        if any(not s.ok and s.kind == "error" for s in self.statuses):
            return 3
        return 2

    def status_lines(self):
        passed = sum(s.ok for s in self.statuses)
        return [s.line() for s in self.statuses] + [
            f"passed {passed}/{len(self.statuses)} checks"
        ]


@dataclass(frozen=True)
class ExperimentSpec:
    """Resolved request for one experiment run.

    Optional fields override the scale defaults; an override that the
    named experiment does not use is a usage error. All experiments
    accept trials and max_iters (for geometry-verify the latter is the
    number of alternating cycles per two-line run). A rank override on
    experiments that sweep several ranks restricts the sweep to that
    single rank.
    """

    name: str
    out_dir: str
    scale: str = "desk"
    seed: int = 0
    jobs: int = 1
    n: int = None
    step: float = None
    t: float = None
    rank: float = None
    gammas: tuple = None
    trials: int = None
    max_iters: int = None

    def __post_init__(self):
        if self.name not in EXPERIMENT_NAMES:
            known = ", ".join(EXPERIMENT_NAMES)
            raise UsageError(f"unknown experiment {self.name!r}; known names: {known}")
        if self.scale not in SCALES:
            raise UsageError(f"scale must be one of {SCALES}, got {self.scale!r}")
        if not (isinstance(self.seed, (int, np.integer)) and self.seed >= 0):
            raise UsageError(f"seed must be a nonnegative integer, got {self.seed!r}")
        if not (isinstance(self.jobs, (int, np.integer)) and self.jobs >= 1):
            raise UsageError(f"jobs must be a positive integer, got {self.jobs!r}")
        for name, value, minimum in (
            ("n", self.n, 2),
            ("trials", self.trials, 1),
            ("max_iters", self.max_iters, 1),
        ):
            if value is not None and not (
                isinstance(value, (int, np.integer)) and value >= minimum
            ):
                raise UsageError(f"{name} must be an integer >= {minimum}, got {value!r}")
        for name, value in (("step", self.step), ("t", self.t), ("rank", self.rank)):
            if value is not None and not (np.isfinite(value) and value > 0):
                raise UsageError(f"{name} must be positive and finite, got {value!r}")
        if self.gammas is not None:
            gammas = tuple(float(g) for g in self.gammas)
            if not gammas or not all(np.isfinite(g) and g > 0 for g in gammas):
                raise UsageError(f"gammas must be positive and finite, got {self.gammas!r}")
            object.__setattr__(self, "gammas", gammas)


def resolve_params(spec):
    """Scale defaults for spec.name merged with the spec's overrides."""
    params = dict(_DEFAULTS[spec.name][spec.scale])
    for name in ("n", "step", "t", "gammas", "trials", "max_iters"):
        value = getattr(spec, name)
        if value is None:
            continue
        if name not in params:
            raise UsageError(f"experiment {spec.name!r} has no parameter {name!r}")
        params[name] = value
    if spec.rank is not None:
        if "ranks" in params:
            if spec.rank != int(spec.rank):
                raise UsageError(f"rank must be an integer here, got {spec.rank!r}")
            params["ranks"] = (int(spec.rank),)
        elif "rank" in params:
            # Keep a float only where the default is one (a tolerance).
            if isinstance(params["rank"], (int, np.integer)):
                if spec.rank != int(spec.rank):
                    raise UsageError(f"rank must be an integer here, got {spec.rank!r}")
                params["rank"] = int(spec.rank)
            else:
                params["rank"] = float(spec.rank)
        else:
            raise UsageError(f"experiment {spec.name!r} has no parameter 'rank'")
    return params


def nearest_rank_percentile(values, pct):
    """Nearest-rank percentile: the ceil(pct/100 * len)-th smallest value."""
    xs = np.sort(np.asarray(values, dtype=np.float64))
    if xs.size == 0:
        raise ValueError("percentile of an empty sample")
    if not 0 < pct <= 100:
        raise ValueError(f"pct must lie in (0, 100], got {pct}")
    return float(xs[max(1, math.ceil(pct / 100.0 * xs.size)) - 1])


def summary_stats(values):
    """Count, mean, median, and nearest-rank 10/25/75/90 percentiles."""
    xs = np.asarray(values, dtype=np.float64)
    if xs.size == 0:
        raise ValueError("summary of an empty sample")
    return {
        "count": int(xs.size),
        "mean": float(xs.mean()),
        "median": float(np.median(xs)),
        "p10": nearest_rank_percentile(xs, 10),
        "p25": nearest_rank_percentile(xs, 25),
        "p75": nearest_rank_percentile(xs, 75),
        "p90": nearest_rank_percentile(xs, 90),
    }


def _fmt(value):
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.17g}"


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _read_csv(path):
    lines = Path(path).read_text().strip().splitlines()
    header = lines[0].split(",")
    return [dict(zip(header, line.split(","))) for line in lines[1:]]


def _run_trials(items, worker, jobs):
    """Map worker over items, serially or on a thread pool; order kept."""
    if jobs <= 1:
        return [worker(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(worker, items))


def _trial(label, body):
    """Run body(), folding numerical failures into an error status.

    body returns (TrialStatus, files, rows); an exception from the
    algorithm under test becomes a failed status of kind "error".
    """
    try:
        return body()
    except _NUMERICAL_ERRORS as exc:
        detail = f"{type(exc).__name__}: {exc}"
        return TrialStatus(label, False, kind="error", detail=detail), [], []


def _finite_trace(trace):
    return all(
        np.all(np.isfinite(trace.column(name))) for name in ("neg_fro", "neg_max", "rel_err")
    )


def _scheme_tag(scheme, beta):
    return scheme if beta is None else f"{scheme}{beta:g}"


# ---------------------------------------------------------------------------
# drivers


def _drive_smolukh(spec, params, out):
    """Every scheme and projector on the coagulation kernel, paired seeds."""
    x = gen_smoluchowski(params["n"], params["step"], params["t"])
    iters = params["max_iters"]
    items = [
        (scheme, beta, proj, trial)
        for scheme, beta in _SCHEME_VARIANTS
        for proj in _SMOLUKH_PROJECTORS
        for trial in range(params["trials"])
    ]

    def worker(item):
        scheme, beta, proj, trial = item
        tag = f"{_scheme_tag(scheme, beta)}-{proj}"
        label = f"{tag} seed={spec.seed + trial}"

        def body():
            cfg = SchemeConfig(
                scheme,
                proj,
                params["rank"],
                beta=beta,
                max_iters=iters,
                seed=spec.seed + trial,
            )
            _, trace = run_scheme(x, cfg)
            path = out / f"trace_{tag}_s{trial}.csv"
            trace.write_csv(path)
            ok = _finite_trace(trace) and len(trace) == iters + 1
            detail = f"final_ratio={trace.rows[-1].rel_err:.4g}"
            if not ok:
                detail = "non-finite or truncated trace"
            return TrialStatus(label, ok, detail=detail), [path], []

        return _trial(label, body)

    results = _run_trials(items, worker, spec.jobs)
    statuses = [status for status, _, _ in results]
    files = [path for _, paths, _ in results for path in paths]
    return statuses, files


def _drive_mixture(spec, params, out):
    """Shifted and indented schemes on the quantized mixture density."""
    n, tol, iters = params["n"], params["rank"], params["max_iters"]
    x = gen_gaussian_mixture(n).tensor()
    canonical = n == 1024 and tol == 1e-2
    statuses, files = [], []
    for trial in range(params["trials"]):
        for scheme, beta in _SCHEME_VARIANTS:
            tag = f"{_scheme_tag(scheme, beta)}-TTSVD"
            label = f"{tag} seed={spec.seed + trial}"

            def body(scheme=scheme, beta=beta, tag=tag, label=label, trial=trial):
                cfg = SchemeConfig(
                    scheme, "TTSVD", tol, beta=beta, max_iters=iters, seed=spec.seed + trial
                )
                y, trace = run_scheme_tt(x, cfg)
                path = out / f"trace_{tag}_s{trial}.csv"
                trace.write_csv(path)
                ok = _finite_trace(trace)
                detail = f"final_ratio={trace.rows[-1].rel_err:.4g}"
                if canonical:
                    near = len(y.ranks) == len(_CANONICAL_MIXTURE_RANKS) and all(
                        abs(got - want) <= 1
                        for got, want in zip(y.ranks, _CANONICAL_MIXTURE_RANKS)
                    )
                    if not near:
                        ok = False
                        detail = f"ranks {y.ranks} far from {_CANONICAL_MIXTURE_RANKS}"
                    if scheme == "IP" and np.any(trace.column("neg_fro")[1:] != 0.0):
                        ok = False
                        detail = "indented scheme left negative entries after iteration 1"
                return TrialStatus(label, ok, detail=detail), [path], []

            status, paths, _ = _trial(label, body)
            statuses.append(status)
            files.extend(paths)
    return statuses, files


def _drive_completion(spec, params, out):
    """Success frequency of plain vs regularized Riemannian completion."""
    n, r, iters = params["n"], params["rank"], params["max_iters"]
    gammas, trials = params["gammas"], params["trials"]
    items = [
        (gi, gamma, trial) for gi, gamma in enumerate(gammas) for trial in range(trials)
    ]
    streams = RngStream(spec.seed).split(len(items))

    def worker(item):
        gi, gamma, trial = item
        label = f"gamma={gamma:g} trial={trial}"

        def body():
            problem_rng, reg_rng = streams[gi * trials + trial].split(2)
            problem, truth = sample_problem(n, n, r, gamma, problem_rng)
            rows, paths, flags = [], [], []
            for regularized in (0, 1):
                y, converged, hist = complete(
                    problem,
                    max_iters=iters,
                    regularize="ap_vol_warm" if regularized else None,
                    rng=reg_rng if regularized else None,
                    truth=truth,
                )
                tag = "reg" if regularized else "unreg"
                path = out / f"trace_g{gamma:g}_t{trial}_{tag}.csv"
                _write_csv(
                    path,
                    ("iter", "sampled_rel", "work_units", "oracle_evals"),
                    list(
                        zip(
                            range(1, hist["iters"] + 1),
                            hist["sampled_rel"],
                            hist["work_units"],
                            hist["oracle_evals"],
                        )
                    ),
                )
                paths.append(path)
                rows.append(
                    (gamma, trial, int(converged), hist["final_rel_err"], hist["iters"], regularized)
                )
                flags.append(converged)
                # A dense pass would evaluate all n*n entries in one step.
                if regularized and max(hist["oracle_evals"]) > n * n // 2:
                    detail = f"oracle evaluations per step reached {max(hist['oracle_evals'])}"
                    return TrialStatus(label, False, detail=detail), paths, rows
            ok = all(np.isfinite(row[3]) for row in rows)
            detail = f"unreg={int(flags[0])} reg={int(flags[1])}"
            return TrialStatus(label, ok, detail=detail), paths, rows

        return _trial(label, body)

    results = _run_trials(items, worker, spec.jobs)
    statuses = [status for status, _, _ in results]
    files = [path for _, paths, _ in results for path in paths]
    rows = [row for _, _, trial_rows in results for row in trial_rows]
    table = out / "trials.csv"
    _write_csv(
        table,
        ("gamma", "trial", "converged", "final_rel_err", "iters", "regularized"),
        rows,
    )
    return statuses, files + [table]


def _identity_target(n, r, rng):
    return np.eye(n)


def _orthogonal_target(n, r, rng):
    return haar_columns(n, n, rng)


_MAXNORM_SETUPS = {
    "maxnorm-orthogonal": dict(make=_orthogonal_target, policy="haar", tt=False),
    "maxnorm-identity": dict(make=_identity_target, policy="gaussian", tt=False),
    "quantized-matrix": dict(make=gen_quantized_matrix, policy="svd", tt=False),
    "quantized-tt": dict(make=gen_quantized_tt, policy=None, tt=True),
}


def _drive_maxnorm_family(spec, params, out):
    """Certified max-norm errors across a rank sweep; one row per trial."""
    setup = _MAXNORM_SETUPS[spec.name]
    n, ranks, trials, iters = params["n"], params["ranks"], params["trials"], params["max_iters"]
    items = [(r, trial) for r in ranks for trial in range(trials)]
    streams = RngStream(spec.seed).split(len(items))

    def worker(indexed):
        index, (r, trial) = indexed
        label = f"n={n} r={r} seed={spec.seed + trial}"

        def body():
            rng = streams[index]
            x = setup["make"](n, r, rng)
            stats = {}
            start = time.perf_counter()
            if setup["tt"]:
                _, eps = maxnorm_approximate_tt(
                    x, (r, r), delta=params["delta"], rng=rng, max_iters=iters, stats=stats
                )
            else:
                _, eps = maxnorm_approximate(
                    x,
                    r,
                    delta=params["delta"],
                    y0_policy=setup["policy"],
                    rng=rng,
                    max_iters=iters,
                    stats=stats,
                )
            wall = time.perf_counter() - start
            row = (n, r, spec.seed + trial, eps, stats["inner_iters_total"], wall)
            ok = np.isfinite(eps) and eps > 0
            detail = f"eps={eps:.4g}"
            if spec.name == "quantized-matrix" and not eps < 0.5:
                ok = False
                detail = f"eps={eps:.4g} does not certify sub-rounding recovery"
            return TrialStatus(label, ok, detail=detail), [], [row]

        return _trial(label, body)

    results = _run_trials(list(enumerate(items)), worker, spec.jobs)
    statuses = [status for status, _, _ in results]
    rows = [row for _, _, trial_rows in results for row in trial_rows]
    table = out / "trials.csv"
    _write_csv(
        table, ("n", "r", "seed", "eps_certified", "inner_iters_total", "wall_time"), rows
    )
    statuses.extend(_maxnorm_group_checks(spec.name, params, rows))
    return statuses, [table]


# Published mean certified radii for 100^3 quantized trains; the tensor
# was rounded from entries in [-0.5, 0.5] steps, so certifying below 0.5
# recovers sub-rounding accuracy. Rank 5 is known to stay above it.
_QUANTIZED_TT_MEANS = {10: 0.4988, 20: 0.4859}
_QUANTIZED_TT_TOL = 0.01


def _maxnorm_group_checks(name, params, rows):
    """Aggregate assertions over the completed rank sweep.

    The bounds encode the claims of the full-scale protocols; the
    quantized-TT mean bands only apply at the canonical edge size, and a
    run overridden far from the defaults may fail the others honestly.
    """
    means = {}
    for r in params["ranks"]:
        eps = [row[3] for row in rows if row[1] == r]
        if eps:
            means[r] = float(np.mean(eps))
    checks = []
    if name == "maxnorm-orthogonal" and len(means) >= 2:
        scaled = [m * math.sqrt(r) for r, m in means.items()]
        spread = max(scaled) / min(scaled)
        checks.append(
            TrialStatus(
                "eps*sqrt(r) spread over ranks",
                spread <= 2.0,
                detail=f"spread={spread:.3f}",
            )
        )
    if name == "quantized-tt" and params["n"] == 100:
        for r, mean in means.items():
            if r == 5:
                checks.append(
                    TrialStatus(
                        f"mean eps above 0.5 at r={r}",
                        mean > 0.5,
                        detail=f"mean={mean:.4g}",
                    )
                )
            elif r in _QUANTIZED_TT_MEANS:
                target = _QUANTIZED_TT_MEANS[r]
                checks.append(
                    TrialStatus(
                        f"mean eps near published value at r={r}",
                        abs(mean - target) <= _QUANTIZED_TT_TOL,
                        detail=f"mean={mean:.4g} target={target}",
                    )
                )
    return checks


def _drive_geometry(spec, params, out):
    """Closed-form rate checks, random two-line sweeps, projection demos."""
    cycles = params["max_iters"]
    statuses, ratio_rows, report_lines = [], [], []

    report_lines.append("== two-line thresholds ==")
    for sigma in (1.2, 1.5):
        pair = LinePair(math.pi / 2)
        expected = sigma * sigma - 1.0
        trace = run_two_line_qap(
            pair, sigma, sigma, ("adversarial_away", "adversarial_away"), (1.0, 0.0), cycles
        )
        ratios = trace[1:] / trace[:-1]
        worst = float(np.max(np.abs(ratios - expected)))
        ok = worst <= 1e-12
        label = f"threshold sigma={sigma:g} ratio={expected:g}"
        statuses.append(TrialStatus(label, ok, detail=f"worst deviation {worst:.3g}"))
        report_lines.append(statuses[-1].line())
        kappa_a, kappa_b = kappa_factors(pair, sigma, sigma)
        for k, ratio in enumerate(ratios, start=1):
            ratio_rows.append(
                (f"threshold-sigma={sigma:g}", pair.theta, sigma, sigma, kappa_a * kappa_b, k, ratio)
            )

    streams = RngStream(spec.seed).split(params["trials"])

    def worker(index):
        label = f"random two-line config {index}"

        def body():
            rng = streams[index]
            gen = rng.generator
            while True:
                theta = float(gen.uniform(0.15, math.pi / 2))
                sigma_a = float(gen.uniform(1.0, 2.0))
                sigma_b = float(gen.uniform(1.0, 2.0))
                pair = LinePair(theta)
                kappa_a, kappa_b = kappa_factors(pair, sigma_a, sigma_b)
                if kappa_a * kappa_b < 0.999:
                    break
            report = verify_theorem_rates(pair, sigma_a, sigma_b, 2, rng, n_cycles=cycles)
            rows = [
                ("random", theta, sigma_a, sigma_b, kappa_a * kappa_b, k, ratio)
                for k, ratio in enumerate(report.cycle_ratios, start=1)
            ]
            detail = f"theta={theta:.3f} product={kappa_a * kappa_b:.3f}"
            if not report.passed:
                detail = "; ".join(
                    line for line in report.summary().splitlines() if line.startswith("FAIL")
                )
            return TrialStatus(label, report.passed, detail=detail), [], rows

        return _trial(label, body)

    results = _run_trials(list(range(params["trials"])), worker, spec.jobs)
    random_ok = sum(status.ok for status, _, _ in results)
    statuses.extend(status for status, _, _ in results)
    ratio_rows.extend(row for _, _, rows in results for row in rows)
    report_lines.append("== random two-line configs ==")
    report_lines.append(f"passed {random_ok}/{params['trials']} random configs")
    report_lines.extend(
        status.line() for status, _, _ in results if not status.ok
    )

    pyth_rng = RngStream(spec.seed + 1)
    for sigma in (1.0, 1.5, 2.0, 5.0):
        report = verify_pythagorean(params["pyth_dim"], sigma, params["pyth_trials"], pyth_rng)
        statuses.append(
            TrialStatus(
                f"pythagorean sigma={sigma:g}",
                report.passed,
                detail=f"min cosine {report.stats['min_cosine']:.6f}",
            )
        )
        report_lines.append(f"== pythagorean sigma={sigma:g} ==")
        report_lines.append(report.summary())

    for label, demo in (
        ("half-open segment demo", half_open_segment_demo),
        ("spiral polyline demo", spiral_projection_demo),
    ):
        report = demo()
        statuses.append(TrialStatus(label, report.passed))
        report_lines.append(f"== {label} ==")
        report_lines.append(report.summary())

    ratios_path = out / "ratios.csv"
    _write_csv(
        ratios_path,
        ("case", "theta", "sigma_a", "sigma_b", "kappa_product", "cycle", "ratio"),
        ratio_rows,
    )
    report_path = out / "report.txt"
    report_path.write_text("\n".join(report_lines) + "\n")
    return statuses, [ratios_path, report_path]


_DRIVERS = {
    "smolukh-schemes": _drive_smolukh,
    "mixture-qtt": _drive_mixture,
    "completion-phase": _drive_completion,
    "maxnorm-orthogonal": _drive_maxnorm_family,
    "maxnorm-identity": _drive_maxnorm_family,
    "quantized-matrix": _drive_maxnorm_family,
    "quantized-tt": _drive_maxnorm_family,
    "geometry-verify": _drive_geometry,
}


# ---------------------------------------------------------------------------
# summaries


def _trace_key(path):
    stem = path.stem[len("trace_") :]
    group, trial = stem.rsplit("_s", 1)
    return group, int(trial)


def _summarize_traces(directory):
    groups = {}
    for path in sorted(directory.glob("trace_*.csv"), key=_trace_key):
        group, _ = _trace_key(path)
        trace = IterationTrace.from_csv_text(path.read_text())
        entry = groups.setdefault(group, {"final_neg_fro": [], "final_rel_err": []})
        entry["final_neg_fro"].append(trace.rows[-1].neg_fro)
        entry["final_rel_err"].append(trace.rows[-1].rel_err)
    rows = []
    for group in sorted(groups):
        for metric in ("final_neg_fro", "final_rel_err"):
            stats = summary_stats(groups[group][metric])
            rows.append((group, metric, *(stats[c] for c in SUMMARY_COLUMNS[2:])))
    return rows


def _summarize_maxnorm(directory):
    records = _read_csv(directory / "trials.csv")
    groups = {}
    for record in records:
        key = (int(record["n"]), int(record["r"]))
        entry = groups.setdefault(
            key, {"eps_certified": [], "inner_iters_total": [], "wall_time": []}
        )
        for metric in entry:
            entry[metric].append(float(record[metric]))
    rows = []
    for n, r in sorted(groups):
        for metric in ("eps_certified", "inner_iters_total", "wall_time"):
            stats = summary_stats(groups[(n, r)][metric])
            rows.append((f"n={n};r={r}", metric, *(stats[c] for c in SUMMARY_COLUMNS[2:])))
    return rows


def _summarize_completion(directory):
    records = _read_csv(directory / "trials.csv")
    groups = {}
    for record in records:
        key = (float(record["gamma"]), int(record["regularized"]))
        label = f"gamma={record['gamma']};regularized={record['regularized']}"
        entry = groups.setdefault(
            key, (label, {"converged": [], "final_rel_err": [], "iters": []})
        )
        for metric in entry[1]:
            entry[1][metric].append(float(record[metric]))
    rows = []
    for key in sorted(groups):
        label, metrics = groups[key]
        for metric in ("converged", "final_rel_err", "iters"):
            stats = summary_stats(metrics[metric])
            rows.append((label, metric, *(stats[c] for c in SUMMARY_COLUMNS[2:])))
    return rows


def _summarize_geometry(directory):
    records = _read_csv(directory / "ratios.csv")
    groups = {}
    for record in records:
        entry = groups.setdefault(record["case"], {"bound_margin": [], "ratio": []})
        entry["ratio"].append(float(record["ratio"]))
        entry["bound_margin"].append(float(record["kappa_product"]) - float(record["ratio"]))
    rows = []
    for group in sorted(groups):
        for metric in ("bound_margin", "ratio"):
            stats = summary_stats(groups[group][metric])
            rows.append((group, metric, *(stats[c] for c in SUMMARY_COLUMNS[2:])))
    return rows


_SUMMARIZERS = {
    "smolukh-schemes": _summarize_traces,
    "mixture-qtt": _summarize_traces,
    "completion-phase": _summarize_completion,
    "maxnorm-orthogonal": _summarize_maxnorm,
    "maxnorm-identity": _summarize_maxnorm,
    "quantized-matrix": _summarize_maxnorm,
    "quantized-tt": _summarize_maxnorm,
    "geometry-verify": _summarize_geometry,
}


def summarize_experiment(directory):
    """Recompute summary.csv from the files stored in an experiment directory.

    Reads the manifest to identify the experiment, then aggregates the
    per-trial artifacts. Running this on a directory produced by
    run_experiment rewrites summary.csv with identical bytes.
    """
    directory = Path(directory)
    manifest_path = directory / MANIFEST_NAME
    if not manifest_path.is_file():
        raise UsageError(f"{directory} is not an experiment directory (no {MANIFEST_NAME})")
    manifest = json.loads(manifest_path.read_text())
    name = manifest.get("name")
    if name not in _SUMMARIZERS:
        raise UsageError(f"manifest names unknown experiment {name!r}")
    rows = _SUMMARIZERS[name](directory)
    path = directory / "summary.csv"
    _write_csv(path, SUMMARY_COLUMNS, rows)
    return path


def run_experiment(spec):
    """Run one registered experiment and write its artifact directory.

    Creates out_dir/name, clears artifacts left by a previous run, writes
    the manifest, fans the trials out over spec.jobs threads, summarizes
    the stored files, and records every status line in status.txt.
    """
    params = resolve_params(spec)
    out = Path(spec.out_dir) / spec.name
    out.mkdir(parents=True, exist_ok=True)
    for stale in ("trials.csv", "ratios.csv", "report.txt", "summary.csv", "status.txt"):
        (out / stale).unlink(missing_ok=True)
    for stale in out.glob("trace_*.csv"):
        stale.unlink()
    manifest_path = out / MANIFEST_NAME
    manifest = {
        "name": spec.name,
        "scale": spec.scale,
        "seed": spec.seed,
        "params": params,
    }
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    statuses, files = _DRIVERS[spec.name](spec, params, out)
    summary_path = summarize_experiment(out)
    result = ExperimentResult(
        spec.name, out, params, statuses, [manifest_path, *files, summary_path]
    )
    status_path = out / "status.txt"
    status_path.write_text("\n".join(result.status_lines()) + "\n")
    result.files.append(status_path)
    return result
