"""Golden-fragment evaluation of the predictor against random selection.

A golden fragment stands in for the real background load: the predictor
sees its simulated observations up to the prediction checkpoint and must
find a fragment that reproduces the rest of the run. Random selection goes
through the very same scoring path, so the two arms differ only in how
``t_target`` is chosen.
"""

from __future__ import annotations

import dataclasses
import itertools
import math
import random
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .exceptions import BgloadError, DomainError, EmptyInputError
from .metrics import ErrorCache, ErrorFunction, error, future_error
from .predictor import PredictorConfig, predict
from .traces import FilteredSet
from .workflow import EnactmentPlan, ObservedRun, k_real

CSV_COLUMNS = ("run_id", "t_g", "t_target", "k", "E_star", "F_star", "MAPE_E", "MAPE_F", "d_ms")
METRICS = ("E_star", "F_star", "MAPE_E", "MAPE_F", "d")


def e_star_mape(golden_obs: Sequence[float], target_obs: Sequence[float], N: int | None = None) -> float:
    """MAPE of a target run's job times against the golden run's."""
    N = len(golden_obs) if N is None else N
    if len(golden_obs) < N or len(target_obs) < N:
        raise DomainError(f"both runs must cover jobs 1..{N}")
    return error(ErrorFunction.MAPE, golden_obs, target_obs, N)


def f_star_mape(golden_obs: Sequence[float], target_obs: Sequence[float], done: int) -> float:
    """Execution-time MAPE restricted to the jobs after the first ``done``."""
    return future_error(ErrorFunction.MAPE, golden_obs, target_obs, done, len(golden_obs))


def mape_e(
    cache: ErrorCache, t_g: float, t_target: float, n_cp: int | None = None,
    fn: ErrorFunction | str = ErrorFunction.SQD,
) -> float:
    """Percentage gap between the past-error profiles of two fragments over checkpoints 1..n_cp."""
    fn = ErrorFunction.parse(fn)
    n_cp = cache.shape.sections if n_cp is None else n_cp
    rg, rt = cache.row(t_g), cache.row(t_target)
    total = 0.0
    for i in range(1, n_cp + 1):
        col = cache.column(i, fn)
        g = cache.past[fn][rg, col]
        if g == 0:
            raise DomainError(f"golden past error is zero at checkpoint {i}")
        total += abs(g - cache.past[fn][rt, col]) / ((n_cp / 100) * g)
    return total


def mape_f(
    cache: ErrorCache, t_g: float, t_target: float, n_cp: int | None = None,
    fn: ErrorFunction | str = ErrorFunction.SQD,
) -> float | None:
    """Future-error counterpart of :func:`mape_e` over checkpoints 2..n_cp-1.

    Returns None when that range is empty.
    """
    fn = ErrorFunction.parse(fn)
    n_cp = cache.shape.sections if n_cp is None else n_cp
    if n_cp <= 2:
        return None
    rg, rt = cache.row(t_g), cache.row(t_target)
    total = 0.0
    for i in range(2, n_cp):
        col = cache.column(i, fn)
        g = cache.future[fn][rg, col]
        if g == 0:
            raise DomainError(f"golden future error is zero at checkpoint {i}")
        total += abs(g - cache.future[fn][rt, col]) / (((n_cp - 2) / 100) * g)
    return total


def r_squared(golden: Sequence[float], predicted: Sequence[float]) -> float:
    g = np.asarray(golden, dtype=np.float64)
    p = np.asarray(predicted, dtype=np.float64)
    if g.shape != p.shape or g.size < 2:
        raise DomainError("r_squared needs two equal-length series of >= 2 values")
    ss_tot = float(np.sum((g - g.mean()) ** 2))
    if ss_tot == 0:
        raise DomainError("golden series has zero variance")
    return 1.0 - float(np.sum((g - p) ** 2)) / ss_tot


def past_future_relation(
    cache: ErrorCache, fn: ErrorFunction | str, k: int, tau: float, window: int
) -> float | None:
    """Share of low-error stretch members whose past and future errors are both low.

    Stretches are maximal runs of at least ``window`` consecutive fragments
    with a past or future error below ``tau``. Returns None if none exist.
    """
    if window < 1 or not tau > 0:
        raise DomainError("window must be >= 1 and tau positive")
    fn = ErrorFunction.parse(fn)
    past = cache.past_series(fn, k)
    fut = cache.future_series(fn, k)
    with np.errstate(invalid="ignore"):
        either = (past < tau) | (fut < tau)
        both = (past < tau) & (fut < tau)
    members = hits = 0
    start = None
    for i, flag in enumerate(np.append(either, False)):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            if i - start >= window:
                members += i - start
                hits += int(both[start:i].sum())
            start = None
    return hits / members if members else None


@dataclass(frozen=True)
class GoldenRun:
    run_id: int
    t_g: float
    k: int
    t_target: float | None = None
    d: float = 0.0
    iterations: int = 0
    E_star: float | None = None
    F_star: float | None = None
    MAPE_E: float | None = None
    MAPE_F: float | None = None
    past_g: float | None = None
    past_t: float | None = None
    future_g: float | None = None
    future_t: float | None = None
    failure: str | None = None

    @property
    def ok(self) -> bool:
        return self.failure is None


def _median(values):
    return statistics.median(values) if values else None


def _mean(values):
    return statistics.fmean(values) if values else None


@dataclass
class StudyReport:
    runs: list[GoldenRun]
    config: dict = field(default_factory=dict)
    baseline: StudyReport | None = None

    @property
    def completed(self) -> list[GoldenRun]:
        return [r for r in self.runs if r.ok]

    @property
    def failures(self) -> int:
        return len(self.runs) - len(self.completed)

    def values(self, metric: str) -> list[float]:
        return [getattr(r, metric) for r in self.completed if getattr(r, metric) is not None]

    def excluded(self, metric: str) -> int:
        return len(self.completed) - len(self.values(metric))

    def aggregate(self, metric: str) -> tuple[float | None, float | None]:
        vals = self.values(metric)
        return _mean(vals), _median(vals)

    def correlation(
        self, cache: ErrorCache | None = None, fn: ErrorFunction | str | None = None
    ) -> tuple[float | None, float | None]:
        """R² of predicted against golden errors at each run's checkpoint (past, future).

        Without arguments the values recorded for the study's own error
        function are used; otherwise they are read from ``cache`` for ``fn``.
        """
        if cache is None:
            pairs_past = [(r.past_g, r.past_t) for r in self.completed]
            pairs_fut = [(r.future_g, r.future_t) for r in self.completed]
        else:
            fn = ErrorFunction.parse(fn or ErrorFunction.SQD)
            pairs_past, pairs_fut = [], []
            for r in self.completed:
                pg, fg = cache.entry(r.t_g, r.k, fn)
                pt, ft = cache.entry(r.t_target, r.k, fn)
                pairs_past.append((pg, pt))
                pairs_fut.append((fg, ft))
        out = []
        for pairs in (pairs_past, pairs_fut):
            pairs = [(g, t) for g, t in pairs if g is not None and t is not None]
            try:
                out.append(r_squared([g for g, _ in pairs], [t for _, t in pairs]))
            except DomainError:
                out.append(None)
        return out[0], out[1]

    def render_csv(self, timing: bool = True) -> str:
        lines = [",".join(CSV_COLUMNS)]
        for r in self.runs:
            cells = [r.run_id, repr(r.t_g), "" if r.t_target is None else repr(r.t_target), r.k]
            for m in ("E_star", "F_star", "MAPE_E", "MAPE_F"):
                v = getattr(r, m)
                cells.append("" if v is None else f"{v:.6f}")
            cells.append(f"{r.d * 1000:.3f}" if timing and r.ok else "")
            lines.append(",".join(str(c) for c in cells))
        return "\n".join(lines) + "\n"

    def render_table(self, timing: bool = True) -> str:
        def fmt(v):
            return "-" if v is None else f"{v:.3f}"

        arms = [("predictor", self)] + ([("random", self.baseline)] if self.baseline else [])
        lines = [f"runs={len(self.runs)} completed={len(self.completed)} failed={self.failures}"]
        lines.append(f"{'arm':<10} {'metric':<7} {'average':>12} {'median':>12} {'excluded':>8}")
        for name, rep in arms:
            for m in METRICS:
                if m == "d" and (not timing or rep is not self):
                    continue
                avg, med = rep.aggregate(m)
                if m == "d":
                    avg, med = (None if avg is None else avg * 1000), (None if med is None else med * 1000)
                label = "d_ms" if m == "d" else m
                lines.append(f"{name:<10} {label:<7} {fmt(avg):>12} {fmt(med):>12} {rep.excluded(m):>8}")
        r2p, r2f = self.correlation()
        lines.append(f"R2 past={fmt(r2p)} future={fmt(r2f)}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class Corpus:
    """Everything a study needs, built once and shared read-only."""

    plan: EnactmentPlan
    sim_log: object
    cache: ErrorCache
    filtered: FilteredSet | None = None

    @property
    def timestamps(self) -> list[float]:
        return self.cache.timestamps.tolist()

    def t_filt(self) -> FilteredSet:
        if self.filtered is not None:
            return self.filtered
        ts = tuple(self.timestamps)
        return FilteredSet(ts, len(ts))


Selector = Callable[[float, ObservedRun, int], tuple[float, float, int]]


def score_run(
    corpus: Corpus, run_id: int, t_g: float, k: int, t_target: float,
    d: float = 0.0, iterations: int = 0, fn: ErrorFunction = ErrorFunction.SQD,
) -> GoldenRun:
    """All metrics for one (golden, target) pairing; shared by every selection arm."""
    cache = corpus.cache
    shape = cache.shape
    golden = corpus.sim_log.observed(t_g)
    target = corpus.sim_log.observed(t_target)
    m = k_real(k, shape)
    past_g, fut_g = cache.entry(t_g, k, fn)
    past_t, fut_t = cache.entry(t_target, k, fn)
    values = {}
    for name, compute in (
        ("MAPE_E", lambda: mape_e(cache, t_g, t_target, fn=fn)),
        ("MAPE_F", lambda: mape_f(cache, t_g, t_target, fn=fn)),
    ):
        try:
            values[name] = compute()
        except DomainError:
            values[name] = None
    return GoldenRun(
        run_id, t_g, k, t_target, d, iterations,
        E_star=e_star_mape(golden, target, corpus.plan.N),
        F_star=f_star_mape(golden, target, m),
        past_g=past_g, past_t=past_t, future_g=fut_g, future_t=fut_t,
        **values,
    )


def draw_checkpoints(sections: int, n: int, seed: int) -> list[int]:
    """Seeded prediction checkpoints, uniform over 1..sections-1."""
    if sections < 2:
        raise DomainError("predictions need at least two parallel sections")
    rng = random.Random(f"checkpoints:{seed}")
    return [rng.randint(1, sections - 1) for _ in range(n)]


def _goldens(corpus: Corpus, n_runs: int, seed: int) -> list[float]:
    if n_runs < 1:
        raise DomainError("n_runs must be >= 1")
    ts = corpus.timestamps
    if not ts:
        raise EmptyInputError("corpus has no fragments")
    if n_runs > len(ts):
        raise DomainError(f"{n_runs} golden runs requested but only {len(ts)} fragments exist")
    return sorted(random.Random(seed).sample(ts, n_runs))


def _checkpoints(corpus: Corpus, n: int, seed: int, k: int | Sequence[int] | None) -> list[int]:
    if k is None:
        return draw_checkpoints(corpus.cache.shape.sections, n, seed)
    if isinstance(k, int):
        return [k] * n
    if len(k) != n:
        raise DomainError("one checkpoint per golden run is required")
    return list(k)


def _run_arm(corpus, goldens, ks, fn, select: Selector, config) -> StudyReport:
    runs = []
    for run_id, (t_g, k) in enumerate(zip(goldens, ks), start=1):
        try:
            m = k_real(k, corpus.cache.shape)
            observed = corpus.sim_log.observed(t_g)[:m]
            run = ObservedRun(t_g, observed, k)
            t_target, d, iterations = select(t_g, run, run_id)
            runs.append(score_run(corpus, run_id, t_g, k, t_target, d, iterations, fn))
        except BgloadError as exc:
            runs.append(GoldenRun(run_id, t_g, k, failure=f"{type(exc).__name__}: {exc}"))
    return StudyReport(runs, dict(config))


def _derived_seed(seed: int, run_id: int) -> int:
    return random.Random(f"{seed}:{run_id}").getrandbits(63)


def random_baseline(
    corpus: Corpus, goldens: Sequence[float], k: int | Sequence[int] | None = None,
    seed: int = 0, fn: ErrorFunction | str = ErrorFunction.SQD,
) -> StudyReport:
    """Score a uniformly random fragment for every golden run."""
    if not goldens:
        raise EmptyInputError("golden set is empty")
    fn = ErrorFunction.parse(fn)
    ts = corpus.timestamps
    ks = _checkpoints(corpus, len(goldens), seed, k)

    def select(t_g, run, run_id):
        return random.Random(_derived_seed(seed, run_id)).choice(ts), 0.0, 0

    return _run_arm(corpus, goldens, ks, fn, select, {"arm": "random", "seed": seed})


def _predictor_selector(cfg: PredictorConfig, seed: int, corpus: Corpus) -> Selector:
    t_filt = corpus.t_filt()

    def select(t_g, run, run_id):
        run_cfg = dataclasses.replace(cfg, seed=_derived_seed(cfg.seed ^ seed, run_id))
        out = predict(run_cfg, corpus.cache, t_filt, corpus.plan, run, corpus.sim_log)
        return out.t_target, out.d, out.iterations

    return select


def _predictor_chunk(args) -> list[GoldenRun]:
    cfg, seed, corpus, goldens, ks, run_ids = args
    select = _predictor_selector(cfg, seed, corpus)
    report = _run_arm(corpus, goldens, ks, cfg.fn, lambda t, r, i: select(t, r, run_ids[i - 1]), {})
    return [dataclasses.replace(r, run_id=run_ids[r.run_id - 1]) for r in report.runs]


def golden_study(
    cfg: PredictorConfig,
    n_runs: int,
    corpus: Corpus,
    seed: int = 0,
    k: int | Sequence[int] | None = None,
    baseline: bool = True,
    selector: Selector | None = None,
    parallel: int = 1,
) -> StudyReport:
    """Predict ``n_runs`` golden fragments and score them, plus the random arm.

    Each run hands the predictor the golden's simulated job times up to its
    checkpoint only. Checkpoints are drawn per run unless ``k`` pins them.
    ``selector`` replaces the predictor, which lets tests pin the selection
    step. ``parallel`` spreads predictor runs over worker processes without
    changing any result.
    """
    goldens = _goldens(corpus, n_runs, seed)
    ks = _checkpoints(corpus, n_runs, seed, k)
    config = {**cfg.echo(), "runs": n_runs, "study_seed": seed, "k": "drawn" if k is None else k}
    if selector is None and parallel > 1:
        chunks = [list(range(i, n_runs, parallel)) for i in range(parallel)]
        tasks = [
            (cfg, seed, corpus, [goldens[i] for i in c], [ks[i] for i in c], [i + 1 for i in c])
            for c in chunks if c
        ]
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            runs = [r for part in pool.map(_predictor_chunk, tasks) for r in part]
        report = StudyReport(sorted(runs, key=lambda r: r.run_id), config)
    else:
        report = _run_arm(
            corpus, goldens, ks, cfg.fn, selector or _predictor_selector(cfg, seed, corpus), config
        )
    if baseline:
        report.baseline = random_baseline(corpus, goldens, ks, seed, cfg.fn)
    return report


SWEEP_KEYS = ("P", "S", "I", "ratio", "fn")
_FIELD = {"P": "P", "S": "S", "I": "I", "ratio": "secondary_span_ratio", "fn": "fn"}


def sweep_cells(grid: Mapping[str, Sequence]) -> list[dict]:
    if not grid:
        raise DomainError("parameter grid is empty")
    unknown = set(grid) - set(SWEEP_KEYS)
    if unknown:
        raise DomainError(f"unknown sweep parameters {sorted(unknown)}")
    keys = [k for k in SWEEP_KEYS if k in grid]
    for k in keys:
        if not grid[k]:
            raise DomainError(f"no values for sweep parameter {k}")
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


def _sweep_cell(args):
    cell, base, n_runs, corpus, seed, k = args
    try:
        cfg = dataclasses.replace(base, **{_FIELD[key]: v for key, v in cell.items()})
        return cell, golden_study(cfg, n_runs, corpus, seed, k, baseline=False), None
    except BgloadError as exc:
        return cell, None, f"{type(exc).__name__}: {exc}"


def parameter_sweep(
    grid: Mapping[str, Sequence],
    corpus: Corpus,
    n_runs_per_cell: int,
    seed: int = 0,
    base: PredictorConfig = PredictorConfig(),
    k: int | None = None,
    parallel: int = 1,
) -> list[tuple[dict, StudyReport | None, str | None]]:
    """One golden study per grid cell; every cell reuses the same golden set."""
    tasks = [(cell, base, n_runs_per_cell, corpus, seed, k) for cell in sweep_cells(grid)]
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            return list(pool.map(_sweep_cell, tasks))
    return [_sweep_cell(t) for t in tasks]


def top_share(
    rows: Sequence[tuple[dict, StudyReport | None, str | None]],
    metric: str = "E_star",
    fraction: float = 0.05,
) -> dict[str, dict]:
    """How often each parameter value appears among the most accurate cells.

    Cells are ranked by the median of ``metric``; the best ``fraction`` of
    them (at least one) form the top set.
    """
    scored = []
    for cell, report, _ in rows:
        if report is None:
            continue
        med = report.aggregate(metric)[1]
        if med is not None:
            scored.append((med, cell))
    if not scored:
        return {}
    scored.sort(key=lambda x: x[0])
    top = [cell for _, cell in scored[: max(1, math.ceil(fraction * len(scored)))]]
    share: dict[str, dict] = {}
    for cell in top:
        for key, v in cell.items():
            bucket = share.setdefault(key, {})
            bucket[v] = bucket.get(v, 0) + 1 / len(top)
    return share


def render_sweep(rows, timing: bool = True) -> str:
    header = list(SWEEP_KEYS) + ["runs", "failed", "E_star_avg", "E_star_med", "MAPE_E_med", "d_ms_avg", "error"]
    lines = [",".join(header)]
    for cell, report, err in rows:
        echo = dict(report.config) if report is not None else {}
        echo.update({k: getattr(v, "value", v) for k, v in cell.items()})
        cells = [str(echo.get(k, "")) for k in SWEEP_KEYS]
        if report is None:
            cells += ["", "", "", "", "", "", err or ""]
        else:
            avg, med = report.aggregate("E_star")
            mmed = report.aggregate("MAPE_E")[1]
            d = report.aggregate("d")[0]
            cells += [
                str(len(report.runs)), str(report.failures),
                "" if avg is None else f"{avg:.6f}", "" if med is None else f"{med:.6f}",
                "" if mmed is None else f"{mmed:.6f}",
                f"{d * 1000:.3f}" if timing and d is not None else "", "",
            ]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
