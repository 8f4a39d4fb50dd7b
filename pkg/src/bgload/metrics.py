"""Workflow execution-time error functions and the past/future error cache."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import kernels
from .exceptions import (
    CacheBuildError,
    CacheLookupError,
    DomainError,
    ParseError,
    UndefinedFutureError,
)
from .workflow import EnactmentPlan, SectionShape, k_real


class ErrorFunction(enum.Enum):
    """The three error functions. Values of different functions are never comparable."""

    SQD = "SQD"
    MAPE = "MAPE"
    TADJ_SQD = "TADJ_SQD"

    @property
    def code(self) -> int:
        return _CODES[self]

    @classmethod
    def parse(cls, name: str | ErrorFunction) -> ErrorFunction:
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).upper().replace("-", "_"))
        except ValueError:
            raise DomainError(f"unknown error function {name!r}") from None


_CODES = {
    ErrorFunction.SQD: kernels.SQD,
    ErrorFunction.MAPE: kernels.MAPE,
    ErrorFunction.TADJ_SQD: kernels.TADJ_SQD,
}

ALL_FUNCTIONS = tuple(ErrorFunction)


def _check(fn: ErrorFunction, r_ex: Sequence[float], r_ob: Sequence[float], start: int, k: int):
    if k < 1:
        raise DomainError("error needs k >= 1")
    if len(r_ex) < start + k or len(r_ob) < start + k:
        raise DomainError(f"sequences shorter than the {start + k} jobs requested")
    if fn is ErrorFunction.MAPE and any(v <= 0 for v in r_ex[start:start + k]):
        raise DomainError("MAPE needs positive expected times")


def error(fn: ErrorFunction | str, r_ex: Sequence[float], r_ob: Sequence[float], k: int) -> float:
    """Error of the first ``k`` jobs of an instance against its plan.

    SQD is the root mean squared difference, MAPE the mean absolute
    percentage error relative to ``r_ex``, and TADJ_SQD weighs job ``i`` by
    ``i / k`` so that recent jobs count more.
    """
    fn = ErrorFunction.parse(fn)
    _check(fn, r_ex, r_ob, 0, k)
    return kernels.error_at(fn.code, r_ex, r_ob, 0, k)


def future_error(
    fn: ErrorFunction | str, r_ex: Sequence[float], r_ob: Sequence[float], k: int, N: int
) -> float:
    """Error of jobs ``k+1 .. N`` treated as a workflow of their own."""
    fn = ErrorFunction.parse(fn)
    if k == N:
        raise UndefinedFutureError("no future jobs remain at k = N")
    if not 0 <= k < N:
        raise DomainError(f"k={k} outside 0..{N - 1}")
    _check(fn, r_ex, r_ob, k, N - k)
    return kernels.error_at(fn.code, r_ex, r_ob, k, N - k)


def simulated_error(
    fn: ErrorFunction | str, r_ob_real: Sequence[float], r_ob_sim: Sequence[float], k: int
) -> float:
    """How far a simulated run strays from the real observations (E')."""
    return error(fn, r_ob_real, r_ob_sim, k)


@dataclass
class ErrorCache:
    """Past and future errors per fragment, checkpoint and error function.

    Checkpoint ``k`` (completed parallel sections, 1..shape.sections) lives in
    column ``k - 1``. Future errors at the final checkpoint are NaN.
    """

    workflow_id: str
    shape: SectionShape
    N: int
    timestamps: np.ndarray
    past: dict[ErrorFunction, np.ndarray]
    future: dict[ErrorFunction, np.ndarray]
    taus: dict[ErrorFunction, float] = field(default_factory=dict)
    _rows: dict[float, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=np.float64)
        if self.timestamps.size and np.any(np.diff(self.timestamps) <= 0):
            raise ValueError("cache timestamps must be strictly increasing")
        self._rows = {float(t): i for i, t in enumerate(self.timestamps)}

    def __len__(self) -> int:
        return int(self.timestamps.size)

    def __contains__(self, t: object) -> bool:
        return isinstance(t, (int, float)) and float(t) in self._rows

    @property
    def functions(self) -> tuple[ErrorFunction, ...]:
        return tuple(fn for fn in ALL_FUNCTIONS if fn in self.past)

    def row(self, t: float) -> int:
        try:
            return self._rows[float(t)]
        except KeyError:
            raise CacheLookupError(f"no cached fragment at t={t!r}") from None

    def column(self, k: int, fn: ErrorFunction) -> int:
        if fn not in self.past:
            raise CacheLookupError(f"cache holds no {fn.value} errors")
        if not 1 <= k <= self.shape.sections:
            raise CacheLookupError(f"no checkpoint k={k} (1..{self.shape.sections})")
        return k - 1

    def past_series(self, fn: ErrorFunction, k: int) -> np.ndarray:
        return self.past[fn][:, self.column(k, fn)]

    def future_series(self, fn: ErrorFunction, k: int) -> np.ndarray:
        return self.future[fn][:, self.column(k, fn)]

    def entry(self, t: float, k: int, fn: ErrorFunction) -> tuple[float, float | None]:
        """Exact lookup at a cached fragment timestamp."""
        fn = ErrorFunction.parse(fn)
        col = self.column(k, fn)
        r = self.row(t)
        fut = self.future[fn][r, col]
        return float(self.past[fn][r, col]), (None if np.isnan(fut) else float(fut))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(render_cache(self))


def build_error_cache(
    plan: EnactmentPlan,
    sim_log,
    shape: SectionShape,
    fns: Iterable[ErrorFunction | str] = ALL_FUNCTIONS,
    taus: Mapping[ErrorFunction | str, float] | None = None,
) -> ErrorCache:
    """Evaluate every error function at every checkpoint of every fragment.

    Failed simulation entries are skipped; a successful entry that does not
    cover all plan jobs is an error.
    """
    fns = [ErrorFunction.parse(f) for f in fns]
    if not fns:
        raise CacheBuildError("no error functions requested")
    if shape.N != plan.N:
        raise CacheBuildError(f"shape implies N={shape.N} but the plan has {plan.N} jobs")
    results = sim_log.results()
    if not results:
        raise CacheBuildError("simulation log has no successful fragments")
    stamps = sorted(results)
    obs = np.empty((len(stamps), plan.N))
    for row, t in enumerate(stamps):
        observed = results[t].observed
        if len(observed) != plan.N:
            raise CacheBuildError(
                f"fragment t={t!r} has {len(observed)} observations, plan needs {plan.N}"
            )
        obs[row] = observed
    ks = [k_real(k, shape) for k in range(1, shape.sections + 1)]
    r_ex = np.asarray(plan.r_ex, dtype=np.float64)
    past, future = {}, {}
    for fn in fns:
        past[fn], future[fn] = kernels.batch_errors(fn.code, r_ex, obs, ks)
    tau_map = {ErrorFunction.parse(f): float(v) for f, v in (taus or {}).items()}
    return ErrorCache(plan.identity, shape, plan.N, np.array(stamps), past, future, tau_map)


def cache_lookup(
    cache: ErrorCache, t_query: float, k: int, fn: ErrorFunction | str
) -> tuple[float, float | None]:
    """Entry of the nearest fragment starting at or before ``t_query``.

    Queries before the first fragment resolve to the first one.
    """
    fn = ErrorFunction.parse(fn)
    if not len(cache):
        raise CacheLookupError("cache is empty")
    col = cache.column(k, fn)
    r = kernels.floor_index(cache.timestamps, float(t_query))
    fut = cache.future[fn][r, col]
    return float(cache.past[fn][r, col]), (None if np.isnan(fut) else float(fut))


def low_error_set(cache: ErrorCache, fn: ErrorFunction | str, k: int, tau: float) -> frozenset:
    """Fragments whose past or future error at ``k`` is below ``tau``."""
    if not tau > 0:
        raise DomainError("tau must be positive")
    fn = ErrorFunction.parse(fn)
    past = cache.past_series(fn, k)
    fut = cache.future_series(fn, k)
    with np.errstate(invalid="ignore"):
        mask = (past < tau) | (fut < tau)
    return frozenset(float(t) for t in cache.timestamps[mask])


def _g9(v: float) -> str:
    return format(float(v), ".9g")


def render_cache(cache: ErrorCache) -> str:
    lines = [
        f"CACHE workflow={cache.workflow_id} sections={cache.shape.sections} "
        f"jobs_per_section={cache.shape.jobs_per_section} N={cache.N}"
    ]
    for fn in cache.functions:
        if fn in cache.taus:
            lines.append(f"TAU {fn.value} {_g9(cache.taus[fn])}")
    for fn in cache.functions:
        past, fut = cache.past[fn], cache.future[fn]
        for r, t in enumerate(cache.timestamps):
            for c in range(cache.shape.sections):
                line = f"ENTRY {fn.value} {float(t)!r} {c + 1} {_g9(past[r, c])}"
                if not np.isnan(fut[r, c]):
                    line += f" {_g9(fut[r, c])}"
                lines.append(line)
    return "\n".join(lines) + "\n"


def parse_cache(text: str) -> ErrorCache:
    header = None
    taus: dict[ErrorFunction, float] = {}
    raw: dict[ErrorFunction, dict[float, dict[int, tuple[float, float]]]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        try:
            if parts[0] == "CACHE":
                header = dict(p.split("=", 1) for p in parts[1:])
                header = (
                    header["workflow"],
                    SectionShape(int(header["sections"]), int(header["jobs_per_section"])),
                    int(header["N"]),
                )
            elif parts[0] == "TAU":
                taus[ErrorFunction.parse(parts[1])] = float(parts[2])
            elif parts[0] == "ENTRY":
                if len(parts) not in (5, 6):
                    raise ParseError("ENTRY takes fn, t, k, past and optional future", lineno)
                fn = ErrorFunction.parse(parts[1])
                fut = float(parts[5]) if len(parts) == 6 else float("nan")
                raw.setdefault(fn, {}).setdefault(float(parts[2]), {})[int(parts[3])] = (
                    float(parts[4]),
                    fut,
                )
            else:
                raise ParseError(f"unknown record {parts[0]!r}", lineno)
        except (KeyError, ValueError, DomainError) as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(f"malformed cache line: {exc}", lineno) from None
    if header is None:
        raise ParseError("missing CACHE header")
    workflow_id, shape, n = header
    stamps: list[float] | None = None
    past, future = {}, {}
    for fn, per_t in raw.items():
        ts = sorted(per_t)
        if stamps is None:
            stamps = ts
        elif ts != stamps:
            raise ParseError(f"{fn.value} entries cover different fragments")
        p = np.empty((len(ts), shape.sections))
        f = np.empty((len(ts), shape.sections))
        for r, t in enumerate(ts):
            cols = per_t[t]
            if sorted(cols) != list(range(1, shape.sections + 1)):
                raise ParseError(f"{fn.value} t={t!r} lacks some checkpoints")
            for c in range(shape.sections):
                p[r, c], f[r, c] = cols[c + 1]
        past[fn], future[fn] = p, f
    return ErrorCache(workflow_id, shape, n, np.array(stamps or []), past, future, taus)


def load_cache(path: str | Path) -> ErrorCache:
    return parse_cache(Path(path).read_text())
