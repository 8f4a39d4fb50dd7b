"""Fitting-based background workload prediction.

Given a running workflow's observed job times, the predictor searches the
fragment database for the offset whose cached past-error profile best
matches how the candidate fragments' simulations deviate from reality, and
then picks the fragment near that offset whose future error departs least
from its past error.
"""

from __future__ import annotations

import bisect
import enum
import random
import time
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import kernels
from .exceptions import ConsistencyError, DomainError, EmptyInputError
from .metrics import ErrorCache, ErrorFunction, simulated_error
from .traces import FilteredSet
from .workflow import EnactmentPlan, ObservedRun, case_i_jobs, k_real, remaining_projection


@dataclass(frozen=True)
class PredictorConfig:
    """Search parameters.

    ``S`` is the primary window width in seconds, ``Pi`` the convergence
    precision, ``I`` the iteration cap and ``P`` the number of offsets
    scored per iteration (also the cap on window members).
    ``secondary_span_ratio`` sets the width of the offset search region
    as a multiple of ``S``. ``absolute_gap`` switches the final selection
    from ``F - E`` to ``|F - E|``.
    """

    S: float = 1000.0
    Pi: float = 1.0
    I: int = 32
    P: int = 20
    secondary_span_ratio: float = 50.0
    fn: ErrorFunction = ErrorFunction.SQD
    E_epsilon: float = 0.0
    T_budget: float = 60.0
    seed: int = 0
    absolute_gap: bool = False
    reject_case_i: bool = False

    def __post_init__(self):
        object.__setattr__(self, "fn", ErrorFunction.parse(self.fn))
        if not (self.S > 0 and self.Pi > 0 and self.secondary_span_ratio > 0):
            raise DomainError("S, Pi and secondary_span_ratio must be positive")
        if self.I < 1 or self.P < 1:
            raise DomainError("I and P must be >= 1")
        if self.E_epsilon < 0 or not self.T_budget > 0:
            raise DomainError("E_epsilon must be >= 0 and T_budget positive")

    def echo(self) -> dict:
        return {
            "S": self.S, "Pi": self.Pi, "I": self.I, "P": self.P,
            "ratio": self.secondary_span_ratio, "fn": self.fn.value,
            "E_epsilon": self.E_epsilon, "T_budget": self.T_budget,
            "seed": self.seed, "abs_gap": self.absolute_gap,
        }


class Decision(enum.Enum):
    TRIGGER = "trigger"
    BELOW_THRESHOLD = "below_threshold"
    INSUFFICIENT_REMAINING = "insufficient_remaining"
    CASE_I_OUTLIER = "case_i_outlier"


def should_predict(
    current_error: float, cfg: PredictorConfig, plan: EnactmentPlan, run: ObservedRun
) -> Decision:
    """Decide whether a prediction is worth its cost at this checkpoint.

    ``run.observed`` holds the completed jobs; the remaining projected work
    must cover the prediction budget.
    """
    if run.k < 1:
        raise DomainError("a prediction needs at least one completed checkpoint")
    if not current_error > cfg.E_epsilon:
        return Decision.BELOW_THRESHOLD
    if remaining_projection(plan, len(run.observed)) < cfg.T_budget:
        return Decision.INSUFFICIENT_REMAINING
    if cfg.reject_case_i and case_i_jobs(plan, run):
        return Decision.CASE_I_OUTLIER
    return Decision.TRIGGER


def phi(
    x: float,
    members: Sequence[float],
    eprime: Mapping[float, float],
    cache: ErrorCache,
    t_init: float,
    S: float,
    k: int,
    fn: ErrorFunction | str,
) -> float:
    """Alignment cost of offset ``x`` for the window members around ``t_init``."""
    fn = ErrorFunction.parse(fn)
    try:
        values = [eprime[t] for t in members]
    except KeyError as exc:
        raise ConsistencyError(f"no E' value for window member {exc.args[0]!r}") from None
    return kernels.phi_batch(
        [x], list(members), values, cache.timestamps, cache.past_series(fn, k), t_init, S / 2
    )[0]


@dataclass(frozen=True)
class PredictionOutcome:
    t_target: float
    iterations: int
    d: float
    trajectory: tuple[float, ...]
    visited: tuple[float, ...] = ()
    truncated: bool = False

    def __post_init__(self):
        if not self.trajectory or self.trajectory[-1] != self.t_target:
            raise ValueError("t_target must be the last trajectory element")


def _open_slice(ts: list[float], lo: float, hi: float) -> tuple[int, int]:
    return bisect.bisect_right(ts, lo), bisect.bisect_left(ts, hi)


def _closest(sorted_vals: Sequence[float], target: float) -> float:
    i = bisect.bisect_left(sorted_vals, target)
    if i == 0:
        return sorted_vals[0]
    if i == len(sorted_vals):
        return sorted_vals[-1]
    before, after = sorted_vals[i - 1], sorted_vals[i]
    return before if target - before <= after - target else after


def predict(
    cfg: PredictorConfig,
    cache: ErrorCache,
    t_filt: FilteredSet,
    plan: EnactmentPlan,
    run: ObservedRun,
    sim_log,
) -> PredictionOutcome:
    """Approximate the fragment that mimics the running workflow's background load."""
    started = time.perf_counter()
    if not len(t_filt):
        raise EmptyInputError("the filtered fragment set is empty")
    shape = cache.shape
    if shape.N != plan.N or cache.workflow_id != plan.identity:
        raise ConsistencyError("error cache was built for a different workflow")
    if not 1 <= run.k < shape.sections:
        raise DomainError(f"prediction needs 1 <= k < {shape.sections}, got k={run.k}")
    m = k_real(run.k, shape)
    if len(run.observed) < m:
        raise ConsistencyError(f"run holds {len(run.observed)} observations, k={run.k} needs {m}")
    real = run.observed[:m]
    fn = cfg.fn
    col = cache.column(run.k, fn)
    past = cache.past[fn][:, col]
    gap = cache.future[fn][:, col] - past
    if cfg.absolute_gap:
        gap = np.abs(gap)
    ts = cache.timestamps.tolist()
    filt = list(t_filt.timestamps)
    for t in filt:
        if t not in cache:
            raise ConsistencyError(f"filtered fragment t={t!r} is not in the error cache")

    rng = random.Random(cfg.seed)
    half = cfg.S / 2
    span_half = cfg.secondary_span_ratio * cfg.S / 2
    eprime: dict[float, float] = {}

    def e_prime(t: float) -> float:
        v = eprime.get(t)
        if v is None:
            v = simulated_error(fn, real, sim_log.observed(t)[:m], m)
            eprime[t] = v
        return v

    t_init = rng.choice(filt)
    visited: list[float] = []
    seen: set[float] = set()
    trajectory: list[float] = []
    truncated = False
    for n in range(1, cfg.I + 1):
        lo, hi = _open_slice(ts, t_init - half, t_init + half)
        members = ts[lo:hi]
        if len(members) > cfg.P:
            members = sorted(rng.sample(members, cfg.P))
        values = [e_prime(t) for t in members]

        lo, hi = bisect.bisect_left(ts, t_init - span_half), bisect.bisect_right(ts, t_init + span_half)
        pool = [t for t in ts[lo:hi] if t not in seen]
        if not pool:
            break
        if len(pool) > cfg.P:
            pool = sorted(rng.sample(pool, cfg.P))
        scores = kernels.phi_batch(pool, members, values, cache.timestamps, past, t_init, half)
        best = min(scores)
        t_min = pool[scores.index(best)]
        visited.append(t_min)
        seen.add(t_min)

        lo, hi = _open_slice(ts, t_min - half, t_min + half)
        window = gap[lo:hi]
        t_target = ts[lo + int(np.argmin(window))]
        trajectory.append(t_target)
        t_init = _closest(filt, t_target)

        if n >= 2 and abs(trajectory[-1] - trajectory[-2]) < cfg.Pi:
            break
        if time.perf_counter() - started > cfg.T_budget:
            truncated = True
            break
    if not trajectory:
        raise ConsistencyError("no unvisited fragment lies within the secondary search span")
    return PredictionOutcome(
        trajectory[-1],
        len(trajectory),
        time.perf_counter() - started,
        tuple(trajectory),
        tuple(visited),
        truncated,
    )
