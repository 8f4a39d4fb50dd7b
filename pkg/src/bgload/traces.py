"""Historic workload traces and the fragment index built over them.

Traces use the first five columns of the standard workload format
(job id, submit, wait, run, processors), so Grid Workloads Archive files
import without conversion. Every archive is normalised so that its first
submission happens at time 0.
"""

from __future__ import annotations

import bisect
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .exceptions import EmptyInputError, FragmentLookupError, ParseError

_COMMENT_PREFIXES = ("#", ";")
_SHIFT_HEADER = "# origin_shift="


@dataclass(frozen=True, slots=True)
class TraceJob:
    job_id: str
    submit_time: float
    runtime: float
    cores: int

    def __post_init__(self):
        if self.runtime <= 0:
            raise ValueError(f"job {self.job_id}: runtime must be positive")
        if self.cores < 1:
            raise ValueError(f"job {self.job_id}: cores must be >= 1")
        if self.submit_time < 0:
            raise ValueError(f"job {self.job_id}: negative submit time")


@dataclass(frozen=True)
class TraceArchive:
    """Jobs on one continuous timeline, sorted by submit time.

    ``origin_shift`` is the amount subtracted from the source timestamps and
    ``dropped`` counts rows rejected during import (non-positive runtime or
    processor count).
    """

    jobs: tuple[TraceJob, ...]
    origin_shift: float = 0.0
    dropped: int = 0
    submits: tuple[float, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "submits", tuple(j.submit_time for j in self.jobs))

    def __len__(self) -> int:
        return len(self.jobs)

    @property
    def end_time(self) -> float:
        """Last submit time plus the runtime of that last job."""
        if not self.jobs:
            return 0.0
        last = self.jobs[-1]
        return last.submit_time + last.runtime

    def render(self) -> str:
        return render_trace(self)


@dataclass(frozen=True, slots=True)
class FragmentRef:
    t: float
    duration: float

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("fragment duration must be positive")


@dataclass(frozen=True)
class FilteredSet:
    timestamps: tuple[float, ...]
    budget: int
    _members: frozenset = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_members", frozenset(self.timestamps))

    def __len__(self) -> int:
        return len(self.timestamps)

    def __contains__(self, t: object) -> bool:
        return t in self._members


def _normalise(jobs: Iterable[TraceJob], shift: float = 0.0, dropped: int = 0) -> TraceArchive:
    ordered = sorted(jobs, key=lambda j: j.submit_time)
    if not ordered:
        raise EmptyInputError("trace archive is empty")
    base = ordered[0].submit_time
    if base:
        ordered = [
            TraceJob(j.job_id, j.submit_time - base, j.runtime, j.cores) for j in ordered
        ]
    return TraceArchive(tuple(ordered), origin_shift=shift + base, dropped=dropped)


def parse_trace(text: str) -> TraceArchive:
    """Parse standard-workload-format text into a normalised archive.

    Rows with a non-positive runtime or processor count are dropped and
    counted; an archive with no surviving rows raises :class:`EmptyInputError`.
    """
    jobs = []
    dropped = 0
    shift = 0.0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith(_SHIFT_HEADER):
            shift = float(line[len(_SHIFT_HEADER):])
            continue
        if line.startswith(_COMMENT_PREFIXES):
            continue
        fields = line.split()
        if len(fields) < 5:
            raise ParseError(f"expected at least 5 fields, got {len(fields)}", lineno)
        try:
            submit = float(fields[1])
            float(fields[2])  # wait time: validated, otherwise unused
            runtime = float(fields[3])
            procs = float(fields[4])
        except ValueError:
            raise ParseError(f"non-numeric field in {line!r}", lineno) from None
        if not (math.isfinite(submit) and math.isfinite(runtime) and math.isfinite(procs)):
            raise ParseError(f"non-finite field in {line!r}", lineno)
        if runtime <= 0 or procs <= 0 or submit < 0:
            dropped += 1
            continue
        if procs != int(procs):
            raise ParseError(f"fractional processor count in {line!r}", lineno)
        jobs.append(TraceJob(fields[0], submit, runtime, int(procs)))
    if not jobs:
        raise EmptyInputError(f"no usable jobs in trace ({dropped} dropped)")
    return _normalise(jobs, shift, dropped)


def load_trace(path: str | Path) -> TraceArchive:
    return parse_trace(Path(path).read_text())


def render_trace(archive: TraceArchive) -> str:
    lines = [f"{_SHIFT_HEADER}{archive.origin_shift!r}"]
    for j in archive.jobs:
        lines.append(f"{j.job_id} {j.submit_time!r} 0 {j.runtime!r} {j.cores}")
    return "\n".join(lines) + "\n"


def concat_archives(archives: Sequence[TraceArchive], gap: float = 0.0) -> TraceArchive:
    """Append archives on one timeline.

    Archive ``i+1`` starts ``gap`` seconds after the last submission of
    archive ``i``.
    """
    if gap < 0:
        raise ValueError("gap must be non-negative")
    if not archives:
        raise EmptyInputError("no archives to concatenate")
    if len(archives) == 1:
        return archives[0]
    jobs: list[TraceJob] = []
    offset = 0.0
    for n, arch in enumerate(archives):
        if not arch.jobs:
            raise EmptyInputError(f"archive {n} is empty")
        first = arch.jobs[0].submit_time
        for j in arch.jobs:
            jobs.append(TraceJob(j.job_id, j.submit_time - first + offset, j.runtime, j.cores))
        offset = jobs[-1].submit_time + gap
    dropped = sum(a.dropped for a in archives)
    return _normalise(jobs, archives[0].origin_shift, dropped)


def fragment_duration(serial_seconds: float, factor: float = 3.0) -> float:
    """Fragment length covering ``factor`` times the workflow's serial runtime."""
    return factor * serial_seconds


def enumerate_fragments(archive: TraceArchive, duration: float) -> list[FragmentRef]:
    """One fragment per distinct submit time whose window fits the archive."""
    if not duration > 0:
        raise ValueError("duration must be positive")
    if not archive.jobs:
        return []
    end = archive.end_time
    refs = []
    last = None
    for t in archive.submits:
        if t == last:
            continue
        last = t
        if t + duration <= end:
            refs.append(FragmentRef(t, duration))
    return refs


def fragment_jobs(archive: TraceArchive, ref: FragmentRef) -> list[TraceJob]:
    """Jobs submitted inside ``[ref.t, ref.t + ref.duration]``, re-based to 0."""
    lo = bisect.bisect_left(archive.submits, ref.t)
    if lo == len(archive.submits) or archive.submits[lo] != ref.t:
        raise FragmentLookupError(f"no fragment starts at t={ref.t!r}")
    hi = bisect.bisect_right(archive.submits, ref.t + ref.duration)
    return [
        TraceJob(j.job_id, j.submit_time - ref.t, j.runtime, j.cores)
        for j in archive.jobs[lo:hi]
    ]


def filter_budget(max_prediction_time: float, mean_sim_time: float) -> int:
    """Largest fragment count strictly below ``max_prediction_time / mean_sim_time``."""
    if max_prediction_time <= 0 or mean_sim_time <= 0:
        raise ValueError("times must be positive")
    ratio = max_prediction_time / mean_sim_time
    budget = math.floor(ratio)
    if budget >= ratio:
        budget -= 1
    return max(budget, 1)


PrefilterStrategy = Callable[[Sequence[FragmentRef], int, random.Random], Sequence[FragmentRef]]


def uniform_strategy(refs: Sequence[FragmentRef], budget: int, rng: random.Random):
    if budget >= len(refs):
        return list(refs)
    return rng.sample(list(refs), budget)


def prefilter(
    refs: Sequence[FragmentRef],
    budget: int,
    seed: int = 0,
    strategy: PrefilterStrategy | None = None,
) -> FilteredSet:
    """Reduce the fragment index to at most ``budget`` members."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if not refs:
        raise EmptyInputError("no fragments to filter")
    strategy = strategy or uniform_strategy
    chosen = strategy(refs, budget, random.Random(seed))
    stamps = tuple(sorted({r.t for r in chosen}))
    if len(stamps) > budget:
        raise ValueError("prefilter strategy exceeded its budget")
    return FilteredSet(stamps, budget)
