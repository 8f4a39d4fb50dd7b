"""Desk-scale inputs: a synthetic periodic trace, demo workflows and a demo cloud."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .traces import TraceArchive, TraceJob, _normalise

TINKER_VA = "VA=tinker,25,0,306176000"
TINKER_RC = "RC=1,5.0E-4,1073741824"


@dataclass(frozen=True)
class SyntheticProfile:
    """Shape of the generated load.

    Arrivals follow a Poisson process whose rate swings sinusoidally with
    relative amplitude ``burstiness`` (0 gives a homogeneous process) over
    ``period`` seconds. Runtimes are exponential with ``mean_runtime``.
    """

    n_jobs: int = 20000
    mean_interarrival: float = 60.0
    mean_runtime: float = 400.0
    burstiness: float = 0.8
    period: float = 20000.0
    max_cores: int = 4

    def __post_init__(self):
        if self.n_jobs < 1:
            raise ValueError("n_jobs must be >= 1")
        if not 0 <= self.burstiness <= 1:
            raise ValueError("burstiness must lie in [0, 1]")
        if self.mean_interarrival <= 0 or self.mean_runtime <= 0 or self.period <= 0:
            raise ValueError("time scales must be positive")
        if self.max_cores < 1:
            raise ValueError("max_cores must be >= 1")


def _arrivals(rng: np.random.Generator, p: SyntheticProfile) -> np.ndarray:
    # thinning against the peak rate keeps the process exact
    base = 1.0 / p.mean_interarrival
    peak = base * (1.0 + p.burstiness)
    out = np.empty(p.n_jobs)
    filled = 0
    t = 0.0
    while filled < p.n_jobs:
        batch = max(64, 2 * (p.n_jobs - filled))
        cand = t + np.cumsum(rng.exponential(1.0 / peak, batch))
        keep = rng.random(batch) * peak <= base * (
            1.0 + p.burstiness * np.sin(2.0 * math.pi * cand / p.period)
        )
        acc = cand[keep][: p.n_jobs - filled]
        out[filled:filled + acc.size] = acc
        filled += acc.size
        t = cand[-1]
    return out


def generate_synthetic_corpus(seed: int, profile: SyntheticProfile = SyntheticProfile()) -> TraceArchive:
    """Deterministic archive whose background pressure varies periodically."""
    rng = np.random.default_rng(seed)
    submits = np.round(_arrivals(rng, profile), 3)
    runtimes = np.maximum(np.round(rng.exponential(profile.mean_runtime, profile.n_jobs), 3), 1.0)
    cores = rng.integers(1, profile.max_cores + 1, profile.n_jobs)
    jobs = [
        TraceJob(str(i + 1), float(s), float(r), int(c))
        for i, (s, r, c) in enumerate(zip(submits, runtimes, cores))
    ]
    return _normalise(jobs)


def demo_description(
    sections: int = 3,
    vms: int = 4,
    jobs_per_vm: int = 2,
    head: float = 300.0,
    job: float = 250.0,
    tail: float = 10.0,
) -> str:
    """A head job, ``sections`` parallel sections and a tail job.

    Every middle VM stages its input and runs ``jobs_per_vm`` tracked
    compute jobs whose lengths alternate around ``job``.
    """
    head_def = f"VMDEF {TINKER_VA} {TINKER_RC} VAST=vast DATA=data"
    lines = ["# demo workflow", "PSSTART", head_def, f"VMSEQ N50500 C{head:g}!G"]
    for s in range(sections):
        lines += ["PSSTART", head_def]
        for v in range(vms):
            toks = ["N50500"]
            for j in range(jobs_per_vm):
                amount = job * (0.8 + 0.4 * ((s + v + j) % 3) / 2)
                toks.append(f"C{amount:g}!T{j + 1}")
            lines.append("VMSEQ " + " ".join(toks))
    lines += ["PSSTART", head_def, f"VMSEQ C{tail:g}!C"]
    return "\n".join(lines) + "\n"


def tcg_description() -> str:
    """Execution skeleton of the full-size chemistry workflow (N = 1202)."""
    head_def = f"VMDEF {TINKER_VA} {TINKER_RC} VAST=vast DATA=data"
    lines = ["PSSTART", head_def, "VMSEQ N50500 C22.333 C43200!G"]
    for _ in range(15):
        lines += ["PSSTART", head_def]
        for _v in range(20):
            lines.append("VMSEQ N50500 C2145!T1 C3573!T2 C1886!T3 C2!TC")
    lines += ["PSSTART", head_def, "VMSEQ C10.6!C"]
    return "\n".join(lines) + "\n"


DEMO_CLOUD = """\
# hosts shared by the workflow and the background tenants
PM count=2 cores=8 perf=5.0E-4 mem=17179869184
REPO name=vast bandwidth=104857600 latency=0.001
REPO name=data bandwidth=104857600 latency=0.001
"""

IDLE_CLOUD = """\
PM count=8 cores=8 perf=5.0E-4 mem=68719476736
REPO name=vast bandwidth=104857600 latency=0.001
REPO name=data bandwidth=104857600 latency=0.001
"""
