"""Discrete-event private cloud simulator.

Physical machines share their CPU capacity and repositories their bandwidth
among active consumers by max-min fairness. Background trace jobs each get a
VM for their recorded runtime; the workflow description runs on top of
them, section by section, and the simulator reports how long each tracked
job took.

Resource model
--------------
* A compute activity of ``A`` seconds on a VM with ``c`` cores of nominal
  per-core rate ``p`` needs ``A * c * p`` units of work and may consume at
  most ``c * p`` units per second. A machine provides ``cores * perf`` units
  per second, split max-min among its running compute activities.
* A transfer of ``B`` bytes waits for the repository latency and then
  shares the repository bandwidth max-min with every other transfer.
* VMs queue FIFO and are placed first-fit on a machine with enough free
  memory and uncommitted cores. When every machine's cores are committed,
  the VM goes to the first machine with enough memory and CPU is
  overcommitted.
"""

from __future__ import annotations

import heapq
import time
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from . import kernels
from .exceptions import (
    CapacityError,
    ConfigError,
    ParseError,
    SimulationError,
    WarmupError,
)
from .traces import FragmentRef, TraceArchive, TraceJob, fragment_jobs
from .workflow import EnactmentPlan, WorkflowDescription

INF = float("inf")


@dataclass(frozen=True)
class PhysicalMachine:
    cores: int
    core_performance: float
    memory: int

    @property
    def capacity(self) -> float:
        return self.cores * self.core_performance


@dataclass(frozen=True)
class Repository:
    name: str
    bandwidth: float
    latency: float


@dataclass(frozen=True)
class CloudModel:
    machines: tuple[PhysicalMachine, ...]
    repositories: tuple[Repository, ...]

    def __post_init__(self):
        if not self.machines or not self.repositories:
            raise ConfigError("a cloud needs at least one machine and one repository")
        names = [r.name for r in self.repositories]
        if len(set(names)) != len(names):
            raise ConfigError("repository names must be unique")

    def repository(self, name: str) -> Repository:
        for r in self.repositories:
            if r.name == name:
                return r
        raise ConfigError(f"unknown repository {name!r}")

    def render(self) -> str:
        lines = []
        for pm in self.machines:
            lines.append(f"PM count=1 cores={pm.cores} perf={pm.core_performance!r} mem={pm.memory}")
        for r in self.repositories:
            lines.append(f"REPO name={r.name} bandwidth={r.bandwidth!r} latency={r.latency!r}")
        return "\n".join(lines) + "\n"


_PM_KEYS = {"count": int, "cores": int, "perf": float, "mem": int}
_REPO_KEYS = {"name": str, "bandwidth": float, "latency": float}


def _kv(tokens: list[str], schema: dict, lineno: int) -> dict:
    out = {}
    for tok in tokens:
        key, sep, value = tok.partition("=")
        if not sep or key not in schema:
            raise ConfigError(f"line {lineno}: unknown key in {tok!r}")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        conv = schema[key]
        try:
            num = conv(value) if conv is not int else int(float(value))
        except ValueError:
            raise ConfigError(f"line {lineno}: bad value for {key}: {value!r}") from None
        if conv is int and float(value) != num:
            raise ConfigError(f"line {lineno}: {key} must be an integer")
        out[key] = num
    missing = set(schema) - set(out)
    if missing:
        raise ConfigError(f"line {lineno}: missing keys {sorted(missing)}")
    return out


def build_cloud(text: str) -> CloudModel:
    """Parse ``PM count= cores= perf= mem=`` and ``REPO name= bandwidth= latency=`` lines."""
    machines: list[PhysicalMachine] = []
    repos: list[Repository] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tag, *rest = line.split()
        if tag == "PM":
            kv = _kv(rest, _PM_KEYS, lineno)
            if kv["count"] <= 0 or kv["cores"] <= 0 or kv["perf"] <= 0 or kv["mem"] <= 0:
                raise ConfigError(f"line {lineno}: PM capacities must be positive")
            machines.extend(
                PhysicalMachine(kv["cores"], kv["perf"], kv["mem"]) for _ in range(kv["count"])
            )
        elif tag == "REPO":
            kv = _kv(rest, _REPO_KEYS, lineno)
            if kv["bandwidth"] <= 0 or kv["latency"] < 0:
                raise ConfigError(f"line {lineno}: bandwidth must be positive, latency >= 0")
            if any(r.name == kv["name"] for r in repos):
                raise ConfigError(f"line {lineno}: duplicate repository {kv['name']!r}")
            repos.append(Repository(kv["name"], kv["bandwidth"], kv["latency"]))
        else:
            raise ConfigError(f"line {lineno}: unknown entry {tag!r}")
    return CloudModel(tuple(machines), tuple(repos))


def load_cloud(path: str | Path) -> CloudModel:
    return build_cloud(Path(path).read_text())


@dataclass(frozen=True)
class SimConfig:
    """Simulation knobs.

    Background VM shape defaults to the first VMDEF of the workflow (image
    size, boot time, core performance) with 1 GiB of memory. The engine
    draws no random numbers; ``seed`` is carried for provenance.
    """

    warmup_jobs: int = 50
    background_vm_image: int | None = None
    background_vm_memory: int = 1 << 30
    background_vm_boot: float | None = None
    background_vm_perf: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.warmup_jobs < 0:
            raise ValueError("warmup_jobs must be >= 0")


@dataclass(frozen=True)
class SimResult:
    """Simulated execution of one workflow instance.

    ``observed[i - 1]`` is the simulated duration of tracked job ``i``.
    """

    observed: tuple[float, ...]
    workflow_makespan: float
    vm_count: int
    events: int
    workflow_start: float = 0.0


@dataclass(frozen=True)
class SimFailure:
    reason: str


@dataclass
class SimAudit:
    """Optional instrumentation filled in by :func:`simulate`.

    ``flows`` holds ``(kind, demanded, segments)`` for every finished
    activity, where segments are ``(t0, t1, rate)`` in work units (compute)
    or bytes (network) per second. ``checks`` counts capacity checks and
    ``violations`` lists any ``(time, pool, used, capacity)`` overshoot.
    """

    flows: list = field(default_factory=list)
    checks: int = 0
    violations: list = field(default_factory=list)
    section_spans: list = field(default_factory=list)


class _Flow:
    __slots__ = (
        "compute", "demand", "amount", "remaining", "rate", "seg_start",
        "elapsed", "version", "pool", "owner", "segments",
    )

    def __init__(self, compute, demand, amount, pool, owner, audit):
        self.compute = compute
        self.demand = demand
        self.amount = amount
        self.remaining = amount
        self.rate = 0.0
        self.seg_start = 0.0
        self.elapsed = 0.0
        self.version = 0
        self.pool = pool
        self.owner = owner
        self.segments = [] if audit else None

    def work_rate(self):
        return self.rate * self.demand if self.compute else self.rate


class _Pool:
    __slots__ = ("name", "capacity", "compute", "flows")

    def __init__(self, name, capacity, compute):
        self.name = name
        self.capacity = capacity
        self.compute = compute
        self.flows = []


class _Host:
    __slots__ = ("spec", "free_memory", "free_cores", "pool")

    def __init__(self, idx, spec):
        self.spec = spec
        self.free_memory = spec.memory
        self.free_cores = spec.cores
        self.pool = _Pool(f"pm{idx}", spec.capacity, True)


class _VM:
    __slots__ = (
        "cores", "perf", "memory", "image_size", "boot", "copies", "image_repo",
        "data_repo", "activities", "pos", "host", "background", "section", "tracked",
    )

    def __init__(self, cores, perf, memory, image_size, boot, copies, image_repo,
                 data_repo, activities, background, section=-1, tracked=None):
        self.cores = cores
        self.perf = perf
        self.memory = memory
        self.image_size = image_size
        self.boot = boot
        self.copies = copies
        self.image_repo = image_repo
        self.data_repo = data_repo
        self.activities = activities
        self.pos = -1
        self.host = None
        self.background = background
        self.section = section
        self.tracked = tracked or {}


# event kinds
_SUBMIT, _WF_START, _BOOTED, _LATENCY, _FLOW_DONE = range(5)


class _Engine:
    def __init__(self, desc, plan, cloud, fragment, cfg, audit):
        self.desc = desc
        self.cloud = cloud
        self.cfg = cfg
        self.audit = audit
        self.now = 0.0
        self.heap = []
        self.seq = 0
        self.events = 0
        self.hosts = [_Host(i, pm) for i, pm in enumerate(cloud.machines)]
        self.repos = {
            r.name: (r, _Pool(f"repo:{r.name}", r.bandwidth, False)) for r in cloud.repositories
        }
        self.pools = [h.pool for h in self.hosts] + [p for _, p in self.repos.values()]
        self.dirty = {}
        self.queue = deque()
        self.vm_count = 0
        self.started_bg = 0
        self.wf_start = None
        self.wf_done = None
        self.section = -1
        self.section_left = 0
        self.positions = plan.position_index()
        self.observed = [None] * plan.N
        self.fragment = fragment

        first = desc.sections[0].definition
        self.bg_image = cfg.background_vm_image or first.image_size
        self.bg_boot = first.boot_time if cfg.background_vm_boot is None else cfg.background_vm_boot
        self.bg_perf = cfg.background_vm_perf or first.core_performance
        self.bg_repo = cloud.repositories[0].name
        for sec in desc.sections:
            cloud.repository(sec.definition.image_store)
            cloud.repository(sec.definition.data_store)
        self.max_cores = max(pm.cores for pm in cloud.machines)
        self.max_memory = max(pm.memory for pm in cloud.machines)

    # -- scheduling primitives -------------------------------------------
    def push(self, t, kind, a=None, b=None):
        self.seq += 1
        heapq.heappush(self.heap, (t, self.seq, kind, a, b))

    def add_flow(self, vm, compute, amount, pool):
        demand = vm.cores * vm.perf if compute else INF
        f = _Flow(compute, demand, amount, pool, vm, self.audit is not None)
        f.seg_start = self.now
        pool.flows.append(f)
        self.dirty[pool] = None

    def recompute(self, pool):
        flows = pool.flows
        if not flows:
            return
        allocs = kernels.maxmin_share(pool.capacity, [f.demand for f in flows])
        now = self.now
        for f, a in zip(flows, allocs):
            if pool.compute:
                rate = 1.0 if a == f.demand else a / f.demand
            else:
                rate = a
            if rate == f.rate:
                continue
            if f.rate > 0.0:
                span = now - f.seg_start
                f.remaining -= f.rate * span
                f.elapsed += span
                if f.segments is not None:
                    f.segments.append((f.seg_start, now, f.work_rate()))
                if f.remaining < 0.0:
                    f.remaining = 0.0
            f.seg_start = now
            f.rate = rate
            f.version += 1
            self.push(now + f.remaining / rate, _FLOW_DONE, f, f.version)

    def check_capacity(self):
        audit = self.audit
        for pool in self.pools:
            if not pool.flows:
                continue
            used = sum(f.work_rate() for f in pool.flows)
            audit.checks += 1
            if used > pool.capacity * (1.0 + 1e-9):
                audit.violations.append((self.now, pool.name, used, pool.capacity))

    # -- VM lifecycle ----------------------------------------------------
    def request(self, vm):
        if vm.cores > self.max_cores or vm.memory > self.max_memory or not any(
            h.spec.cores >= vm.cores and h.spec.memory >= vm.memory for h in self.hosts
        ):
            raise CapacityError(
                f"VM with {vm.cores} cores / {vm.memory} B memory fits no machine"
            )
        self.vm_count += 1
        self.queue.append(vm)
        self.place_queued()

    def place_queued(self):
        queue = self.queue
        while queue:
            vm = queue[0]
            host = None
            for h in self.hosts:
                if h.free_memory >= vm.memory and h.free_cores >= vm.cores:
                    host = h
                    break
            else:
                # no idle cores anywhere: overcommit the first host with memory
                for h in self.hosts:
                    if h.free_memory >= vm.memory and h.spec.cores >= vm.cores:
                        host = h
                        break
            if host is None:
                return
            queue.popleft()
            host.free_memory -= vm.memory
            host.free_cores -= vm.cores
            vm.host = host
            if vm.copies:
                self.transfer(vm, vm.image_size, vm.image_repo)
            else:
                self.boot(vm)

    def transfer(self, vm, nbytes, repo_name):
        repo, pool = self.repos[repo_name]
        if repo.latency > 0.0:
            self.push(self.now + repo.latency, _LATENCY, vm, (nbytes, pool))
        else:
            self.add_flow(vm, False, nbytes, pool)

    def boot(self, vm):
        vm.pos = -1
        if vm.boot > 0.0:
            self.push(self.now + vm.boot, _BOOTED, vm)
        else:
            self.advance(vm)

    def advance(self, vm):
        vm.pos += 1
        if vm.pos == len(vm.activities):
            self.terminate(vm)
            return
        kind, amount = vm.activities[vm.pos]
        if kind == "compute":
            if vm.background and vm.pos == 0:
                self.started_bg += 1
                if self.wf_start is None and self.started_bg == self.cfg.warmup_jobs:
                    self.push(self.now, _WF_START)
            self.add_flow(vm, True, amount, vm.host.pool)
        else:
            self.transfer(vm, amount, vm.data_repo)

    def terminate(self, vm):
        vm.host.free_memory += vm.memory
        vm.host.free_cores += vm.cores
        vm.host = None
        if not vm.background:
            self.section_left -= 1
            if self.section_left == 0:
                if self.audit is not None:
                    self.audit.section_spans[-1][1] = self.now
                self.start_section(self.section + 1)
        self.place_queued()

    def flow_done(self, f):
        f.pool.flows.remove(f)
        self.dirty[f.pool] = None
        final = f.remaining / f.rate
        f.elapsed += final
        if f.segments is not None:
            f.segments.append((f.seg_start, self.now, f.work_rate()))
            total = f.amount * f.demand if f.compute else f.amount
            self.audit.flows.append(("compute" if f.compute else "network", total, f.segments))
        vm = f.owner
        if vm.pos == -1:  # image transfer before boot
            self.boot(vm)
            return
        if f.compute and vm.tracked:
            idx = vm.tracked.get(vm.pos)
            if idx is not None:
                self.observed[idx - 1] = f.elapsed
        self.advance(vm)

    # -- workflow --------------------------------------------------------
    def start_section(self, s):
        if s == len(self.desc.sections):
            self.wf_done = self.now
            return
        self.section = s
        sec = self.desc.sections[s]
        d = sec.definition
        self.section_left = len(sec.vm_sequences)
        if self.audit is not None:
            self.audit.section_spans.append([self.now, None])
        for v, seq in enumerate(sec.vm_sequences):
            tracked = {}
            for tok, act in enumerate(seq):
                if act.label is not None:
                    tracked[tok] = self.positions[(s, v, tok)]
            vm = _VM(
                d.cores, d.core_performance, d.memory, d.image_size, d.boot_time,
                d.copies_image, d.image_store, d.data_store,
                [(a.kind, a.amount) for a in seq], False, s, tracked,
            )
            self.request(vm)

    def run(self) -> SimResult:
        cfg = self.cfg
        if len(self.fragment) < cfg.warmup_jobs:
            raise WarmupError(
                f"fragment has {len(self.fragment)} jobs, warm-up needs {cfg.warmup_jobs}"
            )
        for job in self.fragment:
            self.push(job.submit_time, _SUBMIT, job)
        if cfg.warmup_jobs == 0:
            self.push(0.0, _WF_START)
        heap = self.heap
        while heap and self.wf_done is None:
            t = heap[0][0]
            self.now = t
            while heap and heap[0][0] == t:
                _, _, kind, a, b = heapq.heappop(heap)
                if kind == _FLOW_DONE:
                    if a.version != b:
                        continue
                    self.flow_done(a)
                elif kind == _SUBMIT:
                    self.request(_VM(
                        a.cores, self.bg_perf, cfg.background_vm_memory, self.bg_image,
                        self.bg_boot, True, self.bg_repo, self.bg_repo,
                        [("compute", a.runtime)], True,
                    ))
                elif kind == _LATENCY:
                    self.add_flow(a, False, b[0], b[1])
                elif kind == _BOOTED:
                    self.advance(a)
                elif kind == _WF_START:
                    if self.wf_start is None:
                        self.wf_start = t
                        self.start_section(0)
                self.events += 1
                if self.wf_done is not None:
                    break
            if self.dirty:
                for pool in self.dirty:
                    self.recompute(pool)
                self.dirty.clear()
            if self.audit is not None:
                self.check_capacity()
        if self.wf_done is None:
            if self.wf_start is None:
                raise WarmupError("warm-up job count never reached")
            raise SimulationError("event queue drained before the workflow finished")
        if any(v is None for v in self.observed):
            raise SimulationError("some tracked jobs were never observed")
        return SimResult(
            tuple(self.observed),
            self.wf_done - self.wf_start,
            self.vm_count,
            self.events,
            self.wf_start,
        )


def simulate(
    desc: WorkflowDescription,
    plan: EnactmentPlan,
    cloud: CloudModel,
    fragment: Sequence[TraceJob],
    cfg: SimConfig = SimConfig(),
    audit: SimAudit | None = None,
) -> SimResult:
    """Run the workflow on ``cloud`` with ``fragment`` as background load.

    The fragment must be re-based so that it starts at 0. The first
    workflow section is submitted once the ``warmup_jobs``-th background
    job starts computing; sections are barriers.
    """
    return _Engine(desc, plan, cloud, list(fragment), cfg, audit).run()


class SimLog:
    """Per-fragment simulation outcomes keyed by fragment timestamp."""

    def __init__(self, entries: dict[float, SimResult | SimFailure] | None = None,
                 t_sim: float | None = None):
        self.entries = dict(sorted((entries or {}).items()))
        self.t_sim = t_sim

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, t: float) -> SimResult | SimFailure:
        return self.entries[t]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, SimLog) and self.entries == other.entries

    def results(self) -> dict[float, SimResult]:
        return {t: r for t, r in self.entries.items() if isinstance(r, SimResult)}

    def failures(self) -> dict[float, SimFailure]:
        return {t: r for t, r in self.entries.items() if isinstance(r, SimFailure)}

    def observed(self, t: float) -> tuple[float, ...]:
        entry = self.entries.get(float(t))
        if not isinstance(entry, SimResult):
            from .exceptions import ConsistencyError

            raise ConsistencyError(f"simulation log has no result for t={t!r}")
        return entry.observed

    def render(self) -> str:
        lines = []
        for t, entry in self.entries.items():
            if isinstance(entry, SimFailure):
                reason = " ".join(entry.reason.split())
                lines.append(f"FRAG {t!r} FAILED {reason}")
                continue
            lines.append(
                f"FRAG {t!r} start={entry.workflow_start:.6f} makespan={entry.workflow_makespan:.6f} "
                f"vms={entry.vm_count} events={entry.events}"
            )
            for i, v in enumerate(entry.observed, start=1):
                lines.append(f"JOB {i} {v:.6f}")
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.render())

    @classmethod
    def parse(cls, text: str) -> SimLog:
        entries: dict[float, SimResult | SimFailure] = {}
        current = None

        def flush():
            if current is not None:
                t, meta, jobs = current
                entries[t] = SimResult(
                    tuple(jobs),
                    float(meta.get("makespan", "nan")),
                    int(meta.get("vms", 0)),
                    int(meta.get("events", 0)),
                    float(meta.get("start", 0.0)),
                )

        for lineno, line in enumerate(text.splitlines(), start=1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            try:
                if parts[0] == "FRAG":
                    flush()
                    current = None
                    t = float(parts[1])
                    if t in entries:
                        raise ParseError(f"duplicate fragment {t!r}", lineno)
                    if len(parts) > 2 and parts[2] == "FAILED":
                        entries[t] = SimFailure(" ".join(parts[3:]))
                    else:
                        meta = dict(p.split("=", 1) for p in parts[2:])
                        current = (t, meta, [])
                elif parts[0] == "JOB":
                    if current is None:
                        raise ParseError("JOB line outside a fragment", lineno)
                    idx = int(parts[1])
                    if idx != len(current[2]) + 1:
                        raise ParseError(f"job index {idx} out of order", lineno)
                    current[2].append(float(parts[2]))
                else:
                    raise ParseError(f"unknown record {parts[0]!r}", lineno)
            except (ValueError, IndexError) as exc:
                if isinstance(exc, ParseError):
                    raise
                raise ParseError(f"malformed simulation log line: {exc}", lineno) from None
        flush()
        return cls(entries)

    @classmethod
    def load(cls, path: str | Path) -> SimLog:
        return cls.parse(Path(path).read_text())


def _simulate_one(args):
    desc, plan, cloud, jobs, cfg = args
    start = time.perf_counter()
    try:
        outcome = simulate(desc, plan, cloud, jobs, cfg)
    except SimulationError as exc:
        outcome = SimFailure(f"{type(exc).__name__}: {exc}")
    return outcome, time.perf_counter() - start


def batch_simulate(
    desc: WorkflowDescription,
    plan: EnactmentPlan,
    cloud: CloudModel,
    fragments: Sequence[FragmentRef],
    archive: TraceArchive,
    cfg: SimConfig = SimConfig(),
    parallel: int = 1,
) -> SimLog:
    """Simulate every fragment independently.

    Failures are recorded per entry. ``SimLog.t_sim`` is the mean wall time
    of one fragment simulation in seconds.
    """
    if not fragments:
        raise ValueError("no fragments to simulate")
    tasks = [(desc, plan, cloud, fragment_jobs(archive, ref), cfg) for ref in fragments]
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            outcomes = list(pool.map(_simulate_one, tasks, chunksize=max(1, len(tasks) // (4 * parallel))))
    else:
        outcomes = [_simulate_one(t) for t in tasks]
    entries = {ref.t: out for ref, (out, _) in zip(fragments, outcomes)}
    t_sim = sum(w for _, w in outcomes) / len(outcomes)
    return SimLog(entries, t_sim)
