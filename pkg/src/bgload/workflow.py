"""Workflow execution descriptions, enactment plans and observed runs.

A description is a list of parallel sections. Each section opens with
``PSSTART``, defines its VM kind once with ``VMDEF`` and then lists one
``VMSEQ`` per VM::

    PSSTART
    VMDEF VA=tinker,25,0,306176000 RC=1,5.0E-4,1073741824 VAST=repo DATA=repo
    VMSEQ N50500 C22.333 C2145!T1 C3573!T2

``N<bytes>`` is a transfer against the DATA store, ``C<seconds>`` a compute
activity. A ``!label`` suffix on a compute token marks it as a tracked
workflow job; unlabeled tokens are setup overhead the enactor does not plan.
"""

from __future__ import annotations

import enum
import hashlib
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .exceptions import DomainError, ParseError, PlanError, StructureError

CASE_I_FACTOR = 10.0

_TOKEN = re.compile(r"^([NC])([0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)(?:!(\S+))?$")


@dataclass(frozen=True)
class VmDefinition:
    image_name: str
    boot_time: float
    copy_flag: int
    image_size: int
    cores: int
    core_performance: float
    memory: int
    image_store: str
    data_store: str

    def __post_init__(self):
        if self.boot_time < 0:
            raise ValueError("boot_time must be >= 0")
        if self.copy_flag not in (0, 1):
            raise ValueError("copy flag must be 0 or 1")
        if self.image_size <= 0 or self.memory <= 0:
            raise ValueError("image size and memory must be positive")
        if self.cores < 1 or not self.core_performance > 0:
            raise ValueError("cores must be >= 1 and core performance positive")

    @property
    def copies_image(self) -> bool:
        # flag 0: image copied to the host before boot
        return self.copy_flag == 0


@dataclass(frozen=True)
class VmActivity:
    kind: str  # "network" | "compute"
    amount: float
    label: str | None = None

    def __post_init__(self):
        if self.kind not in ("network", "compute"):
            raise ValueError(f"unknown activity kind {self.kind!r}")
        if not self.amount > 0:
            raise ValueError("activity amount must be positive")
        if self.label is not None and self.kind != "compute":
            raise ValueError("only compute activities can be tracked jobs")


@dataclass(frozen=True)
class ParallelSection:
    definition: VmDefinition
    vm_sequences: tuple[tuple[VmActivity, ...], ...]


@dataclass(frozen=True)
class WorkflowDescription:
    sections: tuple[ParallelSection, ...]

    def render(self) -> str:
        return render_workflow_description(self)


@dataclass(frozen=True)
class Job:
    index: int
    label: str
    r_ex: float
    section: int
    vm: int
    token: int


@dataclass(frozen=True)
class EnactmentPlan:
    jobs: tuple[Job, ...]

    @property
    def N(self) -> int:
        return len(self.jobs)

    @property
    def r_ex(self) -> tuple[float, ...]:
        return tuple(j.r_ex for j in self.jobs)

    def position_index(self) -> dict[tuple[int, int, int], int]:
        """Map (section, vm, token) to the 1-based job index."""
        return {(j.section, j.vm, j.token): j.index for j in self.jobs}

    @property
    def identity(self) -> str:
        h = hashlib.sha256()
        for j in self.jobs:
            h.update(f"{j.index}:{j.label}:{j.r_ex!r}:{j.section}.{j.vm}.{j.token};".encode())
        return h.hexdigest()[:16]


@dataclass(frozen=True)
class SectionShape:
    sections: int
    jobs_per_section: int

    def __post_init__(self):
        if self.sections < 1 or self.jobs_per_section < 1:
            raise ValueError("section shape entries must be >= 1")

    @property
    def N(self) -> int:
        return k_real(self.sections, self)

    @classmethod
    def from_plan(cls, plan: EnactmentPlan) -> SectionShape:
        """Infer the shape of a head / parallel sections / tail plan.

        The first and last description sections must hold exactly one
        tracked job each and every section between them the same count.
        """
        counts: dict[int, int] = {}
        for j in plan.jobs:
            counts[j.section] = counts.get(j.section, 0) + 1
        order = sorted(counts)
        if len(order) < 3:
            raise PlanError("need a head section, >= 1 parallel section and a tail section")
        head, *middle, tail = (counts[s] for s in order)
        if head != 1 or tail != 1 or len(set(middle)) != 1:
            raise PlanError(f"plan sections {list(counts.values())} do not form a regular shape")
        return cls(len(middle), middle[0])


@dataclass(frozen=True)
class ObservedRun:
    """A running workflow instance: its start time and the jobs done so far.

    ``observed[i - 1]`` holds r_ob of job ``i`` for every completed job.
    """

    t_curr: float
    observed: tuple[float, ...]
    k: int

    def __post_init__(self):
        if any(not v > 0 for v in self.observed):
            raise ValueError("observed execution times must be positive")


class Deviation(enum.Enum):
    CASE_I = "case_i"    # input-driven outlier
    CASE_II = "case_ii"  # background-load perturbation


def _number(text: str, what: str, lineno: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"bad {what} {text!r}", lineno) from None
    if not math.isfinite(value):
        raise ParseError(f"{what} must be finite, got {text!r}", lineno)
    return value


def _integer(text: str, what: str, lineno: int) -> int:
    value = _number(text, what, lineno)
    if value != int(value):
        raise ParseError(f"{what} must be an integer, got {text!r}", lineno)
    return int(value)


def _parse_vmdef(tokens: list[str], lineno: int) -> VmDefinition:
    props = {}
    for tok in tokens:
        key, sep, value = tok.partition("=")
        if not sep or key in props:
            raise ParseError(f"malformed VMDEF field {tok!r}", lineno)
        props[key] = value
    if set(props) != {"VA", "RC", "VAST", "DATA"}:
        raise ParseError(f"VMDEF needs VA, RC, VAST and DATA, got {sorted(props)}", lineno)
    va = props["VA"].split(",")
    rc = props["RC"].split(",")
    if len(va) != 4 or len(rc) != 3:
        raise ParseError("VA takes name,boot,copy,size and RC takes cores,perf,memory", lineno)
    try:
        return VmDefinition(
            image_name=va[0],
            boot_time=_number(va[1], "boot time", lineno),
            copy_flag=_integer(va[2], "copy flag", lineno),
            image_size=_integer(va[3], "image size", lineno),
            cores=_integer(rc[0], "core count", lineno),
            core_performance=_number(rc[1], "core performance", lineno),
            memory=_integer(rc[2], "memory", lineno),
            image_store=props["VAST"],
            data_store=props["DATA"],
        )
    except ValueError as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(str(exc), lineno) from None


def _parse_activity(tok: str, lineno: int) -> VmActivity:
    m = _TOKEN.match(tok)
    if not m:
        raise ParseError(f"bad activity token {tok!r}", lineno)
    kind, amount, label = m.groups()
    if kind == "N":
        if label is not None:
            raise ParseError(f"network token {tok!r} cannot carry a job label", lineno)
        return VmActivity("network", _integer(amount, "byte count", lineno))
    value = float(amount)
    if not value > 0:
        raise ParseError(f"compute amount must be positive in {tok!r}", lineno)
    return VmActivity("compute", value, label)


def parse_workflow_description(text: str) -> WorkflowDescription:
    sections: list[ParallelSection] = []
    current_def: VmDefinition | None = None
    current_seqs: list[tuple[VmActivity, ...]] = []
    in_section = False
    section_line = 0

    def close():
        if not in_section:
            return
        if current_def is None:
            raise StructureError("section has no VMDEF", section_line)
        if not current_seqs:
            raise StructureError("section has no VMSEQ", section_line)
        sections.append(ParallelSection(current_def, tuple(current_seqs)))

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tag, *rest = line.split()
        if tag == "PSSTART":
            if rest:
                raise ParseError("PSSTART takes no arguments", lineno)
            close()
            in_section, section_line = True, lineno
            current_def, current_seqs = None, []
        elif tag == "VMDEF":
            if not in_section:
                raise StructureError("VMDEF outside a PSSTART section", lineno)
            if current_def is not None:
                raise StructureError("second VMDEF in one section", lineno)
            current_def = _parse_vmdef(rest, lineno)
        elif tag == "VMSEQ":
            if current_def is None:
                raise StructureError("VMSEQ before any VMDEF", lineno)
            if not rest:
                raise ParseError("empty VMSEQ", lineno)
            current_seqs.append(tuple(_parse_activity(t, lineno) for t in rest))
        else:
            raise ParseError(f"unknown tag {tag!r}", lineno)
    close()
    if not sections:
        raise StructureError("description has no sections")
    return WorkflowDescription(tuple(sections))


def load_workflow_description(path: str | Path) -> WorkflowDescription:
    return parse_workflow_description(Path(path).read_text())


def _fmt(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def render_workflow_description(desc: WorkflowDescription) -> str:
    out = []
    for sec in desc.sections:
        d = sec.definition
        out.append("PSSTART")
        out.append(
            f"VMDEF VA={d.image_name},{_fmt(d.boot_time)},{d.copy_flag},{d.image_size} "
            f"RC={d.cores},{d.core_performance!r},{d.memory} "
            f"VAST={d.image_store} DATA={d.data_store}"
        )
        for seq in sec.vm_sequences:
            toks = []
            for act in seq:
                if act.kind == "network":
                    toks.append(f"N{int(act.amount)}")
                else:
                    toks.append(f"C{_fmt(act.amount)}" + (f"!{act.label}" if act.label else ""))
            out.append("VMSEQ " + " ".join(toks))
    return "\n".join(out) + "\n"


def build_plan(
    desc: WorkflowDescription, expectations: Mapping[str, float] | None = None
) -> EnactmentPlan:
    """Collect the labeled compute tokens into an ordered enactment plan.

    Jobs are ordered by projected completion time on a dedicated cloud:
    sections run back to back, VMs of a section in parallel, and only
    compute tokens take time (transfers and boots depend on the cloud and
    are left to the simulator). Ties fall back to (section, vm, token).
    """
    expectations = expectations or {}
    entries = []
    offset = 0.0
    for s, sec in enumerate(desc.sections):
        longest = 0.0
        for v, seq in enumerate(sec.vm_sequences):
            clock = offset
            seen: set[str] = set()
            for tok, act in enumerate(seq):
                if act.kind != "compute":
                    continue
                duration = act.amount
                if act.label is not None:
                    if act.label in seen:
                        raise PlanError(
                            f"label {act.label!r} repeats in section {s} VM {v}"
                        )
                    seen.add(act.label)
                    duration = float(expectations.get(act.label, act.amount))
                    if not duration > 0:
                        raise PlanError(f"expected time for {act.label!r} must be positive")
                clock += duration
                if act.label is not None:
                    entries.append((clock, s, v, tok, act.label, duration))
            longest = max(longest, clock - offset)
        offset += longest
    if not entries:
        raise PlanError("description has no tracked (labeled) jobs")
    entries.sort(key=lambda e: e[:4])
    jobs = tuple(
        Job(i, label, r_ex, s, v, tok)
        for i, (_, s, v, tok, label, r_ex) in enumerate(entries, start=1)
    )
    return EnactmentPlan(jobs)


def k_real(k: int, shape: SectionShape) -> int:
    """Job index reached after ``k`` completed parallel sections."""
    if not 0 <= k <= shape.sections:
        raise DomainError(f"k={k} outside 0..{shape.sections}")
    if k == 0:
        return 0
    if k < shape.sections:
        return 1 + shape.jobs_per_section * k
    return 1 + shape.jobs_per_section * k + 1


def classify_deviation(r_ex: float, r_ob: float, factor: float = CASE_I_FACTOR) -> Deviation:
    if r_ex <= 0 or r_ob <= 0:
        raise DomainError("execution times must be positive")
    return Deviation.CASE_I if r_ob >= factor * r_ex else Deviation.CASE_II


def case_i_jobs(plan: EnactmentPlan, run: ObservedRun, factor: float = CASE_I_FACTOR) -> list[int]:
    """Indices of completed jobs whose slowdown points at their input, not the cloud."""
    return [
        i
        for i, (ex, ob) in enumerate(zip(plan.r_ex, run.observed), start=1)
        if classify_deviation(ex, ob, factor) is Deviation.CASE_I
    ]


def expected_serial_duration(plan: EnactmentPlan, run: ObservedRun) -> float:
    done = len(run.observed)
    if done > plan.N:
        raise DomainError("run has more observations than the plan has jobs")
    return sum(run.observed) + sum(plan.r_ex[done:])


def remaining_projection(plan: EnactmentPlan, done: int) -> float:
    return sum(plan.r_ex[done:])


def observed_prefix(values: Sequence[float], shape: SectionShape, k: int) -> tuple[float, ...]:
    """Slice a full per-job series down to the jobs complete at checkpoint ``k``."""
    m = k_real(k, shape)
    if len(values) < m:
        raise DomainError(f"series has {len(values)} values, checkpoint needs {m}")
    return tuple(values[:m])
