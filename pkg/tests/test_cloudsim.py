import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bgload.cloudsim import (
    SimAudit,
    SimConfig,
    SimFailure,
    SimLog,
    SimResult,
    batch_simulate,
    build_cloud,
    simulate,
)
from bgload.corpus import IDLE_CLOUD
from bgload.exceptions import CapacityError, ConfigError, ConsistencyError, ParseError, WarmupError
from bgload.traces import FragmentRef, TraceArchive, TraceJob
from bgload.workflow import build_plan, parse_workflow_description

NO_COPY = "VMDEF VA=img,0,1,1000 RC=1,1.0,1024 VAST=s DATA=s"
COPY = "VMDEF VA=img,0,0,1048576 RC=1,1.0,1024 VAST=s DATA=s"
ONE_CORE = "PM count=1 cores=1 perf=1.0 mem=1073741824\nREPO name=s bandwidth=1048576 latency=0.001"


def _wf(*sections, vmdef=NO_COPY):
    lines = []
    for seqs in sections:
        lines += ["PSSTART", vmdef] + [f"VMSEQ {s}" for s in seqs]
    desc = parse_workflow_description("\n".join(lines))
    return desc, build_plan(desc)


def _bg(*rows):
    """rows of (submit, runtime, cores)"""
    return [TraceJob(str(i), float(s), float(r), c) for i, (s, r, c) in enumerate(rows)]


def test_build_cloud():
    cloud = build_cloud("PM count=2 cores=4 perf=1.0 mem=8589934592\nREPO name=s bandwidth=104857600 latency=0.001")
    assert len(cloud.machines) == 2 and len(cloud.repositories) == 1
    assert build_cloud(cloud.render()) == cloud


@pytest.mark.parametrize(
    "text",
    [
        "PM count=1 cores=1 perf=1 mem=1\nREPO name=s bandwidth=1 latency=0\nREPO name=s bandwidth=2 latency=0",
        "PM count=0 cores=1 perf=1 mem=1\nREPO name=s bandwidth=1 latency=0",
        "PM count=1 cores=1 perf=1 mem=1 colour=red\nREPO name=s bandwidth=1 latency=0",
        "PM count=1 cores=1 perf=-1 mem=1\nREPO name=s bandwidth=1 latency=0",
        "REPO name=s bandwidth=1 latency=0",
        "PM count=1 cores=1 perf=1 mem=1\nDISK name=s",
    ],
)
def test_build_cloud_errors(text):
    with pytest.raises(ConfigError):
        build_cloud(text)


def test_dedicated_single_job():
    desc, plan = _wf(["C10!a"])
    res = simulate(desc, plan, build_cloud(ONE_CORE), [], SimConfig(warmup_jobs=0))
    assert res.observed == (10.0,)


def test_two_vms_share_one_core(frozen):
    desc, plan = _wf(["C10!a", "C10!b"])
    res = simulate(desc, plan, build_cloud(ONE_CORE), [], SimConfig(warmup_jobs=0))
    assert list(res.observed) == frozen["fair_two_on_one"]


def test_mixed_lengths_on_two_cores(frozen):
    desc, plan = _wf(["C10!a", "C20!b", "C40!c"])
    cloud = build_cloud(ONE_CORE.replace("cores=1", "cores=2"))
    res = simulate(desc, plan, cloud, [], SimConfig(warmup_jobs=0))
    assert list(res.observed) == pytest.approx(frozen["fair_mixed"], rel=1e-12)


def test_transfer_time(frozen):
    desc, plan = _wf(["N1048576 C1!a"])
    audit = SimAudit()
    simulate(desc, plan, build_cloud(ONE_CORE), [], SimConfig(warmup_jobs=0), audit)
    (net,) = [segs for kind, _, segs in audit.flows if kind == "network"]
    start = net[0][0] - 0.001  # the latency elapses before the flow opens
    assert net[-1][1] - start == pytest.approx(frozen["transfer_1MiB"], rel=1e-12)


def test_dedicated_identity_on_idle_cloud(demo_desc, demo_plan):
    res = simulate(demo_desc, demo_plan, build_cloud(IDLE_CLOUD), [], SimConfig(warmup_jobs=0))
    assert res.observed == demo_plan.r_ex


def test_warmup_and_capacity_errors():
    desc, plan = _wf(["C1!a"])
    cloud = build_cloud(ONE_CORE)
    with pytest.raises(WarmupError):
        simulate(desc, plan, cloud, _bg((0, 5, 1)), SimConfig(warmup_jobs=2))
    with pytest.raises(CapacityError):
        simulate(desc, plan, cloud, _bg((0, 5, 4)), SimConfig(warmup_jobs=1))


def test_workflow_waits_for_warmup_start():
    desc, plan = _wf(["C1!a"])
    cloud = build_cloud(ONE_CORE.replace("cores=1", "cores=4"))
    res = simulate(desc, plan, cloud, _bg((0, 5, 1), (7, 5, 1)), SimConfig(warmup_jobs=2))
    # background VMs fetch their 1000-byte image first
    assert res.workflow_start == pytest.approx(7.0 + 0.001 + 1000 / 1048576, rel=1e-12)


def test_barrier_order():
    desc, plan = _wf(["C3!a", "C9!b"], ["C1!c", "C2!d"], ["C4!e"])
    audit = SimAudit()
    cloud = build_cloud(ONE_CORE.replace("cores=1", "cores=2"))
    simulate(desc, plan, cloud, _bg((0, 30, 1), (4, 2, 2)), SimConfig(warmup_jobs=1), audit)
    spans = audit.section_spans
    assert len(spans) == 3
    for (_, end), (start, _) in zip(spans, spans[1:]):
        assert start >= end


def _audited(fragment, cores=2):
    desc, plan = _wf(["N300000 C30!a C10!b", "C25!c"], ["C5!d", "N100 C8!e"], vmdef=COPY)
    cloud = build_cloud(ONE_CORE.replace("cores=1", f"cores={cores}"))
    audit = SimAudit()
    res = simulate(desc, plan, cloud, fragment, SimConfig(warmup_jobs=min(1, len(fragment))), audit)
    return res, audit


background = st.lists(
    st.tuples(st.integers(0, 60), st.integers(1, 80), st.integers(1, 2)), min_size=1, max_size=8
).map(lambda rows: _bg(*sorted(rows)))


@settings(max_examples=40)
@given(background)
def test_conservation_and_capacity(fragment):
    res, audit = _audited(fragment)
    assert audit.checks > 0 and audit.violations == []
    for kind, demanded, segs in audit.flows:
        done = sum((t1 - t0) * rate for t0, t1, rate in segs)
        assert done == pytest.approx(demanded, rel=1e-6)
    assert all(v > 0 for v in res.observed)


@settings(max_examples=40)
@given(background)
def test_deterministic(fragment):
    assert _audited(fragment)[0] == _audited(fragment)[0]


@settings(max_examples=60)
@given(
    st.lists(st.tuples(st.integers(0, 40), st.integers(1, 60), st.integers(1, 2)), max_size=6),
    st.lists(st.tuples(st.integers(0, 40), st.integers(1, 60), st.integers(1, 2)), max_size=6),
)
def test_more_background_never_speeds_up(base, extra):
    # one compute token per VM, no transfers, roomy memory: placement is immediate
    desc, plan = _wf(["C20!a", "C35!b", "C50!c"])
    cloud = build_cloud(ONE_CORE.replace("cores=1", "cores=3").replace("mem=1073741824", "mem=1099511627776"))
    cfg = SimConfig(warmup_jobs=0, background_vm_boot=0.0, background_vm_image=1)
    lo = simulate(desc, plan, cloud, _bg(*sorted(base)), cfg)
    hi = simulate(desc, plan, cloud, _bg(*sorted(base + extra)), cfg)
    for a, b in zip(lo.observed, hi.observed):
        assert b >= a * (1 - 1e-12)


def _archive(n):
    return TraceArchive(tuple(TraceJob(str(i), float(i), 5.0, 1) for i in range(n)), 0.0)


def test_batch_isolates_failures():
    desc, plan = _wf(["C2!a"])
    cloud = build_cloud(ONE_CORE)
    refs = [FragmentRef(0.0, 4.0), FragmentRef(1.0, 4.0), FragmentRef(8.0, 4.0)]
    log = batch_simulate(desc, plan, cloud, refs, _archive(10), SimConfig(warmup_jobs=3))
    assert list(log.entries) == [0.0, 1.0, 8.0]
    assert isinstance(log[8.0], SimFailure) and "WarmupError" in log[8.0].reason
    assert set(log.results()) == {0.0, 1.0}
    assert log.t_sim is not None and log.t_sim >= 0
    again = batch_simulate(desc, plan, cloud, refs, _archive(10), SimConfig(warmup_jobs=3))
    assert again == log and again.render() == log.render()
    with pytest.raises(ConsistencyError):
        log.observed(8.0)


def test_parallel_batch_matches_serial(small_world, demo_desc, demo_plan):
    w = small_world
    refs = w["refs"][:6]
    par = batch_simulate(demo_desc, demo_plan, w["cloud"], refs, w["archive"], SimConfig(), parallel=2)
    assert par.render() == SimLog({t: w["log"][t] for t in par.entries}).render()


def test_simlog_round_trip(small_world):
    base = small_world["log"]
    log = SimLog({**base.entries, -1.0: SimFailure("WarmupError: fragment too short")})
    text = log.render()
    again = SimLog.parse(text)
    assert again.render() == text
    assert isinstance(again[-1.0], SimFailure)
    t = next(iter(log.results()))
    assert again.observed(t) == pytest.approx(log.observed(t), abs=5e-7)


def test_simlog_parse_errors():
    with pytest.raises(ParseError):
        SimLog.parse("JOB 1 2.0")
    with pytest.raises(ParseError):
        SimLog.parse("FRAG 0.0 start=0 makespan=1 vms=1 events=1\nJOB 2 1.0")
    with pytest.raises(ParseError):
        SimLog.parse("NOPE")


def test_simresult_values_positive(small_world):
    for res in small_world["log"].results().values():
        assert isinstance(res, SimResult)
        assert all(v > 0 for v in res.observed)
