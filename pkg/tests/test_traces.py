import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from bgload.exceptions import EmptyInputError, FragmentLookupError, ParseError
from bgload.traces import (
    FragmentRef,
    TraceArchive,
    TraceJob,
    concat_archives,
    enumerate_fragments,
    filter_budget,
    fragment_jobs,
    parse_trace,
    prefilter,
    render_trace,
)


def _archive(submits, runtime=10.0):
    return parse_trace("\n".join(f"{i} {t} 0 {runtime} 1" for i, t in enumerate(submits, 1)))


def test_single_line():
    a = parse_trace("1 0 5 3600 1")
    assert [(j.submit_time, j.runtime, j.cores) for j in a.jobs] == [(0.0, 3600.0, 1)]


def test_sorts_and_shifts_to_zero():
    a = parse_trace("# hdr\n2 100 0 60 2\n1 50 0 30 1")
    assert [(j.submit_time, j.runtime, j.cores) for j in a.jobs] == [(0, 30, 1), (50, 60, 2)]
    assert a.origin_shift == 50


def test_invalid_rows_dropped_then_empty():
    with pytest.raises(EmptyInputError):
        parse_trace("3 10 0 -5 1")


def test_dropped_rows_counted():
    a = parse_trace("1 0 0 10 1\n2 5 0 -1 1\n3 6 0 10 0\n; note\n4 7 0 10 2 extra cols")
    assert len(a) == 2 and a.dropped == 2


@pytest.mark.parametrize("line", ["1 x 0 10 1", "1 0 0 10", "1 0 0 ten 1"])
def test_malformed_line_reports_line_number(line):
    with pytest.raises(ParseError, match="line 2"):
        parse_trace("1 0 0 10 1\n" + line)


def test_concat_displaces_following_archive():
    a = _archive([0, 100])
    b = _archive([0, 20])
    out = concat_archives([a, b], gap=10)
    assert [j.submit_time for j in out.jobs] == [0, 100, 110, 130]


def test_concat_identity_and_empty():
    a = _archive([0, 5])
    assert concat_archives([a], 0) == a
    with pytest.raises(EmptyInputError):
        concat_archives([], 0)


def test_enumerate_fragments_window_rule():
    a = _archive([0, 50, 100], runtime=200)
    assert [r.t for r in enumerate_fragments(a, 200)] == [0, 50, 100]
    # end of archive is 100 + 200 = 300; a window of 250 from t=100 overshoots
    assert [r.t for r in enumerate_fragments(a, 250)] == [0, 50]


def test_fragment_jobs_examples():
    a = _archive([0, 50, 100])
    assert [j.submit_time for j in fragment_jobs(a, FragmentRef(50, 60))] == [0, 50]
    assert [j.submit_time for j in fragment_jobs(a, FragmentRef(100, 10))] == [0]
    with pytest.raises(FragmentLookupError):
        fragment_jobs(a, FragmentRef(75, 10))
    with pytest.raises(ValueError):
        FragmentRef(100, 0)


def test_filter_budget_strictly_below_ratio(frozen):
    assert filter_budget(60, 0.756) == frozen["filter_budget_60_756"] == 79
    assert filter_budget(60, 0.5) == 119


def test_prefilter_contract():
    refs = [FragmentRef(float(t), 1.0) for t in range(50)]
    assert prefilter(refs, 10, seed=4) == prefilter(refs, 10, seed=4)
    assert len(prefilter(refs, 10, seed=4)) == 10
    full = prefilter(refs, 80, seed=1)
    shuffled = refs[:]
    random.Random(0).shuffle(shuffled)
    assert full.timestamps == prefilter(shuffled, 80, seed=9).timestamps
    with pytest.raises(EmptyInputError):
        prefilter([], 3)


jobs_strategy = st.lists(
    st.tuples(
        st.integers(0, 10_000),
        st.integers(1, 5_000),
        st.integers(1, 16),
    ),
    min_size=1,
    max_size=40,
)


@given(jobs_strategy)
def test_render_parse_round_trip(rows):
    text = "\n".join(f"{i} {s} 0 {r} {c}" for i, (s, r, c) in enumerate(rows, 1))
    a = parse_trace(text)
    assert parse_trace(render_trace(a)).jobs == a.jobs


@given(jobs_strategy, st.integers(1, 3000))
def test_fragments_complete_and_rebased(rows, duration):
    archive = TraceArchive(
        tuple(sorted((TraceJob(str(i), float(s), float(r), c) for i, (s, r, c) in enumerate(rows)),
                     key=lambda j: j.submit_time)),
        0.0,
    )
    for ref in enumerate_fragments(archive, duration):
        got = fragment_jobs(archive, ref)
        expected = [j for j in archive.jobs if ref.t <= j.submit_time <= ref.t + ref.duration]
        assert [j.job_id for j in got] == [j.job_id for j in expected]
        assert got[0].submit_time == 0


@given(st.lists(st.integers(0, 1000), min_size=1, max_size=60, unique=True), st.integers(1, 70), st.integers(0, 5))
def test_prefilter_pure_and_bounded(stamps, budget, seed):
    refs = [FragmentRef(float(t), 1.0) for t in stamps]
    a = prefilter(refs, budget, seed)
    assert a == prefilter(refs, budget, seed)
    assert len(a) == min(budget, len(refs))
    assert set(a.timestamps) <= {float(t) for t in stamps}
