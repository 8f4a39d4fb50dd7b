import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from bgload import _kernels_py as py
from bgload import kernels

try:
    from bgload import _ckernels as cy
except ImportError:  # pragma: no cover - depends on the build
    cy = None

needs_cython = pytest.mark.skipif(cy is None, reason="compiled kernels not built")

positive = st.floats(0.01, 1e5, allow_nan=False, allow_infinity=False)
demand = st.one_of(positive, st.just(math.inf))


def test_backend_reported():
    assert kernels.BACKEND in ("python", "cython")


@given(positive, st.lists(demand, min_size=1, max_size=12))
def test_maxmin_matches_progressive_filling(capacity, demands):
    got = py.maxmin_share(capacity, demands)
    want = oracles.maxmin_progressive(capacity, demands)
    assert got == pytest.approx(want, rel=1e-9, abs=1e-9)
    assert sum(got) <= capacity * (1 + 1e-12)
    assert all(0 <= a <= d * (1 + 1e-12) for a, d in zip(got, demands))


def test_maxmin_small_cases():
    assert py.maxmin_share(1.0, [1.0, 1.0]) == [0.5, 0.5]
    assert py.maxmin_share(2.0, [0.5, math.inf, math.inf]) == [0.5, 0.75, 0.75]
    assert py.maxmin_share(5.0, []) == []


@needs_cython
@given(positive, st.lists(demand, min_size=0, max_size=12))
def test_maxmin_backends_identical(capacity, demands):
    assert cy.maxmin_share(capacity, demands) == py.maxmin_share(capacity, demands)


series = st.integers(1, 30).flatmap(
    lambda n: st.tuples(st.lists(positive, min_size=n, max_size=n), st.lists(positive, min_size=n, max_size=n))
)


@needs_cython
@given(series, st.sampled_from([py.SQD, py.MAPE, py.TADJ_SQD]))
def test_error_backends_identical(pair, fn):
    ex, ob = pair
    n = len(ex)
    ks = list(range(1, n + 1))
    p1, f1 = py.batch_errors(fn, ex, [ob], ks)
    p2, f2 = cy.batch_errors(fn, np.asarray(ex), np.asarray([ob]), np.asarray(ks))
    np.testing.assert_array_equal(p1, p2)
    np.testing.assert_array_equal(f1, f2)


@given(series, st.sampled_from(["SQD", "MAPE", "TADJ_SQD"]))
def test_batch_errors_match_oracle(pair, name):
    ex, ob = pair
    fn = {"SQD": py.SQD, "MAPE": py.MAPE, "TADJ_SQD": py.TADJ_SQD}[name]
    n = len(ex)
    past, future = kernels.batch_errors(fn, ex, [ob], list(range(1, n + 1)))
    for c, k in enumerate(range(1, n + 1)):
        assert past[0, c] == pytest.approx(oracles.error(name, ex, ob, k), rel=1e-9)
        if k < n:
            assert future[0, c] == pytest.approx(oracles.future(name, ex, ob, k, n), rel=1e-9)
        else:
            assert math.isnan(future[0, c])


sorted_ts = st.lists(st.integers(0, 10_000), min_size=1, max_size=40, unique=True).map(
    lambda xs: [float(x) for x in sorted(xs)]
)


@given(sorted_ts, st.floats(-100, 11_000))
def test_floor_index_matches_scan(ts, q):
    assert py.floor_index(ts, q) == oracles.floor_lookup(ts, q)


@given(
    sorted_ts.flatmap(lambda ts: st.tuples(st.just(ts), st.lists(positive, min_size=len(ts), max_size=len(ts)))),
    st.lists(st.floats(0, 10_000), min_size=1, max_size=6),
    st.lists(st.tuples(st.floats(0, 10_000), positive), min_size=1, max_size=6),
    st.floats(0, 10_000),
    st.floats(1, 5_000),
)
def test_phi_batch_matches_oracle(table, xs, members, t_init, S):
    ts, past = table
    ms = [m for m, _ in members]
    ep = [e for _, e in members]
    got = kernels.phi_batch(xs, ms, ep, ts, past, t_init, S / 2)
    want = [oracles.phi(x, ms, ep, ts, past, t_init, S) for x in xs]
    assert list(got) == pytest.approx(want, rel=1e-12, abs=1e-12)
    if cy is not None:
        assert list(cy.phi_batch(xs, ms, ep, ts, past, t_init, S / 2)) == list(
            py.phi_batch(xs, ms, ep, ts, past, t_init, S / 2)
        )


def test_phi_two_points(frozen):
    got = kernels.phi_batch([0.0], [10.0, 20.0], [5.0, 7.0], [0.0, 100.0], [6.0, 6.0], 15.0, 15.0)
    assert got[0] == frozen["phi_two_points"]
