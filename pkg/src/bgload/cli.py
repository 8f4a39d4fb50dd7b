"""Command-line pipeline: synth, ingest, simulate, cache, predict, study, sweep.

Exit codes: 0 success, 1 usage error, 2 data or consistency error.
"""

from __future__ import annotations

import argparse
import random
import sys
from pathlib import Path
from types import SimpleNamespace

from . import kernels
from .cloudsim import SimConfig, SimLog, batch_simulate, load_cloud
from .corpus import DEMO_CLOUD, SyntheticProfile, demo_description, generate_synthetic_corpus
from .evaluation import Corpus, golden_study, parameter_sweep, render_sweep, top_share
from .exceptions import BgloadError, ParseError
from .metrics import ALL_FUNCTIONS, ErrorFunction, build_error_cache, load_cache
from .predictor import PredictorConfig, predict
from .traces import (
    FilteredSet,
    concat_archives,
    enumerate_fragments,
    filter_budget,
    fragment_duration,
    load_trace,
    prefilter,
    render_trace,
)
from .workflow import ObservedRun, SectionShape, build_plan, k_real, load_workflow_description


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _echo(command: str, **settings) -> None:
    parts = " ".join(f"{k}={v}" for k, v in settings.items())
    print(f"config {command} {parts}")


def _plan(path):
    desc = load_workflow_description(path)
    plan = build_plan(desc)
    return desc, plan, SectionShape.from_plan(plan)


def _cmd_synth(a) -> None:
    profile = SyntheticProfile(
        a.jobs, a.interarrival, a.runtime, a.burstiness, a.period, a.max_cores
    )
    _echo("synth", seed=a.seed, jobs=a.jobs, interarrival=a.interarrival, runtime=a.runtime,
          burstiness=a.burstiness, period=a.period, max_cores=a.max_cores)
    archive = generate_synthetic_corpus(a.seed, profile)
    Path(a.out).write_text(render_trace(archive))
    print(f"wrote {len(archive)} jobs to {a.out}")
    if a.workflow_out:
        Path(a.workflow_out).write_text(demo_description(a.sections, a.vms, a.jobs_per_vm))
        print(f"wrote demo workflow to {a.workflow_out}")
    if a.cloud_out:
        Path(a.cloud_out).write_text(DEMO_CLOUD.replace("count=2", f"count={a.machines}"))
        print(f"wrote demo cloud to {a.cloud_out}")


def _cmd_ingest(a) -> None:
    _echo("ingest", traces=",".join(a.traces), gap=a.gap)
    archives = [load_trace(p) for p in a.traces]
    archive = concat_archives(archives, a.gap)
    Path(a.out).write_text(render_trace(archive))
    dropped = sum(x.dropped for x in archives)
    print(f"jobs={len(archive)} dropped={dropped} span={archive.end_time!r}")


def _cmd_simulate(a) -> None:
    archive = load_trace(a.archive)
    desc, plan, _ = _plan(a.workflow)
    cloud = load_cloud(a.cloud)
    cfg = SimConfig(warmup_jobs=a.warmup, seed=a.seed)
    duration = fragment_duration(sum(plan.r_ex), a.factor)
    refs = enumerate_fragments(archive, duration)
    refs = refs[a.start:] if a.count is None else refs[a.start:a.start + a.count]
    _echo("simulate", archive=a.archive, workflow=a.workflow, cloud=a.cloud, warmup=a.warmup,
          seed=a.seed, factor=a.factor, start=a.start, count=len(refs), parallel=a.parallel,
          backend=kernels.BACKEND)
    if not refs:
        raise BgloadError("no fragment windows fit the archive")
    log = batch_simulate(desc, plan, cloud, refs, archive, cfg, a.parallel)
    log.save(a.out)
    print(f"fragments={len(log)} failed={len(log.failures())} N={plan.N}")
    print(f"t_sim_ms={log.t_sim * 1000:.3f} budget@60s={filter_budget(60.0, log.t_sim)}")


def _parse_taus(items):
    taus = {}
    for item in items or []:
        name, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--tau expects FN=value, got {item!r}")
        try:
            taus[ErrorFunction.parse(name)] = float(value)
        except ValueError:
            raise UsageError(f"bad --tau value {item!r}") from None
    return taus


def _cmd_cache(a) -> None:
    fns = [ErrorFunction.parse(f) for f in a.fn.split(",")] if a.fn else list(ALL_FUNCTIONS)
    taus = _parse_taus(a.tau)
    _echo("cache", simlog=a.simlog, workflow=a.workflow, fns=",".join(f.value for f in fns),
          taus=",".join(f"{f.value}={v!r}" for f, v in taus.items()) or "-")
    _, plan, shape = _plan(a.workflow)
    cache = build_error_cache(plan, SimLog.load(a.simlog), shape, fns, taus)
    cache.save(a.out)
    print(f"fragments={len(cache)} checkpoints={shape.sections} N={plan.N}")


def _predictor_cfg(a) -> PredictorConfig:
    return PredictorConfig(
        S=a.S, Pi=a.Pi, I=a.I, P=a.P, secondary_span_ratio=a.ratio, fn=a.fn,
        E_epsilon=a.E_epsilon, T_budget=a.budget_time, seed=a.seed, absolute_gap=a.abs_gap,
    )


def _load_observed(path) -> tuple[float, ...]:
    values = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        try:
            if parts[0] == "JOB" and len(parts) == 3:
                if int(parts[1]) != len(values) + 1:
                    raise ParseError("observations must be listed in job order", lineno)
                values.append(float(parts[2]))
            elif len(parts) == 1:
                values.append(float(parts[0]))
            else:
                raise ParseError("expected 'JOB <i> <seconds>' or a bare value", lineno)
        except ValueError as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(f"bad observation: {exc}", lineno) from None
    return tuple(values)


def _cmd_predict(a) -> None:
    cfg = _predictor_cfg(a)
    _, plan, shape = _plan(a.workflow)
    cache = load_cache(a.cache)
    log = SimLog.load(a.simlog)
    m = k_real(a.k, shape)
    ts = cache.timestamps.tolist()
    if a.observed:
        source = a.observed
        observed = _load_observed(a.observed)
        t_curr = 0.0
    else:
        t_g = a.golden if a.golden is not None else random.Random(a.seed).choice(ts)
        source = f"golden:{t_g!r}"
        observed = log.observed(t_g)
        t_curr = t_g
    run = ObservedRun(t_curr, tuple(observed[:m]), a.k)
    if a.filter_budget:
        t_filt = prefilter([SimpleNamespace(t=t) for t in ts], a.filter_budget, a.seed)
    else:
        t_filt = FilteredSet(tuple(ts), len(ts))
    _echo("predict", k=a.k, observed=source, filtered=len(t_filt),
          **{k: v for k, v in cfg.echo().items()})
    out = predict(cfg, cache, t_filt, plan, run, log)
    d_ms = 0.0 if a.no_timing else out.d * 1000
    print(f"t_target={out.t_target!r} iters={out.iterations} d_ms={d_ms:.3f}")
    if out.truncated:
        print("warning: prediction stopped at the time budget")
    if a.out:
        lines = [
            f"t_target={out.t_target!r}",
            f"iterations={out.iterations}",
            f"truncated={int(out.truncated)}",
            "trajectory=" + ",".join(repr(t) for t in out.trajectory),
            "visited=" + ",".join(repr(t) for t in out.visited),
        ]
        Path(a.out).write_text("\n".join(lines) + "\n")


def _corpus(a) -> Corpus:
    _, plan, _ = _plan(a.workflow)
    return Corpus(plan, SimLog.load(a.simlog), load_cache(a.cache))


def _cmd_study(a) -> None:
    cfg = _predictor_cfg(a)
    _echo("study", runs=a.runs, k=a.k if a.k is not None else "drawn", parallel=a.parallel,
          **{k: v for k, v in cfg.echo().items()})
    corpus = _corpus(a)
    report = golden_study(cfg, a.runs, corpus, a.seed, a.k, parallel=a.parallel)
    timing = not a.no_timing
    sys.stdout.write(report.render_table(timing))
    r2p, r2f = report.correlation(corpus.cache, ErrorFunction.SQD)
    fmt = lambda v: "-" if v is None else f"{v:.3f}"  # noqa: E731
    print(f"R2[SQD] past={fmt(r2p)} future={fmt(r2f)}")
    if a.out:
        Path(a.out).write_text(report.render_csv(timing))
        if report.baseline is not None:
            Path(a.out).with_suffix(".random.csv").write_text(report.baseline.render_csv(False))


def _parse_grid(items) -> dict:
    grid = {}
    for item in items:
        key, sep, values = item.partition("=")
        if not sep or not values:
            raise UsageError(f"--grid expects NAME=v1,v2,... got {item!r}")
        conv = {"P": int, "I": int, "S": float, "ratio": float, "fn": ErrorFunction.parse}.get(key)
        if conv is None:
            raise UsageError(f"unknown grid parameter {key!r}")
        try:
            grid[key] = [conv(v) for v in values.split(",")]
        except ValueError:
            raise UsageError(f"bad value in --grid {item!r}") from None
    return grid


def _cmd_sweep(a) -> None:
    grid = _parse_grid(a.grid)
    base = _predictor_cfg(a)
    _echo("sweep", grid=";".join(f"{k}={','.join(str(getattr(x, 'value', x)) for x in v)}" for k, v in grid.items()),
          runs=a.runs, parallel=a.parallel, **{k: v for k, v in base.echo().items()})
    rows = parameter_sweep(grid, _corpus(a), a.runs, a.seed, base, a.k, a.parallel)
    text = render_sweep(rows, not a.no_timing)
    sys.stdout.write(text)
    for key, shares in top_share(rows, "E_star", a.top).items():
        desc = " ".join(f"{getattr(v, 'value', v)}:{s:.2f}" for v, s in shares.items())
        print(f"top{a.top:g} {key} {desc}")
    if a.out:
        Path(a.out).write_text(text)


def _add_predictor_flags(p, runs: bool = False) -> None:
    p.add_argument("--cache", required=True)
    p.add_argument("--simlog", required=True)
    p.add_argument("--workflow", required=True)
    p.add_argument("--k", type=int, required=not runs, default=None)
    p.add_argument("--S", type=float, default=1000.0)
    p.add_argument("--P", type=int, default=20)
    p.add_argument("--I", type=int, default=32)
    p.add_argument("--ratio", type=float, default=50.0)
    p.add_argument("--Pi", type=float, default=1.0)
    p.add_argument("--fn", default="SQD", choices=[f.value for f in ALL_FUNCTIONS])
    p.add_argument("--E-epsilon", dest="E_epsilon", type=float, default=0.0)
    p.add_argument("--budget-time", type=float, default=60.0)
    p.add_argument("--abs-gap", action="store_true", help="minimise |F-E| instead of F-E")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-timing", action="store_true", help="report zero durations")
    p.add_argument("--out")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bgload", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("synth", help="generate a synthetic periodic trace")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=20000)
    p.add_argument("--interarrival", type=float, default=60.0)
    p.add_argument("--runtime", type=float, default=400.0)
    p.add_argument("--burstiness", type=float, default=0.8)
    p.add_argument("--period", type=float, default=20000.0)
    p.add_argument("--max-cores", type=int, default=4)
    p.add_argument("--out", required=True)
    p.add_argument("--workflow-out", help="also write the demo workflow description")
    p.add_argument("--cloud-out", help="also write the demo cloud config")
    p.add_argument("--sections", type=int, default=3)
    p.add_argument("--vms", type=int, default=4)
    p.add_argument("--jobs-per-vm", type=int, default=2)
    p.add_argument("--machines", type=int, default=3)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("ingest", help="normalise and concatenate trace files")
    p.add_argument("traces", nargs="+")
    p.add_argument("--gap", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("simulate", help="simulate the workflow against trace fragments")
    p.add_argument("--archive", required=True)
    p.add_argument("--workflow", required=True)
    p.add_argument("--cloud", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--warmup", type=int, default=50)
    p.add_argument("--factor", type=float, default=3.0)
    p.add_argument("--start", type=int, default=0, help="index of the first fragment")
    p.add_argument("--count", type=int, help="number of consecutive fragments")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--parallel", type=int, default=1)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("cache", help="build the past/future error cache")
    p.add_argument("--simlog", required=True)
    p.add_argument("--workflow", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--fn", help="comma-separated error functions (default: all)")
    p.add_argument("--tau", action="append", help="low-error limit, e.g. SQD=2e6")
    p.set_defaults(func=_cmd_cache)

    p = sub.add_parser("predict", help="predict the background load fragment")
    _add_predictor_flags(p)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--observed", help="file of observed job times")
    src.add_argument("--golden", type=float, help="use this fragment's simulation as the run")
    p.add_argument("--filter-budget", type=int, help="pre-filter to this many fragments")
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("study", help="golden-fragment study against random selection")
    _add_predictor_flags(p, runs=True)
    p.add_argument("--runs", type=int, default=50)
    p.add_argument("--parallel", type=int, default=1)
    p.set_defaults(func=_cmd_study)

    p = sub.add_parser("sweep", help="parameter sweep of golden studies")
    _add_predictor_flags(p, runs=True)
    p.add_argument("--grid", action="append", required=True, help="NAME=v1,v2 (P, S, I, ratio, fn)")
    p.add_argument("--runs", type=int, default=5)
    p.add_argument("--top", type=float, default=0.05)
    p.add_argument("--parallel", type=int, default=1)
    p.set_defaults(func=_cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "parallel", 1) < 1:
            raise UsageError("--parallel must be >= 1")
        args.func(args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return 0 if exc.code in (0, None) else 1
    except (BgloadError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
