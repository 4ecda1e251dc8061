"""dynpush command line: simulate, sweep, verify, fit, plot.

Exit codes: 0 success, 1 check failure or IO error, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

from . import __version__
from .dyngraph import EdgeMarkov, EdgeMarkovParams, IndependentGnp, Initial, RngStream
from .protocol import Instruments, RunRecord, default_max_rounds, run_protocol, source_only_run

log = logging.getLogger("dynpush")


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# simulate


def _build_model(args):
    if args.model == "independent":
        return IndependentGnp(args.n, args.p)
    q = args.q if args.q is not None else 1.0 - args.p
    init = args.initial
    if init is None:
        # without a stationary law fall back to the empty graph
        init = "stationary" if args.p + q > 0 else "empty"
    return EdgeMarkov(EdgeMarkovParams(args.n, args.p, q, Initial.parse(init)))


def format_record(rec: RunRecord) -> list[str]:
    lines = [
        f"model: {rec.model}",
        f"protocol: {rec.protocol}",
        f"n: {rec.n}",
        f"p: {rec.p!r}",
        f"q: {rec.q!r}",
        f"initial: {rec.initial}",
        f"source: {rec.source}",
        f"seed: {rec.seed}",
        f"stream_id: {rec.stream_id}",
        f"completion_round: {'' if rec.completion_round is None else rec.completion_round}",
        f"timed_out: {int(rec.timed_out)}",
        f"max_rounds: {rec.max_rounds}",
        f"messages_total: {rec.messages_total}",
        f"bootstrap_round: {'' if rec.bootstrap_round is None else rec.bootstrap_round}",
        f"final_informed: {rec.trajectory[-1]}",
    ]
    if rec.bd_violations is not None:
        lines.append(f"bd_violations: {rec.bd_violations}/{rec.bd_rounds_checked} (max ratio {rec.bd_max_ratio:.4f})")
    if rec.events is not None:
        e = rec.events
        lines.append(f"events: rounds={e.rounds} s1={e.s1} s2={e.s2} f={e.f} rate(s1|s2 given not f)={e.conditional_rate:.4f}")
    return lines


def cmd_simulate(args) -> int:
    try:
        model = _build_model(args)
        if not 0 <= args.source < args.n:
            raise ValueError("--source must lie in [0, n)")
        rng = RngStream(args.seed)
        if args.protocol == "source_only":
            target = args.target or min(args.n, max(1, math.ceil(10 * math.log(args.n))))
            max_rounds = args.max_rounds or max(1, math.ceil(80 * math.log(max(args.n, 2))))
            rec = source_only_run(model, args.source, target, max_rounds, rng)
        else:
            max_rounds = args.max_rounds or default_max_rounds(args.n, model.p)
            inst = Instruments(bounded_degree=args.bounded_degree, switch_count=args.switch_count)
            rec = run_protocol(model, args.protocol, args.source, max_rounds, rng, inst)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if args.json:
        print(json.dumps(rec.to_dict(), sort_keys=True))
        return 0
    for line in format_record(rec):
        print(line)
    if args.trace:
        for t, m in enumerate(rec.trajectory):
            print(f"trace {t} {m}")
    return 0


# --------------------------------------------------------------------------
# sweep


def _parallelism(flag: int | None) -> int:
    env = os.environ.get("DYNPUSH_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"DYNPUSH_THREADS must be an integer, got {env!r}")
    return flag or os.cpu_count() or 1


def cmd_sweep(args) -> int:
    from .harness import ConfigError, execute, load_config, persist

    try:
        config = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"cannot read {args.config}: {exc}", file=sys.stderr)
        return 1
    try:
        result = execute(config, _parallelism(args.parallelism))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        path = persist(result, Path(args.out) / config.experiment_id)
    except OSError as exc:
        print(f"cannot write results: {exc}", file=sys.stderr)
        return 1
    print(f"{len(result.rows)} runs -> {path}")
    print("grid  n  p  q  median  [ci]  timeout_fraction")
    for s in result.summaries:
        st = s.stats
        print(f"{s.grid_index} {s.n} {s.p:.6g} {s.q:.6g} {st.median:g} [{st.median_ci[0]:g}, {st.median_ci[1]:g}] {st.timeout_fraction:.3f}")
    return 0


# --------------------------------------------------------------------------
# verify


def cmd_verify(args) -> int:
    from . import checks
    from .corpus import CORPUS_DIR, CorpusFormatError

    corpus = Path(args.corpus) if args.corpus else CORPUS_DIR
    if args.corpus and not corpus.exists():
        print(f"corpus path {corpus} does not exist", file=sys.stderr)
        return 1
    kwargs = {}
    if args.suite in ("couplings", "reverse-markov"):
        kwargs["corpus_dir"] = corpus
    if args.suite == "dominance-mc":
        kwargs.update(trials=args.trials, pairs=args.pairs)
    if args.seed is not None and args.suite != "couplings":
        kwargs["seed"] = args.seed
    try:
        results = checks.SUITES[args.suite](**kwargs)
    except CorpusFormatError as exc:
        print(f"FAIL corpus format: {exc}")
        return 1
    for c in results:
        print(c.line())
    failed = [c for c in results if not c.ok]
    print(f"{args.suite}: {len(results) - len(failed)}/{len(results)} checks passed")
    return 1 if failed else 0


# --------------------------------------------------------------------------
# fit / plot


def _series_from_rows(rows, label: str):
    from .plot import PlotSeries
    from .harness import summarize_rows

    pts = []
    for s in summarize_rows(rows):
        st = s.stats
        if st.count == 0:
            continue
        pts.append((s.n, st.median, min(st.median_ci[0], st.median), max(st.median_ci[1], st.median)))
    return PlotSeries(label, sorted(pts), log_x=True, log_y=False)


def cmd_fit(args) -> int:
    from .harness import ParseError, read_rows, summarize_rows
    from .plot import PlotSeries
    from .stats import InsufficientData, fit_scaling, log_n, log_n_over_nphat

    try:
        rows = read_rows(args.results)
    except (OSError, ParseError) as exc:
        print(f"cannot read results: {exc}", file=sys.stderr)
        return 1
    summaries = [s for s in summarize_rows(rows) if s.stats.count > 0]
    p_of = {}
    for s in summaries:
        if s.n in p_of and p_of[s.n] != s.p:
            print("fit needs a single grid point per n", file=sys.stderr)
            return 2
        p_of[s.n] = s.p
    if args.predictor == "log_n":
        predictor = log_n
    else:
        predictor = log_n_over_nphat(lambda n: p_of[int(n)])
    try:
        fit = fit_scaling([(s.n, s.stats.median) for s in summaries], predictor, args.predictor)
    except InsufficientData as exc:
        print(f"insufficient data: {exc}", file=sys.stderr)
        return 2
    print(f"predictor: {fit.predictor}")
    print(f"slope: {fit.slope:.6g} (stderr {fit.slope_stderr:.3g})")
    print(f"intercept: {fit.intercept:.6g}")
    print(f"r2: {fit.r2:.6f}")
    print(f"ratio_spread: {fit.ratio_spread:.4f}")
    print("n  median/predictor")
    for n, r in fit.ratios:
        print(f"{int(n)} {r:.6g}")
    if args.out:
        series = _series_from_rows(rows, f"median vs n, {fit.predictor} slope {fit.slope:.3g}, R2 {fit.r2:.3f}")
        try:
            Path(args.out).write_text(series.to_dat())
        except OSError as exc:
            print(f"cannot write {args.out}: {exc}", file=sys.stderr)
            return 1
    return 0


def cmd_plot(args) -> int:
    from .harness import ParseError, read_rows
    from .plot import PlotSeries, write_plot

    src = Path(args.input)
    try:
        if src.suffix == ".csv":
            series = _series_from_rows(read_rows(src), args.label or src.stem)
        else:
            series = PlotSeries.from_dat(src.read_text())
            if args.label:
                series.label = args.label
        svg, dat = write_plot(series, args.out)
    except (OSError, ParseError, ValueError) as exc:
        print(f"plot failed: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {svg} and {dat} ({len(series.points)} points)")
    return 0


# --------------------------------------------------------------------------


def _prob(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"probability must lie in [0, 1], got {v}")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    from .checks import SUITES

    ap = argparse.ArgumentParser(prog="dynpush", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"dynpush {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run one Push/Flooding simulation")
    s.add_argument("--n", type=_positive, required=True)
    s.add_argument("--p", type=_prob, required=True)
    s.add_argument("--q", type=_prob, default=None, help="death probability (default 1-p)")
    s.add_argument("--model", choices=("edge_markov", "independent"), default="edge_markov")
    s.add_argument("--protocol", choices=("push", "flooding", "source_only"), default="push")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--source", type=int, default=0)
    s.add_argument("--max-rounds", type=_positive, default=None)
    s.add_argument("--initial", default=None, help="empty | complete | stationary | gnp:<p0>")
    s.add_argument("--target", type=_positive, default=None, help="source_only: informed-count target")
    s.add_argument("--bounded-degree", action="store_true", help="evaluate the bounded-degree predicate each round")
    s.add_argument("--switch-count", action="store_true")
    s.add_argument("--trace", action="store_true", help="print the informed count per round")
    s.add_argument("--json", action="store_true", help="print the run record as JSON")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sweep", help="run an experiment config")
    s.add_argument("config")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--parallelism", type=_positive, default=None)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("verify", help="run a verification suite")
    s.add_argument("suite", choices=sorted(SUITES))
    s.add_argument("--corpus", default=None, help="corpus directory or single file")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--trials", type=_positive, default=200_000)
    s.add_argument("--pairs", type=_positive, default=10_000)
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("fit", help="fit median completion against a predictor")
    s.add_argument("results")
    s.add_argument("--predictor", choices=("log_n", "log_n_over_nphat"), default="log_n")
    s.add_argument("--out", default=None, help="write the PlotSeries .dat here")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("plot", help="SVG of median completion vs n")
    s.add_argument("input", help="results CSV or PlotSeries .dat")
    s.add_argument("--out", required=True, help="output .svg (a .dat is written alongside)")
    s.add_argument("--label", default=None)
    s.set_defaults(func=cmd_plot)
    return ap


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"dynpush: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
