"""Command-line entry point.

Exit codes: 0 success, 2 usage error, 3 data error, 4 internal invariant breach.
"""
import argparse
import os
import sys
from dataclasses import fields
from pathlib import Path

from . import experiment as ex
from . import learn
from . import trace as tr
from .policies import POLICY_NAMES, PolicyError
from .report import write_outcome_log, write_window_csv
from .simcore import PoolConfig, SimulationError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 2, 3, 4
OUT_ENV = "RECLAIMSIM_OUT_DIR"


class UsageError(Exception):
    pass


# ------------------------------------------------------------------ helpers

def _out_dir(args):
    path = Path(os.environ.get(OUT_ENV) or args.out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_rows(args, day_attr="day", azure_attr="azure"):
    azure = getattr(args, azure_attr, None)
    if azure:
        rows = tr.load_azure_csv(azure)
    else:
        rows = tr.synth_azure_rows(args.synth_functions, args.synth_seed, day=getattr(args, day_attr))
    return tr.filter_outliers(rows, lo=1, hi=args.max_daily) if args.max_daily else rows


def _set_params(args):
    return ex.SetParams(scenario=args.scenario, n_tenants=args.tenants,
                        traces_per_set=args.traces_per_set, window_minutes=args.window_min,
                        n_workloads=len(tr.DEFAULT_WORKLOADS),
                        mobile_ratio=tuple(int(x) for x in args.mobile_ratio.split(":")))


def read_config(path):
    """``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            k, v = (p.strip() for p in line.split("=", 1))
            out[k.replace("-", "_")] = v
    return out


_POOL_FIELDS = {f.name: f.type for f in fields(PoolConfig)}


def _coerce(key, value):
    if key in ("reclaim_enabled", "learned_in_warm_pool", "check_invariants"):
        return str(value).lower() in ("1", "true", "yes", "on")
    if key in ("on_saturation", "policy", "pool", "model"):
        return str(value)
    if key in ("restore_cost_ms", "eviction_decision_cost_ms"):
        return float(value)
    return int(value)


def _add_source(p):
    g = p.add_argument_group("trace source")
    g.add_argument("--events", help="replay an event file (t_ms,tenant,workload,trace)")
    g.add_argument("--azure", help="Azure-format per-minute CSV")
    g.add_argument("--synth-functions", type=int, default=2000)
    g.add_argument("--synth-seed", type=int, default=1)
    g.add_argument("--day", type=int, default=1)
    g.add_argument("--max-daily", type=int, default=10_000,
                   help="drop traces above this daily total (0 keeps all)")
    g.add_argument("--scenario", choices=["s1", "s2", "s3"], default="s1")
    g.add_argument("--tenants", type=int, default=1)
    g.add_argument("--traces-per-set", type=int, default=40)
    g.add_argument("--window-min", type=int, default=30)
    g.add_argument("--mobile-ratio", default="1:1", help="mobile:regular for s3")


# ------------------------------------------------------------------ traces

def cmd_traces(args):
    if args.traces_cmd == "expand":
        rows = tr.load_azure_csv(args.inp)
        wl = tr.workload_for_traces(len(rows), args.workloads, args.seed)
        streams = [tr.expand_trace(r, i, i % args.tenants, int(wl[i])) for i, r in enumerate(rows)]
        events = tr.merge_streams(streams)
        tr.write_event_file(events, args.out)
        print(f"wrote {len(events)} events to {args.out}")
    elif args.traces_cmd == "synth":
        rows = tr.synth_azure_rows(args.functions, args.seed, day=args.day)
        tr.save_azure_csv(rows, args.out)
        print(f"wrote {len(rows)} synthetic functions to {args.out}")
    elif args.traces_cmd == "spikes":
        rows = tr.load_azure_csv(args.inp)
        if args.function:
            match = [r for r in rows if r.function_key == args.function]
            if not match:
                raise tr.TraceFormatError(f"function {args.function!r} not in {args.inp}")
            cdf = tr.detect_spikes(match[0]).interval_cdf
        else:
            cdf = tr.spike_interval_cdf(rows)
        out = args.out or "/dev/stdout"
        tr.write_spike_csv(cdf, out)
    return EXIT_OK


# ------------------------------------------------------------------ simulate

def _system_from_args(args):
    cfg = read_config(args.config) if args.config else {}
    for key in ("policy", "pool", "on_saturation", "model", "window"):
        v = getattr(args, key)
        if v is not None:
            cfg[key] = v
    if args.keepalive is not None:
        cfg["warm_keepalive_ms"] = args.keepalive
    if args.reclaim_keepalive is not None:
        cfg["reclaim_keepalive_ms"] = args.reclaim_keepalive
    if args.seed is not None:
        cfg["seed"] = args.seed
    unknown = set(cfg) - set(_POOL_FIELDS) - {"policy", "pool", "model", "seed", "window"}
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    try:
        cfg = {k: _coerce(k, v) for k, v in cfg.items()}
    except ValueError as e:
        raise UsageError(f"bad config value: {e}") from None
    policy = cfg.pop("policy", "lru")
    if policy not in POLICY_NAMES:
        raise UsageError(f"unknown policy {policy!r}; expected one of {', '.join(POLICY_NAMES)}")
    pool = cfg.pop("pool", "32-0")
    model_path = cfg.pop("model", None)
    seed = cfg.pop("seed", 0)
    window = cfg.pop("window", 30)
    ka = cfg.pop("warm_keepalive_ms", 600_000)
    rka = cfg.pop("reclaim_keepalive_ms", ka)
    for k in ("max_containers", "reclaim_capacity", "reclaim_enabled"):
        if k in cfg:
            raise UsageError(f"set {k} through the pool shorthand W-R")
    spec = ex.SystemSpec(f"{policy}-{pool}", policy, pool, warm_keepalive_ms=ka,
                         reclaim_keepalive_ms=rka, window=window,
                         on_saturation=cfg.pop("on_saturation", "buffer"),
                         learned_in_warm_pool=cfg.pop("learned_in_warm_pool", False),
                         restore_cost_ms=cfg.pop("restore_cost_ms", 430.0),
                         eviction_decision_cost_ms=cfg.pop("eviction_decision_cost_ms", 0.0))
    try:
        spec.config()
    except ValueError as e:
        raise UsageError(str(e)) from None
    if policy == "learned" and not model_path:
        raise UsageError("policy 'learned' needs --model")
    return spec, model_path, seed


def cmd_simulate(args):
    spec, model_path, seed = _system_from_args(args)
    model = learn.load_model(model_path) if model_path else None
    if args.events:
        events = tr.read_event_file(args.events)
    else:
        events = ex.make_trace_set(_load_rows(args), _set_params(args), seed)
    rep = ex.run_system(events, spec, seed, model, check=args.check)
    out = _out_dir(args)
    (out / "report.csv").write_text(rep.to_csv())
    (out / "report.txt").write_text(f"system {spec.label}\n" + rep.to_text())
    write_window_csv(rep, out / "cold_windows.csv")
    if args.log:
        write_outcome_log(rep.outcomes, out / "outcomes.csv")
    print(f"{spec.label}: {rep.total_requests} requests, warm rate {rep.warm_rate_pct:.2f}%")
    return EXIT_OK


# ------------------------------------------------------------------ train

def _trace_sets(rows, params, n_sets, seed):
    return [ex.make_trace_set(rows, params, seed * 100_003 + s) for s in range(n_sets)]


def cmd_train(args):
    params = ex.SetParams(scenario="s1", n_tenants=1, traces_per_set=args.traces_per_set,
                          window_minutes=args.window_min)
    config = PoolConfig.from_shorthand(args.pool, on_saturation=args.on_saturation,
                                       warm_keepalive_ms=args.keepalive)
    tcfg = learn.TrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                             learning_rate=args.lr, seed=args.seed,
                             mix_old_fraction=args.mix_old)
    rows = _load_rows(args)
    new = learn.generate_training_data(_trace_sets(rows, params, args.sets, args.seed), config,
                                       window=args.window)
    if args.samples_out:
        learn.write_samples_csv(new, args.samples_out)
    if args.retrain:
        base = learn.load_model(args.base) if args.base else None
        old = None
        if args.mix_old > 0:
            old_rows = _load_rows(args, day_attr="old_day", azure_attr="azure_old")
            old = learn.generate_training_data(
                _trace_sets(old_rows, params, args.sets, args.seed + 1), config, window=args.window)
        model = learn.retrain(base, old, new, tcfg)
    else:
        model = learn.train(new, tcfg)
    learn.save_model(model, args.out)
    loss_path = args.loss_out or f"{args.out}.loss.csv"
    with open(loss_path, "w") as fh:
        fh.write("epoch,loss\n")
        for i, v in enumerate(model.loss_curve):
            fh.write(f"{i},{v:.10f}\n")
    print(f"trained on {len(new)} samples ({new.n_groups} decisions); model -> {args.out}")
    return EXIT_OK


# ------------------------------------------------------------------ compare

def cmd_compare(args):
    systems = [ex.parse_system(s) for s in args.systems]
    labels = [s.label for s in systems]
    if len(set(labels)) != len(labels):
        raise UsageError("system labels must be unique")
    if args.on_saturation:
        systems = [ex.with_saturation(s, args.on_saturation) for s in systems]
    if any(s.policy not in POLICY_NAMES for s in systems):
        raise UsageError("unknown policy in --systems")
    if args.repetitions < 1:
        raise UsageError("--repetitions must be >= 1")
    model = learn.load_model(args.model) if args.model else None
    seeds = range(args.seed, args.seed + args.repetitions)
    table, reports = ex.run_compare(_load_rows(args), systems, _set_params(args), seeds, model,
                                    check=args.check)
    out = _out_dir(args)
    (out / "comparison.csv").write_text(table.to_csv())
    (out / "comparison.txt").write_text(table.to_text())
    with open(out / "runs.csv", "w") as fh:
        fh.write("system,scenario,seed,total,warm_rate_pct,cold_starts,dropped,"
                 "mean_response_ms,mean_queue_size\n")
        for (system, scenario, seed), r in reports.items():
            fh.write(f"{system},{scenario},{seed},{r.total_requests},{r.warm_rate_pct:.6f},"
                     f"{r.cold_starts},{r.dropped},{r.mean_response_ms:.6f},"
                     f"{r.mean_queue_size:.6f}\n")
    sys.stdout.write(table.to_text())
    return EXIT_OK


# ------------------------------------------------------------------ parser

def build_parser():
    p = argparse.ArgumentParser(prog="reclaimsim", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="cmd", required=True)

    t = sub.add_parser("traces", help="trace utilities")
    tsub = t.add_subparsers(dest="traces_cmd", required=True)
    te = tsub.add_parser("expand", help="Azure CSV -> event file")
    te.add_argument("--in", dest="inp", required=True)
    te.add_argument("--out", required=True)
    te.add_argument("--tenants", type=int, default=1)
    te.add_argument("--workloads", type=int, default=len(tr.DEFAULT_WORKLOADS))
    te.add_argument("--seed", type=int, default=0)
    ts = tsub.add_parser("synth", help="seeded synthetic Azure-format CSV")
    ts.add_argument("--seed", type=int, default=0)
    ts.add_argument("--functions", type=int, default=500)
    ts.add_argument("--day", type=int, default=1)
    ts.add_argument("--out", default="synth.csv")
    tk = tsub.add_parser("spikes", help="spike-interval CDF")
    tk.add_argument("--in", dest="inp", required=True)
    tk.add_argument("--function", help="single function key (default: CDF over functions)")
    tk.add_argument("--out")
    t.set_defaults(func=cmd_traces)

    s = sub.add_parser("simulate", help="run one system on one trace set")
    s.add_argument("--config", help="key = value file with pool/policy settings")
    s.add_argument("--policy")
    s.add_argument("--pool", help="W-R: warm-pool share and reclaim capacity")
    s.add_argument("--keepalive", type=int, help="warm keep-alive (ms)")
    s.add_argument("--reclaim-keepalive", type=int, help="reclaim keep-alive (ms)")
    s.add_argument("--on-saturation", choices=["buffer", "drop"])
    s.add_argument("--window", type=int, help="oracle look-ahead (requests)")
    s.add_argument("--model")
    s.add_argument("--seed", type=int)
    s.add_argument("--log", action="store_true", help="also write the per-request outcome log")
    s.add_argument("--check", action="store_true", help="assert engine invariants every step")
    s.add_argument("--out-dir", default="out")
    _add_source(s)
    s.set_defaults(func=cmd_simulate)

    tr_ = sub.add_parser("train", help="generate oracle-labelled data and train the model")
    tr_.add_argument("--sets", type=int, default=100)
    tr_.add_argument("--window", type=int, default=30)
    tr_.add_argument("--pool", default="8-0")
    tr_.add_argument("--keepalive", type=int, default=600_000)
    tr_.add_argument("--on-saturation", choices=["buffer", "drop"], default="drop")
    tr_.add_argument("--epochs", type=int, default=50)
    tr_.add_argument("--batch-size", type=int, default=256)
    tr_.add_argument("--lr", type=float, default=1e-3)
    tr_.add_argument("--seed", type=int, default=0)
    tr_.add_argument("--out", default="model.bin")
    tr_.add_argument("--loss-out")
    tr_.add_argument("--samples-out", help="dump training samples as CSV")
    tr_.add_argument("--retrain", action="store_true")
    tr_.add_argument("--base", help="model to start retraining from")
    tr_.add_argument("--mix-old", type=float, default=0.0)
    tr_.add_argument("--old-day", type=int, default=1)
    tr_.add_argument("--azure-old", help="older-day Azure CSV for --mix-old")
    _add_source(tr_)
    tr_.set_defaults(func=cmd_train, traces_per_set=40)

    c = sub.add_parser("compare", help="run several systems over seeded repetitions")
    c.add_argument("--systems", nargs="+", required=True,
                   help="label=policy:W-R[:warm_ka_ms[:reclaim_ka_ms]]")
    c.add_argument("--repetitions", type=int, default=15)
    c.add_argument("--seed", type=int, default=1)
    c.add_argument("--model")
    c.add_argument("--on-saturation", choices=["buffer", "drop"])
    c.add_argument("--check", action="store_true")
    c.add_argument("--out-dir", default="out")
    _add_source(c)
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, PolicyError) as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SimulationError as e:
        print(f"internal error: {e}", file=sys.stderr)
        return EXIT_INTERNAL
    except (tr.TraceFormatError, tr.ScenarioError, learn.ModelFormatError, learn.TrainingError,
            OSError, ValueError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
