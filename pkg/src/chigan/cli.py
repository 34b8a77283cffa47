"""Command-line driver: simulate, train, weigh, evaluate, oracle.

Exit codes: 0 success, 2 usage error, 3 data validation error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import propensity_weights
from .cohort import DataValidationError, StudyArm, check_same_schema, feature_columns, read_cohort_csv, write_cohort_csv
from .estimators import (
    asdm,
    effect_report,
    format_table,
    write_balance_csv,
    write_effect_csv,
)
from .ndcore import NonFiniteError
from .nets import CheckpointError
from .oracles import SUITES, run_suite
from .simgen import SimSpec, simulate, subpopulation_params, target_ates
from .trainer import TrainConfig, TrainedModel, TrainingError, config_dict, train, write_trace_csv
from .weights import DegenerateWeightsError, extract_weights, normalize, raw_ratios, read_weights_csv, write_weights_csv

log = logging.getLogger("chigan")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
METHODS = ("unweighted", "ipw", "clipped-ipw", "cgan")


class UsageError(Exception):
    pass


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _resolved(args: argparse.Namespace) -> dict:
    out = {"command": args.command, "version": __version__}
    for k, v in sorted(vars(args).items()):
        if k in ("func", "command"):
            continue
        if isinstance(v, Path):
            v = str(v)
        elif isinstance(v, list):
            v = [str(x) if isinstance(x, Path) else x for x in v]
        out[k] = v
    return out


def _outdir(path: Path) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    return path


# --- simulate -----------------------------------------------------------------


def cmd_simulate(args) -> int:
    spec = SimSpec(d=args.d, n_sub=args.n_sub, kappa0=args.kappa0, nu0=args.nu0, seed=args.seed)
    arms = simulate(spec)
    out = _outdir(args.out)
    for k, arm in enumerate(arms, start=1):
        write_cohort_csv(out / f"arm{k}.csv", arm)
    params = subpopulation_params(spec)
    meta = {
        "spec": spec.metadata(),
        "subpopulations": {s: {"mean": m.tolist(), "cov": c.tolist()} for s, (m, c) in params.items()},
        "target_ate": target_ates(spec),
        "arms": {"arm1": ["A", "B"], "arm2": ["A", "C"]},
    }
    _write_json(out / "meta.json", meta)
    _write_json(out / "config.json", _resolved(args))
    print(f"wrote {out / 'arm1.csv'}, {out / 'arm2.csv'} ({spec.n_sub * 2} rows each, d={spec.d})")
    return EXIT_OK


# --- train --------------------------------------------------------------------


def _load_cohorts(paths) -> list[StudyArm]:
    arms = [read_cohort_csv(p) for p in paths]
    ids = [a.arm_id for a in arms]
    if len(set(ids)) != len(ids):
        arms = [StudyArm(a.features, a.outcomes, a.labels, f"{k}", a.unit_ids) for k, a in enumerate(arms, 1)]
    check_same_schema(arms, [str(p) for p in paths])
    return arms


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        batch_size=args.batch_size, max_iters=args.max_iters, disc_steps=args.disc_steps,
        lr_gen=args.lr_gen, lr_disc=args.lr_disc, lr_decay=args.lr_decay, decay_every=args.decay_every,
        recenter_every=args.recenter_every, window=args.window, tol=args.tol, seed=args.seed,
        noise_dim=args.noise_dim, hidden=tuple(args.hidden),
    )


def cmd_train(args) -> int:
    if len(args.cohort) < 2:
        raise UsageError("train needs at least two --cohort files")
    arms = _load_cohorts(args.cohort)
    cfg = _train_config(args)
    model = train(arms, cfg)
    out = _outdir(args.out)
    model.save(out / "model.cgan")
    write_trace_csv(out / "trace.csv", model)
    for arm, w in zip(arms, extract_weights(model, arms)):
        write_weights_csv(out / f"weights_{arm.arm_id}.csv", arm, w)
    resolved = _resolved(args)
    resolved["train_config"] = config_dict(cfg)
    resolved["arm_ids"] = model.arm_ids
    resolved["iterations_run"] = len(model.trace)
    resolved["converged"] = model.converged
    _write_json(out / "config.json", resolved)
    first, last = model.trace[0], model.trace[-1]
    print(f"trained {len(model.trace)} iterations; F_total {first[-3]:.4f} -> {last[-3]:.4f}")
    return EXIT_OK


# --- weigh --------------------------------------------------------------------


def cmd_weigh(args) -> int:
    model = TrainedModel.load(args.checkpoint)
    arm = read_cohort_csv(args.cohort)
    key = args.arm if args.arm is not None else arm.arm_id
    if key not in model.arm_ids:
        if key.isdigit() and 0 <= int(key) < model.n_arms:
            key = model.arm_ids[int(key)]
        else:
            raise UsageError(f"cannot match cohort to a model arm (arms: {model.arm_ids}); pass --arm")
    arm = StudyArm(arm.features, arm.outcomes, arm.labels, key, arm.unit_ids)
    if arm.dim != model.stats.mean.shape[0]:
        raise DataValidationError(f"cohort has {arm.dim} features, checkpoint expects {model.stats.mean.shape[0]}")
    w = normalize(raw_ratios(model, arm), key)
    write_weights_csv(args.out, arm, w)
    print(f"wrote {args.out} ({arm.n} units, arm {key})")
    return EXIT_OK


# --- evaluate -----------------------------------------------------------------


def _method_weights(method, arms, args):
    a1, a2 = arms
    if method == "unweighted":
        return normalize(np.ones(a1.n), a1.arm_id), normalize(np.ones(a2.n), a2.arm_id)
    if method in ("ipw", "clipped-ipw"):
        return propensity_weights(a1.features, a2.features, method, (a1.arm_id, a2.arm_id))
    if method == "cgan":
        if args.checkpoint is None:
            raise UsageError("--method cgan requires --checkpoint")
        model = TrainedModel.load(args.checkpoint)
        pairs = []
        for k, arm in enumerate(arms):
            key = arm.arm_id if arm.arm_id in model.arm_ids else model.arm_ids[k]
            pairs.append(normalize(raw_ratios(model, StudyArm(arm.features, arm_id=key)), key))
        return tuple(pairs)
    raise UsageError(f"unknown method {method!r}")


def cmd_evaluate(args) -> int:
    if len(args.cohort) != 2:
        raise UsageError("evaluate needs exactly two --cohort files (treated first)")
    arms = _load_cohorts(args.cohort)
    runs = []
    if args.weights:
        if len(args.weights) != 2:
            raise UsageError("--weights needs one file per cohort")
        ws = []
        for arm, path in zip(arms, args.weights):
            ids, w = read_weights_csv(path)
            if len(w) != arm.n:
                raise DataValidationError(f"{path}: {len(w)} weights for {arm.n} cohort rows")
            if not np.array_equal(ids, arm.unit_ids):
                raise DataValidationError(f"{path}: unit ids do not match the cohort row order")
            ws.append(normalize(w.raw, arm.arm_id))
        runs.append((args.weights_label, tuple(ws)))
    methods = args.method or ([] if args.weights else list(METHODS[:3]))
    for m in methods:
        runs.append((m, _method_weights(m, arms, args)))

    effects, balances = [], []
    a1, a2 = arms
    for name, (w1, w2) in runs:
        if a1.outcomes is not None and a2.outcomes is not None:
            effects.append(effect_report(a1.outcomes, w1, a2.outcomes, w2, name))
        balances.append(asdm(a1.features, w1, a2.features, w2, name))
    out = _outdir(args.out)
    if effects:
        write_effect_csv(out / "effect.csv", effects)
    write_balance_csv(out / "balance.csv", balances, feature_columns(a1.dim))
    table = format_table(effects, balances)
    (out / "report.txt").write_text(table, encoding="utf-8")
    _write_json(out / "config.json", _resolved(args))
    print(table, end="")
    return EXIT_OK


# --- oracle -------------------------------------------------------------------


def cmd_oracle(args) -> int:
    names = sorted(SUITES) if args.suite == "all" else [args.suite]
    for name in names:
        print(run_suite(name, seed=args.seed).render(), flush=True)
    return EXIT_OK


# --- parser -------------------------------------------------------------------


def _hidden(text: str) -> list[int]:
    try:
        widths = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated widths, got {text!r}") from None
    if not widths or any(w <= 0 for w in widths):
        raise argparse.ArgumentTypeError("hidden widths must be positive")
    return widths


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="chigan", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="write the two-arm synthetic study as cohort CSVs")
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--d", type=int, default=10)
    s.add_argument("--n-sub", type=int, default=2000, help="units per subpopulation")
    s.add_argument("--kappa0", type=float, default=0.1)
    s.add_argument("--nu0", type=float, default=None, help="Wishart degrees of freedom (default d + 2)")
    s.set_defaults(func=cmd_simulate)

    d = TrainConfig()
    t = sub.add_parser("train", help="fit generator and critics on two or more cohorts")
    t.add_argument("--cohort", type=Path, action="append", required=True)
    t.add_argument("--out", type=Path, required=True)
    t.add_argument("--seed", type=int, default=d.seed)
    t.add_argument("--batch-size", type=int, default=d.batch_size)
    t.add_argument("--max-iters", type=int, default=d.max_iters)
    t.add_argument("--disc-steps", type=int, default=d.disc_steps)
    t.add_argument("--lr-gen", type=float, default=d.lr_gen)
    t.add_argument("--lr-disc", type=float, default=d.lr_disc)
    t.add_argument("--lr-decay", type=float, default=d.lr_decay)
    t.add_argument("--decay-every", type=int, default=d.decay_every)
    t.add_argument("--recenter-every", type=int, default=d.recenter_every)
    t.add_argument("--window", type=int, default=d.window)
    t.add_argument("--tol", type=float, default=d.tol)
    t.add_argument("--noise-dim", type=int, default=d.noise_dim)
    t.add_argument("--hidden", type=_hidden, default=list(d.hidden), help="e.g. 64,64")
    t.set_defaults(func=cmd_train)

    w = sub.add_parser("weigh", help="extract normalized weights for one cohort")
    w.add_argument("--checkpoint", type=Path, required=True)
    w.add_argument("--cohort", type=Path, required=True)
    w.add_argument("--arm", default=None, help="model arm id or index (default: cohort file stem)")
    w.add_argument("--out", type=Path, required=True)
    w.set_defaults(func=cmd_weigh)

    e = sub.add_parser("evaluate", help="ATE, ESS and ASDM under one or more weightings")
    e.add_argument("--cohort", type=Path, action="append", required=True)
    e.add_argument("--weights", type=Path, action="append", default=None)
    e.add_argument("--weights-label", default="cgan")
    e.add_argument("--method", action="append", choices=METHODS, default=None)
    e.add_argument("--checkpoint", type=Path, default=None)
    e.add_argument("--out", type=Path, required=True)
    e.set_defaults(func=cmd_evaluate)

    o = sub.add_parser("oracle", help="run a known-answer self-check")
    o.add_argument("suite", choices=[*sorted(SUITES), "all"])
    o.add_argument("--seed", type=int, default=0)
    o.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"chigan: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingError, NonFiniteError, DegenerateWeightsError) as exc:
        print(f"chigan: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataValidationError, CheckpointError, KeyError, ValueError, OSError) as exc:
        print(f"chigan: invalid data: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
