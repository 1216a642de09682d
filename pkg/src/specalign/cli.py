"""Experiment runner CLI.

  specalign run    --scenario uda --dataset two_moons --rotation 45 \
                   --mode spa_plus_plus --seed 7 --out runs/a
  specalign verify [--suite spectral] [--trials 500]

`run` writes metrics.jsonl, curve.csv, resolved.cfg, checkpoint.bin, and the
rendered figures into the output directory. Flags override config-file values;
config-file values override built-in defaults. SPA_SEED serves as a seed
fallback when neither flag nor file provides one.
"""

import argparse
import os
import sys

from . import data as data_mod
from . import model as model_mod
from . import report as report_mod
from . import verify as verify_mod
from .errors import SpecalignError
from .data import ScenarioSpec, compose_scenario
from .trainer import TrainConfig, Trainer

RUN_DEFAULTS = {
    "scenario": "uda",
    "shots": 0,
    "dataset": "two_moons",
    "rotation": 45.0,
    "imbalance": 1.0,
    "subpop_balance": False,
    "mode": "spa_plus_plus",
    "alpha": 1.0,
    "beta_max": 0.2,
    "tau": 0.5,
    "xi": 0.5,
    "k": 5,
    "similarity": "gaussian",
    "laplacian": "sym",
    "p_norm": 2.0,
    "conf_threshold": 0.8,
    "epochs": 30,
    "batch_size": 32,
    "lr0": 0.01,
    "momentum": 0.9,
    "weight_decay": 0.005,
    "ramp_v": 1.0,
    "samples": 300,
    "noise": 0.1,
    "shift": 3.0,
    "source_csv": "",
    "target_csv": "",
    "seed": 0,
}

_BOOL_TRUE = ("1", "true", "yes", "on")
_BOOL_FALSE = ("0", "false", "no", "off")


def _parse_value(key, raw):
    default = RUN_DEFAULTS[key]
    raw = raw.strip()
    if isinstance(default, bool):
        low = raw.lower()
        if low in _BOOL_TRUE:
            return True
        if low in _BOOL_FALSE:
            return False
        raise ValueError(f"expected a boolean for {key}, got {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def read_config_file(path):
    """Flat `key = value` file with # comments; unknown keys are errors."""
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ValueError(f"{path}:{line_no}: expected key = value")
            key, raw = (part.strip() for part in stripped.split("=", 1))
            if key not in RUN_DEFAULTS:
                raise ValueError(f"{path}:{line_no}: unknown key {key!r}")
            values[key] = _parse_value(key, raw)
    return values


def write_config_file(settings, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# resolved experiment configuration\n")
        for key in RUN_DEFAULTS:
            value = settings[key]
            if isinstance(value, bool):
                value = "true" if value else "false"
            fh.write(f"{key} = {value}\n")


def _moons(settings, rotation, domain, index):
    return data_mod.make_two_moons(
        settings["samples"],
        rotation_degrees=rotation,
        noise=settings["noise"],
        seed=(settings["seed"], index),
        domain_id=domain,
    )


def _blob_pair(settings, shift_scale, source_domain, target_domain, index):
    shift = (settings["shift"] * shift_scale, 0.0)
    return data_mod.make_blob_shift(
        settings["samples"], 3, shift,
        spread=0.5,
        seed=(settings["seed"], index),
        source_domain=source_domain,
        target_domain=target_domain,
    )


def build_domains(settings):
    """Domain-id -> Dataset map plus the source/target id lists per scenario."""
    kind = settings["dataset"]
    scenario = settings["scenario"]
    rotation = settings["rotation"]
    if kind == "two_moons":
        if scenario == "msda":
            domains = {
                0: _moons(settings, 0.0, 0, 1),
                1: _moons(settings, rotation / 2.0, 1, 2),
                2: _moons(settings, rotation, 2, 3),
            }
            return domains, [0, 1], [2]
        if scenario == "mtda":
            domains = {
                0: _moons(settings, 0.0, 0, 1),
                1: _moons(settings, rotation, 1, 2),
                2: _moons(settings, -rotation, 2, 3),
            }
            return domains, [0], [1, 2]
        domains = {
            0: _moons(settings, 0.0, 0, 1),
            1: _moons(settings, rotation, 1, 2),
        }
        return domains, [0], [1]
    if kind == "blobs":
        if scenario == "msda":
            src_a, tgt = _blob_pair(settings, 1.0, 0, 2, 1)
            src_b, _ = _blob_pair(settings, 0.5, 1, 3, 2)
            return {0: src_a, 1: src_b, 2: tgt}, [0, 1], [2]
        if scenario == "mtda":
            src, tgt_a = _blob_pair(settings, 1.0, 0, 1, 1)
            _, tgt_b = _blob_pair(settings, -1.0, 3, 2, 2)
            return {0: src, 1: tgt_a, 2: tgt_b}, [0], [1, 2]
        src, tgt = _blob_pair(settings, 1.0, 0, 1, 1)
        return {0: src, 1: tgt}, [0], [1]
    if kind == "csv":
        if not settings["source_csv"] or not settings["target_csv"]:
            raise ValueError("csv dataset needs --source-csv and --target-csv")
        source = data_mod.load_csv(settings["source_csv"])
        target = data_mod.load_csv(settings["target_csv"])
        class_count = max(source.class_count, target.class_count)
        source.class_count = class_count
        target.class_count = class_count
        src_ids = sorted(set(source.domains.tolist()))
        tgt_offset = max(src_ids) + 1
        target.domains = target.domains + tgt_offset
        tgt_ids = sorted(set(target.domains.tolist()))
        domains = {}
        for dom in src_ids:
            domains[dom] = source.subset(source.domains == dom)
        for dom in tgt_ids:
            domains[dom] = target.subset(target.domains == dom)
        return domains, src_ids, tgt_ids
    raise ValueError(f"unknown dataset {kind!r}")


def _add_run_flags(parser):
    parser.add_argument("--scenario", choices=("uda", "ssda", "msda", "mtda"))
    parser.add_argument("--shots", type=int, choices=(0, 1, 3))
    parser.add_argument("--dataset", choices=("two_moons", "blobs", "csv"))
    parser.add_argument("--rotation", type=float)
    parser.add_argument("--imbalance", type=float)
    parser.add_argument("--subpop-balance", action="store_true", default=None,
                        dest="subpop_balance")
    parser.add_argument("--mode", choices=("baseline", "spa", "spa_plus_plus"))
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--beta-max", type=float, dest="beta_max")
    parser.add_argument("--tau", type=float)
    parser.add_argument("--xi", type=float)
    parser.add_argument("--k", type=int)
    parser.add_argument("--similarity", choices=("cosine", "gaussian", "euclidean"))
    parser.add_argument("--laplacian", choices=("sym", "rwk"))
    parser.add_argument("--p-norm", type=float, dest="p_norm")
    parser.add_argument("--conf-threshold", type=float, dest="conf_threshold")
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--batch-size", type=int, dest="batch_size")
    parser.add_argument("--lr0", type=float)
    parser.add_argument("--momentum", type=float)
    parser.add_argument("--weight-decay", type=float, dest="weight_decay")
    parser.add_argument("--ramp-v", type=float, dest="ramp_v")
    parser.add_argument("--samples", type=int)
    parser.add_argument("--noise", type=float)
    parser.add_argument("--shift", type=float)
    parser.add_argument("--source-csv", dest="source_csv")
    parser.add_argument("--target-csv", dest="target_csv")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--config", help="flat key = value configuration file")
    parser.add_argument("--out", required=True, help="output directory")


class UsageError(Exception):
    """Bad flags, unreadable config, or an invalid scenario; exits with 2."""


def resolve_settings(args):
    settings = dict(RUN_DEFAULTS)
    seed_given = args.seed is not None
    if args.config:
        try:
            file_values = read_config_file(args.config)
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot use config {args.config}: {exc}") from exc
        seed_given = seed_given or "seed" in file_values
        settings.update(file_values)
    for key in RUN_DEFAULTS:
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            settings[key] = flag_value
    if not seed_given and "SPA_SEED" in os.environ:
        settings["seed"] = int(os.environ["SPA_SEED"])
    return settings


def run_experiment(args):
    settings = resolve_settings(args)
    try:
        domains, source_ids, target_ids = build_domains(settings)
        spec = ScenarioSpec(
            kind=settings["scenario"],
            labeled_target_shots=settings["shots"],
            source_domains=source_ids,
            target_domains=target_ids,
            imbalance_ratio=settings["imbalance"],
            subpopulation_balance=settings["subpop_balance"],
        )
        scenario = compose_scenario(spec, domains, seed=settings["seed"])
    except (SpecalignError, ValueError, OSError) as exc:
        raise UsageError(str(exc)) from exc
    config = TrainConfig(
        mode=settings["mode"],
        alpha=settings["alpha"],
        beta_max=settings["beta_max"],
        conf_threshold=settings["conf_threshold"],
        tau=settings["tau"],
        xi=settings["xi"],
        k=settings["k"],
        similarity=settings["similarity"],
        laplacian=settings["laplacian"],
        p_norm=settings["p_norm"],
        lr0=settings["lr0"],
        momentum=settings["momentum"],
        weight_decay=settings["weight_decay"],
        batch_size=settings["batch_size"],
        epochs=settings["epochs"],
        ramp_v=settings["ramp_v"],
        seed=settings["seed"],
    )
    os.makedirs(args.out, exist_ok=True)
    write_config_file(settings, os.path.join(args.out, "resolved.cfg"))
    trainer = Trainer(config, scenario)
    result = trainer.run()
    report_mod.write_metrics_jsonl(result, os.path.join(args.out, "metrics.jsonl"))
    report_mod.write_curve_csv(result, os.path.join(args.out, "curve.csv"))
    model_mod.save_checkpoint(trainer.params, os.path.join(args.out, "checkpoint.bin"))
    report_mod.render_figures(result, args.out)
    print(
        f"{settings['scenario']}/{settings['mode']} seed {settings['seed']}: "
        f"target accuracy {result.summary['final_acc_target']:.4f}, "
        f"A-distance {result.summary['final_a_distance']:.4f} "
        f"({result.summary['steps']} steps)"
    )
    return 0


def run_verify(args):
    names = args.suite if args.suite else None
    ok = verify_mod.run_suites(names=names, trials=args.trials, seed=args.seed)
    return 0 if ok else 1


def build_parser():
    parser = argparse.ArgumentParser(prog="specalign")
    sub = parser.add_subparsers(dest="command", required=True)
    run_parser = sub.add_parser("run", help="run one experiment")
    _add_run_flags(run_parser)
    verify_parser = sub.add_parser("verify", help="run the property suites")
    verify_parser.add_argument(
        "--suite", action="append",
        choices=[name for name, _ in verify_mod.SUITES],
        help="restrict to one suite (repeatable)",
    )
    verify_parser.add_argument("--trials", type=int, default=None)
    verify_parser.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        if args.command == "run":
            return run_experiment(args)
        return run_verify(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (SpecalignError, ValueError, OSError) as exc:
        print(f"error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return 1


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
