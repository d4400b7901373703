"""Command line interface

    tdkrr run <config.json | manifest.json | preset> [--output DIR] [--trials N] [--seed S]
    tdkrr validate <config.json | preset>
    tdkrr show <preset>
    tdkrr oracle <suite | all>
    tdkrr dataset split <path> --mics K --seed S

Errors are reported as one JSON object on stderr with a nonzero exit code. The
output directory is taken from --output, then the TDKRR_OUTPUT_DIR environment
variable, then the config's output_dir, then results/<name>.
"""
import argparse
import json
import os
import sys

from tdkrr.harness import config as cfgmod
from tdkrr.harness import dataset as dsmod
from tdkrr.harness import oracles
from tdkrr.harness.output import emit_results
from tdkrr.harness.runner import ExperimentError, run_experiment

OUTPUT_ENV = "TDKRR_OUTPUT_DIR"

EXIT_FAILURE = 1
EXIT_USAGE = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise cfgmod.ConfigError(message)


def _parser():
    p = _Parser(prog="tdkrr", description="Time-domain sound field estimation experiments")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment and write CSV results")
    run.add_argument("config", help="config or manifest JSON file, or a preset name")
    run.add_argument("--output", help="output directory")
    run.add_argument("--trials", type=int, help="override the number of trials")
    run.add_argument("--seed", type=int, help="override the master seed")
    run.add_argument("--quiet", action="store_true")

    val = sub.add_parser("validate", help="check a config without running it")
    val.add_argument("config")

    show = sub.add_parser("show", help="print a preset as JSON")
    show.add_argument("preset", choices=sorted(cfgmod.PRESETS))

    orc = sub.add_parser("oracle", help="run reference checks")
    orc.add_argument("suite", choices=sorted(oracles.SUITES) + ["all"])
    orc.add_argument("--seed", type=int, default=0)

    ds = sub.add_parser("dataset", help="dataset utilities")
    dsub = ds.add_subparsers(dest="dataset_command", required=True)
    spl = dsub.add_parser("split", help="choose microphone positions from a dataset")
    spl.add_argument("path")
    spl.add_argument("--mics", type=int, required=True)
    spl.add_argument("--seed", type=int, required=True)
    return p


def _output_dir(args, cfg):
    if args.output:
        return args.output
    if os.environ.get(OUTPUT_ENV):
        return os.environ[OUTPUT_ENV]
    return cfg.output_dir or os.path.join("results", cfg.name)


def _cmd_run(args):
    cfg = cfgmod.load_config(args.config)
    changes = {}
    if args.trials is not None:
        changes["trials"] = args.trials
    if args.seed is not None:
        changes["seed"] = args.seed
    if changes:
        cfg = cfg.replace(**changes)
    out = _output_dir(args, cfg)

    def progress(done, total):
        if not args.quiet:
            print(f"trial {done}/{total}", file=sys.stderr, flush=True)

    result = run_experiment(cfg, progress)
    paths = emit_results(result, out)
    print(json.dumps({"output_dir": str(out), "files": sorted(p.name for p in paths.values())}))
    return 0


def _cmd_validate(args):
    cfg = cfgmod.load_config(args.config)
    print(json.dumps({"valid": True, "name": cfg.name}))
    return 0


def _cmd_show(args):
    print(json.dumps(cfgmod.preset(args.preset).to_dict(), indent=2))
    return 0


def _cmd_oracle(args):
    results = oracles.run_suite(args.suite, args.seed)
    print(json.dumps(results, indent=2))
    return 0 if all(r["passed"] for r in results) else EXIT_FAILURE


def _cmd_dataset(args):
    ds = dsmod.load_dataset(args.path)
    mic_idx, eval_idx = dsmod.split(ds, args.mics, args.seed)
    print(json.dumps({"mics": mic_idx.tolist(), "eval": eval_idx.tolist()}))
    return 0


COMMANDS = {"run": _cmd_run, "validate": _cmd_validate, "show": _cmd_show,
            "oracle": _cmd_oracle, "dataset": _cmd_dataset}


def _fail(kind, message, code):
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return code


def main(argv=None):
    try:
        args = _parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except (cfgmod.ConfigError, dsmod.DatasetError) as exc:
        return _fail(type(exc).__name__, str(exc), EXIT_USAGE)
    except (ExperimentError, ValueError, OSError, KeyError) as exc:
        return _fail(type(exc).__name__, str(exc), EXIT_FAILURE)


if __name__ == "__main__":
    sys.exit(main())
