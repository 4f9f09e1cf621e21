"""Command-line entry point.

    spoofaudit synth|audit|train|score|evaluate|intervene|experiment --config cfg.json
               [--out DIR] [--seed N]

Exit codes: 0 success, 2 validation error, 3 missing prerequisite.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .harness import (EXPERIMENTS, STAGES, ExperimentConfig, Pipeline, PrerequisiteError,
                      ValidationError)

EXIT_OK, EXIT_VALIDATION, EXIT_PREREQ = 0, 2, 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spoofaudit", description=__doc__.split("\n")[0])
    p.add_argument("stage", choices=STAGES + ("experiment",))
    p.add_argument("--config", required=True, help="experiment config (JSON)")
    p.add_argument("--out", help="output directory (overrides config out_dir)")
    p.add_argument("--seed", type=int, help="seed (overrides config seed)")
    p.add_argument("--name", choices=EXPERIMENTS,
                   help="experiment name (overrides config experiment.name)")
    p.add_argument("--subset", help="subset for score/evaluate/intervene (default from config)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_VALIDATION
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = ExperimentConfig.load(args.config)
        updates = {}
        if args.out:
            updates["out_dir"] = args.out
        if args.seed is not None:
            updates["seed"] = args.seed
        if args.subset:
            updates["subset"] = args.subset
        if updates:
            cfg = cfg.with_updates(**updates)
        pipe = Pipeline(cfg)
        if args.stage == "experiment":
            name = args.name or (cfg.experiment or {}).get("name")
            if name is None:
                raise ValidationError("experiment stage needs --name or experiment.name in config")
            result = pipe.experiment(name)
            print(result["table"])
        else:
            man = getattr(pipe, args.stage)()
            print(json.dumps({"stage": man["stage"], "outputs": man["outputs"]}, indent=1))
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except PrerequisiteError as exc:
        print(f"missing prerequisite: {exc}", file=sys.stderr)
        return EXIT_PREREQ
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
