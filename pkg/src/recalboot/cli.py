"""Command-line runner for the experiment recipes.

Usage::

    recalboot list
    recalboot run --recipe bag-sweep --seed 1 --trials 4 --output-dir out/
    recalboot validate --config my.yaml [--recipe sl-study]

Exit codes: 0 success, 1 usage or configuration error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import sys

from .exceptions import ConfigError, IngestionError, RecalbootError
from .experiments import RECIPES, list_recipes, resolve_params, run_recipe, validate_config

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2

# flag -> recipe parameter it overrides
_FLAG_PARAMS = {"trials": "trials", "bags": "bags", "noise": "noise", "p": "p", "methods": "methods"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _list_arg(text):
    return [t.strip() for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="recalboot", description="Run recalibrated-bootstrap experiment recipes.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("list", help="list the available recipes")

    run = sub.add_parser("run", help="run one recipe and write its result tables")
    run.add_argument("--recipe", choices=sorted(RECIPES), help="recipe name (or set it in --config)")
    run.add_argument("--config", help="YAML file of recipe parameters")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--trials", type=int)
    run.add_argument("--bags", type=_list_arg, help="number of bags; comma list for bag-sweep")
    run.add_argument("--noise", type=_list_arg, help="noise level; comma list for noise-sweep")
    run.add_argument("--p", type=float, help="interval confidence level used for recalibration")
    run.add_argument("--methods", type=_list_arg, help="comma-separated correlation methods")
    run.add_argument("--output-dir", required=True)
    run.add_argument("--fixture-dir", help="directory holding real-data CSV and schema files")
    run.add_argument("--full", action="store_true", help="restore the full-scale trial counts")

    val = sub.add_parser("validate", help="check a config file and print the resolved parameters")
    val.add_argument("--config", required=True)
    val.add_argument("--recipe", choices=sorted(RECIPES))
    return parser


def _overrides(args, recipe, base):
    out = dict(base)
    defaults = resolve_params(recipe, None)
    for flag, key in _FLAG_PARAMS.items():
        value = getattr(args, flag)
        if value is None:
            continue
        if key not in defaults:
            raise ConfigError(f"--{flag} does not apply to recipe {recipe!r}")
        if isinstance(value, list) and not isinstance(defaults[key], list):
            if len(value) != 1:
                raise ConfigError(f"--{flag} takes a single value for recipe {recipe!r}")
            value = value[0]
        out[key] = value
    return out


def _run(args):
    base = {}
    recipe = args.recipe
    full = args.full
    if args.config:
        recipe, params = validate_config(args.config, recipe)
        base = params
    if recipe is None:
        raise ConfigError("no recipe given; pass --recipe or a config with a 'recipe' key")
    overrides = _overrides(args, recipe, base)
    bundle = run_recipe(recipe, args.output_dir, seed=args.seed, overrides=overrides,
                        full=full, fixture_dir=args.fixture_dir)
    print(f"{recipe}: wrote results to {args.output_dir} in {bundle.elapsed:.1f} s")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "list":
            print(list_recipes())
            return EXIT_OK
        if args.command == "validate":
            name, params = validate_config(args.config, args.recipe)
            print(json.dumps({"recipe": name, "params": params}, indent=2, sort_keys=True))
            return EXIT_OK
        return _run(args)
    except IngestionError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RecalbootError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
