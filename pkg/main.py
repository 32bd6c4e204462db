import argparse
import json
import logging
import os
import sys
from pathlib import Path

# Ensure the project root is in python path
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from pydantic import ValidationError
from termcolor import colored

from config.settings import settings
from core.errors import EXIT_CODES, ConfigurationError, ObservabilityError
from runner.experiments import RUNNERS
from runner.schemas import RunSpec

logger = logging.getLogger("stochgram")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stochgram",
        description="Stochastic empirical observability Gramians and sensor placement.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in RUNNERS:
        aliases = ["metrics-heatmap"] if name == "heatmap" else []
        cmd = sub.add_parser(name, aliases=aliases, help=f"run the '{name}' experiment")
        cmd.add_argument("--spec", required=True, help="JSON run spec")
        cmd.add_argument("--out", help="output directory (overrides output_dir in the spec)")
        cmd.add_argument("--seed", type=int, help="master seed (overrides the spec)")
        cmd.add_argument("--threads", type=int, help="worker threads (results do not depend on it)")
    return parser


def load_spec(args: argparse.Namespace) -> RunSpec:
    raw = json.loads(Path(args.spec).read_text(encoding="utf-8"))
    if not isinstance(raw, dict):
        raise ConfigurationError(f"run spec must be a JSON object, got {type(raw).__name__}")
    raw["experiment"] = args.command
    for key in ("seed", "threads"):
        value = getattr(args, key)
        if value is not None:
            raw[key] = value
    if args.out is not None:
        raw["output_dir"] = args.out
    return RunSpec(**raw)


def output_dir(spec: RunSpec) -> Path:
    if spec.output_dir:
        return Path(spec.output_dir)
    return Path(settings.RESULTS_DIR) / f"{spec.experiment}-{spec.spec_hash()}"


def _tag(kind: str, message: str, color: str) -> str:
    return f"{colored(f'[{kind}]', color, attrs=['bold'])} {message}"


def main(argv=None) -> int:
    level = logging.DEBUG if settings.DEBUG else getattr(logging, settings.LOG_LEVEL.upper(), logging.INFO)
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        spec = load_spec(args)
    except (ValidationError, ConfigurationError, json.JSONDecodeError, OSError) as e:
        print(_tag("INVALID", f"{args.spec}: {e}", "red"), file=sys.stderr)
        return EXIT_CODES["validation"]

    out = output_dir(spec)
    tag = spec.experiment.upper()
    print(_tag(tag, f"{settings.PROJECT_NAME} v{settings.VERSION} {spec.experiment} "
                      f"(plant={spec.plant}, seed={spec.seed}, spec={spec.spec_hash()})", "cyan"))
    try:
        summary = RUNNERS[spec.experiment](spec, out)
    except ObservabilityError as e:
        print(_tag(type(e).__name__, str(e), "red"), file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logger.exception(f"{spec.experiment} failed")
        print(_tag("ERROR", str(e), "red"), file=sys.stderr)
        return EXIT_CODES["error"]

    print(_tag(tag, f"artifacts in {out} ({len(summary)} summary fields)", "green"))
    return EXIT_CODES["ok"]


if __name__ == "__main__":
    sys.exit(main())
