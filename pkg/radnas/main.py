"""
Command line: `radnas [--log-level LEVEL] <command> --config <path> [--force] [--set key=value]...`

Exit status: 0 success or no-op, 1 invalid config, 2 missing or changed
upstream artifact, 3 any other failure.
"""

import logging
import sys
from pathlib import Path
from typing import Sequence, Tuple

import click

from radnas.artifacts import RunManifest, completed_run, package_versions, record, status, utc_now, write_run_manifest
from radnas.config import config_hash, dump_config, load_config, load_settings, resolve_output_dir, validate_config
from radnas.exceptions import ArtifactHashError, ArtifactMissingError, ConfigError, RadnasError
from radnas.pipeline import STAGES, StageContext
from radnas.utils import seed_everything, setup_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_ARTIFACT = 2
EXIT_RUNTIME = 3

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


def run(command: str, config_path, overrides: Sequence[str] = (), force: bool = False, log_level: str = "INFO") -> Tuple[int, dict]:
    """Run one pipeline stage; returns (exit status, status dict)."""
    settings = load_settings()
    setup_logging(log_level)
    if command not in STAGES:
        return EXIT_CONFIG, {"status": "error", "artifacts": {}, "message": f"unknown command {command!r}"}
    try:
        config = load_config(config_path, overrides)
    except ConfigError as e:
        for violation in e.violations:
            logger.error("[CLI] config: %s", violation)
        return EXIT_CONFIG, {"status": "error", "artifacts": {}, "message": str(e)}

    out = resolve_output_dir(config, settings)
    chash = config_hash(config)
    if not force:
        done = completed_run(out, command, chash)
        if done is not None:
            message = f"{command} already completed with this config; pass --force to rerun"
            logger.info("[CLI] %s", message)
            return EXIT_OK, status("skipped", done.artifacts, message)

    manifest = RunManifest(command=command, config_hash=chash, started_at=utc_now(), versions=package_versions())
    ctx = StageContext(config=config, out=out, config_hash=chash)
    try:
        seed_everything(config.seed)
        logger.info("[CLI] %s -> %s", command, out)
        produced = STAGES[command](ctx)
        manifest.artifacts = {name: record(out, path) for name, path in produced.items()}
        manifest.inputs = dict(ctx.inputs)
        write_run_manifest(out, manifest, dump_config(config))
    except (ArtifactMissingError, ArtifactHashError) as e:
        logger.error("[CLI] %s", e)
        return EXIT_ARTIFACT, {"status": "error", "artifacts": {}, "message": str(e)}
    except RadnasError as e:
        logger.error("[CLI] %s failed: %s", command, e)
        return EXIT_RUNTIME, {"status": "error", "artifacts": {}, "message": str(e)}
    except Exception as e:
        logger.exception("[CLI] %s crashed", command)
        return EXIT_RUNTIME, {"status": "error", "artifacts": {}, "message": f"{type(e).__name__}: {e}"}
    return EXIT_OK, status("ok", manifest.artifacts, f"{command} finished")


def _stage_options(fn):
    fn = click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE", help="Dotted-path config override.")(fn)
    fn = click.option("--force", is_flag=True, help="Rerun even if the stage already completed.")(fn)
    fn = click.option("--config", "config_path", required=True, type=click.Path(path_type=Path), help="Pipeline YAML file.")(fn)
    return fn


@click.group()
@click.option("--log-level", type=click.Choice(LOG_LEVELS, case_sensitive=False), default="INFO", show_default=True)
@click.pass_context
def cli(ctx: click.Context, log_level: str):
    """Radar detector architecture search pipeline."""
    ctx.obj = {"log_level": log_level.upper()}


def _register(name: str):
    @cli.command(name=name, help=f"Run the {name} stage.")
    @_stage_options
    @click.pass_obj
    def command(obj: dict, config_path: Path, force: bool, overrides: Tuple[str, ...]):
        code, result = run(name, config_path, overrides, force, log_level=obj["log_level"])
        click.echo(result["message"])
        for artifact, path in sorted(result["artifacts"].items()):
            click.echo(f"  {artifact}: {path}")
        sys.exit(code)

    return command


for _name in STAGES:
    _register(_name)


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path(path_type=Path))
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE")
def validate(config_path: Path, overrides: Tuple[str, ...]):
    """Check a config file and list every violation."""
    try:
        violations = validate_config(config_path, overrides)
    except ConfigError as e:
        violations = e.violations
    if not violations:
        click.echo("ok")
        sys.exit(EXIT_OK)
    for violation in violations:
        click.echo(violation)
    sys.exit(EXIT_CONFIG)


if __name__ == "__main__":
    cli()
