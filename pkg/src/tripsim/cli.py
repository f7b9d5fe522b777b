"""Command-line client for the experiment service.

Each subcommand reads a YAML config, posts it to the service, and
writes the returned files into --out.  By default the service runs
in-process; --server posts to a running instance instead (note that
any file paths inside the config are then resolved on the server).
Exit codes: 0 success, 2 config problem, 3 numeric failure.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import httpx
import yaml

from .config import ExperimentConfig

CONFIG_EXIT = 2
NUMERIC_EXIT = 3


def _load_payload(config_path: str, seed: int | None, workers: int | None) -> dict:
    try:
        with open(config_path) as f:
            raw = yaml.safe_load(f)
    except OSError as err:
        click.echo(f"error: {err}", err=True)
        sys.exit(CONFIG_EXIT)
    except yaml.YAMLError as err:
        click.echo(f"error: {config_path}: invalid YAML: {err}", err=True)
        sys.exit(CONFIG_EXIT)
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        click.echo(f"error: {config_path}: config must be a mapping", err=True)
        sys.exit(CONFIG_EXIT)
    if seed is not None:
        raw["seed"] = seed
    if workers is not None:
        raw["workers"] = workers
    try:
        model = ExperimentConfig.model_validate(raw)
    except Exception as err:  # pydantic ValidationError
        click.echo(f"error: {config_path}: {err}", err=True)
        sys.exit(CONFIG_EXIT)
    return model.model_dump(mode="json", by_alias=True)


def _client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server.rstrip("/"), timeout=None)
    import warnings

    with warnings.catch_warnings():
        # starlette nags about its preferred httpx pairing; irrelevant here
        warnings.simplefilter("ignore")
        from starlette.testclient import TestClient

    from .service import app

    return TestClient(app)


def _run_experiment(name: str, config_path: str, out_dir: str,
                    seed: int | None, workers: int | None, server: str | None) -> None:
    payload = _load_payload(config_path, seed, workers)
    with _client(server) as client:
        response = client.post(f"/api/{name}", json=payload)
    if response.status_code != 200:
        try:
            detail = response.json().get("detail")
        except json.JSONDecodeError:
            detail = response.text
        if isinstance(detail, dict):
            kind = detail.get("kind", "config")
            click.echo(f"error ({kind}): {detail.get('message', detail)}", err=True)
            sys.exit(NUMERIC_EXIT if kind == "numeric" else CONFIG_EXIT)
        click.echo(f"error: {detail}", err=True)
        sys.exit(CONFIG_EXIT if response.status_code in (400, 422) else NUMERIC_EXIT)
    body = response.json()
    target = Path(out_dir)
    target.mkdir(parents=True, exist_ok=True)
    for filename, content in sorted(body["files"].items()):
        (target / filename).write_text(content)
    click.echo(f"wrote {len(body['files'])} files to {target}")
    for key, value in body["summary"].items():
        click.echo(f"  {key}: {json.dumps(value, sort_keys=True)}")


def _experiment_command(name: str, help_text: str):
    @click.command(name=name, help=help_text)
    @click.option("--config", "config_path", required=True,
                  type=click.Path(exists=True, dir_okay=False), help="YAML run configuration.")
    @click.option("--out", "out_dir", required=True,
                  type=click.Path(file_okay=False), help="Directory for the output files.")
    @click.option("--seed", type=int, default=None, help="Override the config seed.")
    @click.option("--workers", type=int, default=None, help="Override the worker count.")
    @click.option("--server", default=None,
                  help="Base URL of a running service; default runs in-process.")
    def command(config_path, out_dir, seed, workers, server):
        _run_experiment(name, config_path, out_dir, seed, workers, server)

    return command


@click.group()
@click.version_option(package_name="tripsim")
def main() -> None:
    """Decentralized training with per-round contribution accounting."""


main.add_command(_experiment_command(
    "simulate", "Run one decentralized training simulation."))
main.add_command(_experiment_command(
    "shapley", "Compare accounted contributions against exact replays."))
main.add_command(_experiment_command(
    "removal", "Retrain after removing clients ranked by contribution."))
main.add_command(_experiment_command(
    "correlation", "Correlate contributions with a per-client data factor."))
main.add_command(_experiment_command(
    "dishonest", "Run attack scenarios with and without countermeasures."))


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
def serve(host: str, port: int) -> None:
    """Run the experiment service."""
    import uvicorn

    from .service import app

    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
