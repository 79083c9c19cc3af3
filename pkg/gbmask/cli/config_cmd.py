"""Config commands."""

import json

import rich_click as click
from rich.syntax import Syntax

from ..config import get_config_path, load_config, save_config, set_config_value
from ._console import console, print_outputs
from ._helpers import UsageFailure, cli_errors


@click.group()
def config():
    """Manage the user configuration (defaults for experiments and commands)."""


@config.command("show")
def config_show():
    """Show the merged configuration."""
    with cli_errors("config"):
        cfg = load_config()
    console.print(Syntax(json.dumps(cfg, indent=2), "json", theme="monokai"))


@config.command("path")
def config_path():
    """Show configuration file path."""
    print_outputs(get_config_path())


@config.command("set")
@click.argument("key")
@click.argument("value")
def config_set(key: str, value: str):
    """Set a configuration value (e.g., training.lr 0.0003)."""
    with cli_errors("config"):
        cfg = load_config()
        try:
            set_config_value(cfg, key, value)
        except KeyError as exc:
            raise UsageFailure(f"cannot set {key}: {exc.args[0]}") from exc
        save_config(cfg)
    section, _, leaf = key.rpartition(".")
    console.print(f"Set {key} = {json.dumps(cfg[section][leaf] if section else cfg[leaf])}")
