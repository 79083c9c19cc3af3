"""CLI entry point for gbmask."""

import rich_click as click

from .. import __version__

# Import command modules; avoid shadowing module names with command objects
# so that `import gbmask.cli.<module>` still resolves to the module.
from . import config_cmd as _config_mod
from . import evaluate_cmd as _evaluate_mod
from . import phantom_cmd as _phantom_mod
from . import preprocess_cmd as _preprocess_mod
from . import report_cmd as _report_mod
from . import sweep_cmd as _sweep_mod
from . import train_cmd as _train_mod
from ._logging import LoggedGroup


@click.group(cls=LoggedGroup)
@click.version_option(version=__version__)
def cli():
    """Global-binary-mask U-Net segmentation: phantoms, preprocessing, training, evaluation and sweeps."""


cli.add_command(_phantom_mod.phantom)
cli.add_command(_preprocess_mod.preprocess)
cli.add_command(_train_mod.train_command)
cli.add_command(_evaluate_mod.evaluate_command)
cli.add_command(_sweep_mod.sweep)
cli.add_command(_report_mod.report)
cli.add_command(_config_mod.config)


if __name__ == "__main__":
    cli()
