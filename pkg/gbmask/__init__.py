"""Global-binary-mask segmentation: a numpy 3D U-Net engine and experiment harness."""

from . import telemetry

try:
    from importlib.metadata import version

    __version__ = version("gbmask")
except Exception:
    __version__ = "0.0.0-dev"

__all__ = ["__version__", "telemetry"]
