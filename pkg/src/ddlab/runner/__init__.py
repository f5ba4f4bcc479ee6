"""Declarative experiment runner: config files in, CSVs and manifests out."""

from .config import KINDS, RunConfig, Schedule, normalize, parse_config
from .execute import ENV_OUT_ROOT, RunManifest, default_outdir, run

__all__ = [
    "KINDS", "RunConfig", "Schedule", "normalize", "parse_config",
    "ENV_OUT_ROOT", "RunManifest", "default_outdir", "run",
]
