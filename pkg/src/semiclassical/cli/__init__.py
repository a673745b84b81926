"""Command-line front end: ``semiclassical {spectrum,converge,eigfn,check}``."""

from .config import RunConfig, load_config, parse_config  # noqa: F401
