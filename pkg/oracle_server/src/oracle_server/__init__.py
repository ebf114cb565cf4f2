"""Reference HTTP oracle server for the latentpatch wire protocol."""

from .app import build_app
from .config import ServerConfig

__all__ = ["ServerConfig", "build_app"]
