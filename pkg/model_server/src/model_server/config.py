"""Server configuration, normally read from environment variables.

MODEL_PATH names a checkpoint file (absent or empty means test-mode echo);
BIND_ADDR is "host:port".
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Mapping

DEFAULT_BIND = "127.0.0.1:8765"


class ConfigError(ValueError):
    """The server configuration is unusable."""


@dataclass(frozen=True)
class ServerConfig:
    model_path: str | None = None
    host: str = "127.0.0.1"
    port: int = 8765
    # characters of input kept per request; the default comfortably covers
    # every question in the client fixtures
    max_sentence_length: int = 512
    batch_size: int = 16

    def __post_init__(self) -> None:
        if not 0 <= self.port <= 65535:
            raise ConfigError(f"port {self.port} outside [0, 65535]")
        if self.max_sentence_length < 1:
            raise ConfigError("max_sentence_length must be at least 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")


def parse_bind(address: str) -> tuple[str, int]:
    """Split a "host:port" bind address; the port must be an integer."""
    host, sep, port_text = address.rpartition(":")
    if not sep or not host or not port_text:
        raise ConfigError(f"bind address '{address}' must look like host:port")
    try:
        port = int(port_text)
    except ValueError:
        raise ConfigError(f"bind address '{address}' has a non-numeric port") from None
    return host, port


def from_env(environ: Mapping[str, str] | None = None) -> ServerConfig:
    """Build a ServerConfig from MODEL_PATH and BIND_ADDR."""
    source = os.environ if environ is None else environ
    host, port = parse_bind(source.get("BIND_ADDR", DEFAULT_BIND))
    model_path = source.get("MODEL_PATH") or None
    return ServerConfig(model_path=model_path, host=host, port=port)
