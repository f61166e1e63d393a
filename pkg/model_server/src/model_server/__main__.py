"""Process entry point: ``python -m model_server`` or the model-server script."""

from __future__ import annotations

import sys

import uvicorn

from .app import create_app
from .config import ConfigError, from_env
from .model import ModelError


def main() -> None:
    try:
        config = from_env()
        app = create_app(config)
    except (ConfigError, ModelError) as err:
        print(f"model-server: {err}", file=sys.stderr)
        raise SystemExit(2)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")


if __name__ == "__main__":
    main()
