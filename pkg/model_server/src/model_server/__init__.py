"""Scoring microservice: column-relevance probabilities over HTTP.

The server answers POST /score and GET /health for clients that treat the
relevance model as a black box. It ships with a test-mode echo model and a
pluggable linear checkpoint; swapping in a heavier model only means adding
another backend in model.py.
"""

from .app import create_app
from .config import ConfigError, ServerConfig, from_env, parse_bind
from .model import EchoModel, LinearModel, ModelError, load_model

__all__ = [
    "ConfigError",
    "EchoModel",
    "LinearModel",
    "ModelError",
    "ServerConfig",
    "create_app",
    "from_env",
    "load_model",
    "parse_bind",
]
