"""HTTP scoring service: FastAPI app factory and configuration."""

from .app import create_app
from .config import ServiceConfig, load_service_config

__all__ = ["ServiceConfig", "create_app", "load_service_config"]
