"""Gymnasium-style adapter for the procbench engine."""

__version__ = "0.1.0"

from .bridge import (HAVE_GYMNASIUM, BridgeConfig, BridgeError, EngineClientEnv,
                     bridge_make)
