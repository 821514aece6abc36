"""Client SDK for plugging the structure reward service into RL training."""

from .client import (
    ClientConfig,
    ProtocolError,
    RewardClient,
    TransportError,
    as_reward_fn,
)

__all__ = [
    "ClientConfig",
    "ProtocolError",
    "RewardClient",
    "TransportError",
    "as_reward_fn",
]

__version__ = "0.1.0"
