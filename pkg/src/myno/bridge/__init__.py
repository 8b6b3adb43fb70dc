"""NETCONF-MQTT bridge: bootstrap processing, caches, northbound servers."""

from myno.bridge.core import (
    ArgTypeError,
    Bridge,
    BridgeConfig,
    Reading,
    RegistryEntry,
    RpcResponse,
    UnknownRpc,
)

__all__ = [
    "ArgTypeError",
    "Bridge",
    "BridgeConfig",
    "Reading",
    "RegistryEntry",
    "RpcResponse",
    "UnknownRpc",
]
