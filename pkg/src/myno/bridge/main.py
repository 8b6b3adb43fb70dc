"""Command-line entry point for the bridge."""

from __future__ import annotations

import argparse
import json
import logging
import os
import threading

from myno.bridge.core import Bridge, BridgeConfig


def _env(name: str, default):
    return os.environ.get(f"MYNO_{name}", default)


def build_config(argv=None) -> BridgeConfig:
    parser = argparse.ArgumentParser(
        prog="myno-bridge",
        description="Bridge between MQTT device traffic and NETCONF/HTTP management",
    )
    parser.add_argument("--mqtt-host", default=_env("MQTT_HOST", "127.0.0.1"))
    parser.add_argument("--mqtt-port", type=int, default=int(_env("MQTT_PORT", 1883)))
    parser.add_argument("--netconf-port", type=int, default=int(_env("NETCONF_PORT", 8300)))
    parser.add_argument("--http-port", type=int, default=int(_env("HTTP_PORT", 8080)))
    parser.add_argument("--rpc-timeout", type=float, default=float(_env("RPC_TIMEOUT", 10.0)))
    parser.add_argument("--static-dir", default=_env("STATIC_DIR", None))
    parser.add_argument("--config", help="JSON config file; CLI flags override it")
    parser.add_argument("--verbose", "-v", action="store_true")
    args = parser.parse_args(argv)

    file_values = {}
    if args.config:
        with open(args.config, encoding="utf-8") as handle:
            file_values = json.load(handle)

    def pick(flag: str, key: str, default):
        value = getattr(args, flag)
        if value != default:
            return value
        return file_values.get(key, value)

    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO)
    return BridgeConfig(
        mqtt_host=pick("mqtt_host", "mqtt_host", "127.0.0.1"),
        mqtt_port=pick("mqtt_port", "mqtt_port", 1883),
        netconf_port=pick("netconf_port", "netconf_port", 8300),
        http_port=pick("http_port", "http_port", 8080),
        rpc_timeout=pick("rpc_timeout", "rpc_timeout", 10.0),
        static_dir=pick("static_dir", "static_dir", None),
    )


def main(argv=None) -> int:
    bridge = Bridge(build_config(argv)).start()
    try:
        threading.Event().wait()
    except KeyboardInterrupt:
        bridge.stop()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
