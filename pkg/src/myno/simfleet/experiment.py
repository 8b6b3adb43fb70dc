"""Desk-scale scalability experiment.

Brings up a broker (embedded unless an external one is given), the bridge,
and N simulated devices started at staggered offsets, runs them for a
simulated duration compressed by ``time_scale``, and reports description
processing times, message counts per topic class, event counts, and RPC
round-trip latencies as CSV and JSON.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import re
import threading
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from myno.bridge.core import Bridge, BridgeConfig
from myno.mqtt.broker import MicroBroker
from myno.simfleet.clock import ScaledClock
from myno.simfleet.device import DEFAULT_INTERVALS, FALLBACK_INTERVAL
from myno.simfleet.fleet import Fleet

log = logging.getLogger("myno.experiment")

TEMPLATE_UUID = "a3e1f2c4-5b6d-4e7f-8a9b-0c1d2e3f4a5b"


def default_template() -> str:
    return (resources.files("myno.simfleet") / "data" / "plant-device.ttl").read_text()


@dataclass
class ExperimentSpec:
    n_devices: int = 1
    duration: float = 3600.0  # simulated seconds per device
    time_scale: float = 60.0
    seed: int = 7
    stagger: float = 60.0  # simulated seconds between device starts
    mqtt_host: str | None = None  # None -> embedded broker
    mqtt_port: int | None = None
    rpc_probe: bool = True
    rpc_timeout: float = 5.0
    template_text: str | None = None
    template_uuid: str = TEMPLATE_UUID
    intervals: dict[str, float] | None = None
    settle_real: float = 1.0  # quiescence window after the fleet finishes


@dataclass
class ExperimentReport:
    spec_n_devices: int
    duration: float
    time_scale: float
    seed: int
    wall_seconds: float
    registry_size: int
    expected_sensor_messages: int
    sensor_messages_sent: int
    sensor_messages_received: int
    descriptions_sent: int
    checks_sent: int
    creates_processed: int
    creates_ignored: int
    events_sent: int
    events_received: int
    processing_ms: dict
    rpc_latencies_ms: list[float]
    per_device: list[dict]
    runner_errors: list[str]
    broker_published: int | None
    broker_delivered: int | None

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    def csv_row(self) -> dict:
        latencies = self.rpc_latencies_ms
        return {
            "n_devices": self.spec_n_devices,
            "duration_s": self.duration,
            "time_scale": self.time_scale,
            "seed": self.seed,
            "wall_s": round(self.wall_seconds, 2),
            "processing_avg_ms": self.processing_ms.get("avg_ms"),
            "processing_max_ms": self.processing_ms.get("max_ms"),
            "processing_min_ms": self.processing_ms.get("min_ms"),
            "processing_median_ms": self.processing_ms.get("median_ms"),
            "sensor_messages_sent": self.sensor_messages_sent,
            "sensor_messages_received": self.sensor_messages_received,
            "expected_sensor_messages": self.expected_sensor_messages,
            "descriptions_sent": self.descriptions_sent,
            "checks_sent": self.checks_sent,
            "events_received": self.events_received,
            "rpc_avg_ms": round(sum(latencies) / len(latencies), 3) if latencies else None,
            "rpc_max_ms": round(max(latencies), 3) if latencies else None,
        }


def expected_sensor_count(template_sensors: list[str], duration: float, intervals: dict[str, float]) -> int:
    """Samples land at k*interval for k*interval < duration, first at zero."""
    total = 0
    for sensor_type in template_sensors:
        interval = intervals.get(sensor_type, FALLBACK_INTERVAL)
        total += math.ceil(duration / interval - 1e-9)
    return total


class _RpcProber(threading.Thread):
    """Fires one benign rpc at each device right after it registers."""

    def __init__(self, bridge: Bridge, timeout: float):
        super().__init__(name="rpc-prober", daemon=True)
        self.bridge = bridge
        self.timeout = timeout
        self.latencies_ms: list[float] = []
        self.failures: list[str] = []
        self._seen: set[str] = set()
        self._halt = threading.Event()

    def stop(self) -> None:
        self._halt.set()

    def run(self) -> None:
        while not self._halt.wait(0.05):
            schema = self.bridge.ui_schema
            for device in schema["devices"]:
                uuid = device["uuid"]
                if uuid in self._seen or not device["actions"]:
                    continue
                self._seen.add(uuid)
                action = _benign_action(device["actions"])
                args = _probe_args(action)
                started = time.perf_counter()
                try:
                    response = self.bridge.dispatch_rpc(action["rpc_name"], args, timeout=self.timeout)
                except Exception as exc:
                    self.failures.append(f"{action['rpc_name']}: {exc}")
                    continue
                elapsed_ms = (time.perf_counter() - started) * 1000
                if response.status == "ok":
                    self.latencies_ms.append(elapsed_ms)
                else:
                    self.failures.append(f"{action['rpc_name']}: {response.detail}")


def _benign_action(actions: list[dict]) -> dict:
    # prefer switching something off over switching something on
    for action in actions:
        if any(p["type"] == "boolean" for p in action["params"]):
            return action
    return actions[0]


def _probe_args(action: dict) -> dict:
    args: dict[str, object] = {}
    for param in action["params"]:
        if param["type"] == "boolean":
            args[param["name"]] = False
        elif param["type"] == "int":
            args[param["name"]] = 0
        elif param["type"] == "decimal":
            args[param["name"]] = "0"
        else:
            args[param["name"]] = "probe"
    return args


def run_experiment(spec: ExperimentSpec) -> ExperimentReport:
    started_wall = time.monotonic()
    template = spec.template_text if spec.template_text is not None else default_template()
    intervals = dict(DEFAULT_INTERVALS)
    intervals.update(spec.intervals or {})

    embedded: MicroBroker | None = None
    if spec.mqtt_host is None:
        embedded = MicroBroker(port=0).start()
        host, port = "127.0.0.1", embedded.port
    else:
        host, port = spec.mqtt_host, spec.mqtt_port or 1883

    bridge = Bridge(BridgeConfig(mqtt_host=host, mqtt_port=port, rpc_timeout=spec.rpc_timeout)).start()
    prober = _RpcProber(bridge, timeout=spec.rpc_timeout) if spec.rpc_probe else None
    if prober is not None:
        prober.start()

    clock = ScaledClock(spec.time_scale)
    fleet = Fleet(
        host,
        port,
        template_text=template,
        template_uuid=spec.template_uuid,
        count=spec.n_devices,
        seed=spec.seed,
        clock=clock,
        intervals=spec.intervals,
    ).start(stagger=spec.stagger, duration=spec.duration)

    sim_total = spec.stagger * max(spec.n_devices - 1, 0) + spec.duration
    budget_real = sim_total / spec.time_scale + 30.0 + spec.n_devices
    try:
        finished = fleet.wait_done(timeout_real=budget_real)
        if not finished:
            log.warning("fleet did not finish within %.1fs wall, stopping early", budget_real)
            fleet.stop()
        _wait_quiescent(bridge, settle_real=spec.settle_real)
        if prober is not None:
            prober.stop()
            prober.join(timeout=spec.rpc_timeout + 2)

        snapshot = bridge.metrics
        totals = fleet.totals()
        template_sensor_types = sorted(
            s.sensor_type for s in fleet.devices[0].description.sensors
        )
        expected = spec.n_devices * expected_sensor_count(
            template_sensor_types, spec.duration, intervals
        )
        report = ExperimentReport(
            spec_n_devices=spec.n_devices,
            duration=spec.duration,
            time_scale=spec.time_scale,
            seed=spec.seed,
            wall_seconds=time.monotonic() - started_wall,
            registry_size=len(bridge.active_devices()),
            expected_sensor_messages=expected,
            sensor_messages_sent=totals.get("sensor_sent", 0),
            sensor_messages_received=snapshot.sensor_messages,
            descriptions_sent=totals.get("descriptions_sent", 0),
            checks_sent=totals.get("checks_sent", 0),
            creates_processed=snapshot.creates_processed,
            creates_ignored=snapshot.creates_ignored,
            events_sent=totals.get("event_sent", 0),
            events_received=snapshot.events_received,
            processing_ms=snapshot.as_dict()["description_processing"],
            rpc_latencies_ms=[round(v, 3) for v in (prober.latencies_ms if prober else [])],
            per_device=[
                {
                    "uuid": entry.description.uuid,
                    "state": entry.state,
                    "processing_ms": round(entry.processing_ms, 3),
                }
                for entry in bridge.active_devices()
            ],
            runner_errors=[str(e) for e in fleet.errors()],
            broker_published=embedded.published_count if embedded else None,
            broker_delivered=embedded.delivered_count if embedded else None,
        )
        return report
    finally:
        fleet.stop()
        bridge.stop()
        if embedded is not None:
            embedded.stop()


def _wait_quiescent(bridge: Bridge, settle_real: float, timeout_real: float = 30.0) -> None:
    """Wait until the sensor counter stops moving for ``settle_real`` seconds."""
    deadline = time.monotonic() + timeout_real
    last = -1
    last_change = time.monotonic()
    while time.monotonic() < deadline:
        current = bridge.metrics.sensor_messages + bridge.metrics.creates_processed
        if current != last:
            last = current
            last_change = time.monotonic()
        elif time.monotonic() - last_change >= settle_real:
            return
        time.sleep(0.05)


def parse_duration(text: str) -> float:
    match = re.fullmatch(r"(\d+(?:\.\d+)?)\s*(h|m|s)?", text.strip())
    if match is None:
        raise argparse.ArgumentTypeError(f"cannot parse duration {text!r}")
    value = float(match.group(1))
    unit = match.group(2) or "s"
    return value * {"h": 3600.0, "m": 60.0, "s": 1.0}[unit]


def write_reports(report: ExperimentReport, out_dir: Path) -> tuple[Path, Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / "report.json"
    csv_path = out_dir / "report.csv"
    json_path.write_text(json.dumps(report.as_dict(), indent=2) + "\n")
    row = report.csv_row()
    with csv_path.open("w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=list(row))
        writer.writeheader()
        writer.writerow(row)
    return csv_path, json_path


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="myno-sim", description="Run the device-fleet scalability experiment"
    )
    parser.add_argument("--devices", type=int, default=1, help="fleet size (paper grid: 1,3,6,10)")
    parser.add_argument("--duration", type=parse_duration, default="1h", help="simulated time, e.g. 1h, 30m, 90s")
    parser.add_argument("--time-scale", type=float, default=60.0)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--stagger", type=parse_duration, default="60s")
    parser.add_argument("--mqtt-host", default=None, help="external broker host (default: embedded)")
    parser.add_argument("--mqtt-port", type=int, default=None)
    parser.add_argument("--template", type=Path, default=None, help="device description template")
    parser.add_argument("--no-rpc-probe", action="store_true")
    parser.add_argument("--out-dir", type=Path, default=Path("."))
    parser.add_argument("--verbose", "-v", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO)

    template_text = args.template.read_text() if args.template else None
    spec = ExperimentSpec(
        n_devices=args.devices,
        duration=args.duration,
        time_scale=args.time_scale,
        seed=args.seed,
        stagger=args.stagger,
        mqtt_host=args.mqtt_host,
        mqtt_port=args.mqtt_port,
        rpc_probe=not args.no_rpc_probe,
        template_text=template_text,
    )
    report = run_experiment(spec)
    csv_path, json_path = write_reports(report, args.out_dir)
    print(f"devices={report.spec_n_devices} registry={report.registry_size}")
    print(
        f"sensor messages: sent={report.sensor_messages_sent} "
        f"received={report.sensor_messages_received} expected={report.expected_sensor_messages}"
    )
    print(f"reports: {csv_path} {json_path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
