"""Bridge core: bootstrapping, live state, and southbound RPC dispatch.

Description lifecycle messages (``yang/config/#``) are processed strictly
serially by one worker so registration timing is reproducible and arrival
order is respected; sensor/state/event traffic is ingested concurrently on
the MQTT reader thread. The YANG model, UI schema, and rpc dispatch table
are regenerated together and swapped atomically whenever the set of active
devices or their descriptions change.
"""

from __future__ import annotations

import json
import logging
import queue
import secrets
import statistics
import threading
import time
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation

from myno.model import (
    VOCAB,
    DeviceDescription,
    ExtractionError,
    Vocabulary,
    extract_description,
    validate,
)
from myno.model.description import ConfigFunction, ControlFunction
from myno.mqtt.client import Message, MqttClient
from myno.rdf import parse_turtle
from myno.rdf.turtle import SyntaxError_
from myno.yanggen import generate_ui_schema, generate_yang, ui_schema_json

log = logging.getLogger("myno.bridge")

TOPIC_CONFIG_PREFIX = "yang/config"
TOPIC_CREATE = "yang/config/create"
TOPIC_CHECK = "yang/config/check"


class UnknownRpc(Exception):
    pass


class ArgTypeError(Exception):
    pass


@dataclass
class RegistryEntry:
    description: DeviceDescription
    raw_text: str
    state: str  # created | active | deleted
    registered_at: float
    processing_ms: float


@dataclass(frozen=True)
class Reading:
    value: Decimal
    received_at: float


@dataclass(frozen=True)
class RpcResponse:
    correlation_id: str
    status: str  # ok | error
    detail: object = None


@dataclass
class BridgeConfig:
    mqtt_host: str = "127.0.0.1"
    mqtt_port: int = 1883
    netconf_port: int | None = None  # None disables the listener
    http_port: int | None = None
    rpc_timeout: float = 10.0
    static_dir: str | None = None
    client_id: str = "myno-bridge"
    vocab: Vocabulary = field(default_factory=lambda: VOCAB)


@dataclass
class Metrics:
    creates_processed: int = 0
    creates_ignored: int = 0  # identical re-create, no regeneration
    updates_processed: int = 0
    deletes_processed: int = 0
    checks_processed: int = 0
    description_errors: int = 0
    regenerations: int = 0
    sensor_messages: int = 0
    sensor_parse_errors: int = 0
    events_received: int = 0
    rpcs_dispatched: int = 0
    rpc_timeouts: int = 0
    processing_ms: list[float] = field(default_factory=list)

    def as_dict(self) -> dict:
        samples = self.processing_ms
        processing = {
            "count": len(samples),
            "avg_ms": round(statistics.fmean(samples), 3) if samples else None,
            "max_ms": round(max(samples), 3) if samples else None,
            "min_ms": round(min(samples), 3) if samples else None,
            "median_ms": round(statistics.median(samples), 3) if samples else None,
            "samples_ms": [round(s, 3) for s in samples],
        }
        return {
            "creates_processed": self.creates_processed,
            "creates_ignored": self.creates_ignored,
            "updates_processed": self.updates_processed,
            "deletes_processed": self.deletes_processed,
            "checks_processed": self.checks_processed,
            "description_errors": self.description_errors,
            "regenerations": self.regenerations,
            "sensor_messages": self.sensor_messages,
            "sensor_parse_errors": self.sensor_parse_errors,
            "events_received": self.events_received,
            "rpcs_dispatched": self.rpcs_dispatched,
            "rpc_timeouts": self.rpc_timeouts,
            "description_processing": processing,
        }


class _EventHub:
    """Fan-out of northbound live events (server-sent events feed)."""

    def __init__(self):
        self._lock = threading.Lock()
        self._subscribers: list[queue.SimpleQueue] = []
        self._next_id = 1

    def subscribe(self) -> "queue.SimpleQueue":
        q: "queue.SimpleQueue" = queue.SimpleQueue()
        with self._lock:
            self._subscribers.append(q)
        return q

    def unsubscribe(self, q: "queue.SimpleQueue") -> None:
        with self._lock:
            if q in self._subscribers:
                self._subscribers.remove(q)

    def publish(self, kind: str, data: dict) -> None:
        with self._lock:
            event_id = self._next_id
            self._next_id += 1
            subscribers = list(self._subscribers)
        event = {"id": event_id, "event": kind, "data": data}
        for q in subscribers:
            q.put(event)


class Bridge:
    """The NETCONF-MQTT bridge. ``start()`` connects and begins serving."""

    def __init__(self, config: BridgeConfig | None = None):
        self.config = config or BridgeConfig()
        self.vocab = self.config.vocab
        self._client: MqttClient | None = None
        self._registry: dict[str, RegistryEntry] = {}
        self._registry_lock = threading.Lock()
        self._model_text: str = generate_yang([])
        self._ui_schema: dict = generate_ui_schema([])
        self._rpc_table: dict[str, tuple[str, str, object]] = {}
        self._cache_lock = threading.Lock()
        self._sensor_cache: dict[tuple[str, str], Reading] = {}
        self._actuator_state: dict[tuple[str, str], str] = {}
        self._bootstrap_queue: "queue.Queue[Message | None]" = queue.Queue()
        self._reply_lock = threading.Lock()
        self._reply_waiters: dict[str, "queue.Queue[bytes]"] = {}
        self.metrics = Metrics()
        self.events = _EventHub()
        self._stopping = threading.Event()
        self._threads: list[threading.Thread] = []
        self._netconf_server = None
        self._http_server = None

    # -- lifecycle ---------------------------------------------------------

    def start(self) -> "Bridge":
        self._client = MqttClient(
            self.config.mqtt_host,
            self.config.mqtt_port,
            client_id=self.config.client_id,
            on_message=self._on_message,
        ).connect()
        for topic_filter in ("yang/config/#", "sensor/#", "state/#", "event/#"):
            self._client.subscribe(topic_filter, qos=1 if topic_filter.startswith("yang") else 0)
        worker = threading.Thread(target=self._bootstrap_worker, name="bridge-bootstrap", daemon=True)
        worker.start()
        self._threads.append(worker)
        if self.config.netconf_port is not None:
            from myno.bridge.netconf import NetconfServer

            self._netconf_server = NetconfServer(self, port=self.config.netconf_port).start()
        if self.config.http_port is not None:
            from myno.bridge.httpapi import HttpApiServer

            self._http_server = HttpApiServer(
                self, port=self.config.http_port, static_dir=self.config.static_dir
            ).start()
        log.info("bridge connected to %s:%d", self.config.mqtt_host, self.config.mqtt_port)
        return self

    def stop(self) -> None:
        self._stopping.set()
        self._bootstrap_queue.put(None)
        if self._netconf_server is not None:
            self._netconf_server.stop()
        if self._http_server is not None:
            self._http_server.stop()
        if self._client is not None:
            self._client.close()
        for thread in self._threads:
            thread.join(timeout=2)

    @property
    def netconf_port(self) -> int | None:
        return self._netconf_server.port if self._netconf_server else None

    @property
    def http_port(self) -> int | None:
        return self._http_server.port if self._http_server else None

    # -- snapshots used by the northbound servers ---------------------------

    @property
    def model_text(self) -> str:
        with self._registry_lock:
            return self._model_text

    @property
    def ui_schema(self) -> dict:
        with self._registry_lock:
            return self._ui_schema

    def ui_schema_text(self) -> str:
        return ui_schema_json(self.ui_schema)

    def registry_snapshot(self) -> dict[str, RegistryEntry]:
        with self._registry_lock:
            return dict(self._registry)

    def active_devices(self) -> list[RegistryEntry]:
        with self._registry_lock:
            entries = [e for e in self._registry.values() if e.state != "deleted"]
        return sorted(entries, key=lambda e: e.description.uuid)

    def state_snapshot(self) -> dict:
        """Device list plus cached readings/actuator states, JSON-ready."""
        devices = []
        with self._cache_lock:
            sensor_cache = dict(self._sensor_cache)
            actuator_state = dict(self._actuator_state)
        for entry in self.active_devices():
            description = entry.description
            sensors = {}
            for sensor in description.sensors:
                reading = sensor_cache.get((description.uuid, sensor.name))
                sensors[sensor.name] = {
                    "value": str(reading.value) if reading else None,
                    "unit": sensor.unit.label,
                    "received_at": reading.received_at if reading else None,
                }
            actuators = {
                actuator.name: actuator_state.get((description.uuid, actuator.name))
                for actuator in description.actuators
            }
            devices.append(
                {
                    "uuid": description.uuid,
                    "name": description.name,
                    "state": entry.state,
                    "sensors": sensors,
                    "actuators": actuators,
                }
            )
        return {"devices": devices}

    # -- MQTT ingestion ------------------------------------------------------

    def _on_message(self, message: Message) -> None:
        with self._reply_lock:
            waiter = self._reply_waiters.get(message.topic)
        if waiter is not None:
            waiter.put(message.payload)
            return
        segments = message.topic.split("/")
        if message.topic.startswith(TOPIC_CONFIG_PREFIX + "/"):
            if len(segments) >= 3 and segments[2] in ("create", "check", "read", "update", "delete"):
                self._bootstrap_queue.put(message)
            return  # replies the bridge itself published
        if segments[0] == "sensor":
            self._ingest_sensor(segments, message.payload)
        elif segments[0] == "state" and len(segments) == 3:
            self._ingest_actuator_state(segments, message.payload)
        elif segments[0] == "event":
            self._ingest_event(segments, message.payload)

    def _ingest_sensor(self, segments: list[str], payload: bytes) -> None:
        if len(segments) != 4 or not all(segments):
            self.metrics.sensor_parse_errors += 1
            return
        _, _sensor_type, sensor_name, uuid = segments
        try:
            value = Decimal(payload.decode("utf-8").strip())
        except (InvalidOperation, UnicodeDecodeError, ValueError):
            self.metrics.sensor_parse_errors += 1
            return
        now = time.time()
        key = (uuid, sensor_name)
        with self._cache_lock:
            previous = self._sensor_cache.get(key)
            # received_at stays monotone per key even if the wall clock jumps
            received_at = max(now, previous.received_at if previous else now)
            self._sensor_cache[key] = Reading(value=value, received_at=received_at)
        self.metrics.sensor_messages += 1
        with self._registry_lock:
            entry = self._registry.get(uuid)
            if entry is not None and entry.state == "created":
                entry.state = "active"
        self.events.publish(
            "sensor",
            {"uuid": uuid, "sensor": sensor_name, "value": str(value), "received_at": received_at},
        )

    def _ingest_actuator_state(self, segments: list[str], payload: bytes) -> None:
        _, actuator_name, uuid = segments
        text = payload.decode("utf-8", errors="replace")
        with self._cache_lock:
            self._actuator_state[(uuid, actuator_name)] = text
        self.events.publish("actuator", {"uuid": uuid, "actuator": actuator_name, "state": text})

    def _ingest_event(self, segments: list[str], payload: bytes) -> None:
        self.metrics.events_received += 1
        try:
            body = json.loads(payload.decode("utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError):
            body = {"raw": payload.decode("utf-8", errors="replace")}
        config_name = segments[1] if len(segments) > 1 else ""
        uuid = segments[2] if len(segments) > 2 else ""
        self.events.publish("config-event", {"uuid": uuid, "config": config_name, "payload": body})

    # -- bootstrapping -------------------------------------------------------

    def _bootstrap_worker(self) -> None:
        while True:
            message = self._bootstrap_queue.get()
            if message is None or self._stopping.is_set():
                return
            segments = message.topic.split("/")
            phase = segments[2]
            try:
                if phase == "create":
                    self._process_create(message.payload)
                elif phase == "check":
                    self._process_check(message.payload)
                elif phase == "read" and len(segments) == 4:
                    self._process_read(segments[3])
                elif phase == "update" and len(segments) == 4:
                    self._process_update(segments[3], message.payload)
                elif phase == "delete" and len(segments) == 4:
                    self._process_delete(segments[3])
            except Exception:
                log.exception("bootstrap message on %s failed", message.topic)

    def _publish(self, topic: str, payload: bytes | str, qos: int = 1) -> None:
        assert self._client is not None
        try:
            self._client.publish(topic, payload, qos=qos)
        except Exception:
            if not self._stopping.is_set():
                log.exception("publish to %s failed", topic)

    def _report_error(self, uuid: str | None, code: str, detail: str) -> None:
        self.metrics.description_errors += 1
        target = uuid or "unknown"
        body = json.dumps({"error": code, "detail": detail})
        log.warning("description error (%s): %s", code, detail)
        self._publish(f"yang/config/error/{target}", body)

    def _process_create(self, payload: bytes) -> None:
        started = time.perf_counter()
        try:
            text = payload.decode("utf-8")
        except UnicodeDecodeError as exc:
            self._report_error(None, "encoding", str(exc))
            return
        try:
            store = parse_turtle(text)
            description = extract_description(store, self.vocab)
        except SyntaxError_ as exc:
            self._report_error(None, "syntax", str(exc))
            return
        except ExtractionError as exc:
            self._report_error(None, "extraction", str(exc))
            return
        violations = validate(description)
        if violations:
            detail = "; ".join(f"{v.code}({v.element})" for v in violations)
            self._report_error(description.uuid, "validation", detail)
            return

        uuid = description.uuid
        with self._registry_lock:
            existing = self._registry.get(uuid)
            if existing is not None and existing.state != "deleted" and existing.raw_text == text:
                self.metrics.creates_ignored += 1
                status = "unchanged"
            else:
                elapsed_ms = (time.perf_counter() - started) * 1000
                self._registry[uuid] = RegistryEntry(
                    description=description,
                    raw_text=text,
                    state="created",
                    registered_at=time.time(),
                    processing_ms=elapsed_ms,
                )
                self._regenerate_locked()
                elapsed_ms = (time.perf_counter() - started) * 1000
                self._registry[uuid].processing_ms = elapsed_ms
                self.metrics.creates_processed += 1
                self.metrics.processing_ms.append(elapsed_ms)
                status = "updated" if existing is not None and existing.state != "deleted" else "created"
        if status != "unchanged":
            self.events.publish("device", {"uuid": uuid, "change": status})
        self._publish(f"yang/config/response/{uuid}", json.dumps({"status": status, "uuid": uuid}))

    def _process_check(self, payload: bytes) -> None:
        uuid = payload.decode("utf-8", errors="replace").strip()
        self.metrics.checks_processed += 1
        with self._registry_lock:
            entry = self._registry.get(uuid)
            registered = entry is not None and entry.state in ("created", "active")
        self._publish(f"yang/config/registered/{uuid}", b"true" if registered else b"false")

    def _process_read(self, uuid: str) -> None:
        with self._registry_lock:
            entry = self._registry.get(uuid)
            text = entry.raw_text if entry is not None and entry.state != "deleted" else None
        if text is None:
            self._report_error(uuid, "unknown-device", f"read of unregistered uuid {uuid}")
            return
        self._publish(f"yang/config/response/{uuid}", text)

    def _process_update(self, uuid: str, payload: bytes) -> None:
        try:
            text = payload.decode("utf-8")
            store = parse_turtle(text)
            description = extract_description(store, self.vocab)
        except (UnicodeDecodeError, SyntaxError_, ExtractionError) as exc:
            self._report_error(uuid, "update", str(exc))
            return
        if description.uuid != uuid:
            self._report_error(
                uuid, "uuid-mismatch", f"payload describes {description.uuid!r}, topic says {uuid!r}"
            )
            return
        violations = validate(description)
        if violations:
            detail = "; ".join(f"{v.code}({v.element})" for v in violations)
            self._report_error(uuid, "validation", detail)
            return
        with self._registry_lock:
            entry = self._registry.get(uuid)
            if entry is None or entry.state == "deleted":
                self._report_error(uuid, "unknown-device", f"update of unregistered uuid {uuid}")
                return
            if entry.raw_text == text:
                status = "unchanged"
            else:
                entry.description = description
                entry.raw_text = text
                self._regenerate_locked()
                self.metrics.updates_processed += 1
                status = "updated"
        if status == "updated":
            self.events.publish("device", {"uuid": uuid, "change": "updated"})
        self._publish(f"yang/config/response/{uuid}", json.dumps({"status": status, "uuid": uuid}))

    def _process_delete(self, uuid: str) -> None:
        with self._registry_lock:
            entry = self._registry.get(uuid)
            if entry is None or entry.state == "deleted":
                self._report_error(uuid, "unknown-device", f"delete of unregistered uuid {uuid}")
                return
            entry.state = "deleted"
            self._regenerate_locked()
            self.metrics.deletes_processed += 1
        self.events.publish("device", {"uuid": uuid, "change": "deleted"})
        self._publish(f"yang/config/response/{uuid}", json.dumps({"status": "deleted", "uuid": uuid}))

    def _regenerate_locked(self) -> None:
        """Rebuild model, schema, and rpc table. Caller holds _registry_lock."""
        active = [e.description for e in self._registry.values() if e.state != "deleted"]
        active.sort(key=lambda d: d.uuid)
        self._model_text = generate_yang(active)
        self._ui_schema = generate_ui_schema(active)
        table: dict[str, tuple[str, str, object]] = {}
        for device in self._ui_schema["devices"]:
            description = next(d for d in active if d.uuid == device["uuid"])
            for action in device["actions"]:
                fn = next(a for a in description.actuators if a.name == action["name"])
                table[action["rpc_name"]] = (description.uuid, "control", fn)
            for config in device["configs"]:
                fn = next(c for c in description.configs if c.name == config["name"])
                table[config["rpc_name"]] = (description.uuid, "config", fn)
        self._rpc_table = table
        self.metrics.regenerations += 1

    # -- southbound RPC dispatch ----------------------------------------------

    def rpc_names(self) -> list[str]:
        with self._registry_lock:
            return sorted(self._rpc_table)

    def dispatch_rpc(
        self, rpc_name: str, args: dict, timeout: float | None = None
    ) -> RpcResponse:
        """Type-check args, publish the command envelope, await the reply."""
        with self._registry_lock:
            entry = self._rpc_table.get(rpc_name)
        if entry is None:
            raise UnknownRpc(rpc_name)
        _uuid, kind, fn = entry
        if kind == "control":
            assert isinstance(fn, ControlFunction)
            params = _check_control_args(fn, args)
            method = fn.mqtt_method
            topic = fn.mqtt_topic
        else:
            assert isinstance(fn, ConfigFunction)
            params = _check_config_args(fn, args)
            method = fn.mqtt_method
            topic = fn.mqtt_topic

        correlation = secrets.token_hex(8)
        reply_topic = f"{topic}/response/{correlation}"
        waiter: "queue.Queue[bytes]" = queue.Queue()
        with self._reply_lock:
            self._reply_waiters[reply_topic] = waiter
        assert self._client is not None
        try:
            self._client.subscribe(reply_topic, qos=0)
            envelope = json.dumps({"method": method, "params": params, "correlation": correlation})
            self._client.publish(topic, envelope, qos=1)
            self.metrics.rpcs_dispatched += 1
            try:
                payload = waiter.get(timeout=timeout if timeout is not None else self.config.rpc_timeout)
            except queue.Empty:
                self.metrics.rpc_timeouts += 1
                return RpcResponse(correlation_id=correlation, status="error", detail="timeout")
            try:
                body = json.loads(payload.decode("utf-8"))
            except (json.JSONDecodeError, UnicodeDecodeError):
                body = {"raw": payload.decode("utf-8", errors="replace")}
            status = body.get("status", "ok") if isinstance(body, dict) else "ok"
            return RpcResponse(correlation_id=correlation, status=status, detail=body)
        finally:
            with self._reply_lock:
                self._reply_waiters.pop(reply_topic, None)
            try:
                self._client.unsubscribe(reply_topic)
            except Exception:
                pass

    def in_flight_rpcs(self) -> int:
        with self._reply_lock:
            return len(self._reply_waiters)


def _check_control_args(fn: ControlFunction, args: dict) -> dict:
    declared = {p.name: p for p in fn.params}
    unknown = set(args) - set(declared)
    if unknown:
        raise ArgTypeError(f"unknown argument(s) {sorted(unknown)} for {fn.name}")
    out: dict[str, object] = {}
    for param in fn.params:
        if param.name not in args:
            raise ArgTypeError(f"missing argument {param.name!r} for {fn.name}")
        out[param.name] = _coerce(param.name, args[param.name], param.type)
    return out


def _check_config_args(fn: ConfigFunction, args: dict) -> dict:
    expected = {"threshold": "decimal", "interval": "int", "duration": "int"}
    unknown = set(args) - set(expected)
    if unknown:
        raise ArgTypeError(f"unknown argument(s) {sorted(unknown)} for {fn.name}")
    out: dict[str, object] = {}
    for name, type_name in expected.items():
        if name not in args:
            raise ArgTypeError(f"missing argument {name!r} for {fn.name}")
        out[name] = _coerce(name, args[name], type_name)
    return out


def _coerce(name: str, value: object, type_name: str) -> object:
    if type_name == "string":
        if not isinstance(value, str):
            raise ArgTypeError(f"argument {name!r} must be a string")
        return value
    if type_name == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, str):
                try:
                    return int(value)
                except ValueError:
                    raise ArgTypeError(f"argument {name!r} must be an int") from None
            raise ArgTypeError(f"argument {name!r} must be an int")
        return value
    if type_name == "decimal":
        if isinstance(value, bool):
            raise ArgTypeError(f"argument {name!r} must be a decimal")
        if isinstance(value, (int, float)):
            return value
        if isinstance(value, str):
            try:
                Decimal(value)
                return value
            except InvalidOperation:
                raise ArgTypeError(f"argument {name!r} must be a decimal") from None
        raise ArgTypeError(f"argument {name!r} must be a decimal")
    if type_name == "boolean":
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false"):
            return value.lower() == "true"
        raise ArgTypeError(f"argument {name!r} must be a boolean")
    raise ArgTypeError(f"argument {name!r} has unsupported type {type_name!r}")
