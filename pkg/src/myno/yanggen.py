"""Compile device descriptions into one management model.

One YANG module (RFC 7950 text) covers the whole device network: a state
container per device holding a decimal64 leaf per sensor, an rpc per
actuator and per configuration function, and a notification per declared
event. ``generate_ui_schema`` projects the same information (plus the MQTT
topics) into JSON for the model-driven web client. Both functions are pure:
identical inputs give byte-identical output.
"""

from __future__ import annotations

import json
import re

from myno.model.description import ConfigFunction, ControlFunction, DeviceDescription

MODULE_NAME = "myno"
MODULE_NAMESPACE = "urn:myno:management"
# fixed so regeneration stays byte-stable; bump when the emitted grammar changes
MODULE_REVISION = "2025-05-20"
SENSOR_FRACTION_DIGITS = 2

_IDENTIFIER_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_.-]*$")
_VALID_CHARS_RE = re.compile(r"[A-Za-z0-9_.-]")


class YangGenError(Exception):
    pass


class DuplicateUuid(YangGenError):
    pass


class IdentifierCollision(YangGenError):
    pass


class EmptyAfterSanitize(YangGenError):
    pass


def sanitize_identifier(name: str) -> str:
    """Drop characters YANG identifiers cannot carry; prefix ``_`` if needed.

    Raises EmptyAfterSanitize when nothing survives. Idempotent.
    """
    if not name:
        raise EmptyAfterSanitize("empty identifier")
    kept = "".join(ch for ch in name if _VALID_CHARS_RE.match(ch))
    if not kept:
        raise EmptyAfterSanitize(f"nothing left of {name!r} after sanitization")
    if not re.match(r"[A-Za-z_]", kept[0]):
        kept = "_" + kept
    assert _IDENTIFIER_RE.match(kept)
    return kept


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


_PARAM_LEAF_TYPES = {
    "string": "string",
    "int": "int64",
    "boolean": "boolean",
}


class _Writer:
    def __init__(self):
        self.lines: list[str] = []
        self.depth = 0

    def line(self, text: str = "") -> None:
        self.lines.append(("  " * self.depth + text) if text else "")

    def block(self, header: str):
        return _Block(self, header)

    def text(self) -> str:
        return "\n".join(self.lines) + "\n"


class _Block:
    def __init__(self, writer: _Writer, header: str):
        self.writer = writer
        self.header = header

    def __enter__(self):
        self.writer.line(self.header + " {")
        self.writer.depth += 1
        return self.writer

    def __exit__(self, *exc):
        self.writer.depth -= 1
        self.writer.line("}")
        return False


def _device_identifier(description: DeviceDescription) -> str:
    return sanitize_identifier(description.uuid)


def _rpc_name(device_id: str, function_name: str) -> str:
    return f"{device_id}-{sanitize_identifier(function_name)}"


def _check_unique(kind: str, names: list[str]) -> None:
    seen: set[str] = set()
    for name in names:
        if name in seen:
            raise IdentifierCollision(f"duplicate {kind} identifier {name!r} after sanitization")
        seen.add(name)


def generate_yang(descriptions: list[DeviceDescription]) -> str:
    """Emit the network's YANG module text (deterministic ordering)."""
    by_uuid: dict[str, DeviceDescription] = {}
    for description in descriptions:
        if description.uuid in by_uuid:
            raise DuplicateUuid(f"uuid {description.uuid!r} appears twice")
        by_uuid[description.uuid] = description
    ordered = [by_uuid[u] for u in sorted(by_uuid)]

    _check_unique("device", [_device_identifier(d) for d in ordered])
    rpc_names: list[str] = []
    notification_names: list[str] = []
    for description in ordered:
        device_id = _device_identifier(description)
        _check_unique(
            f"leaf in device {device_id}",
            [sanitize_identifier(s.name) for s in description.sensors],
        )
        for fn in list(description.actuators) + list(description.configs):
            rpc_names.append(_rpc_name(device_id, fn.name))
        for config in description.configs:
            notification_names.append(f"{_rpc_name(device_id, config.name)}-event")
    _check_unique("rpc", rpc_names)
    _check_unique("notification", notification_names)

    w = _Writer()
    with w.block(f"module {MODULE_NAME}"):
        w.line("yang-version 1.1;")
        w.line(f"namespace {_quote(MODULE_NAMESPACE)};")
        w.line(f"prefix {MODULE_NAME};")
        w.line()
        with w.block(f"revision {MODULE_REVISION}"):
            w.line("description")
            w.line(f"  {_quote('Generated management model for the device network.')};")
        w.line()
        with w.block("container devices"):
            w.line("config false;")
            w.line("description")
            w.line(f"  {_quote('Live state of every managed device.')};")
            for description in ordered:
                w.line()
                _emit_device_container(w, description)
        for description in ordered:
            device_id = _device_identifier(description)
            for actuator in description.actuators:
                w.line()
                _emit_control_rpc(w, device_id, actuator)
            for config in description.configs:
                w.line()
                _emit_config_rpc(w, device_id, config)
        for description in ordered:
            device_id = _device_identifier(description)
            for config in description.configs:
                w.line()
                _emit_notification(w, device_id, config)
    return w.text()


def _emit_device_container(w: _Writer, description: DeviceDescription) -> None:
    device_id = _device_identifier(description)
    label = f"{description.name} (uuid {description.uuid}, category {description.category})"
    with w.block(f"container {device_id}"):
        w.line("description")
        w.line(f"  {_quote(label)};")
        for sensor in description.sensors:
            leaf = sanitize_identifier(sensor.name)
            with w.block(f"leaf {leaf}"):
                with w.block("type decimal64"):
                    w.line(f"fraction-digits {SENSOR_FRACTION_DIGITS};")
                if sensor.unit.label:
                    w.line(f"units {_quote(sensor.unit.label)};")
                if sensor.description:
                    w.line("description")
                    w.line(f"  {_quote(sensor.description)};")


def _emit_control_rpc(w: _Writer, device_id: str, actuator: ControlFunction) -> None:
    with w.block(f"rpc {_rpc_name(device_id, actuator.name)}"):
        if actuator.description:
            w.line("description")
            w.line(f"  {_quote(actuator.description)};")
        if actuator.params:
            with w.block("input"):
                for param in actuator.params:
                    with w.block(f"leaf {sanitize_identifier(param.name)}"):
                        if param.type == "decimal":
                            with w.block("type decimal64"):
                                w.line(f"fraction-digits {SENSOR_FRACTION_DIGITS};")
                        else:
                            w.line(f"type {_PARAM_LEAF_TYPES.get(param.type, 'string')};")
                        w.line("mandatory true;")
                        if param.constraint:
                            w.line("description")
                            w.line(f"  {_quote('Constraint: ' + param.constraint)};")


def _emit_config_rpc(w: _Writer, device_id: str, config: ConfigFunction) -> None:
    with w.block(f"rpc {_rpc_name(device_id, config.name)}"):
        if config.description:
            w.line("description")
            w.line(f"  {_quote(config.description)};")
        with w.block("input"):
            with w.block("leaf threshold"):
                with w.block("type decimal64"):
                    w.line(f"fraction-digits {SENSOR_FRACTION_DIGITS};")
                w.line("mandatory true;")
            with w.block("leaf interval"):
                w.line("type uint32;")
                w.line('units "seconds";')
                w.line("mandatory true;")
            with w.block("leaf duration"):
                w.line("type uint32;")
                w.line('units "seconds";')
                w.line("mandatory true;")


def _emit_notification(w: _Writer, device_id: str, config: ConfigFunction) -> None:
    with w.block(f"notification {_rpc_name(device_id, config.name)}-event"):
        w.line("description")
        w.line(f"  {_quote('Threshold event from configuration ' + config.name + '.')};")
        with w.block("leaf sensor"):
            w.line("type string;")
        with w.block("leaf value"):
            with w.block("type decimal64"):
                w.line(f"fraction-digits {SENSOR_FRACTION_DIGITS};")


def generate_ui_schema(descriptions: list[DeviceDescription]) -> dict:
    """JSON-ready projection of the model for the web client."""
    by_uuid: dict[str, DeviceDescription] = {}
    for description in descriptions:
        if description.uuid in by_uuid:
            raise DuplicateUuid(f"uuid {description.uuid!r} appears twice")
        by_uuid[description.uuid] = description

    devices = []
    for uuid in sorted(by_uuid):
        description = by_uuid[uuid]
        device_id = _device_identifier(description)
        sensors = [
            {"name": s.name, "unit": s.unit.label, "topic": s.topic}
            for s in description.sensors
        ]
        actions = [
            {
                "rpc_name": _rpc_name(device_id, a.name),
                "name": a.name,
                "kind": "control",
                "description": a.description,
                "params": [
                    {"name": p.name, "type": p.type, "constraint": p.constraint}
                    for p in a.params
                ],
            }
            for a in description.actuators
        ]
        configs = [
            {
                "rpc_name": _rpc_name(device_id, c.name),
                "name": c.name,
                "kind": "config",
                "description": c.description,
                "sensor": c.sensor_ref,
                "comparator": c.comparator,
                "params": [
                    {"name": "threshold", "type": "decimal", "value": str(c.threshold)},
                    {"name": "interval", "type": "int", "value": str(int(c.interval))},
                    {"name": "duration", "type": "int", "value": str(int(c.duration))},
                ],
            }
            for c in description.configs
        ]
        events = [
            {"name": f"{_rpc_name(device_id, c.name)}-event", "topic": c.event_topic}
            for c in description.configs
            if c.event_topic
        ]
        devices.append(
            {
                "uuid": uuid,
                "name": description.name,
                "category": description.category,
                "device_id": device_id,
                "sensors": sensors,
                "actions": actions,
                "configs": configs,
                "events": events,
            }
        )
    return {"devices": devices}


def ui_schema_json(schema: dict) -> str:
    """Canonical JSON form: sorted keys, no insignificant whitespace."""
    return json.dumps(schema, sort_keys=True, separators=(",", ":"))
