"""Model generation tests: YANG emission, UI schema, identifier rules."""

from __future__ import annotations

import json
import re
from dataclasses import replace
from pathlib import Path

import pytest

from myno.model import VOCAB, extract_description
from myno.rdf import parse_turtle
from myno.yanggen import (
    DuplicateUuid,
    EmptyAfterSanitize,
    IdentifierCollision,
    generate_ui_schema,
    generate_yang,
    sanitize_identifier,
    ui_schema_json,
)

from yang_checker import check_yang

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"
GOLDEN = Path(__file__).resolve().parent / "golden"


@pytest.fixture(scope="module")
def plant():
    doc = (FIXTURES / "plant-device.ttl").read_text()
    return extract_description(parse_turtle(doc), VOCAB)


def test_sanitize_passthrough():
    assert sanitize_identifier("moisture_1") == "moisture_1"


def test_sanitize_prefixes_leading_digit():
    out = sanitize_identifier("5v-pump")
    assert out == "_5v-pump"
    assert check_identifier(out)


def test_sanitize_drops_invalid_and_raises_when_empty():
    assert sanitize_identifier("pump power") == "pumppower"
    with pytest.raises(EmptyAfterSanitize):
        sanitize_identifier("äöü")
    with pytest.raises(EmptyAfterSanitize):
        sanitize_identifier("")


def test_sanitize_idempotent():
    for name in ["5v-pump", "a b c", "x.y-z_0", "_x"]:
        once = sanitize_identifier(name)
        assert sanitize_identifier(once) == once


def check_identifier(text: str) -> bool:
    return re.match(r"^[A-Za-z_][A-Za-z0-9_.-]*$", text) is not None


def test_empty_network_is_module_skeleton():
    text = generate_yang([])
    assert "container devices" in text
    assert "rpc " not in text
    assert text.count("leaf ") == 0
    check_yang(text)


def test_fixture_module_content(plant):
    text = generate_yang([plant])
    device_id = plant.uuid  # starts with a letter, survives sanitization
    assert f"container {device_id} {{" in text
    assert f"rpc {device_id}-pump_switch {{" in text
    assert "leaf moisture_1 {" in text
    assert 'units "percent";' in text
    assert "type boolean;" in text
    assert f"notification {device_id}-moisture_low_alert-event {{" in text
    check_yang(text)


def test_generation_is_pure(plant):
    assert generate_yang([plant]) == generate_yang([plant])


def _devices_block(text: str) -> str:
    """The container devices { ... } block, found by brace counting."""
    start = text.index("container devices {")
    depth = 0
    for i in range(start, len(text)):
        if text[i] == "{":
            depth += 1
        elif text[i] == "}":
            depth -= 1
            if depth == 0:
                return text[start : i + 1]
    raise AssertionError("unbalanced braces in module text")


def test_statement_counts_match_capabilities(plant):
    devices = [plant, _second_device(plant)]
    text = generate_yang(devices)
    rpcs = re.findall(r"^  rpc ", text, flags=re.M)
    leaves = re.findall(r"\bleaf ", _devices_block(text))
    expected_rpcs = sum(len(d.actuators) + len(d.configs) for d in devices)
    expected_leaves = sum(len(d.sensors) for d in devices)
    assert len(rpcs) == expected_rpcs
    assert len(leaves) == expected_leaves


def test_adding_a_device_preserves_existing_statements(plant):
    lines_before = set(generate_yang([plant]).splitlines())
    lines_after = set(generate_yang([plant, _second_device(plant)]).splitlines())
    assert lines_before <= lines_after


def _second_device(plant):
    uuid = "b7c8d9e0-1234-4f00-9abc-222222222222"
    swap = lambda text: text.replace(plant.uuid, uuid)
    return replace(
        plant,
        uuid=uuid,
        name="Plant Monitor B",
        sensors=tuple(replace(s, topic=swap(s.topic)) for s in plant.sensors),
        actuators=tuple(replace(a, mqtt_topic=swap(a.mqtt_topic)) for a in plant.actuators),
        configs=tuple(
            replace(c, mqtt_topic=swap(c.mqtt_topic), event_topic=swap(c.event_topic))
            for c in plant.configs
        ),
    )


def test_duplicate_uuid_rejected(plant):
    with pytest.raises(DuplicateUuid):
        generate_yang([plant, plant])


def test_identifier_collision_rejected(plant):
    clashing = replace(
        plant,
        uuid="b7c8d9e0-1234-4f00-9abc-333333333333",
        sensors=(
            replace(plant.sensors[0], name="humidity_1!"),
            replace(plant.sensors[1], name="humidity_1"),
        ),
        configs=(),
        automations=(),
    )
    with pytest.raises(IdentifierCollision):
        generate_yang([clashing])


def test_golden_file_regression(plant):
    # reviewed once against the RFC 7950 statement grammar, then frozen
    text = generate_yang([plant])
    golden_path = GOLDEN / "myno.yang"
    assert text == golden_path.read_text()


def test_ui_schema_counts(plant):
    schema = generate_ui_schema([plant])
    assert len(schema["devices"]) == 1
    device = schema["devices"][0]
    assert len(device["sensors"]) == 6
    assert len(device["actions"]) == 3
    assert len(device["configs"]) == 2
    assert len(device["events"]) == 2


def test_ui_schema_empty():
    assert generate_ui_schema([]) == {"devices": []}
    assert ui_schema_json(generate_ui_schema([])) == '{"devices":[]}'


def test_ui_schema_canonical_json(plant):
    text = ui_schema_json(generate_ui_schema([plant]))
    parsed = json.loads(text)
    assert text == json.dumps(parsed, sort_keys=True, separators=(",", ":"))


def test_ui_schema_scopes_shared_sensor_names_by_uuid(plant):
    second = _second_device(plant)
    schema = generate_ui_schema([plant, second])
    names = [(d["uuid"], s["name"]) for d in schema["devices"] for s in d["sensors"]]
    assert len(names) == 12
    assert len(set(names)) == 12  # same sensor names, distinct per-device entries
    rpc_names = [a["rpc_name"] for d in schema["devices"] for a in d["actions"]]
    assert len(set(rpc_names)) == 6


def test_ui_schema_agrees_with_yang(plant):
    devices = [plant, _second_device(plant)]
    text = generate_yang(devices)
    schema = generate_ui_schema(devices)
    yang_rpcs = set(re.findall(r"^  rpc ([A-Za-z0-9_.-]+) \{", text, flags=re.M))
    schema_rpcs = {
        entry["rpc_name"]
        for device in schema["devices"]
        for entry in device["actions"] + device["configs"]
    }
    assert yang_rpcs == schema_rpcs
    yang_leaves = set(re.findall(r"\bleaf ([A-Za-z0-9_.-]+) \{", _devices_block(text)))
    schema_sensors = {s["name"] for d in schema["devices"] for s in d["sensors"]}
    assert yang_leaves == schema_sensors
    yang_notifications = set(re.findall(r"^  notification ([A-Za-z0-9_.-]+) \{", text, flags=re.M))
    schema_events = {e["name"] for d in schema["devices"] for e in d["events"]}
    assert yang_notifications == schema_events
