"""Typed extraction of device capabilities from an RDF description.

``extract_description`` walks the graph from the single ``Device`` subject
and classifies every functionality reachable through the service into the
four capability kinds. ``description_to_store`` is its inverse: it rebuilds
an equivalent graph from the typed value (used by the virtual device to
describe itself, and by the fixed-point tests). ``validate`` checks the
cross-references and topic-scheme invariants and returns machine-readable
violations instead of raising.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation

from myno.rdf import BlankNode, Iri, Literal, Term, Triple, TripleStore
from myno.model.vocab import Vocabulary, XSD_NS

log = logging.getLogger("myno.model")


class ExtractionError(Exception):
    """Description cannot be turned into a DeviceDescription."""


class MissingUuid(ExtractionError):
    pass


class MultipleDevices(ExtractionError):
    pass


class DanglingReference(ExtractionError):
    pass


class UnknownFunctionalityClass(ExtractionError):
    pass


@dataclass(frozen=True)
class Unit:
    iri: str
    label: str


@dataclass(frozen=True)
class Param:
    name: str
    type: str  # string | int | decimal | boolean
    constraint: str | None = None


@dataclass(frozen=True)
class SensorFunction:
    name: str
    description: str
    unit: Unit
    topic: str
    value_type: str = "decimal"

    @property
    def sensor_type(self) -> str:
        """Second topic segment, e.g. ``moisture`` in sensor/moisture/x/u."""
        parts = self.topic.split("/")
        return parts[1] if len(parts) > 1 else ""


@dataclass(frozen=True)
class ControlFunction:
    name: str
    description: str
    mqtt_method: str
    mqtt_topic: str
    params: tuple[Param, ...] = ()


@dataclass(frozen=True)
class ConfigFunction:
    name: str
    description: str
    sensor_ref: str
    threshold: Decimal
    comparator: str  # below | above
    interval: float  # seconds
    duration: float  # seconds
    crud_op: str
    event_name: str
    event_topic: str
    mqtt_method: str
    mqtt_topic: str


@dataclass(frozen=True)
class AutomationFunction:
    name: str
    description: str
    config_ref: str
    action_ref: str
    action_args: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class DeviceDescription:
    uuid: str
    name: str
    category: str
    yang_description: str
    sensors: tuple[SensorFunction, ...] = ()
    actuators: tuple[ControlFunction, ...] = ()
    configs: tuple[ConfigFunction, ...] = ()
    automations: tuple[AutomationFunction, ...] = ()
    # triples reachable from the device that extraction did not consume;
    # reported so nothing is dropped silently
    leftover: tuple[Triple, ...] = field(default=(), compare=False)

    def sensor(self, name: str) -> SensorFunction | None:
        return next((s for s in self.sensors if s.name == name), None)

    def actuator(self, name: str) -> ControlFunction | None:
        return next((a for a in self.actuators if a.name == name), None)

    def config(self, name: str) -> ConfigFunction | None:
        return next((c for c in self.configs if c.name == name), None)


@dataclass(frozen=True)
class Violation:
    code: str
    element: str
    message: str


class _Walk:
    """Store cursor that records which triples were consumed."""

    def __init__(self, store: TripleStore):
        self.store = store
        self.consumed: set[Triple] = set()

    def objects(self, subject: Term, predicate: Iri) -> list[Term]:
        triples = self.store.query(subject, predicate)
        self.consumed.update(triples)
        return [t.object for t in triples]

    def value(self, subject: Term, predicate: Iri) -> Term | None:
        found = self.objects(subject, predicate)
        return found[0] if found else None

    def text(self, subject: Term, predicate: Iri, default: str = "") -> str:
        term = self.value(subject, predicate)
        return term.lexical if isinstance(term, Literal) else default

    def types(self, subject: Term, vocab: Vocabulary) -> set[Iri]:
        triples = self.store.query(subject, vocab.rdf_type)
        self.consumed.update(triples)
        return {t.object for t in triples if isinstance(t.object, Iri)}


def _reachable(store: TripleStore, roots: list[Term]) -> set[Triple]:
    seen: set[Term] = set()
    frontier = list(roots)
    triples: set[Triple] = set()
    while frontier:
        node = frontier.pop()
        if node in seen or isinstance(node, Literal):
            continue
        seen.add(node)
        for t in store.query(subject=node):
            triples.add(t)
            frontier.append(t.object)
    return triples


def extract_description(store: TripleStore, vocab: Vocabulary) -> DeviceDescription:
    """Extract the single device's capabilities from ``store``."""
    walk = _Walk(store)
    devices = store.subjects_with(vocab.rdf_type, vocab.device)
    if not devices:
        raise ExtractionError("no subject typed Device in description")
    if len(devices) > 1:
        raise MultipleDevices(f"{len(devices)} Device subjects in one description")
    device = devices[0]
    walk.consumed.update(store.query(device, vocab.rdf_type))

    name = walk.text(device, vocab.rdfs_label)
    category = walk.text(device, vocab.device_category)

    uuid = ""
    yang_description = ""
    for prop in walk.objects(device, vocab.has_thing_property):
        prop_types = walk.types(prop, vocab)
        label = walk.text(prop, vocab.rdfs_label)
        value = walk.text(prop, vocab.has_value)
        if vocab.yang_description in prop_types:
            yang_description = value
        elif vocab.thing_property in prop_types and label.lower() == "uuid":
            uuid = value
    if not uuid:
        raise MissingUuid(f"device {device} carries no UUID thing property")

    sensors: list[SensorFunction] = []
    actuators: list[ControlFunction] = []
    configs: list[ConfigFunction] = []
    automations: list[AutomationFunction] = []
    function_nodes: dict[Term, str] = {}

    functionality: list[Term] = []
    for service in walk.objects(device, vocab.has_service):
        walk.types(service, vocab)
        walk.text(service, vocab.rdfs_label)
        functionality.extend(walk.objects(service, vocab.has_functionality))

    # first pass: names, so cross-references resolve regardless of order
    for node in functionality:
        function_nodes[node] = _node_label(store, node, vocab)

    for node in functionality:
        types = walk.types(node, vocab)
        label = walk.text(node, vocab.rdfs_label) or _fallback_name(node)
        description = walk.text(node, vocab.function_description)
        if vocab.measuring_functionality in types:
            sensors.append(_extract_sensor(walk, node, label, description, vocab))
        elif vocab.controlling_functionality in types:
            actuators.append(_extract_control(walk, node, label, description, vocab))
        elif vocab.configuration_functionality in types:
            configs.append(
                _extract_config(walk, node, label, description, vocab, function_nodes)
            )
        elif vocab.automation_functionality in types:
            automations.append(
                _extract_automation(walk, node, label, description, vocab, function_nodes)
            )
        else:
            shown = ", ".join(sorted(str(t) for t in types)) or "(untyped)"
            raise UnknownFunctionalityClass(
                f"functionality {label!r} has unrecognized class(es): {shown}"
            )

    reachable = _reachable(store, [device])
    leftover = tuple(sorted(reachable - walk.consumed, key=Triple.sort_key))
    if leftover:
        log.warning(
            "%d triple(s) reachable from %s were not consumed by extraction",
            len(leftover),
            device,
        )

    return DeviceDescription(
        uuid=uuid,
        name=name,
        category=category,
        yang_description=yang_description,
        sensors=tuple(sorted(sensors, key=lambda s: s.name)),
        actuators=tuple(sorted(actuators, key=lambda a: a.name)),
        configs=tuple(sorted(configs, key=lambda c: c.name)),
        automations=tuple(sorted(automations, key=lambda a: a.name)),
        leftover=leftover,
    )


def _fallback_name(node: Term) -> str:
    if isinstance(node, Iri):
        return node.value.rsplit("#", 1)[-1].rsplit("/", 1)[-1]
    return node.label if isinstance(node, BlankNode) else ""


def _node_label(store: TripleStore, node: Term, vocab: Vocabulary) -> str:
    value = store.value(node, vocab.rdfs_label)
    if isinstance(value, Literal):
        return value.lexical
    return _fallback_name(node)


def _extract_sensor(walk, node, label, description, vocab) -> SensorFunction:
    datapoint = walk.value(node, vocab.has_output_datapoint)
    if datapoint is None:
        raise ExtractionError(f"sensor {label!r} has no output datapoint")
    walk.types(datapoint, vocab)
    topic = walk.text(datapoint, vocab.mqtt_topic)
    unit_term = walk.value(datapoint, vocab.has_unit)
    if isinstance(unit_term, Iri):
        label_text = walk.text(unit_term, vocab.rdfs_label) or _fallback_name(unit_term)
        unit = Unit(iri=unit_term.value, label=label_text)
    else:
        unit = Unit(iri="", label="")
    return SensorFunction(name=label, description=description, unit=unit, topic=topic)


def _extract_control(walk, node, label, description, vocab) -> ControlFunction:
    method = walk.text(node, vocab.mqtt_method)
    topic = walk.text(node, vocab.mqtt_topic)
    params = []
    for pnode in walk.objects(node, vocab.has_parameter):
        pname = walk.text(pnode, vocab.rdfs_label)
        ptype = walk.text(pnode, vocab.param_type, default="string")
        constraint = walk.text(pnode, vocab.param_constraint) or None
        params.append(Param(name=pname, type=ptype, constraint=constraint))
    params.sort(key=lambda p: p.name)
    return ControlFunction(
        name=label,
        description=description,
        mqtt_method=method,
        mqtt_topic=topic,
        params=tuple(params),
    )


def _seconds(walk: _Walk, node: Term, predicate: Iri, vocab: Vocabulary) -> float:
    duration = walk.value(node, predicate)
    if duration is None:
        return 0.0
    walk.types(duration, vocab)
    unit = walk.value(duration, vocab.time_unit_type)
    if unit is not None and unit != vocab.time_unit_second:
        raise ExtractionError(f"unsupported time unit {unit} (only seconds)")
    text = walk.text(duration, vocab.time_numeric_duration, default="0")
    try:
        return float(text)
    except ValueError as exc:
        raise ExtractionError(f"bad duration value {text!r}") from exc


def _extract_config(walk, node, label, description, vocab, function_nodes) -> ConfigFunction:
    sensor_node = walk.value(node, vocab.monitors_sensor)
    sensor_ref = function_nodes.get(sensor_node, _fallback_name(sensor_node) if sensor_node else "")
    threshold_text = walk.text(node, vocab.threshold_value, default="0")
    try:
        threshold = Decimal(threshold_text)
    except InvalidOperation as exc:
        raise ExtractionError(f"bad threshold {threshold_text!r} on {label!r}") from exc
    comparator = walk.text(node, vocab.comparator, default="below")
    interval = _seconds(walk, node, vocab.has_interval, vocab)
    duration = _seconds(walk, node, vocab.has_duration, vocab)
    crud_op = walk.text(node, vocab.crud_operation, default="update")
    event_name = ""
    event_topic = ""
    event = walk.value(node, vocab.emits_event)
    if event is not None:
        walk.types(event, vocab)
        event_name = walk.text(event, vocab.rdfs_label) or f"{label}_event"
        event_topic = walk.text(event, vocab.mqtt_topic)
    return ConfigFunction(
        name=label,
        description=description,
        sensor_ref=sensor_ref,
        threshold=threshold,
        comparator=comparator,
        interval=interval,
        duration=duration,
        crud_op=crud_op,
        event_name=event_name,
        event_topic=event_topic,
        mqtt_method=walk.text(node, vocab.mqtt_method),
        mqtt_topic=walk.text(node, vocab.mqtt_topic),
    )


def _extract_automation(walk, node, label, description, vocab, function_nodes) -> AutomationFunction:
    config_node = walk.value(node, vocab.uses_configuration)
    action_node = walk.value(node, vocab.triggers_action)
    if config_node is None or action_node is None:
        raise DanglingReference(f"automation {label!r} lacks configuration or action link")
    config_ref = function_nodes.get(config_node)
    action_ref = function_nodes.get(action_node)
    if config_ref is None or action_ref is None:
        raise DanglingReference(
            f"automation {label!r} references a functionality outside this device"
        )
    args = []
    for binding in walk.objects(node, vocab.has_parameter_binding):
        args.append((walk.text(binding, vocab.rdfs_label), walk.text(binding, vocab.has_value)))
    args.sort()
    return AutomationFunction(
        name=label,
        description=description,
        config_ref=config_ref,
        action_ref=action_ref,
        action_args=tuple(args),
    )


# -- validation -------------------------------------------------------------

_PARAM_TYPES = {"string", "int", "decimal", "boolean"}
_COMPARATORS = {"below", "above"}


def _coercible(value: str, param_type: str) -> bool:
    if param_type == "string":
        return True
    if param_type == "int":
        try:
            int(value)
            return True
        except ValueError:
            return False
    if param_type == "decimal":
        try:
            Decimal(value)
            return True
        except InvalidOperation:
            return False
    if param_type == "boolean":
        return value.lower() in ("true", "false", "0", "1")
    return False


def validate(description: DeviceDescription) -> list[Violation]:
    """Check all type invariants; an empty list means the value is valid."""
    out: list[Violation] = []

    def bad(code: str, element: str, message: str) -> None:
        out.append(Violation(code=code, element=element, message=message))

    if not description.uuid:
        bad("MissingUuid", "device", "device has no UUID")
    if not description.name:
        bad("MissingName", "device", "device has no name")

    sensor_names = [s.name for s in description.sensors]
    if len(set(sensor_names)) != len(sensor_names):
        bad("DuplicateSensorName", "device", "sensor names are not unique")
    rpc_names = [f.name for f in description.actuators] + [c.name for c in description.configs]
    if len(set(rpc_names)) != len(rpc_names):
        bad("DuplicateFunctionName", "device", "actuator/config names are not unique")

    for sensor in description.sensors:
        parts = sensor.topic.split("/")
        if (
            len(parts) != 4
            or parts[0] != "sensor"
            or not all(parts)
            or parts[2] != sensor.name
            or parts[3] != description.uuid
        ):
            bad(
                "SensorTopicScheme",
                sensor.name,
                f"topic {sensor.topic!r} does not follow sensor/<type>/<name>/<uuid>",
            )
        if "+" in sensor.topic or "#" in sensor.topic:
            bad("WildcardInSensorTopic", sensor.name, f"wildcard in {sensor.topic!r}")
        if not sensor.unit.iri:
            bad("MissingUnit", sensor.name, "sensor has no unit IRI")

    for actuator in description.actuators:
        if not actuator.mqtt_method:
            bad("MissingMqttMethod", actuator.name, "actuator has no mqttMethod")
        if not actuator.mqtt_topic:
            bad("MissingMqttTopic", actuator.name, "actuator has no mqttTopic")
        elif "+" in actuator.mqtt_topic or "#" in actuator.mqtt_topic:
            bad(
                "WildcardInCommandTopic",
                actuator.name,
                f"wildcard in {actuator.mqtt_topic!r}",
            )
        param_names = [p.name for p in actuator.params]
        if len(set(param_names)) != len(param_names):
            bad("DuplicateParamName", actuator.name, "parameter names are not unique")
        for param in actuator.params:
            if param.type not in _PARAM_TYPES:
                bad("BadParamType", actuator.name, f"parameter {param.name!r} has type {param.type!r}")

    sensor_set = set(sensor_names)
    for config in description.configs:
        if config.sensor_ref not in sensor_set:
            bad(
                "DanglingSensorRef",
                config.name,
                f"references unknown sensor {config.sensor_ref!r}",
            )
        if config.comparator not in _COMPARATORS:
            bad("BadComparator", config.name, f"comparator {config.comparator!r}")
        if config.interval <= 0:
            bad("NonPositiveInterval", config.name, f"interval {config.interval}")
        if config.duration < config.interval:
            bad(
                "DurationLessThanInterval",
                config.name,
                f"duration {config.duration} < interval {config.interval}",
            )
        if config.event_topic and ("+" in config.event_topic or "#" in config.event_topic):
            bad("WildcardInEventTopic", config.name, f"wildcard in {config.event_topic!r}")
        if config.mqtt_topic and ("+" in config.mqtt_topic or "#" in config.mqtt_topic):
            bad("WildcardInCommandTopic", config.name, f"wildcard in {config.mqtt_topic!r}")

    config_names = {c.name for c in description.configs}
    actuator_by_name = {a.name: a for a in description.actuators}
    for automation in description.automations:
        if automation.config_ref not in config_names:
            bad(
                "DanglingConfigRef",
                automation.name,
                f"references unknown config {automation.config_ref!r}",
            )
        action = actuator_by_name.get(automation.action_ref)
        if action is None:
            bad(
                "DanglingActionRef",
                automation.name,
                f"references unknown actuator {automation.action_ref!r}",
            )
            continue
        declared = {p.name: p for p in action.params}
        for arg_name, arg_value in automation.action_args:
            param = declared.get(arg_name)
            if param is None:
                bad(
                    "UnknownActionArg",
                    automation.name,
                    f"argument {arg_name!r} not declared by {action.name!r}",
                )
            elif not _coercible(arg_value, param.type):
                bad(
                    "BadActionArgType",
                    automation.name,
                    f"argument {arg_name}={arg_value!r} is not a {param.type}",
                )

    return out


# -- re-serialization --------------------------------------------------------


def description_to_store(description: DeviceDescription, vocab: Vocabulary) -> TripleStore:
    """Rebuild an RDF graph for ``description``; extract() of it is a fixed point."""
    store = TripleStore()
    base = f"urn:myno:device:{description.uuid}"
    device = Iri(base)

    def add(s, p, o):
        store.add(Triple(s, p, o))

    def text(value: str) -> Literal:
        return Literal(value)

    add(device, vocab.rdf_type, vocab.device)
    if description.name:
        add(device, vocab.rdfs_label, text(description.name))
    if description.category:
        add(device, vocab.device_category, text(description.category))

    uuid_node = Iri(base + "#uuid")
    add(device, vocab.has_thing_property, uuid_node)
    add(uuid_node, vocab.rdf_type, vocab.thing_property)
    add(uuid_node, vocab.rdfs_label, text("UUID"))
    add(uuid_node, vocab.has_value, text(description.uuid))

    if description.yang_description:
        yd_node = Iri(base + "#yang-description")
        add(device, vocab.has_thing_property, yd_node)
        add(yd_node, vocab.rdf_type, vocab.yang_description)
        add(yd_node, vocab.rdfs_label, text("yang-description"))
        add(yd_node, vocab.has_value, text(description.yang_description))

    service = Iri(base + "#service")
    add(device, vocab.has_service, service)
    add(service, vocab.rdf_type, vocab.service)
    add(service, vocab.rdfs_label, text("service"))

    node_of: dict[str, Iri] = {}

    for sensor in description.sensors:
        node = Iri(f"{base}#sensor-{sensor.name}")
        node_of[sensor.name] = node
        add(service, vocab.has_functionality, node)
        add(node, vocab.rdf_type, vocab.measuring_functionality)
        add(node, vocab.rdfs_label, text(sensor.name))
        if sensor.description:
            add(node, vocab.function_description, text(sensor.description))
        datapoint = Iri(f"{base}#sensor-{sensor.name}-dp")
        add(node, vocab.has_output_datapoint, datapoint)
        add(datapoint, vocab.rdf_type, vocab.output_datapoint)
        add(datapoint, vocab.mqtt_topic, text(sensor.topic))
        if sensor.unit.iri:
            unit = Iri(sensor.unit.iri)
            add(datapoint, vocab.has_unit, unit)
            add(unit, vocab.rdfs_label, text(sensor.unit.label))

    for actuator in description.actuators:
        node = Iri(f"{base}#actuator-{actuator.name}")
        node_of[actuator.name] = node
        add(service, vocab.has_functionality, node)
        add(node, vocab.rdf_type, vocab.controlling_functionality)
        add(node, vocab.rdfs_label, text(actuator.name))
        if actuator.description:
            add(node, vocab.function_description, text(actuator.description))
        add(node, vocab.mqtt_method, text(actuator.mqtt_method))
        add(node, vocab.mqtt_topic, text(actuator.mqtt_topic))
        for param in actuator.params:
            pnode = Iri(f"{base}#actuator-{actuator.name}-{param.name}")
            add(node, vocab.has_parameter, pnode)
            add(pnode, vocab.rdfs_label, text(param.name))
            add(pnode, vocab.param_type, text(param.type))
            if param.constraint:
                add(pnode, vocab.param_constraint, text(param.constraint))

    for config in description.configs:
        node = Iri(f"{base}#config-{config.name}")
        node_of[config.name] = node
        add(service, vocab.has_functionality, node)
        add(node, vocab.rdf_type, vocab.configuration_functionality)
        add(node, vocab.rdfs_label, text(config.name))
        if config.description:
            add(node, vocab.function_description, text(config.description))
        sensor_node = node_of.get(config.sensor_ref)
        if sensor_node is not None:
            add(node, vocab.monitors_sensor, sensor_node)
        add(node, vocab.threshold_value, Literal(str(config.threshold), datatype=XSD_NS + "decimal"))
        add(node, vocab.comparator, text(config.comparator))
        for pred, seconds, tag in (
            (vocab.has_interval, config.interval, "interval"),
            (vocab.has_duration, config.duration, "duration"),
        ):
            dnode = Iri(f"{base}#config-{config.name}-{tag}")
            add(node, pred, dnode)
            add(dnode, vocab.rdf_type, vocab.time_duration)
            add(dnode, vocab.time_numeric_duration, Literal(_num(seconds), datatype=XSD_NS + "decimal"))
            add(dnode, vocab.time_unit_type, vocab.time_unit_second)
        add(node, vocab.crud_operation, text(config.crud_op))
        add(node, vocab.mqtt_method, text(config.mqtt_method))
        add(node, vocab.mqtt_topic, text(config.mqtt_topic))
        if config.event_topic:
            enode = Iri(f"{base}#config-{config.name}-event")
            add(node, vocab.emits_event, enode)
            add(enode, vocab.rdf_type, vocab.event_functionality)
            add(enode, vocab.rdfs_label, text(config.event_name or f"{config.name}_event"))
            add(enode, vocab.mqtt_topic, text(config.event_topic))

    for automation in description.automations:
        node = Iri(f"{base}#automation-{automation.name}")
        add(service, vocab.has_functionality, node)
        add(node, vocab.rdf_type, vocab.automation_functionality)
        add(node, vocab.rdfs_label, text(automation.name))
        if automation.description:
            add(node, vocab.function_description, text(automation.description))
        config_node = node_of.get(automation.config_ref)
        action_node = node_of.get(automation.action_ref)
        if config_node is not None:
            add(node, vocab.uses_configuration, config_node)
        if action_node is not None:
            add(node, vocab.triggers_action, action_node)
        for arg_name, arg_value in automation.action_args:
            bnode = Iri(f"{base}#automation-{automation.name}-{arg_name}")
            add(node, vocab.has_parameter_binding, bnode)
            add(bnode, vocab.rdfs_label, text(arg_name))
            add(bnode, vocab.has_value, text(arg_value))

    return store


def _num(value: float) -> str:
    return str(int(value)) if float(value).is_integer() else str(value)
