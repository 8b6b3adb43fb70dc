"""Simulated plant-monitor device as a deterministic state machine.

A SimDevice owns sensors (seeded bounded random walks sampled on their
intervals), actuator state, and the declared configuration / automation
rules from its own description. It has no threads and no sockets: callers
feed it time (``advance_to``) and inbound command envelopes
(``on_command``), and it returns the MQTT messages it wants published.
The threaded runner in ``fleet.py`` wires instances to a real broker.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from decimal import ROUND_HALF_EVEN, Decimal

from myno.model import VOCAB, DeviceDescription, extract_description
from myno.model.description import AutomationFunction, ConfigFunction, ControlFunction
from myno.rdf import parse_turtle

# sensing intervals in seconds by sensor type; moisture and rain move
# slowly and report far less often than the air sensors
DEFAULT_INTERVALS = {
    "moisture": 600.0,
    "rain": 300.0,
    "brightness": 60.0,
    "temperature": 60.0,
    "pressure": 60.0,
    "humidity": 60.0,
}
FALLBACK_INTERVAL = 60.0

# bounded random-walk parameters per sensor type: (start, low, high, step)
VALUE_PROCESSES = {
    "moisture": (55.0, 0.0, 100.0, 1.5),
    "rain": (5.0, 0.0, 100.0, 2.0),
    "brightness": (8000.0, 0.0, 100000.0, 300.0),
    "temperature": (21.0, -10.0, 50.0, 0.4),
    "pressure": (1013.0, 900.0, 1100.0, 0.8),
    "humidity": (60.0, 0.0, 100.0, 1.2),
}
FALLBACK_PROCESS = (50.0, 0.0, 100.0, 1.0)

_TWO_PLACES = Decimal("0.01")


class UnknownSensor(Exception):
    pass


@dataclass(frozen=True)
class Outbound:
    topic: str
    payload: bytes
    qos: int = 0
    retain: bool = False


@dataclass(frozen=True)
class EventSchedule:
    """Emission plan for one triggered configuration."""

    trigger_time: float
    interval: float
    duration: float

    @property
    def emissions(self) -> tuple[float, ...]:
        count = int(self.duration / self.interval + 1e-9)
        return tuple(self.trigger_time + k * self.interval for k in range(1, count + 1))


class _SensorState:
    def __init__(self, name: str, sensor_type: str, topic: str, interval: float, rng: random.Random):
        start, low, high, step = VALUE_PROCESSES.get(sensor_type, FALLBACK_PROCESS)
        self.name = name
        self.topic = topic
        self.interval = interval
        self.low = low
        self.high = high
        self.step = step
        self.rng = rng
        self.value = Decimal(str(start))
        self.forced = False
        self.epoch = 0.0
        self.samples_taken = 0

    def next_due(self) -> float:
        return self.epoch + self.samples_taken * self.interval

    def sample(self) -> Decimal:
        if not self.forced:
            drift = self.rng.uniform(-self.step, self.step)
            moved = float(self.value) + drift
            moved = min(max(moved, self.low), self.high)
            self.value = Decimal(str(moved)).quantize(_TWO_PLACES, rounding=ROUND_HALF_EVEN)
        self.samples_taken += 1
        return self.value


class _ConfigRuntime:
    def __init__(self, declared: ConfigFunction):
        self.declared = declared
        self.threshold = declared.threshold
        self.comparator = declared.comparator
        self.interval = declared.interval
        self.duration = declared.duration
        self.schedule: EventSchedule | None = None
        self.pending_emissions: list[float] = []
        self.emitted = 0
        # armed: a new schedule may trigger on the next true condition
        self.armed = True

    def condition(self, value: Decimal) -> bool:
        if self.comparator == "below":
            return value < self.threshold
        return value > self.threshold


class _AutomationRuntime:
    def __init__(self, declared: AutomationFunction):
        self.declared = declared
        self.armed = True
        self.firings = 0


class SimDevice:
    """One simulated device; all behavior is driven by explicit time."""

    def __init__(
        self,
        uuid: str,
        description_text: str,
        seed: int = 0,
        intervals: dict[str, float] | None = None,
        vocab=VOCAB,
    ):
        self.uuid = uuid
        self.description_text = description_text
        self.description: DeviceDescription = extract_description(
            parse_turtle(description_text), vocab
        )
        if self.description.uuid != uuid:
            raise ValueError(
                f"description carries uuid {self.description.uuid!r}, expected {uuid!r}"
            )
        interval_table = dict(DEFAULT_INTERVALS)
        interval_table.update(intervals or {})
        self.sensors: dict[str, _SensorState] = {}
        for sensor in self.description.sensors:
            rng = random.Random(f"{seed}:{uuid}:{sensor.name}")
            self.sensors[sensor.name] = _SensorState(
                name=sensor.name,
                sensor_type=sensor.sensor_type,
                topic=sensor.topic,
                interval=interval_table.get(sensor.sensor_type, FALLBACK_INTERVAL),
                rng=rng,
            )
        self.actuator_state: dict[str, str] = {}
        for actuator in self.description.actuators:
            self.actuator_state[actuator.name] = self._initial_state(actuator)
        self.configs: dict[str, _ConfigRuntime] = {
            c.name: _ConfigRuntime(c) for c in self.description.configs
        }
        self.automations: dict[str, _AutomationRuntime] = {
            a.name: _AutomationRuntime(a) for a in self.description.automations
        }
        self.stop_at: float | None = None
        self.sensor_publishes = 0
        self.event_publishes = 0

    # -- test hooks -----------------------------------------------------------

    def force_sensor(self, name: str, value) -> None:
        """Pin a sensor to a fixed value (condition tests)."""
        state = self.sensors.get(name)
        if state is None:
            raise UnknownSensor(name)
        state.value = Decimal(str(value)).quantize(_TWO_PLACES, rounding=ROUND_HALF_EVEN)
        state.forced = True

    def release_sensor(self, name: str) -> None:
        state = self.sensors.get(name)
        if state is None:
            raise UnknownSensor(name)
        state.forced = False

    # -- registration ----------------------------------------------------------

    def check_message(self) -> Outbound:
        return Outbound(topic="yang/config/check", payload=self.uuid.encode(), qos=1)

    def create_message(self) -> Outbound:
        return Outbound(
            topic="yang/config/create", payload=self.description_text.encode(), qos=1
        )

    def begin_sampling(self, now: float, duration: float | None = None) -> None:
        """Anchor every sensor's schedule at ``now``; first sample is due now."""
        for state in self.sensors.values():
            state.epoch = now
            state.samples_taken = 0
        self.stop_at = None if duration is None else now + duration

    def initial_state_messages(self) -> list[Outbound]:
        return [
            Outbound(
                topic=f"state/{name}/{self.uuid}",
                payload=self.actuator_state[name].encode(),
            )
            for name in sorted(self.actuator_state)
        ]

    # -- time-driven behavior ----------------------------------------------------

    def next_due(self) -> float | None:
        """Earliest pending instant (sensor sample or event emission)."""
        dues: list[float] = []
        for state in sorted(self.sensors.values(), key=lambda s: s.name):
            due = state.next_due()
            if self.stop_at is None or due < self.stop_at:
                dues.append(due)
        for runtime in self.configs.values():
            if runtime.pending_emissions:
                dues.append(runtime.pending_emissions[0])
        return min(dues) if dues else None

    def advance_to(self, now: float) -> list[Outbound]:
        """Process everything due at or before ``now``, in time order."""
        out: list[Outbound] = []
        while True:
            due = self.next_due()
            if due is None or due > now:
                return out
            moment = due
            # sensor samples first at a tied instant, in name order; the
            # min() in next_due guarantees at least one branch progresses
            for name in sorted(self.sensors):
                state = self.sensors[name]
                if state.next_due() == moment and (self.stop_at is None or moment < self.stop_at):
                    value = state.sample()
                    out.append(
                        Outbound(topic=state.topic, payload=str(value).encode(), qos=0)
                    )
                    self.sensor_publishes += 1
                    out.extend(self._evaluate_conditions(name, moment))
            for cfg_name in sorted(self.configs):
                runtime = self.configs[cfg_name]
                while runtime.pending_emissions and runtime.pending_emissions[0] == moment:
                    out.extend(self._emit_or_cancel(cfg_name, runtime, moment))

    def _sensor_value(self, name: str) -> Decimal:
        state = self.sensors.get(name)
        if state is None:
            raise UnknownSensor(name)
        return state.value

    def _evaluate_conditions(self, sensor_name: str, now: float) -> list[Outbound]:
        """Re-check configs and automations watching ``sensor_name``."""
        out: list[Outbound] = []
        value = self._sensor_value(sensor_name)
        for cfg_name in sorted(self.configs):
            runtime = self.configs[cfg_name]
            if runtime.declared.sensor_ref != sensor_name:
                continue
            holds = runtime.condition(value)
            if holds and runtime.armed and runtime.schedule is None:
                self._trigger_schedule(runtime, now)
                runtime.armed = False
            elif not holds:
                if runtime.schedule is not None:
                    runtime.schedule = None
                    runtime.pending_emissions = []
                runtime.armed = True
        for auto_name in sorted(self.automations):
            runtime = self.automations[auto_name]
            config = self.configs.get(runtime.declared.config_ref)
            if config is None or config.declared.sensor_ref != sensor_name:
                continue
            holds = config.condition(value)
            if holds and runtime.armed:
                runtime.armed = False
                runtime.firings += 1
                out.extend(self._run_automation(runtime.declared))
            elif not holds:
                runtime.armed = True
        return out

    def _trigger_schedule(self, runtime: _ConfigRuntime, now: float) -> None:
        if runtime.interval <= 0:
            return
        schedule = EventSchedule(
            trigger_time=now, interval=runtime.interval, duration=runtime.duration
        )
        runtime.schedule = schedule
        runtime.pending_emissions = list(schedule.emissions)
        runtime.emitted = 0

    def _emit_or_cancel(self, cfg_name: str, runtime: _ConfigRuntime, moment: float) -> list[Outbound]:
        runtime.pending_emissions.pop(0)
        declared = runtime.declared
        value = self._sensor_value(declared.sensor_ref)
        if not runtime.condition(value):
            # condition cleared mid-window: truncate, re-arm
            runtime.schedule = None
            runtime.pending_emissions = []
            runtime.armed = True
            return []
        runtime.emitted += 1
        if not runtime.pending_emissions:
            # window complete; a new schedule needs the condition to clear first
            runtime.schedule = None
        body = json.dumps(
            {
                "config": cfg_name,
                "sensor": declared.sensor_ref,
                "value": str(value),
                "threshold": str(runtime.threshold),
                "comparator": runtime.comparator,
                "emission": runtime.emitted,
            }
        )
        self.event_publishes += 1
        if not declared.event_topic:
            return []
        return [Outbound(topic=declared.event_topic, payload=body.encode(), qos=0)]

    # -- commands ------------------------------------------------------------------

    def topics_to_subscribe(self) -> list[str]:
        topics = [f"yang/config/registered/{self.uuid}"]
        topics += [a.mqtt_topic for a in self.description.actuators]
        topics += [c.mqtt_topic for c in self.description.configs if c.mqtt_topic]
        return topics

    def on_command(self, topic: str, payload: bytes, now: float) -> list[Outbound]:
        """Handle a command envelope; returns response + state publishes."""
        try:
            envelope = json.loads(payload.decode("utf-8"))
            method = envelope["method"]
            params = envelope.get("params", {})
            correlation = envelope["correlation"]
        except (json.JSONDecodeError, UnicodeDecodeError, KeyError):
            return []  # not a command envelope; nothing to answer

        reply_topic = f"{topic}/response/{correlation}"

        for actuator in self.description.actuators:
            if actuator.mqtt_topic == topic:
                if actuator.mqtt_method != method:
                    return [_error_reply(reply_topic, f"unknown method {method!r}")]
                out = self._execute_action(actuator, params)
                out.append(_ok_reply(reply_topic, {"state": self.actuator_state[actuator.name]}))
                return out

        for config in self.description.configs:
            if config.mqtt_topic == topic:
                if config.mqtt_method != method:
                    return [_error_reply(reply_topic, f"unknown method {method!r}")]
                try:
                    out = self.apply_config_update(config.name, params, now)
                except (KeyError, ValueError) as exc:
                    return [_error_reply(reply_topic, str(exc))]
                runtime = self.configs[config.name]
                out.append(
                    _ok_reply(
                        reply_topic,
                        {
                            "threshold": str(runtime.threshold),
                            "interval": runtime.interval,
                            "duration": runtime.duration,
                        },
                    )
                )
                return out

        return [_error_reply(reply_topic, f"no function listens on {topic!r}")]

    def _execute_action(self, actuator: ControlFunction, params: dict) -> list[Outbound]:
        state = _action_state_text(actuator, params)
        self.actuator_state[actuator.name] = state
        out = [Outbound(topic=f"state/{actuator.name}/{self.uuid}", payload=state.encode())]
        # setting a colour implies the LED is on
        if actuator.name == "led_rgb" and "led_switch" in self.actuator_state:
            self.actuator_state["led_switch"] = "on"
            out.append(Outbound(topic=f"state/led_switch/{self.uuid}", payload=b"on"))
        return out

    def apply_config_update(self, config_name: str, params: dict, now: float) -> list[Outbound]:
        """Update threshold/interval/duration and restart condition tracking."""
        runtime = self.configs.get(config_name)
        if runtime is None:
            raise KeyError(f"unknown config {config_name!r}")
        if "threshold" in params:
            runtime.threshold = Decimal(str(params["threshold"]))
        if "interval" in params:
            interval = float(params["interval"])
            if interval <= 0:
                raise ValueError("interval must be positive")
            runtime.interval = interval
        if "duration" in params:
            duration = float(params["duration"])
            if duration < runtime.interval:
                raise ValueError("duration must be at least one interval")
            runtime.duration = duration
        runtime.schedule = None
        runtime.pending_emissions = []
        runtime.armed = True
        # an already-true condition triggers immediately under the new settings
        value = self._sensor_value(runtime.declared.sensor_ref)
        if runtime.condition(value):
            self._trigger_schedule(runtime, now)
            runtime.armed = False
        return []

    def run_automation_check(self, now: float) -> list[Outbound]:
        """Evaluate all automations against current values (used after forcing)."""
        out: list[Outbound] = []
        for sensor_name in sorted(self.sensors):
            out.extend(self._evaluate_conditions(sensor_name, now))
        return out

    def _run_automation(self, automation: AutomationFunction) -> list[Outbound]:
        actuator = self.description.actuator(automation.action_ref)
        if actuator is None:
            return []
        args = {name: value for name, value in automation.action_args}
        try:
            return self._execute_action(actuator, args)
        except (KeyError, ValueError):
            return []

    def _initial_state(self, actuator: ControlFunction) -> str:
        if any(p.type == "boolean" for p in actuator.params):
            return "off"
        return ""


def _action_state_text(actuator: ControlFunction, params: dict) -> str:
    declared = {p.name: p for p in actuator.params}
    values: dict[str, object] = {}
    for name, param in declared.items():
        if name not in params:
            raise KeyError(f"missing parameter {name!r}")
        values[name] = _coerce_param(params[name], param.type)
    if list(declared) == ["state"] and isinstance(values.get("state"), bool):
        return "on" if values["state"] else "off"
    if set(declared) == {"red", "green", "blue"}:
        return f"rgb({values['red']},{values['green']},{values['blue']})"
    return ",".join(f"{k}={values[k]}" for k in sorted(values))


def _coerce_param(value, type_name: str):
    if type_name == "boolean":
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false"):
            return value.lower() == "true"
        raise ValueError(f"{value!r} is not a boolean")
    if type_name == "int":
        if isinstance(value, bool):
            raise ValueError("boolean is not an int")
        return int(value)
    if type_name == "decimal":
        return Decimal(str(value))
    return str(value)


def _ok_reply(topic: str, result: dict) -> Outbound:
    return Outbound(topic=topic, payload=json.dumps({"status": "ok", "result": result}).encode())


def _error_reply(topic: str, detail: str) -> Outbound:
    return Outbound(
        topic=topic, payload=json.dumps({"status": "error", "detail": detail}).encode()
    )
