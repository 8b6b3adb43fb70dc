// Pure view-model: schema-driven panel construction, live-state patching,
// event dedupe, and client-side argument validation. No DOM, no network;
// everything here is exercised by the unit tests.

import type {
  BridgeState,
  LiveEvent,
  Param,
  SchemaAction,
  SchemaDevice,
  UiSchema,
} from "./types.js";

export interface SensorField {
  name: string;
  unit: string;
  value: string | null;
  receivedAt: number | null;
}

export interface EventLogEntry {
  eventId: number;
  device: string;
  config: string;
  text: string;
}

export interface DevicePanel {
  uuid: string;
  title: string;
  category: string;
  sensors: SensorField[];
  actions: SchemaAction[];
  configs: SchemaAction[];
  events: { name: string; topic: string }[];
  actuators: Record<string, string | null>;
  online: boolean;
}

export interface ViewModel {
  panels: DevicePanel[];
  eventLog: EventLogEntry[];
  lastEventId: number;
  needsSchemaRefresh: boolean;
}

export const EVENT_LOG_LIMIT = 200;

export function emptyModel(): ViewModel {
  return { panels: [], eventLog: [], lastEventId: 0, needsSchemaRefresh: false };
}

export function buildPanels(schema: UiSchema): DevicePanel[] {
  return schema.devices.map((device: SchemaDevice) => ({
    uuid: device.uuid,
    title: device.name || device.uuid,
    category: device.category,
    sensors: device.sensors.map((sensor) => ({
      name: sensor.name,
      unit: sensor.unit,
      value: null,
      receivedAt: null,
    })),
    actions: device.actions,
    configs: device.configs,
    events: device.events,
    actuators: {},
    online: false,
  }));
}

export function rebuildModel(model: ViewModel, schema: UiSchema): ViewModel {
  // keep the log and dedupe cursor across schema refreshes
  return {
    panels: buildPanels(schema),
    eventLog: model.eventLog,
    lastEventId: model.lastEventId,
    needsSchemaRefresh: false,
  };
}

export function applyState(model: ViewModel, state: BridgeState): void {
  const byUuid = new Map(state.devices.map((d) => [d.uuid, d]));
  for (const panel of model.panels) {
    const device = byUuid.get(panel.uuid);
    if (!device) {
      panel.online = false;
      continue;
    }
    panel.online = device.state !== "deleted";
    for (const field of panel.sensors) {
      const reading = device.sensors[field.name];
      if (reading && reading.value !== null) {
        field.value = reading.value;
        field.receivedAt = reading.received_at;
      }
    }
    panel.actuators = { ...device.actuators };
  }
}

/** Apply one live event; returns false when it was a duplicate (reconnect replay). */
export function applyEvent(model: ViewModel, event: LiveEvent): boolean {
  if (event.id <= model.lastEventId) {
    return false;
  }
  model.lastEventId = event.id;
  const data = event.data as Record<string, string>;
  if (event.kind === "sensor") {
    const panel = model.panels.find((p) => p.uuid === data.uuid);
    const field = panel?.sensors.find((s) => s.name === data.sensor);
    if (field) {
      field.value = data.value;
      field.receivedAt = Number(data.received_at ?? Date.now() / 1000);
    }
  } else if (event.kind === "actuator") {
    const panel = model.panels.find((p) => p.uuid === data.uuid);
    if (panel) {
      panel.actuators[data.actuator] = data.state;
    }
  } else if (event.kind === "config-event") {
    model.eventLog.unshift({
      eventId: event.id,
      device: data.uuid,
      config: data.config,
      text: JSON.stringify(event.data["payload"] ?? {}),
    });
    if (model.eventLog.length > EVENT_LOG_LIMIT) {
      model.eventLog.length = EVENT_LOG_LIMIT;
    }
  } else if (event.kind === "device") {
    model.needsSchemaRefresh = true;
  }
  return true;
}

// -- argument validation ------------------------------------------------------

export type ValidationResult =
  | { ok: true; args: Record<string, unknown> }
  | { ok: false; errors: Record<string, string> };

const INT_RE = /^[+-]?\d+$/;
const DECIMAL_RE = /^[+-]?(\d+(\.\d*)?|\.\d+)$/;
const RANGE_RE = /^(-?\d+)\.\.(-?\d+)$/;

export function validateArgs(params: Param[], raw: Record<string, string | boolean>): ValidationResult {
  const args: Record<string, unknown> = {};
  const errors: Record<string, string> = {};
  for (const param of params) {
    const value = raw[param.name];
    if (param.type === "boolean") {
      args[param.name] = value === true || value === "true";
      continue;
    }
    const text = typeof value === "string" ? value.trim() : "";
    if (text === "") {
      errors[param.name] = "required";
      continue;
    }
    if (param.type === "int") {
      if (!INT_RE.test(text)) {
        errors[param.name] = "must be an integer";
        continue;
      }
      const parsed = parseInt(text, 10);
      const range = param.constraint ? RANGE_RE.exec(param.constraint) : null;
      if (range) {
        const low = parseInt(range[1], 10);
        const high = parseInt(range[2], 10);
        if (parsed < low || parsed > high) {
          errors[param.name] = `must be in ${param.constraint}`;
          continue;
        }
      }
      args[param.name] = parsed;
    } else if (param.type === "decimal") {
      if (!DECIMAL_RE.test(text)) {
        errors[param.name] = "must be a decimal number";
        continue;
      }
      args[param.name] = text; // decimals travel as strings, exactly
    } else {
      args[param.name] = text;
    }
  }
  if (Object.keys(errors).length > 0) {
    return { ok: false, errors };
  }
  return { ok: true, args };
}

// -- server-sent-event line parsing ---------------------------------------------

/** Parse one SSE frame (the text between blank lines) into a LiveEvent. */
export function parseSseFrame(frame: string): LiveEvent | null {
  let id = 0;
  let kind = "message";
  const dataLines: string[] = [];
  for (const line of frame.split("\n")) {
    if (line.startsWith(":")) continue; // heartbeat comment
    if (line.startsWith("id:")) id = Number(line.slice(3).trim());
    else if (line.startsWith("event:")) kind = line.slice(6).trim();
    else if (line.startsWith("data:")) dataLines.push(line.slice(5).trim());
  }
  if (!dataLines.length || !id) return null;
  try {
    return {
      id,
      kind: kind as LiveEvent["kind"],
      data: JSON.parse(dataLines.join("\n")),
    };
  } catch {
    return null;
  }
}
