import { describe, expect, it } from "vitest";
import { readFileSync } from "node:fs";
import { fileURLToPath } from "node:url";
import { dirname, join } from "node:path";

import { BridgeApi } from "../src/api.js";
import type { BridgeState, LiveEvent, UiSchema } from "../src/types.js";
import {
  applyEvent,
  applyState,
  buildPanels,
  emptyModel,
  parseSseFrame,
  rebuildModel,
  validateArgs,
} from "../src/viewmodel.js";

const here = dirname(fileURLToPath(import.meta.url));
// generated from the real schema generator over the 10-device fixture fleet
const fixtureSchema = JSON.parse(
  readFileSync(join(here, "fixture_schema.json"), "utf-8"),
) as UiSchema;

describe("schema-driven panels", () => {
  it("renders ten panels with the fixture element counts", () => {
    const panels = buildPanels(fixtureSchema);
    expect(panels).toHaveLength(10);
    for (const panel of panels) {
      expect(panel.sensors).toHaveLength(6);
      expect(panel.actions).toHaveLength(3);
      expect(panel.configs).toHaveLength(2);
      expect(panel.events).toHaveLength(2);
      expect(panel.sensors.every((s) => s.value === null)).toBe(true);
    }
  });

  it("renders a synthetic device with zero code changes", () => {
    // a device shape never seen in the fixtures: new names, new units
    const synthetic: UiSchema = {
      devices: [
        {
          uuid: "synth-0001",
          name: "Fermenter",
          category: "brewery",
          device_id: "synth-0001",
          sensors: [
            { name: "ph_1", unit: "pH", topic: "sensor/ph/ph_1/synth-0001" },
            { name: "co2_1", unit: "ppm", topic: "sensor/co2/co2_1/synth-0001" },
          ],
          actions: [
            {
              rpc_name: "synth-0001-valve",
              name: "valve",
              kind: "control",
              params: [{ name: "open", type: "boolean" }],
            },
          ],
          configs: [],
          events: [],
        },
      ],
    };
    const panels = buildPanels(synthetic);
    expect(panels).toHaveLength(1);
    expect(panels[0].title).toBe("Fermenter");
    expect(panels[0].sensors.map((s) => s.name)).toEqual(["ph_1", "co2_1"]);
    expect(panels[0].actions[0].rpc_name).toBe("synth-0001-valve");
  });

  it("patches live state into the matching panel only", () => {
    const model = rebuildModel(emptyModel(), fixtureSchema);
    const target = model.panels[3];
    const state: BridgeState = {
      devices: [
        {
          uuid: target.uuid,
          name: target.title,
          state: "active",
          sensors: {
            moisture_1: { value: "41.5", unit: "percent", received_at: 123.0 },
          },
          actuators: { pump_switch: "on" },
        },
      ],
    };
    applyState(model, state);
    const moisture = target.sensors.find((s) => s.name === "moisture_1");
    expect(moisture?.value).toBe("41.5");
    expect(target.actuators.pump_switch).toBe("on");
    expect(target.online).toBe(true);
    expect(model.panels[0].sensors.every((s) => s.value === null)).toBe(true);
    expect(model.panels[0].online).toBe(false);
  });
});

describe("live events", () => {
  function sensorEvent(id: number, uuid: string, value: string): LiveEvent {
    return {
      id,
      kind: "sensor",
      data: { uuid, sensor: "temperature_1", value, received_at: 5.0 },
    };
  }

  it("updates sensor fields from events", () => {
    const model = rebuildModel(emptyModel(), fixtureSchema);
    const uuid = model.panels[0].uuid;
    expect(applyEvent(model, sensorEvent(1, uuid, "22.75"))).toBe(true);
    const field = model.panels[0].sensors.find((s) => s.name === "temperature_1");
    expect(field?.value).toBe("22.75");
  });

  it("drops duplicate event ids after a reconnect replay", () => {
    const model = rebuildModel(emptyModel(), fixtureSchema);
    const uuid = model.panels[0].uuid;
    const logEvent: LiveEvent = {
      id: 7,
      kind: "config-event",
      data: { uuid, config: "moisture_low_alert", payload: { value: "25" } },
    };
    expect(applyEvent(model, logEvent)).toBe(true);
    expect(applyEvent(model, logEvent)).toBe(false);
    expect(applyEvent(model, { ...logEvent, id: 6 })).toBe(false); // replayed older event
    expect(model.eventLog).toHaveLength(1);
    expect(applyEvent(model, { ...logEvent, id: 8 })).toBe(true);
    expect(model.eventLog).toHaveLength(2);
  });

  it("flags a schema refetch when devices join or leave", () => {
    const model = rebuildModel(emptyModel(), fixtureSchema);
    applyEvent(model, { id: 1, kind: "device", data: { uuid: "new", change: "created" } });
    expect(model.needsSchemaRefresh).toBe(true);
    const refreshed = rebuildModel(model, fixtureSchema);
    expect(refreshed.needsSchemaRefresh).toBe(false);
    expect(refreshed.lastEventId).toBe(1); // dedupe cursor survives
  });

  it("parses SSE frames and ignores heartbeats", () => {
    const event = parseSseFrame(
      'id: 42\nevent: sensor\ndata: {"uuid":"u","sensor":"s","value":"1.0"}',
    );
    expect(event).toEqual({
      id: 42,
      kind: "sensor",
      data: { uuid: "u", sensor: "s", value: "1.0" },
    });
    expect(parseSseFrame(": heartbeat")).toBeNull();
    expect(parseSseFrame("data: {}")).toBeNull(); // no id: not attributable
  });
});

describe("argument validation", () => {
  const rgbParams = [
    { name: "red", type: "int" as const, constraint: "0..255" },
    { name: "green", type: "int" as const, constraint: "0..255" },
    { name: "blue", type: "int" as const, constraint: "0..255" },
  ];

  it("blocks bad integers client-side", () => {
    const result = validateArgs(rgbParams, { red: "a lot", green: "0", blue: "0" });
    expect(result.ok).toBe(false);
    if (!result.ok) expect(result.errors.red).toMatch(/integer/);
  });

  it("enforces declared ranges", () => {
    const result = validateArgs(rgbParams, { red: "300", green: "0", blue: "0" });
    expect(result.ok).toBe(false);
    if (!result.ok) expect(result.errors.red).toMatch(/0\.\.255/);
  });

  it("accepts valid values and types them", () => {
    const result = validateArgs(rgbParams, { red: "255", green: "0", blue: "0" });
    expect(result).toEqual({ ok: true, args: { red: 255, green: 0, blue: 0 } });
  });

  it("handles booleans and decimals", () => {
    const params = [
      { name: "state", type: "boolean" as const },
      { name: "threshold", type: "decimal" as const },
    ];
    const good = validateArgs(params, { state: true, threshold: "27.5" });
    expect(good).toEqual({ ok: true, args: { state: true, threshold: "27.5" } });
    const bad = validateArgs(params, { state: false, threshold: "soon" });
    expect(bad.ok).toBe(false);
  });

  it("requires non-boolean fields", () => {
    const result = validateArgs([{ name: "x", type: "int" }], { x: "" });
    expect(result.ok).toBe(false);
  });
});

describe("rpc invocation outcomes", () => {
  function apiWith(status: number, body: unknown): BridgeApi {
    const fetchStub = async () =>
      new Response(JSON.stringify(body), {
        status,
        headers: { "Content-Type": "application/json" },
      });
    return new BridgeApi("", fetchStub);
  }

  it("maps 200 to ok with the device payload", async () => {
    const api = apiWith(200, { status: "ok", result: { state: "on" } });
    expect(await api.invoke("x-pump_switch", { state: true })).toEqual({
      status: "ok",
      detail: { state: "on" },
    });
  });

  it("maps 504 to a distinct timeout outcome", async () => {
    const api = apiWith(504, { status: "error", detail: "timeout" });
    expect(await api.invoke("x", {})).toEqual({ status: "timeout" });
  });

  it("surfaces 4xx/5xx details verbatim", async () => {
    const api = apiWith(400, { error: "argument 'red' must be an int" });
    const outcome = await api.invoke("x", {});
    expect(outcome.status).toBe("error");
    if (outcome.status === "error") {
      expect(outcome.detail).toBe("HTTP 400: argument 'red' must be an int");
    }
  });

  it("posts to the rpc endpoint with JSON args", async () => {
    const calls: Array<{ url: string; init?: RequestInit }> = [];
    const fetchStub = async (url: string, init?: RequestInit) => {
      calls.push({ url, init });
      return new Response(JSON.stringify({ status: "ok", result: null }), { status: 200 });
    };
    const api = new BridgeApi("", fetchStub);
    await api.invoke("dev-pump_switch", { state: true });
    expect(calls[0].url).toBe("/api/rpc/dev-pump_switch");
    expect(calls[0].init?.method).toBe("POST");
    expect(JSON.parse(String(calls[0].init?.body))).toEqual({ state: true });
  });
});
