// JSON shapes served by the bridge (GET /api/schema, /api/state, /api/events).

export type ParamType = "string" | "int" | "decimal" | "boolean";

export interface Param {
  name: string;
  type: ParamType;
  constraint?: string | null;
  value?: string; // configs carry their declared defaults
}

export interface SchemaSensor {
  name: string;
  unit: string;
  topic: string;
}

export interface SchemaAction {
  rpc_name: string;
  name: string;
  kind: "control" | "config";
  description?: string;
  params: Param[];
  sensor?: string;
  comparator?: string;
}

export interface SchemaEvent {
  name: string;
  topic: string;
}

export interface SchemaDevice {
  uuid: string;
  name: string;
  category: string;
  device_id: string;
  sensors: SchemaSensor[];
  actions: SchemaAction[];
  configs: SchemaAction[];
  events: SchemaEvent[];
}

export interface UiSchema {
  devices: SchemaDevice[];
}

export interface StateSensor {
  value: string | null;
  unit: string;
  received_at: number | null;
}

export interface StateDevice {
  uuid: string;
  name: string;
  state: string;
  sensors: Record<string, StateSensor>;
  actuators: Record<string, string | null>;
}

export interface BridgeState {
  devices: StateDevice[];
}

export type LiveEventKind = "sensor" | "actuator" | "config-event" | "device";

export interface LiveEvent {
  id: number;
  kind: LiveEventKind;
  data: Record<string, unknown>;
}

export type RpcOutcome =
  | { status: "ok"; detail: unknown }
  | { status: "timeout" }
  | { status: "error"; detail: string };
