// Thin DOM binding: renders the view-model and wires invocations. All
// decisions (what a panel contains, what an argument accepts) live in the
// view-model layer; this file only reflects them into elements.

import { BridgeApi } from "./api.js";
import type { SchemaAction } from "./types.js";
import { DevicePanel, ViewModel, validateArgs } from "./viewmodel.js";

function el(tag: string, className?: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function render(root: HTMLElement, model: ViewModel, api: BridgeApi): void {
  root.textContent = "";
  if (!model.panels.length) {
    root.append(el("p", "empty-state", "No devices are registered yet."));
  }
  for (const panel of model.panels) {
    root.append(renderPanel(panel, api));
  }
  root.append(renderEventLog(model));
}

function renderPanel(panel: DevicePanel, api: BridgeApi): HTMLElement {
  const card = el("section", "device-panel");
  card.dataset.uuid = panel.uuid;
  const header = el("header");
  header.append(el("h2", undefined, panel.title));
  header.append(el("span", "device-meta", `${panel.category} · ${panel.uuid}`));
  if (!panel.online) header.append(el("span", "offline-badge", "offline"));
  card.append(header);

  const sensors = el("div", "sensor-grid");
  for (const field of panel.sensors) {
    const cell = el("div", "sensor-field"); // grey per the colour scheme
    cell.append(el("label", undefined, field.name));
    const valueText = field.value === null ? "—" : `${field.value} ${field.unit}`;
    const value = el("output", "sensor-value", valueText);
    value.dataset.sensor = field.name;
    cell.append(value);
    sensors.append(cell);
  }
  card.append(sensors);

  const actuators = el("div", "actuator-states");
  for (const [name, state] of Object.entries(panel.actuators)) {
    if (state) actuators.append(el("span", "actuator-state", `${name}: ${state}`));
  }
  card.append(actuators);

  const actions = el("div", "action-row");
  for (const action of panel.actions) {
    actions.append(renderInvocation(action, "action-button", api)); // blue
  }
  card.append(actions);

  const configs = el("div", "config-row");
  for (const config of panel.configs) {
    configs.append(renderInvocation(config, "config-button", api)); // cyan
  }
  card.append(configs);
  return card;
}

function renderInvocation(action: SchemaAction, buttonClass: string, api: BridgeApi): HTMLElement {
  const form = el("form", `invocation ${buttonClass}-form`) as HTMLFormElement;
  form.dataset.rpc = action.rpc_name;
  const inputs: Record<string, HTMLInputElement> = {};
  for (const param of action.params) {
    const wrap = el("label", "param");
    wrap.append(el("span", undefined, param.name));
    const input = document.createElement("input");
    input.name = param.name;
    if (param.type === "boolean") {
      input.type = "checkbox";
    } else {
      input.type = "text";
      input.placeholder = param.constraint ?? param.type;
      if (param.value !== undefined) input.value = param.value;
    }
    inputs[param.name] = input;
    wrap.append(input);
    form.append(wrap);
  }
  const button = el("button", buttonClass, action.name) as HTMLButtonElement;
  button.type = "submit";
  const status = el("span", "invoke-status");
  form.append(button, status);

  form.addEventListener("submit", async (submitEvent) => {
    submitEvent.preventDefault();
    const raw: Record<string, string | boolean> = {};
    for (const [name, input] of Object.entries(inputs)) {
      raw[name] = input.type === "checkbox" ? input.checked : input.value;
    }
    const validated = validateArgs(action.params, raw);
    if (!validated.ok) {
      status.className = "invoke-status status-error";
      status.textContent = Object.entries(validated.errors)
        .map(([name, message]) => `${name}: ${message}`)
        .join("; ");
      return;
    }
    status.className = "invoke-status status-pending";
    status.textContent = "…";
    button.disabled = true;
    const outcome = await api.invoke(action.rpc_name, validated.args);
    button.disabled = false;
    if (outcome.status === "ok") {
      status.className = "invoke-status status-ok";
      status.textContent = "ok";
    } else if (outcome.status === "timeout") {
      status.className = "invoke-status status-timeout";
      status.textContent = "timeout";
    } else {
      status.className = "invoke-status status-error";
      status.textContent = outcome.detail;
    }
  });
  return form;
}

function renderEventLog(model: ViewModel): HTMLElement {
  const section = el("section", "event-log"); // yellow per the colour scheme
  section.append(el("h2", undefined, "Events"));
  const list = el("ul");
  for (const entry of model.eventLog.slice(0, 50)) {
    list.append(
      el("li", "event-entry", `#${entry.eventId} ${entry.device} ${entry.config}: ${entry.text}`),
    );
  }
  section.append(list);
  return section;
}

export function updateSensor(root: HTMLElement, uuid: string, sensor: string, text: string): void {
  const selector = `[data-uuid="${uuid}"] [data-sensor="${sensor}"]`;
  const node = root.querySelector(selector);
  if (node) node.textContent = text;
}
