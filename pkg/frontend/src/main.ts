// Boot: fetch schema and state, render, then follow the live event stream.
// The bridge is the single source of truth; nothing is persisted here.

import { BridgeApi } from "./api.js";
import { render } from "./dom.js";
import {
  applyEvent,
  applyState,
  emptyModel,
  rebuildModel,
  ViewModel,
} from "./viewmodel.js";
import type { LiveEvent } from "./types.js";

const RETRY_DELAY_MS = 3000;

const api = new BridgeApi("");
let model: ViewModel = emptyModel();

const root = document.getElementById("app") as HTMLElement;
const banner = document.getElementById("banner") as HTMLElement;

function showBanner(text: string): void {
  banner.textContent = text;
  banner.hidden = false;
}

function hideBanner(): void {
  banner.hidden = true;
}

async function loadAll(): Promise<void> {
  try {
    const schema = await api.schema();
    model = rebuildModel(model, schema);
    applyState(model, await api.state());
    hideBanner();
    render(root, model, api);
  } catch (error) {
    showBanner(`Bridge unreachable (${String(error)}); retrying…`);
    setTimeout(loadAll, RETRY_DELAY_MS);
  }
}

function followEvents(): void {
  const source = new EventSource(api.eventsUrl());
  const kinds: LiveEvent["kind"][] = ["sensor", "actuator", "config-event", "device"];
  for (const kind of kinds) {
    source.addEventListener(kind, (raw) => {
      const message = raw as MessageEvent<string>;
      const event: LiveEvent = {
        id: Number(message.lastEventId || 0),
        kind,
        data: JSON.parse(message.data),
      };
      if (!applyEvent(model, event)) {
        return; // duplicate delivery after a reconnect
      }
      if (model.needsSchemaRefresh) {
        void loadAll();
      } else {
        render(root, model, api);
      }
    });
  }
  source.onerror = () => {
    showBanner("Event stream interrupted; the browser is reconnecting…");
  };
  source.onopen = () => {
    hideBanner();
    // pick up anything missed while disconnected
    void loadAll();
  };
}

void loadAll();
followEvents();
