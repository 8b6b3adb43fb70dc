// Bridge HTTP API access. The fetch implementation is injectable so tests
// run without a server; the browser build uses the globals.

import type { BridgeState, RpcOutcome, UiSchema } from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class BridgeApi {
  constructor(
    private readonly base: string = "",
    private readonly fetchImpl: FetchLike = (...args) => fetch(...args),
  ) {}

  async schema(): Promise<UiSchema> {
    const response = await this.fetchImpl(`${this.base}/api/schema`);
    if (!response.ok) throw new Error(`schema fetch failed: HTTP ${response.status}`);
    return (await response.json()) as UiSchema;
  }

  async state(): Promise<BridgeState> {
    const response = await this.fetchImpl(`${this.base}/api/state`);
    if (!response.ok) throw new Error(`state fetch failed: HTTP ${response.status}`);
    return (await response.json()) as BridgeState;
  }

  /** POST an rpc invocation; outcomes ok / timeout / error map from HTTP. */
  async invoke(rpcName: string, args: Record<string, unknown>): Promise<RpcOutcome> {
    let response: Response;
    try {
      response = await this.fetchImpl(`${this.base}/api/rpc/${encodeURIComponent(rpcName)}`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(args),
      });
    } catch (error) {
      return { status: "error", detail: String(error) };
    }
    if (response.status === 200) {
      const body = (await response.json()) as { result?: unknown };
      return { status: "ok", detail: body.result };
    }
    if (response.status === 504) {
      return { status: "timeout" };
    }
    let detail = `HTTP ${response.status}`;
    try {
      const body = (await response.json()) as Record<string, unknown>;
      if (body.error) detail = `HTTP ${response.status}: ${body.error}`;
      else if (body.detail) detail = `HTTP ${response.status}: ${body.detail}`;
    } catch {
      // keep the bare status line
    }
    return { status: "error", detail };
  }

  eventsUrl(): string {
    return `${this.base}/api/events`;
  }
}
