// Thin client for the cloud API.  Every mutation goes through one of the
// documented endpoints; server rejections are surfaced verbatim via ApiError.

import {
  CommandStatus,
  Health,
  NodeDetail,
  NodeInfo,
  Point,
  Registration,
  StatusSummary,
  encodePatch,
  encodeRate,
  encodeRegistration,
  parseCommands,
  parseErrorLine,
  parseHealthLine,
  parseHealthLines,
  parseNodeDetail,
  parseNodes,
  parsePoints,
  parseStatus,
} from "./wire.js";

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class CloudApi {
  lastSuccess: number | null = null; // Date.now() of the last good response

  constructor(private base: string = "") {}

  private async request(method: string, path: string, body?: string): Promise<string> {
    const resp = await fetch(this.base + path, {
      method,
      body,
      headers: body !== undefined ? { "Content-Type": "text/plain" } : undefined,
    });
    const text = await resp.text();
    if (!resp.ok) {
      throw new ApiError(resp.status, parseErrorLine(text));
    }
    this.lastSuccess = Date.now();
    return text;
  }

  status(): Promise<StatusSummary> {
    return this.request("GET", "/status").then(parseStatus);
  }

  nodes(): Promise<NodeInfo[]> {
    return this.request("GET", "/nodes").then(parseNodes);
  }

  nodeDetail(nodeId: string): Promise<NodeDetail> {
    return this.request("GET", `/nodes/${encodeURIComponent(nodeId)}`).then(parseNodeDetail);
  }

  health(nodeId: string): Promise<Health> {
    return this.request("GET", `/nodes/${encodeURIComponent(nodeId)}/health`).then(parseHealthLine);
  }

  silent(): Promise<Health[]> {
    return this.request("GET", "/health/silent").then(parseHealthLines);
  }

  series(nodeId: string, channel: string, from: number, to: number): Promise<Point[]> {
    const q = `node=${encodeURIComponent(nodeId)}&channel=${encodeURIComponent(channel)}&from=${from}&to=${to}`;
    return this.request("GET", `/series?${q}`).then(parsePoints);
  }

  commands(group: string): Promise<CommandStatus[]> {
    return this.request("GET", `/groups/${encodeURIComponent(group)}/commands`).then(parseCommands);
  }

  setGroupRate(group: string, periodS: number): Promise<string[]> {
    return this.request("POST", `/groups/${encodeURIComponent(group)}/rate`, encodeRate(periodS)).then(
      (body) =>
        body
          .split("\n")
          .filter((l) => l.startsWith("node "))
          .map((l) => l.slice("node ".length)),
    );
  }

  registerNode(r: Registration): Promise<void> {
    return this.request("POST", "/nodes", encodeRegistration(r)).then(() => undefined);
  }

  updateNode(nodeId: string, patch: Parameters<typeof encodePatch>[0]): Promise<void> {
    return this.request("PATCH", `/nodes/${encodeURIComponent(nodeId)}`, encodePatch(patch)).then(
      () => undefined,
    );
  }

  exportSemantic(nodeId: string, seq: number): Promise<string> {
    return this.request("GET", `/export/semantic?node=${encodeURIComponent(nodeId)}&seq=${seq}`);
  }
}
