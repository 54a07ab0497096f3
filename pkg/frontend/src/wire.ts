// Line-delimited record grammar of the cloud API: single-space fields in a
// fixed order, first token is the record type, `-` marks an absent value,
// free text (notes, error messages) is always the trailing field.

export interface StatusSummary {
  nodes: number;
  soil: number;
  livestock: number;
  observations: number;
  quarantine: number;
  silent: number;
  now: number;
}

export interface NodeInfo {
  nodeId: string;
  kind: string;
  lat: number;
  lon: number;
  periodS: number;
  groups: string[];
  registeredT: number;
}

export interface ChannelInfo {
  channelId: string;
  kind: string;
  grade: string;
  noiseSigma: number;
  mountCm: number;
}

export interface NodeDetail extends NodeInfo {
  channels: ChannelInfo[];
  notes: string;
  edits: number;
}

export interface Health {
  nodeId: string;
  lastHeard: number | null;
  batteryMv: number | null;
  silent: boolean;
}

export interface Point {
  t: number;
  value: number | string;
}

export interface CommandStatus {
  nodeId: string;
  periodS: number | null;
  issuedT: number;
  status: string; // staged | delivered
}

export class WireParseError extends Error {}

function fields(line: string): string[] {
  return line.split(" ");
}

export function parseStatus(line: string): StatusSummary {
  const f = fields(line.trim());
  if (f[0] !== "status") throw new WireParseError(`not a status record: ${line}`);
  const get = (name: string) => {
    const i = f.indexOf(name);
    if (i < 0 || i + 1 >= f.length) throw new WireParseError(`status missing ${name}`);
    return Number(f[i + 1]);
  };
  return {
    nodes: get("nodes"),
    soil: get("soil"),
    livestock: get("livestock"),
    observations: get("observations"),
    quarantine: get("quarantine"),
    silent: get("silent"),
    now: get("now"),
  };
}

export function parseNodeLine(line: string): NodeInfo {
  const f = fields(line);
  if (f[0] !== "node" || f.length !== 8) throw new WireParseError(`bad node record: ${line}`);
  return {
    nodeId: f[1],
    kind: f[2],
    lat: Number(f[3]),
    lon: Number(f[4]),
    periodS: Number(f[5]),
    groups: f[6] === "-" ? [] : f[6].split(","),
    registeredT: Number(f[7]),
  };
}

export function parseNodes(body: string): NodeInfo[] {
  return body
    .split("\n")
    .filter((l) => l.trim().length > 0)
    .map(parseNodeLine);
}

export function parseNodeDetail(body: string): NodeDetail {
  const lines = body.split("\n").filter((l) => l.trim().length > 0);
  let node: NodeInfo | null = null;
  const channels: ChannelInfo[] = [];
  let notes = "";
  let edits = 0;
  for (const line of lines) {
    const f = fields(line);
    if (f[0] === "node") {
      node = parseNodeLine(line);
    } else if (f[0] === "channel") {
      if (f.length !== 6) throw new WireParseError(`bad channel record: ${line}`);
      channels.push({
        channelId: f[1],
        kind: f[2],
        grade: f[3],
        noiseSigma: Number(f[4]),
        mountCm: Number(f[5]),
      });
    } else if (f[0] === "notes") {
      notes = line.slice("notes ".length);
    } else if (f[0] === "edits") {
      edits = Number(f[1]);
    } else {
      throw new WireParseError(`unexpected record: ${line}`);
    }
  }
  if (!node) throw new WireParseError("missing node record");
  return { ...node, channels, notes, edits };
}

export function parseHealthLine(line: string): Health {
  const f = fields(line.trim());
  if (f[0] !== "health" || f.length !== 5) throw new WireParseError(`bad health record: ${line}`);
  return {
    nodeId: f[1],
    lastHeard: f[2] === "never" ? null : Number(f[2]),
    batteryMv: f[3] === "none" ? null : Number(f[3]),
    silent: f[4] === "1",
  };
}

export function parseHealthLines(body: string): Health[] {
  return body
    .split("\n")
    .filter((l) => l.trim().length > 0)
    .map(parseHealthLine);
}

export function parsePoints(body: string): Point[] {
  const out: Point[] = [];
  for (const line of body.split("\n")) {
    if (!line.trim()) continue;
    const f = fields(line);
    if (f[0] !== "point" || f.length !== 3) throw new WireParseError(`bad point record: ${line}`);
    const numeric = Number(f[2]);
    out.push({ t: Number(f[1]), value: Number.isNaN(numeric) ? f[2] : numeric });
  }
  return out;
}

export function parseCommands(body: string): CommandStatus[] {
  const out: CommandStatus[] = [];
  for (const line of body.split("\n")) {
    if (!line.trim()) continue;
    const f = fields(line);
    if (f[0] !== "command" || f.length !== 5) throw new WireParseError(`bad command record: ${line}`);
    out.push({
      nodeId: f[1],
      periodS: f[2] === "-" ? null : Number(f[2]),
      issuedT: Number(f[3]),
      status: f[4],
    });
  }
  return out;
}

export function parseErrorLine(body: string): string {
  const line = body.split("\n")[0] ?? "";
  return line.startsWith("error ") ? line.slice("error ".length) : line;
}

// -- request encoding ---------------------------------------------------------

export interface Registration {
  nodeId: string;
  kind: string;
  lat: number;
  lon: number;
  periodS: number;
  groups: string[];
  notes?: string;
  channels?: ChannelInfo[];
}

export function encodeRegistration(r: Registration): string {
  const groups = r.groups.length ? r.groups.join(",") : "-";
  const lines = [`node ${r.nodeId} ${r.kind} ${r.lat} ${r.lon} ${r.periodS} ${groups} 0`];
  for (const c of r.channels ?? []) {
    lines.push(`channel ${c.channelId} ${c.kind} ${c.grade} ${c.noiseSigma} ${c.mountCm}`);
  }
  if (r.notes) lines.push(`notes ${r.notes}`);
  return lines.join("\n") + "\n";
}

export function encodePatch(patch: {
  position?: [number, number];
  groups?: string[];
  periodS?: number;
  notes?: string;
}): string {
  const lines: string[] = [];
  if (patch.position) lines.push(`set position ${patch.position[0]} ${patch.position[1]}`);
  if (patch.groups) lines.push(`set groups ${patch.groups.length ? patch.groups.join(",") : "-"}`);
  if (patch.periodS !== undefined) lines.push(`set period_s ${patch.periodS}`);
  if (patch.notes !== undefined) lines.push(`set notes ${patch.notes}`);
  if (!lines.length) throw new WireParseError("empty patch");
  return lines.join("\n") + "\n";
}

export function encodeRate(periodS: number): string {
  return `period_s ${periodS}\n`;
}
