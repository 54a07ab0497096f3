// View compositions: each dashboard is a list of widget configs plus a few
// pure helpers the app wires to selectors and forms.

import { WidgetConfig } from "./registry.js";
import { ChannelInfo, NodeDetail, NodeInfo } from "./wire.js";

export const WEEK_S = 604800;

export function operationsWidgets(): WidgetConfig[] {
  return [
    { id: "tile-soil", kind: "count-tile", params: { field: "soil", label: "soil nodes" } },
    { id: "tile-livestock", kind: "count-tile", params: { field: "livestock", label: "sheep trackers" } },
    { id: "tile-obs", kind: "count-tile", params: { field: "observations", label: "observations" } },
    { id: "tile-silent", kind: "count-tile", params: { field: "silent", label: "silent nodes" } },
    { id: "tile-quarantine", kind: "count-tile", params: { field: "quarantine", label: "quarantined" } },
    { id: "ops-health", kind: "health-table", params: {} },
  ];
}

export function soilWidget(node: string, channels: string[], windowS: number): WidgetConfig {
  return { id: "soil-chart", kind: "time-series", params: { node, channels, windowS } };
}

export function sheepWidget(windowS: number = WEEK_S): WidgetConfig {
  return { id: "sheep-map", kind: "map-track", params: { windowS } };
}

export function manageWidgets(): WidgetConfig[] {
  return [
    { id: "form-rate", kind: "control-form", refreshMs: 0, params: { form: "rate" } },
    { id: "form-register", kind: "control-form", refreshMs: 0, params: { form: "register" } },
    { id: "form-edit", kind: "control-form", refreshMs: 0, params: { form: "edit" } },
  ];
}

/** distinct reading kinds per node type, for the operations view */
export function sensingByKind(details: NodeDetail[]): Map<string, string[]> {
  const out = new Map<string, Set<string>>();
  for (const d of details) {
    const bucket = out.get(d.kind) ?? new Set<string>();
    for (const c of d.channels) bucket.add(c.kind);
    out.set(d.kind, bucket);
  }
  return new Map([...out.entries()].map(([k, v]) => [k, [...v].sort()]));
}

/** replicate channel ids of the selected kind, so replicates overlay */
export function replicateChannels(channels: ChannelInfo[], kind: string): string[] {
  const ids = channels.filter((c) => c.kind === kind).map((c) => c.channelId);
  if (kind === "gps") return ["gps_lat", "gps_lon"];
  return ids;
}

export function soilNodes(nodes: NodeInfo[]): NodeInfo[] {
  return nodes.filter((n) => n.kind === "soil");
}

export function channelKinds(channels: ChannelInfo[]): string[] {
  return [...new Set(channels.map((c) => c.kind))].sort();
}
