// Pluggable widget machinery: every dashboard panel is a widget registered
// by kind, bound to one API query, refreshed on its own period.  New kinds
// plug in via registerWidget without touching existing ones.

import { CloudApi } from "./api.js";

export interface WidgetConfig {
  id: string;
  kind: string;
  refreshMs?: number;
  // kind-specific binding parameters (node, channels, group, field...)
  params: Record<string, unknown>;
}

export interface Widget {
  config: WidgetConfig;
  /** fetch from the bound endpoint and return the rendered HTML */
  render(api: CloudApi): Promise<string>;
}

export type WidgetFactory = (config: WidgetConfig) => Widget;

const factories = new Map<string, WidgetFactory>();

export function registerWidget(kind: string, factory: WidgetFactory): void {
  factories.set(kind, factory);
}

export function createWidget(config: WidgetConfig): Widget {
  const factory = factories.get(config.kind);
  if (!factory) throw new Error(`unknown widget kind: ${config.kind}`);
  return factory(config);
}

export function knownKinds(): string[] {
  return [...factories.keys()].sort();
}

export const DEFAULT_REFRESH_MS = 5000;
