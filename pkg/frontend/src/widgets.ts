// The five built-in widget kinds: count-tile, time-series, map-track,
// health-table, control-form.  Each binds to one documented endpoint and
// renders HTML; no sensor value is transformed beyond display scaling.

import { CloudApi } from "./api.js";
import { Series, Track, renderMapSvg, renderSeriesSvg } from "./render.js";
import { Widget, WidgetConfig, registerWidget } from "./registry.js";
import { Health, NodeInfo } from "./wire.js";

export function esc(text: string): string {
  return text.replace(/[&<>"']/g, (c) => `&#${c.charCodeAt(0)};`);
}

export function fmtSimTime(t: number | null): string {
  if (t === null) return "never";
  const d = Math.floor(t / 86400);
  const h = Math.floor((t % 86400) / 3600);
  const m = Math.floor((t % 3600) / 60);
  const s = Math.floor(t % 60);
  const pad = (n: number) => String(n).padStart(2, "0");
  return `${d}d ${pad(h)}:${pad(m)}:${pad(s)}`;
}

// -- count-tile -------------------------------------------------------------

registerWidget("count-tile", (config: WidgetConfig): Widget => {
  const field = String(config.params.field ?? "nodes");
  const label = String(config.params.label ?? field);
  return {
    config,
    async render(api: CloudApi): Promise<string> {
      const status = await api.status();
      const value = (status as unknown as Record<string, number>)[field];
      return `<div class="tile"><div class="tile-value" data-field="${esc(field)}">${value}</div><div class="tile-label">${esc(label)}</div></div>`;
    },
  };
});

// -- time-series ----------------------------------------------------------------

registerWidget("time-series", (config: WidgetConfig): Widget => {
  const node = String(config.params.node);
  const channels = (config.params.channels as string[]) ?? [];
  const windowS = Number(config.params.windowS ?? 604800); // default one week
  return {
    config,
    async render(api: CloudApi): Promise<string> {
      const status = await api.status();
      const to = status.now;
      const from = Math.max(0, to - windowS);
      const series: Series[] = [];
      for (const channel of channels) {
        series.push({ label: channel, points: await api.series(node, channel, from, to) });
      }
      const total = series.reduce((n, s) => n + s.points.length, 0);
      return (
        `<div class="chart-head">${esc(node)} — ${series.map((s) => esc(s.label)).join(", ")} ` +
        `<span class="muted">(${total} points, window ${fmtSimTime(from)} … ${fmtSimTime(to)})</span></div>` +
        renderSeriesSvg(series)
      );
    },
  };
});

// -- map-track ----------------------------------------------------------------------

registerWidget("map-track", (config: WidgetConfig): Widget => {
  const windowS = Number(config.params.windowS ?? 604800);
  return {
    config,
    async render(api: CloudApi): Promise<string> {
      const [status, nodes] = await Promise.all([api.status(), api.nodes()]);
      const to = status.now;
      const from = Math.max(0, to - windowS);
      const livestock = nodes.filter((n) => n.kind === "livestock");
      const tracks: Track[] = [];
      for (const animal of livestock) {
        const [lats, lons, behavior] = await Promise.all([
          api.series(animal.nodeId, "gps_lat", from, to),
          api.series(animal.nodeId, "gps_lon", from, to),
          api.series(animal.nodeId, "behavior", from, to),
        ]);
        const byT = new Map(lons.map((p) => [p.t, p.value as number]));
        const points = lats
          .filter((p) => byT.has(p.t))
          .map((p) => ({ t: p.t, lat: p.value as number, lon: byT.get(p.t) as number }));
        tracks.push({
          nodeId: animal.nodeId,
          points,
          behavior: behavior.length ? String(behavior[behavior.length - 1].value) : undefined,
        });
      }
      const head = `<div class="chart-head">${livestock.length} tracked animals <span class="muted">(window ${fmtSimTime(from)} … ${fmtSimTime(to)})</span></div>`;
      return head + renderMapSvg(tracks);
    },
  };
});

// -- health-table -------------------------------------------------------------------------

export function healthRow(node: NodeInfo, health: Health): string {
  const cls = health.silent ? "silent" : "reporting";
  const mv = health.batteryMv === null ? "-" : `${health.batteryMv} mV`;
  return (
    `<tr class="${cls}" data-node="${esc(node.nodeId)}">` +
    `<td>${esc(node.nodeId)}</td><td>${esc(node.kind)}</td>` +
    `<td>${esc(node.groups.join(", ") || "-")}</td>` +
    `<td>${node.periodS} s</td>` +
    `<td>${fmtSimTime(health.lastHeard)}</td><td>${mv}</td>` +
    `<td class="status">${health.silent ? "SILENT" : "reporting"}</td></tr>`
  );
}

registerWidget("health-table", (config: WidgetConfig): Widget => {
  return {
    config,
    async render(api: CloudApi): Promise<string> {
      const nodes = await api.nodes();
      const rows: string[] = [];
      for (const node of nodes) {
        rows.push(healthRow(node, await api.health(node.nodeId)));
      }
      if (!rows.length) return `<p class="empty">no nodes registered yet</p>`;
      return (
        `<table class="health"><thead><tr><th>node</th><th>kind</th><th>groups</th>` +
        `<th>period</th><th>last heard</th><th>battery</th><th>status</th></tr></thead>` +
        `<tbody>${rows.join("")}</tbody></table>`
      );
    },
  };
});

// -- control-form ----------------------------------------------------------------------------

// Renders the operator forms; submission wiring lives in the manage view,
// which routes everything through the documented mutation endpoints.
registerWidget("control-form", (config: WidgetConfig): Widget => {
  const which = String(config.params.form ?? "rate");
  return {
    config,
    async render(api: CloudApi): Promise<string> {
      if (which === "rate") {
        const nodes = await api.nodes();
        const groups = [...new Set(nodes.flatMap((n) => n.groups))].sort();
        const options = groups.map((g) => `<option value="${esc(g)}">${esc(g)}</option>`).join("");
        return (
          `<form class="control" data-form="rate">` +
          `<h3>group sampling rate</h3>` +
          `<label>group <select name="group">${options}</select></label>` +
          `<label>period (s) <input name="period" type="number" value="600"></label>` +
          `<button type="submit">stage command</button>` +
          `<div class="form-errors" data-role="errors"></div>` +
          `<div data-role="result"></div></form>`
        );
      }
      if (which === "edit") {
        const nodes = await api.nodes();
        const options = nodes.map((n) => `<option>${esc(n.nodeId)}</option>`).join("");
        return (
          `<form class="control" data-form="edit">` +
          `<h3>edit node</h3>` +
          `<label>node <select name="nodeId">${options}</select></label>` +
          `<label>lat <input name="lat" placeholder="unchanged"></label>` +
          `<label>lon <input name="lon" placeholder="unchanged"></label>` +
          `<label>period (s) <input name="period" placeholder="unchanged"></label>` +
          `<label>groups <input name="groups" placeholder="unchanged"></label>` +
          `<label>notes <input name="notes" placeholder="unchanged"></label>` +
          `<button type="submit">apply edit</button>` +
          `<div class="form-errors" data-role="errors"></div>` +
          `<div data-role="result"></div></form>`
        );
      }
      return (
        `<form class="control" data-form="register">` +
        `<h3>register node</h3>` +
        `<label>id <input name="nodeId" placeholder="soil-5"></label>` +
        `<label>kind <select name="kind"><option>soil</option><option>livestock</option></select></label>` +
        `<label>lat <input name="lat" type="number" step="0.0001" value="53.005"></label>` +
        `<label>lon <input name="lon" type="number" step="0.0001" value="-2.99"></label>` +
        `<label>period (s) <input name="period" type="number" value="305"></label>` +
        `<label>groups <input name="groups" placeholder="soil,riverside"></label>` +
        `<label>notes <input name="notes"></label>` +
        `<button type="submit">register</button>` +
        `<div class="form-errors" data-role="errors"></div>` +
        `<div data-role="result"></div></form>`
      );
    },
  };
});
