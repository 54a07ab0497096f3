// Pure SVG rendering of series charts and track maps.  These functions do no
// aggregation or smoothing: every input point appears verbatim as a chart
// point, scaled for display only, so everything shown traces back to an API
// response.

import { Point } from "./wire.js";

export interface Series {
  label: string;
  points: Point[]; // numeric values only end up on charts
}

export interface ChartOptions {
  width?: number;
  height?: number;
  pad?: number;
}

const PALETTE = ["#4cc2ff", "#ffb454", "#7ee787", "#ff7b72", "#d2a8ff", "#f778ba"];

export function color(i: number): string {
  return PALETTE[i % PALETTE.length];
}

function extent(values: number[]): [number, number] {
  let lo = Math.min(...values);
  let hi = Math.max(...values);
  if (!Number.isFinite(lo) || !Number.isFinite(hi)) {
    lo = 0;
    hi = 1;
  }
  if (lo === hi) {
    lo -= 1;
    hi += 1;
  }
  return [lo, hi];
}

export function renderSeriesSvg(series: Series[], opts: ChartOptions = {}): string {
  const width = opts.width ?? 720;
  const height = opts.height ?? 260;
  const pad = opts.pad ?? 42;
  const numeric = series.map((s) => ({
    label: s.label,
    points: s.points.filter((p) => typeof p.value === "number") as { t: number; value: number }[],
  }));
  const all = numeric.flatMap((s) => s.points);
  if (!all.length) {
    return `<svg class="chart" viewBox="0 0 ${width} ${height}"><text x="${width / 2}" y="${height / 2}" text-anchor="middle" class="empty">no data in window</text></svg>`;
  }
  const [t0, t1] = extent(all.map((p) => p.t));
  const [v0, v1] = extent(all.map((p) => p.value));
  const sx = (t: number) => pad + ((t - t0) / (t1 - t0 || 1)) * (width - 2 * pad);
  const sy = (v: number) => height - pad - ((v - v0) / (v1 - v0 || 1)) * (height - 2 * pad);

  const parts: string[] = [];
  parts.push(`<svg class="chart" viewBox="0 0 ${width} ${height}">`);
  parts.push(`<rect class="chart-bg" x="${pad}" y="${pad}" width="${width - 2 * pad}" height="${height - 2 * pad}"/>`);
  numeric.forEach((s, i) => {
    if (!s.points.length) return;
    const coords = s.points.map((p) => `${sx(p.t).toFixed(2)},${sy(p.value).toFixed(2)}`).join(" ");
    parts.push(
      `<polyline class="series" data-label="${s.label}" data-n="${s.points.length}" fill="none" stroke="${color(i)}" points="${coords}"/>`,
    );
  });
  parts.push(`<text class="axis" x="${pad}" y="${height - pad + 16}">t=${t0}</text>`);
  parts.push(`<text class="axis" x="${width - pad}" y="${height - pad + 16}" text-anchor="end">t=${t1}</text>`);
  parts.push(`<text class="axis" x="${pad - 6}" y="${height - pad}" text-anchor="end">${fmt(v0)}</text>`);
  parts.push(`<text class="axis" x="${pad - 6}" y="${pad + 4}" text-anchor="end">${fmt(v1)}</text>`);
  numeric.forEach((s, i) => {
    parts.push(
      `<text class="legend" x="${pad + 8 + i * 120}" y="${pad - 8}" fill="${color(i)}">${s.label}</text>`,
    );
  });
  parts.push("</svg>");
  return parts.join("");
}

function fmt(v: number): string {
  return Math.abs(v) >= 100 ? v.toFixed(0) : v.toFixed(2);
}

export interface Track {
  nodeId: string;
  points: { t: number; lat: number; lon: number }[]; // ascending t
  behavior?: string; // latest label
}

export const BEHAVIOR_ICONS: Record<string, string> = {
  lying: "●", // filled circle: resting low
  standing: "▲", // triangle: upright
  walking: "➤", // arrow: moving
};

export function behaviorIcon(label: string): string {
  return BEHAVIOR_ICONS[label] ?? "?";
}

export function renderMapSvg(
  tracks: Track[],
  fence: [number, number][] | null = null,
  opts: ChartOptions = {},
): string {
  const width = opts.width ?? 720;
  const height = opts.height ?? 480;
  const pad = opts.pad ?? 30;
  const pts = tracks.flatMap((tr) => tr.points.map((p) => [p.lat, p.lon] as [number, number]));
  const boundary = fence ?? [];
  const allLat = [...pts.map((p) => p[0]), ...boundary.map((p) => p[0])];
  const allLon = [...pts.map((p) => p[1]), ...boundary.map((p) => p[1])];
  if (!allLat.length) {
    return `<svg class="map" viewBox="0 0 ${width} ${height}"><text x="${width / 2}" y="${height / 2}" text-anchor="middle" class="empty">no tracks</text></svg>`;
  }
  const [lat0, lat1] = extent(allLat);
  const [lon0, lon1] = extent(allLon);
  const sx = (lon: number) => pad + ((lon - lon0) / (lon1 - lon0 || 1)) * (width - 2 * pad);
  const sy = (lat: number) => height - pad - ((lat - lat0) / (lat1 - lat0 || 1)) * (height - 2 * pad);

  const parts: string[] = [];
  parts.push(`<svg class="map" viewBox="0 0 ${width} ${height}">`);
  if (boundary.length >= 3) {
    const coords = boundary.map(([la, lo]) => `${sx(lo).toFixed(2)},${sy(la).toFixed(2)}`).join(" ");
    parts.push(`<polygon class="fence" points="${coords}"/>`);
  }
  tracks.forEach((tr, i) => {
    if (!tr.points.length) return;
    const coords = tr.points.map((p) => `${sx(p.lon).toFixed(2)},${sy(p.lat).toFixed(2)}`).join(" ");
    parts.push(
      `<polyline class="track" data-node="${tr.nodeId}" data-n="${tr.points.length}" fill="none" stroke="${color(i)}" points="${coords}"/>`,
    );
    const last = tr.points[tr.points.length - 1];
    const icon = tr.behavior ? behaviorIcon(tr.behavior) : "•";
    parts.push(
      `<g class="latest" data-node="${tr.nodeId}"><circle cx="${sx(last.lon).toFixed(2)}" cy="${sy(last.lat).toFixed(2)}" r="6" fill="${color(i)}"/>` +
        `<text x="${(sx(last.lon) + 9).toFixed(2)}" y="${(sy(last.lat) + 4).toFixed(2)}" fill="${color(i)}">` +
        `${icon} ${tr.nodeId}<title>${tr.behavior ?? "no behavior label"}</title></text></g>`,
    );
  });
  parts.push("</svg>");
  return parts.join("");
}

// test-support: pull the numeric coordinate pairs back out of a rendered svg
export function polylinePoints(svg: string, selectorAttr: string, value: string): number[][] {
  const re = new RegExp(`<poly(?:line|gon)[^>]*${selectorAttr}="${value}"[^>]*points="([^"]*)"`);
  const m = svg.match(re);
  if (!m) return [];
  return m[1]
    .split(" ")
    .filter((s) => s.length)
    .map((pair) => pair.split(",").map(Number));
}
