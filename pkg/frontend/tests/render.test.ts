import { describe, expect, it } from "vitest";

import {
  behaviorIcon,
  polylinePoints,
  renderMapSvg,
  renderSeriesSvg,
} from "../src/render.js";

const WIDTH = 720;
const HEIGHT = 260;
const PAD = 42;

describe("series chart", () => {
  it("renders exactly the input points, recoverable through the axis scale", () => {
    const points = [
      { t: 0, value: 10.0 },
      { t: 300, value: 12.5 },
      { t: 600, value: 11.0 },
      { t: 900, value: 15.0 },
    ];
    const svg = renderSeriesSvg([{ label: "air_temp_1", points }]);
    const coords = polylinePoints(svg, "data-label", "air_temp_1");
    expect(coords).toHaveLength(points.length);

    // invert the display transform: the chart adds nothing and drops nothing
    const ts = points.map((p) => p.t);
    const vs = points.map((p) => p.value);
    const [t0, t1] = [Math.min(...ts), Math.max(...ts)];
    const [v0, v1] = [Math.min(...vs), Math.max(...vs)];
    coords.forEach(([x, y], i) => {
      const t = t0 + ((x - PAD) / (WIDTH - 2 * PAD)) * (t1 - t0);
      const v = v0 + ((HEIGHT - PAD - y) / (HEIGHT - 2 * PAD)) * (v1 - v0);
      expect(t).toBeCloseTo(points[i].t, 0);
      expect(v).toBeCloseTo(points[i].value, 1);
    });
  });

  it("overlays one polyline per replicate channel", () => {
    const mk = (shift: number) => [
      { t: 0, value: 10 + shift },
      { t: 300, value: 11 + shift },
    ];
    const svg = renderSeriesSvg([
      { label: "air_temp_1", points: mk(0) },
      { label: "air_temp_2", points: mk(0.3) },
      { label: "air_temp_3", points: mk(-0.2) },
    ]);
    expect(svg.match(/<polyline class="series"/g)).toHaveLength(3);
    expect(svg).toContain('data-label="air_temp_2"');
  });

  it("shows an empty state for a window with no data", () => {
    const svg = renderSeriesSvg([{ label: "x", points: [] }]);
    expect(svg).toContain("no data in window");
    expect(svg).not.toContain("<polyline");
  });

  it("keeps string-valued samples off the chart", () => {
    const svg = renderSeriesSvg([
      { label: "behavior", points: [{ t: 0, value: "walking" }, { t: 300, value: 1.0 }, { t: 600, value: 2.0 }] },
    ]);
    const coords = polylinePoints(svg, "data-label", "behavior");
    expect(coords).toHaveLength(2);
  });
});

describe("track map", () => {
  const track = (id: string, base: number) => ({
    nodeId: id,
    points: [
      { t: 0, lat: 53.001 + base, lon: -2.999 },
      { t: 300, lat: 53.002 + base, lon: -2.998 },
      { t: 600, lat: 53.003 + base, lon: -2.996 },
    ],
    behavior: "walking",
  });

  it("draws one ordered polyline per animal", () => {
    const svg = renderMapSvg([track("sheep-1", 0), track("sheep-2", 0.002)]);
    const p1 = polylinePoints(svg, "data-node", "sheep-1");
    const p2 = polylinePoints(svg, "data-node", "sheep-2");
    expect(p1).toHaveLength(3);
    expect(p2).toHaveLength(3);
    // timestamps ascend left-to-right here because lon increases with t
    expect(p1[0][0]).toBeLessThan(p1[2][0]);
  });

  it("marks the latest position with the behavior icon and raw label tooltip", () => {
    const svg = renderMapSvg([track("sheep-1", 0)]);
    const latest = svg.match(/<g class="latest"[^>]*>[\s\S]*?<\/g>/)![0];
    expect(latest).toContain(behaviorIcon("walking"));
    expect(latest).toContain("<title>walking</title>");
    // the marker sits on the newest point
    const coords = polylinePoints(svg, "data-node", "sheep-1");
    const last = coords[coords.length - 1];
    expect(latest).toContain(`cx="${last[0].toFixed(2)}"`);
  });

  it("renders the fence when provided", () => {
    const fence: [number, number][] = [
      [53.0, -3.0],
      [53.01, -3.0],
      [53.01, -2.98],
      [53.0, -2.98],
    ];
    const svg = renderMapSvg([track("sheep-1", 0.001)], fence);
    expect(polylinePoints(svg, "class", "fence")).toHaveLength(4);
  });

  it("shows an empty state without livestock", () => {
    expect(renderMapSvg([])).toContain("no tracks");
  });

  it("falls back to a placeholder icon for unknown labels", () => {
    expect(behaviorIcon("grazing")).toBe("?");
  });
});
