// Console shell: hash routing between the dashboards, per-widget polling,
// the offline banner, and form submission wiring for the manage view.

import { ApiError, CloudApi } from "./api.js";
import { DEFAULT_REFRESH_MS, WidgetConfig, createWidget } from "./registry.js";
import { esc, fmtSimTime } from "./widgets.js";
import {
  WEEK_S,
  channelKinds,
  manageWidgets,
  operationsWidgets,
  replicateChannels,
  sensingByKind,
  sheepWidget,
  soilNodes,
  soilWidget,
} from "./views.js";
import { buildPatch, parseGroups, validateRate, validateRegistration } from "./validation.js";

const api = new CloudApi("..");  // served at /ui/, API at the origin root

let timers: number[] = [];

function clearTimers(): void {
  for (const t of timers) window.clearInterval(t);
  timers = [];
}

function mountWidget(container: HTMLElement, config: WidgetConfig): void {
  const card = document.createElement("div");
  card.className = "card";
  card.dataset.widget = config.id;
  card.innerHTML = `<p class="muted">loading…</p>`;
  container.appendChild(card);
  const widget = createWidget(config);

  const refresh = async () => {
    try {
      card.innerHTML = await widget.render(api);
      card.classList.remove("stale");
    } catch (err) {
      // keep the last good data on screen, marked stale; surface the reason
      card.classList.add("stale");
      card.title = err instanceof Error ? err.message : String(err);
    }
    updateBanner();
  };
  void refresh();
  const period = config.refreshMs ?? DEFAULT_REFRESH_MS;
  if (period > 0) timers.push(window.setInterval(refresh, period));
}

function updateBanner(): void {
  const banner = document.getElementById("offline-banner")!;
  const ageMs = api.lastSuccess === null ? Infinity : Date.now() - api.lastSuccess;
  if (ageMs > 2.5 * DEFAULT_REFRESH_MS) {
    banner.textContent =
      api.lastSuccess === null
        ? "cloud API unreachable — no data received yet"
        : `cloud API unreachable — data stale for ${Math.round(ageMs / 1000)} s`;
    banner.classList.add("visible");
    document.body.classList.add("offline");
  } else {
    banner.classList.remove("visible");
    document.body.classList.remove("offline");
  }
}

// -- views ------------------------------------------------------------------

async function showOperations(root: HTMLElement): Promise<void> {
  root.innerHTML = `<div class="tiles" id="ops-tiles"></div><div id="ops-sensing" class="card"></div><div id="ops-table"></div>`;
  const tiles = document.getElementById("ops-tiles")!;
  const table = document.getElementById("ops-table")!;
  for (const config of operationsWidgets()) {
    mountWidget(config.kind === "count-tile" ? tiles : table, config);
  }
  const sensing = document.getElementById("ops-sensing")!;
  try {
    const nodes = await api.nodes();
    const details = await Promise.all(nodes.map((n) => api.nodeDetail(n.nodeId)));
    const byKind = sensingByKind(details);
    sensing.innerHTML =
      "<h3>reading kinds</h3>" +
      [...byKind.entries()]
        .map(([kind, kinds]) => `<p><b>${esc(kind)}</b>: ${kinds.map(esc).join(", ")}</p>`)
        .join("");
  } catch {
    sensing.innerHTML = `<p class="empty">reading kinds unavailable</p>`;
  }
}

async function showSoil(root: HTMLElement): Promise<void> {
  root.innerHTML = `<div class="card" id="soil-controls"></div><div id="soil-chart-slot"></div>`;
  const controls = document.getElementById("soil-controls")!;
  const slot = document.getElementById("soil-chart-slot")!;
  let nodes;
  try {
    nodes = soilNodes(await api.nodes());
  } catch (err) {
    controls.innerHTML = `<p class="error">${esc(err instanceof Error ? err.message : String(err))}</p>`;
    return;
  }
  if (!nodes.length) {
    controls.innerHTML = `<p class="empty">no soil nodes registered</p>`;
    return;
  }
  controls.innerHTML =
    `<label>node <select id="soil-node">${nodes.map((n) => `<option>${esc(n.nodeId)}</option>`).join("")}</select></label>` +
    `<label>channel kind <select id="soil-kind"></select></label>` +
    `<label>window <select id="soil-window">` +
    `<option value="86400">1 day</option><option value="604800" selected>1 week</option>` +
    `<option value="1209600">2 weeks</option></select></label>`;

  const nodeSel = document.getElementById("soil-node") as HTMLSelectElement;
  const kindSel = document.getElementById("soil-kind") as HTMLSelectElement;
  const windowSel = document.getElementById("soil-window") as HTMLSelectElement;

  const rebuild = async () => {
    clearTimers();
    let detail;
    try {
      detail = await api.nodeDetail(nodeSel.value);
    } catch (err) {
      slot.innerHTML = `<p class="error">${esc(err instanceof Error ? err.message : String(err))}</p>`;
      return;
    }
    const kinds = channelKinds(detail.channels);
    if (!kindSel.options.length) {
      kindSel.innerHTML = kinds.map((k) => `<option>${esc(k)}</option>`).join("");
      if (kinds.includes("air_temp")) kindSel.value = "air_temp";
    }
    const channels = replicateChannels(detail.channels, kindSel.value);
    slot.innerHTML = "";
    mountWidget(slot, soilWidget(nodeSel.value, channels, Number(windowSel.value)));
  };
  nodeSel.onchange = rebuild;
  kindSel.onchange = rebuild;
  windowSel.onchange = rebuild;
  await rebuild();
}

function showSheep(root: HTMLElement): void {
  root.innerHTML = `<div id="sheep-slot"></div><p class="muted">markers show the latest fix; the icon is the animal's last behavior label (hover for the raw label)</p>`;
  mountWidget(document.getElementById("sheep-slot")!, sheepWidget(WEEK_S));
}

async function showManage(root: HTMLElement): Promise<void> {
  root.innerHTML = `<div class="forms" id="manage-forms"></div><div class="card" id="manage-status"><h3>command staging</h3><div id="command-status"><p class="muted">stage a rate change to follow its delivery</p></div></div>`;
  const forms = document.getElementById("manage-forms")!;
  for (const config of manageWidgets()) mountWidget(forms, config);
  forms.addEventListener("submit", (ev) => void onFormSubmit(ev));
}

let watchedGroup: string | null = null;

async function onFormSubmit(ev: Event): Promise<void> {
  ev.preventDefault();
  const form = ev.target as HTMLFormElement;
  const errorsEl = form.querySelector('[data-role="errors"]')!;
  const resultEl = form.querySelector('[data-role="result"]')!;
  errorsEl.textContent = "";
  resultEl.textContent = "";
  const value = (name: string) => (form.elements.namedItem(name) as HTMLInputElement).value;

  if (form.dataset.form === "rate") {
    const group = value("group");
    const period = Number(value("period"));
    const errors = validateRate(period);
    if (Object.keys(errors).length) {
      errorsEl.textContent = Object.values(errors).join("; ");
      return; // invalid input never reaches the API
    }
    try {
      const staged = await api.setGroupRate(group, period);
      resultEl.textContent = `staged ${staged.length} commands: ${staged.join(", ")}`;
      watchedGroup = group;
      void refreshCommandStatus();
    } catch (err) {
      errorsEl.textContent = err instanceof ApiError ? err.message : String(err);
    }
  } else if (form.dataset.form === "edit") {
    const { patch, errors } = buildPatch({
      lat: value("lat"),
      lon: value("lon"),
      period: value("period"),
      groups: value("groups"),
      notes: value("notes"),
    });
    if (Object.keys(errors).length) {
      errorsEl.textContent = Object.values(errors).join("; ");
      return;
    }
    try {
      await api.updateNode(value("nodeId"), patch);
      resultEl.textContent = `updated ${value("nodeId")}`;
    } catch (err) {
      errorsEl.textContent = err instanceof ApiError ? err.message : String(err);
    }
  } else {
    const input = {
      nodeId: value("nodeId"),
      kind: value("kind"),
      lat: Number(value("lat")),
      lon: Number(value("lon")),
      periodS: Number(value("period")),
    };
    const errors = validateRegistration(input);
    if (Object.keys(errors).length) {
      errorsEl.textContent = Object.values(errors).join("; ");
      return;
    }
    try {
      await api.registerNode({
        ...input,
        periodS: input.periodS,
        groups: parseGroups(value("groups")),
        notes: value("notes") || undefined,
      });
      resultEl.textContent = `registered ${input.nodeId}`;
    } catch (err) {
      errorsEl.textContent = err instanceof ApiError ? err.message : String(err);
    }
  }
}

async function refreshCommandStatus(): Promise<void> {
  const el = document.getElementById("command-status");
  if (!el || watchedGroup === null) return;
  try {
    const commands = await api.commands(watchedGroup);
    el.innerHTML =
      `<table class="health"><thead><tr><th>node</th><th>period</th><th>issued</th><th>status</th></tr></thead><tbody>` +
      commands
        .map(
          (c) =>
            `<tr class="${c.status}"><td>${esc(c.nodeId)}</td><td>${c.periodS ?? "-"} s</td>` +
            `<td>${fmtSimTime(c.issuedT)}</td><td>${esc(c.status)}</td></tr>`,
        )
        .join("") +
      `</tbody></table>`;
  } catch (err) {
    el.innerHTML = `<p class="error">${esc(err instanceof Error ? err.message : String(err))}</p>`;
  }
}

// -- routing -------------------------------------------------------------------

const VIEWS: Record<string, (root: HTMLElement) => void | Promise<void>> = {
  "#/ops": showOperations,
  "#/soil": showSoil,
  "#/sheep": showSheep,
  "#/manage": showManage,
};

function route(): void {
  clearTimers();
  const hash = window.location.hash || "#/ops";
  const root = document.getElementById("view")!;
  document.querySelectorAll("nav a").forEach((link) => {
    link.classList.toggle("active", link.getAttribute("href") === hash);
  });
  const view = VIEWS[hash] ?? showOperations;
  void view(root);
}

export function start(): void {
  window.addEventListener("hashchange", route);
  // global timers live outside the per-view pool that route() clears
  window.setInterval(updateBanner, 2000);
  window.setInterval(() => void refreshCommandStatus(), DEFAULT_REFRESH_MS);
  route();
}

start();
