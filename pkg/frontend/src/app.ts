import { ApiClient, resolveApiBase } from "./api.js";
import { computeLayout, drawChart, SERIES, type SeriesKey } from "./chart.js";
import { checkSamplingInput, CommandDesk, GROUP_OF } from "./controls.js";
import { formatAgo, formatWatts, wireIdToText } from "./format.js";
import { DashboardStore } from "./store.js";
import type { CommandOp, Ticket } from "./types.js";

const WINDOWS: Array<[label: string, ms: number]> = [
  ["60 s", 60_000],
  ["5 min", 300_000],
  ["30 min", 1_800_000],
];

const DEFAULT_ENABLED: SeriesKey[] = ["p"];

export interface AppHandles {
  store: DashboardStore;
  desk: CommandDesk;
  poll: () => Promise<void>;
  stop: () => void;
}

/**
 * Mount the dashboard into `root` and start polling. Returns handles so a
 * hosting page (or a test) can drive or stop it.
 */
export function mountDashboard(
  root: HTMLElement,
  client: ApiClient,
  pollIntervalMs = 1000,
): AppHandles {
  const store = new DashboardStore(client);
  const desk = new CommandDesk(client);
  const enabled = new Set<SeriesKey>(DEFAULT_ENABLED);

  root.innerHTML = `
    <header>
      <h1>meter fleet</h1>
      <span id="health-chip" class="chip">connecting…</span>
    </header>
    <div id="stale-banner" class="banner hidden">
      coordinator unreachable — showing last known data
    </div>
    <div class="columns">
      <aside>
        <h2>meters</h2>
        <ul id="meter-list"></ul>
      </aside>
      <main>
        <div class="chart-bar">
          <span id="series-toggles"></span>
          <select id="window-select" title="time window"></select>
        </div>
        <canvas id="chart" width="760" height="300"></canvas>
        <section id="controls" class="controls">
          <fieldset>
            <legend>load</legend>
            <button id="btn-switch-on" data-op="switch_on">switch on</button>
            <button id="btn-switch-off" data-op="switch_off">switch off</button>
          </fieldset>
          <fieldset>
            <legend>meter</legend>
            <button id="btn-sleep" data-op="sleep">sleep</button>
            <button id="btn-wake" data-op="wake">wake</button>
          </fieldset>
          <fieldset>
            <legend>sampling</legend>
            <input id="fs-input" type="number" min="1" step="1" placeholder="Hz" />
            <button id="btn-set-fs">apply f_s</button>
          </fieldset>
        </section>
        <p id="control-message" class="message"></p>
        <ul id="ticket-log" class="tickets"></ul>
      </main>
    </div>
  `;

  const el = <T extends HTMLElement>(id: string) =>
    root.querySelector<T>(`#${id}`) as T;
  const meterList = el<HTMLUListElement>("meter-list");
  const canvas = el<HTMLCanvasElement>("chart");
  const staleBanner = el<HTMLElement>("stale-banner");
  const healthChip = el<HTMLElement>("health-chip");
  const message = el<HTMLElement>("control-message");
  const ticketLog = el<HTMLUListElement>("ticket-log");
  const fsInput = el<HTMLInputElement>("fs-input");

  const windowSelect = el<HTMLSelectElement>("window-select");
  for (const [label, ms] of WINDOWS) {
    const opt = document.createElement("option");
    opt.value = String(ms);
    opt.textContent = label;
    windowSelect.appendChild(opt);
  }
  windowSelect.addEventListener("change", () => {
    store.setWindow(Number(windowSelect.value));
    render();
  });

  const toggles = el<HTMLElement>("series-toggles");
  for (const def of SERIES) {
    const label = document.createElement("label");
    label.style.color = def.color;
    const box = document.createElement("input");
    box.type = "checkbox";
    box.checked = enabled.has(def.key);
    box.dataset.series = def.key;
    box.addEventListener("change", () => {
      if (box.checked) enabled.add(def.key);
      else enabled.delete(def.key);
      render();
    });
    label.append(box, ` ${def.label}`);
    toggles.appendChild(label);
  }

  async function issue(op: CommandOp, arg?: number): Promise<void> {
    const meter = store.selectedId;
    if (meter === null) return;
    const ticket = await desk.issue(meter, op, arg);
    if (ticket === null && desk.lastError) {
      message.textContent = desk.lastError;
    } else if (ticket !== null) {
      message.textContent = "";
    }
    render();
  }

  for (const op of ["switch_on", "switch_off", "sleep", "wake"] as CommandOp[]) {
    root
      .querySelector<HTMLButtonElement>(`[data-op="${op}"]`)!
      .addEventListener("click", () => void issue(op));
  }
  el<HTMLButtonElement>("btn-set-fs").addEventListener("click", () => {
    const check = checkSamplingInput(fsInput.value);
    if (!check.ok) {
      message.textContent = check.message;
      render();
      return;
    }
    message.textContent = "";
    void issue("set_fs", check.hz);
  });

  meterList.addEventListener("click", (ev) => {
    const item = (ev.target as HTMLElement).closest<HTMLElement>("[data-meter]");
    if (item?.dataset.meter) {
      store.select(item.dataset.meter);
      render();
    }
  });

  function describeTicket(t: Ticket): string {
    const arg = t.arg !== null ? ` ${t.arg}` : "";
    return `#${t.command_id} ${t.op}${arg} → ${t.state} (${t.attempts} attempt${t.attempts === 1 ? "" : "s"})`;
  }

  function render(): void {
    staleBanner.classList.toggle("hidden", !store.stale);
    healthChip.textContent = store.lastSyncMs
      ? `${store.meters.length} meter${store.meters.length === 1 ? "" : "s"} · synced ${formatAgo(store.lastSyncMs, Date.now())}`
      : "connecting…";

    meterList.innerHTML = "";
    for (const m of store.meters) {
      const li = document.createElement("li");
      li.dataset.meter = m.storage_id;
      li.className = m.storage_id === store.selectedId ? "selected" : "";
      const badge = m.live ? "●" : "○";
      const power = m.last_reading ? formatWatts(m.last_reading.p) : "—";
      li.innerHTML =
        `<span class="badge ${m.live ? "live" : "dead"}">${badge}</span>` +
        `<span class="mname">${wireIdToText(m.wire_id)}</span>` +
        `<span class="mpower">${power}</span>`;
      meterList.appendChild(li);
    }

    const ctx = canvas.getContext("2d");
    if (ctx) {
      const layout = computeLayout(
        store.readingsInWindow(),
        enabled,
        canvas.width,
        canvas.height,
        Date.now(),
        store.windowMs,
      );
      drawChart(ctx, layout);
    }

    const haveMeter = store.selectedId !== null;
    for (const op of Object.keys(GROUP_OF) as CommandOp[]) {
      const button = root.querySelector<HTMLButtonElement>(`[data-op="${op}"]`);
      if (button) button.disabled = !haveMeter || desk.busy(GROUP_OF[op]);
    }
    el<HTMLButtonElement>("btn-set-fs").disabled = !haveMeter || desk.busy("sampling");

    ticketLog.innerHTML = "";
    for (const t of desk.recent) {
      const li = document.createElement("li");
      li.className = `ticket ${t.state}`;
      li.textContent = describeTicket(t);
      ticketLog.appendChild(li);
    }
  }

  async function poll(): Promise<void> {
    await store.refresh();
    await desk.pollPending();
    render();
  }

  const timer = setInterval(() => void poll(), pollIntervalMs);
  void poll();

  return {
    store,
    desk,
    poll,
    stop: () => clearInterval(timer),
  };
}

function boot(): void {
  const root = document.getElementById("app");
  if (!root) return;
  const base = resolveApiBase(window.location.search, window as unknown as Record<string, unknown>);
  const params = new URLSearchParams(window.location.search);
  const poll = Number(params.get("poll") ?? "1000") || 1000;
  mountDashboard(root, new ApiClient(base), poll);
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  boot();
}
