/** Browser wiring: canvases, pointer input, OOD launcher, reconnect banner. */
import { EyesimClient, specFromScript } from "./client.js";
import type { ActionDoc, Observation } from "./protocol.js";
import {
  dragToSimDelta,
  drawGhost,
  drawMarkers,
  drawRasterPng,
  markersFor,
} from "./render.js";
import { ViewState } from "./view.js";

const ZOOM = 4;

function el<T extends HTMLElement>(id: string): T {
  return document.getElementById(id) as T;
}

async function boot() {
  const client = new EyesimClient({
    baseUrl: window.location.origin,
    socketFactory: (url) => new WebSocket(url) as never,
  });
  const view = new ViewState();

  const labelCanvas = el<HTMLCanvasElement>("label-canvas");
  const simCanvas = el<HTMLCanvasElement>("sim-canvas");
  const banner = el<HTMLDivElement>("banner");
  const toolSelect = el<HTMLSelectElement>("tool-select");
  const modeSelect = el<HTMLSelectElement>("mode-select");
  const status = el<HTMLDivElement>("status");

  client.onDisconnect = () => {
    view.disconnect();
    banner.textContent = "connection lost — reload to reconnect";
    banner.hidden = false;
  };

  const obs0 = await client.connect();
  const hs = client.handshake!;
  for (const c of [labelCanvas, simCanvas]) {
    c.width = hs.width * ZOOM;
    c.height = hs.height * ZOOM;
  }
  for (const name of Object.keys(hs.tool_classes)) {
    const opt = document.createElement("option");
    opt.value = name;
    opt.textContent = name.toLowerCase();
    toolSelect.appendChild(opt);
  }

  async function paint(obs: Observation) {
    const lctx = labelCanvas.getContext("2d")!;
    const sctx = simCanvas.getContext("2d")!;
    await drawRasterPng(sctx, obs.sim_png, ZOOM);
    await drawRasterPng(lctx, obs.label_png, ZOOM);
    drawMarkers(lctx, markersFor(obs.graph, ZOOM, hs.class_names));
    if (view.ghost) {
      drawGhost(sctx, view.ghost.tip, view.ghost.orientation, hs, ZOOM);
    }
    status.textContent =
      `frame ${obs.frame_index} | tools: ` +
      obs.state.tools
        .filter((t) => t.present)
        .map((t) => t.tool_class.toLowerCase())
        .join(", ");
  }

  function commit(obs: Observation) {
    view.commit(obs);
    void paint(obs);
  }
  commit(obs0);

  async function send(action: ActionDoc, ghost = null as ViewState["ghost"]) {
    if (!view.connected) return;
    view.enqueue(action, ghost);
    if (ghost && view.committed) void paint(view.committed);
    try {
      commit(await client.step(action));
    } catch (err) {
      view.rejectPending();
      status.textContent = String(err);
      if (view.committed) void paint(view.committed);
    }
  }

  // ------------------------------------------------------------- pointer I/O

  let dragging = false;
  let last: [number, number] | null = null;

  simCanvas.addEventListener("pointerdown", (ev) => {
    dragging = true;
    last = [ev.offsetX, ev.offsetY];
    simCanvas.setPointerCapture(ev.pointerId);
  });
  simCanvas.addEventListener("pointerup", () => {
    dragging = false;
    last = null;
  });
  simCanvas.addEventListener("pointermove", (ev) => {
    if (!dragging || !last) return;
    const [dxPx, dyPx] = [ev.offsetX - last[0], ev.offsetY - last[1]];
    if (Math.abs(dxPx) + Math.abs(dyPx) < ZOOM) return; // sub-pixel
    last = [ev.offsetX, ev.offsetY];
    const mode = modeSelect.value as ViewState["inputMode"];
    const [dx, dy] = dragToSimDelta(dxPx, dyPx, ZOOM, hs);
    if (mode === "anatomy") {
      void send({ anatomy_delta: { delta_translation: [dx, dy] } });
      return;
    }
    const toolName = toolSelect.value;
    const tool = view.committed?.state.tools.find(
      (t) => t.tool_class === toolName && t.present,
    );
    if (!tool) return;
    if (mode === "drag-tip") {
      void send(
        { tool_deltas: [{ tool_class: toolName, delta_tip: [dx, dy] }] },
        {
          toolClass: toolName,
          tip: [tool.tip[0] + dx, tool.tip[1] + dy],
          orientation: tool.orientation,
        },
      );
    } else if (mode === "rotate") {
      void send({
        tool_deltas: [{ tool_class: toolName, delta_orientation: dxPx * 0.01 }],
      });
    } else if (mode === "articulate") {
      void send({
        tool_deltas: [
          { tool_class: toolName, delta_opening: dyPx * 0.01, delta_bend: dxPx * 0.01 },
        ],
      });
    }
  });

  // yaw/pitch scrubbers
  for (const [id, key] of [
    ["yaw-scrub", "delta_yaw"],
    ["pitch-scrub", "delta_pitch"],
  ] as const) {
    const input = el<HTMLInputElement>(id);
    input.addEventListener("change", () => {
      void send({ anatomy_delta: { [key]: parseFloat(input.value) } });
      input.value = "0";
    });
  }

  // ---------------------------------------------------------- OOD launcher

  el<HTMLButtonElement>("launch").addEventListener("click", async () => {
    const tool = el<HTMLSelectElement>("launch-tool").value;
    const angleDeg = parseFloat(el<HTMLInputElement>("launch-angle").value);
    const script = await client.authorScenario({
      tool_classes: [tool],
      entry_angles: [(angleDeg * Math.PI) / 180],
      primitive: el<HTMLSelectElement>("launch-primitive").value,
      seed: 0,
      num_frames: 16,
    });
    // load as a playable scenario: fresh session starting at frame 0
    const fresh = new EyesimClient({
      baseUrl: client.baseUrl,
      socketFactory: (url) => new WebSocket(url) as never,
    });
    const obs = await fresh.connect(specFromScript(script));
    client.close();
    Object.assign(client, fresh); // adopt the new session
    commit(obs);
  });

  el<HTMLButtonElement>("export").addEventListener("click", async () => {
    const script = await client.exportScript();
    const blob = new Blob([JSON.stringify(script, null, 2)], {
      type: "application/json",
    });
    const a = document.createElement("a");
    a.href = URL.createObjectURL(blob);
    a.download = "session.json";
    a.click();
  });
}

void boot();
