// DOM wiring: connects the session state, the service client and the viewer.

import { ApiError, ServiceClient } from "./api.js";
import { legendStops } from "./colormap.js";
import { parseObj } from "./mesh.js";
import { FieldName, UISession } from "./session.js";
import { Viewer } from "./viewer.js";

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

const params = new URLSearchParams(window.location.search);
const apiBase = params.get("api") ?? "http://127.0.0.1:8080";

const session = new UISession();
const client = new ServiceClient(apiBase);
const viewer = new Viewer($("viewport") as HTMLCanvasElement, {
  onPlaceGate(nodeId) {
    session.addGate(nodeId, 0);
    renderGates();
  },
  onMoveGate(index, nodeId) {
    session.moveGate(index, nodeId);
    renderGates();
  },
});

function banner(text: string | null): void {
  const el = $("banner");
  el.textContent = text ?? "";
  el.style.display = text ? "block" : "none";
}

function renderStatus(): void {
  const el = $("status");
  if (!session.summary) {
    el.textContent = "no mesh loaded";
    return;
  }
  el.textContent = `${session.summary.vertex_count} vertices, `
    + `${session.summary.face_count} faces`;
}

function renderGates(): void {
  const list = $("gates");
  list.innerHTML = "";
  session.gates.forEach((gate, index) => {
    const row = document.createElement("li");
    const label = document.createElement("span");
    label.textContent = `node ${gate.nodeId}`;
    const time = document.createElement("input");
    time.type = "number";
    time.min = "0";
    time.step = "0.1";
    time.value = String(gate.openingTime);
    time.title = "opening time, s";
    time.addEventListener("change", () => {
      try {
        session.setOpeningTime(index, Number(time.value));
      } catch (err) {
        banner(String(err));
        time.value = String(session.gates[index].openingTime);
      }
    });
    const remove = document.createElement("button");
    remove.textContent = "x";
    remove.addEventListener("click", () => {
      session.removeGate(index);
      renderGates();
    });
    row.append(label, time, remove);
    list.appendChild(row);
  });
  viewer.syncMarkers(session.gates);
  ($("predict") as HTMLButtonElement).disabled = session.gates.length === 0;
}

function renderHeatmap(): void {
  const values = session.activeValues();
  const bounds = session.colorBounds();
  const legend = $("legend");
  if (!values || !bounds) {
    viewer.setFieldColors(null);
    legend.innerHTML = "";
    return;
  }
  viewer.setFieldColors(values, bounds.min, bounds.max);
  legend.innerHTML = "";
  for (const stop of legendStops(bounds.min, bounds.max)) {
    const chip = document.createElement("span");
    chip.className = "chip";
    chip.style.background = stop.css;
    chip.textContent = stop.value.toPrecision(3);
    legend.appendChild(chip);
  }
}

function renderTimings(): void {
  const el = $("timings");
  const t = session.lastResponse?.timings;
  if (!t) {
    el.textContent = "";
    return;
  }
  el.textContent = `pre-processing ${t.pre_processing.toFixed(2)} s · `
    + `fill time ${t.fill_time.toFixed(2)} s · deflection ${t.deflection.toFixed(2)} s · `
    + `total ${t.total.toFixed(2)} s`;
}

$("file").addEventListener("change", async (event) => {
  const input = event.target as HTMLInputElement;
  const file = input.files?.[0];
  if (!file) return;
  banner(null);
  try {
    const text = await file.text();
    const summary = await client.uploadMesh(text);
    session.reset(summary, summary.handle);
    const data = parseObj(text);
    viewer.setMesh(data, summary.bounding_box.min, summary.bounding_box.max);
    renderStatus();
    renderGates();
    renderHeatmap();
    renderTimings();
  } catch (err) {
    banner(err instanceof ApiError ? `upload failed: ${err.message}` : String(err));
  }
});

$("predict").addEventListener("click", async () => {
  if (!session.handle || session.gates.length === 0) return;
  banner(null);
  const token = session.beginRequest();
  $("predict").classList.add("busy");
  try {
    const response = await client.predict(session.handle, session.gatesPayload());
    if (session.acceptResponse(token, response)) {
      renderHeatmap();
      renderTimings();
    }
  } catch (err) {
    banner(err instanceof ApiError ? `prediction failed: ${err.message}` : String(err));
  } finally {
    $("predict").classList.remove("busy");
  }
});

for (const field of ["fill_time", "deflection"] as FieldName[]) {
  $(`show-${field}`).addEventListener("click", () => {
    session.activeField = field;
    $("show-fill_time").classList.toggle("active", field === "fill_time");
    $("show-deflection").classList.toggle("active", field === "deflection");
    renderHeatmap();
  });
}

$("bounds-apply").addEventListener("click", () => {
  const min = Number(($("bounds-min") as HTMLInputElement).value);
  const max = Number(($("bounds-max") as HTMLInputElement).value);
  try {
    session.setBoundsOverride({ min, max });
    renderHeatmap();
  } catch (err) {
    banner(String(err));
  }
});

$("bounds-reset").addEventListener("click", () => {
  session.setBoundsOverride(null);
  renderHeatmap();
});

client.health().then(
  (h) => banner(h.status === "ok" ? null : `service degraded: missing ${h.missing.join(", ")}`),
  () => banner(`cannot reach service at ${apiBase} — start it with: moldcast serve`),
);
renderStatus();
