// UI session state: the upload handle, the editable gate list, the latest
// prediction and the heatmap bounds. Pure state so the whole workflow is
// testable without a browser; the viewer and DOM glue render from it.

import { GatePayload, MeshSummary, PredictResponse } from "./api.js";

export type FieldName = "fill_time" | "deflection";

export interface GateMarker {
  nodeId: number;
  openingTime: number; // seconds
}

export interface ColorBounds {
  min: number;
  max: number;
}

const EPSILON_WIDEN = 1e-6;

export class UISession {
  handle: string | null = null;
  summary: MeshSummary | null = null;
  gates: GateMarker[] = [];
  lastResponse: PredictResponse | null = null;
  activeField: FieldName = "fill_time";
  boundsOverride: ColorBounds | null = null;

  private requestCounter = 0;
  private renderedRequest = 0;

  reset(summary: MeshSummary, handle: string): void {
    this.handle = handle;
    this.summary = summary;
    this.gates = [];
    this.lastResponse = null;
    this.boundsOverride = null;
  }

  get vertexCount(): number {
    return this.summary ? this.summary.vertex_count : 0;
  }

  addGate(nodeId: number, openingTime = 0): void {
    this.checkNode(nodeId);
    this.gates.push({ nodeId, openingTime });
  }

  removeGate(index: number): void {
    this.checkIndex(index);
    this.gates.splice(index, 1);
  }

  setOpeningTime(index: number, seconds: number): void {
    this.checkIndex(index);
    if (!Number.isFinite(seconds) || seconds < 0) {
      throw new Error(`opening time must be a nonnegative number, got ${seconds}`);
    }
    this.gates[index].openingTime = seconds;
  }

  /** Re-snap after a drag: the marker moves to a new nearest vertex. */
  moveGate(index: number, nodeId: number): void {
    this.checkIndex(index);
    this.checkNode(nodeId);
    this.gates[index].nodeId = nodeId;
  }

  /** Exactly what goes on the wire: one entry per on-screen marker, in order. */
  gatesPayload(): GatePayload[] {
    return this.gates.map((g) => ({ node_id: g.nodeId, opening_time: g.openingTime }));
  }

  // -- stale-response guard -------------------------------------------------

  /** Mark a prediction request as issued; returns its token. */
  beginRequest(): number {
    this.requestCounter += 1;
    return this.requestCounter;
  }

  /** Accept a response only if no newer request has been issued. */
  acceptResponse(token: number, response: PredictResponse): boolean {
    if (token < this.requestCounter || token <= this.renderedRequest) {
      return false; // stale: a newer request exists or was already rendered
    }
    this.renderedRequest = token;
    this.lastResponse = response;
    return true;
  }

  // -- heatmap --------------------------------------------------------------

  activeValues(): number[] | null {
    if (!this.lastResponse) return null;
    const values = this.activeField === "fill_time"
      ? this.lastResponse.fill_time
      : this.lastResponse.deflection;
    return values ?? null;
  }

  /** Legend bounds: the active field's [min, max] unless overridden; a flat
   * field is widened by epsilon so the color scale stays well defined. */
  colorBounds(): ColorBounds | null {
    if (this.boundsOverride) return { ...this.boundsOverride };
    const values = this.activeValues();
    if (!values || values.length === 0) return null;
    let min = values[0];
    let max = values[0];
    for (const v of values) {
      if (v < min) min = v;
      if (v > max) max = v;
    }
    if (min === max) {
      min -= EPSILON_WIDEN;
      max += EPSILON_WIDEN;
    }
    return { min, max };
  }

  setBoundsOverride(bounds: ColorBounds | null): void {
    if (bounds !== null) {
      if (!Number.isFinite(bounds.min) || !Number.isFinite(bounds.max)
          || !(bounds.min < bounds.max)) {
        throw new Error("color bounds must be finite with min < max");
      }
    }
    this.boundsOverride = bounds === null ? null : { ...bounds };
  }

  private checkNode(nodeId: number): void {
    if (!this.summary) throw new Error("no mesh loaded");
    if (!Number.isInteger(nodeId) || nodeId < 0 || nodeId >= this.summary.vertex_count) {
      throw new Error(`gate node ${nodeId} out of range for mesh with `
        + `${this.summary.vertex_count} vertices`);
    }
  }

  private checkIndex(index: number): void {
    if (index < 0 || index >= this.gates.length) {
      throw new Error(`no gate at index ${index}`);
    }
  }
}
