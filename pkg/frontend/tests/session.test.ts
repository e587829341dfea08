import { describe, expect, it } from "vitest";

import { MeshSummary, PredictResponse } from "../src/api.js";
import { UISession } from "../src/session.js";

const SUMMARY: MeshSummary = {
  handle: "h1",
  vertex_count: 100,
  face_count: 180,
  bounding_box: { min: [0, 0, 0], max: [10, 5, 1] },
};

function response(fill: number[], deflection?: number[]): PredictResponse {
  return {
    fill_time: fill,
    deflection,
    timings: { pre_processing: 0.1, fill_time: 0.2, deflection: 0.3, total: 0.6 },
    model_versions: { fill_time_model: "abc" },
  };
}

function freshSession(): UISession {
  const s = new UISession();
  s.reset(SUMMARY, SUMMARY.handle);
  return s;
}

describe("gate list", () => {
  it("adds, edits, moves and removes gates", () => {
    const s = freshSession();
    s.addGate(3);
    s.addGate(7, 0.5);
    expect(s.gates.length).toBe(2);
    s.setOpeningTime(0, 1.25);
    expect(s.gates[0].openingTime).toBe(1.25);
    s.moveGate(1, 42);
    expect(s.gates[1].nodeId).toBe(42);
    s.removeGate(0);
    expect(s.gates.length).toBe(1);
    expect(s.gates[0].nodeId).toBe(42);
  });

  it("payload matches the on-screen markers one to one", () => {
    const s = freshSession();
    s.addGate(3, 0.5);
    s.addGate(7);
    s.addGate(12, 2.0);
    const payload = s.gatesPayload();
    expect(payload).toEqual([
      { node_id: 3, opening_time: 0.5 },
      { node_id: 7, opening_time: 0 },
      { node_id: 12, opening_time: 2.0 },
    ]);
    expect(payload.length).toBe(s.gates.length);
  });

  it("rejects invalid node ids and times", () => {
    const s = freshSession();
    expect(() => s.addGate(100)).toThrow(/out of range/);
    expect(() => s.addGate(-1)).toThrow(/out of range/);
    s.addGate(0);
    expect(() => s.setOpeningTime(0, -2)).toThrow(/nonnegative/);
    expect(() => s.moveGate(0, 100)).toThrow(/out of range/);
  });

  it("requires a mesh before gates", () => {
    const s = new UISession();
    expect(() => s.addGate(0)).toThrow(/no mesh/);
  });
});

describe("stale response guard", () => {
  it("only the latest request renders", () => {
    const s = freshSession();
    const first = s.beginRequest();
    const second = s.beginRequest();
    // the slow first response arrives after the second was issued
    expect(s.acceptResponse(first, response([1, 2]))).toBe(false);
    expect(s.lastResponse).toBeNull();
    expect(s.acceptResponse(second, response([3, 4]))).toBe(true);
    expect(s.lastResponse!.fill_time).toEqual([3, 4]);
  });

  it("out-of-order arrival keeps the newest", () => {
    const s = freshSession();
    const first = s.beginRequest();
    const second = s.beginRequest();
    expect(s.acceptResponse(second, response([9]))).toBe(true);
    expect(s.acceptResponse(first, response([1]))).toBe(false);
    expect(s.lastResponse!.fill_time).toEqual([9]);
  });
});

describe("heatmap bounds", () => {
  it("default bounds are the active field's min and max", () => {
    const s = freshSession();
    s.acceptResponse(s.beginRequest(), response([2.0, 5.5, 3.1], [0.1, 0.9, 0.4]));
    expect(s.colorBounds()).toEqual({ min: 2.0, max: 5.5 });
    s.activeField = "deflection";
    expect(s.colorBounds()).toEqual({ min: 0.1, max: 0.9 });
  });

  it("a constant field widens by epsilon", () => {
    const s = freshSession();
    s.acceptResponse(s.beginRequest(), response([4.0, 4.0, 4.0]));
    const bounds = s.colorBounds()!;
    expect(bounds.min).toBeLessThan(4.0);
    expect(bounds.max).toBeGreaterThan(4.0);
  });

  it("override wins and is validated", () => {
    const s = freshSession();
    s.acceptResponse(s.beginRequest(), response([1, 2, 3]));
    s.setBoundsOverride({ min: 0, max: 10 });
    expect(s.colorBounds()).toEqual({ min: 0, max: 10 });
    s.setBoundsOverride(null);
    expect(s.colorBounds()).toEqual({ min: 1, max: 3 });
    expect(() => s.setBoundsOverride({ min: 5, max: 5 })).toThrow(/min < max/);
    expect(() => s.setBoundsOverride({ min: 0, max: Infinity })).toThrow(/finite/);
  });

  it("no bounds without a response", () => {
    const s = freshSession();
    expect(s.colorBounds()).toBeNull();
    expect(s.activeValues()).toBeNull();
  });
});
