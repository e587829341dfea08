import { describe, expect, it } from "vitest";

import { MeshData, nearestVertex, parseObj, snapToFaceCorner, vertexPosition } from "../src/mesh.js";

const TRIANGLE = "v 0 0 0\nv 2 0 0\nv 0 2 0\nf 1 2 3\n";

describe("parseObj", () => {
  it("parses the minimal triangle", () => {
    const mesh = parseObj(TRIANGLE);
    expect(mesh.vertexCount).toBe(3);
    expect(mesh.faceCount).toBe(1);
    expect(Array.from(mesh.faces)).toEqual([0, 1, 2]);
  });

  it("skips comments and blank lines", () => {
    const mesh = parseObj("# header\n\nv 0 0 0\nv 1 0 0 # end\nv 0 1 0\nf 1 2 3\n");
    expect(mesh.vertexCount).toBe(3);
  });

  it("rejects out-of-range face indices", () => {
    expect(() => parseObj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 4\n")).toThrow(/out of range/);
  });

  it("rejects unsupported records", () => {
    expect(() => parseObj("v 0 0 0\nvn 1 0 0\n")).toThrow(/line 2/);
  });
});

describe("snapping", () => {
  const mesh: MeshData = parseObj(TRIANGLE);

  it("click on a vertex snaps to that vertex", () => {
    expect(snapToFaceCorner(mesh, 0, [0, 0, 0])).toBe(0);
    expect(snapToFaceCorner(mesh, 0, [2, 0, 0])).toBe(1);
  });

  it("mid-triangle click snaps to the nearest corner", () => {
    expect(snapToFaceCorner(mesh, 0, [1.4, 0.2, 0])).toBe(1);
    expect(snapToFaceCorner(mesh, 0, [0.2, 1.4, 0])).toBe(2);
    expect(snapToFaceCorner(mesh, 0, [0.1, 0.1, 0])).toBe(0);
  });

  it("drag re-snap matches the nearest-vertex oracle", () => {
    // a small grid: dropping a marker anywhere must pick the closest vertex
    const rows = 4;
    const cols = 5;
    const verts: number[] = [];
    for (let i = 0; i < rows; i++) {
      for (let j = 0; j < cols; j++) verts.push(j, i, 0);
    }
    const faces: number[] = [];
    for (let i = 0; i < rows - 1; i++) {
      for (let j = 0; j < cols - 1; j++) {
        const a = i * cols + j;
        faces.push(a, a + 1, a + cols, a + 1, a + cols + 1, a + cols);
      }
    }
    const grid: MeshData = {
      vertices: new Float32Array(verts),
      faces: new Uint32Array(faces),
      vertexCount: rows * cols,
      faceCount: faces.length / 3,
    };
    const drops: [number, number, number][] = [
      [0.2, 0.1, 0], [3.8, 2.9, 0], [2.4, 1.6, 0], [1.51, 0.49, 0],
    ];
    for (const p of drops) {
      const snapped = nearestVertex(grid, p);
      let best = 0;
      let bestD = Infinity;
      for (let v = 0; v < grid.vertexCount; v++) {
        const pos = vertexPosition(grid, v);
        const d = (pos[0] - p[0]) ** 2 + (pos[1] - p[1]) ** 2 + (pos[2] - p[2]) ** 2;
        if (d < bestD) {
          bestD = d;
          best = v;
        }
      }
      expect(snapped).toBe(best);
    }
  });
});
