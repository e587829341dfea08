// Client-side mesh geometry: OBJ parsing for rendering and vertex snapping.
// The viewer never mutates this data; predictions always use the server-side
// mesh referenced by the upload handle.

export interface MeshData {
  vertices: Float32Array; // xyz triples
  faces: Uint32Array; // vertex-index triples
  vertexCount: number;
  faceCount: number;
}

export function parseObj(text: string): MeshData {
  const vertices: number[] = [];
  const faces: number[] = [];
  const lines = text.split("\n");
  for (let i = 0; i < lines.length; i++) {
    const line = lines[i].split("#", 1)[0].trim();
    if (!line) continue;
    const tok = line.split(/\s+/);
    if (tok[0] === "v") {
      if (tok.length !== 4) throw new Error(`line ${i + 1}: vertex needs 3 coordinates`);
      vertices.push(Number(tok[1]), Number(tok[2]), Number(tok[3]));
    } else if (tok[0] === "f") {
      if (tok.length !== 4) throw new Error(`line ${i + 1}: only triangles are supported`);
      for (let j = 1; j <= 3; j++) {
        const idx = Number(tok[j]);
        if (!Number.isInteger(idx) || idx < 1) throw new Error(`line ${i + 1}: bad index`);
        faces.push(idx - 1);
      }
    } else {
      throw new Error(`line ${i + 1}: unsupported record '${tok[0]}'`);
    }
  }
  const vertexCount = vertices.length / 3;
  for (const idx of faces) {
    if (idx >= vertexCount) throw new Error(`face index ${idx + 1} out of range`);
  }
  return {
    vertices: new Float32Array(vertices),
    faces: new Uint32Array(faces),
    vertexCount,
    faceCount: faces.length / 3,
  };
}

function distSq(mesh: MeshData, vertexId: number, p: [number, number, number]): number {
  const dx = mesh.vertices[3 * vertexId] - p[0];
  const dy = mesh.vertices[3 * vertexId + 1] - p[1];
  const dz = mesh.vertices[3 * vertexId + 2] - p[2];
  return dx * dx + dy * dy + dz * dz;
}

/** Nearest corner of one face; ties go to the lower vertex id. */
export function snapToFaceCorner(mesh: MeshData, faceIndex: number,
                                 point: [number, number, number]): number {
  let best = -1;
  let bestD = Infinity;
  for (let j = 0; j < 3; j++) {
    const v = mesh.faces[3 * faceIndex + j];
    const d = distSq(mesh, v, point);
    if (d < bestD || (d === bestD && v < best)) {
      best = v;
      bestD = d;
    }
  }
  return best;
}

/** Globally nearest vertex; ties go to the lower vertex id. */
export function nearestVertex(mesh: MeshData, point: [number, number, number]): number {
  let best = 0;
  let bestD = distSq(mesh, 0, point);
  for (let v = 1; v < mesh.vertexCount; v++) {
    const d = distSq(mesh, v, point);
    if (d < bestD) {
      best = v;
      bestD = d;
    }
  }
  return best;
}

export function vertexPosition(mesh: MeshData, vertexId: number): [number, number, number] {
  return [
    mesh.vertices[3 * vertexId],
    mesh.vertices[3 * vertexId + 1],
    mesh.vertices[3 * vertexId + 2],
  ];
}
