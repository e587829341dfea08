import { describe, expect, it } from "vitest";

import { ApiError, ServiceClient } from "../src/api.js";

function fakeFetch(handler: (url: string, init?: RequestInit) => { status: number; body: unknown }) {
  const calls: { url: string; init?: RequestInit }[] = [];
  const fetchFn = async (url: string, init?: RequestInit): Promise<Response> => {
    calls.push({ url, init });
    const { status, body } = handler(url, init);
    return new Response(JSON.stringify(body), {
      status,
      headers: { "Content-Type": "application/json" },
    });
  };
  return { fetchFn, calls };
}

describe("ServiceClient", () => {
  it("uploads a mesh body and returns the summary", async () => {
    const { fetchFn, calls } = fakeFetch(() => ({
      status: 200,
      body: { handle: "h", vertex_count: 3, face_count: 1,
              bounding_box: { min: [0, 0, 0], max: [1, 1, 0] } },
    }));
    const client = new ServiceClient("http://svc", fetchFn);
    const summary = await client.uploadMesh("v 0 0 0\n");
    expect(summary.handle).toBe("h");
    expect(calls[0].url).toBe("http://svc/meshes");
    expect(calls[0].init?.body).toBe("v 0 0 0\n");
  });

  it("surfaces server diagnostics verbatim", async () => {
    const { fetchFn } = fakeFetch(() => ({
      status: 400,
      body: { error: "mesh.obj:7: bad vertex coordinate" },
    }));
    const client = new ServiceClient("http://svc", fetchFn);
    await expect(client.uploadMesh("x")).rejects.toThrow("mesh.obj:7: bad vertex coordinate");
    await expect(client.uploadMesh("x")).rejects.toBeInstanceOf(ApiError);
  });

  it("sends the gate list unchanged", async () => {
    const { fetchFn, calls } = fakeFetch(() => ({
      status: 200,
      body: { fill_time: [1], timings: { pre_processing: 0, fill_time: 0,
              deflection: 0, total: 0 }, model_versions: {} },
    }));
    const client = new ServiceClient("http://svc/", fetchFn);
    const gates = [{ node_id: 5, opening_time: 0.5 }, { node_id: 9, opening_time: 0 }];
    await client.predict("h", gates);
    expect(calls[0].url).toBe("http://svc/predict");
    const sent = JSON.parse(calls[0].init?.body as string);
    expect(sent.gates).toEqual(gates);
    expect(sent.handle).toBe("h");
    expect(sent.targets).toEqual(["fill_time", "deflection"]);
  });
});
