import { afterEach, describe, expect, it } from "vitest";

import { ApiError, SkycastClient } from "../src/api.js";
import { loadFixture, startStubServer, type StubServer } from "./helpers.js";

let server: StubServer | null = null;

afterEach(async () => {
  await server?.close();
  server = null;
});

describe("SkycastClient", () => {
  it("fetches the grade catalog", async () => {
    server = await startStubServer({ meta: { status: 200, body: loadFixture("meta.json") } });
    const client = new SkycastClient(server.baseUrl);
    const meta = await client.meta();
    expect(meta.grades).toHaveLength(5);
    expect(meta.grades[0].grade).toBe("Good");
    expect(meta.grades.map((g) => g.color)).toContain("#8F3F97");
  });

  it("posts multipart prediction requests", async () => {
    server = await startStubServer({
      predict: { status: 200, body: loadFixture("predict_good.json") },
    });
    const client = new SkycastClient(server.baseUrl);
    const result = await client.predict(new Blob([new Uint8Array([1, 2, 3])]));
    expect(result.grade).toBe("Good");
    expect(result.probabilities).toHaveLength(5);
    expect(server.requests).toContain("POST /api/predict");
  });

  it("raises a typed error with the server's code", async () => {
    server = await startStubServer({
      predict: { status: 422, body: loadFixture("predict_no_sky.json") },
    });
    const client = new SkycastClient(server.baseUrl);
    const err = await client.predict(new Blob([new Uint8Array([1])])).catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(422);
    expect(err.code).toBe("no_sky_detected");
  });

  it("requests synthesis with selected grades", async () => {
    server = await startStubServer({
      synthesize: { status: 200, body: loadFixture("synthesize.json") },
    });
    const client = new SkycastClient(server.baseUrl);
    const result = await client.synthesize(new Blob([new Uint8Array([1])]), [
      "Good",
      "Very Unhealthy",
    ]);
    expect(result.variants.length).toBeGreaterThan(0);
    expect(server.requests).toContain("POST /api/synthesize");
  });
});
