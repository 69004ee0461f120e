// A stub HTTP server replaying recorded API fixtures, plus DOM scaffolding.

import { createServer, type Server } from "node:http";
import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

const FIXTURE_DIR = join(dirname(fileURLToPath(import.meta.url)), "..", "fixtures");

export function loadFixture(name: string): any {
  return JSON.parse(readFileSync(join(FIXTURE_DIR, name), "utf-8"));
}

export interface StubBehavior {
  predict?: { status: number; body: unknown };
  synthesize?: { status: number; body: unknown };
  meta?: { status: number; body: unknown };
}

export interface StubServer {
  baseUrl: string;
  close: () => Promise<void>;
  requests: string[];
}

export async function startStubServer(behavior: StubBehavior): Promise<StubServer> {
  const requests: string[] = [];
  const server: Server = createServer((req, res) => {
    requests.push(`${req.method} ${req.url}`);
    const route =
      req.url === "/api/meta"
        ? behavior.meta
        : req.url === "/api/predict"
          ? behavior.predict
          : req.url === "/api/synthesize"
            ? behavior.synthesize
            : undefined;
    // drain the body before answering
    req.resume();
    req.on("end", () => {
      if (!route) {
        res.writeHead(404, { "content-type": "application/json" });
        res.end(JSON.stringify({ error: "not_found", message: "no such route" }));
        return;
      }
      res.writeHead(route.status, { "content-type": "application/json" });
      res.end(JSON.stringify(route.body));
    });
  });
  await new Promise<void>((resolve) => server.listen(0, "127.0.0.1", resolve));
  const address = server.address();
  if (address === null || typeof address === "string") throw new Error("no port");
  return {
    baseUrl: `http://127.0.0.1:${address.port}`,
    close: () =>
      new Promise((resolve) => {
        server.closeAllConnections?.();
        server.close(() => resolve());
      }),
    requests,
  };
}

export function appDom(): void {
  document.body.innerHTML = `
    <input id="file-input" type="file" />
    <div id="status"></div>
    <div id="preview"></div>
    <div id="prediction"></div>
    <div id="variants"></div>
    <div id="comparison"></div>
    <div id="legend"></div>
  `;
}

export function flush(): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, 0));
}
