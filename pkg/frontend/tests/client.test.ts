import { describe, expect, it } from "vitest";
import {
  ConflictError,
  MalformedResponseError,
  NavigatorClient,
  NotFoundError,
  UnavailableError,
  ValidationError,
} from "../src/client.js";
import { errorCase, jsonResponse, loadTranscript } from "./replay.js";

const BASE = "http://127.0.0.1:8907";

function clientReturning(status: number, body: unknown): NavigatorClient {
  return new NavigatorClient(BASE, async () => jsonResponse(status, body));
}

describe("recorded error shapes", () => {
  it("maps an invalid step onto ValidationError carrying the valid set", async () => {
    const recorded = errorCase("invalid_step");
    const client = clientReturning(recorded.status, recorded.response);
    const err = await client.step("sid", "E").catch((e) => e);
    expect(err).toBeInstanceOf(ValidationError);
    expect(err.message).toContain("not valid here");
    expect(err.valid).toEqual(["B", "D", "C"]);
  });

  it("maps a bad first activity onto ValidationError with a plain message", async () => {
    const recorded = errorCase("unknown_start_activity");
    const client = clientReturning(recorded.status, recorded.response);
    const err = await client.startSession("Z").catch((e) => e);
    expect(err).toBeInstanceOf(ValidationError);
    expect(err.valid).toEqual([]);
    expect(err.message).toContain("unknown activity");
  });

  it("maps an expired session onto NotFoundError", async () => {
    const recorded = errorCase("unknown_session");
    const client = clientReturning(recorded.status, recorded.response);
    await expect(client.view("doesnotexist")).rejects.toBeInstanceOf(NotFoundError);
  });

  it("maps stepping a finished case onto ConflictError", async () => {
    const recorded = errorCase("step_after_done");
    const client = clientReturning(recorded.status, recorded.response);
    await expect(client.step("sid", "<EOS>")).rejects.toBeInstanceOf(ConflictError);
  });

  it("maps the not-loaded service onto UnavailableError", async () => {
    // shape as served before an artifact is loaded
    const client = clientReturning(503, { detail: "no artifact loaded" });
    const err = await client.health().catch((e) => e);
    expect(err).toBeInstanceOf(UnavailableError);
    expect(err.message).toBe("no artifact loaded");
  });
});

describe("schema enforcement", () => {
  it("accepts every recorded success body", async () => {
    for (const e of loadTranscript().exchanges) {
      if (e.status >= 400) continue;
      const client = clientReturning(e.status, e.response);
      if (e.path === "/health") await client.health();
      else if (e.path === "/dfg") await client.dfg();
      else if (e.method === "POST" && e.path === "/sessions") await client.startSession("A");
      else if (e.path.endsWith("/step")) await client.step("sid", "x");
      else await client.view("sid");
    }
  });

  it("rejects a 200 body with a missing field", async () => {
    const started = loadTranscript().exchanges.find((e) => e.path === "/sessions")!;
    const broken: Record<string, unknown> = { ...(started.response as object) };
    delete broken.candidates;
    const client = clientReturning(200, broken);
    await expect(client.startSession("A")).rejects.toBeInstanceOf(MalformedResponseError);
  });

  it("rejects a 200 body with the wrong version", async () => {
    const started = loadTranscript().exchanges.find((e) => e.path === "/sessions")!;
    const client = clientReturning(200, { ...(started.response as object), version: 2 });
    await expect(client.startSession("A")).rejects.toBeInstanceOf(MalformedResponseError);
  });

  it("rejects a 200 body that is not JSON at all", async () => {
    const client = new NavigatorClient(
      BASE,
      async () => new Response("<html>oops</html>", { status: 200 }),
    );
    await expect(client.health()).rejects.toBeInstanceOf(MalformedResponseError);
  });
});

describe("request bodies", () => {
  async function capture(run: (c: NavigatorClient) => Promise<unknown>): Promise<Record<string, unknown>> {
    let body: Record<string, unknown> = {};
    const view = loadTranscript().exchanges.find((e) => e.path === "/sessions")!.response;
    const client = new NavigatorClient(BASE, async (_url, init) => {
      body = JSON.parse(String(init?.body));
      return jsonResponse(200, view);
    });
    await run(client);
    return body;
  }

  it("stamps the API version on every write", async () => {
    const start = await capture((c) => c.startSession("A", 0.25));
    expect(start).toEqual({ version: 1, first_activity: "A", first_kpi: 0.25 });
    const step = await capture((c) => c.step("sid", "B"));
    expect(step).toEqual({ version: 1, activity: "B" });
  });

  it("sends realized_kpi only when one was entered", async () => {
    const withKpi = await capture((c) => c.step("sid", "B", 0.5));
    expect(withKpi.realized_kpi).toBe(0.5);
    const without = await capture((c) => c.step("sid", "B"));
    expect("realized_kpi" in without).toBe(false);
  });
});
