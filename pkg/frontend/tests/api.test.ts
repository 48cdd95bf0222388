import { describe, expect, it, vi } from "vitest";

import { ApiClient } from "../src/api.js";

function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

describe("ApiClient", () => {
  it("posts overrides to /api/override only", async () => {
    const calls: Array<{ url: string; init?: RequestInit }> = [];
    const fetchMock = vi.fn(async (url: RequestInfo | URL, init?: RequestInit) => {
      calls.push({ url: String(url), init });
      return jsonResponse(200, { directive: { difficulty_target: 3 } });
    });
    const api = new ApiClient("http://hub", fetchMock as unknown as typeof fetch);
    const result = await api.override("SET_DIFFICULTY", 3, "dr-bob");
    expect(result.ok).toBe(true);
    expect(result.body?.directive.difficulty_target).toBe(3);
    expect(calls).toHaveLength(1);
    expect(calls[0].url).toBe("http://hub/api/override");
    expect(JSON.parse(String(calls[0].init?.body))).toEqual({
      kind: "SET_DIFFICULTY",
      value: 3,
      issued_by: "dr-bob",
    });
  });

  it("surfaces the server's error detail on non-200 (no silent failure)", async () => {
    const fetchMock = vi.fn(async () =>
      jsonResponse(400, { detail: "SET_DIFFICULTY value 14 not in [1, 10]" }),
    );
    const api = new ApiClient("", fetchMock as unknown as typeof fetch);
    const result = await api.override("SET_DIFFICULTY", 14);
    expect(result.ok).toBe(false);
    expect(result.status).toBe(400);
    expect(result.error).toContain("not in [1, 10]");
  });

  it("reports network failures without throwing", async () => {
    const fetchMock = vi.fn(async () => {
      throw new TypeError("fetch failed");
    });
    const api = new ApiClient("", fetchMock as unknown as typeof fetch);
    const result = await api.override("FORCE_REST", null);
    expect(result.ok).toBe(false);
    expect(result.status).toBe(0);
    expect(result.error).toContain("fetch failed");
  });

  it("submits plan edits via POST /api/plan", async () => {
    const calls: string[] = [];
    const fetchMock = vi.fn(async (url: RequestInfo | URL, init?: RequestInit) => {
      calls.push(`${init?.method ?? "GET"} ${String(url)}`);
      return jsonResponse(200, { fatigue_threshold: 0.7 });
    });
    const api = new ApiClient("", fetchMock as unknown as typeof fetch);
    const result = await api.updatePlan({ fatigue_threshold: 0.7 });
    expect(result.ok).toBe(true);
    expect(calls).toEqual(["POST /api/plan"]);
  });

  it("getters throw on HTTP errors", async () => {
    const fetchMock = vi.fn(async () => new Response("nope", { status: 500 }));
    const api = new ApiClient("", fetchMock as unknown as typeof fetch);
    await expect(api.plan()).rejects.toThrow("HTTP 500");
  });
});
