// REST client. Every mutation the dashboard can make goes through here:
// POST /api/plan, POST /api/override, POST /api/ack-alert — nothing else.

import type { ApiState, DirectiveData, OverrideKind, PlanData, RulesData } from "./types.js";

export interface ApiResult<T> {
  ok: boolean;
  status: number;
  body?: T;
  error?: string;
}

export class ApiClient {
  constructor(
    private base: string = "",
    private fetchImpl: typeof fetch = fetch,
  ) {}

  private async get<T>(path: string): Promise<T> {
    const resp = await this.fetchImpl(`${this.base}${path}`);
    if (!resp.ok) {
      throw new Error(`${path}: HTTP ${resp.status}`);
    }
    return (await resp.json()) as T;
  }

  private async post<T>(path: string, body: unknown): Promise<ApiResult<T>> {
    try {
      const resp = await this.fetchImpl(`${this.base}${path}`, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(body),
      });
      if (!resp.ok) {
        let detail = `HTTP ${resp.status}`;
        try {
          const err = (await resp.json()) as { detail?: string };
          if (err.detail) detail = err.detail;
        } catch {
          // non-JSON error body: keep the status text
        }
        return { ok: false, status: resp.status, error: detail };
      }
      return { ok: true, status: resp.status, body: (await resp.json()) as T };
    } catch (e) {
      return { ok: false, status: 0, error: String(e) };
    }
  }

  state(): Promise<ApiState> {
    return this.get("/api/state");
  }

  plan(): Promise<PlanData> {
    return this.get("/api/plan");
  }

  rules(): Promise<RulesData> {
    return this.get("/api/rules");
  }

  sessionSummary(id: string): Promise<Record<string, unknown>> {
    return this.get(`/api/sessions/${id}/summary`);
  }

  updatePlan(changes: Partial<PlanData>): Promise<ApiResult<PlanData>> {
    return this.post("/api/plan", changes);
  }

  override(
    kind: OverrideKind,
    value: number | string | null,
    issuedBy = "dashboard",
  ): Promise<ApiResult<{ directive: DirectiveData }>> {
    return this.post("/api/override", { kind, value, issued_by: issuedBy });
  }

  ackAlert(alertId: number): Promise<ApiResult<{ acknowledged: number }>> {
    return this.post("/api/ack-alert", { alert_id: alertId });
  }
}
