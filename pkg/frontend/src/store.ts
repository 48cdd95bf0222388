// Client-side session store: a pure reducer over /ws/live events.
//
// Holds rolling 5-minute series for the charts plus the latest snapshot of
// everything else. No inference happens here: every number displayed comes
// from a server event verbatim.

import type {
  AlertData,
  ApiState,
  DirectiveData,
  FrameData,
  LiveEvent,
  ReportData,
  StateData,
} from "./types.js";

export const WINDOW_MS = 5 * 60 * 1000;
export const MAX_TIMELINE = 100;

export interface BpmPoint {
  t: number;
  ecg: number | null;
  ppg: number | null;
}

export interface RrPoint {
  t: number;
  ms: number;
}

export interface AffectPoint {
  t: number;
  positive: number;
  neutral: number;
  surprise: number;
  negative: number;
}

export class DashboardStore {
  bpm: BpmPoint[] = [];
  rr: RrPoint[] = [];
  states: StateData[] = [];
  affect: AffectPoint[] = [];
  directives: DirectiveData[] = [];
  alerts: AlertData[] = [];
  reports: ReportData[] = [];
  latestState: StateData | null = null;
  latestDirective: DirectiveData | null = null;
  paused = false;
  sessionId = "";
  lastEventAt = 0;

  apply(event: LiveEvent): void {
    switch (event.type) {
      case "frame":
        this.applyFrame(event.data);
        break;
      case "state":
        this.latestState = event.data;
        this.states.push(event.data);
        this.lastEventAt = Math.max(this.lastEventAt, event.data.t);
        break;
      case "directive":
        this.applyDirective(event.data);
        break;
      case "alert":
        this.alerts.push(event.data);
        break;
      case "report":
        this.reports.push(event.data);
        if (this.reports.length > MAX_TIMELINE) {
          this.reports.splice(0, this.reports.length - MAX_TIMELINE);
        }
        break;
    }
    this.prune(this.lastEventAt);
  }

  private applyFrame(frame: FrameData): void {
    this.lastEventAt = Math.max(this.lastEventAt, frame.t);
    this.bpm.push({ t: frame.t, ecg: frame.bpm_ecg, ppg: frame.bpm_ppg });
    for (const ms of frame.rr_recent) {
      this.rr.push({ t: frame.t, ms });
    }
    if (frame.affect) {
      this.affect.push({
        t: frame.t,
        positive: frame.affect.positive,
        neutral: frame.affect.neutral,
        surprise: frame.affect.surprise,
        negative: frame.affect.negative,
      });
    }
  }

  private applyDirective(directive: DirectiveData): void {
    this.latestDirective = directive;
    this.paused = directive.rationale.includes("OVERRIDE:PAUSE")
      ? true
      : directive.rationale.includes("OVERRIDE:RESUME")
        ? false
        : this.paused;
    this.directives.push(directive);
    if (this.directives.length > MAX_TIMELINE) {
      this.directives.splice(0, this.directives.length - MAX_TIMELINE);
    }
    this.lastEventAt = Math.max(this.lastEventAt, directive.issued_at);
  }

  /** Charts show exactly the trailing five minutes. */
  prune(now: number): void {
    const cutoff = now - WINDOW_MS;
    dropWhile(this.bpm, (p) => p.t < cutoff);
    dropWhile(this.rr, (p) => p.t < cutoff);
    dropWhile(this.states, (s) => s.t < cutoff);
    dropWhile(this.affect, (p) => p.t < cutoff);
  }

  /** Rebuild the snapshot parts from /api/state after a reload. */
  seed(api: ApiState): void {
    this.sessionId = api.session_id;
    this.paused = api.paused;
    if (api.state) {
      this.latestState = api.state;
      this.lastEventAt = Math.max(this.lastEventAt, api.state.t);
    }
    this.latestDirective = api.directive;
    if (!this.directives.length) {
      this.directives.push(api.directive);
    }
    for (const alert of api.alerts) {
      if (!this.alerts.some((a) => a.alert_id === alert.alert_id)) {
        this.alerts.push(alert);
      }
    }
  }

  acknowledge(alertId: number): void {
    for (const alert of this.alerts) {
      if (alert.alert_id === alertId) {
        alert.acknowledged = true;
      }
    }
  }

  openAlerts(): AlertData[] {
    return this.alerts.filter((a) => !a.acknowledged);
  }
}

function dropWhile<T>(items: T[], stale: (item: T) => boolean): void {
  let n = 0;
  while (n < items.length && stale(items[n])) {
    n += 1;
  }
  if (n > 0) {
    items.splice(0, n);
  }
}

export type GaugeZone = "ok" | "warn" | "alert";

/**
 * Zone for the fatigue gauge. Thresholds come from the server plan: red at
 * theta_f and amber from 85% of it (the rule engine's rest-release level).
 */
export function fatigueZone(value: number, thetaF: number): GaugeZone {
  if (value >= thetaF) return "alert";
  if (value >= 0.85 * thetaF) return "warn";
  return "ok";
}

export function engagementZone(value: number, thetaE: number): GaugeZone {
  if (value < thetaE) return "alert";
  if (value < 1.5 * thetaE) return "warn";
  return "ok";
}

/** Reconnect backoff: 1 s doubling to an 8 s ceiling. */
export function nextBackoffMs(previous: number | null): number {
  if (previous === null) return 1000;
  return Math.min(previous * 2, 8000);
}
