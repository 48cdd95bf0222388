// DOM composition: live charts, gauges, directive timeline, alert feed, and
// the control panel. Store mutations happen on event arrival; rendering is
// batched per animation frame.

import { ApiClient } from "./api.js";
import { drawBands, drawGauge, drawSeries } from "./charts.js";
import { DashboardStore, WINDOW_MS, engagementZone, fatigueZone } from "./store.js";
import type { GaugeZone } from "./store.js";
import type { AlertData, DirectiveData, PlanData, OverrideKind } from "./types.js";

const ZONE_COLORS: Record<GaugeZone, string> = {
  ok: "#3fb76f",
  warn: "#e0a93b",
  alert: "#e05252",
};

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  cls?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (cls) node.className = cls;
  if (text !== undefined) node.textContent = text;
  return node;
}

export class Dashboard {
  private dirty = true;
  private rendered = { directives: 0, alerts: 0, reports: 0 };
  private canvases: Record<string, HTMLCanvasElement> = {};
  private toastBox!: HTMLElement;
  private banner!: HTMLElement;
  private timelineBox!: HTMLElement;
  private alertBox!: HTMLElement;
  private statusBox!: HTMLElement;

  constructor(
    private root: HTMLElement,
    private store: DashboardStore,
    private api: ApiClient,
    private plan: PlanData,
  ) {
    this.build();
    const loop = () => {
      if (this.dirty) {
        this.render();
        this.dirty = false;
      }
      requestAnimationFrame(loop);
    };
    requestAnimationFrame(loop);
  }

  invalidate(): void {
    this.dirty = true;
  }

  setConnected(connected: boolean): void {
    this.banner.style.display = connected ? "none" : "block";
  }

  toast(alert: AlertData): void {
    const node = el("div", `toast sev-${alert.severity}`, `${alert.kind}: ${alert.detail}`);
    this.toastBox.appendChild(node);
    setTimeout(() => node.remove(), 6000);
  }

  private canvas(id: string, cls = "chart"): HTMLCanvasElement {
    const c = el("canvas", cls);
    c.id = id;
    this.canvases[id] = c;
    return c;
  }

  private card(title: string, ...children: HTMLElement[]): HTMLElement {
    const box = el("section", "card");
    box.appendChild(el("h2", undefined, title));
    for (const child of children) box.appendChild(child);
    return box;
  }

  private build(): void {
    this.banner = el("div", "banner", "connection lost — reconnecting…");
    this.banner.style.display = "none";
    this.toastBox = el("div", "toasts");
    this.statusBox = el("div", "status");
    this.timelineBox = el("div", "timeline");
    this.alertBox = el("div", "alerts");

    const charts = el("div", "grid");
    charts.appendChild(this.card("Heart rate (BPM)", this.canvas("bpm")));
    charts.appendChild(this.card("RR intervals (ms)", this.canvas("rr")));
    charts.appendChild(this.card("Affect distribution", this.canvas("affect")));
    charts.appendChild(this.card("State indices", this.canvas("indices")));

    const gauges = el("div", "grid");
    gauges.appendChild(this.card("Fatigue", this.canvas("g-fatigue", "gauge")));
    gauges.appendChild(this.card("Engagement", this.canvas("g-engagement", "gauge")));
    gauges.appendChild(this.card("Workload", this.canvas("g-workload", "gauge")));

    this.root.append(
      this.banner,
      this.toastBox,
      this.statusBox,
      charts,
      gauges,
      this.card("Directive timeline", this.timelineBox),
      this.card("Alerts", this.alertBox),
      this.controlPanel(),
    );
  }

  private controlPanel(): HTMLElement {
    const panel = el("div", "controls");

    const slider = el("input") as HTMLInputElement;
    slider.type = "range";
    slider.min = "1";
    slider.max = "10";
    slider.step = "1";
    slider.value = String(this.store.latestDirective?.difficulty_target ?? 3);
    const sliderLabel = el("span", "slider-value", slider.value);
    slider.oninput = () => {
      sliderLabel.textContent = slider.value;
    };
    slider.onchange = async () => {
      const requested = parseInt(slider.value, 10);
      const result = await this.api.override("SET_DIFFICULTY", requested);
      if (!result.ok) {
        // optimistic UI reverts on non-200 and surfaces the server's reason
        slider.value = String(this.store.latestDirective?.difficulty_target ?? 3);
        sliderLabel.textContent = slider.value;
        this.error(result.error ?? "override failed");
      }
    };

    const button = (label: string, kind: OverrideKind, value: string | null = null) => {
      const b = el("button", undefined, label);
      b.onclick = async () => {
        const result = await this.api.override(kind, value);
        if (!result.ok) this.error(result.error ?? `${kind} failed`);
        this.invalidate();
      };
      return b;
    };

    const categorySelect = el("select") as HTMLSelectElement;
    for (const category of ["coordination", "reaction_speed", "memory"]) {
      const opt = el("option", undefined, category) as HTMLOptionElement;
      opt.value = category;
      categorySelect.appendChild(opt);
    }
    const switchBtn = el("button", undefined, "switch category");
    switchBtn.onclick = async () => {
      const result = await this.api.override("SWITCH_CATEGORY", categorySelect.value);
      if (!result.ok) this.error(result.error ?? "switch failed");
    };

    const planBox = el("div", "plan-editor");
    const thetaF = el("input") as HTMLInputElement;
    thetaF.type = "number";
    thetaF.step = "0.05";
    thetaF.min = "0.1";
    thetaF.max = "1";
    thetaF.value = String(this.plan.fatigue_threshold);
    const thetaE = el("input") as HTMLInputElement;
    thetaE.type = "number";
    thetaE.step = "0.05";
    thetaE.min = "0.05";
    thetaE.max = "1";
    thetaE.value = String(this.plan.engagement_threshold);
    const quotaInputs: Record<string, HTMLInputElement> = {};
    for (const [category, quota] of Object.entries(this.plan.quotas)) {
      const input = el("input") as HTMLInputElement;
      input.type = "number";
      input.min = "0";
      input.value = String(quota);
      quotaInputs[category] = input;
      planBox.append(el("label", undefined, `${category} quota`), input);
    }
    planBox.append(el("label", undefined, "fatigue threshold"), thetaF);
    planBox.append(el("label", undefined, "engagement threshold"), thetaE);
    const savePlan = el("button", undefined, "save plan");
    savePlan.onclick = async () => {
      const changes = {
        fatigue_threshold: parseFloat(thetaF.value),
        engagement_threshold: parseFloat(thetaE.value),
        quotas: Object.fromEntries(
          Object.entries(quotaInputs).map(([c, input]) => [c, parseInt(input.value, 10)]),
        ),
      };
      const result = await this.api.updatePlan(changes);
      if (!result.ok) {
        // revert to the server's accepted plan
        thetaF.value = String(this.plan.fatigue_threshold);
        thetaE.value = String(this.plan.engagement_threshold);
        this.error(result.error ?? "plan rejected");
        return;
      }
      this.plan = result.body!;
      this.invalidate();
    };
    planBox.appendChild(savePlan);

    panel.append(
      el("h2", undefined, "Controls"),
      el("label", undefined, "difficulty"),
      slider,
      sliderLabel,
      button("force rest", "FORCE_REST"),
      button("pause", "PAUSE"),
      button("resume", "RESUME"),
      categorySelect,
      switchBtn,
      planBox,
    );
    return panel;
  }

  private error(detail: string): void {
    const node = el("div", "toast sev-critical", detail);
    this.toastBox.appendChild(node);
    setTimeout(() => node.remove(), 6000);
  }

  private render(): void {
    const now = this.store.lastEventAt;
    const bpmSeries = [
      {
        label: "ECG",
        color: "#63b3ed",
        points: this.store.bpm.map((p) => ({ t: p.t, v: p.ecg })),
      },
      {
        label: "PPG",
        color: "#b794f4",
        points: this.store.bpm.map((p) => ({ t: p.t, v: p.ppg })),
      },
    ];
    drawSeries(this.canvases["bpm"], bpmSeries, WINDOW_MS, now, 40, 200);
    drawSeries(
      this.canvases["rr"],
      [{ label: "RR", color: "#68d391", points: this.store.rr.map((p) => ({ t: p.t, v: p.ms })) }],
      WINDOW_MS,
      now,
      300,
      2000,
    );
    drawBands(
      this.canvases["affect"],
      this.store.affect.map((p) => ({
        t: p.t,
        parts: [p.positive, p.neutral, p.surprise, p.negative],
      })),
      ["#3fb76f", "#8d99ae", "#e0a93b", "#e05252"],
      ["positive", "neutral", "surprise", "negative"],
      WINDOW_MS,
      now,
    );
    drawSeries(
      this.canvases["indices"],
      [
        {
          label: "fatigue",
          color: "#e05252",
          points: this.store.states.map((s) => ({ t: s.t, v: s.fatigue })),
        },
        {
          label: "engagement",
          color: "#3fb76f",
          points: this.store.states.map((s) => ({ t: s.t, v: s.engagement })),
        },
        {
          label: "workload",
          color: "#63b3ed",
          points: this.store.states.map((s) => ({ t: s.t, v: s.workload })),
        },
      ],
      WINDOW_MS,
      now,
      0,
      1,
    );

    const state = this.store.latestState;
    if (state) {
      const fz = fatigueZone(state.fatigue, this.plan.fatigue_threshold);
      drawGauge(
        this.canvases["g-fatigue"], state.fatigue, ZONE_COLORS[fz], this.plan.fatigue_threshold,
      );
      const ez = engagementZone(state.engagement, this.plan.engagement_threshold);
      drawGauge(
        this.canvases["g-engagement"], state.engagement, ZONE_COLORS[ez],
        this.plan.engagement_threshold,
      );
      drawGauge(this.canvases["g-workload"], state.workload, "#63b3ed", null);
    }

    this.statusBox.textContent =
      `session ${this.store.sessionId}` +
      (this.store.paused ? " — PAUSED" : "") +
      (state ? ` — confidence ${state.confidence.toFixed(2)}` : "");

    // timeline and feed append incrementally
    const directives = this.store.directives;
    for (let i = this.rendered.directives; i < directives.length; i++) {
      this.timelineBox.prepend(this.directiveRow(directives[i]));
    }
    this.rendered.directives = directives.length;

    const alerts = this.store.alerts;
    for (let i = this.rendered.alerts; i < alerts.length; i++) {
      this.alertBox.prepend(this.alertRow(alerts[i]));
    }
    this.rendered.alerts = alerts.length;
  }

  private directiveRow(d: DirectiveData): HTMLElement {
    const row = el("div", "directive" + (d.rationale.some((r) => r.startsWith("OVERRIDE")) ? " override" : ""));
    row.append(
      el("span", "mono", `t+${Math.round(d.issued_at / 1000)}s`),
      el("span", undefined, `${d.task_category} L${d.difficulty_target} x${d.repetitions}`),
      el("span", undefined, `${d.pacing}${d.rest ? " · rest" : ""} · fb ${d.feedback_intensity}`),
      // rationale strings shown verbatim
      el("span", "rationale", d.rationale.join(", ")),
    );
    return row;
  }

  private alertRow(alert: AlertData): HTMLElement {
    const row = el("div", `alert sev-${alert.severity}`);
    row.append(
      el("span", "mono", `#${alert.alert_id}`),
      el("span", undefined, `${alert.kind} — ${alert.detail}`),
    );
    const ack = el("button", undefined, alert.acknowledged ? "acked" : "ack");
    ack.disabled = alert.acknowledged;
    ack.onclick = async () => {
      const result = await this.api.ackAlert(alert.alert_id);
      if (result.ok) {
        this.store.acknowledge(alert.alert_id);
        ack.disabled = true;
        ack.textContent = "acked";
      }
    };
    row.appendChild(ack);
    return row;
  }
}
