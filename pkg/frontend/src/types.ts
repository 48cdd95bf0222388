// Wire types mirroring the middleware's /ws/live events and /api payloads.

export interface AffectDist {
  positive: number;
  neutral: number;
  surprise: number;
  negative: number;
  dominant: string;
  confidence: number;
}

export interface FrameData {
  t: number;
  bpm_ecg: number | null;
  bpm_ppg: number | null;
  ppg_confidence: number | null;
  rr_recent: number[];
  accel: number[] | null;
  affect: AffectDist | null;
  staleness: Record<string, number | null>;
  quality: Record<string, string>;
}

export interface StateData {
  workload: number;
  engagement: number;
  fatigue: number;
  confidence: number;
  t: number;
}

export interface DirectiveData {
  task_category: string;
  difficulty_target: number;
  repetitions: number;
  duration_s: number;
  pacing: string;
  rest: boolean;
  feedback_intensity: string;
  rationale: string[];
  issued_at: number;
}

export interface AlertData {
  alert_id: number;
  kind: string;
  severity: string;
  t: number;
  detail: string;
  acknowledged: boolean;
}

export interface ReportData {
  exercise_id: string;
  category: string;
  success_rate: number;
  completion_time_s: number;
  errors: number;
  reps_done: number;
  ended_at: number;
  flags?: string[];
}

export type LiveEvent =
  | { type: "frame"; data: FrameData }
  | { type: "state"; data: StateData }
  | { type: "directive"; data: DirectiveData }
  | { type: "alert"; data: AlertData }
  | { type: "report"; data: ReportData };

export interface PlanData {
  schema_version: number;
  quotas: Record<string, number>;
  fatigue_threshold: number;
  engagement_threshold: number;
  max_difficulty: number;
  session_cap_s: number;
  start_difficulty: number;
  preferences: string[];
}

export interface RulesData {
  schema_version: number;
  success_high: number;
  success_low: number;
  dwell_s: number;
  [key: string]: number | boolean | string;
}

export interface ApiState {
  session_id: string;
  state: StateData | null;
  directive: DirectiveData;
  paused: boolean;
  alerts: AlertData[];
}

export type OverrideKind =
  | "SET_DIFFICULTY"
  | "FORCE_REST"
  | "SWITCH_CATEGORY"
  | "PAUSE"
  | "RESUME";
