/** JSON payload shapes served by the game service (schema 1). */

export interface CellRef {
  x: number;
  y: number;
}

export interface ComposedExplanation {
  schema: number;
  kind: "composed";
  domain: string;
  grid: { width: number; height: number };
  advised_action: number;
  indices: number[][];
  actions: number[][];
  delta: number[][];
  path: {
    label: string;
    x: number;
    y: number;
    features: { name: string; contribution: number }[];
  }[];
  feature_budget: number;
}

export interface SaliencyExplanation {
  schema: number;
  kind: "saliency";
  domain: string;
  grid: { width: number; height: number };
  maps: { feature: string; values: number[][] }[];
  global_influences: { name: string; influence: number }[];
  diagnostics: Record<string, unknown>;
}

export type Explanation = ComposedExplanation | SaliencyExplanation;

export interface StepPayload {
  schema: number;
  session_id: string;
  condition: "composed" | "saliency";
  trial_index: number;
  step: number;
  steps_per_trial: number;
  grid: { width: number; height: number };
  current: CellRef;
  last: CellRef | null;
  advised: { dx: number; dy: number; cell: CellRef };
  occupied: boolean;
  accumulated_reward: number;
  requests: number[][];
  explanation: Explanation;
}

export interface SessionInfo {
  id: string;
  condition_order: string[];
  steps_per_trial: number;
  trials: number;
}

export interface ActionOutcome {
  reward: number;
  followed: boolean;
  accumulated_reward: number;
  step: number;
  trial_index: number;
  trial_complete: boolean;
  session_complete: boolean;
}

export interface QuestionnaireAnswers {
  understand: number;
  satisfying: number;
  detailed: number;
  complete: number;
  actionable: number;
  reliable: number;
  trustworthy: number;
  followed_advice: number;
  confidence: number;
  strategy: string;
  attention_checks: string[];
  age?: string;
  gender?: string;
  education?: string;
  country?: string;
}
