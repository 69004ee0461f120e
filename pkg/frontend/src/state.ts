// View state: one active status at a time, comparison pair selectable only
// once variants exist. Pure transitions so the logic is testable without a
// DOM.

import type { PredictionResponse, Variant } from "./api.js";

export type Status =
  | { kind: "idle" }
  | { kind: "predicting" }
  | { kind: "synthesizing" }
  | { kind: "ready" }
  | { kind: "error"; message: string };

export interface ViewState {
  previewUrl: string | null;
  prediction: PredictionResponse | null;
  variants: Variant[];
  comparison: [string, string] | null;
  status: Status;
}

export function initialState(): ViewState {
  return {
    previewUrl: null,
    prediction: null,
    variants: [],
    comparison: null,
    status: { kind: "idle" },
  };
}

export function startPrediction(state: ViewState, previewUrl: string): ViewState {
  return {
    ...state,
    previewUrl,
    prediction: null,
    variants: [],
    comparison: null,
    status: { kind: "predicting" },
  };
}

export function predictionSucceeded(
  state: ViewState,
  prediction: PredictionResponse,
): ViewState {
  return { ...state, prediction, status: { kind: "ready" } };
}

export function startSynthesis(state: ViewState): ViewState {
  return { ...state, variants: [], comparison: null, status: { kind: "synthesizing" } };
}

export function synthesisSucceeded(state: ViewState, variants: Variant[]): ViewState {
  return { ...state, variants, status: { kind: "ready" } };
}

export function requestFailed(state: ViewState, message: string): ViewState {
  return { ...state, status: { kind: "error", message } };
}

export function dismissError(state: ViewState): ViewState {
  if (state.status.kind !== "error") return state;
  return { ...state, status: { kind: state.prediction ? "ready" : "idle" } };
}

export function selectComparison(
  state: ViewState,
  left: string,
  right: string,
): ViewState {
  const tags = new Set(state.variants.map((v) => v.grade));
  if (state.variants.length === 0 || !tags.has(left) || !tags.has(right)) {
    return state; // comparison only selectable once variants exist
  }
  return { ...state, comparison: [left, right] };
}
