// Application wiring: upload -> predict -> synthesize -> compare.
// At most one in-flight predict and one in-flight synthesize; newer
// submissions cancel older ones.

import { ApiError, SkycastClient, type ApiClient, type GradeMeta } from "./api.js";
import {
  dismissError,
  initialState,
  predictionSucceeded,
  requestFailed,
  selectComparison,
  startPrediction,
  startSynthesis,
  synthesisSucceeded,
  type ViewState,
} from "./state.js";
import { render, renderLegend } from "./ui.js";

function userMessage(err: unknown): string {
  if (err instanceof ApiError) {
    if (err.code === "no_sky_detected") return "No sky detected in this photo.";
    if (err.code === "malformed_image") return "That file does not look like a PNG or JPEG image.";
    if (err.code === "too_large") return "That image is too large to upload.";
    if (err.code === "unknown_grade") return "Unknown grade requested.";
    return `The server rejected the request (${err.status}).`;
  }
  return "Could not reach the skycast service.";
}

export function startApp(doc: Document, client: ApiClient): void {
  const root = {
    preview: doc.getElementById("preview")!,
    prediction: doc.getElementById("prediction")!,
    variants: doc.getElementById("variants")!,
    comparison: doc.getElementById("comparison")!,
    status: doc.getElementById("status")!,
  };
  const legend = doc.getElementById("legend")!;
  const fileInput = doc.getElementById("file-input") as HTMLInputElement;

  let state: ViewState = initialState();
  let grades: GradeMeta[] = [];
  let predictAbort: AbortController | null = null;
  let synthAbort: AbortController | null = null;
  let pendingSelection: string[] = [];

  const paint = () =>
    render(root, state, grades, {
      onToggle: (grade: string) => {
        pendingSelection = pendingSelection.filter((g) => g !== grade).concat(grade).slice(-2);
        if (pendingSelection.length === 2) {
          state = selectComparison(state, pendingSelection[0], pendingSelection[1]);
        }
        paint();
      },
      onDismiss: () => {
        state = dismissError(state);
        paint();
      },
    });

  client
    .meta()
    .then((meta) => {
      grades = meta.grades;
      renderLegend(legend, grades);
      paint();
    })
    .catch((err) => {
      state = requestFailed(state, userMessage(err));
      paint();
    });

  fileInput.addEventListener("change", async () => {
    const file = fileInput.files?.[0];
    if (!file) return;
    predictAbort?.abort();
    synthAbort?.abort();
    predictAbort = new AbortController();
    pendingSelection = [];
    state = startPrediction(state, URL.createObjectURL(file));
    paint();
    try {
      const prediction = await client.predict(file, predictAbort.signal);
      state = predictionSucceeded(state, prediction);
      paint();
      synthAbort = new AbortController();
      state = startSynthesis(state);
      paint();
      const synth = await client.synthesize(file, undefined, synthAbort.signal);
      state = synthesisSucceeded(state, synth.variants);
      paint();
    } catch (err) {
      if (err instanceof DOMException && err.name === "AbortError") return;
      state = requestFailed(state, userMessage(err));
      paint();
    }
  });

  paint();
}

if (typeof document !== "undefined" && document.getElementById("file-input")) {
  startApp(document, new SkycastClient(""));
}
