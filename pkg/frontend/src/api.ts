// Typed client for the skycast HTTP API. The UI consumes these three routes
// and renders only server-provided labels, colors, and advice.

export interface GradeMeta {
  grade: string;
  color: string;
  advice: string;
  prompt: string;
  aqi_band: [number, number | null];
}

export interface MetaResponse {
  version: string;
  model_id: string;
  model_kind: string;
  grades: GradeMeta[];
}

export interface FilterMoments {
  theta: number;
  freq: number;
  mean: number;
  variance: number;
  skewness: number;
  kurtosis: number;
}

export interface PredictionResponse {
  grade: string;
  probabilities: number[];
  aqi_color: string;
  advice: string;
  prompt: string;
  feature_summary: FilterMoments[];
  model_id: string;
}

export interface Variant {
  grade: string;
  prompt: string;
  ssim: number;
  image_png_base64: string;
}

export interface SynthesizeResponse {
  variants: Variant[];
}

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

async function parseError(resp: Response): Promise<ApiError> {
  let code = "error";
  let message = `request failed (${resp.status})`;
  try {
    const doc = await resp.json();
    if (typeof doc.error === "string") code = doc.error;
    if (typeof doc.message === "string") message = doc.message;
  } catch {
    // keep the generic message; the UI never shows raw payloads
  }
  return new ApiError(resp.status, code, message);
}

export interface ApiClient {
  meta(signal?: AbortSignal): Promise<MetaResponse>;
  predict(file: Blob, signal?: AbortSignal): Promise<PredictionResponse>;
  synthesize(
    file: Blob,
    grades?: string[],
    signal?: AbortSignal,
  ): Promise<SynthesizeResponse>;
}

export class SkycastClient implements ApiClient {
  constructor(private readonly baseUrl: string = "") {}

  async meta(signal?: AbortSignal): Promise<MetaResponse> {
    const resp = await fetch(`${this.baseUrl}/api/meta`, { signal });
    if (!resp.ok) throw await parseError(resp);
    return (await resp.json()) as MetaResponse;
  }

  async predict(file: Blob, signal?: AbortSignal): Promise<PredictionResponse> {
    const body = new FormData();
    body.append("image", file, "upload.png");
    const resp = await fetch(`${this.baseUrl}/api/predict`, {
      method: "POST",
      body,
      signal,
    });
    if (!resp.ok) throw await parseError(resp);
    return (await resp.json()) as PredictionResponse;
  }

  async synthesize(
    file: Blob,
    grades?: string[],
    signal?: AbortSignal,
  ): Promise<SynthesizeResponse> {
    const body = new FormData();
    body.append("image", file, "upload.png");
    if (grades && grades.length > 0) body.append("grades", grades.join(","));
    const resp = await fetch(`${this.baseUrl}/api/synthesize`, {
      method: "POST",
      body,
      signal,
    });
    if (!resp.ok) throw await parseError(resp);
    return (await resp.json()) as SynthesizeResponse;
  }
}
