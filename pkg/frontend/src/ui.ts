// DOM rendering. Every label, color, and advice string comes from the server;
// the client holds no grade knowledge of its own.

import type { GradeMeta, PredictionResponse, Variant } from "./api.js";
import type { ViewState } from "./state.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderLegend(container: HTMLElement, grades: GradeMeta[]): void {
  container.replaceChildren();
  const list = el("ul", "legend-list");
  for (const g of grades) {
    const item = el("li", "legend-entry");
    const swatch = el("span", "legend-swatch");
    swatch.style.backgroundColor = g.color;
    const label = el("span", "legend-label", g.grade);
    const band =
      g.aqi_band[1] === null
        ? `${g.aqi_band[0]}+`
        : `${g.aqi_band[0]}–${g.aqi_band[1]}`;
    item.append(swatch, label, el("span", "legend-band", `AQI ${band}`));
    item.title = g.prompt;
    list.append(item);
  }
  container.append(list);
}

export function renderPrediction(
  container: HTMLElement,
  prediction: PredictionResponse,
  grades: GradeMeta[],
): void {
  container.replaceChildren();
  const badge = el("div", "grade-badge", prediction.grade);
  badge.style.backgroundColor = prediction.aqi_color;
  badge.setAttribute("role", "status");
  container.append(badge);

  const bars = el("div", "prob-bars");
  prediction.probabilities.forEach((p, i) => {
    const meta = grades[i];
    const row = el("div", "prob-row");
    const name = el("span", "prob-label", meta ? meta.grade : `class ${i}`);
    const track = el("div", "prob-track");
    const fill = el("div", "prob-fill");
    fill.style.width = `${Math.round(p * 100)}%`;
    if (meta) fill.style.backgroundColor = meta.color;
    track.append(fill);
    const pct = el("span", "prob-value", `${(p * 100).toFixed(1)}%`);
    row.append(name, track, pct);
    bars.append(row);
  });
  container.append(bars);
  container.append(el("p", "advice-text", prediction.advice));
  container.append(el("p", "prompt-text", `“${prediction.prompt}”`));
}

export function renderError(container: HTMLElement, message: string, onDismiss: () => void): void {
  container.replaceChildren();
  const banner = el("div", "error-banner");
  banner.setAttribute("role", "alert");
  banner.append(el("span", "error-text", message));
  const dismiss = el("button", "error-dismiss", "Dismiss");
  dismiss.type = "button";
  dismiss.addEventListener("click", onDismiss);
  banner.append(dismiss);
  container.append(banner);
}

export function renderVariants(
  container: HTMLElement,
  variants: Variant[],
  selected: [string, string] | null,
  onToggle: (grade: string) => void,
): void {
  container.replaceChildren();
  if (variants.length === 0) return;
  const strip = el("div", "variant-strip");
  for (const v of variants) {
    const card = el("button", "variant-card");
    card.type = "button";
    card.dataset.grade = v.grade;
    card.title = `${v.prompt} (SSIM ${v.ssim.toFixed(3)})`;
    card.setAttribute(
      "aria-pressed",
      selected !== null && selected.includes(v.grade) ? "true" : "false",
    );
    if (selected !== null && selected.includes(v.grade)) {
      card.classList.add("variant-selected");
    }
    const img = el("img", "variant-image") as HTMLImageElement;
    img.src = `data:image/png;base64,${v.image_png_base64}`;
    img.alt = v.grade;
    const caption = el("figcaption", "variant-caption", v.grade);
    const tip = el("span", "variant-tooltip", `${v.prompt} · SSIM ${v.ssim.toFixed(3)}`);
    const frame = el("figure", "variant-figure");
    frame.append(img, caption, tip);
    card.append(frame);
    card.addEventListener("click", () => onToggle(v.grade));
    strip.append(card);
  }
  container.append(strip);
}

export function renderComparison(
  container: HTMLElement,
  variants: Variant[],
  selected: [string, string] | null,
): void {
  container.replaceChildren();
  if (!selected) return;
  const [leftTag, rightTag] = selected;
  const left = variants.find((v) => v.grade === leftTag);
  const right = variants.find((v) => v.grade === rightTag);
  if (!left || !right) return;

  const pane = el("div", "compare-pane");
  const makeSide = (variant: Variant, side: string) => {
    const fig = el("figure", `compare-side compare-${side}`);
    const img = el("img", "compare-image") as HTMLImageElement;
    img.src = `data:image/png;base64,${variant.image_png_base64}`;
    img.alt = variant.grade;
    fig.append(img, el("figcaption", "compare-caption", variant.grade));
    fig.title = `${variant.prompt} (SSIM ${variant.ssim.toFixed(3)})`;
    return fig;
  };
  const leftFig = makeSide(left, "left");
  const rightFig = makeSide(right, "right");

  // the divider is a range input: draggable by pointer, adjustable by keyboard
  const divider = el("input", "compare-divider") as HTMLInputElement;
  divider.type = "range";
  divider.min = "0";
  divider.max = "100";
  divider.value = "50";
  divider.setAttribute("aria-label", "comparison divider");
  const apply = () => {
    const pct = Number(divider.value);
    leftFig.style.width = `${pct}%`;
    rightFig.style.width = `${100 - pct}%`;
  };
  divider.addEventListener("input", apply);
  apply();

  const sides = el("div", "compare-sides");
  sides.append(leftFig, rightFig);
  pane.append(sides, divider);
  container.append(pane);
}

export function render(
  root: {
    preview: HTMLElement;
    prediction: HTMLElement;
    variants: HTMLElement;
    comparison: HTMLElement;
    status: HTMLElement;
  },
  state: ViewState,
  grades: GradeMeta[],
  handlers: { onToggle: (grade: string) => void; onDismiss: () => void },
): void {
  root.preview.replaceChildren();
  if (state.previewUrl) {
    const img = el("img", "preview-image") as HTMLImageElement;
    img.src = state.previewUrl;
    img.alt = "uploaded sky";
    root.preview.append(img);
  }

  root.status.replaceChildren();
  if (state.status.kind === "error") {
    renderError(root.status, state.status.message, handlers.onDismiss);
  } else if (state.status.kind === "predicting") {
    root.status.append(el("p", "status-text", "Classifying…"));
  } else if (state.status.kind === "synthesizing") {
    root.status.append(el("p", "status-text", "Rendering grade variants…"));
  }

  root.prediction.replaceChildren();
  if (state.prediction && state.status.kind !== "error") {
    renderPrediction(root.prediction, state.prediction, grades);
  }

  renderVariants(root.variants, state.variants, state.comparison, handlers.onToggle);
  renderComparison(root.comparison, state.variants, state.comparison);
}
