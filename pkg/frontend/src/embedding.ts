import type { ApiClient } from "./api.js";
import type { Store } from "./state.js";
import type { EmbeddingNeuron, NeighborEntry, PatchInfo } from "./types.js";

const SVG_NS = "http://www.w3.org/2000/svg";
const WIDTH = 640;
const HEIGHT = 480;
const PAD = 24;
const RECT = 9;

export interface EmbeddingCallbacks {
  onSelect?: (neuron: string, neighbors: NeighborEntry[]) => void;
  onHoverNeuron?: (neuron: string, clusterId: string) => void;
  onLeaveNeuron?: () => void;
}

/** Scatter of all neurons at their 2D layout positions.
 *
 * Hover shows the neuron's example patches in a popup; click selects the
 * neuron (inner white marker), highlights its embedding neighbors, and
 * hands them to the side view. Wheel zooms, drag pans. Positions, patch
 * boxes, and cosine values all come straight from the API.
 */
export class EmbeddingView {
  readonly svg: SVGSVGElement;
  readonly plot: SVGGElement;
  readonly popup: HTMLDivElement;
  lastAction: Promise<void> = Promise.resolve();

  private scale = 1;
  private tx = 0;
  private ty = 0;
  private dragging: { x: number; y: number } | null = null;
  private rects = new Map<string, SVGRectElement>();
  private clusterOf = new Map<string, string>();

  constructor(
    private root: HTMLElement,
    private api: ApiClient,
    private store: Store,
    private callbacks: EmbeddingCallbacks = {},
  ) {
    this.svg = document.createElementNS(SVG_NS, "svg");
    this.svg.setAttribute("class", "embedding");
    this.svg.setAttribute("viewBox", `0 0 ${WIDTH} ${HEIGHT}`);
    this.plot = document.createElementNS(SVG_NS, "g");
    this.plot.setAttribute("class", "plot");
    this.svg.appendChild(this.plot);
    this.popup = document.createElement("div");
    this.popup.className = "patch-popup hidden";
    this.root.appendChild(this.svg);
    this.root.appendChild(this.popup);

    this.svg.addEventListener("wheel", (event) => {
      event.preventDefault();
      this.zoomBy(event.deltaY < 0 ? 1.15 : 1 / 1.15);
    });
    this.svg.addEventListener("pointerdown", (event) => {
      this.dragging = { x: event.clientX, y: event.clientY };
    });
    this.svg.addEventListener("pointermove", (event) => {
      if (!this.dragging) return;
      this.tx += event.clientX - this.dragging.x;
      this.ty += event.clientY - this.dragging.y;
      this.dragging = { x: event.clientX, y: event.clientY };
      this.applyTransform();
    });
    this.svg.addEventListener("pointerup", () => {
      this.dragging = null;
    });
  }

  /** Fetch positions for the given filter and redraw the scatter. */
  async load(filter: string, pinned?: string[]): Promise<void> {
    const view = await this.api.embedding(filter, pinned);
    this.render(view.neurons);
  }

  render(neurons: EmbeddingNeuron[]): void {
    this.plot.replaceChildren();
    this.rects.clear();
    this.clusterOf.clear();
    const xs = neurons.map((n) => n.x);
    const ys = neurons.map((n) => n.y);
    const toScreen = makeScale(xs, ys);
    for (const item of neurons) {
      const [sx, sy] = toScreen(item.x, item.y);
      const rect = document.createElementNS(SVG_NS, "rect");
      rect.setAttribute("class", "neuron");
      rect.setAttribute("x", String(sx - RECT / 2));
      rect.setAttribute("y", String(sy - RECT / 2));
      rect.setAttribute("width", String(RECT));
      rect.setAttribute("height", String(RECT));
      rect.dataset.neuron = item.neuron;
      rect.dataset.cluster = item.cluster_id;
      rect.addEventListener("mouseenter", () => {
        this.lastAction = this.hoverNeuron(item.neuron, item.cluster_id, rect);
      });
      rect.addEventListener("mouseleave", () => {
        this.hidePopup();
        this.callbacks.onLeaveNeuron?.();
      });
      rect.addEventListener("click", () => {
        this.lastAction = this.selectNeuron(item.neuron);
      });
      this.plot.appendChild(rect);
      this.rects.set(item.neuron, rect);
      this.clusterOf.set(item.neuron, item.cluster_id);
    }
    this.applyTransform();
  }

  /** Hover: show example patches and cross-highlight the owning cluster. */
  async hoverNeuron(neuron: string, clusterId: string, anchor: SVGRectElement): Promise<void> {
    this.callbacks.onHoverNeuron?.(neuron, clusterId);
    const response = await this.api.patches(neuron, 3);
    this.popup.replaceChildren();
    const title = document.createElement("div");
    title.className = "popup-title";
    title.textContent = neuron;
    this.popup.appendChild(title);
    for (const patch of response.patches) {
      this.popup.appendChild(renderPatchChip(patch));
    }
    this.popup.classList.remove("hidden");
    this.popup.style.left = `${Number(anchor.getAttribute("x")) + RECT}px`;
    this.popup.style.top = `${Number(anchor.getAttribute("y")) + RECT}px`;
  }

  hidePopup(): void {
    this.popup.classList.add("hidden");
  }

  /** Click: mark the neuron, highlight its neighbors, feed the side view. */
  async selectNeuron(neuron: string): Promise<void> {
    this.store.update({ selectedNeuron: neuron });
    const response = await this.api.neighbors(neuron, 10);
    for (const rect of this.rects.values()) {
      rect.classList.remove("selected", "neighbor");
    }
    this.plot.querySelectorAll(".select-marker").forEach((el) => el.remove());
    const own = this.rects.get(neuron);
    if (own) {
      own.classList.add("selected");
      const marker = document.createElementNS(SVG_NS, "rect");
      marker.setAttribute("class", "select-marker");
      marker.setAttribute("x", String(Number(own.getAttribute("x")) + 3));
      marker.setAttribute("y", String(Number(own.getAttribute("y")) + 3));
      marker.setAttribute("width", String(RECT - 6));
      marker.setAttribute("height", String(RECT - 6));
      this.plot.appendChild(marker);
    }
    for (const entry of response.neighbors) {
      this.rects.get(entry.neuron)?.classList.add("neighbor");
    }
    this.callbacks.onSelect?.(neuron, response.neighbors);
  }

  /** Cross-highlight from the graph view: mark the given neurons. */
  highlightNeurons(neurons: string[]): void {
    const wanted = new Set(neurons);
    for (const [name, rect] of this.rects) {
      rect.classList.toggle("linked", wanted.has(name));
    }
  }

  clearHighlights(): void {
    for (const rect of this.rects.values()) rect.classList.remove("linked");
  }

  drawnNeurons(): string[] {
    return [...this.rects.keys()];
  }

  zoomBy(factor: number): void {
    this.scale = Math.min(20, Math.max(0.05, this.scale * factor));
    this.applyTransform();
  }

  transform(): { scale: number; tx: number; ty: number } {
    return { scale: this.scale, tx: this.tx, ty: this.ty };
  }

  private applyTransform(): void {
    this.plot.setAttribute(
      "transform",
      `translate(${this.tx} ${this.ty}) scale(${this.scale})`,
    );
  }
}

function makeScale(xs: number[], ys: number[]): (x: number, y: number) => [number, number] {
  const xMin = Math.min(...xs, 0);
  const xMax = Math.max(...xs, 1);
  const yMin = Math.min(...ys, 0);
  const yMax = Math.max(...ys, 1);
  const xSpan = xMax - xMin || 1;
  const ySpan = yMax - yMin || 1;
  return (x, y) => [
    PAD + ((x - xMin) / xSpan) * (WIDTH - 2 * PAD),
    PAD + ((y - yMin) / ySpan) * (HEIGHT - 2 * PAD),
  ];
}

export function renderPatchChip(patch: PatchInfo): HTMLElement {
  const chip = document.createElement("div");
  chip.className = "patch-chip";
  chip.dataset.imageId = String(patch.image_id);
  chip.dataset.bbox = patch.bbox.join(",");
  const label = document.createElement("span");
  label.className = "patch-label";
  label.textContent = `${patch.class_label} #${patch.image_id}`;
  chip.appendChild(label);
  if (patch.source_path) {
    // pixels are cropped client-side from the referenced static image
    const img = document.createElement("img");
    img.src = patch.source_path;
    img.alt = `${patch.class_label} patch`;
    chip.appendChild(img);
  }
  return chip;
}
