import type { ApiClient } from "./api.js";
import { renderPatchChip } from "./embedding.js";
import type { NeighborEntry } from "./types.js";

/** Bottom-left neighbor panel: the selected neuron's neighbors with their
 * example patches. Cosine values are shown exactly as the API returned. */
export class SideView {
  lastAction: Promise<void> = Promise.resolve();

  constructor(
    private root: HTMLElement,
    private api: ApiClient,
    private patchesPerNeighbor = 2,
  ) {
    this.root.classList.add("side-view");
  }

  show(neuron: string, neighbors: NeighborEntry[]): Promise<void> {
    this.lastAction = this.render(neuron, neighbors);
    return this.lastAction;
  }

  private async render(neuron: string, neighbors: NeighborEntry[]): Promise<void> {
    this.root.replaceChildren();
    const heading = document.createElement("h3");
    heading.textContent = `neighbors of ${neuron}`;
    this.root.appendChild(heading);
    const list = document.createElement("ul");
    this.root.appendChild(list);
    for (const entry of neighbors) {
      const item = document.createElement("li");
      item.dataset.neuron = entry.neuron;
      item.dataset.cosine = String(entry.cosine);
      const name = document.createElement("span");
      name.className = "neighbor-name";
      name.textContent = entry.neuron;
      const cosine = document.createElement("span");
      cosine.className = "neighbor-cosine";
      cosine.textContent = entry.cosine.toFixed(3);
      item.append(name, cosine);
      list.appendChild(item);
      const patches = await this.api.patches(entry.neuron, this.patchesPerNeighbor);
      for (const patch of patches.patches) {
        item.appendChild(renderPatchChip(patch));
      }
    }
  }
}
