/** Embedding view contract: hover issues the patches call and renders a
 * popup, click issues the neighbors call and highlights them, the class
 * filter draws exactly the class graph's member neurons, and every shown
 * number comes from the API fixture. */

import { afterEach, beforeEach, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { EmbeddingView } from "../src/embedding.js";
import { SideView } from "../src/sideview.js";
import { Store } from "../src/state.js";
import type { NeighborEntry } from "../src/types.js";
import { FixtureServer, fixtures, installFixtureServer } from "./helpers.js";

let server: FixtureServer;
let root: HTMLElement;
let view: EmbeddingView;
let store: Store;
let selected: { neuron: string; neighbors: NeighborEntry[] } | null;

beforeEach(async () => {
  server = installFixtureServer();
  root = document.createElement("div");
  document.body.appendChild(root);
  store = new Store();
  selected = null;
  view = new EmbeddingView(root, new ApiClient(), store, {
    onSelect: (neuron, neighbors) => {
      selected = { neuron, neighbors };
    },
  });
  await view.load("all");
  server.reset();
});

afterEach(() => {
  document.body.replaceChildren();
});

function rectFor(neuron: string): SVGRectElement {
  const rect = root.querySelector<SVGRectElement>(`rect[data-neuron="${neuron}"]`);
  if (!rect) throw new Error(`no rect for ${neuron}`);
  return rect;
}

describe("embedding view", () => {
  it("draws one rectangle per neuron from the all filter", () => {
    const drawn = root.querySelectorAll("rect.neuron");
    expect(drawn.length).toBe(fixtures.embeddingAll.neurons.length);
    expect(view.drawnNeurons().sort()).toMatchSnapshot();
  });

  it("hover issues the patches request and renders the popup", async () => {
    const neuron = fixtures.meta.neuron;
    rectFor(neuron).dispatchEvent(new MouseEvent("mouseenter"));
    await view.lastAction;
    expect(server.urls()).toContain(`GET /api/patches/${encodeURIComponent(neuron)}?limit=3`);
    const popup = root.querySelector(".patch-popup")!;
    expect(popup.classList.contains("hidden")).toBe(false);
    const chips = popup.querySelectorAll(".patch-chip");
    expect(chips.length).toBe(fixtures.patches.patches.length);
    // rendered patch metadata is exactly the API payload
    const first = chips[0] as HTMLElement;
    expect(first.dataset.imageId).toBe(String(fixtures.patches.patches[0].image_id));
    expect(first.dataset.bbox).toBe(fixtures.patches.patches[0].bbox.join(","));
    rectFor(neuron).dispatchEvent(new MouseEvent("mouseleave"));
    expect(popup.classList.contains("hidden")).toBe(true);
  });

  it("click issues the neighbors request, marks the selection, highlights neighbors", async () => {
    const neuron = fixtures.meta.neuron;
    rectFor(neuron).dispatchEvent(new MouseEvent("click"));
    await view.lastAction;
    expect(server.urls()).toContain(`GET /api/neighbors/${encodeURIComponent(neuron)}?k=10`);
    expect(rectFor(neuron).classList.contains("selected")).toBe(true);
    expect(root.querySelector(".select-marker")).not.toBeNull();
    for (const entry of fixtures.neighbors.neighbors) {
      expect(rectFor(entry.neuron).classList.contains("neighbor")).toBe(true);
    }
    expect(selected?.neuron).toBe(neuron);
    expect(selected?.neighbors).toEqual(fixtures.neighbors.neighbors);
    expect(store.get().selectedNeuron).toBe(neuron);
  });

  it("class filter draws exactly the class graph's member neurons", async () => {
    await view.load("class:class_00");
    expect(server.urls()).toContain("GET /api/embedding?filter=class%3Aclass_00");
    const graphMembers = new Set(
      fixtures.graphClass00.nodes.flatMap((node) => node.members),
    );
    expect(new Set(view.drawnNeurons())).toEqual(graphMembers);
  });

  it("zoom and pan update the plot transform", () => {
    const before = view.transform();
    view.svg.dispatchEvent(new WheelEvent("wheel", { deltaY: -120, cancelable: true }));
    expect(view.transform().scale).toBeGreaterThan(before.scale);
    view.svg.dispatchEvent(new MouseEvent("pointerdown", { clientX: 10, clientY: 10 }));
    view.svg.dispatchEvent(new MouseEvent("pointermove", { clientX: 30, clientY: 25 }));
    view.svg.dispatchEvent(new MouseEvent("pointerup", {}));
    const after = view.transform();
    expect([after.tx, after.ty]).toEqual([20, 15]);
    expect(view.plot.getAttribute("transform")).toContain("translate(20 15)");
  });

  it("cross-highlighting marks exactly the requested neurons", () => {
    const names = fixtures.embeddingAll.neurons.slice(0, 3).map((n) => n.neuron);
    view.highlightNeurons(names);
    const linked = [...root.querySelectorAll("rect.linked")].map(
      (el) => (el as SVGRectElement).dataset.neuron,
    );
    expect(linked.sort()).toEqual([...names].sort());
    view.clearHighlights();
    expect(root.querySelectorAll("rect.linked").length).toBe(0);
  });
});

describe("side view", () => {
  it("lists neighbors with the exact API cosine values and their patches", async () => {
    const pane = document.createElement("div");
    document.body.appendChild(pane);
    const side = new SideView(pane, new ApiClient(), 2);
    await side.show(fixtures.meta.neuron, fixtures.neighbors.neighbors);
    const items = pane.querySelectorAll("li");
    expect(items.length).toBe(fixtures.neighbors.neighbors.length);
    fixtures.neighbors.neighbors.forEach((entry, index) => {
      const item = items[index] as HTMLElement;
      expect(item.dataset.neuron).toBe(entry.neuron);
      expect(item.dataset.cosine).toBe(String(entry.cosine));
      expect(item.querySelectorAll(".patch-chip").length).toBe(
        fixtures.patches.patches.length,
      );
    });
    for (const entry of fixtures.neighbors.neighbors) {
      expect(server.urls()).toContain(
        `GET /api/patches/${encodeURIComponent(entry.neuron)}?limit=2`,
      );
    }
  });
});
