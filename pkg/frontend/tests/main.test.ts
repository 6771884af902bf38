/** App wiring: bootstrap builds the header controls, loads both views,
 * links hover across views in both directions, and the header toggle
 * switches between class exploration and cascade mode. */

import { afterEach, beforeEach, describe, expect, it } from "vitest";

import { bootstrap, type App } from "../src/main.js";
import { FixtureServer, fixtures, installFixtureServer } from "./helpers.js";

let server: FixtureServer;
let root: HTMLElement;
let app: App;

beforeEach(async () => {
  server = installFixtureServer();
  root = document.createElement("div");
  document.body.appendChild(root);
  app = await bootstrap(root, "");
  server.reset();
});

afterEach(() => {
  document.body.replaceChildren();
});

describe("bootstrap", () => {
  it("builds header controls from the manifest", () => {
    const options = [...root.querySelectorAll<HTMLOptionElement>(".class-select option")];
    expect(options.map((o) => o.value)).toEqual(fixtures.manifest.classes);
    expect(root.querySelector(".cascade-toggle")).not.toBeNull();
    expect(root.querySelector(".importance-slider")).not.toBeNull();
  });

  it("loads the scatter and the first class graph on startup", () => {
    expect(root.querySelectorAll("rect.neuron").length).toBe(
      fixtures.embeddingAll.neurons.length,
    );
    expect(root.querySelectorAll("g.gnode").length).toBeGreaterThan(0);
  });

  it("selecting a class reloads the graph", async () => {
    await app.selectClass("class_01");
    expect(server.urls()).toContain("GET /api/graph/class_01?min_importance=0");
    expect(app.store.get().selectedClass).toBe("class_01");
  });

  it("moving the importance slider refetches the graph", async () => {
    await app.setMinImportance(3);
    expect(server.urls()).toContain(
      `GET /api/graph/${app.store.get().selectedClass}?min_importance=3`,
    );
  });

  it("hovering a graph node highlights its members in the embedding", () => {
    const node = root.querySelector<SVGGElement>("g.gnode")!;
    node.dispatchEvent(new MouseEvent("mouseenter"));
    const members = node.dataset.members!.split(",");
    const linked = [...root.querySelectorAll<SVGRectElement>("rect.linked")].map(
      (el) => el.dataset.neuron,
    );
    expect(new Set(linked)).toEqual(new Set(members));
    node.dispatchEvent(new MouseEvent("mouseleave"));
    expect(root.querySelectorAll("rect.linked").length).toBe(0);
  });

  it("hovering a neuron highlights its cluster in the graph", async () => {
    const rect = root.querySelector<SVGRectElement>("rect.neuron")!;
    rect.dispatchEvent(new MouseEvent("mouseenter"));
    await app.embedding.lastAction;
    const cluster = rect.dataset.cluster!;
    const linkedNode = root.querySelector<SVGGElement>("g.gnode.linked");
    if (app.graph.visibleNodeIds().includes(cluster)) {
      expect(linkedNode?.dataset.node).toBe(cluster);
    } else {
      expect(linkedNode).toBeNull();
    }
  });

  it("the header toggle flips cascade mode on and off", () => {
    const toggle = root.querySelector<HTMLButtonElement>(".cascade-toggle")!;
    expect(app.store.get().mode).toBe("explore");
    toggle.dispatchEvent(new MouseEvent("click"));
    expect(app.store.get().mode).toBe("cascade");
    expect(toggle.textContent).toContain("on");
    expect(root.classList.contains("cascade-mode")).toBe(true);
    toggle.dispatchEvent(new MouseEvent("click"));
    expect(app.store.get().mode).toBe("explore");
    expect(root.classList.contains("cascade-mode")).toBe(false);
  });

  it("switching the filter to pinned requests pinned neuron positions", async () => {
    app.store.update({ pinned: [fixtures.meta.multi_cluster] });
    await app.setFilter("pinned");
    expect(server.urls()).toContain(
      `GET /api/embedding?filter=pinned&pinned=${encodeURIComponent(fixtures.meta.multi_cluster)}`,
    );
  });
});
