/** Graph view contract: layered layout in importance order, live importance
 * filtering with an empty-state notice, linked hover highlighting, and
 * pinning feeding the embedding's pinned filter. */

import { afterEach, beforeEach, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { GraphView } from "../src/graph.js";
import { Store } from "../src/state.js";
import type { LayerInfo } from "../src/types.js";
import { FixtureServer, fixtures, installFixtureServer } from "./helpers.js";

let server: FixtureServer;
let root: HTMLElement;
let store: Store;
let view: GraphView;
let hovered: string[][];

beforeEach(async () => {
  server = installFixtureServer();
  root = document.createElement("div");
  document.body.appendChild(root);
  store = new Store();
  store.update({ selectedClass: "class_00" });
  hovered = [];
  view = new GraphView(root, new ApiClient(), store, fixtures.layers as LayerInfo[], {
    onHoverMembers: (members) => hovered.push(members),
  });
  await view.load("class_00", 1.0);
  server.reset();
});

afterEach(() => {
  document.body.replaceChildren();
});

function nodeEl(nodeId: string): SVGGElement {
  const el = root.querySelector<SVGGElement>(`g.gnode[data-node="${nodeId}"]`);
  if (!el) throw new Error(`no node ${nodeId}`);
  return el;
}

describe("graph view", () => {
  it("renders the fixture's node and edge sets", () => {
    const nodes = [...root.querySelectorAll("g.gnode")].map(
      (el) => (el as SVGGElement).dataset.node,
    );
    expect(nodes).toEqual(fixtures.graphClass00.nodes.map((n) => n.node_id));
    const edges = [...root.querySelectorAll("line.gedge")].map((el) => {
      const line = el as SVGLineElement;
      return `${line.dataset.src}->${line.dataset.dst}:${line.dataset.weight}`;
    });
    expect({ nodes, edges }).toMatchSnapshot();
  });

  it("shows node importance values straight from the API", () => {
    for (const node of fixtures.graphClass00.nodes) {
      expect(nodeEl(node.node_id).dataset.importance).toBe(String(node.importance));
    }
  });

  it("orders nodes within a layer by the response importance order", () => {
    const byLayer = new Map<string, { id: string; y: number }[]>();
    for (const el of root.querySelectorAll<SVGGElement>("g.gnode")) {
      const transform = el.getAttribute("transform")!;
      const y = Number(/translate\([\d.]+ ([\d.]+)\)/.exec(transform)![1]);
      const layer = el.dataset.layer!;
      const list = byLayer.get(layer) ?? [];
      list.push({ id: el.dataset.node!, y });
      byLayer.set(layer, list);
    }
    for (const [layer, entries] of byLayer) {
      const expected = fixtures.graphClass00.nodes
        .filter((n) => n.layer === layer)
        .map((n) => n.node_id);
      const got = [...entries].sort((a, b) => a.y - b.y).map((e) => e.id);
      expect(got).toEqual(expected);
    }
  });

  it("edge thickness grows with the API weight", () => {
    const widths = [...root.querySelectorAll<SVGLineElement>("line.gedge")].map((line) => ({
      weight: Number(line.dataset.weight),
      width: Number(line.getAttribute("stroke-width")),
    }));
    const sorted = [...widths].sort((a, b) => a.weight - b.weight);
    for (let i = 1; i < sorted.length; i++) {
      expect(sorted[i].width).toBeGreaterThanOrEqual(sorted[i - 1].width);
    }
  });

  it("reloads at the slider threshold and shows a notice when empty", async () => {
    const beyond = fixtures.meta.max_importance + 1;
    await view.load("class_00", beyond);
    expect(server.urls()).toContain(
      `GET /api/graph/class_00?min_importance=${beyond}`,
    );
    expect(root.querySelectorAll("g.gnode").length).toBe(0);
    const notice = root.querySelector(".graph-notice")!;
    expect(notice.classList.contains("hidden")).toBe(false);
    expect(notice.textContent).toMatch(/importance/);
  });

  it("hover highlights the node, its edges, and its embedding members", () => {
    const fixture = fixtures.graphClass00.nodes[0];
    const el = nodeEl(fixture.node_id);
    el.dispatchEvent(new MouseEvent("mouseenter"));
    expect(el.classList.contains("hovered")).toBe(true);
    expect(hovered.at(-1)).toEqual(fixture.members);
    el.dispatchEvent(new MouseEvent("mouseleave"));
    expect(el.classList.contains("hovered")).toBe(false);
  });

  it("click pins the node and pinning is visible under filter=pinned", async () => {
    const target = fixtures.graphClass00.nodes[0].node_id;
    nodeEl(target).dispatchEvent(new MouseEvent("click"));
    await view.lastAction;
    expect(store.get().pinned).toEqual([target]);
    expect(nodeEl(target).classList.contains("pinned")).toBe(true);

    const api = new ApiClient();
    const pinnedView = await api.embedding("pinned", store.get().pinned);
    expect(server.urls()).toContain(
      `GET /api/embedding?filter=pinned&pinned=${encodeURIComponent(target)}`,
    );
    expect(pinnedView.neurons.length).toBeGreaterThan(0);

    nodeEl(target).dispatchEvent(new MouseEvent("click"));
    await view.lastAction;
    expect(store.get().pinned).toEqual([]);
    expect(nodeEl(target).classList.contains("pinned")).toBe(false);
  });

  it("highlightCluster marks the hovered neuron's owning node", () => {
    const target = fixtures.graphClass00.nodes[1].node_id;
    view.highlightCluster(target);
    expect(nodeEl(target).classList.contains("linked")).toBe(true);
    view.clearClusterHighlight();
    expect(nodeEl(target).classList.contains("linked")).toBe(false);
  });
});
