/** Cascade mode contract: the toggle flips modes exclusively, clicking a
 * cluster posts to /api/cascade, triggered in-summary clusters light up in
 * the graph while the rest go to the side panel, and the zero-kernel and
 * identity-chain fixtures render nothing / the exact chain. */

import { afterEach, beforeEach, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { GraphView } from "../src/graph.js";
import { Store } from "../src/state.js";
import type { CascadeResponse, LayerInfo } from "../src/types.js";
import { FixtureServer, fixtures, installFixtureServer } from "./helpers.js";

let server: FixtureServer;
let root: HTMLElement;
let store: Store;
let view: GraphView;

function makeView(cascadeFixture: CascadeResponse): Promise<void> {
  server = installFixtureServer({
    "POST /api/cascade": () => cascadeFixture,
  });
  root = document.createElement("div");
  document.body.appendChild(root);
  store = new Store();
  store.update({ selectedClass: "class_00" });
  view = new GraphView(root, new ApiClient(), store, fixtures.layers as LayerInfo[]);
  return view.load("class_00", 1.0).then(() => server.reset());
}

afterEach(() => {
  document.body.replaceChildren();
});

describe("mode toggle", () => {
  it("cascade and class exploration are mutually exclusive", () => {
    const store = new Store();
    expect(store.get().mode).toBe("explore");
    expect(store.toggleMode()).toBe("cascade");
    expect(store.get().mode).toBe("cascade");
    expect(store.toggleMode()).toBe("explore");
    expect(store.get().mode).toBe("explore");
  });
});

describe("cascade interactions", () => {
  beforeEach(() => makeView(fixtures.cascade as CascadeResponse));

  it("clicking a cluster in cascade mode posts the cascade request", async () => {
    store.update({ mode: "cascade" });
    const seed = fixtures.cascade.seed_cluster;
    root
      .querySelector<SVGGElement>(`g.gnode[data-node="${seed}"]`)!
      .dispatchEvent(new MouseEvent("click"));
    await view.lastAction;
    const call = server.calls.find((c) => c.method === "POST");
    expect(call).toBeDefined();
    expect(call!.url).toBe("/api/cascade");
    expect(call!.body).toEqual({ cluster_id: seed, class_context: "class_00" });
  });

  it("renders in-summary clusters in the graph and others in the side panel", async () => {
    store.update({ mode: "cascade" });
    await view.runCascade(fixtures.cascade.seed_cluster);
    const inSummary = fixtures.cascade.layers
      .flatMap((layer) => layer.triggered)
      .filter((t) => t.in_class_summary)
      .map((t) => t.cluster_id);
    const outside = fixtures.cascade.layers
      .flatMap((layer) => layer.triggered)
      .filter((t) => !t.in_class_summary)
      .map((t) => t.cluster_id);
    const hitNodes = [...root.querySelectorAll("g.gnode.cascade-hit")].map(
      (el) => (el as SVGGElement).dataset.node,
    );
    expect(new Set(hitNodes)).toEqual(new Set(inSummary));
    const panelClusters = [...root.querySelectorAll(".cascade-outside li")].map(
      (el) => (el as HTMLElement).dataset.cluster,
    );
    expect(panelClusters).toEqual(outside);
    expect({ hit: [...new Set(hitNodes)].sort(), outside: panelClusters }).toMatchSnapshot();
  });

  it("clicking in explore mode pins instead of cascading", async () => {
    const seed = fixtures.cascade.seed_cluster;
    root
      .querySelector<SVGGElement>(`g.gnode[data-node="${seed}"]`)!
      .dispatchEvent(new MouseEvent("click"));
    await view.lastAction;
    expect(server.calls.filter((c) => c.method === "POST")).toEqual([]);
    expect(store.get().pinned).toEqual([seed]);
  });

  it("turning the toggle off clears the rendered cascade", async () => {
    store.update({ mode: "cascade" });
    await view.runCascade(fixtures.cascade.seed_cluster);
    expect(root.querySelectorAll(".cascade-hit").length).toBeGreaterThan(0);
    store.toggleMode();
    view.clearCascade();
    expect(root.querySelectorAll(".cascade-hit").length).toBe(0);
    expect(root.querySelector(".cascade-panel")!.children.length).toBe(0);
  });
});

describe("cascade fixtures from known bundles", () => {
  it("zero-kernel bundle triggers nothing", async () => {
    await makeView(fixtures.cascadeZero as CascadeResponse);
    store.update({ mode: "cascade" });
    await view.runCascade(fixtures.cascadeZero.seed_cluster);
    expect(root.querySelectorAll(".cascade-hit").length).toBe(0);
    expect(root.querySelectorAll(".cascade-outside li").length).toBe(0);
    expect(root.querySelector(".cascade-empty")).not.toBeNull();
  });

  it("identity-chain bundle renders the chain in layer order", async () => {
    await makeView(fixtures.cascadeChain as CascadeResponse);
    store.update({ mode: "cascade" });
    await view.runCascade(fixtures.cascadeChain.seed_cluster);
    // the chain fixture's clusters are not part of class_00's graph, so the
    // full chain appears, in order, in the side panel
    const rows = [...root.querySelectorAll(".cascade-outside li")].map((el) => ({
      cluster: (el as HTMLElement).dataset.cluster,
      neuron: (el as HTMLElement).dataset.neuron,
      score: (el as HTMLElement).dataset.score,
    }));
    const expected = fixtures.cascadeChain.layers.flatMap((layer) =>
      layer.triggered.map((t) => ({
        cluster: t.cluster_id,
        neuron: t.neuron,
        score: String(t.score),
      })),
    );
    expect(rows).toEqual(expected);
    expect(rows.map((r) => r.neuron)).toEqual(["l1:1", "l2:2"]);
  });
});
