import { vi } from "vitest";

import cascadeFixture from "./fixtures/cascade.json";
import cascadeChain from "./fixtures/cascade_chain.json";
import cascadeZero from "./fixtures/cascade_zero.json";
import clustersFixture from "./fixtures/clusters.json";
import embeddingAll from "./fixtures/embedding_all.json";
import embeddingClass from "./fixtures/embedding_class.json";
import embeddingPinned from "./fixtures/embedding_pinned.json";
import graphClass00 from "./fixtures/graph_class00.json";
import layersFixture from "./fixtures/layers.json";
import manifestFixture from "./fixtures/manifest.json";
import metaFixture from "./fixtures/meta.json";
import neighborsFixture from "./fixtures/neighbors.json";
import patchesFixture from "./fixtures/patches.json";

export const fixtures = {
  manifest: manifestFixture,
  layers: layersFixture,
  clusters: clustersFixture,
  embeddingAll,
  embeddingClass,
  embeddingPinned,
  neighbors: neighborsFixture,
  patches: patchesFixture,
  graphClass00,
  cascade: cascadeFixture,
  cascadeChain,
  cascadeZero,
  meta: metaFixture,
};

export interface RecordedCall {
  method: string;
  url: string;
  body?: unknown;
}

export interface FixtureServer {
  calls: RecordedCall[];
  urls: () => string[];
  reset: () => void;
}

type Responder = (url: URL, body?: unknown) => unknown;

/** Replace global fetch with a router over the recorded API fixtures. */
export function installFixtureServer(overrides: Record<string, Responder> = {}): FixtureServer {
  const calls: RecordedCall[] = [];

  const route = (method: string, url: URL, body?: unknown): unknown => {
    const key = `${method} ${url.pathname}`;
    if (overrides[key]) return overrides[key](url, body);
    if (key === "GET /api/manifest") return fixtures.manifest;
    if (key === "GET /api/layers") return fixtures.layers;
    if (key === "GET /api/clusters") return fixtures.clusters;
    if (key === "GET /api/embedding") {
      const filter = url.searchParams.get("filter") ?? "all";
      if (filter === "all") return fixtures.embeddingAll;
      if (filter.startsWith("class:")) return fixtures.embeddingClass;
      if (filter === "pinned") {
        return url.searchParams.get("pinned")
          ? fixtures.embeddingPinned
          : { filter: "pinned", neurons: [] };
      }
      throw new Error(`unexpected filter ${filter}`);
    }
    if (key.startsWith("GET /api/neighbors/")) return fixtures.neighbors;
    if (key.startsWith("GET /api/patches/")) {
      return { ...fixtures.patches, neuron: decodeURIComponent(url.pathname.split("/").pop()!) };
    }
    if (key.startsWith("GET /api/graph/")) {
      const minimum = Number(url.searchParams.get("min_importance") ?? "0");
      const nodes = fixtures.graphClass00.nodes.filter((n) => n.importance >= minimum);
      const kept = new Set(nodes.map((n) => n.node_id));
      const edges = fixtures.graphClass00.edges.filter(
        (e) => kept.has(e.src_node) && kept.has(e.dst_node),
      );
      return { ...fixtures.graphClass00, nodes, edges };
    }
    if (key === "POST /api/cascade") return fixtures.cascade;
    throw new Error(`no fixture for ${key}`);
  };

  vi.stubGlobal(
    "fetch",
    vi.fn(async (input: RequestInfo | URL, init?: RequestInit) => {
      const url = new URL(String(input), "http://fixture");
      const method = init?.method ?? "GET";
      const body = init?.body ? JSON.parse(String(init.body)) : undefined;
      calls.push({ method, url: url.pathname + url.search, body });
      const payload = route(method, url, body);
      return new Response(JSON.stringify(payload), {
        status: 200,
        headers: { "Content-Type": "application/json" },
      });
    }),
  );

  return {
    calls,
    urls: () => calls.map((c) => `${c.method} ${c.url}`),
    reset: () => {
      calls.length = 0;
    },
  };
}

export function flush(): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, 0));
}
