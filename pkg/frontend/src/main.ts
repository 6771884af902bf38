import { ApiClient } from "./api.js";
import { EmbeddingView } from "./embedding.js";
import { GraphView } from "./graph.js";
import { SideView } from "./sideview.js";
import { Store } from "./state.js";

declare global {
  interface Window {
    API_BASE?: string;
  }
}

export interface App {
  store: Store;
  embedding: EmbeddingView;
  graph: GraphView;
  side: SideView;
  selectClass: (label: string) => Promise<void>;
  setFilter: (filter: string) => Promise<void>;
  setMinImportance: (value: number) => Promise<void>;
  toggleCascade: () => void;
}

/** Wire header controls, embedding view, side view, and graph view together. */
export async function bootstrap(root: HTMLElement, baseUrl?: string): Promise<App> {
  const api = new ApiClient(baseUrl ?? window.API_BASE ?? "");
  const store = new Store();
  const manifest = await api.manifest();

  root.replaceChildren();
  const header = document.createElement("header");
  const main = document.createElement("main");
  const embeddingPane = document.createElement("section");
  embeddingPane.className = "embedding-pane";
  const sidePane = document.createElement("section");
  sidePane.className = "side-pane";
  const graphPane = document.createElement("section");
  graphPane.className = "graph-pane";
  main.append(embeddingPane, sidePane, graphPane);
  root.append(header, main);

  // header controls
  const classSelect = document.createElement("select");
  classSelect.className = "class-select";
  for (const label of manifest.classes) {
    const option = document.createElement("option");
    option.value = label;
    option.textContent = label;
    classSelect.appendChild(option);
  }
  const filterSelect = document.createElement("select");
  filterSelect.className = "filter-select";
  for (const value of ["all", "class", "pinned"]) {
    const option = document.createElement("option");
    option.value = value;
    option.textContent = `neurons: ${value}`;
    filterSelect.appendChild(option);
  }
  const slider = document.createElement("input");
  slider.type = "range";
  slider.className = "importance-slider";
  slider.min = "0";
  slider.max = "50";
  slider.step = "0.5";
  slider.value = "1";
  const cascadeToggle = document.createElement("button");
  cascadeToggle.className = "cascade-toggle";
  cascadeToggle.textContent = "concept cascade: off";
  header.append(classSelect, filterSelect, slider, cascadeToggle);

  const side = new SideView(sidePane, api);
  const embedding = new EmbeddingView(embeddingPane, api, store, {
    onSelect: (neuron, neighbors) => {
      side.show(neuron, neighbors);
    },
    onHoverNeuron: (_neuron, clusterId) => graph.highlightCluster(clusterId),
    onLeaveNeuron: () => graph.clearClusterHighlight(),
  });
  const graph: GraphView = new GraphView(graphPane, api, store, manifest.layers, {
    onHoverMembers: (members) => embedding.highlightNeurons(members),
    onLeaveNode: () => embedding.clearHighlights(),
    onPinChange: async () => {
      if (store.get().embeddingFilter === "pinned") {
        await embedding.load("pinned", store.get().pinned);
      }
    },
  });

  const app: App = {
    store,
    embedding,
    graph,
    side,
    async selectClass(label: string) {
      store.update({ selectedClass: label });
      classSelect.value = label;
      await graph.load(label, store.get().minImportance);
      if (store.get().embeddingFilter.startsWith("class:")) {
        store.update({ embeddingFilter: `class:${label}` });
        await embedding.load(`class:${label}`);
      }
    },
    async setFilter(filter: string) {
      store.update({ embeddingFilter: filter });
      await embedding.load(filter, filter === "pinned" ? store.get().pinned : undefined);
    },
    async setMinImportance(value: number) {
      store.update({ minImportance: value });
      const label = store.get().selectedClass;
      if (label) await graph.load(label, value);
    },
    toggleCascade() {
      const mode = store.toggleMode();
      cascadeToggle.textContent = `concept cascade: ${mode === "cascade" ? "on" : "off"}`;
      root.classList.toggle("cascade-mode", mode === "cascade");
      if (mode === "explore") graph.clearCascade();
    },
  };

  classSelect.addEventListener("change", () => void app.selectClass(classSelect.value));
  filterSelect.addEventListener("change", () => {
    const choice = filterSelect.value;
    const filter =
      choice === "class" ? `class:${store.get().selectedClass ?? ""}` : choice;
    void app.setFilter(filter);
  });
  slider.addEventListener("input", () => void app.setMinImportance(Number(slider.value)));
  cascadeToggle.addEventListener("click", () => app.toggleCascade());

  await embedding.load("all");
  if (manifest.classes.length) {
    await app.selectClass(manifest.classes[0]);
  }
  return app;
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  void bootstrap(document.getElementById("app")!);
}
