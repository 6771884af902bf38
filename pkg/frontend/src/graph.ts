import type { ApiClient } from "./api.js";
import type { Store } from "./state.js";
import type { CascadeResponse, ClassGraph, GraphNode, LayerInfo } from "./types.js";

const SVG_NS = "http://www.w3.org/2000/svg";
const WIDTH = 720;
const HEIGHT = 480;
const COLUMN_PAD = 70;
const ROW_PAD = 44;
const RADIUS = 13;

export interface GraphCallbacks {
  onHoverMembers?: (members: string[]) => void;
  onLeaveNode?: () => void;
  onPinChange?: (pinned: string[]) => void;
}

/** Layered class graph: one column per layer (model order), nodes top-down
 * by their importance order from the API, edge thickness proportional to
 * the API weight. In explore mode clicking pins a node; in cascade mode
 * clicking activates the cluster and renders the returned cascade, with
 * out-of-summary concepts listed in the right-hand panel.
 */
export class GraphView {
  readonly svg: SVGSVGElement;
  readonly notice: HTMLDivElement;
  readonly sidePanel: HTMLDivElement;
  lastAction: Promise<void> = Promise.resolve();
  graph: ClassGraph | null = null;
  cascade: CascadeResponse | null = null;

  private nodeEls = new Map<string, SVGGElement>();
  private positions = new Map<string, { x: number; y: number }>();
  private layerOrder: string[] = [];

  constructor(
    private root: HTMLElement,
    private api: ApiClient,
    private store: Store,
    layers: LayerInfo[],
    private callbacks: GraphCallbacks = {},
  ) {
    this.layerOrder = [...layers]
      .sort((a, b) => a.order_index - b.order_index)
      .map((layer) => layer.id);
    this.svg = document.createElementNS(SVG_NS, "svg");
    this.svg.setAttribute("class", "graph");
    this.svg.setAttribute("viewBox", `0 0 ${WIDTH} ${HEIGHT}`);
    this.notice = document.createElement("div");
    this.notice.className = "graph-notice hidden";
    this.sidePanel = document.createElement("div");
    this.sidePanel.className = "cascade-panel";
    this.root.appendChild(this.svg);
    this.root.appendChild(this.notice);
    this.root.appendChild(this.sidePanel);
  }

  /** Fetch and draw the class graph at the given importance threshold. */
  async load(classLabel: string, minImportance: number): Promise<void> {
    this.graph = await this.api.graph(classLabel, minImportance);
    this.cascade = null;
    this.render();
  }

  render(): void {
    this.svg.replaceChildren();
    this.sidePanel.replaceChildren();
    this.nodeEls.clear();
    this.positions.clear();
    const graph = this.graph;
    if (!graph || graph.nodes.length === 0) {
      this.notice.textContent = "no concepts above this importance threshold";
      this.notice.classList.remove("hidden");
      return;
    }
    this.notice.classList.add("hidden");

    const byLayer = new Map<string, GraphNode[]>();
    for (const node of graph.nodes) {
      const bucket = byLayer.get(node.layer) ?? [];
      bucket.push(node); // response order is already importance-descending
      byLayer.set(node.layer, bucket);
    }
    const visibleLayers = this.layerOrder.filter((layer) => byLayer.has(layer));
    visibleLayers.forEach((layer, column) => {
      const nodes = byLayer.get(layer)!;
      nodes.forEach((node, row) => {
        this.positions.set(node.node_id, {
          x: COLUMN_PAD + column * ((WIDTH - 2 * COLUMN_PAD) / Math.max(1, visibleLayers.length - 1) || 0),
          y: ROW_PAD + row * ROW_PAD,
        });
      });
    });

    const edgeGroup = document.createElementNS(SVG_NS, "g");
    edgeGroup.setAttribute("class", "edges");
    const maxWeight = Math.max(...graph.edges.map((e) => e.weight), 1);
    for (const edge of graph.edges) {
      const src = this.positions.get(edge.src_node);
      const dst = this.positions.get(edge.dst_node);
      if (!src || !dst) continue;
      const line = document.createElementNS(SVG_NS, "line");
      line.setAttribute("class", "gedge");
      line.setAttribute("x1", String(src.x));
      line.setAttribute("y1", String(src.y));
      line.setAttribute("x2", String(dst.x));
      line.setAttribute("y2", String(dst.y));
      line.setAttribute("stroke-width", String(1 + 5 * (edge.weight / maxWeight)));
      line.dataset.src = edge.src_node;
      line.dataset.dst = edge.dst_node;
      line.dataset.weight = String(edge.weight);
      edgeGroup.appendChild(line);
    }
    this.svg.appendChild(edgeGroup);

    const nodeGroup = document.createElementNS(SVG_NS, "g");
    nodeGroup.setAttribute("class", "nodes");
    for (const node of graph.nodes) {
      const pos = this.positions.get(node.node_id)!;
      const group = document.createElementNS(SVG_NS, "g");
      group.setAttribute("class", "gnode");
      group.setAttribute("transform", `translate(${pos.x} ${pos.y})`);
      group.dataset.node = node.node_id;
      group.dataset.layer = node.layer;
      group.dataset.members = node.members.join(",");
      group.dataset.importance = String(node.importance);
      const circle = document.createElementNS(SVG_NS, "circle");
      circle.setAttribute("r", String(RADIUS));
      const label = document.createElementNS(SVG_NS, "text");
      label.setAttribute("class", "gnode-label");
      label.setAttribute("dy", "4");
      label.textContent = node.node_id;
      group.append(circle, label);
      group.addEventListener("mouseenter", () => this.hoverNode(node));
      group.addEventListener("mouseleave", () => {
        group.classList.remove("hovered");
        this.setEdgeHighlight(node.node_id, false);
        this.callbacks.onLeaveNode?.();
      });
      group.addEventListener("click", () => {
        this.lastAction = this.clickNode(node);
      });
      nodeGroup.appendChild(group);
      this.nodeEls.set(node.node_id, group);
    }
    this.svg.appendChild(nodeGroup);
    this.refreshPins();
  }

  hoverNode(node: GraphNode): void {
    this.nodeEls.get(node.node_id)?.classList.add("hovered");
    this.setEdgeHighlight(node.node_id, true);
    this.callbacks.onHoverMembers?.(node.members);
  }

  private setEdgeHighlight(nodeId: string, on: boolean): void {
    this.svg.querySelectorAll<SVGLineElement>(".gedge").forEach((line) => {
      if (line.dataset.src === nodeId || line.dataset.dst === nodeId) {
        line.classList.toggle("hovered", on);
      }
    });
  }

  /** Explore mode: toggle pin. Cascade mode: activate the concept. */
  async clickNode(node: GraphNode): Promise<void> {
    if (this.store.get().mode === "cascade") {
      await this.runCascade(node.node_id);
      return;
    }
    this.store.togglePin(node.node_id);
    this.refreshPins();
    this.callbacks.onPinChange?.(this.store.get().pinned);
  }

  refreshPins(): void {
    const pinned = new Set(this.store.get().pinned);
    for (const [nodeId, el] of this.nodeEls) {
      el.classList.toggle("pinned", pinned.has(nodeId));
    }
  }

  /** POST the cascade and render triggered concepts: clusters inside the
   * class summary light up in place, the rest go to the side panel. */
  async runCascade(clusterId: string): Promise<void> {
    const classLabel = this.store.get().selectedClass ?? undefined;
    this.cascade = await this.api.cascade({
      cluster_id: clusterId,
      class_context: classLabel,
    });
    this.renderCascade();
  }

  renderCascade(): void {
    const cascade = this.cascade;
    this.svg.querySelectorAll(".cascade-hit").forEach((el) => el.classList.remove("cascade-hit"));
    this.svg.querySelectorAll(".cascade-seed").forEach((el) => el.classList.remove("cascade-seed"));
    this.sidePanel.replaceChildren();
    if (!cascade) return;
    this.nodeEls.get(cascade.seed_cluster)?.classList.add("cascade-seed");
    const heading = document.createElement("h3");
    heading.textContent = `cascade from ${cascade.seed_cluster}`;
    this.sidePanel.appendChild(heading);
    const outsideList = document.createElement("ul");
    outsideList.className = "cascade-outside";
    let anyTriggered = false;
    for (const layer of cascade.layers) {
      for (const triggered of layer.triggered) {
        anyTriggered = true;
        if (triggered.in_class_summary && this.nodeEls.has(triggered.cluster_id)) {
          this.nodeEls.get(triggered.cluster_id)!.classList.add("cascade-hit");
        } else {
          const item = document.createElement("li");
          item.dataset.cluster = triggered.cluster_id;
          item.dataset.neuron = triggered.neuron;
          item.dataset.score = String(triggered.score);
          item.textContent = `${layer.layer} ${triggered.cluster_id} (${triggered.neuron})`;
          outsideList.appendChild(item);
        }
      }
    }
    if (outsideList.children.length) {
      const label = document.createElement("div");
      label.className = "cascade-outside-label";
      label.textContent = "related concepts outside the class summary";
      this.sidePanel.append(label, outsideList);
    }
    if (!anyTriggered) {
      const empty = document.createElement("div");
      empty.className = "cascade-empty";
      empty.textContent = "nothing triggered";
      this.sidePanel.appendChild(empty);
    }
  }

  clearCascade(): void {
    this.cascade = null;
    this.renderCascade();
  }

  highlightCluster(clusterId: string): void {
    for (const [nodeId, el] of this.nodeEls) {
      el.classList.toggle("linked", nodeId === clusterId);
    }
  }

  clearClusterHighlight(): void {
    this.nodeEls.forEach((el) => el.classList.remove("linked"));
  }

  visibleNodeIds(): string[] {
    return [...this.nodeEls.keys()];
  }
}
