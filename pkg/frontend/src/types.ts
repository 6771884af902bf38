/** Response shapes of the summary API. The UI renders these verbatim and
 * never derives domain numbers of its own. */

export interface LayerInfo {
  id: string;
  channels: number;
  height: number;
  width: number;
  order_index: number;
}

export interface ManifestSummary {
  digest: string;
  layers: LayerInfo[];
  connections: { src_layer: string; dst_layer: string }[];
  num_images: number;
  classes: string[];
}

export interface ClusterInfo {
  cluster_id: string;
  layer_id: string;
  members: string[];
}

export interface EmbeddingNeuron {
  neuron: string;
  x: number;
  y: number;
  cluster_id: string;
}

export interface EmbeddingView {
  filter: string;
  neurons: EmbeddingNeuron[];
}

export interface NeighborEntry {
  neuron: string;
  cosine: number;
}

export interface NeighborsResponse {
  neuron: string;
  neighbors: NeighborEntry[];
}

export interface PatchInfo {
  image_id: number;
  bbox: [number, number, number, number];
  class_label: string;
  source_path: string | null;
}

export interface PatchesResponse {
  neuron: string;
  patches: PatchInfo[];
}

export interface GraphNode {
  node_id: string;
  layer: string;
  members: string[];
  importance: number;
}

export interface GraphEdge {
  src_node: string;
  dst_node: string;
  weight: number;
}

export interface ClassGraph {
  class: string;
  nodes: GraphNode[];
  edges: GraphEdge[];
}

export interface CascadeTriggered {
  neuron: string;
  score: number;
  cluster_id: string;
  in_class_summary: boolean | null;
}

export interface CascadeLayer {
  layer: string;
  triggered: CascadeTriggered[];
  edges: { src: string; dst: string; strength: number }[];
}

export interface CascadeResponse {
  seed_cluster: string;
  layers: CascadeLayer[];
}

export interface CascadeRequest {
  cluster_id: string;
  trigger_top_n?: number;
  class_context?: string;
}
