/** Shared view state. Cascade mode and class-exploration mode are the two
 * positions of one toggle, so they can never be active together. */

export type Mode = "explore" | "cascade";

export interface ViewState {
  selectedClass: string | null;
  embeddingFilter: string; // "all" | "class:<label>" | "pinned"
  selectedNeuron: string | null;
  pinned: string[]; // pinned cluster/node ids, in pin order
  mode: Mode;
  minImportance: number;
}

export type Listener = (state: ViewState) => void;

export class Store {
  private state: ViewState = {
    selectedClass: null,
    embeddingFilter: "all",
    selectedNeuron: null,
    pinned: [],
    mode: "explore",
    minImportance: 0,
  };
  private listeners: Listener[] = [];

  get(): ViewState {
    return this.state;
  }

  update(patch: Partial<ViewState>): void {
    this.state = { ...this.state, ...patch };
    for (const listener of this.listeners) listener(this.state);
  }

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  toggleMode(): Mode {
    const next: Mode = this.state.mode === "cascade" ? "explore" : "cascade";
    this.update({ mode: next });
    return next;
  }

  togglePin(nodeId: string): boolean {
    const pinned = this.state.pinned.includes(nodeId)
      ? this.state.pinned.filter((id) => id !== nodeId)
      : [...this.state.pinned, nodeId];
    this.update({ pinned });
    return pinned.includes(nodeId);
  }
}
