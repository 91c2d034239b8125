// Console state and the controller that drives it. The controller contains
// every interaction the panels can trigger, so tests can run the whole
// workflow headlessly against a live service.

import {
  ApiClient,
  ApiError,
  Candidate,
  OperatorSpec,
  PatchResult,
  PendingReference,
  ReferenceAddress,
  ReferenceDetail,
  Tree,
  TreeNode,
} from "./api.js";

export interface AppState {
  sessionId: string | null;
  tree: Tree | null;
  selectedOperator: string | null;
  selectedReference: string | null;
  detail: ReferenceDetail | null;
  patch: PatchResult | null;
  error: string | null;
  busy: boolean;
}

export const initialState: AppState = {
  sessionId: null,
  tree: null,
  selectedOperator: null,
  selectedReference: null,
  detail: null,
  patch: null,
  error: null,
  busy: false,
};

type Listener = (state: AppState) => void;

export class Store {
  private state: AppState = { ...initialState };
  private listeners: Listener[] = [];

  get(): AppState {
    return this.state;
  }

  set(patch: Partial<AppState>): void {
    this.state = { ...this.state, ...patch };
    for (const listener of this.listeners) {
      listener(this.state);
    }
  }

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }
}

// pending references still show the workshop icon, decided ones the check
export function statusIcon(status: "pending" | "decided"): string {
  return status === "pending" ? "⚙🔧" : "✅";
}

export interface HighlightParts {
  before: string;
  mark: string;
  after: string;
}

export function splitHighlight(source: string, span: [number, number]): HighlightParts {
  const [start, end] = span;
  return {
    before: source.slice(0, start),
    mark: source.slice(start, end),
    after: source.slice(end),
  };
}

export function flattenReferences(tree: Tree | null): PendingReference[] {
  if (tree === null) {
    return [];
  }
  const out: PendingReference[] = [];
  const walk = (node: TreeNode): void => {
    out.push(...node.references);
    node.children.forEach(walk);
  };
  tree.roots.forEach(walk);
  return out;
}

export function referencesOf(tree: Tree | null, operatorId: string | null): PendingReference[] {
  if (tree === null) {
    return [];
  }
  if (operatorId === null) {
    return flattenReferences(tree);
  }
  let found: PendingReference[] = [];
  const walk = (node: TreeNode): void => {
    if (node.id === operatorId) {
      found = node.references;
      return;
    }
    node.children.forEach(walk);
  };
  tree.roots.forEach(walk);
  return found;
}

export interface DecisionRecord {
  reference: { owner: string; span: number[] };
  chosen: string;
}

export class SessionController {
  /** Decisions taken through this console, in order; mirrors the service log. */
  readonly decisions: DecisionRecord[] = [];

  constructor(
    private readonly api: ApiClient,
    readonly store: Store,
  ) {}

  private async guarded<T>(work: () => Promise<T>): Promise<T | undefined> {
    this.store.set({ busy: true, error: null });
    try {
      return await work();
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        await this.refreshTree(); // stale view of the session: re-sync
      }
      this.store.set({ error: err instanceof Error ? err.message : String(err) });
      return undefined;
    } finally {
      this.store.set({ busy: false });
    }
  }

  async start(dump: string, autoAcceptSingle = true): Promise<void> {
    await this.guarded(async () => {
      const created = await this.api.createSession(dump, autoAcceptSingle);
      const tree = await this.api.tree(created.id);
      this.store.set({
        sessionId: created.id,
        tree,
        selectedOperator: null,
        selectedReference: null,
        detail: null,
        patch: null,
      });
    });
  }

  async addOperators(operators: OperatorSpec[]): Promise<void> {
    const sessionId = this.require();
    await this.guarded(async () => {
      const tree = await this.api.addOperators(sessionId, operators);
      this.store.set({ tree, patch: null });
    });
  }

  async refreshTree(): Promise<void> {
    const sessionId = this.store.get().sessionId;
    if (sessionId === null) {
      return;
    }
    const tree = await this.api.tree(sessionId);
    this.store.set({ tree });
  }

  selectOperator(operatorId: string): void {
    this.store.set({ selectedOperator: operatorId, selectedReference: null, detail: null });
  }

  async selectReference(refKey: string): Promise<ReferenceDetail | undefined> {
    const sessionId = this.require();
    return await this.guarded(async () => {
      const detail = await this.api.recommendations(sessionId, refKey);
      this.store.set({ selectedReference: refKey, detail });
      return detail;
    });
  }

  async choose(candidate: Candidate): Promise<void> {
    const sessionId = this.require();
    await this.guarded(async () => {
      const reference: ReferenceAddress = {
        owner: candidate.reference.owner,
        span: [candidate.reference.span[0] ?? 0, candidate.reference.span[1] ?? 0],
      };
      const tree = await this.api.decide(sessionId, reference, candidate.kind);
      this.decisions.push({ reference: candidate.reference, chosen: candidate.kind });
      const state = this.store.get();
      let detail = state.detail;
      if (state.selectedReference !== null) {
        detail = await this.api.recommendations(sessionId, state.selectedReference);
      }
      this.store.set({ tree, detail, patch: null });
    });
  }

  async generatePatch(): Promise<PatchResult | undefined> {
    const sessionId = this.require();
    return await this.guarded(async () => {
      const patch = await this.api.patch(sessionId);
      this.store.set({ patch });
      return patch;
    });
  }

  private require(): string {
    const id = this.store.get().sessionId;
    if (id === null) {
      throw new Error("no active session");
    }
    return id;
  }
}
